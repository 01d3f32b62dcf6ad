"""CSV emission and parsing for traces and sweep results, written atomically."""
import csv
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path


@contextmanager
def atomic_write(path):
    """Write to a temporary file beside ``path`` and move it into place on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf8") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return value


def write_rows(path, fieldnames, rows):
    """``rows`` are mappings; floats are written with repr so they parse back exactly."""
    with atomic_write(path) as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames)
        w.writeheader()
        for row in rows:
            w.writerow({k: _cell(row.get(k)) for k in fieldnames})


def read_rows(path, converters):
    """Parse a CSV written by ``write_rows``; empty cells become None."""
    out = []
    with open(path, newline="", encoding="utf8") as fh:
        for row in csv.DictReader(fh):
            out.append({
                key: (None if row[key] == "" else converters.get(key, str)(row[key]))
                for key in row
            })
    return out
