"""Utilities for fingerprinting run configurations and input files."""
import hashlib
import json


def calculate_config_hash(config_dict):
    """SHA256 of the canonical JSON form of a configuration.

    Args:
        config_dict: JSON-serializable mapping (``ExperimentConfig.as_dict()``)

    Returns:
        The SHA256 hex digest string
    """
    canonical = json.dumps(config_dict, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf8")).hexdigest()


def calculate_file_hash(file_path, chunk_size=65536):
    """SHA256 of an input file (edge list, dataset) for the run manifest; None if it can't be read."""
    digest = hashlib.sha256()
    try:
        with open(file_path, "rb") as fh:
            while chunk := fh.read(chunk_size):
                digest.update(chunk)
    except OSError:
        return None
    return digest.hexdigest()
