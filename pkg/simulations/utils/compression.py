"""Contractive compression operators with exact wire-cost accounting.

An operator Q with ratio omega satisfies E||Q(x) - x||^2 <= (1 - omega) ||x||^2.
Messages are accounted in bits by fixed rules (see ``message_bits``) so the
cumulative-bits axis of a run is reproducible.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from simulations.exceptions import InvalidArgument, NumericFailure

logger = logging.getLogger(__name__)

IDENTITY = "identity"
TOP = "top_frac"
RAND = "rand_frac"
QSGD = "qsgd"

KIND_ALIASES = {
    "identity": IDENTITY,
    "none": IDENTITY,
    "top": TOP,
    "top_frac": TOP,
    "rand": RAND,
    "random": RAND,
    "rand_frac": RAND,
    "qsgd": QSGD,
}


@dataclass(frozen=True)
class CompressionSpec:
    kind: str = IDENTITY
    fraction: float = 1.0
    levels_bits: int = 2
    value_bits: int = 32
    index_bits: int | None = None
    # rand_frac: scale kept entries by d/m; qsgd: skip the 1/(1+tau) contraction scaling
    unbiased: bool = False

    def __post_init__(self):
        kind = KIND_ALIASES.get(str(self.kind).lower())
        if kind is None:
            raise InvalidArgument(f"unknown compressor {self.kind!r}; choose from {sorted(KIND_ALIASES)}")
        object.__setattr__(self, "kind", kind)
        if kind in (TOP, RAND) and not (0.0 < self.fraction <= 1.0):
            raise InvalidArgument(f"fraction must lie in (0, 1], got {self.fraction}")
        if kind == QSGD and self.levels_bits < 1:
            raise InvalidArgument(f"qsgd needs k >= 1, got {self.levels_bits}")
        if self.value_bits < 1:
            raise InvalidArgument(f"value_bits must be positive, got {self.value_bits}")

    @property
    def randomized(self):
        return self.kind in (RAND, QSGD)

    @property
    def needs_certificate(self):
        """Scaled operators feed stepsizes only through a measured ratio."""
        return self.unbiased and self.kind in (RAND, QSGD)

    def kept(self, d):
        """m = ceil(fraction * d), the number of entries a sparsifier transmits."""
        if self.kind not in (TOP, RAND):
            return d
        # guard against 0.1 * 300 = 30.000000000000004
        return min(d, max(1, math.ceil(self.fraction * d - 1e-9)))

    def index_width(self, d):
        if self.index_bits is not None:
            return self.index_bits
        return math.ceil(math.log2(d)) if d > 1 else 0

    def label(self):
        if self.kind == TOP:
            return f"top_{self.fraction:g}"
        if self.kind == RAND:
            return f"rand_{self.fraction:g}"
        if self.kind == QSGD:
            return f"qsgd_{self.levels_bits}"
        return IDENTITY


@dataclass(frozen=True, eq=False)
class CompressedMessage:
    dense: np.ndarray
    bits: int


@dataclass(frozen=True)
class Certification:
    mean: float
    stderr: float
    omega: float


def qsgd_tau(levels_bits, d):
    """Variance factor min(d/s^2, sqrt(d)/s) of stochastic rounding onto s = 2^(k-1) intervals."""
    s = 2 ** (levels_bits - 1)
    return min(d / s ** 2, math.sqrt(d) / s)


def omega_of(spec, d=None):
    """Contraction ratio of ``spec`` at dimension ``d``.

    Unbiased rand_frac keeping m of d entries has E||Q(x) - x||^2 = (d/m - 1) ||x||^2, so
    omega = 2 - d/m and the operator only contracts when it keeps more than half the entries.
    Unbiased qsgd has no closed form; its ratio comes from ``certify_omega``.
    """
    if spec.kind == IDENTITY:
        return 1.0
    if spec.kind in (TOP, RAND):
        share = float(spec.fraction) if d is None else spec.kept(d) / d
        if spec.kind == TOP or not spec.unbiased:
            return share
        omega = 2.0 - 1.0 / share
        if omega <= 0.0:
            raise InvalidArgument(f"unbiased {spec.label()} keeps at most half the entries and is not contractive")
        return omega
    if spec.unbiased:
        raise InvalidArgument(f"unbiased {spec.label()} has no closed-form ratio; certify it")
    if d is None:
        raise InvalidArgument("qsgd compression ratio depends on the dimension d")
    return 1.0 / (1.0 + qsgd_tau(spec.levels_bits, d))


def message_bits(spec, d):
    if spec.kind == IDENTITY:
        return d * spec.value_bits
    if spec.kind in (TOP, RAND):
        return spec.kept(d) * (spec.value_bits + spec.index_width(d))
    # norm, then sign + (k - 1)-bit level index per entry
    return spec.value_bits + d * spec.levels_bits


def bits_of(msg, spec, d):
    if spec.kind in (TOP, RAND) and np.count_nonzero(msg.dense) > spec.kept(d):
        raise InvalidArgument("message has more nonzeros than the sparsifier transmits")
    return message_bits(spec, d)


def compress(spec, x, rng=None):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise InvalidArgument("compress expects a non-empty vector")
    dense = compress_rows(spec, x[None, :], [rng])[0]
    return CompressedMessage(dense=dense, bits=message_bits(spec, x.size))


def compress_rows(spec, X, rngs=None):
    """Apply Q independently to every row of X; ``rngs[i]`` drives row i."""
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if d == 0:
        raise InvalidArgument("compress expects non-empty vectors")
    if spec.kind == IDENTITY:
        return X.copy()
    if spec.kind == TOP:
        return _top_rows(X, spec.kept(d))
    if rngs is None or any(r is None for r in rngs):
        raise InvalidArgument(f"{spec.kind} compression needs a random stream per row")
    if spec.kind == RAND:
        return _rand_rows(X, spec.kept(d), spec.unbiased, rngs)
    return _qsgd_rows(X, spec.levels_bits, spec.unbiased, rngs)


def _top_rows(X, m):
    # stable sort on -|x|: ties keep the lowest index
    order = np.argsort(-np.abs(X), axis=1, kind="stable")[:, :m]
    out = np.zeros_like(X)
    np.put_along_axis(out, order, np.take_along_axis(X, order, axis=1), axis=1)
    return out


def _rand_rows(X, m, unbiased, rngs):
    n, d = X.shape
    out = np.zeros_like(X)
    scale = d / m if unbiased else 1.0
    for i in range(n):
        idx = rngs[i].choice(d, size=m, replace=False)
        out[i, idx] = X[i, idx] * scale
    return out


def _qsgd_rows(X, levels_bits, unbiased, rngs):
    n, d = X.shape
    s = 2 ** (levels_bits - 1)
    shrink = 1.0 if unbiased else 1.0 / (1.0 + qsgd_tau(levels_bits, d))
    out = np.zeros_like(X)
    for i in range(n):
        norm = np.linalg.norm(X[i])
        if norm == 0.0:
            continue
        scaled = np.abs(X[i]) / norm * s
        low = np.floor(scaled)
        level = low + (rngs[i].random(d) < scaled - low)
        out[i] = np.sign(X[i]) * norm * level / s * shrink
    return out


def contraction_ratios(spec, d, samples, rng):
    """||Q(x) - x||^2 / ||x||^2 over Gaussian draws x."""
    ratios = np.empty(samples)
    for k in range(samples):
        x = rng.standard_normal(d)
        q = compress(spec, x, rng).dense
        ratios[k] = np.sum((q - x) ** 2) / np.sum(x ** 2)
    return ratios


def certify_omega(spec, d, samples=10_000, rng=None):
    """Monte Carlo contraction factor, floored by three standard errors."""
    rng = rng if rng is not None else np.random.default_rng(0)
    ratios = contraction_ratios(spec, d, samples, rng)
    mean = float(ratios.mean())
    stderr = float(ratios.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    omega = min(1.0, 1.0 - mean - 3.0 * stderr)
    if omega <= 0.0:
        raise NumericFailure(f"{spec.label()} at d={d} is not contractive (mean ratio {mean:.4f})")
    logger.debug("certified %s at d=%d: omega=%.4f (mean ratio %.4f)", spec.label(), d, omega, mean)
    return Certification(mean=mean, stderr=stderr, omega=omega)
