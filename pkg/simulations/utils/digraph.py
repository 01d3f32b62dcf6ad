"""Directed communication graphs, column-stochastic mixing matrices and their spectral constants."""
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import networkx as nx
import numpy as np

from simulations.exceptions import ConstructionFailure, InvalidArgument, NumericFailure

logger = logging.getLogger(__name__)

COLUMN_SUM_TOL = 1e-12
PERRON_TOL = 1e-12
# norms below this fraction of ||I - phi 1^T|| are treated as numerically zero when fitting delta
FIT_FLOOR = 1e-13


@dataclass(frozen=True)
class DirectedGraph:
    """Node count plus directed edges (i, j) meaning i sends to j.

    Self-loops are implicit: every node belongs to its own in- and out-neighborhood.
    """
    n: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n < 1:
            raise InvalidArgument(f"graph needs at least one node, got n={self.n}")
        clean = set()
        for i, j in self.edges:
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise InvalidArgument(f"edge ({i}, {j}) has a node outside [0, {self.n})")
            if i != j:
                clean.add((int(i), int(j)))
        object.__setattr__(self, "edges", frozenset(clean))

    def out_neighbors(self, i):
        return {i} | {j for (src, j) in self.edges if src == i}

    def in_neighbors(self, i):
        return {i} | {src for (src, j) in self.edges if j == i}

    def out_degrees(self):
        """|N_i^+| for every node, self included."""
        deg = np.ones(self.n, dtype=int)
        for i, _ in self.edges:
            deg[i] += 1
        return deg

    @property
    def edge_count(self):
        """Number of directed non-self edges, i.e. messages sent per round."""
        return len(self.edges)

    def to_networkx(self):
        g = nx.DiGraph()
        g.add_nodes_from(range(self.n))
        g.add_edges_from(self.edges)
        return g


@dataclass(frozen=True, eq=False)
class MixingMatrix:
    entries: np.ndarray
    beta: float

    @property
    def n(self):
        return self.entries.shape[0]

    @cached_property
    def shifted(self):
        """W - I, the operator applied to the shared replicas every round."""
        return self.entries - np.eye(self.n)


@dataclass(frozen=True, eq=False)
class SpectralProfile:
    phi: np.ndarray
    delta: float
    bigC: float
    kappa: float
    horizon: int

    def as_dict(self):
        return {
            "phi": [float(v) for v in self.phi],
            "delta": float(self.delta),
            "bigC": float(self.bigC),
            "kappa": float(self.kappa),
            "horizon": int(self.horizon),
        }


def build_ring(n):
    if n < 1:
        raise InvalidArgument(f"ring needs n >= 1, got {n}")
    return DirectedGraph(n, frozenset((i, (i + 1) % n) for i in range(n)))


def build_erdos_renyi(n, p, seed, max_retries=1000):
    """Draw directed G(n, p) realizations until one is strongly connected."""
    if n < 1:
        raise InvalidArgument(f"graph needs n >= 1, got {n}")
    if not (0.0 <= p <= 1.0):
        raise InvalidArgument(f"edge probability must lie in [0, 1], got {p}")
    for attempt in range(max_retries):
        realization = nx.gnp_random_graph(n, p, seed=seed + attempt, directed=True)
        g = DirectedGraph(n, frozenset(realization.edges()))
        if is_strongly_connected(g):
            if attempt:
                logger.debug("Erdos-Renyi n=%d p=%.4f strongly connected after %d re-draws", n, p, attempt)
            return g
    raise ConstructionFailure(
        f"no strongly connected G({n}, {p}) realization in {max_retries} draws; p is too small for n"
    )


def is_strongly_connected(g):
    return nx.is_strongly_connected(g.to_networkx())


def out_degree_mixing(g):
    """W_ij = 1/|N_j^+| for every edge (j, i) and on the diagonal."""
    if not is_strongly_connected(g):
        raise InvalidArgument("mixing matrix requires a strongly connected graph")
    deg = g.out_degrees()
    W = np.diag(1.0 / deg)
    for j, i in g.edges:
        W[i, j] = 1.0 / deg[j]
    return _mixing(W)


def lazy_matrix(W, gamma):
    """B = (1 - gamma) I + gamma W."""
    if not (0.0 < gamma <= 1.0):
        raise InvalidArgument(f"gamma must lie in (0, 1], got {gamma}")
    B = (1.0 - gamma) * np.eye(W.n) + gamma * W.entries
    return _mixing(B)


def validate_column_stochastic(entries):
    entries = np.asarray(entries, dtype=float)
    if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
        raise InvalidArgument(f"mixing matrix must be square, got shape {entries.shape}")
    if entries.min() < 0.0 or entries.max() > 1.0:
        raise InvalidArgument("mixing matrix entries must lie in [0, 1]")
    deviation = np.abs(entries.sum(axis=0) - 1.0).max()
    if deviation > COLUMN_SUM_TOL:
        raise InvalidArgument(f"mixing matrix is not column stochastic (max deviation {deviation:.3e})")
    return entries


def _mixing(entries):
    entries = validate_column_stochastic(entries)
    beta = float(np.linalg.norm(entries - np.eye(entries.shape[0]), ord=2))
    return MixingMatrix(entries, beta)


def perron_vector(W, max_iter):
    """Power iteration from the uniform vector; returns phi with W phi = phi, sum(phi) = 1."""
    n = W.n
    phi = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = W.entries @ phi
        nxt /= nxt.sum()
        if np.linalg.norm(nxt - phi) <= PERRON_TOL:
            return nxt
        phi = nxt
    raise NumericFailure(
        f"power iteration did not converge in {max_iter} iterations (periodic or reducible W)"
    )


def default_horizon(n):
    return max(2 * n, 200)


def spectral_profile(W, horizon=None):
    """Estimate (phi, delta, C, kappa) of ||W^t - phi 1^T|| <= C (1 - delta)^t on a finite horizon."""
    n = W.n
    horizon = default_horizon(n) if not horizon else horizon
    if horizon < 2 * n:
        raise InvalidArgument(f"horizon must be at least 2n = {2 * n}, got {horizon}")
    phi = perron_vector(W, 10 * horizon)
    limit = np.outer(phi, np.ones(n))

    power = np.eye(n)
    errors = np.empty(horizon + 1)
    kappa = 1.0
    for t in range(horizon + 1):
        if t:
            power = W.entries @ power
        errors[t] = np.linalg.norm(power - limit, ord=2)
        kappa = min(kappa, float(power.sum(axis=1).min()))

    delta = _fit_decay(errors)
    ts = np.arange(horizon + 1)
    if delta >= 1.0:
        # W^t = phi 1^T from t=1 on; only t=0 constrains C
        bigC = errors[0]
    else:
        visible = errors > max(errors[0], 1.0) * FIT_FLOOR
        visible[0] = True
        bigC = float(np.max(errors[visible] / (1.0 - delta) ** ts[visible]))
    bigC = max(float(bigC), 1.0)

    profile = SpectralProfile(phi=phi, delta=delta, bigC=bigC, kappa=kappa, horizon=horizon)
    _assert_profile(W, profile, errors)
    logger.debug("spectral profile n=%d: delta=%.4e C=%.4f kappa=%.4e", n, delta, bigC, kappa)
    return profile


def _fit_decay(errors):
    """delta from the least-squares slope of log ||W^t - phi 1^T|| over the tail half."""
    floor = max(errors[0], 1.0) * FIT_FLOOR
    horizon = len(errors) - 1
    ts = np.arange(horizon + 1)
    tail = (ts >= horizon // 2) & (errors > floor)
    if tail.sum() < 2:
        tail = (ts >= 1) & (errors > floor)
    if tail.sum() < 2:
        return 1.0
    slope = np.polyfit(ts[tail], np.log(errors[tail]), 1)[0]
    rate = math.exp(min(slope, 0.0))
    return float(min(max(1.0 - rate, np.finfo(float).tiny), 1.0))


def _assert_profile(W, profile, errors):
    phi = profile.phi
    if np.linalg.norm(W.entries @ phi - phi) > 1e-10 or abs(phi.sum() - 1.0) > 1e-10 or phi.min() <= 0:
        raise NumericFailure("Perron vector estimate violates W phi = phi, sum 1, phi > 0")
    if profile.kappa <= 0:
        raise NumericFailure("kappa must be positive; W is not primitive")
    ts = np.arange(len(errors))
    if profile.delta >= 1.0:
        bound = np.where(ts == 0, profile.bigC, 0.0)
    else:
        bound = profile.bigC * (1.0 - profile.delta) ** ts
    if np.any(errors > bound + 1e-12):
        raise NumericFailure("fitted (delta, C) do not bound ||W^t - phi 1^T|| on the horizon")


def ring_gap_scaling(ns):
    """Fitted delta * n^2 per ring size; roughly constant because the ring gap is Theta(n^-2)."""
    out = {}
    for n in ns:
        profile = spectral_profile(out_degree_mixing(build_ring(n)))
        out[n] = profile.delta * n * n
    return out


def dump_edge_list(g, path):
    with open(path, "w", encoding="utf8") as fh:
        fh.write(f"n={g.n}\n")
        for i, j in sorted(g.edges):
            fh.write(f"{i} {j}\n")


def load_edge_list(path):
    try:
        with open(path, "r", encoding="utf8") as fh:
            lines = [line.strip() for line in fh if line.strip() and not line.startswith("#")]
    except OSError as exc:
        raise InvalidArgument(f"cannot read edge list {path}: {exc}") from exc
    if not lines or not lines[0].startswith("n="):
        raise InvalidArgument(f"{path}: first line must be 'n=<count>'")
    try:
        n = int(lines[0][2:])
        edges = [tuple(int(v) for v in line.split()) for line in lines[1:]]
    except ValueError as exc:
        raise InvalidArgument(f"{path}: malformed edge list") from exc
    if any(len(e) != 2 for e in edges):
        raise InvalidArgument(f"{path}: every edge line must be 'i j'")
    return DirectedGraph(n, frozenset(edges))
