"""Objectives and gradient oracles: consensus, regularized logistic regression, centralized reference solver."""
import csv
import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import Perceptron

from simulations.exceptions import ConstructionFailure, InvalidArgument, NumericFailure
from simulations.utils import rng as streams

logger = logging.getLogger(__name__)

MAJORITY_SHARE = 0.8


@dataclass(frozen=True, eq=False)
class ConsensusObjective:
    """f_i(x) = ||x - x_i(0)||^2; the minimizer of the average is the mean of the x_i(0)."""
    X0: np.ndarray

    @property
    def n(self):
        return self.X0.shape[0]

    def value(self, i, x):
        return float(np.sum((x - self.X0[i]) ** 2))

    def full_grad(self, i, x):
        return 2.0 * (x - self.X0[i])

    def stochastic_grads(self, Z, rngs=None):
        return 2.0 * (Z - self.X0)

    def global_value(self, x):
        return float(np.mean(np.sum((x[None, :] - self.X0) ** 2, axis=1)))

    def global_grad(self, x):
        return 2.0 * (x - self.X0.mean(axis=0))

    def minimizer(self):
        return self.X0.mean(axis=0)


@dataclass(frozen=True, eq=False)
class LogRegProblem:
    """Per-agent features ``A[i]`` (m x d), labels ``b[i]`` in {-1, +1}, ridge weight ``reg``.

    f_i(x) = (1/m) sum_r log(1 + exp(-b_ir a_ir^T x)) + (reg/2) ||x||^2
    """
    A: np.ndarray
    b: np.ndarray
    reg: float
    seed: int | None = None

    def __post_init__(self):
        if self.A.ndim != 3 or self.b.shape != self.A.shape[:2]:
            raise InvalidArgument(f"features {self.A.shape} and labels {self.b.shape} disagree")
        if not np.all(np.isin(self.b, (-1, 1))):
            raise InvalidArgument("labels must be -1 or +1")
        if self.reg <= 0:
            raise InvalidArgument(f"regularization must be positive, got {self.reg}")

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.A.shape[1]

    @property
    def d(self):
        return self.A.shape[2]


def default_reg(n, m):
    return 1.0 / (2 * m * n)


def logistic_value(p, i, x):
    margins = p.b[i] * (p.A[i] @ x)
    return float(np.mean(np.logaddexp(0.0, -margins)) + 0.5 * p.reg * (x @ x))


def logistic_grad(p, i, x):
    margins = p.b[i] * (p.A[i] @ x)
    weights = -p.b[i] * expit(-margins)
    return p.A[i].T @ weights / p.m + p.reg * x


def stochastic_grad(p, i, x, rng):
    """Gradient on one uniformly drawn sample plus the full regularizer; unbiased for logistic_grad."""
    r = rng.integers(p.m)
    a, label = p.A[i, r], p.b[i, r]
    return -label * a * expit(-label * (a @ x)) + p.reg * x


def global_value(p, x):
    margins = p.b * np.einsum("imd,d->im", p.A, x)
    return float(np.mean(np.logaddexp(0.0, -margins)) + 0.5 * p.reg * (x @ x))


def global_grad(p, x):
    margins = p.b * np.einsum("imd,d->im", p.A, x)
    weights = -p.b * expit(-margins)
    return np.einsum("im,imd->d", weights, p.A) / (p.n * p.m) + p.reg * x


@dataclass(frozen=True, eq=False)
class LogisticOracle:
    """Gradient oracle over a LogRegProblem, optionally with the bounded non-convex penalty

    penalty * sum_j x_j^2 / (1 + x_j^2)

    added to every local objective.
    """
    problem: LogRegProblem
    penalty: float = 0.0

    @property
    def n(self):
        return self.problem.n

    def _penalty_value(self, x):
        return self.penalty * float(np.sum(x ** 2 / (1.0 + x ** 2))) if self.penalty else 0.0

    def _penalty_grad(self, x):
        return self.penalty * 2.0 * x / (1.0 + x ** 2) ** 2 if self.penalty else 0.0

    def value(self, i, x):
        return logistic_value(self.problem, i, x) + self._penalty_value(x)

    def full_grad(self, i, x):
        return logistic_grad(self.problem, i, x) + self._penalty_grad(x)

    def stochastic_grad(self, i, x, rng):
        return stochastic_grad(self.problem, i, x, rng) + self._penalty_grad(x)

    def stochastic_grads(self, Z, rngs):
        return np.stack([self.stochastic_grad(i, Z[i], rngs[i]) for i in range(Z.shape[0])])

    def global_value(self, x):
        return global_value(self.problem, x) + self._penalty_value(x)

    def global_grad(self, x):
        return global_grad(self.problem, x) + self._penalty_grad(x)


def _cone_point(rng, label, d, mu, theta, spread):
    axis = np.zeros(d)
    axis[0] = label
    ortho = rng.standard_normal(d)
    ortho[0] = 0.0
    norm = np.linalg.norm(ortho)
    angle = rng.uniform(0.0, theta)
    direction = axis if norm == 0.0 else math.cos(angle) * axis + math.sin(angle) * ortho / norm
    return mu * axis + rng.uniform(0.0, spread) * direction


def _agent_labels(i, m, rng):
    majority = 1 if i % 2 == 0 else -1
    count = min(m - 1, round(MAJORITY_SHARE * m)) if m >= 2 else 1
    labels = np.array([majority] * count + [-majority] * (m - count))
    return rng.permutation(labels)


def is_separable(p):
    """Certify linear separability through the origin by fitting a perceptron."""
    X = p.A.reshape(-1, p.d)
    y = p.b.reshape(-1)
    if np.unique(y).size < 2:
        return True
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        clf = Perceptron(fit_intercept=False, max_iter=100, tol=None, shuffle=False).fit(X, y)
    w = clf.coef_.ravel()
    return bool(np.all(y * (X @ w) > 0))


def gen_cone_dataset(n, m, d, seed, mu=3.0, theta=math.pi / 6, spread=2.0, reg=None, max_retries=10):
    """Two classes inside disjoint cones around +e1 and -e1, skewed 80/20 per agent by parity."""
    if min(n, m, d) < 1:
        raise InvalidArgument(f"n, m, d must be positive, got {(n, m, d)}")
    for attempt in range(max_retries):
        A = np.empty((n, m, d))
        b = np.empty((n, m), dtype=int)
        for i in range(n):
            rng = streams.stream(seed, attempt, i, streams.DATA)
            b[i] = _agent_labels(i, m, rng)
            for r in range(m):
                A[i, r] = _cone_point(rng, b[i, r], d, mu, theta, spread)
        problem = LogRegProblem(A=A, b=b, reg=default_reg(n, m) if reg is None else reg, seed=seed)
        if is_separable(problem):
            return problem
        logger.info("cone dataset seed=%d attempt %d failed separability; regenerating", seed, attempt)
    raise ConstructionFailure(f"no separable cone dataset in {max_retries} attempts")


def solve_centralized(p, tol=1e-8, max_iter=200_000, oracle=None):
    """Full-gradient descent with backtracking (Armijo) line search on the average objective."""
    if tol <= 0:
        raise InvalidArgument(f"tol must be positive, got {tol}")
    oracle = oracle if oracle is not None else LogisticOracle(p)
    x = np.zeros(p.d)
    value = oracle.global_value(x)
    step = 1.0
    for it in range(max_iter):
        grad = oracle.global_grad(x)
        gnorm2 = float(grad @ grad)
        if math.sqrt(gnorm2) <= tol:
            logger.debug("centralized solve converged in %d iterations (f*=%.10f)", it, value)
            return x, value
        step *= 2.0
        while True:
            candidate = x - step * grad
            cand_value = oracle.global_value(candidate)
            if cand_value <= value - 0.5 * step * gnorm2:
                break
            step *= 0.5
            if step < 1e-20:
                raise NumericFailure("line search collapsed; objective is not smooth at the iterate")
        x, value = candidate, cand_value
    raise NumericFailure(f"centralized solver hit the iteration cap ({max_iter}) before |grad| <= {tol}")


@dataclass(frozen=True)
class ProblemConstants:
    L: float
    mu: float
    G_hat: float
    sigma_hat: float


def estimate_constants(p, radius=1.0, points=20, seed=0, penalty=0.0):
    """Smoothness and strong convexity from the formulas; G and sigma by sampling a ball around 0.

    Sampling is exact in the data index: at every sampled point all per-sample gradients are
    evaluated, so the variance is the true variance of the one-sample oracle at that point.
    """
    L = max(np.linalg.norm(p.A[i], ord=2) ** 2 for i in range(p.n)) / (4 * p.m) + p.reg + 2.0 * penalty
    rng = streams.stream(seed, streams.INIT)
    G_hat = 0.0
    sigma2 = 0.0
    for k in range(points):
        direction = rng.standard_normal(p.d)
        x = direction / np.linalg.norm(direction) * radius * rng.uniform() if k else np.zeros(p.d)
        margins = p.b * np.einsum("imd,d->im", p.A, x)
        per_sample = (-p.b * expit(-margins))[:, :, None] * p.A + p.reg * x
        if penalty:
            per_sample = per_sample + penalty * 2.0 * x / (1.0 + x ** 2) ** 2
        G_hat = max(G_hat, float(np.linalg.norm(per_sample, axis=2).max()))
        local = per_sample.mean(axis=1, keepdims=True)
        sigma2 = max(sigma2, float(np.mean(np.sum((per_sample - local) ** 2, axis=2))))
    return ProblemConstants(L=float(L), mu=float(p.reg), G_hat=G_hat, sigma_hat=math.sqrt(sigma2))


def dump_dataset(p, path):
    with open(path, "w", newline="", encoding="utf8") as fh:
        w = csv.writer(fh)
        w.writerow(["n", p.n, "m", p.m, "d", p.d, "seed", "" if p.seed is None else p.seed, "reg", repr(p.reg)])
        w.writerow(["agent", "label"] + [f"x{j}" for j in range(p.d)])
        for i in range(p.n):
            for r in range(p.m):
                w.writerow([i, int(p.b[i, r])] + [repr(float(v)) for v in p.A[i, r]])


def load_dataset(path):
    try:
        fh = open(path, newline="", encoding="utf8")
    except OSError as exc:
        raise InvalidArgument(f"cannot read dataset {path}: {exc}") from exc
    with fh:
        r = csv.reader(fh)
        header = next(r)
        meta = dict(zip(header[0::2], header[1::2]))
        try:
            n, m, d = int(meta["n"]), int(meta["m"]), int(meta["d"])
        except (KeyError, ValueError) as exc:
            raise InvalidArgument(f"{path}: header must carry n, m, d") from exc
        next(r)
        A = np.empty((n, m, d))
        b = np.empty((n, m), dtype=int)
        filled = [0] * n
        for row in r:
            if not row:
                continue
            i = int(row[0])
            if not (0 <= i < n) or filled[i] == m or len(row) != d + 2:
                raise InvalidArgument(f"{path}: malformed sample row for agent {row[0]}")
            A[i, filled[i]] = [float(v) for v in row[2:]]
            b[i, filled[i]] = int(row[1])
            filled[i] += 1
    if filled != [m] * n:
        raise InvalidArgument(f"{path}: expected {m} samples for each of {n} agents")
    seed = int(meta["seed"]) if meta.get("seed") else None
    reg = float(meta["reg"]) if meta.get("reg") else default_reg(n, m)
    return LogRegProblem(A=A, b=b, reg=reg, seed=seed)
