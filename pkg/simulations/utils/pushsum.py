"""Compressed push-sum with a consensus stepsize.

Each round every agent i compresses the difference between its parameters and the
replica x_hat_i its out-neighbors keep, broadcasts that message together with its
push-sum weight y_i, and then mixes the updated replicas through the damped
operator gamma (W - I). The de-biased iterate z_i = x_i / y_i (u_i / y_i in the
optimization mode) converges to the network average.

Option I (average consensus)::

    Xhat(t+1) = Xhat(t) + Q(X(t) - Xhat(t))
    X(t+1)    = X(t) + gamma (W - I) Xhat(t+1)
    y(t+1)    = W y(t)
    z_i(t+1)  = x_i(t+1) / y_i(t+1)

Option II (stochastic optimization) computes U(t+1) the same way as X(t+1) above,
sets z_i = u_i / y_i and then takes a local stochastic gradient step at z_i.
"""
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse

from simulations.exceptions import InvalidArgument, NumericFailure
from simulations.utils import rng as streams
from simulations.utils.compression import compress_rows, message_bits

logger = logging.getLogger(__name__)

THEOREM1 = "theorem1"
LEMMA1 = "lemma1"
MANUAL = "manual"

RUNNING = "running"
CONVERGED = "converged"
BUDGET_EXHAUSTED = "budget_exhausted"
DIVERGED = "diverged"


@dataclass(frozen=True, eq=False)
class NetworkState:
    X: np.ndarray
    Xhat: np.ndarray
    y: np.ndarray
    U: np.ndarray
    Z: np.ndarray
    t: int = 0
    xbar0: np.ndarray = None
    # messages Q(X - Xhat) broadcast in the round that produced this state
    q: np.ndarray = None

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    def mean_iterate(self):
        return self.X.mean(axis=0)


@dataclass(frozen=True)
class RoundTrace:
    t: int
    psi_z: float
    psi_x: float
    bits_sent: int
    objective: float | None = None
    objective_agent0: float | None = None


@dataclass(frozen=True)
class StepsizePlan:
    gamma: float
    eta: float = 0.0
    rho: float | None = None
    source: str = MANUAL

    def __post_init__(self):
        if not (0.0 < self.gamma <= 1.0):
            raise InvalidArgument(f"consensus stepsize gamma must lie in (0, 1], got {self.gamma}")
        if self.eta < 0.0:
            raise InvalidArgument(f"learning rate eta must be nonnegative, got {self.eta}")


def init_state(X0):
    X0 = np.array(X0, dtype=float)
    if X0.ndim != 2 or X0.shape[0] < 1 or X0.shape[1] < 1:
        raise InvalidArgument(f"initial parameters must be an n x d matrix, got shape {X0.shape}")
    n, _ = X0.shape
    return NetworkState(
        X=X0,
        Xhat=np.zeros_like(X0),
        y=np.ones(n),
        U=X0.copy(),
        Z=X0.copy(),
        t=0,
        xbar0=X0.mean(axis=0),
    )


def psi_z(state, xbar0):
    """||Z(t) - 1 xbar0^T||_F."""
    return float(np.linalg.norm(state.Z - np.asarray(xbar0)[None, :]))


def _psi_x(Z_next, X_prev):
    return float(np.sum((Z_next - X_prev.mean(axis=0)[None, :]) ** 2))


def _mixing_operator(W):
    """Sparse W - I; ring and Erdos-Renyi matrices are mostly zeros."""
    return sparse.csr_matrix(W.shifted)


def _round_streams(seed, state, purpose):
    if seed is None:
        raise InvalidArgument("randomized rounds need a master seed (rng)")
    return streams.round_streams(seed, state.t, state.n, purpose)


def _compression_step(state, Q, seed):
    rngs = _round_streams(seed, state, streams.COMPRESSION) if Q.randomized else None
    q = compress_rows(Q, state.X - state.Xhat, rngs)
    return q, state.Xhat + q


def _push_weights(W, y):
    y_next = W.entries @ y
    if np.any(y_next <= 0.0):
        raise NumericFailure(f"push-sum weight became non-positive (min {y_next.min():.3e}); W is broken")
    return y_next


def edge_count(W):
    """Directed non-self edges of the graph behind W."""
    off = W.entries.copy()
    np.fill_diagonal(off, 0.0)
    return int(np.count_nonzero(off))


def round_bits(W, Q, d):
    """Wire cost of one round: every edge carries one compressed message and one y scalar."""
    return edge_count(W) * (message_bits(Q, d) + Q.value_bits)


def consensus_round(state, W, gamma, Q, rng=None, operator=None, bits=None):
    """One synchronous Option I round; ``rng`` is the master seed for the per-agent streams."""
    if not (0.0 < gamma <= 1.0):
        raise InvalidArgument(f"gamma must lie in (0, 1], got {gamma}")
    operator = _mixing_operator(W) if operator is None else operator
    q, Xhat = _compression_step(state, Q, rng)
    X = state.X + gamma * (operator @ Xhat)
    y = _push_weights(W, state.y)
    Z = X / y[:, None]
    nxt = replace(state, X=X, Xhat=Xhat, y=y, U=X, Z=Z, t=state.t + 1, q=q)
    trace = RoundTrace(
        t=nxt.t,
        psi_z=psi_z(nxt, state.xbar0),
        psi_x=_psi_x(Z, state.X),
        bits_sent=round_bits(W, Q, state.d) if bits is None else bits,
    )
    return nxt, trace


def sgd_round(state, W, gamma, Q, eta, oracle, rng=None, operator=None, bits=None, objective=True):
    """One synchronous Option II round: mix, de-bias, then a local stochastic gradient step at z_i."""
    if not (0.0 < gamma <= 1.0):
        raise InvalidArgument(f"gamma must lie in (0, 1], got {gamma}")
    if eta < 0.0:
        raise InvalidArgument(f"eta must be nonnegative, got {eta}")
    operator = _mixing_operator(W) if operator is None else operator
    q, Xhat = _compression_step(state, Q, rng)
    U = state.X + gamma * (operator @ Xhat)
    y = _push_weights(W, state.y)
    Z = U / y[:, None]
    if eta > 0.0:
        rngs = _round_streams(rng, state, streams.GRADIENT)
        X = U - eta * oracle.stochastic_grads(Z, rngs)
    else:
        X = U
    nxt = replace(state, X=X, Xhat=Xhat, y=y, U=U, Z=Z, t=state.t + 1, q=q)
    trace = RoundTrace(
        t=nxt.t,
        psi_z=psi_z(nxt, state.xbar0),
        psi_x=_psi_x(Z, state.X),
        bits_sent=round_bits(W, Q, state.d) if bits is None else bits,
        objective=oracle.global_value(X.mean(axis=0)) if objective else None,
        objective_agent0=oracle.global_value(Z[0]) if objective else None,
    )
    return nxt, trace


def stepsize_theorem1(profile, beta, omega):
    """gamma = 2 w d / (8 b d + 4 b^2 C + 4 w d^2), rho = 1 - w^2 d^2 / (16 b d + 8 b^2 C + 8 w d^2)."""
    _check_omega(omega)
    delta, C = profile.delta, profile.bigC
    gamma = 2 * omega * delta / (8 * beta * delta + 4 * beta ** 2 * C + 4 * omega * delta ** 2)
    rho = 1 - omega ** 2 * delta ** 2 / (16 * beta * delta + 8 * beta ** 2 * C + 8 * omega * delta ** 2)
    return StepsizePlan(gamma=min(gamma, 1.0), eta=0.0, rho=rho, source=THEOREM1)


def stepsize_lemma1(profile, beta, omega):
    """gamma = w d / (12 b (b + 1) (C + 1))."""
    _check_omega(omega)
    if beta == 0.0:
        # single agent: W = [1], mixing terms vanish and any gamma works
        return StepsizePlan(gamma=1.0, source=LEMMA1)
    gamma = omega * profile.delta / (12 * beta * (beta + 1) * (profile.bigC + 1))
    return StepsizePlan(gamma=min(gamma, 1.0), eta=0.0, source=LEMMA1)


def _check_omega(omega):
    if not (0.0 < omega <= 1.0):
        raise InvalidArgument(f"compression ratio must lie in (0, 1], got {omega}")


@dataclass
class Simulator:
    """Drives rounds over one (W, gamma, Q) configuration and tracks cumulative bits and status.

    With ``replicas=True`` every receiver keeps its own copy of each in-neighbor's x_hat
    and the copies are checked against the shared replica every round.
    """
    W: object
    gamma: float
    Q: object
    seed: int = 0
    eta: float = 0.0
    oracle: object = None
    replicas: bool = False
    divergence_threshold: float = 1e12
    objective: bool = True
    bits_cum: int = 0
    status: str = RUNNING
    _edge_replicas: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._operator = _mixing_operator(self.W)
        self._edges = [(j, i) for i, j in zip(*np.nonzero(self.W.entries)) if i != j]

    def start(self, X0):
        state = init_state(X0)
        self._bits = round_bits(self.W, self.Q, state.d)
        self.bits_cum = 0
        self.status = RUNNING
        if self.replicas:
            self._edge_replicas = {edge: np.zeros(state.d) for edge in self._edges}
        return state

    @property
    def optimizing(self):
        return self.oracle is not None

    def step(self, state):
        if self.optimizing:
            nxt, trace = sgd_round(
                state, self.W, self.gamma, self.Q, self.eta, self.oracle,
                rng=self.seed, operator=self._operator, bits=self._bits, objective=self.objective,
            )
        else:
            nxt, trace = consensus_round(
                state, self.W, self.gamma, self.Q, rng=self.seed, operator=self._operator, bits=self._bits,
            )
        if self.replicas:
            self._check_replicas(nxt)
        self.bits_cum += trace.bits_sent
        if self._diverged(nxt, trace):
            self.status = DIVERGED
            logger.warning("run diverged at round %d (gamma=%.4g, %s)", nxt.t, self.gamma, self.Q.label())
        return nxt, trace

    def _diverged(self, state, trace):
        limit = self.divergence_threshold
        if not math.isfinite(trace.psi_z) or trace.psi_z > limit:
            return True
        return not np.all(np.isfinite(state.X)) or np.abs(state.X).max() > limit

    def _check_replicas(self, nxt):
        for (sender, receiver), copy in self._edge_replicas.items():
            copy += nxt.q[sender]
            if not np.array_equal(copy, nxt.Xhat[sender]):
                raise NumericFailure(
                    f"replica of agent {sender} held by agent {receiver} diverged from the broadcast copy"
                )
