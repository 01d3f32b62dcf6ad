"""Experiment orchestration: stepsize policies, runners, sweeps, baselines and CSV/manifest output."""
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from simulations.exceptions import InvalidArgument, PushSimError
from simulations.utils import rng as streams
from simulations.utils.compression import IDENTITY, QSGD, RAND, TOP, certify_omega, message_bits, omega_of
from simulations.utils.config import CONSENSUS, ExperimentConfig
from simulations.utils.csv_utils import atomic_write, read_rows, write_rows
from simulations.utils.digraph import (
    build_erdos_renyi, build_ring, load_edge_list, out_degree_mixing, spectral_profile,
)
from simulations.utils.hash_utils import calculate_config_hash, calculate_file_hash
from simulations.utils.problems import (
    ConsensusObjective, LogisticOracle, ProblemConstants, estimate_constants, gen_cone_dataset, load_dataset,
    solve_centralized,
)
from simulations.utils.pushsum import (
    BUDGET_EXHAUSTED, CONVERGED, DIVERGED, MANUAL, RUNNING, Simulator, StepsizePlan,
    edge_count, psi_z, stepsize_lemma1, stepsize_theorem1,
)

logger = logging.getLogger(__name__)

TRACE_FIELDS = ["t", "psi_z", "psi_x", "bits_cum", "objective", "objective_agent0", "status"]
SWEEP_FIELDS = ["n", "omega", "gamma_policy", "rounds_to_eps", "status"]
BASELINE_QSGD_LEVELS = (2, 3, 4)
MILESTONE_ROUNDS = 10_000


@dataclass(frozen=True)
class TraceRow:
    t: int
    psi_z: float
    psi_x: float
    bits_cum: int
    objective: float | None = None
    objective_agent0: float | None = None
    status: str = RUNNING


@dataclass(frozen=True)
class SweepRow:
    n: int
    omega: float
    gamma_policy: str
    rounds_to_eps: int | None
    status: str


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)

    def series(self, gamma_policy):
        """{n: [(omega, rounds_to_eps, status), ...]} for one policy, omegas ascending."""
        out = {}
        for row in sorted(self.rows, key=lambda r: (r.n, r.omega)):
            if row.gamma_policy == gamma_policy:
                out.setdefault(row.n, []).append((row.omega, row.rounds_to_eps, row.status))
        return out


@dataclass
class RunResult:
    rows: list
    status: str
    rounds_to_eps: int | None
    bits_cum: int
    seed: int
    mean_iterates: np.ndarray | None = None
    final_state: object = None


# ---------------------------------------------------------------------------
# learning-rate schedules

def eta_convex(n, L, T):
    return math.sqrt(n) / (4 * L * math.sqrt(T))


def eta_strongly_convex(mu, T):
    return 2 * math.log(T) / (mu * T)


def eta_nonconvex(n, L, T):
    return math.sqrt(n) / (L * math.sqrt(T))


def averaging_p(T):
    """p = 1 - log(T)/T for the weighted average iterate."""
    return 1.0 - math.log(T) / T


def average_weights(T, p):
    if not (0.0 < p < 1.0):
        raise InvalidArgument(f"averaging parameter p must lie in (0, 1), got {p}")
    weights = p ** np.arange(T) / math.fsum(p ** np.arange(T))
    if T > 1:
        # the oldest weight absorbs rounding so the weights sum to exactly 1
        weights[-1] = 1.0 - math.fsum(weights[:-1])
    return weights


def weighted_average_iterate(iterates, p):
    """sum_t p^t xbar(T-t-1) / sum_t p^t over the T given mean iterates xbar(0..T-1)."""
    iterates = np.asarray(iterates, dtype=float)
    T = iterates.shape[0]
    if T == 0:
        raise InvalidArgument("need at least one iterate")
    weights = average_weights(T, p)
    return np.tensordot(weights, iterates[::-1], axes=1)


def uniform_average_iterate(iterates):
    return np.asarray(iterates, dtype=float).mean(axis=0)


def rounds_to_epsilon(trace, eps):
    """First t with psi_z(t)/psi_z(0) <= eps; BUDGET_EXHAUSTED when the trace never gets there."""
    if eps <= 0:
        raise InvalidArgument(f"eps must be positive, got {eps}")
    trace = list(trace)
    if not trace:
        raise InvalidArgument("empty trace")
    psi0 = trace[0].psi_z
    if psi0 == 0.0:
        return trace[0].t
    for row in trace:
        if math.isfinite(row.psi_z) and row.psi_z / psi0 <= eps:
            return row.t
    return BUDGET_EXHAUSTED


# ---------------------------------------------------------------------------
# preparation

def build_graph(topology):
    if topology.kind == "ring":
        return build_ring(topology.n)
    if topology.kind == "erdos":
        return build_erdos_renyi(topology.n, topology.edge_probability(), topology.seed)
    return load_edge_list(topology.path)


def initial_parameters(n, d, seed):
    return streams.stream(seed, streams.INIT).standard_normal((n, d))


def parse_gamma_policy(policy):
    """'omega' | 'theorem1' | 'lemma1' | a number (manual gamma) -> (policy, gamma, label)."""
    if isinstance(policy, (int, float)):
        return "manual", float(policy), f"gamma={float(policy):g}"
    text = str(policy).strip()
    if text in ("omega", "theorem1", "lemma1"):
        return text, None, text
    value = text.split("=", 1)[-1].split(":", 1)[-1]
    try:
        gamma = float(value)
    except ValueError as exc:
        raise InvalidArgument(f"unknown gamma policy {policy!r}") from exc
    return "manual", gamma, f"gamma={gamma:g}"


@dataclass
class PreparedExperiment:
    """Everything a run needs that does not depend on the algorithm seed."""
    config: ExperimentConfig
    graph: object
    W: object
    omega: float
    plan: StepsizePlan
    profile: object = None
    oracle: object = None
    f_star: float = 0.0
    constants: ProblemConstants | None = None
    inputs: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.graph.n

    @property
    def d(self):
        return problem_dim(self.config, self.oracle)

    def simulator(self, seed, gamma=None, Q=None):
        cfg = self.config
        return Simulator(
            W=self.W,
            gamma=self.plan.gamma if gamma is None else gamma,
            Q=cfg.compression if Q is None else Q,
            seed=seed,
            eta=self.plan.eta,
            oracle=None if cfg.mode == CONSENSUS else self.oracle,
            replicas=cfg.replicas,
            divergence_threshold=cfg.divergence_threshold,
        )

    def run(self, seed, stop_at_eps=True, record_every=None):
        record_every = self.config.record_every if record_every is None else record_every
        if self.config.mode == CONSENSUS:
            X0 = initial_parameters(self.n, self.d, seed)
            return run_consensus(self.simulator(seed), X0, self.config.rounds, self.config.epsilon,
                                 stop_at_eps=stop_at_eps, record_every=record_every)
        return run_sgd(self.simulator(seed), self.d, self.config.rounds, f_star=self.f_star,
                       record_every=record_every)

    def derive(self, config):
        """Same graph and objective, different compression / stepsize configuration."""
        omega = resolve_omega(config, self.d)
        plan, profile = plan_stepsizes(config, self.W, omega, self.n, self.constants, self.profile)
        return replace(self, config=config, omega=omega, plan=plan, profile=profile)

    def manifest(self, seeds=None):
        cfg = self.config.as_dict()
        return {
            "config": cfg,
            "config_hash": calculate_config_hash(cfg),
            "seeds": list(self.config.seeds if seeds is None else seeds),
            "spectral_profile": None if self.profile is None else self.profile.as_dict(),
            "beta": self.W.beta,
            "omega": self.omega,
            "gamma": self.plan.gamma,
            "eta": self.plan.eta,
            "rho": self.plan.rho,
            "stepsize_source": self.plan.source,
            "f_star": self.f_star,
            "edges": edge_count(self.W),
            "message_bits": message_bits(self.config.compression, self.d),
            "inputs": self.inputs,
        }


def problem_dim(config, oracle):
    if oracle is None:
        return config.objective.d
    if isinstance(oracle, LogisticOracle):
        return oracle.problem.d
    return oracle.X0.shape[1]


def resolve_omega(config, d):
    """Nominal ratio, or the Monte Carlo certificate when asked for or when the operator is scaled."""
    spec = config.compression
    if not (config.certify or spec.needs_certificate):
        return omega_of(spec, d)
    # unbiased rand_frac: reject non-contractive fractions before sampling
    bound = omega_of(spec, d) if spec.kind == RAND else 1.0
    rng = streams.stream(config.seeds[0], streams.INIT, 1)
    return min(bound, certify_omega(spec, d, rng=rng).omega)


def plan_stepsizes(config, W, omega, n, constants=None, profile=None):
    """Resolve the gamma and eta policies into a StepsizePlan (and the profile used, if any)."""
    policy = config.gamma_policy
    if policy in ("theorem1", "lemma1") and profile is None:
        profile = spectral_profile(W, config.horizon or None)
    if policy == "theorem1":
        plan = stepsize_theorem1(profile, W.beta, omega)
    elif policy == "lemma1":
        plan = stepsize_lemma1(profile, W.beta, omega)
    elif policy == "omega":
        plan = StepsizePlan(gamma=omega, source=MANUAL)
    else:
        plan = StepsizePlan(gamma=config.gamma, source=MANUAL)
    return replace(plan, eta=_eta(config, n, constants)), profile


def _eta(config, n, constants):
    T = config.rounds
    if config.eta_policy == "manual":
        return config.eta
    if constants is None:
        raise InvalidArgument(f"eta policy {config.eta_policy!r} needs problem constants (sgd mode)")
    if config.eta_policy == "convex":
        return eta_convex(n, constants.L, T)
    if config.eta_policy == "nonconvex":
        return eta_nonconvex(n, constants.L, T)
    if T < 2:
        raise InvalidArgument("strongly convex schedule needs T >= 2")
    return eta_strongly_convex(constants.mu, T)


def build_oracle(config, n):
    """Objective for sgd mode plus its constants and the reference optimum value."""
    obj = config.objective
    data_seed = obj.dataset_seed if obj.dataset_seed is not None else config.seeds[0]
    inputs = {}
    if obj.kind == "consensus":
        oracle = ConsensusObjective(initial_parameters(n, obj.d, data_seed))
        constants = ProblemConstants(L=2.0, mu=2.0, G_hat=math.inf, sigma_hat=0.0)
        return oracle, constants, oracle.global_value(oracle.minimizer()), inputs
    if obj.dataset_path:
        problem = load_dataset(obj.dataset_path)
        inputs["dataset_sha256"] = calculate_file_hash(obj.dataset_path)
        if problem.n != n:
            raise InvalidArgument(f"dataset has {problem.n} agents but the graph has {n}")
    else:
        problem = gen_cone_dataset(n, obj.m, obj.d, data_seed, reg=obj.reg)
    penalty = obj.penalty if obj.kind == "logreg_nonconvex" else 0.0
    oracle = LogisticOracle(problem, penalty=penalty)
    constants = estimate_constants(problem, penalty=penalty)
    _, f_star = solve_centralized(problem, oracle=oracle)
    return oracle, constants, f_star, inputs


def prepare(config):
    graph = build_graph(config.topology)
    W = out_degree_mixing(graph)
    inputs = {}
    if config.topology.kind == "file":
        inputs["graph_sha256"] = calculate_file_hash(config.topology.path)
    oracle, constants, f_star = None, None, 0.0
    if config.mode != CONSENSUS:
        oracle, constants, f_star, data_inputs = build_oracle(config, graph.n)
        inputs.update(data_inputs)
    omega = resolve_omega(config, problem_dim(config, oracle))
    plan, profile = plan_stepsizes(config, W, omega, graph.n, constants)
    logger.info(
        "prepared %s run: n=%d edges=%d %s omega=%.4g gamma=%.4g eta=%.4g",
        config.mode, graph.n, graph.edge_count, config.compression.label(), omega, plan.gamma, plan.eta,
    )
    return PreparedExperiment(
        config=config, graph=graph, W=W, omega=omega, plan=plan, profile=profile,
        oracle=oracle, f_star=f_star, constants=constants, inputs=inputs,
    )


# ---------------------------------------------------------------------------
# runners

def run_consensus(sim, X0, rounds, eps, stop_at_eps=True, record_every=1):
    state = sim.start(X0)
    psi0 = psi_z(state, state.xbar0)
    rows = [TraceRow(t=0, psi_z=psi0, psi_x=0.0, bits_cum=0)]
    hit = 0 if psi0 <= 0.0 else None
    last = rows[0]
    while state.t < rounds and not (hit is not None and stop_at_eps):
        state, trace = sim.step(state)
        if hit is None and trace.psi_z / psi0 <= eps:
            hit = trace.t
            logger.debug("reached eps=%g at round %d", eps, hit)
        if trace.t % MILESTONE_ROUNDS == 0:
            logger.debug("round %d: psi_z=%.3e", trace.t, trace.psi_z)
        last = TraceRow(t=trace.t, psi_z=trace.psi_z, psi_x=trace.psi_x, bits_cum=sim.bits_cum)
        if sim.status == DIVERGED:
            break
        if trace.t % record_every == 0:
            rows.append(last)
    if sim.status == DIVERGED:
        status, hit = DIVERGED, None
    else:
        status = CONVERGED if hit is not None else BUDGET_EXHAUSTED
    if rows[-1].t != last.t:
        rows.append(last)
    rows[-1] = replace(rows[-1], status=status)
    return RunResult(rows=rows, status=status, rounds_to_eps=hit, bits_cum=sim.bits_cum,
                     seed=sim.seed, final_state=state)


def run_sgd(sim, d, rounds, f_star=0.0, record_every=1):
    """Option II from X(0) = 0; records suboptimality f(xbar) - f* and f(z_0) - f*."""
    oracle = sim.oracle
    state = sim.start(np.zeros((oracle.n, d)))
    f0 = oracle.global_value(np.zeros(d)) - f_star
    rows = [TraceRow(t=0, psi_z=0.0, psi_x=0.0, bits_cum=0, objective=f0, objective_agent0=f0)]
    means = [state.mean_iterate()]
    last = rows[0]
    while state.t < rounds:
        sim.objective = (state.t + 1) % record_every == 0 or state.t + 1 == rounds
        state, trace = sim.step(state)
        means.append(state.mean_iterate())
        if trace.t % MILESTONE_ROUNDS == 0:
            logger.debug("round %d: psi_x=%.3e", trace.t, trace.psi_x)
        last = TraceRow(
            t=trace.t, psi_z=trace.psi_z, psi_x=trace.psi_x, bits_cum=sim.bits_cum,
            objective=None if trace.objective is None else trace.objective - f_star,
            objective_agent0=None if trace.objective_agent0 is None else trace.objective_agent0 - f_star,
        )
        if sim.status == DIVERGED:
            break
        if trace.t % record_every == 0:
            rows.append(last)
    # an sgd run has no accuracy target; finishing the round budget is its normal end
    status = DIVERGED if sim.status == DIVERGED else BUDGET_EXHAUSTED
    if rows[-1].t != last.t:
        rows.append(last)
    rows[-1] = replace(rows[-1], status=status)
    return RunResult(rows=rows, status=status, rounds_to_eps=None, bits_cum=sim.bits_cum,
                     seed=sim.seed, mean_iterates=np.array(means), final_state=state)


def centralized_sgd(oracle, x0, eta, T, seed):
    """Single-agent SGD drawing from the same per-round gradient streams as agent 0 of a network run."""
    x = np.array(x0, dtype=float)
    iterates = [x.copy()]
    for t in range(T):
        rng = streams.agent_stream(seed, t, 0, streams.GRADIENT)
        x = x - eta * oracle.stochastic_grads(x[None, :], [rng])[0]
        iterates.append(x.copy())
    return np.array(iterates)


def exact_pushsum(W, X0, T):
    """Closed-form uncompressed push-sum: X(t) = W^t X(0), z(t) = X(t) / (W^t 1)."""
    X = np.array(X0, dtype=float)
    y = np.ones(X.shape[0])
    out = [(X.copy(), X / y[:, None])]
    for _ in range(T):
        X = W.entries @ X
        y = W.entries @ y
        out.append((X.copy(), X / y[:, None]))
    return out


# ---------------------------------------------------------------------------
# sweeps

def _cell_config(base, n, omega, policy):
    name, gamma, _ = parse_gamma_policy(policy)
    comp = replace(base.compression, fraction=omega)
    return replace(
        base, topology=replace(base.topology, n=n), compression=comp, gamma_policy=name, gamma=gamma,
    )


def _run_cell(payload):
    base, n, omega, policy, out_dir = payload
    _, _, label = parse_gamma_policy(policy)
    cfg = _cell_config(base, n, omega, policy)
    rounds, statuses = [], []
    try:
        prepared = prepare(cfg)
        record_every = max(1, cfg.rounds // 1000)
        for k, seed in enumerate(cfg.seeds):
            result = prepared.run(seed, stop_at_eps=True, record_every=record_every)
            statuses.append(result.status)
            rounds.append(result.rounds_to_eps)
            if out_dir and k == 0:
                dump_trace(Path(out_dir) / f"cell_n{n}_w{omega:g}_{label}.csv", result.rows)
    except PushSimError as exc:
        logger.warning("sweep cell n=%d omega=%g %s failed: %s", n, omega, label, exc)
        return SweepRow(n=n, omega=omega, gamma_policy=label, rounds_to_eps=None, status=DIVERGED)
    if DIVERGED in statuses:
        status = DIVERGED
    elif all(s == CONVERGED for s in statuses):
        status = CONVERGED
    else:
        status = BUDGET_EXHAUSTED
    row = SweepRow(n=n, omega=omega, gamma_policy=label,
                   rounds_to_eps=max(rounds) if status == CONVERGED else None, status=status)
    logger.info("sweep cell n=%d omega=%g %s: %s (%s rounds)", n, omega, label, status, row.rounds_to_eps)
    return row


def sweep_consensus(ns, omegas, gamma_policies, base, jobs=1, out_dir=None):
    """Rounds to epsilon over the (n, omega, gamma policy) cross product, one row per cell."""
    if not ns or not omegas or not gamma_policies:
        raise InvalidArgument("sweep needs at least one n, one omega and one gamma policy")
    comp = base.compression
    if comp.kind not in (TOP, RAND) or comp.unbiased:
        # the omega grid is the kept fraction; other operators have a fixed ratio
        raise InvalidArgument(f"omega sweeps need an unscaled top or rand compressor, got {comp.label()}")
    base = replace(base, mode=CONSENSUS)
    payloads = [(base, n, w, g, out_dir) for g in gamma_policies for n in ns for w in omegas]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_cell, payloads))
    else:
        rows = [_run_cell(p) for p in payloads]
    result = SweepResult(rows=rows)
    if out_dir:
        dump_sweep(Path(out_dir) / "sweep.csv", result)
    return result


# ---------------------------------------------------------------------------
# logistic regression benchmark

@dataclass
class SeriesResult:
    label: str
    prepared: PreparedExperiment
    runs: list
    rows: list
    avg_iterate_gap: float
    weighted_iterate_gap: float


def baseline_configs(config):
    """Uncompressed push-sum SGD and the gamma = 1 qsgd_k family next to the configured method."""
    out = {"proposed": config}
    out["uncompressed"] = replace(
        config, compression=replace(config.compression, kind=IDENTITY), gamma_policy="manual", gamma=1.0,
    )
    for k in BASELINE_QSGD_LEVELS:
        out[f"gamma1_qsgd_{k}"] = replace(
            config, compression=replace(config.compression, kind=QSGD, levels_bits=k, unbiased=False),
            gamma_policy="manual", gamma=1.0,
        )
    return out


def average_rows(runs):
    """Column-wise mean over seeds, aligned on t; status is the worst seen."""
    length = min(len(r.rows) for r in runs)
    rows = []
    for k in range(length):
        group = [r.rows[k] for r in runs]
        statuses = {row.status for row in group}
        status = DIVERGED if DIVERGED in statuses else group[0].status
        rows.append(TraceRow(
            t=group[0].t,
            psi_z=float(np.mean([row.psi_z for row in group])),
            psi_x=float(np.mean([row.psi_x for row in group])),
            bits_cum=group[0].bits_cum,
            objective=_mean_or_none([row.objective for row in group]),
            objective_agent0=_mean_or_none([row.objective_agent0 for row in group]),
            status=status,
        ))
    return rows


def _mean_or_none(values):
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def iterate_gaps(prepared, run):
    """f(uniform average iterate) - f* and f(weighted average iterate) - f* of one run."""
    T = len(run.mean_iterates) - 1
    if T < 2 or run.status == DIVERGED:
        return math.inf, math.inf
    iterates = run.mean_iterates[:T]
    uniform = prepared.oracle.global_value(uniform_average_iterate(iterates)) - prepared.f_star
    weighted = prepared.oracle.global_value(weighted_average_iterate(iterates, averaging_p(T))) - prepared.f_star
    return uniform, weighted


def run_logreg(config, baselines=False, out_dir=None, prepared=None):
    if config.mode == CONSENSUS:
        raise InvalidArgument("the logistic benchmark runs in sgd mode")
    base = prepared if prepared is not None else prepare(config)
    configs = baseline_configs(config) if baselines else {"proposed": config}
    results = {}
    for label, cfg in configs.items():
        series = base if cfg is config else base.derive(cfg)
        runs = [series.run(seed) for seed in cfg.seeds]
        gaps = [iterate_gaps(series, run) for run in runs]
        results[label] = SeriesResult(
            label=label,
            prepared=series,
            runs=runs,
            rows=average_rows(runs),
            avg_iterate_gap=float(np.mean([g[0] for g in gaps])),
            weighted_iterate_gap=float(np.mean([g[1] for g in gaps])),
        )
        logger.info("logreg %s: final suboptimality %s, bits %d", label,
                    results[label].rows[-1].objective, runs[0].bits_cum)
        if out_dir:
            dump_trace(Path(out_dir) / f"logreg_{label}.csv", results[label].rows)
            for run in runs:
                dump_trace(Path(out_dir) / f"logreg_{label}_seed{run.seed}.csv", run.rows)
            write_manifest(Path(out_dir) / f"manifest_{label}.json", series.manifest())
    return results


def run_single(config, out_dir=None):
    prepared = prepare(config)
    results = [prepared.run(seed) for seed in config.seeds]
    if out_dir:
        for run in results:
            dump_trace(Path(out_dir) / f"trace_seed{run.seed}.csv", run.rows)
        write_manifest(Path(out_dir) / "manifest.json", prepared.manifest())
    return prepared, results


# ---------------------------------------------------------------------------
# output

def dump_trace(path, rows):
    write_rows(path, TRACE_FIELDS, [asdict(r) for r in rows])


def load_trace(path):
    conv = {"t": int, "psi_z": float, "psi_x": float, "bits_cum": int, "objective": float,
            "objective_agent0": float, "status": str}
    return [TraceRow(**row) for row in read_rows(path, conv)]


def dump_sweep(path, result):
    write_rows(path, SWEEP_FIELDS, [asdict(r) for r in result.rows])


def load_sweep(path):
    conv = {"n": int, "omega": float, "gamma_policy": str, "rounds_to_eps": int, "status": str}
    return SweepResult(rows=[SweepRow(**row) for row in read_rows(path, conv)])


def write_manifest(path, manifest):
    with atomic_write(path) as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
