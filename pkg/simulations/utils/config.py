"""Experiment configuration: TOML files merged with process defaults and command-line overrides."""
import copy
import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field

from simulations.exceptions import InvalidArgument
from simulations.utils.compression import CompressionSpec

CONSENSUS = "consensus"
SGD = "sgd"
MODES = (CONSENSUS, SGD)

GAMMA_POLICIES = ("theorem1", "lemma1", "manual", "omega")
ETA_POLICIES = ("manual", "convex", "strongly_convex", "nonconvex")
TOPOLOGIES = ("ring", "erdos", "file")
OBJECTIVES = ("consensus", "logreg", "logreg_nonconvex")

DEFAULTS = {
    "mode": CONSENSUS,
    "rounds": None,
    "epsilon": 1e-5,
    "seeds": [0],
    "out": None,
    "record_every": 1,
    "replicas": False,
    "topology": {"kind": "ring", "n": 20, "p": None, "seed": 0, "path": None},
    "compression": {
        "kind": "top", "fraction": 0.1, "k": 2, "value_bits": 32, "index_bits": None,
        "unbiased": False, "certify": False,
    },
    "objective": {
        "kind": "consensus", "d": 300, "m": 20, "penalty": 0.0, "reg": None,
        "dataset_seed": None, "dataset_path": None,
    },
    "stepsize": {"gamma_policy": "omega", "gamma": None, "eta_policy": "manual", "eta": 0.0},
    "limits": {
        "consensus_budget": 1_000_000, "sgd_budget": 10_000, "divergence_threshold": 1e12,
        "horizon": 0,
    },
}


@dataclass(frozen=True)
class TopologySpec:
    kind: str = "ring"
    n: int = 20
    p: float | None = None
    seed: int = 0
    path: str | None = None

    def edge_probability(self):
        """(log n)/n unless given explicitly."""
        if self.p is not None:
            return self.p
        return min(1.0, math.log(self.n) / self.n) if self.n > 1 else 1.0


@dataclass(frozen=True)
class ObjectiveSpec:
    kind: str = "consensus"
    d: int = 300
    m: int = 20
    penalty: float = 0.0
    reg: float | None = None
    dataset_seed: int | None = None
    dataset_path: str | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    topology: TopologySpec = field(default_factory=TopologySpec)
    compression: CompressionSpec = field(default_factory=CompressionSpec)
    certify: bool = False
    mode: str = CONSENSUS
    objective: ObjectiveSpec = field(default_factory=ObjectiveSpec)
    gamma_policy: str = "omega"
    gamma: float | None = None
    eta_policy: str = "manual"
    eta: float = 0.0
    rounds: int = 1000
    epsilon: float = 1e-5
    seeds: tuple = (0,)
    out: str | None = None
    record_every: int = 1
    replicas: bool = False
    divergence_threshold: float = 1e12
    horizon: int = 0

    def as_dict(self):
        data = asdict(self)
        data["seeds"] = list(self.seeds)
        return data


def deep_merge(base, override):
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        elif value is not None:
            merged[key] = value
    return merged


def dotted(overrides):
    """{"topology.n": 5} -> {"topology": {"n": 5}}."""
    nested = {}
    for key, value in overrides.items():
        if value is None:
            continue
        node = nested
        *parents, leaf = key.split(".")
        for part in parents:
            node = node.setdefault(part, {})
        node[leaf] = value
    return nested


def read_config_file(path):
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise InvalidArgument(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise InvalidArgument(f"{path}: {exc}") from exc


def _check_keys(data, allowed, where):
    unknown = set(data) - set(allowed)
    if unknown:
        raise InvalidArgument(f"unknown {where} keys: {sorted(unknown)}")


def load_config(path=None, overrides=None, defaults=None):
    """defaults -> file -> overrides, validated into an ExperimentConfig."""
    data = deep_merge(DEFAULTS, defaults or {})
    if path:
        data = deep_merge(data, read_config_file(path))
    data = deep_merge(data, dotted(overrides or {}))
    return build_config(data)


def build_config(data):
    _check_keys(data, DEFAULTS, "config")
    for section in ("topology", "compression", "objective", "stepsize", "limits"):
        _check_keys(data[section], DEFAULTS[section], section)

    top = data["topology"]
    if top["kind"] not in TOPOLOGIES:
        raise InvalidArgument(f"topology must be one of {TOPOLOGIES}, got {top['kind']!r}")
    if top["kind"] == "file" and not top["path"]:
        raise InvalidArgument("file topology needs topology.path")
    topology = TopologySpec(kind=top["kind"], n=int(top["n"]), p=top["p"], seed=int(top["seed"]), path=top["path"])
    if topology.n < 1:
        raise InvalidArgument(f"topology.n must be positive, got {topology.n}")

    comp = data["compression"]
    compression = CompressionSpec(
        kind=comp["kind"], fraction=float(comp["fraction"]), levels_bits=int(comp["k"]),
        value_bits=int(comp["value_bits"]), index_bits=comp["index_bits"], unbiased=bool(comp["unbiased"]),
    )

    mode = data["mode"]
    if mode not in MODES:
        raise InvalidArgument(f"mode must be one of {MODES}, got {mode!r}")
    obj = data["objective"]
    if obj["kind"] not in OBJECTIVES:
        raise InvalidArgument(f"objective must be one of {OBJECTIVES}, got {obj['kind']!r}")
    objective = ObjectiveSpec(
        kind=obj["kind"], d=int(obj["d"]), m=int(obj["m"]), penalty=float(obj["penalty"]),
        reg=obj["reg"], dataset_seed=obj["dataset_seed"], dataset_path=obj["dataset_path"],
    )

    step = data["stepsize"]
    if step["gamma_policy"] not in GAMMA_POLICIES:
        raise InvalidArgument(f"gamma policy must be one of {GAMMA_POLICIES}, got {step['gamma_policy']!r}")
    if step["eta_policy"] not in ETA_POLICIES:
        raise InvalidArgument(f"eta policy must be one of {ETA_POLICIES}, got {step['eta_policy']!r}")
    if step["gamma_policy"] == "manual" and step["gamma"] is None:
        raise InvalidArgument("manual gamma policy needs stepsize.gamma")

    limits = data["limits"]
    rounds = data["rounds"]
    if rounds is None:
        rounds = limits["consensus_budget"] if mode == CONSENSUS else limits["sgd_budget"]
    if int(rounds) < 1:
        raise InvalidArgument(f"rounds must be at least 1, got {rounds}")
    if float(data["epsilon"]) <= 0:
        raise InvalidArgument(f"epsilon must be positive, got {data['epsilon']}")
    seeds = data["seeds"]
    seeds = tuple(int(s) for s in (seeds if isinstance(seeds, (list, tuple)) else [seeds]))
    if not seeds:
        raise InvalidArgument("at least one seed is required")

    return ExperimentConfig(
        topology=topology,
        compression=compression,
        certify=bool(comp["certify"]),
        mode=mode,
        objective=objective,
        gamma_policy=step["gamma_policy"],
        gamma=None if step["gamma"] is None else float(step["gamma"]),
        eta_policy=step["eta_policy"],
        eta=float(step["eta"]),
        rounds=int(rounds),
        epsilon=float(data["epsilon"]),
        seeds=seeds,
        out=data["out"],
        record_every=max(1, int(data["record_every"])),
        replicas=bool(data["replicas"]),
        divergence_threshold=float(limits["divergence_threshold"]),
        horizon=int(limits["horizon"]),
    )
