"""Flags and helpers shared by the run commands."""
from pathlib import Path

from django.conf import settings
from django.core.management.base import CommandError

from simulations.exceptions import PushSimError
from simulations.models import ExperimentRun, SweepCell
from simulations.utils.config import ETA_POLICIES, GAMMA_POLICIES, TOPOLOGIES, load_config
from simulations.utils.hash_utils import calculate_config_hash

# flag dest -> dotted config key
FLAG_KEYS = {
    "topology": "topology.kind",
    "n": "topology.n",
    "p": "topology.p",
    "graph_seed": "topology.seed",
    "graph_file": "topology.path",
    "omega": "compression.fraction",
    "compressor": "compression.kind",
    "k": "compression.k",
    "d": "objective.d",
    "gamma": "stepsize.gamma",
    "gamma_policy": "stepsize.gamma_policy",
    "eta": "stepsize.eta",
    "eta_policy": "stepsize.eta_policy",
    "rounds": "rounds",
    "eps": "epsilon",
    "seed": "seeds",
    "out": "out",
}


def add_run_arguments(parser):
    parser.add_argument("--config", help="TOML experiment config")
    parser.add_argument("--topology", choices=TOPOLOGIES)
    parser.add_argument("--n", type=int, help="Number of agents")
    parser.add_argument("--p", type=float, help="Erdos-Renyi edge probability (default log(n)/n)")
    parser.add_argument("--graph-seed", type=int, help="Seed for the random graph draw")
    parser.add_argument("--graph-file", help="Edge list for --topology file")
    parser.add_argument("--omega", type=float, help="Kept fraction for top/rand compression")
    parser.add_argument("--compressor", choices=["identity", "top", "rand", "qsgd"])
    parser.add_argument("--k", type=int, help="qsgd precision bits")
    parser.add_argument("--d", type=int, help="Parameter dimension")
    parser.add_argument("--gamma", type=float, help="Consensus stepsize (implies --gamma-policy manual)")
    parser.add_argument("--gamma-policy", choices=GAMMA_POLICIES)
    parser.add_argument("--eta", type=float, help="Learning rate (implies --eta-policy manual)")
    parser.add_argument("--eta-policy", choices=ETA_POLICIES)
    parser.add_argument("--rounds", type=int, help="Round budget T")
    parser.add_argument("--eps", type=float, help="Target relative consensus error")
    parser.add_argument("--seed", type=int, action="append", help="Master seed; repeat for seed averaging")
    parser.add_argument("--out", help="Output directory (default: PUSHSIM OUTPUT_DIR/<kind>_<hash>)")
    parser.add_argument("--jobs", type=int, default=settings.PUSHSIM["JOBS"], help="Parallel sweep cells")
    parser.add_argument("--no-record", action="store_true", help="Don't store the run in the database")


def settings_defaults():
    conf = settings.PUSHSIM
    return {
        "compression": {"value_bits": conf["VALUE_BITS"]},
        "limits": {
            "consensus_budget": conf["CONSENSUS_BUDGET"],
            "sgd_budget": conf["SGD_BUDGET"],
            "divergence_threshold": conf["DIVERGENCE_THRESHOLD"],
            "horizon": conf["SPECTRAL_HORIZON"],
        },
    }


def config_from_options(options, defaults=None):
    overrides = {key: options.get(dest) for dest, key in FLAG_KEYS.items()}
    if options.get("gamma") is not None and not options.get("gamma_policy"):
        overrides["stepsize.gamma_policy"] = "manual"
    if options.get("eta") is not None and not options.get("eta_policy"):
        overrides["stepsize.eta_policy"] = "manual"
    merged = settings_defaults()
    for section, values in (defaults or {}).items():
        if isinstance(values, dict):
            merged.setdefault(section, {}).update(values)
        else:
            merged[section] = values
    try:
        return load_config(options.get("config"), overrides, merged)
    except PushSimError as exc:
        raise CommandError(str(exc)) from exc


def output_dir(config, kind):
    if config.out:
        return Path(config.out)
    digest = calculate_config_hash(config.as_dict())[:12]
    return Path(settings.PUSHSIM["OUTPUT_DIR"]) / f"{kind}_{digest}"


def record_run(kind, config, manifest, status, out, cells=()):
    run = ExperimentRun.objects.create(
        kind=kind,
        config=config.as_dict(),
        config_hash=manifest.get("config_hash") or calculate_config_hash(config.as_dict()),
        seeds=list(config.seeds),
        spectral_profile=manifest.get("spectral_profile"),
        beta=manifest.get("beta"),
        omega=manifest.get("omega"),
        gamma=manifest.get("gamma"),
        eta=manifest.get("eta"),
        status=status,
        output_path=str(out),
    )
    SweepCell.objects.bulk_create([
        SweepCell(run=run, n=c.n, omega=c.omega, gamma_policy=c.gamma_policy,
                  rounds_to_eps=c.rounds_to_eps, status=c.status)
        for c in cells
    ])
    return run
