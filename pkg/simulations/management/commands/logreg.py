from django.core.management.base import BaseCommand, CommandError

from simulations.exceptions import PushSimError
from simulations.utils.harness import run_logreg
from ._options import add_run_arguments, config_from_options, output_dir, record_run

LOGREG_DEFAULTS = {
    "mode": "sgd",
    "topology": {"kind": "erdos", "n": 100},
    "compression": {"kind": "qsgd", "k": 2},
    "objective": {"kind": "logreg", "d": 200, "m": 20},
    "stepsize": {"gamma_policy": "omega", "eta_policy": "convex"},
    "seeds": list(range(10)),
    "record_every": 10,
}


class Command(BaseCommand):
    help = "Decentralized logistic regression benchmark: suboptimality against rounds and transmitted bits."

    def add_arguments(self, parser):
        add_run_arguments(parser)
        parser.add_argument("--baselines", action="store_true",
                            help="Also run uncompressed push-sum SGD and gamma=1 qsgd_k (k=2,3,4)")
        parser.add_argument("--nonconvex", type=float, metavar="PENALTY",
                            help="Add the bounded non-convex penalty with this weight")
        parser.add_argument("--dataset", help="Dataset CSV written by `dataset gen`")

    def handle(self, *args, **options):
        defaults = {k: (dict(v) if isinstance(v, dict) else v) for k, v in LOGREG_DEFAULTS.items()}
        if options["nonconvex"] is not None:
            defaults["objective"].update(kind="logreg_nonconvex", penalty=options["nonconvex"])
        if options["dataset"]:
            defaults["objective"]["dataset_path"] = options["dataset"]
        config = config_from_options(options, defaults)
        out = output_dir(config, "logreg")

        self.stdout.write(f"Logistic regression: n={config.topology.n} {config.compression.label()} "
                          f"T={config.rounds} seeds={list(config.seeds)}")
        try:
            results = run_logreg(config, baselines=options["baselines"], out_dir=out)
        except PushSimError as exc:
            raise CommandError(str(exc)) from exc

        for label, series in results.items():
            final = series.rows[-1]
            gap = "n/a" if final.objective is None else f"{final.objective:.3e}"
            msg = f"  {label:<16} suboptimality {gap} after {final.t} rounds, {final.bits_cum} bits ({final.status})"
            self.stdout.write(self.style.WARNING(msg) if final.status == "diverged" else msg)

        proposed = results["proposed"]
        if not options["no_record"]:
            manifest = proposed.prepared.manifest()
            run = record_run("logreg", config, manifest, proposed.rows[-1].status, out)
            self.stdout.write(f"Recorded run {run.id}")
        self.stdout.write(self.style.SUCCESS(f"Wrote traces to {out}"))
