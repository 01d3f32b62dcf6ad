from django.core.management.base import BaseCommand, CommandError

from simulations.exceptions import PushSimError
from simulations.utils.harness import parse_gamma_policy, sweep_consensus
from simulations.utils.hash_utils import calculate_config_hash
from simulations.utils.pushsum import CONVERGED
from ._options import add_run_arguments, config_from_options, output_dir, record_run


class Command(BaseCommand):
    help = "Rounds to reach epsilon consensus over a grid of network sizes, compression ratios and gamma policies."

    def add_arguments(self, parser):
        add_run_arguments(parser)
        parser.add_argument("--ns", type=int, nargs="+", help="Network sizes (default: --n)")
        parser.add_argument("--omegas", type=float, nargs="+", default=[0.01, 0.05, 0.1, 0.5, 1.0],
                            help="Compression ratios to sweep")
        parser.add_argument("--gamma-policies", nargs="+", default=["omega"],
                            help="omega, theorem1, lemma1 or a fixed gamma such as 1 (full-step baseline)")

    def handle(self, *args, **options):
        config = config_from_options(options, {"mode": "consensus"})
        ns = options["ns"] or [config.topology.n]
        try:
            policies = [parse_gamma_policy(p)[2] for p in options["gamma_policies"]]
        except PushSimError as exc:
            raise CommandError(str(exc)) from exc
        out = output_dir(config, "sweep")

        cells = len(ns) * len(options["omegas"]) * len(policies)
        self.stdout.write(f"Sweeping {cells} cells ({config.compression.kind}, eps={config.epsilon:g}, "
                          f"budget {config.rounds} rounds) into {out}")
        try:
            result = sweep_consensus(ns, options["omegas"], options["gamma_policies"], config,
                                     jobs=options["jobs"], out_dir=out)
        except PushSimError as exc:
            raise CommandError(str(exc)) from exc

        for row in result.rows:
            line = f"  n={row.n:<5} omega={row.omega:<6g} {row.gamma_policy:<12} "
            if row.status == CONVERGED:
                self.stdout.write(line + self.style.SUCCESS(f"{row.rounds_to_eps} rounds"))
            else:
                self.stdout.write(line + self.style.WARNING(row.status))

        converged = sum(1 for r in result.rows if r.status == CONVERGED)
        status = CONVERGED if converged == len(result.rows) else "partial"
        if not options["no_record"]:
            manifest = {"config_hash": calculate_config_hash(config.as_dict())}
            run = record_run("consensus_sweep", config, manifest, status, out, cells=result.rows)
            self.stdout.write(f"Recorded run {run.id}")
        self.stdout.write(self.style.SUCCESS(f"{converged}/{len(result.rows)} cells converged; wrote {out / 'sweep.csv'}"))
