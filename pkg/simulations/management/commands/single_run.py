from django.core.management.base import BaseCommand, CommandError

from simulations.exceptions import PushSimError
from simulations.utils.harness import run_single
from simulations.utils.pushsum import DIVERGED
from ._options import add_run_arguments, config_from_options, output_dir, record_run


class Command(BaseCommand):
    help = "Run one configuration (consensus or sgd mode) and write its trace and manifest."

    def add_arguments(self, parser):
        add_run_arguments(parser)
        parser.add_argument("--mode", choices=["consensus", "sgd"], help="Option I (consensus) or Option II (sgd)")
        parser.add_argument("--replicas", action="store_true",
                            help="Keep a copy of every replica per edge and check them each round")
        parser.add_argument("--record-every", type=int, help="Trace row stride")

    def handle(self, *args, **options):
        defaults = {}
        if options["mode"]:
            defaults["mode"] = options["mode"]
            if options["mode"] == "sgd":
                defaults["objective"] = {"kind": "logreg"}
        if options["replicas"]:
            defaults["replicas"] = True
        if options["record_every"]:
            defaults["record_every"] = options["record_every"]
        config = config_from_options(options, defaults)
        out = output_dir(config, "single")

        try:
            prepared, results = run_single(config, out_dir=out)
        except PushSimError as exc:
            raise CommandError(str(exc)) from exc

        self.stdout.write(f"omega={prepared.omega:.4g} gamma={prepared.plan.gamma:.4g} eta={prepared.plan.eta:.4g} "
                          f"beta={prepared.W.beta:.4g}")
        for result in results:
            last = result.rows[-1]
            msg = f"  seed {result.seed}: {result.status} at t={last.t}, psi_z={last.psi_z:.3e}, bits={result.bits_cum}"
            if result.rounds_to_eps is not None:
                msg += f", eps reached at t={result.rounds_to_eps}"
            self.stdout.write(self.style.ERROR(msg) if result.status == DIVERGED else msg)

        statuses = {r.status for r in results}
        status = DIVERGED if DIVERGED in statuses else results[0].status
        if not options["no_record"]:
            run = record_run("single_run", config, prepared.manifest(), status, out)
            self.stdout.write(f"Recorded run {run.id}")
        self.stdout.write(self.style.SUCCESS(f"Wrote {out}"))
