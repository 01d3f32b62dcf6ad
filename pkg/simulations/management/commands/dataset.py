from django.core.management.base import BaseCommand, CommandError

from simulations.exceptions import PushSimError
from simulations.utils.problems import dump_dataset, gen_cone_dataset, is_separable, load_dataset


class Command(BaseCommand):
    help = "Generate or inspect the separable two-cone logistic regression dataset."

    def add_arguments(self, parser):
        parser.add_argument("action", choices=["gen", "dump"], help="'gen' writes a dataset CSV, 'dump' summarizes one")
        parser.add_argument("path", help="Dataset CSV path")
        parser.add_argument("--n", type=int, default=100, help="Agents")
        parser.add_argument("--m", type=int, default=20, help="Samples per agent")
        parser.add_argument("--d", type=int, default=200, help="Feature dimension")
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--reg", type=float, help="Ridge weight (default 1/(2mn))")

    def handle(self, *args, **options):
        try:
            if options["action"] == "gen":
                problem = gen_cone_dataset(options["n"], options["m"], options["d"], options["seed"], reg=options["reg"])
                dump_dataset(problem, options["path"])
                self.stdout.write(self.style.SUCCESS(
                    f"Wrote {problem.n} agents x {problem.m} samples (d={problem.d}) to {options['path']}"))
                return
            problem = load_dataset(options["path"])
        except (PushSimError, OSError) as exc:
            raise CommandError(str(exc)) from exc

        self.stdout.write(f"n={problem.n} m={problem.m} d={problem.d} reg={problem.reg:g} seed={problem.seed}")
        for i in range(problem.n):
            positives = int((problem.b[i] == 1).sum())
            self.stdout.write(f"  agent {i}: {positives} positive / {problem.m - positives} negative")
        if is_separable(problem):
            self.stdout.write(self.style.SUCCESS("Linearly separable through the origin"))
        else:
            self.stdout.write(self.style.WARNING("Not certified separable"))
