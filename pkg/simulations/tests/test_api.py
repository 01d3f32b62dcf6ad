from django.test import TestCase
from django.urls import reverse
from rest_framework.test import APIClient

from simulations.models import ExperimentRun, SweepCell


class RunAPITests(TestCase):
    def setUp(self):
        self.client = APIClient()
        self.run = ExperimentRun.objects.create(
            kind="consensus_sweep",
            config={"topology": {"kind": "ring", "n": 20}},
            config_hash="a" * 64,
            seeds=[0, 1],
            omega=0.1,
            gamma=0.1,
            status="converged",
            output_path="runs/sweep_aaaa",
        )
        SweepCell.objects.create(run=self.run, n=20, omega=0.1, gamma_policy="omega", rounds_to_eps=1234,
                                 status="converged")

    def test_list(self):
        response = self.client.get(reverse("simulations:api_runs"))
        self.assertEqual(response.status_code, 200)
        data = response.json()
        self.assertEqual(len(data), 1)
        self.assertEqual(data[0]["kind"], "consensus_sweep")
        self.assertEqual(data[0]["seeds"], [0, 1])

    def test_list_is_capped(self):
        ExperimentRun.objects.bulk_create([
            ExperimentRun(kind="single_run", config={}, config_hash="b" * 64) for _ in range(205)
        ])
        response = self.client.get(reverse("simulations:api_runs"))
        self.assertEqual(len(response.json()), 200)

    def test_detail_includes_cells(self):
        response = self.client.get(reverse("simulations:api_run_detail", args=[self.run.pk]))
        self.assertEqual(response.status_code, 200)
        data = response.json()
        self.assertEqual(data["config"]["topology"]["n"], 20)
        self.assertEqual(data["cells"], [
            {"n": 20, "omega": 0.1, "gamma_policy": "omega", "rounds_to_eps": 1234, "status": "converged"},
        ])

    def test_missing_run(self):
        response = self.client.get(reverse("simulations:api_run_detail", args=[9999]))
        self.assertEqual(response.status_code, 404)
