import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from simulations.exceptions import InvalidArgument
from simulations.utils import rng as streams
from simulations.utils.problems import (
    ConsensusObjective, LogisticOracle, LogRegProblem, default_reg, dump_dataset, estimate_constants,
    gen_cone_dataset, global_grad, global_value, is_separable, load_dataset, logistic_grad, logistic_value,
    solve_centralized, stochastic_grad,
)


def finite_difference(f, x, h=1e-6):
    grad = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        grad[j] = (f(x + e) - f(x - e)) / (2 * h)
    return grad


class ConsensusObjectiveTests(SimpleTestCase):
    def test_minimizer_is_mean(self):
        X0 = np.array([[0.0, 2.0], [4.0, -2.0]])
        oracle = ConsensusObjective(X0)
        np.testing.assert_array_equal(oracle.minimizer(), [2.0, 0.0])
        np.testing.assert_array_equal(oracle.global_grad(oracle.minimizer()), [0.0, 0.0])
        self.assertEqual(oracle.value(0, np.array([1.0, 2.0])), 1.0)


class DatasetTests(SimpleTestCase):
    def setUp(self):
        self.problem = gen_cone_dataset(4, 10, 5, seed=0)

    def test_shapes_and_labels(self):
        p = self.problem
        self.assertEqual((p.n, p.m, p.d), (4, 10, 5))
        self.assertTrue(set(np.unique(p.b)) <= {-1, 1})
        self.assertEqual(p.reg, default_reg(4, 10))

    def test_majority_label_alternates_by_agent(self):
        p = self.problem
        self.assertEqual(int((p.b[0] == 1).sum()), 8)
        self.assertEqual(int((p.b[1] == -1).sum()), 8)

    def test_points_lie_in_their_cone(self):
        p = self.problem
        first = p.A[:, :, 0] * p.b
        self.assertTrue(np.all(first >= 3.0 - 1e-12))

    def test_separable(self):
        self.assertTrue(is_separable(self.problem))

    def test_seeded(self):
        np.testing.assert_array_equal(gen_cone_dataset(4, 10, 5, seed=0).A, self.problem.A)
        self.assertFalse(np.array_equal(gen_cone_dataset(4, 10, 5, seed=1).A, self.problem.A))

    def test_invalid_sizes(self):
        with self.assertRaises(InvalidArgument):
            gen_cone_dataset(0, 10, 5, seed=0)

    def test_labels_must_be_signs(self):
        with self.assertRaises(InvalidArgument):
            LogRegProblem(A=np.ones((1, 2, 3)), b=np.array([[1, 0]]), reg=0.1)

    def test_dump_and_load(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "data.csv"
            dump_dataset(self.problem, path)
            loaded = load_dataset(path)
        np.testing.assert_array_equal(loaded.A, self.problem.A)
        np.testing.assert_array_equal(loaded.b, self.problem.b)
        self.assertEqual(loaded.reg, self.problem.reg)
        self.assertEqual(loaded.seed, 0)


class LogisticTests(SimpleTestCase):
    def setUp(self):
        self.problem = gen_cone_dataset(3, 8, 6, seed=2)

    def test_value_at_origin(self):
        self.assertAlmostEqual(logistic_value(self.problem, 0, np.zeros(6)), math.log(2))
        self.assertAlmostEqual(global_value(self.problem, np.zeros(6)), math.log(2))

    def test_regularizer(self):
        p = LogRegProblem(A=np.zeros((1, 2, 3)), b=np.array([[1, -1]]), reg=0.01)
        x = np.array([10.0, 0.0, 0.0])
        self.assertAlmostEqual(logistic_value(p, 0, x) - math.log(2), 0.01 * 50)
        np.testing.assert_allclose(logistic_grad(p, 0, x), 0.01 * x)

    def test_gradients_match_finite_differences(self):
        p = self.problem
        rng = streams.stream(8)
        for _ in range(10):
            x = rng.standard_normal(6)
            local = finite_difference(lambda v: logistic_value(p, 1, v), x)
            self.assertLessEqual(np.linalg.norm(local - logistic_grad(p, 1, x)),
                                 1e-6 * max(1.0, np.linalg.norm(local)))
            full = finite_difference(lambda v: global_value(p, v), x)
            self.assertLessEqual(np.linalg.norm(full - global_grad(p, x)), 1e-6 * max(1.0, np.linalg.norm(full)))

    def test_nonconvex_penalty_gradient(self):
        oracle = LogisticOracle(self.problem, penalty=0.5)
        rng = streams.stream(9)
        for _ in range(10):
            x = rng.standard_normal(6)
            fd = finite_difference(oracle.global_value, x)
            self.assertLessEqual(np.linalg.norm(fd - oracle.global_grad(x)), 1e-6 * max(1.0, np.linalg.norm(fd)))

    def test_stochastic_gradient_is_unbiased(self):
        p = self.problem
        x = streams.stream(3).standard_normal(6)
        rng = streams.stream(4)
        draws = np.array([stochastic_grad(p, 2, x, rng) for _ in range(100_000)])
        mean = draws.mean(axis=0)
        stderr = draws.std(axis=0, ddof=1) / math.sqrt(len(draws))
        self.assertTrue(np.all(np.abs(mean - logistic_grad(p, 2, x)) <= 4 * stderr + 1e-12))

    def test_oracle_batches_rows(self):
        oracle = LogisticOracle(self.problem)
        Z = np.zeros((3, 6))
        grads = oracle.stochastic_grads(Z, streams.round_streams(0, 0, 3, streams.GRADIENT))
        self.assertEqual(grads.shape, (3, 6))


class CentralizedSolverTests(SimpleTestCase):
    def test_reaches_stationary_point(self):
        p = gen_cone_dataset(3, 8, 4, seed=5)
        x, value = solve_centralized(p)
        self.assertLessEqual(np.linalg.norm(global_grad(p, x)), 1e-7)
        self.assertLess(value, math.log(2))
        self.assertAlmostEqual(value, global_value(p, x))

    def test_bad_tolerance(self):
        with self.assertRaises(InvalidArgument):
            solve_centralized(gen_cone_dataset(2, 4, 3, seed=0), tol=0.0)

    def test_constants(self):
        p = gen_cone_dataset(3, 8, 4, seed=5)
        c = estimate_constants(p)
        self.assertEqual(c.mu, p.reg)
        self.assertGreater(c.L, c.mu)
        self.assertGreater(c.G_hat, 0.0)
        self.assertGreaterEqual(c.sigma_hat, 0.0)
