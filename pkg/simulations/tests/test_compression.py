import itertools
import math

import numpy as np
from django.test import SimpleTestCase, tag

from simulations.exceptions import InvalidArgument, NumericFailure
from simulations.utils import rng as streams
from simulations.utils.compression import (
    IDENTITY, QSGD, RAND, TOP, CompressionSpec, bits_of, certify_omega, compress, compress_rows,
    contraction_ratios, message_bits, omega_of, qsgd_tau,
)


class CompressionSpecTests(SimpleTestCase):
    def test_aliases(self):
        self.assertEqual(CompressionSpec(kind="top").kind, TOP)
        self.assertEqual(CompressionSpec(kind="none").kind, IDENTITY)
        self.assertEqual(CompressionSpec(kind="rand").kind, RAND)

    def test_unknown_kind(self):
        with self.assertRaises(InvalidArgument):
            CompressionSpec(kind="sign")

    def test_fraction_range(self):
        with self.assertRaises(InvalidArgument):
            CompressionSpec(kind=TOP, fraction=0.0)
        with self.assertRaises(InvalidArgument):
            CompressionSpec(kind=RAND, fraction=1.5)

    def test_kept_count(self):
        self.assertEqual(CompressionSpec(kind=TOP, fraction=0.1).kept(300), 30)
        self.assertEqual(CompressionSpec(kind=TOP, fraction=0.01).kept(50), 1)
        self.assertEqual(CompressionSpec(kind=TOP, fraction=0.3).kept(4), 2)

    def test_labels(self):
        self.assertEqual(CompressionSpec(kind=QSGD, levels_bits=3).label(), "qsgd_3")
        self.assertEqual(CompressionSpec(kind=TOP, fraction=0.05).label(), "top_0.05")


class OmegaTests(SimpleTestCase):
    def test_sparsifier_omega_is_kept_share(self):
        self.assertEqual(omega_of(CompressionSpec(kind=TOP, fraction=0.1), 300), 0.1)
        self.assertEqual(omega_of(CompressionSpec(kind=RAND, fraction=0.5)), 0.5)
        self.assertEqual(omega_of(CompressionSpec(kind=IDENTITY)), 1.0)

    def test_qsgd_omega(self):
        spec = CompressionSpec(kind=QSGD, levels_bits=2)
        tau = min(200 / 4, math.sqrt(200) / 2)
        self.assertAlmostEqual(qsgd_tau(2, 200), tau)
        self.assertAlmostEqual(omega_of(spec, 200), 1 / (1 + tau))

    def test_qsgd_omega_needs_dimension(self):
        with self.assertRaises(InvalidArgument):
            omega_of(CompressionSpec(kind=QSGD))

    def test_unbiased_rand_omega(self):
        spec = CompressionSpec(kind=RAND, fraction=0.75, unbiased=True)
        self.assertAlmostEqual(omega_of(spec, 4), 2 - 4 / 3)
        self.assertTrue(spec.needs_certificate)
        with self.assertRaises(InvalidArgument):
            omega_of(CompressionSpec(kind=RAND, fraction=0.25, unbiased=True), 4)
        with self.assertRaises(InvalidArgument):
            omega_of(CompressionSpec(kind=RAND, fraction=0.5, unbiased=True), 4)

    def test_unbiased_qsgd_has_no_nominal_omega(self):
        spec = CompressionSpec(kind=QSGD, levels_bits=2, unbiased=True)
        self.assertTrue(spec.needs_certificate)
        self.assertFalse(CompressionSpec(kind=QSGD, levels_bits=2).needs_certificate)
        with self.assertRaises(InvalidArgument):
            omega_of(spec, 300)


class CompressTests(SimpleTestCase):
    def test_top_keeps_largest_magnitudes(self):
        spec = CompressionSpec(kind=TOP, fraction=0.5)
        out = compress(spec, np.array([0.1, -3.0, 2.0, -3.0])).dense
        np.testing.assert_array_equal(out, [0.0, -3.0, 0.0, -3.0])

    def test_top_ties_keep_lowest_index(self):
        spec = CompressionSpec(kind=TOP, fraction=0.5)
        np.testing.assert_array_equal(compress(spec, np.ones(4)).dense, [1.0, 1.0, 0.0, 0.0])

    def test_identity_copies(self):
        x = np.array([1.5, -2.0])
        out = compress(CompressionSpec(), x).dense
        np.testing.assert_array_equal(out, x)
        self.assertIsNot(out, x)

    def test_empty_vector(self):
        with self.assertRaises(InvalidArgument):
            compress(CompressionSpec(kind=TOP, fraction=0.5), np.array([]))

    def test_randomized_needs_stream(self):
        with self.assertRaises(InvalidArgument):
            compress_rows(CompressionSpec(kind=QSGD), np.ones((2, 3)))

    def test_rand_support_size_and_values(self):
        spec = CompressionSpec(kind=RAND, fraction=0.2)
        x = np.arange(1.0, 11.0)
        out = compress(spec, x, streams.stream(7)).dense
        kept = np.flatnonzero(out)
        self.assertEqual(kept.size, 2)
        np.testing.assert_array_equal(out[kept], x[kept])

    def test_unbiased_rand_scales(self):
        spec = CompressionSpec(kind=RAND, fraction=0.5, unbiased=True)
        x = np.ones(4)
        out = compress(spec, x, streams.stream(1)).dense
        self.assertEqual(sorted(out), [0.0, 0.0, 2.0, 2.0])

    def test_qsgd_levels(self):
        spec = CompressionSpec(kind=QSGD, levels_bits=2, unbiased=True)
        x = np.array([3.0, -4.0])
        out = compress(spec, x, streams.stream(2)).dense
        # |x_i| / ||x|| * s lands on a level in {0, 1/2, 1} of the norm
        for value, sign in zip(out, np.sign(x)):
            self.assertIn(round(abs(value) / 5.0 * 2), (0, 1, 2))
            self.assertTrue(value == 0 or np.sign(value) == sign)

    def test_zero_maps_to_zero(self):
        specs = [
            CompressionSpec(kind=IDENTITY),
            CompressionSpec(kind=TOP, fraction=0.4),
            CompressionSpec(kind=RAND, fraction=0.4),
            CompressionSpec(kind=RAND, fraction=0.4, unbiased=True),
            CompressionSpec(kind=QSGD),
            CompressionSpec(kind=QSGD, unbiased=True),
        ]
        for spec in specs:
            with self.subTest(spec=spec.label(), unbiased=spec.unbiased):
                out = compress(spec, np.zeros(5), streams.stream(0)).dense
                np.testing.assert_array_equal(out, np.zeros(5))

    def test_top_is_positively_homogeneous(self):
        spec = CompressionSpec(kind=TOP, fraction=0.3)
        x = streams.stream(6).standard_normal(40)
        base = compress(spec, x).dense
        for c in (0.25, 0.5, 2.0, 4.0):
            np.testing.assert_array_equal(compress(spec, c * x).dense, c * base)

    def test_top_half_matches_best_subset(self):
        x = np.array([3.0, -1.0, 4.0, 1.0])
        out = compress(CompressionSpec(kind=TOP, fraction=0.5), x).dense
        np.testing.assert_array_equal(out, [3.0, 0.0, 4.0, 0.0])
        best = min(
            np.sum(np.delete(x, list(keep)) ** 2) for keep in itertools.combinations(range(4), 2)
        )
        self.assertEqual(np.sum((out - x) ** 2), best)

    def test_scaled_rand_is_unbiased(self):
        spec = CompressionSpec(kind=RAND, fraction=0.5, unbiased=True)
        draws = 100_000
        rng = streams.stream(12)
        out = compress_rows(spec, np.ones((draws, 2)), [rng] * draws)
        mean = out.mean(axis=0)
        stderr = out.std(axis=0, ddof=1) / math.sqrt(draws)
        self.assertTrue(np.all(np.abs(mean - 1.0) <= 3 * stderr))
        self.assertTrue(set(np.unique(out)) <= {0.0, 2.0})

    def test_same_stream_same_message(self):
        spec = CompressionSpec(kind=QSGD, levels_bits=2)
        x = streams.stream(3).standard_normal(50)
        a = compress(spec, x, streams.stream(11, 4)).dense
        b = compress(spec, x, streams.stream(11, 4)).dense
        np.testing.assert_array_equal(a, b)


class BitsTests(SimpleTestCase):
    def test_qsgd_against_uncompressed(self):
        self.assertEqual(message_bits(CompressionSpec(kind=QSGD, levels_bits=2), 200), 432)
        self.assertEqual(message_bits(CompressionSpec(kind=IDENTITY), 200), 6400)

    def test_sparsifier_charges_values_and_indices(self):
        self.assertEqual(message_bits(CompressionSpec(kind=TOP, fraction=0.1), 300), 30 * (32 + 9))
        self.assertEqual(message_bits(CompressionSpec(kind=RAND, fraction=0.5, index_bits=16), 8), 4 * 48)

    def test_bits_of_message(self):
        spec = CompressionSpec(kind=TOP, fraction=0.5)
        msg = compress(spec, np.array([1.0, 2.0, 3.0, 4.0]))
        self.assertEqual(bits_of(msg, spec, 4), msg.bits)
        self.assertEqual(msg.bits, 2 * (32 + 2))


class ContractionTests(SimpleTestCase):
    specs = [
        CompressionSpec(kind=IDENTITY),
        CompressionSpec(kind=TOP, fraction=0.1),
        CompressionSpec(kind=RAND, fraction=0.25),
        CompressionSpec(kind=RAND, fraction=0.75, unbiased=True),
        CompressionSpec(kind=QSGD, levels_bits=2),
        CompressionSpec(kind=QSGD, levels_bits=4),
    ]

    def check_contract(self, d, samples):
        for spec in self.specs:
            omega = omega_of(spec, d)
            ratios = contraction_ratios(spec, d, samples, streams.stream(5, d))
            stderr = ratios.std(ddof=1) / math.sqrt(samples)
            with self.subTest(spec=spec.label(), d=d):
                self.assertLessEqual(ratios.mean(), 1 - omega + 3 * stderr + 1e-12)
                if spec.kind == TOP:
                    self.assertLessEqual(ratios.max(), 1 - omega + 1e-12)

    def test_contract_holds(self):
        self.check_contract(50, 1000)

    @tag("slow")
    def test_contract_holds_full_grid(self):
        for d in (4, 50, 300):
            self.check_contract(d, 10_000)

    def test_certified_omega_for_top(self):
        cert = certify_omega(CompressionSpec(kind=TOP, fraction=0.1), 50, samples=500, rng=streams.stream(0))
        self.assertGreater(cert.omega, 0.1)
        self.assertLessEqual(cert.omega, 1.0)

    def test_certify_rejects_expanding_operator(self):
        with self.assertRaises(NumericFailure):
            certify_omega(CompressionSpec(kind=RAND, fraction=0.1, unbiased=True), 50, samples=200,
                          rng=streams.stream(0))
