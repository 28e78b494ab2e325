import math

import numpy as np
from django.test import SimpleTestCase
from scipy.stats import norm

from steinclt import gaussint, suites
from steinclt import polytope as poly
from steinclt.exceptions import InfiniteOffset, ZeroAngle
from steinclt.gaussint import DerivativeCoefficient, McEstimate
from steinclt.polytope import FacetIndex


PHI0 = norm.pdf(0.0)
SEED = 20240611


def within(test, estimate, expected, k=4.0, floor=1e-9):
    """Assert an McEstimate lies within k standard errors of ``expected``."""
    tolerance = k * estimate.stderr + floor
    test.assertLessEqual(abs(estimate.value - expected), tolerance,
                         f"{estimate.value} vs {expected} (tol {tolerance})")


class McEstimateTestCase(SimpleTestCase):
    """Estimate records and their combination."""

    def test_combine(self):
        a = McEstimate(1.0, 0.3, 10, 1)
        b = McEstimate(2.0, 0.4, 20, 1)
        total = gaussint.combine([(1.0, a), (-2.0, b)], seed=1)
        self.assertAlmostEqual(total.value, -3.0)
        self.assertAlmostEqual(total.stderr, math.sqrt(0.09 + 0.64))
        self.assertEqual(total.n_samples, 30)

    def test_scaled(self):
        estimate = McEstimate(0.5, 0.1, 100, 3).scaled(-2.0)
        self.assertEqual((estimate.value, estimate.stderr), (-1.0, 0.2))
        self.assertEqual(estimate.as_dict()['n_samples'], 100)

    def test_derivative_coefficient(self):
        coeff = DerivativeCoefficient.rank_one([1.0, 0.0], [0.0, 2.0])
        self.assertEqual(coeff.order, 2)
        np.testing.assert_allclose(coeff.data, [[0.0, 2.0], [0.0, 0.0]])
        with self.assertRaises(ValueError):
            DerivativeCoefficient(order=2, data=np.ones(3))
        with self.assertRaises(ValueError):
            DerivativeCoefficient(order=2, data=np.ones((2, 3)))


class FaceIntegralTestCase(SimpleTestCase):
    """Surface integrals that factor to closed forms."""

    def test_half_space_facet(self):
        """The only facet of {x_1 <= b} integrates to phi(b)."""
        half = poly.half_space(3, 0, 1.0)
        estimate = gaussint.facet_surface_integral(half, 0, None, 1000, SEED)
        self.assertAlmostEqual(estimate.value, norm.pdf(1.0))
        self.assertEqual(estimate.stderr, 0.0)

    def test_shift_recenters(self):
        half = poly.half_space(3, 0, 1.0)
        estimate = gaussint.facet_surface_integral(half, 0, [1.0, 0.0, 0.0], 1000, SEED)
        self.assertAlmostEqual(estimate.value, PHI0)

    def test_orthant_faces(self):
        """Ridges and the corner of the orthant in R^3."""
        orthant = poly.orthant(3)
        ridge = gaussint.ridge_surface_integral(orthant, (0, 1), 1000, SEED)
        self.assertAlmostEqual(ridge.value, 1.0 / (4.0 * math.pi))
        corner = gaussint.ridge_surface_integral(orthant, (0, 1, 2), 1000, SEED)
        self.assertAlmostEqual(corner.value, (2.0 * math.pi) ** -1.5)

    def test_sampled_residual(self):
        """Residual dimension 2 is sampled: phi(0) / 4 for a facet of the orthant."""
        estimate = gaussint.facet_surface_integral(poly.orthant(3), 0, None, 40000, SEED)
        self.assertGreater(estimate.stderr, 0.0)
        within(self, estimate, PHI0 / 4.0)

    def test_infinite_offset(self):
        box = poly.Polytope(normals=np.eye(3), offsets=[0.0, np.inf, 0.0])
        with self.assertRaises(InfiniteOffset):
            gaussint.face_integral(box, FacetIndex.of(1), None, 1000, SEED)

    def test_empty_faces(self):
        """Facets of an empty slab carry no mass."""
        slab = poly.Polytope(normals=[[1.0, 0.0], [-1.0, 0.0]], offsets=[0.0, -1.0])
        self.assertEqual(len(gaussint.empty_faces(slab, 1, 1000, SEED)), 2)
        self.assertEqual(gaussint.empty_faces(poly.orthant(2), 1, 1000, SEED), [])

    def test_deterministic(self):
        first = gaussint.facet_surface_integral(poly.orthant(3), 1, None, 5000, SEED)
        second = gaussint.facet_surface_integral(poly.orthant(3), 1, None, 5000, SEED)
        self.assertEqual(first, second)


class DivergenceTestCase(SimpleTestCase):
    """Face decompositions of derivative integrals against closed forms and the volume oracle."""

    def test_grad_orthant(self):
        estimate = gaussint.grad_integral(poly.orthant(2), [1.0, 1.0], None, 1000, SEED)
        self.assertAlmostEqual(estimate.value, PHI0)

    def test_hessian_half_space(self):
        """int_{x <= b} phi'' = -b phi(b)."""
        b = 0.5
        half = poly.half_space(3, 0, b)
        coeff = DerivativeCoefficient.rank_one([1.0, 0.0, 0.0], [1.0, 0.0, 0.0])
        estimate = gaussint.derivative_integral(half, coeff, None, 1000, SEED)
        self.assertAlmostEqual(estimate.value, -b * norm.pdf(b))
        oracle = gaussint.volume_integral_oracle(half, coeff, None, 60000, SEED)
        within(self, oracle, -b * norm.pdf(b))

    def test_hessian_orthant_cross_term(self):
        """The mixed second derivative over the quadrant is 2 phi(0)^2 = 1/pi."""
        matrix = np.array([[0.0, 1.0], [1.0, 0.0]])
        estimate = gaussint.hessian_integral(poly.orthant(2), matrix, 1000, SEED)
        self.assertAlmostEqual(estimate.value, 1.0 / math.pi)

    def test_third_half_space(self):
        """int_{x <= b} phi''' = (b^2 - 1) phi(b)."""
        b = -0.7
        half = poly.half_space(3, 0, b)
        coeff = DerivativeCoefficient.rank_one(*[[1.0, 0.0, 0.0]] * 3)
        expected = (b * b - 1.0) * norm.pdf(b)
        self.assertAlmostEqual(gaussint.derivative_integral(half, coeff, None, 1000, SEED).value, expected)
        within(self, gaussint.volume_integral_oracle(half, coeff, None, 100000, SEED), expected)

    def test_third_orthant_corner(self):
        """d_1 d_2 d_3 phi over the octant is phi(0)^3, all from the corner."""
        tensor = np.zeros((3, 3, 3))
        for perm in ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)):
            tensor[perm] = 1.0 / 6.0
        estimate = gaussint.third_integral(poly.orthant(3), tensor, 1000, SEED)
        self.assertAlmostEqual(estimate.value, PHI0 ** 3)

    def test_shifted_matches_oracle(self):
        """A random polytope, a random shift and a sampled residual."""
        rng = np.random.default_rng(5)
        polytope = poly.random_polytope(3, rng, n_constraints=4, offset_range=(0.5, 1.5))
        u = gaussint.random_unit(3, rng)
        x = 0.3 * rng.standard_normal(3)
        decomposed = gaussint.shifted_grad_integral(polytope, u, x, 40000, SEED)
        oracle = gaussint.volume_integral_oracle(polytope, DerivativeCoefficient(1, u), x, 80000, SEED)
        gap = abs(decomposed.value - oracle.value)
        self.assertLessEqual(gap, 4.0 * math.hypot(decomposed.stderr, oracle.stderr) + 1e-9)

    def test_random_polytopes_match_oracle(self):
        """Orders 1 to 3 on non-orthogonal polytopes with nonzero offsets, several seeds."""
        for seed in (11, 12, 13):
            rng = np.random.default_rng(seed)
            polytope = poly.regularize(
                poly.random_polytope(3, rng, n_constraints=5, offset_range=(0.3, 1.5)), rng, 1e-7)
            matrix = rng.standard_normal((3, 3))
            coefficients = (
                DerivativeCoefficient(1, gaussint.random_unit(3, rng)),
                DerivativeCoefficient(2, (matrix + matrix.T) / 2.0),
                DerivativeCoefficient(3, gaussint.random_symmetric_tensor(3, rng)),
            )
            for coeff in coefficients:
                with self.subTest(seed=seed, order=coeff.order):
                    decomposed = gaussint.derivative_integral(polytope, coeff, None, 40000, SEED)
                    oracle = gaussint.volume_integral_oracle(polytope, coeff, None, 200000, SEED)
                    gap = abs(decomposed.value - oracle.value)
                    self.assertLessEqual(gap, 4.0 * math.hypot(decomposed.stderr, oracle.stderr) + 1e-9)


class RareRegionTestCase(SimpleTestCase):
    """Estimates over polytopes that almost no sample reaches."""

    def setUp(self):
        """Set up {x_i >= 4} in R^3, Gaussian mass about 3e-14."""
        self.far = poly.Polytope(normals=-np.eye(3), offsets=np.full(3, -4.0))

    def test_oracle_stderr_floor(self):
        coeff = DerivativeCoefficient(2, np.eye(3))
        oracle = gaussint.volume_integral_oracle(self.far, coeff, None, 20000, SEED)
        self.assertEqual(oracle.value, 0.0)
        self.assertGreaterEqual(oracle.stderr, gaussint.RULE_OF_THREE * 3.0 / 20000)

    def test_sampled_face_stderr_floor(self):
        estimate = gaussint.facet_surface_integral(self.far, 0, None, 20000, SEED)
        density = norm.pdf(4.0)
        self.assertEqual(estimate.value, 0.0)
        self.assertAlmostEqual(estimate.stderr, density * gaussint.RULE_OF_THREE / 20000)

    def test_identity_is_not_failed_by_an_empty_oracle(self):
        """A nonzero decomposition against an oracle with no hits stays within tolerance."""
        suite = suites.Suite(SEED, 20000)
        coeff = DerivativeCoefficient(2, np.eye(3))
        oracle = gaussint.volume_integral_oracle(self.far, coeff, None, 20000, SEED)
        decomposed = McEstimate(2.21e-5, 2.9e-6, 20000, SEED)
        self.assertEqual(suite.identity('divergence-2/#0', decomposed, oracle, SEED).verdict, 'pass')


class RegionMeasureTestCase(SimpleTestCase):
    """Direct sampling of polytopes, bands and cones."""

    def test_quadrant(self):
        estimate = gaussint.mc_region_measure(poly.orthant(2), None, 20000, SEED)
        within(self, estimate, 0.25)

    def test_band(self):
        band = gaussint.Band(poly.half_space(2, 0, 0.0), 0.5)
        estimate = gaussint.mc_region_measure(band, None, 20000, SEED)
        within(self, estimate, norm.cdf(0.5) - norm.cdf(-0.5))

    def test_cone(self):
        cone = gaussint.Cone(poly.orthant(3), FacetIndex.of(0))
        within(self, gaussint.mc_region_measure(cone, None, 20000, SEED), 0.125)

    def test_minimum_sample_count(self):
        estimate = gaussint.mc_region_measure(poly.orthant(2), None, 10, SEED)
        self.assertEqual(estimate.n_samples, gaussint.MIN_REGION_SAMPLES)

    def test_unsupported_region(self):
        with self.assertRaises(TypeError):
            gaussint.region_contains(object(), np.zeros((1, 2)))


class BoundRhsTestCase(SimpleTestCase):
    """Right-hand sides with unit constants."""

    def setUp(self):
        """Set up the octant."""
        self.orthant = poly.orthant(3)

    def test_order_one(self):
        rhs = gaussint.aht_bound_rhs(1, self.orthant, DerivativeCoefficient(1, [1.0, 0.0, 0.0]))
        self.assertAlmostEqual(rhs, math.sqrt(math.log(3)))

    def test_order_two(self):
        matrix = np.eye(3)
        # |v_j'Mv_j| + 0 + |v_jk'Mv_jk| = 2
        self.assertAlmostEqual(gaussint.aht_bound_rhs(2, self.orthant, matrix), 2.0 * math.log(3))

    def test_order_three_needs_angles(self):
        tensor = gaussint.random_symmetric_tensor(3, np.random.default_rng(0))
        with self.assertRaises(ZeroAngle):
            gaussint.aht_bound_rhs(3, self.orthant, tensor)
        with self.assertRaises(ZeroAngle):
            gaussint.aht_bound_rhs(3, self.orthant, tensor, 0.0, 1.0)
        rhs = gaussint.aht_bound_rhs(3, self.orthant, tensor, math.pi / 2, math.pi / 2)
        self.assertGreater(rhs, 0.0)
        with self.assertRaises(ValueError):
            gaussint.aht_bound_rhs(4, self.orthant, tensor)

    def test_vanish(self):
        self.assertAlmostEqual(gaussint.vanish_bound_rhs(self.orthant, 2.0, [1.0, 0.0, 0.0]),
                               3.0 * norm.pdf(2.0))
        triple = ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0])
        self.assertAlmostEqual(gaussint.vanish_bound_rhs(self.orthant, 2.0, triple), 27.0 * math.exp(-1.0))
        with self.assertRaises(ValueError):
            gaussint.vanish_bound_rhs(self.orthant, 0.0, [1.0, 0.0, 0.0])

    def test_symmetric_tensor(self):
        tensor = gaussint.random_symmetric_tensor(4, np.random.default_rng(2))
        np.testing.assert_allclose(tensor, np.transpose(tensor, (1, 0, 2)))
        np.testing.assert_allclose(tensor, np.transpose(tensor, (2, 1, 0)))


class EmpiricalCheckTestCase(SimpleTestCase):
    """Anti-concentration, corner and disjointness checks."""

    def test_nazarov_band(self):
        """Independent coordinates at b = 0: Phi(eps)^3 - 1/8."""
        eps = 0.1
        lhs, rhs = gaussint.nazarov_check(np.eye(3), np.zeros(3), eps, 50000, SEED)
        within(self, lhs, norm.cdf(eps) ** 3 - 0.125)
        self.assertAlmostEqual(rhs, eps * (math.sqrt(2.0 * math.log(3)) + 2.0))
        self.assertLess(lhs.value, rhs)

    def test_nazarov_scales(self):
        _, rhs = gaussint.nazarov_check(np.eye(3), np.zeros(3), 0.1, 1000, SEED)
        _, scaled = gaussint.nazarov_check(np.eye(3), np.zeros(3), 0.1, 1000, SEED, scales=[2.0, 2.0, 2.0])
        self.assertAlmostEqual(scaled, rhs / 2.0)

    def test_nazarov_zero_eps(self):
        lhs, rhs = gaussint.nazarov_check(np.eye(3), np.zeros(3), 0.0, 1000, SEED)
        self.assertEqual((lhs.value, rhs), (0.0, 0.0))

    def test_corner(self):
        lhs, rhs = gaussint.corner_cone_inequality_check(poly.orthant(3), (0, 1, 2), math.pi / 2, math.pi / 2,
                                                         20000, SEED)
        self.assertAlmostEqual(lhs.value, PHI0 ** 3)
        self.assertGreater(rhs.value, 0.0)

    def test_far_corner_is_skipped(self):
        far = poly.Polytope(normals=np.eye(3), offsets=[5.0, 5.0, 5.0])
        self.assertIsNone(gaussint.corner_cone_inequality_check(far, (0, 1, 2), 1.0, 1.0, 1000, SEED))

    def test_disjointness(self):
        """Octant cones never overlap and their measures add up per level."""
        report = gaussint.cone_disjointness_check(poly.orthant(3), 20000, SEED)
        self.assertEqual([report[level]['faces'] for level in (1, 2, 3)], [3, 3, 1])
        for level, expected in ((1, 0.375), (2, 0.375), (3, 0.125)):
            self.assertEqual(report[level]['violations'], 0)
            self.assertAlmostEqual(report[level]['measure_sum'], expected, delta=0.02)
