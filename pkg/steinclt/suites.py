"""
Verification suites behind ``verify_lemmas`` and ``compare_gaussians``.

Every check becomes a CheckRecord with a verdict:

* pass / fail from the check's own criterion,
* inconclusive when the criterion fails but the Monte Carlo stderr is too
  wide to call it,
* error when the check raised; the suite logs it and carries on.

Hard checks (exact identities) decide the exit code; the inequality and
budget checks are reported only.
"""
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
from django.conf import settings
from scipy import linalg
from scipy.stats import norm

from . import corr, experiment, gaussint, stein
from . import polytope as poly
from .bounds import gauss_comparison_bound
from .exceptions import SteinCLTError, ZeroAngle
from .gaussint import DerivativeCoefficient
from .utils import derive_seed, substream


logger = logging.getLogger(__name__)

ORTHANT_GRAD = norm.pdf(0.0) / 4.0
ORTHANT_HESSIAN = norm.pdf(0.0) ** 2 / 2.0
ORTHANT_THIRD = norm.pdf(0.0) ** 3
NAZAROV_EPS = (0.01, 0.05, 0.1)
VANISH_KAPPAS = (1.0, 2.0, 3.0)
VANISH_NOTE = 'assumed constant C=1'
ALGEBRA_TOL = 1e-9
REGULARIZE_EPS = 1e-7
MIN_INSTANCE_MASS = 1e-3
MASS_SAMPLES = 20000
MAX_REDRAWS = 50
GAUSS_C_USER = 10.0
STEIN_RESIDUAL_TOL = 5e-3


@dataclass
class CheckRecord:
    check_id: str
    lhs: float
    lhs_stderr: float
    rhs: float
    ratio: float
    n_samples: int
    seed: int
    verdict: str
    hard: bool = False
    note: str = ''

    def as_dict(self):
        return asdict(self)


class Suite:
    """Collects check records and applies the tolerance policy from settings.STEINCLT."""

    def __init__(self, seed, samples):
        options = settings.STEINCLT
        self.seed = int(seed)
        self.samples = int(samples)
        self.multiplier = float(options['STDERR_MULTIPLIER'])
        self.inconclusive_stderr = float(options['INCONCLUSIVE_STDERR'])
        self.budget = float(options['C_EMP_BUDGET'])
        self.records = []

    def _widen(self, ok, stderr):
        if ok:
            return 'pass'
        return 'inconclusive' if stderr > self.inconclusive_stderr else 'fail'

    def identity(self, check_id, lhs, rhs, seed, hard=True, tol=None):
        """|lhs - rhs| within multiplier * stderr (or an absolute ``tol``)."""
        gap = abs(lhs.value - rhs.value)
        stderr = math.hypot(lhs.stderr, rhs.stderr)
        limit = tol if tol is not None else self.multiplier * stderr + 1e-12
        ratio = gap / stderr if stderr > 0 else (0.0 if gap <= limit else math.inf)
        verdict = 'pass' if gap <= limit else ('fail' if tol is not None else self._widen(False, stderr))
        return self._add(check_id, lhs.value, stderr, rhs.value, ratio, lhs.n_samples, seed, verdict, hard)

    def inequality(self, check_id, lhs, rhs, seed, hard=False, note=''):
        """lhs <= rhs + multiplier * stderr."""
        ok = lhs.value <= rhs + self.multiplier * lhs.stderr
        ratio = lhs.value / rhs if rhs > 0 else (0.0 if lhs.value <= 0 else math.inf)
        return self._add(check_id, lhs.value, lhs.stderr, rhs, ratio, lhs.n_samples, seed,
                         self._widen(ok, lhs.stderr), hard, note)

    def budget_check(self, check_id, lhs, rhs, seed):
        """|lhs| / rhs against the empirical-constant budget."""
        if math.isinf(rhs):
            ratio = 0.0
        elif rhs > 0:
            ratio = abs(lhs.value) / rhs
        else:
            ratio = 0.0 if abs(lhs.value) <= self.multiplier * lhs.stderr else math.inf
        verdict = 'pass' if ratio <= self.budget else self._widen(False, lhs.stderr)
        return self._add(check_id, lhs.value, lhs.stderr, rhs, ratio, lhs.n_samples, seed, verdict, False)

    def _add(self, check_id, lhs, stderr, rhs, ratio, n_samples, seed, verdict, hard, note=''):
        record = CheckRecord(check_id, float(lhs), float(stderr), float(rhs), float(ratio),
                             int(n_samples), int(seed), verdict, hard, note)
        self.records.append(record)
        if verdict != 'pass':
            logger.warning("Check %s: %s (lhs=%.6g, rhs=%.6g)", check_id, verdict, lhs, rhs)
        return record

    def run(self, check_id, seed, func, hard=False):
        """Call ``func(seed)``; an exception becomes an 'error' record."""
        try:
            return func(seed)
        except (SteinCLTError, ValueError, linalg.LinAlgError) as exc:
            logger.exception("Check %s raised %s", check_id, type(exc).__name__)
            return self._add(check_id, math.nan, math.nan, math.nan, math.nan, 0, seed, 'error', hard)

    @property
    def hard_failures(self):
        return [r for r in self.records if r.hard and r.verdict in ('fail', 'error')]

    def verdict(self):
        if self.hard_failures:
            return 'fail'
        if any(r.verdict in ('fail', 'inconclusive', 'error') for r in self.records):
            return 'inconclusive'
        return 'pass'

    def constants(self):
        """Largest finite ratio per check family (the prefix of check_id before '/')."""
        table = {}
        for record in self.records:
            family = record.check_id.split('/')[0]
            if math.isfinite(record.ratio):
                table[family] = max(table.get(family, 0.0), record.ratio)
        return table

    def counts(self):
        table = {}
        for record in self.records:
            table[record.verdict] = table.get(record.verdict, 0) + 1
        return table

    def summary(self):
        return {
            'verdict': self.verdict(),
            'counts': self.counts(),
            'empirical_constants': self.constants(),
            'budget': self.budget,
            'notes': {r.check_id.split('/')[0]: r.note for r in self.records if r.note},
        }


def _orthant_checks(suite):
    # the closed forms are for the octant in R^3
    orthant = poly.orthant(3)
    e = np.eye(orthant.dim)
    n = suite.samples
    exact = lambda value: gaussint.McEstimate(value, 0.0, n, suite.seed)
    suite.run('orthant/grad', suite.seed, lambda s: suite.identity(
        'orthant/grad', gaussint.grad_integral(orthant, e[0], None, n, s), exact(ORTHANT_GRAD), s))
    suite.run('orthant/hessian', suite.seed, lambda s: suite.identity(
        'orthant/hessian', gaussint.hessian_integral(orthant, np.outer(e[0], e[1]), n, s),
        exact(ORTHANT_HESSIAN), s))
    tensor = DerivativeCoefficient.rank_one(e[0], e[1], e[2]).data
    suite.run('orthant/third', suite.seed, lambda s: suite.identity(
        'orthant/third', gaussint.third_integral(orthant, tensor, n, s), exact(ORTHANT_THIRD), s))


def _random_coefficients(d, rng):
    matrix = rng.standard_normal((d, d))
    return (
        DerivativeCoefficient(1, gaussint.random_unit(d, rng)),
        DerivativeCoefficient(2, (matrix + matrix.T) / 2.0),
        DerivativeCoefficient(3, gaussint.random_symmetric_tensor(d, rng)),
    )


def _outside_band(polytope, kappa, rng, count):
    """Points away from the kappa-band: either inside A(-kappa) or outside A(kappa)."""
    points = []
    for _ in range(200 * count):
        x = 3.0 * rng.standard_normal(polytope.dim)
        if not poly.band_contains(polytope, kappa, x):
            points.append(x)
            if len(points) == count:
                break
    return points


def _instance_polytope(d, rng, seed):
    """A random regularized polytope, redrawn while its Gaussian mass is below MIN_INSTANCE_MASS."""
    for attempt in range(MAX_REDRAWS):
        polytope = poly.regularize(poly.random_polytope(d, rng, n_constraints=d + 2), rng, REGULARIZE_EPS)
        mass = gaussint.mc_region_measure(polytope, None, MASS_SAMPLES, derive_seed(seed, 'mass', attempt))
        if mass.value >= MIN_INSTANCE_MASS:
            return polytope
        logger.debug("Redrawing polytope with Gaussian mass %.2g", mass.value)
    logger.warning("No polytope with mass >= %g after %d draws", MIN_INSTANCE_MASS, MAX_REDRAWS)
    return polytope


def _instance_checks(suite, index, d, points, polytope=None):
    seed = derive_seed(suite.seed, 'instance', index)
    rng = substream(seed, 'geometry')
    if polytope is None:
        polytope = _instance_polytope(d, rng, seed)
    else:
        polytope = poly.regularize(polytope, rng, REGULARIZE_EPS)
    n = suite.samples
    tag = f"#{index}"
    coefficients = _random_coefficients(d, rng)

    for coeff in coefficients:
        check_id = f"divergence-{coeff.order}/{tag}"
        suite.run(check_id, seed, lambda s, c=coeff, cid=check_id: suite.identity(
            cid, gaussint.derivative_integral(polytope, c, None, n, s),
            gaussint.volume_integral_oracle(polytope, c, None, n, derive_seed(s, 'oracle')), s))

    def disjoint(s):
        report = gaussint.cone_disjointness_check(polytope, min(n, 100000), s)
        violations = sum(level['violations'] for level in report.values())
        estimate = gaussint.McEstimate(float(violations), 0.0, min(n, 100000), s)
        return suite.identity(f"disjointness/{tag}", estimate, gaussint.McEstimate(0.0, 0.0, 0, s), s, tol=0.5)
    suite.run(f"disjointness/{tag}", seed, disjoint, hard=True)

    try:
        alpha_angle, beta_angle = corr.min_angles(polytope.normals[list(polytope.finite)])
    except SteinCLTError:
        alpha_angle = beta_angle = 0.0
    for coeff in coefficients:
        check_id = f"aht-{coeff.order}/{tag}"

        def aht(s, c=coeff, cid=check_id):
            lhs = gaussint.derivative_integral(polytope, c, None, n, s)
            try:
                rhs = gaussint.aht_bound_rhs(c.order, polytope, c, alpha_angle, beta_angle)
            except ZeroAngle:
                logger.warning("Zero angle floor for %s; bound is infinite", cid)
                rhs = math.inf
            return suite.budget_check(cid, lhs, rhs, s)
        suite.run(check_id, seed, aht)

    for kappa in VANISH_KAPPAS:
        for p, x in enumerate(_outside_band(polytope, kappa, rng, points)):
            u = gaussint.random_unit(d, rng)
            check_id = f"vanish-1/{tag}/k{kappa:g}/{p}"
            suite.run(check_id, seed, lambda s, x=x, u=u, k=kappa, cid=check_id: suite.inequality(
                cid, _absolute(gaussint.shifted_grad_integral(polytope, u, x, n, s)),
                gaussint.vanish_bound_rhs(polytope, k, u), s, note=VANISH_NOTE))
            triple = [gaussint.random_unit(d, rng) for _ in range(3)]
            check_id = f"vanish-3/{tag}/k{kappa:g}/{p}"
            suite.run(check_id, seed, lambda s, x=x, t=triple, k=kappa, cid=check_id: suite.budget_check(
                cid, gaussint.shifted_third_integral(polytope, DerivativeCoefficient.rank_one(*t).data, x, n, s),
                gaussint.vanish_bound_rhs(polytope, k, tuple(t)), s))

    frame = corr.unit_frame(corr.validate_and_normalize(corr.random_correlation(d, rng)))
    b = rng.uniform(-1.0, 1.0, size=d)
    for eps in NAZAROV_EPS:
        check_id = f"nazarov/{tag}/e{eps:g}"

        def nazarov(s, e=eps, cid=check_id):
            lhs, rhs = gaussint.nazarov_check(frame, b, e, n, s)
            return suite.inequality(cid, lhs, rhs, s)
        suite.run(check_id, seed, nazarov)

    for facet in polytope.faces(3):
        check_id = f"corner/{tag}/{'-'.join(map(str, facet.indices))}"

        def corner(s, f=facet, cid=check_id):
            if alpha_angle <= 0 or beta_angle <= 0:
                raise ZeroAngle("angle floors vanish")
            result = gaussint.corner_cone_inequality_check(polytope, f.indices, alpha_angle, beta_angle, n, s)
            if result is None:
                return None
            lhs, rhs = result
            return suite.budget_check(cid, lhs, rhs.value, s)
        suite.run(check_id, seed, corner)

    sigma1, sigma = _comparison_pair(d, rng, rng.uniform(1e-3, 1e-1))
    suite.run(f"eps-algebra/{tag}", seed, lambda s: _algebra_checks(suite, tag, sigma1, sigma, s), hard=True)


def _absolute(estimate):
    return gaussint.McEstimate(abs(estimate.value), estimate.stderr, estimate.n_samples, estimate.seed)


def _algebra_checks(suite, tag, sigma1, sigma, seed):
    terms = stein.gauss_delta_terms(sigma1, sigma)
    zero = gaussint.McEstimate(0.0, 0.0, 0, seed)
    suite.identity(f"eps-algebra/{tag}", gaussint.McEstimate(terms.discrepancy, 0.0, 0, seed), zero, seed,
                   tol=ALGEBRA_TOL)
    frame = corr.unit_frame(corr.validate_and_normalize(sigma))
    kernel = stein.kernel_delta([stein.KernelSample(terms.kernel)], frame)
    gap = gaussint.McEstimate(abs(kernel - terms.delta_max), 0.0, 0, seed)
    return suite.identity(f"kernel-delta/{tag}", gap, zero, seed, tol=ALGEBRA_TOL)


def _stein_checks(suite, index, d, quad_spec, polytope=None):
    seed = derive_seed(suite.seed, 'stein', index)
    rng = substream(seed, 'geometry')
    if polytope is None:
        polytope = poly.random_polytope(d, rng)
    for t in (0.5, 1.0):
        w = rng.uniform(-1.0, 1.0, size=d)
        check_id = f"stein-residual/#{index}/t{t:g}"
        suite.run(check_id, seed, lambda s, t=t, w=w, cid=check_id: suite.inequality(
            cid, _absolute(stein.stein_residual(polytope, t, w, quad_spec, suite.samples, s)),
            STEIN_RESIDUAL_TOL, s))


def verify_lemmas(d, suite_size, samples, seed, points=5, with_stein=False, quad_spec=None, polytope=None):
    """
    Randomized checks of the surface-integral identities and inequalities.

    Args:
        d: dimension, 3 <= d <= 10
        suite_size: number of random polytopes
        samples: Monte Carlo samples per term
        seed: master seed
        points: out-of-band points per kappa for the vanishing checks
        with_stein: also run Stein-equation residuals (d <= 4)
        quad_spec: s-quadrature for the Stein residuals
        polytope: check this polytope in every instance instead of random
            draws; d must equal its dimension

    Returns:
        Suite with its records
    """
    if not 3 <= d <= 10:
        raise ValueError(f"d must lie in [3, 10], got {d}")
    if polytope is not None and polytope.dim != d:
        raise ValueError(f"polytope has dimension {polytope.dim}, expected d={d}")
    suite = Suite(seed, samples)
    _orthant_checks(suite)
    for index in range(int(suite_size)):
        logger.info("Instance %d/%d", index + 1, suite_size)
        _instance_checks(suite, index, d, points, polytope)
        if with_stein and d <= stein.MAX_RESIDUAL_DIM:
            _stein_checks(suite, index, d, quad_spec, polytope)
    return suite


def _comparison_pair(d, rng, delta_inf, sigma=None):
    """(Sigma1, Sigma) with Sigma1 = (1 - lam) Sigma + lam I and ||Sigma1 - Sigma||_inf = delta_inf."""
    if sigma is None:
        sigma = corr.random_correlation(d, rng, alpha_floor=0.5)
    off = float(np.max(np.abs(sigma[~np.eye(d, dtype=bool)])))
    lam = min(delta_inf / off, 1.0) if off > 0 else 0.0
    sigma1 = (1.0 - lam) * sigma + lam * np.eye(d)
    return sigma1, sigma


def compare_gaussians(d, pairs, samples, seed, c_user=GAUSS_C_USER, delta_range=(1e-3, 1e-1),
                      polytope=None):
    """
    Sweep Delta_inf over a geometric grid for one base Sigma: per pair the
    eps-algebra identities, the empirical rho_hat(Z1, Z2) with Z_i = L_i zeta
    on common zeta, and the comparison bound with constant ``c_user``.

    A ``polytope`` replaces the rectangle family by that single test set.
    """
    if polytope is not None and polytope.dim != d:
        raise ValueError(f"polytope has dimension {polytope.dim}, expected d={d}")
    suite = Suite(seed, samples)
    rng = substream(seed, 'compare')
    sigma = corr.random_correlation(d, rng, alpha_floor=0.5)
    model = corr.validate_and_normalize(sigma)
    if polytope is None:
        family = experiment.default_family(experiment.DataModel(model), seed)
    else:
        family = [polytope]
    rows = []
    for index, target in enumerate(np.geomspace(delta_range[0], delta_range[1], int(pairs))):
        tag = f"#{index}"
        pair_seed = derive_seed(seed, 'pair', index)
        sigma1, _ = _comparison_pair(d, rng, float(target), sigma=sigma)
        suite.run(f"eps-algebra/{tag}", pair_seed,
                  lambda s: _algebra_checks(suite, tag, sigma1, sigma, s), hard=True)
        delta_inf = float(np.max(np.abs(sigma1 - sigma)))
        estimate = experiment.rho_estimate(
            experiment.gaussian_sampler(sigma1), experiment.gaussian_sampler(model),
            family, samples, samples, pair_seed)
        bound = gauss_comparison_bound(delta_inf, d, model.alpha_sq, c_user)
        lhs = gaussint.McEstimate(estimate.rho_hat, estimate.stderr_at_argmax, int(samples), pair_seed)
        suite.inequality(f"gauss-bound/{tag}", lhs, bound, pair_seed)
        rows.append({'delta_inf': delta_inf, 'rho_hat': estimate.rho_hat,
                     'stderr': estimate.stderr_at_argmax, 'bound': bound})

    monotone = all(later['rho_hat'] >= earlier['rho_hat'] - 2.0 * max(earlier['stderr'], later['stderr'])
                   for earlier, later in zip(rows, rows[1:]))
    if not monotone:
        logger.warning("rho_hat is not monotone in Delta_inf beyond 2 stderr")
    return suite, {
        'rows': rows,
        'monotone': monotone,
        'c_user': c_user,
        'alpha_sq': model.alpha_sq,
        'family_size': len(family),
    }
