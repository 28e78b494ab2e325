"""
Gaussian measures and surface integrals over polytopes and cones.

Surface integrals factor exactly along the face normals: on the affine hull
of a face with min-norm point c, phi_d(z) = (2 pi)^{-m/2} exp(-|c|^2/2)
phi_{d-m}(zeta), so only the probability that the lifted residual Gaussian
satisfies the remaining constraints is sampled. Residual dimension 1 is done
in closed form, residual dimension 0 is an indicator.

The divergence theorem turns integrals of <coeff, nabla^r phi_d> over A into
weighted sums of face integrals:

* order 1: sum_j (u . v_j) int_{F_j} phi
* order 2: facet terms (v_j' M v_j)(-b_j) int_{F_j} phi and ridge terms
  (v_j' M v_jk) int_{F_jk} phi
* order 3: with M_j = T(v_j, ., .), facet terms (v_j' M_j v_j)(b_j^2 - 1),
  ridge terms -b_j v_jk'(M_j + M_j')v_j and -c_jk (v_jk' M_j v_jk), corner
  terms v_jk' M_j v_jkl int_{F_jkl} phi

where b_j and c_jk = v_jk . x_jk are the affine-hull coordinates after
recentering at the shift.
"""
import itertools
import logging
import math
from dataclasses import dataclass
from functools import singledispatch

import numpy as np
from scipy import linalg
from scipy.stats import norm

from . import polytope as poly
from .exceptions import InfiniteOffset, MissingTripleNormal, ZeroAngle
from .polytope import FacetIndex, Polytope
from .utils import chunks, substream


logger = logging.getLogger(__name__)

MIN_REGION_SAMPLES = 1000
COEFF_TOL = 1e-15
POINT_TOL = 1e-9
RULE_OF_THREE = 3.0


@dataclass(frozen=True)
class McEstimate:
    """A Monte Carlo value with its standard error and provenance."""
    value: float
    stderr: float
    n_samples: int
    seed: int

    def as_dict(self):
        return {
            'value': self.value,
            'stderr': self.stderr,
            'n_samples': self.n_samples,
            'seed': self.seed,
        }

    def scaled(self, factor):
        return McEstimate(self.value * factor, abs(factor) * self.stderr, self.n_samples, self.seed)


def combine(terms, seed):
    """Weighted sum of independent estimates; stderr in quadrature."""
    value = 0.0
    variance = 0.0
    samples = 0
    for weight, estimate in terms:
        value += weight * estimate.value
        variance += (weight * estimate.stderr) ** 2
        samples += estimate.n_samples
    return McEstimate(float(value), math.sqrt(variance), samples, int(seed))


@dataclass(frozen=True)
class DerivativeCoefficient:
    """u (order 1), M (order 2) or T (order 3)."""
    order: int
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if self.order not in (1, 2, 3) or data.ndim != self.order:
            raise ValueError(f"order {self.order} needs a {self.order}-way array, got shape {data.shape}")
        if len(set(data.shape)) != 1:
            raise ValueError(f"all axes must have the same length, got {data.shape}")
        object.__setattr__(self, 'data', data)

    @property
    def dim(self):
        return self.data.shape[0]

    @classmethod
    def rank_one(cls, *vectors):
        """u_1 (x) ... (x) u_r."""
        data = np.asarray(vectors[0], dtype=float)
        for vector in vectors[1:]:
            data = np.multiply.outer(data, np.asarray(vector, dtype=float))
        return cls(order=len(vectors), data=data)


# Regions for mc_region_measure

@dataclass(frozen=True)
class Band:
    polytope: Polytope
    kappa: float


@dataclass(frozen=True)
class Cone:
    polytope: Polytope
    facet: FacetIndex


@dataclass(frozen=True)
class Wedge:
    polytope: Polytope
    facet: FacetIndex
    directions: tuple


@singledispatch
def region_contains(region, points):
    raise TypeError(f"unsupported region {type(region).__name__}")


@region_contains.register
def _(region: Polytope, points):
    return poly.contains(region, points)


@region_contains.register
def _(region: Band, points):
    return poly.band_contains(region.polytope, region.kappa, points)


@region_contains.register
def _(region: Cone, points):
    return poly.outer_cone_membership(region.polytope, region.facet, points)


@region_contains.register
def _(region: Wedge, points):
    return poly.wedge_cone_membership(region.polytope, region.facet, np.asarray(region.directions), points)


def _region_dim(region):
    return region.dim if isinstance(region, Polytope) else region.polytope.dim


def mc_region_measure(region, shift, n, seed):
    """P(Z + shift in region), Z ~ N(0, I_d), by direct sampling."""
    n = max(int(n), MIN_REGION_SAMPLES)
    d = _region_dim(region)
    shift = np.zeros(d) if shift is None else np.asarray(shift, dtype=float)
    rng = substream(seed, 'region')
    hits = 0
    for size in chunks(n):
        points = rng.standard_normal((size, d)) + shift
        hits += int(np.count_nonzero(region_contains(region, points)))
    p = hits / n
    return McEstimate(p, math.sqrt(p * (1.0 - p) / n), n, int(seed))


# Face integrals

def _recentered_offsets(polytope, shift):
    if shift is None:
        return np.array(polytope.offsets)
    return polytope.offsets - polytope.normals @ np.asarray(shift, dtype=float)


def _face_integral(polytope, indices, offsets, n, rng, seed):
    """int_{F} phi_d dH^{d-m} for the face on ``indices`` of {x : V x <= offsets}."""
    indices = list(indices)
    normals = polytope.normals
    rows = normals[indices]
    gram = rows @ rows.T
    poly._check_gram(gram)
    point = rows.T @ np.linalg.solve(gram, offsets[indices])
    m = len(indices)
    density = (2.0 * math.pi) ** (-m / 2.0) * math.exp(-0.5 * float(point @ point))

    others = [j for j in range(polytope.n_constraints) if j not in indices and np.isfinite(offsets[j])]
    basis = linalg.null_space(rows)
    k = basis.shape[1]
    if not others:
        return McEstimate(density, 0.0, n, seed)
    slack = offsets[others] - normals[others] @ point
    proj = normals[others] @ basis

    if k == 0:
        inside = bool(np.all(slack >= -POINT_TOL))
        return McEstimate(density if inside else 0.0, 0.0, n, seed)

    if k == 1:
        a = proj[:, 0]
        flat = np.abs(a) <= 1e-12
        if np.any(slack[flat] < 0):
            return McEstimate(0.0, 0.0, n, seed)
        upper = np.min(slack[a > 1e-12] / a[a > 1e-12]) if np.any(a > 1e-12) else np.inf
        lower = np.max(slack[a < -1e-12] / a[a < -1e-12]) if np.any(a < -1e-12) else -np.inf
        prob = max(0.0, float(norm.cdf(upper) - norm.cdf(lower))) if upper > lower else 0.0
        return McEstimate(density * prob, 0.0, n, seed)

    hits = 0
    for size in chunks(n):
        zeta = rng.standard_normal((size, k))
        hits += int(np.count_nonzero(np.all(zeta @ proj.T <= slack, axis=1)))
    p = hits / n
    spread = math.sqrt(p * (1.0 - p) / n) if hits else RULE_OF_THREE / n
    return McEstimate(density * p, density * spread, n, seed)


def face_integral(polytope, facet, shift, n, seed):
    """int_{F} phi_d(z - shift) over the face F indexed by ``facet``; one substream per face."""
    offsets = _recentered_offsets(polytope, shift)
    if not np.all(np.isfinite(offsets[list(facet.indices)])):
        raise InfiniteOffset(f"face {facet.indices} has an infinite offset")
    rng = substream(seed, facet.level, *facet.indices)
    return _face_integral(polytope, facet.indices, offsets, int(n), rng, int(seed))


def facet_surface_integral(polytope, j, shift, n, seed):
    """int_{F_j} phi_d(z - shift) dH^{d-1}."""
    return face_integral(polytope, FacetIndex.of(j), shift, n, seed)


def ridge_surface_integral(polytope, indices, n, seed, shift=None):
    """int_{F_jk} phi_d dH^{d-2} or int_{F_jkl} phi_d dH^{d-3}."""
    return face_integral(polytope, FacetIndex.of(*indices), shift, n, seed)


def _evaluate(polytope, coefficients, shift, n, seed):
    terms = []
    for facet, weight in sorted(coefficients.items(), key=lambda item: (item[0].level, item[0].indices)):
        if abs(weight) <= COEFF_TOL:
            continue
        terms.append((weight, face_integral(polytope, facet, shift, n, seed)))
    if not terms:
        return McEstimate(0.0, 0.0, int(n), int(seed))
    return combine(terms, seed)


def _add(coefficients, facet, weight):
    coefficients[facet] = coefficients.get(facet, 0.0) + float(weight)


def grad_coefficients(polytope, u):
    u = np.asarray(u, dtype=float)
    coefficients = {}
    for j in polytope.finite:
        _add(coefficients, FacetIndex.of(j), u @ polytope.normals[j])
    return coefficients


def hessian_coefficients(polytope, matrix, offsets):
    matrix = np.asarray(matrix, dtype=float)
    coefficients = {}
    pairs = polytope.derived.pair
    for j in polytope.finite:
        v_j = polytope.normals[j]
        _add(coefficients, FacetIndex.of(j), (v_j @ matrix @ v_j) * (-offsets[j]))
        for k in polytope.finite:
            if (j, k) in pairs:
                _add(coefficients, FacetIndex.of(j, k), v_j @ matrix @ pairs[(j, k)])
    return coefficients


def third_coefficients(polytope, tensor, offsets):
    tensor = np.asarray(tensor, dtype=float)
    coefficients = {}
    pairs = polytope.derived.pair
    for j in polytope.finite:
        v_j = polytope.normals[j]
        m_j = np.einsum('abc,a->bc', tensor, v_j)
        b_j = offsets[j]
        _add(coefficients, FacetIndex.of(j), (v_j @ m_j @ v_j) * (b_j * b_j - 1.0))
        for k in polytope.finite:
            if (j, k) not in pairs:
                continue
            v_jk = pairs[(j, k)]
            ridge = FacetIndex.of(j, k)
            rows = polytope.normals[[j, k]]
            point = rows.T @ np.linalg.solve(rows @ rows.T, offsets[[j, k]])
            c_jk = float(v_jk @ point)
            _add(coefficients, ridge, -b_j * (v_jk @ (m_j + m_j.T) @ v_j))
            _add(coefficients, ridge, -c_jk * (v_jk @ m_j @ v_jk))
            for l in polytope.finite:
                if l in (j, k):
                    continue
                corner = tuple(sorted((j, k, l)))
                if corner in polytope.derived.excluded_triples:
                    continue
                try:
                    v_jkl = poly.triple_normal(polytope, j, k, l)
                except KeyError as exc:
                    raise MissingTripleNormal(f"no v_jkl for {(j, k, l)}") from exc
                _add(coefficients, FacetIndex.of(j, k, l), v_jk @ m_j @ v_jkl)
    return coefficients


def grad_integral(polytope, u, shift, n, seed):
    """int_A <u, nabla phi_d(z - shift)> dz via the facet decomposition."""
    return _evaluate(polytope, grad_coefficients(polytope, u), shift, n, seed)


def hessian_integral(polytope, matrix, n, seed, shift=None):
    """int_A <M, nabla^2 phi_d(z - shift)> dz via facet and ridge terms."""
    offsets = _recentered_offsets(polytope, shift)
    return _evaluate(polytope, hessian_coefficients(polytope, matrix, offsets), shift, n, seed)


def third_integral(polytope, tensor, n, seed, shift=None):
    """int_A <T, nabla^3 phi_d(z - shift)> dz via facet, ridge and corner terms."""
    offsets = _recentered_offsets(polytope, shift)
    return _evaluate(polytope, third_coefficients(polytope, tensor, offsets), shift, n, seed)


def shifted_grad_integral(polytope, u, x, n, seed):
    return grad_integral(polytope, u, x, n, seed)


def shifted_third_integral(polytope, tensor, x, n, seed):
    return third_integral(polytope, tensor, n, seed, shift=x)


def derivative_integral(polytope, coeff, shift, n, seed):
    """Dispatch on the order of a DerivativeCoefficient."""
    if coeff.order == 1:
        return grad_integral(polytope, coeff.data, shift, n, seed)
    if coeff.order == 2:
        return hessian_integral(polytope, coeff.data, n, seed, shift=shift)
    return third_integral(polytope, coeff.data, n, seed, shift=shift)


def _hermite(coeff, z):
    data = coeff.data
    if coeff.order == 1:
        return -(z @ data)
    if coeff.order == 2:
        return np.einsum('ni,ij,nj->n', z, data, z) - np.trace(data)
    cubic = np.einsum('abc,na,nb,nc->n', data, z, z, z)
    # sum_abc T_abc (z_a delta_bc + z_b delta_ac + z_c delta_ab)
    linear = (z @ np.einsum('abb->a', data) + z @ np.einsum('aba->b', data)
              + z @ np.einsum('aab->b', data))
    return -(cubic - linear)


def volume_integral_oracle(polytope, coeff, shift, n, seed):
    """
    E[1_A(Z + shift) h(Z)] with h the Hermite form of the derivative contraction.

    When no sample lands in A the stderr is the rule-of-three bound
    3 max|h| / n instead of 0.
    """
    n = int(n)
    d = polytope.dim
    shift = np.zeros(d) if shift is None else np.asarray(shift, dtype=float)
    rng = substream(seed, 'oracle', coeff.order)
    total = 0.0
    total_sq = 0.0
    hits = 0
    peak = 0.0
    for size in chunks(n):
        z = rng.standard_normal((size, d))
        h = _hermite(coeff, z)
        inside = poly.contains(polytope, z + shift)
        values = np.where(inside, h, 0.0)
        total += float(values.sum())
        total_sq += float(values @ values)
        hits += int(np.count_nonzero(inside))
        peak = max(peak, float(np.max(np.abs(h))))
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0)
    stderr = math.sqrt(var / max(n - 1, 1))
    if hits == 0:
        stderr = RULE_OF_THREE * peak / n
        logger.debug("Oracle saw no hits in %d samples; stderr floor %.3g", n, stderr)
    return McEstimate(mean, stderr, n, int(seed))


# Bound right-hand sides (C = 1)

def _families(polytope):
    v1 = polytope.normals[list(polytope.finite)]
    pairs = list(polytope.derived.pair.values())
    triples = list(polytope.derived.triple.values())
    v2 = np.vstack([v1] + ([np.array(pairs)] if pairs else []))
    v3 = np.vstack([v2] + ([np.array(triples)] if triples else []))
    return v1, v2, v3


def aht_bound_rhs(order, polytope, coeff, alpha_angle=None, beta_angle=None):
    """
    Right-hand side of the derivative-integral bounds with C = 1:

    * order 1: sqrt(log d) max_j |u . v_j|
    * order 2: log d max_{j != k} (|v_j'Mv_j| + |v_j'Mv_jk| + |v_jk'Mv_jk|)
    * order 3: (log d)^{3/2} / (alpha beta) max |T(v1, v2, v3)| over
      v1 in V1, v2 in V1 u V2, v3 in V1 u V2 u V3
    """
    data = coeff.data if isinstance(coeff, DerivativeCoefficient) else np.asarray(coeff, dtype=float)
    log_d = math.log(polytope.dim)
    v1, v2, v3 = _families(polytope)
    if order == 1:
        return math.sqrt(log_d) * float(np.max(np.abs(v1 @ data)))
    if order == 2:
        pairs = polytope.derived.pair
        best = 0.0
        for (j, k), v_jk in pairs.items():
            v_j = polytope.normals[j]
            best = max(best, abs(v_j @ data @ v_j) + abs(v_j @ data @ v_jk) + abs(v_jk @ data @ v_jk))
        if not pairs:
            best = float(np.max(np.abs(np.einsum('ja,ab,jb->j', v1, data, v1))))
        return log_d * best
    if order == 3:
        if alpha_angle is None or beta_angle is None or alpha_angle <= 0 or beta_angle <= 0:
            raise ZeroAngle(f"angle floors must be positive, got {alpha_angle}, {beta_angle}")
        first = np.einsum('abc,ia->ibc', data, v1)
        best = 0.0
        for slab in first:
            best = max(best, float(np.max(np.abs(v2 @ slab @ v3.T))))
        return log_d ** 1.5 / (alpha_angle * beta_angle) * best
    raise ValueError(f"order must be 1, 2 or 3, got {order}")


def vanish_bound_rhs(polytope, kappa, coeff):
    """
    Out-of-band bound with C = 1: d phi_1(kappa) max |u . v| for a vector u,
    d^3 exp(-kappa^2/4) max |u1.v1||u2.v2||u3.v3| for a triple (u1, u2, u3).
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    d = polytope.dim
    v1, v2, v3 = _families(polytope)
    if isinstance(coeff, (tuple, list)) and len(coeff) == 3:
        u1, u2, u3 = (np.asarray(u, dtype=float) for u in coeff)
        best = (float(np.max(np.abs(v1 @ u1))) * float(np.max(np.abs(v2 @ u2)))
                * float(np.max(np.abs(v3 @ u3))))
        return d ** 3 * math.exp(-kappa * kappa / 4.0) * best
    u = coeff.data if isinstance(coeff, DerivativeCoefficient) else np.asarray(coeff, dtype=float)
    return d * float(norm.pdf(kappa)) * float(np.max(np.abs(v1 @ u)))


# Empirical checks

def nazarov_check(frame_normals, b, eps, n, seed, scales=None):
    """
    Band probability P(G . v_j <= b_j + eps for all j) - P(G . v_j <= b_j for all j)
    against eps (sqrt(2 log d) + 2), divided by the smallest scale when the
    coordinates have standard deviations ``scales``.

    Returns:
        (lhs McEstimate, rhs)
    """
    normals = np.asarray(getattr(frame_normals, 'normals', frame_normals), dtype=float)
    d = normals.shape[0]
    b = np.asarray(b, dtype=float)
    scales = np.ones(d) if scales is None else np.asarray(scales, dtype=float)
    floor = float(np.min(scales))
    rhs = eps * (math.sqrt(2.0 * math.log(d)) + 2.0) / floor
    if eps <= 0:
        return McEstimate(0.0, 0.0, int(n), int(seed)), rhs
    rng = substream(seed, 'nazarov')
    hits = 0
    for size in chunks(n):
        z = rng.standard_normal((size, normals.shape[1]))
        g = (z @ normals.T) * scales
        hits += int(np.count_nonzero(np.all(g <= b + eps, axis=1) & ~np.all(g <= b, axis=1)))
    p = hits / n
    return McEstimate(p, math.sqrt(p * (1.0 - p) / n), int(n), int(seed)), rhs


def corner_cone_inequality_check(polytope, indices, alpha_angle, beta_angle, n, seed):
    """
    int_{F_jkl} phi_d against (log d)^{3/2} / (alpha beta) gamma_d(S_jkl).

    Returns:
        (lhs, rhs) estimates, or None when dist(0, F_jkl) > sqrt(6 log d)
    """
    facet = FacetIndex.of(*indices)
    d = polytope.dim
    distance = float(np.linalg.norm(polytope.flat_point(facet.indices)))
    if distance > math.sqrt(6.0 * math.log(d)):
        logger.info("Corner %s at distance %.3f is outside the targeted regime; skipped", facet.indices, distance)
        return None
    lhs = ridge_surface_integral(polytope, facet.indices, n, seed)
    cone = mc_region_measure(Cone(polytope, facet), None, n, seed)
    rhs = cone.scaled(math.log(d) ** 1.5 / (alpha_angle * beta_angle))
    if rhs.value > 0:
        logger.debug("Corner %s ratio lhs/rhs = %.4f", facet.indices, lhs.value / rhs.value)
    return lhs, rhs


def cone_disjointness_check(polytope, n, seed, scale=2.0):
    """
    Count sampled points (N(0, scale^2 I)) lying in two cones of the same level.

    Returns:
        dict level -> {'violations', 'faces', 'measure_sum'} where measure_sum
        is the summed standard Gaussian measure estimate of that level's cones
    """
    rng = substream(seed, 'disjoint')
    points = scale * rng.standard_normal((int(n), polytope.dim))
    gaussian = substream(seed, 'disjoint', 'measure').standard_normal((int(n), polytope.dim))
    report = {}
    for level in (1, 2, 3):
        faces = polytope.faces(level) if level <= polytope.dim else []
        counts = np.zeros(int(n), dtype=int)
        measure = 0.0
        for facet in faces:
            counts += poly.outer_cone_membership(polytope, facet, points)
            measure += float(np.mean(poly.outer_cone_membership(polytope, facet, gaussian)))
        report[level] = {
            'violations': int(np.count_nonzero(counts > 1)),
            'faces': len(faces),
            'measure_sum': measure,
        }
    return report


def empty_faces(polytope, level, n, seed):
    """Faces whose pilot estimate of the residual probability is exactly zero."""
    flagged = []
    for facet in polytope.faces(level):
        estimate = face_integral(polytope, facet, None, n, seed)
        if estimate.value == 0.0:
            flagged.append(facet)
    return flagged


def random_unit(d, rng):
    u = rng.standard_normal(d)
    return u / np.linalg.norm(u)


def random_symmetric_tensor(d, rng):
    """Symmetrization of an iid +/-1 3-tensor."""
    raw = rng.choice([-1.0, 1.0], size=(d, d, d))
    perms = itertools.permutations(range(3))
    return sum(np.transpose(raw, p) for p in perms) / 6.0
