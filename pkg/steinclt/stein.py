"""
Ornstein-Uhlenbeck smoothing of polytope indicators and the Stein solution

    psi_t(w) = -int_t^inf T_s h~(w) ds,
    T_s h~(w) = E 1_A(e^{-s} w + sigma_s Z) - E 1_A(Z),  sigma_s = sqrt(1 - e^{-2s}),

whose derivatives are

    d^r psi_t(w) = -int_t^inf e^{-rs} d^r h_s(e^{-s} w) ds,
    d^r h_s(y)[c] = (-1/sigma_s)^r int_{(A - y)/sigma_s} <c, nabla^r phi_d>.

The s-integral is done by Gauss-Legendre in q = e^{-(s - t)}; spatial
derivatives go through the face decompositions of gaussint.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_legendre

from . import gaussint
from . import polytope as poly
from .corr import unit_frame, validate_and_normalize
from .exceptions import CollinearNormals, EmptyPairSet, QuadratureBudgetExceeded
from .gaussint import DerivativeCoefficient, McEstimate
from .utils import chunks, derive_seed, substream


logger = logging.getLogger(__name__)

DEFAULT_QUAD_SPEC = {'rule': 'gauss-legendre', 'nodes': 64, 's_cap': 40.0}
MAX_QUAD_NODES = 1024
MAX_RESIDUAL_DIM = 4


def ou_sigma(s):
    """sqrt(1 - e^{-2s})."""
    return math.sqrt(-math.expm1(-2.0 * s))


@dataclass(frozen=True)
class SmoothedIndicator:
    """T_t h~ for h = 1_A."""
    polytope: poly.Polytope
    t: float

    def __post_init__(self):
        if self.t <= 0:
            raise ValueError("OU time t must be positive")

    @property
    def sigma(self):
        return ou_sigma(self.t)

    def __call__(self, x, n, seed):
        return ou_smooth(self.polytope, self.t, x, n, seed)


@dataclass(frozen=True)
class KernelSample:
    """One draw of M = tau^W(W) - I_d."""
    m_matrix: np.ndarray

    def __post_init__(self):
        matrix = np.asarray(self.m_matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or not np.all(np.isfinite(matrix)):
            raise ValueError("kernel sample must be a finite square matrix")
        object.__setattr__(self, 'm_matrix', matrix)


def ou_smooth(polytope, t, x, n, seed):
    """
    Monte Carlo T_t h~(x) with common random numbers for both expectations.
    """
    if t <= 0:
        raise ValueError("OU time t must be positive")
    x = np.asarray(x, dtype=float)
    decay = math.exp(-t)
    sigma = ou_sigma(t)
    rng = substream(seed, 'ou')
    total = 0.0
    total_sq = 0.0
    for size in chunks(n):
        z = rng.standard_normal((size, polytope.dim))
        moved = poly.contains(polytope, decay * x + sigma * z).astype(float)
        values = moved - poly.contains(polytope, z)
        total += float(values.sum())
        total_sq += float(values @ values)
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0)
    return McEstimate(mean, math.sqrt(var / max(n - 1, 1)), int(n), int(seed))


def _quadrature(t, quad_spec):
    spec = dict(DEFAULT_QUAD_SPEC, **(quad_spec or {}))
    if spec['rule'] != 'gauss-legendre':
        raise QuadratureBudgetExceeded(f"unsupported quadrature rule {spec['rule']!r}")
    nodes = int(spec['nodes'])
    if not 1 <= nodes <= MAX_QUAD_NODES:
        raise QuadratureBudgetExceeded(f"{nodes} nodes outside [1, {MAX_QUAD_NODES}]")
    s_cap = float(spec['s_cap'])
    if s_cap <= t:
        return np.empty(0), np.empty(0), spec
    q_low = math.exp(-(s_cap - t))
    x, w = roots_legendre(nodes)
    q = q_low + (1.0 - q_low) * (x + 1.0) / 2.0
    weights = w * (1.0 - q_low) / 2.0
    return q, weights, spec


def _coefficient(multi_index, d):
    if isinstance(multi_index, DerivativeCoefficient) or multi_index is None:
        return multi_index
    index = tuple(multi_index)
    if not index:
        return None
    if len(index) > 3:
        raise ValueError("derivatives up to order 3 only")
    return DerivativeCoefficient.rank_one(*(np.eye(d)[j] for j in index))


def _scaled_polytope(polytope, y, sigma):
    offsets = (polytope.offsets - polytope.normals @ y) / sigma
    return poly.Polytope(normals=polytope.normals, offsets=offsets)


def psi_derivative(polytope, t, x, multi_index, quad_spec, n, seed):
    """
    d_{j_1..j_r} psi_t(x) for a multi-index of length r <= 3 (or a
    DerivativeCoefficient; an empty index gives psi_t itself).

    Quadrature nodes share the Monte Carlo streams, so the reported stderr
    is the conservative sum |w_i| stderr_i.
    """
    if t <= 0:
        raise ValueError("OU time t must be positive")
    x = np.asarray(x, dtype=float)
    coeff = _coefficient(multi_index, polytope.dim)
    order = 0 if coeff is None else coeff.order
    q_nodes, q_weights, spec = _quadrature(t, quad_spec)

    value = 0.0
    stderr = 0.0
    for q, weight in zip(q_nodes, q_weights):
        s = t - math.log(q)
        if order == 0:
            inner = ou_smooth(polytope, s, x, n, seed)
            factor = 1.0 / q
        else:
            sigma = ou_sigma(s)
            region = _scaled_polytope(polytope, math.exp(-s) * x, sigma)
            inner = gaussint.derivative_integral(region, coeff, None, n, seed)
            factor = math.exp(-order * t) * q ** (order - 1) * (-1.0 / sigma) ** order
        value += weight * factor * inner.value
        stderr += abs(weight * factor) * inner.stderr
    logger.debug("psi derivative order %d at t=%.3f over %d nodes (s_cap=%s)", order, t, len(q_nodes), spec['s_cap'])
    return McEstimate(-value, stderr, int(n), int(seed))


def grad_psi(polytope, t, w, quad_spec, n, seed):
    """w . nabla psi_t(w)."""
    w = np.asarray(w, dtype=float)
    return psi_derivative(polytope, t, w, DerivativeCoefficient(1, w), quad_spec, n, seed)


def laplacian_psi(polytope, t, w, quad_spec, n, seed):
    """<I_d, nabla^2 psi_t(w)>."""
    return psi_derivative(polytope, t, w, DerivativeCoefficient(2, np.eye(polytope.dim)), quad_spec, n, seed)


def stein_residual(polytope, t, w, quad_spec, n, seed):
    """<I, nabla^2 psi_t(w)> - w . nabla psi_t(w) - T_t h~(w); zero up to quadrature and MC error."""
    if polytope.dim > MAX_RESIDUAL_DIM:
        raise ValueError(f"stein_residual is limited to d <= {MAX_RESIDUAL_DIM}")
    lap = laplacian_psi(polytope, t, w, quad_spec, n, derive_seed(seed, 'laplacian'))
    drift = grad_psi(polytope, t, w, quad_spec, n, derive_seed(seed, 'drift'))
    target = ou_smooth(polytope, t, w, n, derive_seed(seed, 'target'))
    value = lap.value - drift.value - target.value
    stderr = math.sqrt(lap.stderr ** 2 + drift.stderr ** 2 + target.stderr ** 2)
    return McEstimate(value, stderr, int(n), int(seed))


def _pair_table(frame):
    if isinstance(frame, poly.Polytope):
        return frame.normals, frame.derived.pair
    normals = np.asarray(getattr(frame, 'normals', frame), dtype=float)
    table = poly.derived_normals(poly.Polytope(normals=normals, offsets=np.zeros(normals.shape[0])))
    return normals, table.pair


def _kernel_max(matrix, normals, pairs):
    best = -math.inf
    for (j, k), v_jk in pairs.items():
        v_j = normals[j]
        best = max(best, abs(v_j @ matrix @ v_j) + abs(v_j @ matrix @ v_jk) + abs(v_jk @ matrix @ v_jk))
    return best


def kernel_delta(samples, frame):
    """
    Empirical Delta = mean over kernel samples of
    max_{j != k, v_k != -v_j} (|v_j'Mv_j| + |v_j'Mv_jk| + |v_jk'Mv_jk|).
    """
    samples = list(samples)
    if not samples:
        raise ValueError("at least one kernel sample is required")
    normals, pairs = _pair_table(frame)
    if not pairs:
        raise EmptyPairSet("no admissible pair (j, k) with v_k != -v_j")
    values = [_kernel_max(sample.m_matrix, normals, pairs) for sample in samples]
    return float(np.mean(values))


@dataclass(frozen=True)
class GaussDeltaTerms:
    """Bilinear-form and closed-form values of v_j'Bv_j, v_j'Bv_jk, v_jk'Bv_jk with B = V Sigma1 V' - I."""
    kernel: np.ndarray
    diag_term: np.ndarray
    cross_term: np.ndarray
    pair_term: np.ndarray
    diag_closed: np.ndarray
    cross_closed: np.ndarray
    pair_closed: np.ndarray
    delta_inf: float
    pairs: tuple = field(default=())

    @property
    def discrepancy(self):
        """Largest entrywise gap between the two evaluation paths."""
        gaps = [np.max(np.abs(self.diag_term - self.diag_closed))]
        for j, k in self.pairs:
            gaps.append(abs(self.cross_term[j, k] - self.cross_closed[j, k]))
            gaps.append(abs(self.pair_term[j, k] - self.pair_closed[j, k]))
        return float(max(gaps))

    @property
    def delta_max(self):
        """max over admitted pairs of |diag_j| + |cross_jk| + |pair_jk| (bilinear path)."""
        return max(abs(self.diag_term[j]) + abs(self.cross_term[j, k]) + abs(self.pair_term[j, k])
                   for j, k in self.pairs)


def gauss_delta_terms(sigma1, sigma, frame=None):
    """
    Terms of Delta for comparing N(0, Sigma1) with N(0, Sigma), both ways:
    bilinear forms of B = V Sigma1 V' - I on the derived normals, and the
    closed forms in Delta_jk = Sigma1_jk - Sigma_jk.
    """
    sigma1 = np.asarray(sigma1, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if frame is None:
        frame = unit_frame(validate_and_normalize(sigma))
    whitening = frame.whitening
    kernel = whitening @ sigma1 @ whitening.T - np.eye(frame.dim)
    normals = np.asarray(frame.normals)
    d = frame.dim
    delta = sigma1 - sigma

    diag_term = np.einsum('ja,ab,jb->j', normals, kernel, normals)
    diag_closed = np.diag(delta).copy()
    cross_term = np.full((d, d), np.nan)
    pair_term = np.full((d, d), np.nan)
    cross_closed = np.full((d, d), np.nan)
    pair_closed = np.full((d, d), np.nan)
    pairs = []
    for j in range(d):
        for k in range(d):
            if j == k:
                continue
            try:
                v_jk = poly.derived_normal_pair(normals[j], normals[k])
            except CollinearNormals:
                continue
            pairs.append((j, k))
            rho = sigma[j, k]
            root = math.sqrt(1.0 - rho * rho)
            cross_term[j, k] = normals[j] @ kernel @ v_jk
            pair_term[j, k] = v_jk @ kernel @ v_jk
            cross_closed[j, k] = (delta[j, k] - delta[j, j] * rho) / root
            pair_closed[j, k] = (delta[k, k] + rho * rho * delta[j, j] - 2.0 * rho * delta[j, k]) / (root * root)
    return GaussDeltaTerms(
        kernel=kernel,
        diag_term=diag_term,
        cross_term=cross_term,
        pair_term=pair_term,
        diag_closed=diag_closed,
        cross_closed=cross_closed,
        pair_closed=pair_closed,
        delta_inf=float(np.max(np.abs(delta))),
        pairs=tuple(pairs),
    )
