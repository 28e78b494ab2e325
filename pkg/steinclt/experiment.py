"""
Simulation layer: data with a prescribed correlation and sub-exponential
scale, normalized sums W, truncated sums, the Gaussian multiplier bootstrap
and Kolmogorov-distance estimation over finite rectangle or polytope families.

Rows are observations: a dataset of n vectors is an (n, d) array and
X_i = L eps_i becomes ``eps @ L.T``.
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate, linalg, optimize, stats

from . import bounds
from . import polytope as poly
from .corr import CorrelationModel, validate_and_normalize
from .exceptions import ShapeMismatch, ZeroAlpha, ZeroBeta
from .utils import chunks, csv_text, derive_seed, substream, write_text


logger = logging.getLogger(__name__)

INNOVATIONS = ('rademacher', 'uniform_pm', 'laplace_unit', 'truncated_normal', 'gaussian')

# Innovation draws per block while summing W
BLOCK_ENTRIES = 1 << 22
# Sample rows x members x dims per classification pass
CLASSIFY_ENTRIES = 1 << 23

GRID_POINTS = 13
GRID_RANGE = (-3.0, 3.0)
RANDOM_FAMILY_SIZE = 2000
GRID_MAX_DIM = 3
FAMILIES = ('auto', 'grid', 'two_sided', 'random')
GAUSSIAN_REFERENCE_FACTOR = 10
SLOPE_BOOTSTRAP = 1000
GEOMETRIC_TOL = 0.05


@dataclass(frozen=True)
class Innovation:
    """A symmetric, mean-zero, unit-variance law for the coordinates of eps_i."""
    name: str
    c: float = None

    def __post_init__(self):
        if self.name not in INNOVATIONS:
            raise ValueError(f"unknown innovation {self.name!r}; choose from {', '.join(INNOVATIONS)}")
        if self.name == 'truncated_normal' and (self.c is None or self.c <= 0):
            raise ValueError("truncated_normal needs a positive truncation level c")

    @cached_property
    def _truncnorm_scale(self):
        c = self.c
        variance = 1.0 - 2.0 * c * stats.norm.pdf(c) / (2.0 * stats.norm.cdf(c) - 1.0)
        return 1.0 / math.sqrt(variance)

    @property
    def bounded(self):
        return self.name in ('rademacher', 'uniform_pm', 'truncated_normal')

    @property
    def max_abs(self):
        if self.name == 'rademacher':
            return 1.0
        if self.name == 'uniform_pm':
            return math.sqrt(3.0)
        if self.name == 'truncated_normal':
            return self.c * self._truncnorm_scale
        return math.inf

    def sample(self, rng, shape):
        if self.name == 'rademacher':
            return rng.choice(np.array([-1.0, 1.0]), size=shape)
        if self.name == 'uniform_pm':
            root3 = math.sqrt(3.0)
            return rng.uniform(-root3, root3, size=shape)
        if self.name == 'laplace_unit':
            return rng.laplace(0.0, 1.0 / math.sqrt(2.0), size=shape)
        if self.name == 'truncated_normal':
            draws = stats.truncnorm.rvs(-self.c, self.c, size=shape, random_state=rng)
            return draws * self._truncnorm_scale
        return rng.standard_normal(shape)

    def pdf(self, x):
        if self.name == 'laplace_unit':
            return stats.laplace.pdf(x, scale=1.0 / math.sqrt(2.0))
        if self.name == 'gaussian':
            return stats.norm.pdf(x)
        raise ValueError(f"{self.name} has no density used here")

    def orlicz_scale(self):
        """
        Smallest b with E exp(|eps|/b) <= 2.

        Bounded laws use max|eps| / log 2, which makes exp(|eps|/b) <= 2
        pointwise. Unbounded laws solve E exp(|eps|/b) = 2 by root finding.
        """
        if self.bounded:
            return self.max_abs / math.log(2.0)

        def excess(b):
            value, _ = integrate.quad(lambda x: math.exp(x / b) * self.pdf(x), 0.0, np.inf)
            return 2.0 * value - 2.0

        if self.name == 'laplace_unit':
            low = 1.05 / math.sqrt(2.0)
        else:
            low = 0.3
        high = 1.0
        while excess(high) > 0:
            high *= 2.0
        return optimize.brentq(excess, low, high, xtol=1e-12)


@dataclass(frozen=True, eq=False)
class DataModel:
    """X_i = L eps_i with Sigma = L L' and iid unit-variance innovations."""
    sigma: CorrelationModel
    innovation: Innovation = field(default_factory=lambda: Innovation('rademacher'))

    @classmethod
    def from_matrix(cls, matrix, innovation='rademacher', c=None):
        return cls(sigma=validate_and_normalize(matrix), innovation=Innovation(innovation, c))

    @property
    def dim(self):
        return self.sigma.dim

    @cached_property
    def factor(self):
        """L with L L' = Sigma: Cholesky when full rank, else the symmetric square root."""
        matrix = np.array(self.sigma.sigma)
        if self.sigma.full_rank:
            return linalg.cholesky(matrix, lower=True)
        values, vectors = linalg.eigh(matrix)
        return (vectors * np.sqrt(np.clip(values, 0.0, None))) @ vectors.T

    @cached_property
    def B_effective(self):
        """Sub-exponential scale of X_ij: the Orlicz scale of eps times the largest row 1-norm of L."""
        return self.innovation.orlicz_scale() * float(np.max(np.abs(self.factor).sum(axis=1)))

    def as_dict(self):
        return {
            'dim': self.dim,
            'innovation': self.innovation.name,
            'c': self.innovation.c,
            'B_effective': self.B_effective,
            'alpha_sq': self.sigma.alpha_sq,
            'beta_sq': self.sigma.beta_sq,
            'sigma_star_sq': self.sigma.sigma_star_sq,
        }


def gaussian_sampler(sigma):
    """Sampler (size, rng) -> N(0, Sigma) rows."""
    model = DataModel(sigma=sigma if isinstance(sigma, CorrelationModel) else validate_and_normalize(sigma),
                      innovation=Innovation('gaussian'))
    factor = model.factor

    def draw(size, rng):
        return rng.standard_normal((size, model.dim)) @ factor.T

    return draw


def simulate_X(model, n, seed):
    """One dataset of n observations."""
    rng = substream(seed, 'X')
    return model.innovation.sample(rng, (int(n), model.dim)) @ model.factor.T


def simulate_prefix_sums(model, n_grid, reps, seed):
    """
    W draws for every n in ``n_grid`` from one pass of innovations: the
    draws for a smaller n are the prefix sums of those for a larger one.

    Returns:
        dict n -> (reps, d) array
    """
    grid = sorted({int(n) for n in n_grid})
    if not grid or grid[0] < 1:
        raise ValueError("sample sizes must be positive")
    d = model.dim
    results = {n: np.empty((int(reps), d)) for n in grid}
    rep_block = max(1, min(int(reps), BLOCK_ENTRIES // (d * 64)))
    start = 0
    for block_id, size in enumerate(chunks(reps, rep_block)):
        rng = substream(seed, 'W', block_id)
        running = np.zeros((size, d))
        drawn = 0
        step = max(1, BLOCK_ENTRIES // (size * d))
        for n in grid:
            while drawn < n:
                take = min(step, n - drawn)
                running += model.innovation.sample(rng, (size, take, d)).sum(axis=1)
                drawn += take
            results[n][start:start + size] = running @ model.factor.T / math.sqrt(n)
        start += size
    return results


def simulate_W(model, n, reps, seed):
    """reps independent draws of W = n^{-1/2} sum_i X_i."""
    return simulate_prefix_sums(model, [n], reps, seed)[int(n)]


def truncation_level(model, n):
    return bounds.truncation_params(max(int(n), 3), max(model.dim, 3), model.B_effective)['kappa_n']


def truncated_mean(model, kappa):
    """E[X_ij 1{|X_ij| <= kappa}] per coordinate; every innovation is symmetric, so X_ij is too."""
    return np.zeros(model.dim)


def truncate_entries(model, X, n=None):
    """X_ij 1{|X_ij| <= kappa_n} - E X_ij 1{|X_ij| <= kappa_n}, entrywise."""
    X = np.asarray(X, dtype=float)
    n = X.shape[-2] if n is None else int(n)
    kappa = truncation_level(model, n)
    clipped = np.where(np.abs(X) <= kappa, X, 0.0)
    outside = int(np.count_nonzero(clipped != X))
    if outside:
        logger.debug("Truncation at kappa_n=%.4g removed %d entries", kappa, outside)
        return clipped - truncated_mean(model, kappa)
    return X


def truncate_hat(model, X, n=None):
    """
    Truncated sums from datasets X of shape (..., n, d).

    Returns:
        (..., d) array of n^{-1/2} sum_i X^_i
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[-2] if n is None else int(n)
    return truncate_entries(model, X, n).sum(axis=-2) / math.sqrt(n)


def sample_cov(X):
    """n^{-1} sum (X_i - mean)(X_i - mean)'."""
    X = np.asarray(X, dtype=float)
    centered = X - X.mean(axis=0)
    return centered.T @ centered / X.shape[0]


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    draws: np.ndarray
    sigma_n: np.ndarray
    delta_n_star: float = None


def multiplier_bootstrap(X, n_boot, seed, sigma=None):
    """
    W^xi = n^{-1/2} sum_i xi_i (X_i - mean(X)) with xi ~ N(0, I_n), n_boot times.

    Args:
        X: (n, d) dataset
        n_boot: number of multiplier draws
        seed: int
        sigma: target correlation; when given, Delta_n* = ||Sigma_n - Sigma||_inf

    Returns:
        BootstrapResult
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if n < 3:
        raise ValueError("multiplier bootstrap needs n >= 3")
    if n_boot < 1:
        raise ValueError("n_boot must be positive")
    centered = X - X.mean(axis=0)
    draws = np.empty((int(n_boot), d))
    rng = substream(seed, 'multiplier')
    start = 0
    for size in chunks(n_boot, max(1, BLOCK_ENTRIES // n)):
        xi = rng.standard_normal((size, n))
        draws[start:start + size] = xi @ centered / math.sqrt(n)
        start += size
    sigma_n = centered.T @ centered / n
    delta = None
    if sigma is not None:
        target = np.asarray(getattr(sigma, 'sigma', sigma), dtype=float)
        if target.shape != sigma_n.shape:
            raise ShapeMismatch(f"{target.shape} vs {sigma_n.shape}")
        delta = float(np.max(np.abs(sigma_n - target)))
    return BootstrapResult(draws=draws, sigma_n=sigma_n, delta_n_star=delta)


# Test-set families

@dataclass(frozen=True, eq=False)
class RectangleFamily:
    """Sets {x <= b} (or {a <= x <= b} when ``lower`` is given), one per row of ``upper``."""
    kind: str
    upper: np.ndarray
    lower: np.ndarray = None

    def __post_init__(self):
        upper = np.array(self.upper, dtype=float, ndmin=2)
        if upper.shape[0] == 0:
            raise ValueError("a rectangle family needs at least one member")
        object.__setattr__(self, 'upper', upper)
        if self.lower is not None:
            lower = np.array(self.lower, dtype=float, ndmin=2)
            if lower.shape != upper.shape:
                raise ShapeMismatch(f"lower {lower.shape} vs upper {upper.shape}")
            object.__setattr__(self, 'lower', lower)

    def __len__(self):
        return self.upper.shape[0]

    @property
    def dim(self):
        return self.upper.shape[1]

    def member(self, index):
        record = {'upper': self.upper[index]}
        if self.lower is not None:
            record['lower'] = self.lower[index]
        return record

    def subset(self, indices):
        lower = None if self.lower is None else self.lower[indices]
        return RectangleFamily(kind=self.kind, upper=self.upper[indices], lower=lower)

    def contains(self, samples):
        """(N, members) membership table."""
        inside = np.all(samples[:, None, :] <= self.upper[None, :, :], axis=2)
        if self.lower is not None:
            inside &= np.all(samples[:, None, :] >= self.lower[None, :, :], axis=2)
        return inside


def rectangle_grid(d, points=GRID_POINTS, span=GRID_RANGE, two_sided=False):
    """Full product grid of one-sided thresholds; two-sided adds the mirrored lower corner."""
    axis = np.linspace(span[0], span[1], points)
    upper = np.stack(np.meshgrid(*([axis] * d), indexing='ij'), axis=-1).reshape(-1, d)
    lower = -upper if two_sided else None
    if two_sided:
        keep = np.all(lower < upper, axis=1)
        upper, lower = upper[keep], lower[keep]
    return RectangleFamily(kind='grid', upper=upper, lower=lower)


def random_rectangles(sigma, count, rng):
    """Upper corners drawn from N(0, Sigma), so thresholds sit where the mass is."""
    draw = gaussian_sampler(sigma)
    return RectangleFamily(kind='random', upper=draw(int(count), rng))


def default_family(model, seed):
    if model.dim <= GRID_MAX_DIM:
        return rectangle_grid(model.dim)
    return random_rectangles(model.sigma, RANDOM_FAMILY_SIZE, substream(seed, 'family'))


def family_by_name(name, model, seed, grid_points=None):
    """'auto' (default_family), 'grid', 'two_sided' or 'random'."""
    if name == 'auto':
        return default_family(model, seed)
    if name in ('grid', 'two_sided'):
        points = GRID_POINTS if grid_points is None else int(grid_points)
        if points < 2:
            raise ValueError("a rectangle grid needs at least 2 points per axis")
        return rectangle_grid(model.dim, points=points, two_sided=name == 'two_sided')
    if name == 'random':
        return random_rectangles(model.sigma, RANDOM_FAMILY_SIZE, substream(seed, 'family'))
    raise ValueError(f"unknown family {name!r}; choose from {', '.join(FAMILIES)}")


def _member_frequencies(family, samples):
    samples = np.asarray(samples, dtype=float)
    if isinstance(family, RectangleFamily):
        members = len(family)
        counts = np.zeros(members)
        rows = max(1, CLASSIFY_ENTRIES // (members * family.dim))
        for start in range(0, samples.shape[0], rows):
            counts += family.contains(samples[start:start + rows]).sum(axis=0)
        return counts / samples.shape[0]
    return np.array([np.mean(poly.contains(member, samples)) for member in family])


@dataclass(frozen=True)
class RhoEstimate:
    rho_hat: float
    argmax_member: int
    stderr_at_argmax: float
    family_size: int

    def as_dict(self):
        return asdict(self)


def rho_from_samples(sample_p, sample_q, family):
    """max over the family of |P_hat - Q_hat|, every sample classified once against all members."""
    p = _member_frequencies(family, sample_p)
    q = _member_frequencies(family, sample_q)
    gaps = np.abs(p - q)
    best = int(np.argmax(gaps))
    n_p = np.asarray(sample_p).shape[0]
    n_q = np.asarray(sample_q).shape[0]
    stderr = math.sqrt(p[best] * (1 - p[best]) / n_p + q[best] * (1 - q[best]) / n_q)
    return RhoEstimate(float(gaps[best]), best, stderr, len(family))


def rho_estimate(sampler_p, sampler_q, family, n_p, n_q, seed):
    """
    Empirical Kolmogorov distance between two samplers over a finite family.

    Both samplers get generators built from the same seed, so identical
    samplers give rho_hat = 0 exactly.
    """
    sample_p = sampler_p(int(n_p), substream(seed, 'rho'))
    sample_q = sampler_q(int(n_q), substream(seed, 'rho'))
    return rho_from_samples(sample_p, sample_q, family)


def null_rho(sigma, family, reps, seed):
    """rho_hat between two independent N(0, Sigma) samples of size reps: the Monte Carlo floor."""
    draw = gaussian_sampler(sigma)
    first = draw(int(reps), substream(seed, 'null', 0))
    second = draw(int(reps), substream(seed, 'null', 1))
    return rho_from_samples(first, second, family)


def fit_slope(n_grid, rho_hat, stderr, seed, n_boot=SLOPE_BOOTSTRAP):
    """
    Least-squares fit of log rho = a + s log n with a parametric bootstrap
    95% interval for s (rho resampled as rho + stderr * N(0, 1)).
    """
    log_n = np.log(np.asarray(n_grid, dtype=float))
    rho = np.asarray(rho_hat, dtype=float)
    err = np.asarray(stderr, dtype=float)
    floor = np.finfo(float).tiny
    slope, intercept = np.polyfit(log_n, np.log(np.maximum(rho, floor)), 1)
    rng = substream(seed, 'slope')
    resampled = np.maximum(rho + err * rng.standard_normal((int(n_boot), rho.size)), floor)
    slopes = np.polyfit(log_n, np.log(resampled).T, 1)[0]
    low, high = np.percentile(slopes, [2.5, 97.5])
    return {'slope': float(slope), 'intercept': float(intercept), 'ci': [float(low), float(high)]}


def _check_geometric(n_grid):
    grid = np.asarray(sorted(n_grid), dtype=float)
    if grid.size < 4:
        raise ValueError("a rate study needs at least 4 sample sizes")
    ratios = grid[1:] / grid[:-1]
    if np.any(ratios <= 1) or np.max(np.abs(ratios / ratios[0] - 1.0)) > GEOMETRIC_TOL:
        raise ValueError(f"sample sizes must be geometrically spaced, got {grid.astype(int).tolist()}")
    return [int(n) for n in grid]


def _overlays(model, n, c_user):
    if model.dim < 3:
        return None, None
    inputs = bounds.BoundInputs(n=max(n, 3), d=model.dim, B=model.B_effective,
                                alpha_sq=model.sigma.alpha_sq, beta_sq=model.sigma.beta_sq,
                                cov_gap=0.0, c_user=c_user)
    try:
        fklz = bounds.fklz_bound(inputs)
    except (ZeroAlpha, ZeroBeta) as exc:
        logger.warning("fklz overlay unavailable: %s", exc)
        fklz = None
    return fklz, bounds.cckk_bound(inputs)


@dataclass(frozen=True)
class RateStudy:
    rows: list
    slope: float
    intercept: float
    slope_ci: list
    null_rho: float
    noise_dominated: bool
    family_size: int

    def as_dict(self):
        return asdict(self)

    def csv(self):
        header = ['n', 'rho_hat', 'stderr', 'fklz', 'cckk']
        return csv_text(header, [[row[key] for key in header] for row in self.rows])


def rate_study(model, n_grid, reps_per_n, family=None, seed=0, c_user=1.0):
    """
    rho_hat(W_n, N(0, Sigma)) along a geometric n-grid with a fitted log-log slope.

    W draws share innovations across n (nested prefixes) and the Gaussian
    reference sample is shared across n.
    """
    grid = _check_geometric(n_grid)
    family = default_family(model, seed) if family is None else family
    draws = simulate_prefix_sums(model, grid, reps_per_n, seed)
    reference = gaussian_sampler(model.sigma)(GAUSSIAN_REFERENCE_FACTOR * int(reps_per_n),
                                              substream(seed, 'reference'))
    floor = null_rho(model.sigma, family, reps_per_n, derive_seed(seed, 'null'))

    rows = []
    for n in grid:
        estimate = rho_from_samples(draws[n], reference, family)
        fklz, cckk = _overlays(model, n, c_user)
        rows.append({'n': n, 'rho_hat': estimate.rho_hat, 'stderr': estimate.stderr_at_argmax,
                     'fklz': fklz, 'cckk': cckk})
        logger.info("n=%d rho_hat=%.5f (+/- %.5f)", n, estimate.rho_hat, estimate.stderr_at_argmax)

    fit = fit_slope(grid, [row['rho_hat'] for row in rows], [row['stderr'] for row in rows],
                    derive_seed(seed, 'fit'))
    at_floor = all(row['rho_hat'] <= floor.rho_hat + 3.0 * row['stderr'] for row in rows)
    noise_dominated = at_floor or fit['ci'][0] <= 0.0 <= fit['ci'][1]
    if noise_dominated:
        logger.warning("Slope fit is noise-dominated (null rho %.5f)", floor.rho_hat)
    return RateStudy(rows=rows, slope=fit['slope'], intercept=fit['intercept'], slope_ci=fit['ci'],
                     null_rho=floor.rho_hat, noise_dominated=noise_dominated, family_size=len(family))


def bootstrap_study(model, n, datasets, n_boot, gamma, seed, family=None, c_user=1.0, envelope_c=1.0,
                    data=None, truncate=False):
    """
    Per dataset: Delta_n*, the flattened Sigma_n and rho_hat(W^xi, N(0, Sigma));
    summary: the (1 - gamma)-quantile of rho_hat against bootstrap_bound, and
    how often Delta_n* exceeds the c B^2 sqrt(log(d/gamma)/n) envelope.

    ``data`` replaces the simulated datasets with one observed (n, d) array.
    With ``truncate`` the bootstrap runs on the entrywise-truncated data and
    each row also carries the truncated sum W^ = n^{-1/2} sum_i X^_i.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    if n_boot < 1 or datasets < 1:
        raise ValueError("n_boot and datasets must be positive")
    if data is not None:
        data = np.asarray(data, dtype=float)
        if data.ndim != 2 or data.shape[1] != model.dim:
            raise ShapeMismatch(f"dataset of shape {data.shape} does not match d={model.dim}")
        n, datasets = data.shape[0], 1
        logger.info("Bootstrapping one observed dataset of %d rows", n)
    family = default_family(model, seed) if family is None else family
    reference = gaussian_sampler(model.sigma)
    per_dataset = []
    for index in range(int(datasets)):
        X = data if data is not None else simulate_X(model, n, derive_seed(seed, 'data', index))
        row = {}
        if truncate:
            row['w_hat'] = truncate_hat(model, X, n).tolist()
            X = truncate_entries(model, X, n)
        result = multiplier_bootstrap(X, n_boot, derive_seed(seed, 'boot', index), sigma=model.sigma)
        gauss = reference(int(n_boot), substream(seed, 'reference', index))
        rho = rho_from_samples(result.draws, gauss, family)
        row.update({'delta_n_star': result.delta_n_star, 'sigma_n': result.sigma_n.ravel().tolist(),
                    'rho_xi_hat': rho.rho_hat, 'stderr': rho.stderr_at_argmax})
        per_dataset.append(row)

    d = model.dim
    envelope = bounds.delta_n_envelope(model.B_effective, d, gamma, n, envelope_c)
    deltas = np.array([row['delta_n_star'] for row in per_dataset])
    exceedance = float(np.mean(deltas > envelope))
    binomial_se = math.sqrt(gamma * (1.0 - gamma) / len(per_dataset))
    try:
        bound = bounds.bootstrap_bound(bounds.BoundInputs(
            n=max(n, 3), d=max(d, 3), B=model.B_effective, alpha_sq=model.sigma.alpha_sq,
            beta_sq=model.sigma.beta_sq, gamma=gamma, c_user=c_user))
    except ZeroAlpha as exc:
        logger.warning("bootstrap bound unavailable: %s", exc)
        bound = None
    summary = {
        'rho_xi_quantile': float(np.quantile([row['rho_xi_hat'] for row in per_dataset], 1.0 - gamma)),
        'bootstrap_bound': bound,
        'delta_n_envelope': envelope,
        'exceedance': exceedance,
        'exceedance_ok': exceedance <= gamma + 3.0 * binomial_se,
        'delta_n_star_median': float(np.median(deltas)),
        'gamma': gamma,
        'family_size': len(family),
    }
    return {'datasets': per_dataset, 'summary': summary}


def write_dataset_csv(path, X):
    X = np.asarray(X, dtype=float)
    header = [f"x{j + 1}" for j in range(X.shape[1])]
    write_text(path, csv_text(header, X.tolist()))


def read_dataset_csv(path):
    """One row per observation after a header line."""
    return np.loadtxt(path, delimiter=',', skiprows=1, ndmin=2)
