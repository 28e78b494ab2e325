"""
Closed-form evaluators for the Kolmogorov-distance bounds.

Absolute constants are unknown; every evaluator multiplies by ``c_user``
(default 1). Logarithms are natural. Values above 1 are returned as-is and
flagged by ``vacuous``.
"""
import logging
import math
from dataclasses import asdict, dataclass

from .exceptions import ZeroAlpha, ZeroBeta, ZeroSigmaStar


logger = logging.getLogger(__name__)

PRESETS = ('fklz', 'bounded', 'gauss', 'bootstrap', 'cckk', 'koike', 'truncation')


@dataclass(frozen=True)
class BoundInputs:
    n: int
    d: int
    B: float = 1.0
    alpha_sq: float = 1.0
    beta_sq: float = 1.0
    cov_gap: float = 0.0
    gamma: float = 0.1
    c_user: float = 1.0

    def __post_init__(self):
        if self.n < 3 or self.d < 3:
            raise ValueError(f"n and d must be >= 3, got n={self.n}, d={self.d}")
        if self.B <= 0:
            raise ValueError("B must be positive")
        if not 0.0 <= self.alpha_sq <= 1.0 or not 0.0 <= self.beta_sq <= 1.0:
            raise ValueError("alpha_sq and beta_sq must lie in [0, 1]")
        if self.cov_gap < 0:
            raise ValueError("cov_gap must be nonnegative")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.c_user <= 0:
            raise ValueError("c_user must be positive")

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class BoundedCase:
    Delta0: float
    Delta1: float
    Delta2: float
    t0: float
    t: float
    kappa: float
    bound: float

    def as_dict(self):
        return asdict(self)


def vacuous(value):
    """True when a bound exceeds 1 and so says nothing about rho."""
    if value > 1.0:
        logger.warning("Bound %.4g is vacuous at this scale", value)
        return True
    return False


def _require_alpha(alpha_sq):
    if alpha_sq <= 0:
        raise ZeroAlpha("alpha_sq must be positive")


def _require_beta(beta_sq):
    if beta_sq <= 0:
        raise ZeroBeta("beta_sq must be positive; the three-coordinate condition fails")


def fklz_components(inputs):
    """The covariance-mismatch term and the n^{-1/2} rate term of fklz_bound."""
    _require_alpha(inputs.alpha_sq)
    _require_beta(inputs.beta_sq)
    log_d = math.log(inputs.d)
    log_n = math.log(inputs.n)
    cov_term = inputs.cov_gap * log_d * log_n / inputs.alpha_sq
    rate_term = (inputs.B ** 3 * log_d ** 2 * math.sqrt(math.log(inputs.d * inputs.n)) * log_n ** 4
                 / (inputs.alpha_sq * inputs.beta_sq * math.sqrt(inputs.n)))
    return {'cov_term': inputs.c_user * cov_term, 'rate_term': inputs.c_user * rate_term}


def fklz_bound(inputs):
    parts = fklz_components(inputs)
    return parts['cov_term'] + parts['rate_term']


def bounded_case_bound(delta, inputs):
    """
    Bound for summands with max |X_ij| <= sqrt(n) delta, with every
    intermediate quantity of the smoothing argument.

    Args:
        delta: the boundedness level
        inputs: BoundInputs (B and gamma unused)

    Returns:
        BoundedCase record
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    _require_alpha(inputs.alpha_sq)
    _require_beta(inputs.beta_sq)
    c = inputs.c_user
    log_d = math.log(inputs.d)
    ab = inputs.alpha_sq * inputs.beta_sq

    delta0 = log_d * inputs.cov_gap
    delta1 = log_d ** 1.5 * inputs.n * delta ** 3
    delta2 = (delta1 / ab) ** 2 + delta * delta * log_d
    t0 = min((2.0 * c * delta1 / ab) ** 2, 0.5)
    t = t0 + delta * delta * log_d
    kappa = math.sqrt(12.0 * log_d - 2.0 * math.log(-math.expm1(-t))) + 1.0 / math.sqrt(2.0 * log_d)

    level = max(abs(math.log(delta2)), 1.0)
    bound = c * (delta0 / inputs.alpha_sq * level
                 + delta1 / ab * (log_d * level + math.sqrt(log_d) * level ** 1.5)
                 + delta * log_d ** 1.5)
    if t0 == 0.5:
        logger.debug("t0 clamped at 1/2; 2 sqrt(2) c0 Delta1 / (alpha^2 beta^2) = %.4g",
                     2.0 * math.sqrt(2.0) * c * delta1 / ab)
    return BoundedCase(delta0, delta1, delta2, t0, t, kappa, bound)


def gauss_comparison_bound(delta_inf, d, alpha_sq, c_user=1.0):
    """c delta (log d) (|log delta| v 1) / alpha^2 for two centred Gaussians."""
    _require_alpha(alpha_sq)
    if delta_inf < 0:
        raise ValueError("delta_inf must be nonnegative")
    if delta_inf == 0:
        return 0.0
    return c_user * delta_inf * math.log(d) * max(abs(math.log(delta_inf)), 1.0) / alpha_sq


def bootstrap_bound(inputs):
    _require_alpha(inputs.alpha_sq)
    return (inputs.c_user * inputs.B ** 2 * math.log(inputs.d / inputs.gamma) ** 1.5 * math.log(inputs.n)
            / (inputs.alpha_sq * math.sqrt(inputs.n)))


def cckk_bound(inputs):
    return inputs.c_user * math.sqrt(inputs.B) / inputs.n ** 0.25 * math.log(inputs.d * inputs.n) ** 1.25


def koike_bound(inputs, sigma_star_sq):
    if sigma_star_sq <= 0:
        raise ZeroSigmaStar("the smallest eigenvalue of Sigma must be positive")
    return (inputs.c_user * inputs.B / (sigma_star_sq * math.sqrt(inputs.n))
            * math.log(inputs.d) ** 1.5 * math.log(inputs.n))


def prior_bounds(inputs, sigma_star_sq):
    """Earlier rates for overlays; koike is None when Sigma is singular."""
    try:
        koike = koike_bound(inputs, sigma_star_sq)
    except ZeroSigmaStar as exc:
        logger.warning("koike bound unavailable: %s", exc)
        koike = None
    return {'cckk': cckk_bound(inputs), 'koike': koike}


def truncation_params(n, d, B):
    if n < 3 or B <= 0:
        raise ValueError("truncation needs n >= 3 and B > 0")
    log_n = math.log(n)
    return {
        'kappa_n': 2.0 * B * log_n,
        'shift': 32.0 * B * log_n * math.log(d * n) / math.sqrt(n),
        'tail_prob_bound': 2.0 / n,
    }


def delta_n_envelope(B, d, gamma, n, c=1.0):
    """c B^2 sqrt(log(d/gamma) / n), the high-probability envelope of ||Sigma_n - Sigma||_inf."""
    return c * B * B * math.sqrt(math.log(d / gamma) / n)


def evaluate_preset(preset, inputs, delta=None, delta_inf=None, sigma_star_sq=None):
    """
    One bound as a flat record {preset, bound, vacuous, ...components}.

    ``delta`` is needed by 'bounded', ``delta_inf`` by 'gauss' and
    ``sigma_star_sq`` by 'koike'.
    """
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
    record = {'preset': preset}
    if preset == 'fklz':
        record.update(fklz_components(inputs))
        record['bound'] = record['cov_term'] + record['rate_term']
    elif preset == 'bounded':
        if delta is None:
            raise ValueError("preset 'bounded' needs delta")
        record.update(bounded_case_bound(delta, inputs).as_dict())
    elif preset == 'gauss':
        if delta_inf is None:
            raise ValueError("preset 'gauss' needs delta_inf")
        record['bound'] = gauss_comparison_bound(delta_inf, inputs.d, inputs.alpha_sq, inputs.c_user)
    elif preset == 'bootstrap':
        record['bound'] = bootstrap_bound(inputs)
    elif preset == 'cckk':
        record['bound'] = cckk_bound(inputs)
    elif preset == 'koike':
        if sigma_star_sq is None:
            raise ValueError("preset 'koike' needs sigma_star_sq")
        record['bound'] = koike_bound(inputs, sigma_star_sq)
    else:
        record.update(truncation_params(inputs.n, inputs.d, inputs.B))
        record['bound'] = record['shift']
    record['vacuous'] = vacuous(record['bound'])
    return record
