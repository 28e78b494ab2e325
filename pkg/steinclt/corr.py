"""
Correlation-matrix handling: validation, the pair/triple non-degeneracy
diagnostics (alpha^2, beta^2, sigma_*^2) and the unit-normal frame obtained
from the Cholesky factor.

Indices are 0-based throughout.
"""
import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .exceptions import (
    DegeneratePair,
    DimensionTooSmall,
    NonPsd,
    NonSymmetric,
    ShapeMismatch,
    SingularMatrix,
    ZeroDiagonal,
)


logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-8
PAIR_DET_TOL = 1e-14
FULL_RANK_TOL = 1e-10
MIN_PERTURBATION = 1e-12


def _frozen(array):
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class CorrelationModel:
    """A unit-diagonal correlation matrix with its degeneracy diagnostics."""
    dim: int
    sigma: np.ndarray
    alpha_sq: float
    beta_sq: float
    sigma_star_sq: float
    degenerate_pairs: tuple = field(default=())

    @property
    def pair_degenerate(self):
        return self.alpha_sq <= PAIR_DET_TOL

    @property
    def full_rank(self):
        return self.sigma_star_sq > FULL_RANK_TOL


@dataclass(frozen=True, eq=False)
class UnitFrame:
    """Rows of the lower Cholesky factor L of Sigma; row j is the unit normal v_j."""
    dim: int
    normals: np.ndarray
    chol: np.ndarray

    @property
    def whitening(self):
        """V = L^{-1}, so that V Sigma V^T = I."""
        return linalg.solve_triangular(self.chol, np.eye(self.dim), lower=True)

    def gram(self):
        return self.normals @ self.normals.T


def validate_and_normalize(matrix):
    """
    Validate a covariance/correlation matrix and rescale it to unit diagonal.

    Args:
        matrix: d x d array-like, symmetric and positive semidefinite

    Returns:
        CorrelationModel with alpha_sq, beta_sq and sigma_star_sq filled in
    """
    arr = np.asarray(matrix, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ShapeMismatch(f"expected a square matrix, got shape {arr.shape}")
    scale = max(1.0, float(np.max(np.abs(arr))))
    if np.max(np.abs(arr - arr.T)) > SYMMETRY_TOL * scale:
        raise NonSymmetric("matrix is not symmetric")
    diag = np.diag(arr)
    if np.any(diag <= 0):
        raise ZeroDiagonal(f"non-positive diagonal entry at index {int(np.argmin(diag))}")

    inv_sd = 1.0 / np.sqrt(diag)
    sigma = arr * np.outer(inv_sd, inv_sd)
    sigma = 0.5 * (sigma + sigma.T)
    np.fill_diagonal(sigma, 1.0)

    smallest = float(linalg.eigvalsh(sigma)[0])
    if smallest < -PSD_TOL:
        raise NonPsd(f"smallest eigenvalue {smallest:.3e} is below -{PSD_TOL}")

    return _build_model(sigma, max(smallest, 0.0))


def _build_model(sigma, sigma_star_sq):
    dim = sigma.shape[0]
    if dim >= 2:
        off = sigma[~np.eye(dim, dtype=bool)]
        alpha_sq = float(np.clip(1.0 - np.max(off ** 2), 0.0, 1.0))
    else:
        alpha_sq = 1.0

    degenerate = []
    if dim >= 3:
        beta_sq = 1.0
        for triple in itertools.combinations(range(dim), 3):
            for j, k, l in _labelings(triple):
                ratio, flagged = _triple_ratio(sigma, j, k, l)
                if flagged:
                    degenerate.append((min(j, k), max(j, k)))
                beta_sq = min(beta_sq, ratio)
        beta_sq = float(np.clip(beta_sq, 0.0, 1.0))
        if alpha_sq < beta_sq - 1e-12:
            logger.error("alpha_sq %.6g < beta_sq %.6g; diagnostics are inconsistent", alpha_sq, beta_sq)
    else:
        # no triples: the three-component condition is vacuous
        beta_sq = alpha_sq

    if degenerate:
        logger.warning("%d degenerate pair(s) found; their triple ratios are reported as 0", len(set(degenerate)))

    return CorrelationModel(
        dim=dim,
        sigma=_frozen(sigma),
        alpha_sq=alpha_sq,
        beta_sq=beta_sq,
        sigma_star_sq=float(sigma_star_sq),
        degenerate_pairs=tuple(sorted(set(degenerate))),
    )


def _labelings(triple):
    j, k, l = triple
    return ((j, k, l), (j, l, k), (k, l, j))


def _triple_ratio(sigma, j, k, l):
    pair = sigma[np.ix_([j, k], [j, k])]
    det_pair = float(np.linalg.det(pair))
    if det_pair <= PAIR_DET_TOL:
        return 0.0, True
    det_triple = float(np.linalg.det(sigma[np.ix_([j, k, l], [j, k, l])]))
    return max(det_triple, 0.0) / det_pair, False


def triple_ratio(model, j, k, l, strict=False):
    """
    det(Sigma^{j,k,l}) / det(Sigma^{j,k}), the conditional variance of
    coordinate l given coordinates j and k.

    A degenerate pair (j, k) makes the ratio undefined; it is reported as 0
    with a warning unless ``strict`` is set, in which case DegeneratePair is
    raised.
    """
    if len({j, k, l}) != 3 or not all(0 <= m < model.dim for m in (j, k, l)):
        raise IndexError(f"indices must be distinct and in range: {(j, k, l)}")
    ratio, flagged = _triple_ratio(model.sigma, j, k, l)
    if flagged:
        if strict:
            raise DegeneratePair(f"det(Sigma^{{{j},{k}}}) <= {PAIR_DET_TOL}")
        logger.warning("Degenerate pair (%d, %d): triple ratio reported as 0", j, k)
    return ratio


def unit_frame(model):
    """Cholesky factor of Sigma; the rows are the unit normals v_j with v_j . v_k = Sigma_jk."""
    if not model.full_rank:
        raise SingularMatrix(
            f"sigma_star_sq={model.sigma_star_sq:.3e}; call perturb_to_full_rank first"
        )
    try:
        chol = linalg.cholesky(model.sigma, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularMatrix(str(exc)) from exc
    return UnitFrame(dim=model.dim, normals=_frozen(chol), chol=_frozen(chol))


def perturb_to_full_rank(model, eps):
    """Blend toward the identity, (Sigma + eps^2 I) / (1 + eps^2); the diagonal stays exactly 1."""
    eps = max(float(eps), MIN_PERTURBATION)
    eps_sq = eps * eps
    sigma = (np.array(model.sigma) + eps_sq * np.eye(model.dim)) / (1.0 + eps_sq)
    np.fill_diagonal(sigma, 1.0)
    return _build_model(sigma, max(float(linalg.eigvalsh(sigma)[0]), 0.0))


def min_angles(frame):
    """
    Smallest angle between two normals (as lines) and smallest angle between
    a normal and the plane spanned by two others.

    Returns:
        (alpha_angle, beta_angle) in radians, both in [0, pi/2]
    """
    normals = np.asarray(getattr(frame, 'normals', frame), dtype=float)
    count = normals.shape[0]
    if count < 3:
        raise DimensionTooSmall(f"min_angles needs at least 3 normals, got {count}")
    alpha_angle = math.pi / 2
    for j, k in itertools.combinations(range(count), 2):
        cos = min(abs(float(normals[j] @ normals[k])), 1.0)
        alpha_angle = min(alpha_angle, math.acos(cos))

    beta_angle = math.pi / 2
    for triple in itertools.combinations(range(count), 3):
        for j, k, l in _labelings(triple):
            basis = normals[[j, k]].T
            coef, *_ = np.linalg.lstsq(basis, normals[l], rcond=None)
            residual = float(np.linalg.norm(normals[l] - basis @ coef))
            beta_angle = min(beta_angle, math.asin(min(residual, 1.0)))
    return alpha_angle, beta_angle


def cov_gap(cov_w, sigma):
    """Entrywise infinity norm ||Cov(W) - Sigma||_inf."""
    a = np.asarray(cov_w, dtype=float)
    b = np.asarray(sigma, dtype=float)
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")
    return float(np.max(np.abs(a - b)))


# Factories used by the experiment layer.

def equicorrelated(d, rho):
    sigma = np.full((d, d), float(rho))
    np.fill_diagonal(sigma, 1.0)
    return sigma


def two_block(d1, d2, rho_in, rho_cross):
    d = d1 + d2
    sigma = np.full((d, d), float(rho_cross))
    sigma[:d1, :d1] = rho_in
    sigma[d1:, d1:] = rho_in
    np.fill_diagonal(sigma, 1.0)
    return sigma


def low_rank_ridge(d, rank, eps, rng):
    """Rank-``rank`` correlation plus eps*I, renormalized: nearly singular, pairs and triples stay safe."""
    factor = rng.standard_normal((d, rank))
    cov = factor @ factor.T + eps * np.eye(d)
    inv_sd = 1.0 / np.sqrt(np.diag(cov))
    sigma = cov * np.outer(inv_sd, inv_sd)
    np.fill_diagonal(sigma, 1.0)
    return 0.5 * (sigma + sigma.T)


def random_correlation(d, rng, alpha_floor=None):
    """Random full-rank correlation matrix; optionally shrunk toward I until alpha_sq >= alpha_floor."""
    factor = rng.standard_normal((d, d + 2))
    factor /= np.linalg.norm(factor, axis=1, keepdims=True)
    sigma = factor @ factor.T
    np.fill_diagonal(sigma, 1.0)
    if alpha_floor is not None and d >= 2:
        max_sq = float(np.max(sigma[~np.eye(d, dtype=bool)] ** 2))
        if 1.0 - max_sq < alpha_floor:
            shrink = math.sqrt((1.0 - alpha_floor) / max_sq)
            sigma = shrink * sigma + (1.0 - shrink) * np.eye(d)
            np.fill_diagonal(sigma, 1.0)
    return 0.5 * (sigma + sigma.T)


def read_matrix_csv(path):
    """Dense, header-free, comma-separated matrix."""
    return np.loadtxt(path, delimiter=',', ndmin=2)


def diagnostics(model):
    """Flat diagnostics record for the ``diagnose`` command."""
    if model.dim >= 3 and model.full_rank:
        alpha_angle, beta_angle = min_angles(unit_frame(model))
    else:
        alpha_angle = math.asin(math.sqrt(model.alpha_sq))
        beta_angle = math.asin(math.sqrt(model.beta_sq)) if model.dim >= 3 else None
    return {
        'dim': model.dim,
        'alpha_sq': model.alpha_sq,
        'beta_sq': model.beta_sq,
        'sigma_star_sq': model.sigma_star_sq,
        'min_angle_pair': alpha_angle,
        'min_angle_triple': beta_angle,
    }
