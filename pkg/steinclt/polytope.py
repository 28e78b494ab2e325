"""
Convex polytopes A = {x : x . v_j <= b_j}, their inflations A(t), the facet
lattice (F_j, F_jk, F_jkl), derived normals v_jk / v_jkl and the outer cones
S_j, S_jk, S_jkl and wedges N_{F_jk}, N_{F_jkl} built on face relative
interiors.

An offset of +inf drops its constraint; every facet loop skips it.
"""
import itertools
import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg

from .exceptions import (
    BadDirections,
    CollinearNormals,
    DegenerateTriple,
    PolytopeParseError,
    RegularizationFailed,
    SingularGram,
)


logger = logging.getLogger(__name__)

INCIDENCE_TOL = 1e-9
COLLINEAR_TOL = 1e-12
TRIPLE_SV_TOL = 1e-10
RANK_TOL = 1e-10
GRAM_COND_MAX = 1e12
DIRECTION_TOL = 1e-8
MAX_REGULARIZE_RETRIES = 100


@dataclass(frozen=True)
class FacetIndex:
    """F_j, F_jk or F_jkl; indices are stored sorted."""
    level: int
    indices: tuple

    def __post_init__(self):
        if self.level not in (1, 2, 3) or len(self.indices) != self.level:
            raise ValueError(f"level {self.level} does not match indices {self.indices}")
        if len(set(self.indices)) != self.level or any(m < 0 for m in self.indices):
            raise ValueError(f"indices must be distinct and non-negative: {self.indices}")
        if tuple(sorted(self.indices)) != tuple(self.indices):
            object.__setattr__(self, 'indices', tuple(sorted(self.indices)))

    @classmethod
    def of(cls, *indices):
        return cls(level=len(indices), indices=tuple(sorted(int(m) for m in indices)))


@dataclass(frozen=True, eq=False)
class Polytope:
    """{x : x . v_j <= b_j for every constraint j}; normals are unit rows."""
    normals: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        normals = np.array(self.normals, dtype=float, ndmin=2)
        offsets = np.array(self.offsets, dtype=float, ndmin=1)
        if normals.shape[0] != offsets.shape[0]:
            raise ValueError(f"{normals.shape[0]} normals but {offsets.shape[0]} offsets")
        if np.any(np.isnan(offsets)) or np.any(offsets == -np.inf):
            raise ValueError("offsets must be finite or +inf")
        norms = np.linalg.norm(normals, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError("normals must be unit vectors")
        normals.setflags(write=False)
        offsets.setflags(write=False)
        object.__setattr__(self, 'normals', normals)
        object.__setattr__(self, 'offsets', offsets)

    @classmethod
    def from_frame(cls, frame, offsets):
        return cls(normals=frame.normals, offsets=offsets)

    @property
    def dim(self):
        return self.normals.shape[1]

    @property
    def n_constraints(self):
        return self.normals.shape[0]

    @property
    def finite(self):
        """Indices of constraints with a finite offset."""
        return tuple(int(m) for m in np.flatnonzero(np.isfinite(self.offsets)))

    @cached_property
    def derived(self):
        return derived_normals(self)

    def faces(self, level):
        """All FacetIndex of a level among finite constraints, excluding antiparallel/parallel pairs."""
        result = []
        for combo in itertools.combinations(self.finite, level):
            if level >= 2 and any(
                    (j, k) not in self.derived.pair for j, k in itertools.combinations(combo, 2)):
                continue
            if level == 3 and combo not in self.derived.triple_sets:
                continue
            result.append(FacetIndex.of(*combo))
        return result

    def flat_point(self, indices):
        """Minimum-norm point of the affine hull {v_m . z = b_m, m in indices}."""
        rows = self.normals[list(indices)]
        gram = rows @ rows.T
        _check_gram(gram)
        return rows.T @ np.linalg.solve(gram, self.offsets[list(indices)])


@dataclass(frozen=True, eq=False)
class DerivedNormals:
    """v_jk keyed by ordered pairs (j, k); v_jkl keyed by (j, k, l) with j < k."""
    pair: dict
    triple: dict
    excluded_pairs: frozenset
    excluded_triples: frozenset

    @cached_property
    def triple_sets(self):
        return frozenset(tuple(sorted(key)) for key in self.triple)


def _check_gram(gram):
    if gram.size and np.linalg.cond(gram) > GRAM_COND_MAX:
        raise SingularGram(f"Gram matrix is singular (cond={np.linalg.cond(gram):.3e})")


def inflate(polytope, t):
    """A(t) = {x : x . v_j <= b_j + t}; +inf stays +inf."""
    return Polytope(normals=polytope.normals, offsets=polytope.offsets + float(t))


def contains(polytope, x):
    """Membership for one point (d,) or a batch (N, d)."""
    x = np.asarray(x, dtype=float)
    inside = np.all(x @ polytope.normals.T <= polytope.offsets, axis=-1)
    return bool(inside) if x.ndim == 1 else inside


def band_contains(polytope, kappa, x):
    """x in A(kappa) minus A(-kappa)."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    outer = contains(inflate(polytope, kappa), x)
    inner = contains(inflate(polytope, -kappa), x)
    return outer & ~inner if isinstance(outer, np.ndarray) else (outer and not inner)


def derived_normal_pair(v_j, v_k):
    """(v_k - (v_j . v_k) v_j) normalized: the conormal of F_jk inside the hyperplane of F_j."""
    v_j = np.asarray(v_j, dtype=float)
    v_k = np.asarray(v_k, dtype=float)
    cos = float(v_j @ v_k)
    if abs(cos) > 1.0 - COLLINEAR_TOL:
        raise CollinearNormals(f"|v_j . v_k| = {abs(cos):.15f}")
    w = v_k - cos * v_j
    return w / np.linalg.norm(w)


def derived_normal_triple(v_j, v_k, v_l):
    """Unit vector in span{v_j, v_k, v_l} orthogonal to v_j and v_k with positive v_l component."""
    stack = np.vstack([v_j, v_k, v_l]).astype(float)
    if linalg.svdvals(stack)[-1] <= TRIPLE_SV_TOL:
        raise DegenerateTriple("normals span fewer than three dimensions")
    q1 = stack[0]
    q2 = derived_normal_pair(stack[0], stack[1])
    w = stack[2] - (stack[2] @ q1) * q1 - (stack[2] @ q2) * q2
    w /= np.linalg.norm(w)
    return w if w @ stack[2] > 0 else -w


def derived_normals(polytope):
    """Tables of v_jk and v_jkl over finite constraints, with exclusions recorded."""
    normals = polytope.normals
    pair, excluded_pairs = {}, set()
    for j, k in itertools.permutations(polytope.finite, 2):
        try:
            pair[(j, k)] = derived_normal_pair(normals[j], normals[k])
        except CollinearNormals:
            excluded_pairs.add((min(j, k), max(j, k)))

    triple, excluded_triples = {}, set()
    for combo in itertools.combinations(polytope.finite, 3):
        for j, k, l in ((combo[0], combo[1], combo[2]),
                        (combo[0], combo[2], combo[1]),
                        (combo[1], combo[2], combo[0])):
            if (j, k) not in pair:
                excluded_triples.add(combo)
                continue
            try:
                triple[(j, k, l)] = derived_normal_triple(normals[j], normals[k], normals[l])
            except DegenerateTriple:
                excluded_triples.add(combo)
    if excluded_pairs:
        logger.debug("Excluded parallel/antiparallel pairs: %s", sorted(excluded_pairs))
    return DerivedNormals(
        pair=pair,
        triple={key: value for key, value in triple.items() if tuple(sorted(key)) not in excluded_triples},
        excluded_pairs=frozenset(excluded_pairs),
        excluded_triples=frozenset(excluded_triples),
    )


def pair_normal(polytope, j, k):
    """v_jk for an ordered pair."""
    return polytope.derived.pair[(j, k)]


def triple_normal(polytope, j, k, l):
    """v_jkl; symmetric in (j, k)."""
    key = (min(j, k), max(j, k), l)
    return polytope.derived.triple[key]


def _rank_violations(polytope):
    """Subsets of 2-4 finite constraints whose normals are dependent while the offsets are consistent."""
    violations = []
    normals, offsets = polytope.normals, polytope.offsets
    for size in (2, 3, 4):
        for subset in itertools.combinations(polytope.finite, size):
            rows = normals[list(subset)]
            if np.linalg.matrix_rank(rows, tol=RANK_TOL) == size:
                continue
            target = offsets[list(subset)]
            z, *_ = np.linalg.lstsq(rows, target, rcond=None)
            if np.linalg.norm(rows @ z - target) <= INCIDENCE_TOL * (1.0 + np.linalg.norm(target)):
                violations.append(subset)
    return violations


def is_regular(polytope):
    return not _rank_violations(polytope)


def regularize(polytope, rng, eps):
    """
    Push offsets up by Uniform(0, eps) wherever a 2/3/4-subset of normals is
    rank deficient with consistent offsets, until no such subset remains.

    A regular polytope is returned unchanged. Offsets only grow.
    """
    if not 0 < eps <= 1e-6:
        raise ValueError(f"eps must lie in (0, 1e-6], got {eps}")
    current = polytope
    for attempt in range(MAX_REGULARIZE_RETRIES + 1):
        violations = _rank_violations(current)
        if not violations:
            if attempt:
                logger.info("Polytope regularized after %d perturbation round(s)", attempt)
            return current
        touched = sorted({m for subset in violations for m in subset})
        offsets = np.array(current.offsets)
        offsets[touched] += rng.uniform(0.0, eps, size=len(touched))
        current = Polytope(normals=current.normals, offsets=offsets)
    raise RegularizationFailed(f"rank conditions still violated after {MAX_REGULARIZE_RETRIES} retries")


def facet_relint_test(polytope, facet, x, tol=INCIDENCE_TOL):
    """
    x lies in relint(F) for the face F indexed by ``facet``: equality on the
    face's constraints, strict inequality (by ``tol``) on every other one.
    """
    x = np.asarray(x, dtype=float)
    values = x @ polytope.normals.T
    on = list(facet.indices)
    off = [m for m in range(polytope.n_constraints) if m not in facet.indices]
    result = np.all(np.abs(values[..., on] - polytope.offsets[on]) <= tol, axis=-1)
    if off:
        result &= np.all(values[..., off] < polytope.offsets[off] - tol, axis=-1)
    return bool(result) if x.ndim == 1 else result


def _cone_test(polytope, facet, directions, x):
    x = np.asarray(x, dtype=float)
    rows = polytope.normals[list(facet.indices)]
    system = rows @ directions.T
    _check_gram(system)
    rhs = x @ rows.T - polytope.offsets[list(facet.indices)]
    weights = np.linalg.solve(system, rhs.T).T
    base = x - weights @ directions
    result = np.all(weights > 0, axis=-1) & np.asarray(facet_relint_test(polytope, facet, base))
    return bool(result) if x.ndim == 1 else result


def outer_cone_membership(polytope, facet, x):
    """x in S_F = {y + sum_m s_m v_m : y in relint(F), s_m > 0}."""
    directions = polytope.normals[list(facet.indices)]
    return _cone_test(polytope, facet, directions, x)


def wedge_cone_membership(polytope, facet, directions, x):
    """x in {y + sum_i s_i d_i : y in relint(F), s_i > 0} for caller-supplied unit directions."""
    directions = np.array(directions, dtype=float, ndmin=2)
    if directions.shape != (facet.level, polytope.dim):
        raise BadDirections(f"expected {facet.level} directions in R^{polytope.dim}")
    if np.any(np.abs(np.linalg.norm(directions, axis=1) - 1.0) > DIRECTION_TOL):
        raise BadDirections("directions must be unit vectors")
    rows = polytope.normals[list(facet.indices)]
    coef, *_ = np.linalg.lstsq(rows.T, directions.T, rcond=None)
    if np.max(np.abs(rows.T @ coef - directions.T)) > DIRECTION_TOL:
        raise BadDirections("directions must lie in the span of the face's normals")
    if np.linalg.matrix_rank(directions, tol=DIRECTION_TOL) < facet.level:
        raise BadDirections("directions must span the normal space of the face")
    return _cone_test(polytope, facet, directions, x)


def _hull_axis(polytope, indices):
    point = polytope.flat_point(indices)
    norm = float(np.linalg.norm(point))
    if norm <= INCIDENCE_TOL:
        return polytope.normals[indices[0]].copy()
    return point / norm


def pair_wedge_directions(polytope, j, k):
    """(u_jk + u_jk^perp)/sqrt 2 and (u_jk - u_jk^perp)/sqrt 2 for N_{F_jk}."""
    u = _hull_axis(polytope, [j, k])
    basis = linalg.orth(polytope.normals[[j, k]].T)
    perp = basis @ (basis.T @ polytope.normals[k])
    perp -= (perp @ u) * u
    if np.linalg.norm(perp) <= INCIDENCE_TOL:
        perp = basis @ (basis.T @ polytope.normals[j])
        perp -= (perp @ u) * u
    perp /= np.linalg.norm(perp)
    return np.vstack([u + perp, u - perp]) / math.sqrt(2.0)


def triple_wedge_directions(polytope, j, k, l):
    """u_{1,jkl}, u_{2,jkl}, u_{3,jkl} rescaled to unit length for N_{F_jkl}."""
    u = _hull_axis(polytope, [j, k, l])
    basis = linalg.orth(polytope.normals[[j, k, l]].T)
    complement = basis @ linalg.null_space((basis.T @ u)[None, :])
    w1, w2 = complement[:, 0], complement[:, 1]
    half = u / math.sqrt(2.0)
    directions = np.vstack([
        w1 + half,
        -0.5 * w1 + math.sqrt(3.0) / 2.0 * w2 + half,
        -0.5 * w1 - math.sqrt(3.0) / 2.0 * w2 + half,
    ])
    return directions / np.linalg.norm(directions, axis=1, keepdims=True)


# Constructors

def orthant(d):
    """{x : x_j <= 0 for all j}."""
    return Polytope(normals=np.eye(d), offsets=np.zeros(d))


def half_space(d, j=0, b=0.0):
    """{x : x_j <= b} embedded in R^d as a one-constraint polytope."""
    return Polytope(normals=np.eye(d)[[j]], offsets=[b])


def rectangle(lower, upper):
    """{lower <= x <= upper} as 2d constraints (+/- e_j); infinite bounds drop constraints."""
    upper = np.asarray(upper, dtype=float)
    lower = np.asarray(lower, dtype=float)
    d = upper.shape[0]
    normals = np.vstack([np.eye(d), -np.eye(d)])
    return Polytope(normals=normals, offsets=np.concatenate([upper, -lower]))


def random_polytope(d, rng, n_constraints=None, offset_range=(-2.0, 2.0)):
    m = d if n_constraints is None else n_constraints
    normals = rng.standard_normal((m, d))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return Polytope(normals=normals, offsets=rng.uniform(*offset_range, size=m))


def parse_polytope(text):
    """
    Literal format: first line ``d``, then one line per constraint with d
    normal coordinates followed by the offset (``inf`` allowed).
    """
    lines = [line.split() for line in text.splitlines() if line.strip() and not line.lstrip().startswith('#')]
    if not lines:
        raise PolytopeParseError("empty polytope literal")
    try:
        d = int(lines[0][0])
        rows = [[float(token) for token in line] for line in lines[1:]]
    except ValueError as exc:
        raise PolytopeParseError(str(exc)) from exc
    if not rows or any(len(row) != d + 1 for row in rows):
        raise PolytopeParseError(f"each constraint line needs {d} coordinates and an offset")
    table = np.array(rows)
    normals, offsets = table[:, :d], table[:, d]
    norms = np.linalg.norm(normals, axis=1)
    if np.any(norms == 0):
        raise PolytopeParseError("zero normal vector")
    # rescaling a constraint by its norm leaves the set unchanged
    return Polytope(normals=normals / norms[:, None], offsets=offsets / norms)


def format_polytope(polytope):
    lines = [str(polytope.dim)]
    for row, b in zip(polytope.normals, polytope.offsets):
        lines.append(' '.join(repr(float(v)) for v in row) + ' ' + ('inf' if np.isinf(b) else repr(float(b))))
    return '\n'.join(lines) + '\n'
