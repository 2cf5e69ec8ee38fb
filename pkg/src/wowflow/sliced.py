"""Sliced-Wasserstein values and gradients for uniform empirical measures.

Along each direction theta the two clouds are projected and sorted; the
optimal 1D coupling between uniform empirical measures is the monotone
(north-west corner) coupling of the sorted values.  For equal sizes this
is plain rank-to-rank matching.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DimensionMismatch, LengthMismatch
from .measures import PointCloud


@dataclass(frozen=True, eq=False)
class ProjectionSet:
    """L unit directions on the sphere S^{d-1} and the seed that produced them."""

    directions: np.ndarray
    seed: int

    def __init__(self, directions, seed: int = 0):
        theta = np.array(directions, dtype=np.float64)
        if theta.ndim == 1:
            theta = theta[None, :]
        if theta.ndim != 2 or theta.shape[0] < 1 or theta.shape[1] < 1:
            raise ValueError(f"directions must be an (L, d) array, got shape {theta.shape}")
        norms = np.linalg.norm(theta, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("every direction must have unit Euclidean norm")
        theta.setflags(write=False)
        object.__setattr__(self, "directions", theta)
        object.__setattr__(self, "seed", int(seed))

    @property
    def L(self) -> int:
        return self.directions.shape[0]

    @property
    def d(self) -> int:
        return self.directions.shape[1]


def sample_projections(L: int, d: int, seed) -> ProjectionSet:
    """Draw L directions uniformly on S^{d-1} by normalizing Philox Gaussians.

    ``seed`` may be an int or a ``numpy.random.SeedSequence``.
    """
    if L < 1 or d < 1:
        raise ValueError(f"need L >= 1 and d >= 1, got L={L}, d={d}")
    if isinstance(seed, np.random.SeedSequence):
        key = int(seed.generate_state(1, np.uint64)[0])
    else:
        key = int(seed)
    rng = np.random.Generator(np.random.Philox(key))
    g = rng.standard_normal((L, d))
    norms = np.linalg.norm(g, axis=1)
    # a zero Gaussian draw has probability zero, but redraw rather than divide by it
    while np.any(norms == 0.0):
        bad = norms == 0.0
        g[bad] = rng.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(g, axis=1)
    return ProjectionSet(g / norms[:, None], key)


@dataclass(frozen=True)
class Projected:
    """Projections of one cloud onto every direction, sorted per direction."""

    sorted: np.ndarray  # (L, n)
    order: np.ndarray  # (L, n) flat indices into the (L, n) projection array, in sorted order

    @property
    def n(self) -> int:
        return self.sorted.shape[1]


def project(points: np.ndarray, directions: np.ndarray) -> Projected:
    """Project onto each direction and sort; ties keep the original point order.

    Quicksort is used first and redone stably only on rows that contain ties.
    """
    proj = directions @ points.T
    L, n = proj.shape
    offsets = (np.arange(L) * n)[:, None]
    flat = np.argsort(proj, axis=1) + offsets
    srt = proj.ravel()[flat]
    tied = np.any(srt[:, 1:] == srt[:, :-1], axis=1)
    if np.any(tied):
        flat[tied] = np.argsort(proj[tied], axis=1, kind="stable") + offsets[tied]
        srt = proj.ravel()[flat]
    return Projected(srt, flat)


def project_sorted(points: np.ndarray, directions: np.ndarray) -> Projected:
    """Sorted projections only, for clouds that receive no gradient."""
    return Projected(np.sort(directions @ points.T, axis=1), None)


@lru_cache(maxsize=256)
def monotone_coupling(n: int, m: int):
    """Index pairs and masses of the monotone coupling of U{1..n} and U{1..m}.

    Returns ``(ia, ib, mass, starts)``: segment s couples the ia[s]-th smallest
    source value with the ib[s]-th smallest target value with mass mass[s];
    ``starts`` are the first segment of each source rank (ia is non-decreasing).
    Breakpoints live on the integer grid of multiples of 1/(n*m), so the masses
    are exact ratios.
    """
    cuts = np.union1d(np.arange(n + 1) * m, np.arange(m + 1) * n)
    t0, t1 = cuts[:-1], cuts[1:]
    ia = t0 // m
    ib = t0 // n
    mass = (t1 - t0) / float(n * m)
    starts = np.searchsorted(ia, np.arange(n))
    for arr in (ia, ib, mass, starts):
        arr.setflags(write=False)
    return ia, ib, mass, starts


def transport_1d(pa: Projected, pb: Projected, p: int):
    """Per-direction 1D OT cost and per-rank Wasserstein gradient terms.

    For p=2 returns ``(W_2^2 per direction, d/da of W_2^2/2 scaled by n)``; for
    p=1 returns ``(W_1 per direction, n * d/da W_1)``.  Both arrays are indexed
    by sorted rank of the source cloud.
    """
    n, m = pa.n, pb.n
    if n == m:
        diff = pa.sorted - pb.sorted
        if p == 2:
            return np.einsum("ij,ij->i", diff, diff) / n, diff
        return np.abs(diff).sum(axis=1) / n, np.sign(diff)
    ia, ib, mass, starts = monotone_coupling(n, m)
    diff = pa.sorted[:, ia] - pb.sorted[:, ib]
    if p == 2:
        cost = (diff * diff) @ mass
        rank_term = n * np.add.reduceat(diff * mass, starts, axis=1)
    else:
        cost = np.abs(diff) @ mass
        rank_term = n * np.add.reduceat(np.sign(diff) * mass, starts, axis=1)
    return cost, rank_term


def rank_term_to_points(pa: Projected, rank_term: np.ndarray, directions: np.ndarray) -> np.ndarray:
    """Average ``rank_term[l, rank(i)] * theta_l`` over directions -> (n, d)."""
    per_point = np.empty(rank_term.size)
    per_point[pa.order.ravel()] = rank_term.ravel()
    return per_point.reshape(rank_term.shape).T @ directions / directions.shape[0]


def _check_pair(mu: PointCloud, nu: PointCloud, proj: ProjectionSet) -> None:
    if mu.d != nu.d or mu.d != proj.d:
        raise DimensionMismatch(f"dimensions differ: mu d={mu.d}, nu d={nu.d}, projections d={proj.d}")
    if not (mu.is_uniform and nu.is_uniform):
        raise ValueError("sliced computations require uniformly weighted clouds")


def w2_squared_1d(a, b) -> float:
    """Exact squared 2-Wasserstein distance between two equal-size uniform samples on R."""
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.shape != b.shape:
        raise LengthMismatch(f"lengths differ: {a.size} vs {b.size}")
    diff = a - b
    return float(np.mean(diff * diff))


def quantile_match(a, b) -> np.ndarray:
    """Target value matched to each a_i: b's empirical quantile at level rank(a_i)/n.

    Ranks are 1-based with ties broken by index; the quantile at level q is
    the ceil(q*m)-th smallest b.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    n, m = a.size, b.size
    if n < 1 or m < 1:
        raise ValueError("quantile_match needs non-empty inputs")
    rank = np.empty(n, dtype=np.int64)
    rank[np.argsort(a, kind="stable")] = np.arange(1, n + 1)
    idx = (rank * m + n - 1) // n
    return b[idx - 1]


def sw2_squared(mu: PointCloud, nu: PointCloud, proj: ProjectionSet) -> float:
    """Monte-Carlo SW_2^2 over the given directions."""
    _check_pair(mu, nu, proj)
    theta = proj.directions
    cost, _ = transport_1d(project_sorted(mu.points, theta), project_sorted(nu.points, theta), 2)
    return float(np.mean(cost))


def sw_potential_grad(mu: PointCloud, nu: PointCloud, proj: ProjectionSet) -> np.ndarray:
    """Wasserstein gradient of ``mu -> SW_2^2(mu, nu) / 2`` at the points of mu.

    Each point moves along theta by its projected value minus its matched
    target value, averaged over directions.
    """
    _check_pair(mu, nu, proj)
    theta = proj.directions
    pa = project(mu.points, theta)
    _, rank_term = transport_1d(pa, project_sorted(nu.points, theta), 2)
    return rank_term_to_points(pa, rank_term, theta)


def sw1_and_sign_grad(mu: PointCloud, nu: PointCloud, proj: ProjectionSet):
    """Monte-Carlo SW_1 and its Wasserstein gradient in mu (sign subgradient, sign(0)=0)."""
    _check_pair(mu, nu, proj)
    theta = proj.directions
    pa = project(mu.points, theta)
    cost, rank_term = transport_1d(pa, project_sorted(nu.points, theta), 1)
    return float(np.mean(cost)), rank_term_to_points(pa, rank_term, theta)
