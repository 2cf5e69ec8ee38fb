"""Reference implementations used to check the production code paths.

Nothing here reuses the sorting, assignment or gradient code it is meant to
check: transport costs come from enumerating permutations and gradients from
central finite differences.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import SizeLimitExceeded, SizeMismatch
from .measures import Displacement, MetaMeasure, PointCloud

BRUTE_FORCE_W2_MAX = 8
BRUTE_FORCE_WOW_MAX = 5
DEFAULT_FD_STEP = 1e-5
DEFAULT_JITTER = 1e-7


@dataclass(frozen=True)
class GradCheckReport:
    max_relative_error: float
    worst_coordinate: tuple  # (cloud, point, axis)
    step_h: float

    def passed(self, tolerance: float) -> bool:
        return self.max_relative_error < tolerance

    def __str__(self):
        c, i, j = self.worst_coordinate
        return (f"max relative error {self.max_relative_error:.3e} "
                f"at cloud {c}, point {i}, axis {j} (h={self.step_h:g})")


def fd_gradient(objective: Callable[[MetaMeasure], float], P: MetaMeasure,
                h: float = DEFAULT_FD_STEP) -> Displacement:
    """Central-difference Euclidean gradient of ``objective`` in every particle coordinate."""
    if not h > 0:
        raise ValueError("finite-difference step must be positive")
    arrays = [np.array(c.points) for c in P.clouds]
    fields = []
    for c, x in enumerate(arrays):
        g = np.zeros_like(x)
        for i in range(x.shape[0]):
            for j in range(x.shape[1]):
                orig = x[i, j]
                x[i, j] = orig + h
                f_plus = objective(P.with_points(arrays))
                x[i, j] = orig - h
                f_minus = objective(P.with_points(arrays))
                x[i, j] = orig
                g[i, j] = (f_plus - f_minus) / (2.0 * h)
        fields.append(g)
    return Displacement(fields)


def wasserstein_scale(P: MetaMeasure) -> float:
    """Factor n*C turning a Euclidean particle gradient into the WoW gradient (uniform mixtures)."""
    sizes = set(P.sizes)
    if len(sizes) != 1:
        raise ValueError("the n*C factor needs clouds of equal size")
    return float(sizes.pop() * P.C)


def jitter(P: MetaMeasure, scale: float = DEFAULT_JITTER, seed: int = 0) -> MetaMeasure:
    """Deterministically perturb every coordinate to move away from projection ties."""
    rng = np.random.default_rng(seed)
    return P.with_points([c.points + scale * rng.standard_normal(c.points.shape) for c in P.clouds])


def compare(analytic: Displacement, reference: Displacement, h: float) -> GradCheckReport:
    """Normwise relative error: max |a - r| over coordinates divided by max |r|."""
    worst, where, denom = -1.0, (0, 0, 0), 0.0
    for c, (a, r) in enumerate(zip(analytic.fields, reference.fields)):
        denom = max(denom, float(np.max(np.abs(r))))
        err = np.abs(a - r)
        idx = np.unravel_index(int(np.argmax(err)), err.shape)
        if err[idx] > worst:
            worst, where = float(err[idx]), (c, int(idx[0]), int(idx[1]))
    if denom == 0.0:
        rel = 0.0 if worst == 0.0 else math.inf
    else:
        rel = worst / denom
    return GradCheckReport(rel, where, h)


def _check_brute_size(n: int, cap: int, what: str) -> None:
    if n > cap:
        raise SizeLimitExceeded(f"{what}: {n} exceeds the brute-force cap of {cap}")


def brute_force_w2_1d(a, b) -> float:
    """Minimum over all permutations of the mean squared 1D matching cost."""
    a = [float(v) for v in np.ravel(a)]
    b = [float(v) for v in np.ravel(b)]
    if len(a) != len(b):
        raise SizeMismatch("brute-force 1D matching needs equal lengths")
    _check_brute_size(len(a), BRUTE_FORCE_W2_MAX, "1D sample size")
    best = math.inf
    for perm in itertools.permutations(range(len(b))):
        best = min(best, sum((x - b[p]) ** 2 for x, p in zip(a, perm)))
    return best / len(a)


def brute_force_w2(mu: PointCloud, nu: PointCloud) -> float:
    """Exact W_2^2 between equal-size uniform clouds by enumerating all n! matchings."""
    if mu.n != nu.n:
        raise SizeMismatch("brute-force W2 needs equal sizes")
    _check_brute_size(mu.n, BRUTE_FORCE_W2_MAX, "cloud size")
    xs = [tuple(float(v) for v in p) for p in mu.points]
    ys = [tuple(float(v) for v in p) for p in nu.points]
    cost = [[sum((u - v) ** 2 for u, v in zip(x, y)) for y in ys] for x in xs]
    best = math.inf
    for perm in itertools.permutations(range(len(ys))):
        best = min(best, sum(cost[i][p] for i, p in enumerate(perm)))
    return best / len(xs)


def brute_force_wow(P: MetaMeasure, Q: MetaMeasure) -> float:
    """Squared WoW distance between uniform mixtures by enumerating all C! cloud matchings."""
    if P.C != Q.C:
        raise SizeMismatch("brute-force WoW needs the same number of clouds")
    _check_brute_size(P.C, BRUTE_FORCE_WOW_MAX, "number of clouds")
    cost = [[brute_force_w2(mu, nu) for nu in Q.clouds] for mu in P.clouds]
    best = math.inf
    for perm in itertools.permutations(range(Q.C)):
        best = min(best, sum(cost[a][p] for a, p in enumerate(perm)))
    return best / P.C


def gradcheck(spec, C: int = 3, n: int = 5, d: int = 2, seed: int = 0, n_projections: int = 64,
              h: float = DEFAULT_FD_STEP, scale: float = None, spread: float = 0.3) -> GradCheckReport:
    """Compare the assembled WoW gradient with n*C-scaled finite differences of the objective."""
    from .data_io import make_gaussian_blobs
    from .functional import mmd_half, wow_gradient
    from .sliced import sample_projections

    P = jitter(make_gaussian_blobs(C, n, d, spread=spread, seed=seed, center_scale=0.5), seed=seed + 17)
    Q = jitter(make_gaussian_blobs(C, n, d, spread=spread, seed=seed + 1, center_scale=0.5), seed=seed + 18)
    proj = sample_projections(n_projections, d, seed)
    analytic = wow_gradient(P, Q, spec, proj)
    fd = fd_gradient(lambda M: mmd_half(M, Q, spec, proj).mmd_squared_half, P, h)
    factor = wasserstein_scale(P) if scale is None else scale
    return compare(analytic, fd * factor, h)
