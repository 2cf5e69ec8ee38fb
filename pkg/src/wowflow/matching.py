"""Exact Wasserstein-over-Wasserstein distances, geodesics and label alignment.

The inner W_2^2 between two equal-size uniform clouds is an assignment
problem (solved exactly with scipy's Jonker-Volgenant solver).  The outer
problem between mixtures is an assignment when both mixtures are uniform with
the same number of clouds, and a small linear program otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog
from scipy.spatial.distance import cdist

from .errors import DimensionMismatch, SizeLimitExceeded, SizeMismatch
from .measures import MetaMeasure, PointCloud

DEFAULT_SIZE_CAP = 256
# beyond this many clouds the lexicographic tie-break is skipped
LEX_TIEBREAK_MAX = 64


@dataclass(frozen=True, eq=False)
class Assignment:
    """Optimal outer coupling: ``permutation[a]`` is the target cloud of source cloud a.

    ``permutation`` is None for the general (unequal weights or counts) case,
    where only ``plan`` is meaningful.
    """

    plan: np.ndarray
    cost: float
    permutation: Optional[np.ndarray] = None


def _inner_cost(mu: PointCloud, nu: PointCloud, size_cap: int) -> np.ndarray:
    if mu.n != nu.n:
        raise SizeMismatch(f"inner clouds must have equal sizes, got {mu.n} and {nu.n}")
    if mu.n > size_cap:
        raise SizeLimitExceeded(f"cloud of {mu.n} points exceeds the exact-solver cap of {size_cap}; subsample first")
    if not (mu.is_uniform and nu.is_uniform):
        raise ValueError("exact W2 requires uniformly weighted clouds")
    if mu.d != nu.d:
        raise DimensionMismatch(f"clouds live in different dimensions ({mu.d} vs {nu.d})")
    return cdist(mu.points, nu.points, "sqeuclidean")


def w2_assignment(mu: PointCloud, nu: PointCloud, size_cap: int = DEFAULT_SIZE_CAP):
    """Exact W_2^2 and the optimal point matching ``perm`` (x_i -> y_perm[i])."""
    M = _inner_cost(mu, nu, size_cap)
    rows, cols = linear_sum_assignment(M)
    return float(M[rows, cols].sum() / mu.n), cols


def w2_exact(mu: PointCloud, nu: PointCloud, size_cap: int = DEFAULT_SIZE_CAP) -> float:
    """Exact squared 2-Wasserstein distance between equal-size uniform clouds."""
    return w2_assignment(mu, nu, size_cap)[0]


def cost_matrix(P: MetaMeasure, Q: MetaMeasure, size_cap: int = DEFAULT_SIZE_CAP) -> np.ndarray:
    """Matrix of exact W_2^2 between every cloud of P and every cloud of Q."""
    M = np.empty((P.C, Q.C))
    for a, mu in enumerate(P.clouds):
        for b, nu in enumerate(Q.clouds):
            M[a, b] = w2_exact(mu, nu, size_cap)
    return M


def _lexmin_assignment(M: np.ndarray) -> np.ndarray:
    """Lexicographically smallest permutation among the optimal assignments of M."""
    C = M.shape[0]
    rows, cols = linear_sum_assignment(M)
    best = M[rows, cols].sum()
    if C > LEX_TIEBREAK_MAX:
        return cols
    tol = 1e-12 * max(1.0, abs(best))
    perm = np.empty(C, dtype=np.int64)
    free = list(range(C))
    fixed = 0.0
    for i in range(C):
        for j in free:
            rest = [c for c in free if c != j]
            total = fixed + M[i, j]
            if rest:
                sub = M[np.ix_(range(i + 1, C), rest)]
                r, c = linear_sum_assignment(sub)
                total += sub[r, c].sum()
            if total <= best + tol:
                perm[i] = j
                fixed += M[i, j]
                free.remove(j)
                break
        else:  # pragma: no cover - the solver's own optimum is always feasible
            raise RuntimeError("assignment tie-break failed")
    return perm


def _optimal_plan(M: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact discrete OT plan between weights a and b for cost M (HiGHS LP)."""
    m, n = M.shape
    A_eq = np.zeros((m + n, m * n))
    for i in range(m):
        A_eq[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        A_eq[m + j, j::n] = 1.0
    res = linprog(M.ravel(), A_eq=A_eq, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"outer transport LP failed: {res.message}")
    return np.maximum(res.x.reshape(m, n), 0.0)


def solve_outer(M: np.ndarray, wP: np.ndarray, wQ: np.ndarray) -> Assignment:
    """Outer OT for a precomputed cost matrix."""
    C_P, C_Q = M.shape
    uniform = C_P == C_Q and np.all(wP == wP[0]) and np.all(wQ == wQ[0])
    if uniform:
        perm = _lexmin_assignment(M)
        plan = np.zeros((C_P, C_Q))
        plan[np.arange(C_P), perm] = 1.0 / C_P
        return Assignment(plan, float(M[np.arange(C_P), perm].sum() / C_P), perm)
    plan = _optimal_plan(M, wP, wQ)
    return Assignment(plan, float((plan * M).sum()))


def wow_distance(P: MetaMeasure, Q: MetaMeasure, size_cap: int = DEFAULT_SIZE_CAP):
    """Squared WoW distance and the optimal outer assignment or plan."""
    M = cost_matrix(P, Q, size_cap)
    result = solve_outer(M, P.mix_weights, Q.mix_weights)
    return result.cost, result


def wow_geodesic(P: MetaMeasure, Q: MetaMeasure, t: float, size_cap: int = DEFAULT_SIZE_CAP) -> MetaMeasure:
    """Point of the constant-speed geodesic from P (t=0) to Q (t=1).

    Clouds are paired by the optimal outer assignment and points inside each
    pair by the inner assignment; every point then moves on a straight line.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    _, assignment = wow_distance(P, Q, size_cap)
    if assignment.permutation is None:
        raise ValueError("geodesics need uniform mixtures with the same number of clouds")
    moved = []
    for a, mu in enumerate(P.clouds):
        nu = Q.clouds[assignment.permutation[a]]
        _, perm = w2_assignment(mu, nu, size_cap)
        moved.append((1.0 - t) * mu.points + t * nu.points[perm])
    return P.with_points(moved)


def align_labels(P_flowed: MetaMeasure, Q_target: MetaMeasure, size_cap: int = DEFAULT_SIZE_CAP) -> np.ndarray:
    """Target class index of every flowed cloud, from the optimal outer assignment."""
    _, assignment = wow_distance(P_flowed, Q_target, size_cap)
    if assignment.permutation is None:
        # general weights: send each cloud where most of its mass goes
        return np.argmax(assignment.plan, axis=1)
    return assignment.permutation
