"""Half squared MMD between two mixtures of point clouds, and its WoW gradient.

For P = sum_a w_a delta_{mu_a} and Q = sum_k v_k delta_{nu_k},

    MMD^2(P, Q) / 2 = 1/2 sum w_a w_b K(mu_a, mu_b)     (interaction)
                    -     sum w_a v_k K(mu_a, nu_k)     (potential)
                    + 1/2 sum v_k v_l K(nu_k, nu_l)     (constant)

and the gradient field on cloud a is
``sum_b w_b grad_1 K(mu_a, mu_b) - sum_k v_k grad_1 K(mu_a, nu_k)``.

Every kernel pair inside one evaluation shares the same projections, so the
objective is a deterministic function of the particle positions and the
gradient is its exact derivative (up to the n*C rescaling between Euclidean
and Wasserstein gradients).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .kernels import KernelSpec
from .measures import Displacement, MetaMeasure, PointCloud
from .sliced import ProjectionSet, Projected, project, project_sorted, rank_term_to_points, transport_1d


@dataclass(frozen=True)
class ObjectiveValue:
    mmd_squared_half: float
    potential_part: float
    interaction_part: float
    constant_part: float


def _check(P: MetaMeasure, Q: MetaMeasure, proj: ProjectionSet) -> None:
    if P.d != Q.d or P.d != proj.d:
        raise DimensionMismatch(f"dimensions differ: P d={P.d}, Q d={Q.d}, projections d={proj.d}")
    for name, M in (("P", P), ("Q", Q)):
        if not all(c.is_uniform for c in M.clouds):
            raise ValueError(f"{name}: every cloud must be uniformly weighted")


def _pair(spec: KernelSpec, pa: Projected, pb: Projected):
    """Kernel value, gradient coefficient and per-rank base gradient for one pair."""
    cost, rank_term = transport_1d(pa, pb, 1 if spec.uses_sw1 else 2)
    stat = float(np.mean(cost))
    if spec.uses_sw1:
        return spec.value_from(0.0, stat), spec.grad_coefficient(0.0, stat), rank_term
    return spec.value_from(stat), spec.grad_coefficient(stat), rank_term


def _accumulate(acc, scale, term):
    if acc is None:
        return scale * term
    term *= scale
    acc += term
    return acc


def _self_value(spec: KernelSpec) -> float:
    return spec.value_from(0.0, 0.0)


def evaluate(P: MetaMeasure, Q: MetaMeasure, spec: KernelSpec, proj: ProjectionSet,
             with_value: bool = True, with_gradient: bool = True):
    """Objective and/or gradient in one pass over the kernel pairs.

    Returns ``(ObjectiveValue or None, Displacement or None)``.
    """
    _check(P, Q, proj)
    theta = proj.directions
    proj_P = [project(c.points, theta) for c in P.clouds]
    proj_Q = [project_sorted(c.points, theta) for c in Q.clouds]
    wP, wQ = P.mix_weights, Q.mix_weights

    K_PP = np.empty((P.C, P.C))
    K_PQ = np.empty((P.C, Q.C))
    fields = []
    for a, pa in enumerate(proj_P):
        acc = None
        for b, pb in enumerate(proj_P):
            if b == a:
                # identical point lists: SW = 0, base gradient = 0
                K_PP[a, a] = _self_value(spec)
                continue
            if b < a and not with_gradient:
                K_PP[a, b] = K_PP[b, a]
                continue
            value, coef, rank_term = _pair(spec, pa, pb)
            K_PP[a, b] = value
            if with_gradient and coef != 0.0:
                acc = _accumulate(acc, wP[b] * coef, rank_term)
        for k, pk in enumerate(proj_Q):
            value, coef, rank_term = _pair(spec, pa, pk)
            K_PQ[a, k] = value
            if with_gradient and coef != 0.0:
                acc = _accumulate(acc, -wQ[k] * coef, rank_term)
        if with_gradient:
            if acc is None:
                fields.append(np.zeros_like(P.clouds[a].points))
            else:
                fields.append(rank_term_to_points(pa, acc, theta))

    objective = None
    if with_value:
        K_QQ = _gram(spec, proj_Q)
        interaction = 0.5 * float(wP @ K_PP @ wP)
        potential = -float(wP @ K_PQ @ wQ)
        constant = 0.5 * float(wQ @ K_QQ @ wQ)
        objective = ObjectiveValue(interaction + potential + constant, potential, interaction, constant)
    gradient = Displacement(fields) if with_gradient else None
    return objective, gradient


def _gram(spec: KernelSpec, projected) -> np.ndarray:
    C = len(projected)
    G = np.empty((C, C))
    for a in range(C):
        G[a, a] = _self_value(spec)
        for b in range(a + 1, C):
            G[a, b] = G[b, a] = _pair(spec, projected[a], projected[b])[0]
    return G


def mmd_half(P: MetaMeasure, Q: MetaMeasure, spec: KernelSpec, proj: ProjectionSet) -> ObjectiveValue:
    return evaluate(P, Q, spec, proj, with_gradient=False)[0]


def wow_gradient(P: MetaMeasure, Q: MetaMeasure, spec: KernelSpec, proj: ProjectionSet) -> Displacement:
    return evaluate(P, Q, spec, proj, with_value=False)[1]


def kernel_matrix(spec: KernelSpec, A, B, proj: ProjectionSet) -> np.ndarray:
    """Matrix ``K(A_i, B_j)`` for two sequences of point clouds under shared projections."""
    A = [c for c in A]
    B = [c for c in B]
    for c in A + B:
        if not isinstance(c, PointCloud):
            raise TypeError("kernel_matrix expects PointCloud sequences")
        if c.d != proj.d:
            raise DimensionMismatch(f"cloud dimension {c.d} != projection dimension {proj.d}")
    theta = proj.directions
    pa = [project_sorted(c.points, theta) for c in A]
    pb = [project_sorted(c.points, theta) for c in B]
    K = np.empty((len(A), len(B)))
    for i, x in enumerate(pa):
        for j, y in enumerate(pb):
            if A[i] is B[j] or A[i] == B[j]:
                K[i, j] = _self_value(spec)
            else:
                K[i, j] = _pair(spec, x, y)[0]
    return K
