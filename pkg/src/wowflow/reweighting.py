"""Flows whose mixture weights may change: gradient steps alternated with a
mirror-Sinkhorn reweighting phase.

The reweighting phase optimizes a coupling ``G`` between the current clouds
and themselves, with first marginal fixed to the current weights ``alpha``:

    f(G) = <cost, G> + tau * MMD^2(sum_j (G^T 1)_j delta_{z_j}, Q)

Each half-step multiplies G by ``exp(-eta * grad f(G))`` and rescales the rows
back to ``alpha``.  The new weights are the column sums of G.  By default G
starts at the identity coupling diag(alpha), which costs nothing and keeps
the weights, so a mixture already at the target is an exact fixed point;
off-diagonal cells start at the floor and grow multiplicatively.  The cost
between clouds is SW_2^2 under the phase's frozen projections, or exact W_2^2
on request.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateRow
from .flow import FlowConfig, FlowState, SnapshotSink, flow_step, run_flow, step_projections
from .functional import kernel_matrix
from .kernels import KernelSpec
from .matching import cost_matrix
from .measures import MetaMeasure
from .sliced import ProjectionSet, project_sorted, transport_1d

KILLED_THRESHOLD = 1e-12


@dataclass(frozen=True)
class ReweightConfig:
    # eta * tau_penalty of order 1 keeps the multiplicative updates from overshooting
    eta: float = 1e-4
    tau_penalty: float = 1e4
    inner_steps: int = 2000
    floor: float = 1e-30
    exact_cost: bool = False
    init: str = "identity"  # starting coupling: "identity" (diag(alpha)) or "product" (alpha alpha^T)

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not self.tau_penalty > 0:
            raise ValueError("tau_penalty must be positive")
        if self.inner_steps < 1:
            raise ValueError("inner_steps must be >= 1")
        if not self.floor > 0:
            raise ValueError("floor must be positive")
        if self.init not in ("identity", "product"):
            raise ValueError(f"init must be 'identity' or 'product', got {self.init!r}")


@dataclass
class ReweightedState(FlowState):
    weight_log: list = field(default_factory=list)  # (iteration, weights, max row-marginal error)


def mmd_weight_grad(beta, supports, Q: MetaMeasure, spec: KernelSpec, proj: ProjectionSet) -> np.ndarray:
    """Gradient in beta of MMD^2(sum_j beta_j delta_{z_j}, Q): ``2 (K_zz beta - K_zQ w_Q)``."""
    beta = np.asarray(beta, dtype=np.float64)
    supports = list(supports)
    K_zz = kernel_matrix(spec, supports, supports, proj)
    K_zq = kernel_matrix(spec, supports, Q.clouds, proj)
    return 2.0 * (K_zz @ beta - K_zq @ Q.mix_weights)


def mirror_sinkhorn_step(plan, alpha, grad_f, eta: float, cost=None, floor: float = 1e-30) -> np.ndarray:
    """One mirror-descent step on a coupling followed by exact row rescaling.

    The full gradient is ``grad_f`` plus ``cost`` when given.  Entries are
    floored at ``floor`` first so that mass can return to any cell.
    """
    P = np.maximum(np.asarray(plan, dtype=np.float64), floor)
    G = np.asarray(grad_f, dtype=np.float64)
    if cost is not None:
        G = G + cost
    G = np.broadcast_to(G, P.shape)
    # a per-row shift cancels in the rescaling and keeps exp() <= 1
    shifted = G - G.min(axis=1, keepdims=True)
    P_new = P * np.exp(-eta * shifted)
    row = P_new.sum(axis=1)
    bad = ~(np.isfinite(row) & (row > 0))
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise DegenerateRow(f"row {i} of the plan vanished; eta={eta} is too large", row=i)
    return P_new * (np.asarray(alpha, dtype=np.float64) / row)[:, None]


def sw_cost_matrix(clouds, proj: ProjectionSet) -> np.ndarray:
    theta = proj.directions
    pr = [project_sorted(c.points, theta) for c in clouds]
    C = len(pr)
    M = np.zeros((C, C))
    for i in range(C):
        for j in range(i + 1, C):
            M[i, j] = M[j, i] = float(np.mean(transport_1d(pr[i], pr[j], 2)[0]))
    return M


def reweight(P: MetaMeasure, Q: MetaMeasure, spec: KernelSpec, proj: ProjectionSet, rcfg: ReweightConfig):
    """Run the reweighting phase; returns (new weights, final plan, max row-marginal error)."""
    clouds = list(P.clouds)
    alpha = np.array(P.mix_weights)
    if rcfg.exact_cost:
        cost = cost_matrix(P, P)
    else:
        cost = sw_cost_matrix(clouds, proj)
    # kernel matrices do not change inside the phase
    K_zz = kernel_matrix(spec, clouds, clouds, proj)
    k_q = kernel_matrix(spec, clouds, Q.clouds, proj) @ Q.mix_weights
    plan = np.diag(alpha) if rcfg.init == "identity" else np.outer(alpha, alpha)
    max_err = 0.0
    for _ in range(rcfg.inner_steps):
        beta = plan.sum(axis=0)
        g = rcfg.tau_penalty * 2.0 * (K_zz @ beta - k_q)
        plan = mirror_sinkhorn_step(plan, alpha, g[None, :], rcfg.eta, cost=cost, floor=rcfg.floor)
        max_err = max(max_err, float(np.max(np.abs(plan.sum(axis=1) - alpha))))
    weights = plan.sum(axis=0)
    return weights / weights.sum(), plan, max_err


def killed_clouds(P: MetaMeasure, threshold: float = KILLED_THRESHOLD) -> list:
    return [c for c, w in enumerate(P.mix_weights) if w < threshold]


def run_reweighted_flow(P0: MetaMeasure, Q: MetaMeasure, cfg: FlowConfig, rcfg: ReweightConfig,
                        sink: Optional[SnapshotSink] = None) -> ReweightedState:
    """Alternate flow steps (weights frozen) with a reweighting phase every ``snapshot_every`` steps."""
    log: list = []

    def step(state, Q, cfg):
        moved = flow_step(state, Q, cfg)
        k = moved.iteration
        if k % cfg.snapshot_every != 0:
            return moved
        proj = step_projections(cfg, k, moved.P.d)
        try:
            weights, _, err = reweight(moved.P, Q, cfg.kernel, proj, rcfg)
        except DegenerateRow as e:
            e.iteration = k
            raise
        log.append((k, weights, err))
        moved.P = moved.P.with_weights(weights)
        return moved

    final = run_flow(P0, Q, cfg, sink, step=step)
    return ReweightedState(final.P, final.velocity, final.iteration, final.objective_trace, log)
