"""Forward-Euler WoW gradient descent with optional heavy-ball momentum.

Each step, for every particle x of every cloud:

    v <- grad(x) + m * v
    x <- x - tau * v

with v initialized to zero.  m = 0 gives plain Wasserstein gradient descent.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import NonFiniteGradient
from .functional import evaluate, mmd_half
from .kernels import KernelSpec
from .measures import Displacement, MetaMeasure, displace
from .sliced import ProjectionSet, sample_projections

log = logging.getLogger(__name__)

SnapshotSink = Callable[[int, MetaMeasure, float], None]


@dataclass(frozen=True)
class FlowConfig:
    kernel: KernelSpec
    step_size: float = 0.1
    momentum: float = 0.0
    iterations: int = 1000
    n_projections: int = 500
    seed: int = 0
    resample_projections: bool = True
    snapshot_every: int = 100
    trace_every: int = 1

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError(f"step size must be positive, got {self.step_size}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.n_projections < 1:
            raise ValueError("need at least one projection")
        if self.snapshot_every < 1:
            raise ValueError("snapshot_every must be >= 1")
        if self.trace_every < 1:
            raise ValueError("trace_every must be >= 1")


@dataclass
class FlowState:
    P: MetaMeasure
    velocity: Displacement
    iteration: int = 0
    objective_trace: list = field(default_factory=list)

    @classmethod
    def initial(cls, P0: MetaMeasure) -> "FlowState":
        return cls(P0, Displacement.zeros_like(P0))


def step_projections(cfg: FlowConfig, iteration: int, d: int) -> ProjectionSet:
    """Projections used at a given iteration: replayable from (seed, iteration)."""
    if cfg.resample_projections:
        return sample_projections(cfg.n_projections, d, np.random.SeedSequence([cfg.seed, iteration]))
    return sample_projections(cfg.n_projections, d, cfg.seed)


def flow_step(state: FlowState, Q: MetaMeasure, cfg: FlowConfig,
              proj: Optional[ProjectionSet] = None) -> FlowState:
    k = state.iteration
    if proj is None:
        proj = step_projections(cfg, k, state.P.d)
    record = k % cfg.trace_every == 0 or k % cfg.snapshot_every == 0
    objective, grad = evaluate(state.P, Q, cfg.kernel, proj, with_value=record)
    if not grad.is_finite():
        raise NonFiniteGradient(f"non-finite gradient at iteration {k}", iteration=k)
    velocity = grad + cfg.momentum * state.velocity if cfg.momentum else grad
    trace = state.objective_trace
    if record:
        trace = trace + [(k, objective.mmd_squared_half)]
    try:
        moved = displace(state.P, velocity, -cfg.step_size)
    except ValueError:
        raise NonFiniteGradient(f"particle positions overflowed at iteration {k}", iteration=k) from None
    return FlowState(moved, velocity, k + 1, trace)


def objective_at(state: FlowState, Q: MetaMeasure, cfg: FlowConfig, trace=()) -> float:
    """Objective of the state under that iteration's projections.

    Reuses a value already recorded in ``trace`` for this iteration.
    """
    for it, value in reversed(trace):
        if it == state.iteration:
            return value
        if it < state.iteration:
            break
    proj = step_projections(cfg, state.iteration, state.P.d)
    return mmd_half(state.P, Q, cfg.kernel, proj).mmd_squared_half


def run_flow(P0: MetaMeasure, Q: MetaMeasure, cfg: FlowConfig,
             sink: Optional[SnapshotSink] = None, step: Callable = None) -> FlowState:
    """Apply ``cfg.iterations`` flow steps, emitting snapshots to ``sink``.

    Snapshots are emitted at iteration 0, every ``snapshot_every`` steps and
    at the final iteration.  ``step`` overrides the per-iteration update (used
    by the reweighted flow); it receives ``(state, Q, cfg)``.
    """
    step = step or flow_step
    state = FlowState.initial(P0)
    for _ in range(cfg.iterations):
        k = state.iteration
        try:
            new_state = step(state, Q, cfg)
        except NonFiniteGradient as err:
            err.iteration = k
            raise
        if sink is not None and k % cfg.snapshot_every == 0:
            sink(k, state.P, objective_at(state, Q, cfg, new_state.objective_trace))
        state = new_state
        if k % 1000 == 0:
            log.debug("iteration %d", k)
    if sink is not None:
        sink(state.iteration, state.P, objective_at(state, Q, cfg))
    return state
