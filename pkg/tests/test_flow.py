import io

import numpy as np
import pytest

from wowflow.data_io import SnapshotWriter, iter_snapshots
from wowflow.errors import NonFiniteGradient
from wowflow.flow import FlowConfig, FlowState, flow_step, run_flow, step_projections
from wowflow.kernels import KernelSpec
from wowflow.measures import MetaMeasure, PointCloud
from wowflow.sliced import ProjectionSet

from conftest import blobs

RIESZ = KernelSpec.parse("riesz:r=1")


@pytest.mark.parametrize("kw", [dict(step_size=0.0), dict(momentum=1.0), dict(momentum=-0.1),
                                dict(n_projections=0), dict(snapshot_every=0), dict(iterations=-1)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        FlowConfig(RIESZ, **kw)


def test_stationary_at_target():
    P = blobs(3, 4, 2, seed=0)
    cfg = FlowConfig(RIESZ, iterations=5, n_projections=16)
    out = run_flow(P, P, cfg)
    for a, b in zip(P.clouds, out.P.clouds):
        assert np.max(np.abs(a.points - b.points)) < 1e-12


def test_momentum_recurrence():
    # one Dirac drawn to another along a single fixed direction: the gradient is constant
    Q = MetaMeasure([PointCloud([[100.0, 0.0]])])
    P = MetaMeasure([PointCloud([[0.0, 0.0]])])
    cfg = FlowConfig(RIESZ, step_size=1e-3, momentum=0.9, n_projections=1, resample_projections=False)
    proj = ProjectionSet(np.array([[1.0, 0.0]]))
    s1 = flow_step(FlowState.initial(P), Q, cfg, proj)
    s2 = flow_step(s1, Q, cfg, proj)
    g = s1.velocity[0]
    np.testing.assert_allclose(s2.velocity[0], 1.9 * g, rtol=1e-15)
    np.testing.assert_allclose(s2.P.clouds[0].points, -1e-3 * (g + 1.9 * g), rtol=1e-15)


def test_zero_iterations_emits_single_snapshot():
    P, Q = blobs(2, 3, 2, seed=1), blobs(2, 3, 2, seed=2)
    seen = []
    out = run_flow(P, Q, FlowConfig(RIESZ, iterations=0), sink=lambda k, M, v: seen.append(k))
    assert seen == [0] and out.P == P and out.velocity.max_abs() == 0.0


def test_snapshot_cadence_and_final():
    P, Q = blobs(2, 3, 2, seed=1), blobs(2, 3, 2, seed=2)
    seen = []
    run_flow(P, Q, FlowConfig(RIESZ, iterations=25, snapshot_every=10, n_projections=8),
             sink=lambda k, M, v: seen.append(k))
    assert seen == [0, 10, 20, 25]


def test_trace_strictly_increasing_and_weights_invariant():
    P = MetaMeasure(blobs(3, 4, 2, seed=3).clouds, [0.2, 0.3, 0.5])
    Q = blobs(2, 5, 2, seed=4)
    out = run_flow(P, Q, FlowConfig(RIESZ, iterations=30, n_projections=8, trace_every=3))
    its = [k for k, _ in out.objective_trace]
    assert its == sorted(set(its)) and its[0] == 0
    np.testing.assert_array_equal(out.P.mix_weights, P.mix_weights)
    assert out.P.sizes == P.sizes


def test_descent_on_two_diracs():
    P = MetaMeasure([PointCloud([[0.0, 0.0]]), PointCloud([[4.0, 1.0]])])
    Q = MetaMeasure([PointCloud([[1.0, 2.0]]), PointCloud([[3.0, -1.0]])])
    cfg = FlowConfig(KernelSpec.parse("gaussian:h=2"), step_size=0.05, iterations=300, n_projections=32,
                     resample_projections=False)
    trace = [v for _, v in run_flow(P, Q, cfg).objective_trace]
    assert trace[-1] < trace[0]
    assert max(np.diff(trace)) <= 1e-9


def test_projection_seeds_are_replayable():
    cfg = FlowConfig(RIESZ, n_projections=5, seed=3)
    a = step_projections(cfg, 7, 2).directions
    np.testing.assert_array_equal(a, step_projections(cfg, 7, 2).directions)
    assert not np.array_equal(a, step_projections(cfg, 8, 2).directions)
    fixed = FlowConfig(RIESZ, n_projections=5, seed=3, resample_projections=False)
    np.testing.assert_array_equal(step_projections(fixed, 7, 2).directions, step_projections(fixed, 8, 2).directions)


def test_runs_are_bit_identical():
    P, Q = blobs(3, 6, 2, seed=5), blobs(3, 6, 2, seed=6)
    cfg = FlowConfig(KernelSpec.parse("gaussian:h=0.5"), iterations=40, snapshot_every=7, n_projections=16,
                     momentum=0.5)
    streams = []
    for _ in range(2):
        buf = io.StringIO()
        run_flow(P, Q, cfg, sink=SnapshotWriter(buf))
        streams.append(buf.getvalue())
    assert streams[0] == streams[1]
    assert len(list(iter_snapshots(io.StringIO(streams[0])))) == 7


def test_non_finite_gradient_reports_iteration():
    P, Q = blobs(1, 3, 2, seed=1), blobs(1, 3, 2, seed=2)

    def bad_step(state, Q, cfg):
        if state.iteration == 2:
            raise NonFiniteGradient("boom", iteration=None)
        return flow_step(state, Q, cfg)

    with pytest.raises(NonFiniteGradient) as info:
        run_flow(P, Q, FlowConfig(RIESZ, iterations=5, n_projections=4), step=bad_step)
    assert info.value.iteration == 2


def test_overflowing_flow_raises():
    P = MetaMeasure([PointCloud([[0.0]])])
    Q = MetaMeasure([PointCloud([[1e150]])])
    cfg = FlowConfig(KernelSpec.parse("riesz:r=1.5"), step_size=1e300, iterations=10, n_projections=1)
    with pytest.raises(NonFiniteGradient) as info:
        run_flow(P, Q, cfg)
    assert info.value.iteration == 0
