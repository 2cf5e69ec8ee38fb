import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wowflow.errors import DegenerateRow
from wowflow.flow import FlowConfig
from wowflow.kernels import KernelSpec
from wowflow.measures import MetaMeasure, PointCloud
from wowflow.reweighting import (ReweightConfig, killed_clouds, mirror_sinkhorn_step, mmd_weight_grad, reweight,
                                 run_reweighted_flow, sw_cost_matrix)
from wowflow.sliced import sample_projections, sw2_squared

from conftest import blobs

GAUSS = KernelSpec.parse("gaussian:h=0.5")


@pytest.mark.parametrize("kw", [dict(eta=0.0), dict(tau_penalty=-1.0), dict(inner_steps=0), dict(floor=0.0),
                                dict(init="uniform")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        ReweightConfig(**kw)


def test_weight_grad_vanishes_at_target_weights():
    Q = MetaMeasure(blobs(3, 4, 2, seed=1).clouds, [0.2, 0.5, 0.3])
    proj = sample_projections(16, 2, 0)
    g = mmd_weight_grad(Q.mix_weights, Q.clouds, Q, GAUSS, proj)
    assert np.max(np.abs(g)) < 1e-10


def test_weight_grad_two_supports_closed_form():
    z = [PointCloud([[0.0, 0.0]]), PointCloud([[1.0, 0.0]])]
    Q = MetaMeasure([PointCloud([[0.0, 2.0]])])
    proj = sample_projections(8, 2, 1)
    s01 = sw2_squared(z[0], z[1], proj)
    K = np.array([[1.0, np.exp(-s01)], [np.exp(-s01), 1.0]])
    kq = np.array([np.exp(-sw2_squared(c, Q.clouds[0], proj)) for c in z])
    beta = np.array([0.3, 0.7])
    g = mmd_weight_grad(beta, z, Q, GAUSS, proj)
    np.testing.assert_allclose(g, 2 * (K @ beta - kq), atol=1e-15)


def test_zero_gradient_leaves_plan():
    rng = np.random.default_rng(0)
    plan = rng.uniform(0.1, 1.0, (3, 3))
    plan /= plan.sum()
    alpha = plan.sum(axis=1)
    out = mirror_sinkhorn_step(plan, alpha, np.zeros((3, 3)), eta=1.0)
    assert np.max(np.abs(out - plan)) < 1e-15


def test_large_gradient_concentrates_on_diagonal():
    plan = np.full((2, 2), 0.25)
    M = 40.0
    out = mirror_sinkhorn_step(plan, np.array([0.5, 0.5]), np.array([[0.0, M], [M, 0.0]]), eta=1.0)
    assert out[0, 1] < 1e-6 and out[1, 0] < 1e-6
    np.testing.assert_allclose(np.diag(out), 0.5)


def test_degenerate_row():
    with pytest.raises(DegenerateRow):
        mirror_sinkhorn_step(np.full((2, 2), 0.25), [0.5, 0.5], np.array([[np.nan, 0.0], [0.0, 0.0]]), eta=1.0)


def test_greedy_limit():
    cost = np.array([[0.0, 2.0, 3.0], [4.0, 5.0, 1.0], [2.0, 0.5, 3.0]])
    alpha = np.full(3, 1 / 3)
    plan = np.outer(alpha, alpha)
    for _ in range(5):
        plan = mirror_sinkhorn_step(plan, alpha, 0.0, eta=50.0, cost=cost)
    np.testing.assert_array_equal(np.argmax(plan, axis=1), np.argmin(cost, axis=1))
    assert np.min(plan.max(axis=1)) > alpha[0] - 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(0, 10_000), st.floats(1e-3, 20.0))
def test_step_preserves_marginal_and_sign(C, seed, eta):
    rng = np.random.default_rng(seed)
    alpha = rng.dirichlet(np.ones(C))
    plan = np.outer(alpha, rng.dirichlet(np.ones(C)))
    out = mirror_sinkhorn_step(plan, alpha, rng.standard_normal((C, C)) * 5, eta, cost=rng.uniform(0, 3, (C, C)))
    assert np.all(out >= 0)
    assert np.max(np.abs(out.sum(axis=1) - alpha)) <= 1e-15 * C * 4
    assert abs(out.sum() - 1.0) < 1e-12


def test_reweight_returns_probability_vector():
    P, Q = blobs(4, 5, 2, seed=2), blobs(3, 5, 2, seed=3)
    proj = sample_projections(16, 2, 0)
    w, plan, err = reweight(P, Q, GAUSS, proj, ReweightConfig())
    assert abs(w.sum() - 1.0) < 1e-12 and np.all(w >= 0)
    assert err < 1e-15


def test_sw_cost_matrix():
    P = blobs(3, 4, 2, seed=4)
    proj = sample_projections(16, 2, 0)
    M = sw_cost_matrix(P.clouds, proj)
    assert np.all(np.diag(M) == 0.0)
    assert M[0, 2] == pytest.approx(sw2_squared(P.clouds[0], P.clouds[2], proj), abs=1e-15)


def test_fixed_point_at_target():
    Q = blobs(3, 4, 2, seed=5)
    cfg = FlowConfig(GAUSS, iterations=20, snapshot_every=5, n_projections=16)
    out = run_reweighted_flow(Q, Q, cfg, ReweightConfig())
    np.testing.assert_allclose(out.P.mix_weights, 1 / 3, atol=1e-6)
    for a, b in zip(Q.clouds, out.P.clouds):
        assert np.max(np.abs(a.points - b.points)) < 1e-12
    assert [k for k, _, _ in out.weight_log] == [5, 10, 15, 20]


@pytest.mark.parametrize("init", ["identity", "product"])
def test_phase_reaches_target_masses(init):
    # two copies of one target cloud plus the other target: the copies end up sharing that cloud's weight
    Q = blobs(2, 4, 2, seed=6, center_scale=3.0)
    P = MetaMeasure([Q.clouds[0], Q.clouds[0], Q.clouds[1]])
    proj = sample_projections(16, 2, 0)
    w, plan, err = reweight(P, Q, GAUSS, proj, ReweightConfig(init=init))
    assert w[0] == w[1]
    assert abs(w[0] + w[1] - 0.5) < 5e-3 and abs(w[2] - 0.5) < 5e-3
    assert err < 1e-15


def test_killed_clouds():
    P = MetaMeasure(blobs(3, 2, 2, seed=0).clouds, [0.5, 0.5 - 1e-13, 1e-13])
    assert killed_clouds(P) == [2]
