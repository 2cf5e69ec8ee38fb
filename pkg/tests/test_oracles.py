import numpy as np
import pytest

from wowflow.errors import SizeLimitExceeded, SizeMismatch
from wowflow.kernels import KernelSpec
from wowflow.measures import MetaMeasure, PointCloud
from wowflow.oracles import (brute_force_w2, brute_force_w2_1d, brute_force_wow, compare, fd_gradient, gradcheck,
                             jitter, wasserstein_scale)


def half_norm(M):
    return 0.5 * float(np.sum(M.clouds[0].points ** 2))


def test_fd_on_quadratic():
    x = np.array([[0.3, -1.2, 2.5]])
    P = MetaMeasure([PointCloud(x)])
    np.testing.assert_allclose(fd_gradient(half_norm, P)[0], x, atol=1e-9)


def test_fd_second_order():
    cubic = lambda M: float(np.sum(M.clouds[0].points ** 3))
    x = np.array([[0.7, -0.4]])
    P = MetaMeasure([PointCloud(x)])
    e1 = np.max(np.abs(fd_gradient(cubic, P, h=1e-2)[0] - 3 * x ** 2))
    e2 = np.max(np.abs(fd_gradient(cubic, P, h=5e-3)[0] - 3 * x ** 2))
    assert 3.5 < e1 / e2 < 4.5


def test_fd_rejects_bad_step():
    with pytest.raises(ValueError):
        fd_gradient(half_norm, MetaMeasure([PointCloud([[0.0]])]), h=0.0)


def test_gaussian_small_instance():
    report = gradcheck(KernelSpec.parse("gaussian:h=0.5"), C=2, n=3, d=2, seed=0)
    assert report.max_relative_error < 1e-5 and report.max_relative_error >= 0


def test_compare_normwise():
    from wowflow.measures import Displacement
    a = Displacement([[[1.0, 2.0]], [[0.0, 4.1]]])
    r = Displacement([[[1.0, 2.0]], [[0.0, 4.0]]])
    rep = compare(a, r, 1e-5)
    assert rep.max_relative_error == pytest.approx(0.1 / 4.0)
    assert rep.worst_coordinate == (1, 0, 1)


def test_brute_force_w2_small():
    assert brute_force_w2(PointCloud([[0.0, 0.0]]), PointCloud([[1.0, 2.0]])) == 5.0
    # two collinear points: identity pairing costs 1+1, crossing costs 9+1
    a, b = PointCloud([[0.0], [2.0]]), PointCloud([[1.0], [3.0]])
    assert brute_force_w2(a, b) == 1.0
    assert brute_force_w2_1d([0.0, 2.0], [1.0, 3.0]) == 1.0


def test_brute_force_wow_dirac_mixtures():
    P = MetaMeasure([PointCloud([[0.0]]), PointCloud([[10.0]])])
    Q = MetaMeasure([PointCloud([[9.0]]), PointCloud([[2.0]])])
    assert brute_force_wow(P, Q) == (4.0 + 1.0) / 2
    assert brute_force_wow(P, P) == 0.0


def test_brute_force_caps():
    with pytest.raises(SizeLimitExceeded):
        brute_force_w2_1d(np.zeros(9), np.zeros(9))
    big = MetaMeasure([PointCloud([[float(i)]]) for i in range(6)])
    with pytest.raises(SizeLimitExceeded):
        brute_force_wow(big, big)
    with pytest.raises(SizeMismatch):
        brute_force_w2(PointCloud([[0.0]]), PointCloud([[0.0], [1.0]]))


def test_jitter_and_scale_deterministic():
    P = MetaMeasure([PointCloud(np.zeros((3, 2))), PointCloud(np.ones((3, 2)))])
    assert jitter(P, seed=4) == jitter(P, seed=4)
    assert wasserstein_scale(P) == 6.0
