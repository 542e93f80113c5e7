import numpy as np
import pytest

from tlrl.algorithms import conjugate_gradient, trpo_step


def test_cg_solves_spd(rng):
    A = rng.standard_normal((6, 6))
    A = A @ A.T + 6 * np.eye(6)
    b = rng.standard_normal(6)
    x = conjugate_gradient(lambda v: A @ v, b, iters=50)
    np.testing.assert_allclose(A @ x, b, atol=1e-8)


def test_zero_gradient_unchanged():
    theta = np.array([0.3, -0.2])
    new, info = trpo_step(theta, np.zeros(2), lambda v: v, 0.1)
    assert np.array_equal(new, theta) and not info.accepted


def test_identity_hessian_closed_form(rng):
    g = rng.standard_normal(5)
    delta = 0.04
    new, info = trpo_step(np.zeros(5), g, lambda v: v, delta)
    np.testing.assert_allclose(new, np.sqrt(delta) * g / np.linalg.norm(g), atol=1e-12)
    assert info.quad == pytest.approx(delta, rel=1e-12)


def test_diagonal_hessian_hand_values():
    H = np.diag([1.0, 4.0])
    new, info = trpo_step(np.zeros(2), np.array([1.0, 1.0]), lambda v: H @ v, 1.0)
    # x = (1, 0.25), x^T H x = 1.25, step = sqrt(1/1.25) x
    np.testing.assert_allclose(new, np.sqrt(1 / 1.25) * np.array([1.0, 0.25]), atol=1e-12)
    np.testing.assert_allclose(new, [0.894427191, 0.2236067977], atol=1e-9)
    assert new @ H @ new == pytest.approx(1.0, rel=1e-12)


def test_line_search_shrinks_until_kl_ok():
    H = np.eye(2)
    kl = lambda th: 0.5 * float(th @ th) * 4.0  # four times the quadratic model
    sur = lambda th: float(th.sum())
    new, info = trpo_step(np.zeros(2), np.ones(2), lambda v: H @ v, 0.5, surrogate=sur, kl=kl)
    assert info.accepted and info.step_fraction == 0.5
    assert info.kl <= 0.5 and info.quad <= 0.5


def test_line_search_total_failure_keeps_parameters():
    theta = np.array([1.0, 2.0])
    new, info = trpo_step(theta, np.ones(2), lambda v: v, 0.1, surrogate=lambda th: -float(th.sum()),
                          kl=lambda th: 0.0)
    assert np.array_equal(new, theta) and not info.accepted and info.step_fraction == 0.0


def test_nonpositive_curvature(caplog):
    new, info = trpo_step(np.zeros(2), np.ones(2), lambda v: -v, 0.1)
    assert not info.accepted and np.array_equal(new, np.zeros(2))


def test_delta_must_be_positive():
    with pytest.raises(ValueError):
        trpo_step(np.zeros(1), np.ones(1), lambda v: v, 0.0)
