"""Forward-difference gradient, its adjoint, and the objective."""

import numpy as np
import pytest

from inctpv import (
    GradientField,
    IdentityOperator,
    gradient,
    gradient_adjoint,
    gradient_magnitude,
    tpv_objective,
)


def test_gradient_small_example():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    g = gradient(x)
    assert np.array_equal(g.h, [[1.0, 0.0], [1.0, 0.0]])
    assert np.array_equal(g.v, [[2.0, 2.0], [0.0, 0.0]])


def test_gradient_constant_image_is_zero():
    g = gradient(np.full((7, 9), 3.25))
    assert not g.h.any()
    assert not g.v.any()


def test_gradient_last_row_and_column_are_zero():
    rng = np.random.default_rng(3)
    for _ in range(20):
        x = rng.standard_normal((rng.integers(2, 12), rng.integers(2, 12)))
        g = gradient(x)
        assert not g.h[:, -1].any()
        assert not g.v[-1, :].any()


def test_gradient_magnitude_is_euclidean():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((16, 16))
    g = gradient(x)
    assert np.allclose(gradient_magnitude(g), np.sqrt(g.h ** 2 + g.v ** 2))


def test_gradient_adjoint_dot_product():
    # <Dx, g> must equal <x, D'g> for random fields
    rng = np.random.default_rng(11)
    for _ in range(100):
        n = int(rng.integers(2, 33))
        x = rng.standard_normal((n, n))
        gh = rng.standard_normal((n, n))
        gv = rng.standard_normal((n, n))
        g = GradientField(h=gh, v=gv)
        d = gradient(x)
        lhs = np.sum(d.h * gh) + np.sum(d.v * gv)
        rhs = np.sum(x * gradient_adjoint(g))
        assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


def test_objective_pure_regularizer():
    x = np.array([[0.0, 1.0], [0.0, 1.0]])
    K = IdentityOperator((2, 2))
    # two unit horizontal jumps, zero residual
    assert tpv_objective(x, x, K, lam=1.0, p=1.0) == pytest.approx(2.0)
    assert tpv_objective(x, x, K, lam=2.0, p=0.5) == pytest.approx(4.0)


def test_objective_data_term_has_half_factor():
    x = np.zeros((3, 3))
    y = np.full((3, 3), 2.0)
    K = IdentityOperator((3, 3))
    # flat x: regularizer vanishes, 0.5 * ||y||^2 = 0.5 * 9 * 4
    assert tpv_objective(x, y, K, lam=0.7, p=0.5) == pytest.approx(18.0)


def test_objective_rejects_bad_parameters():
    x = np.zeros((4, 4))
    K = IdentityOperator((4, 4))
    with pytest.raises(ValueError):
        tpv_objective(x, x, K, lam=1.0, p=0.0)
    with pytest.raises(ValueError):
        tpv_objective(x, x, K, lam=1.0, p=1.5)
    with pytest.raises(ValueError):
        tpv_objective(x, x, K, lam=0.0, p=0.5)


def test_objective_decreases_with_p_on_unit_jumps():
    rng = np.random.default_rng(9)
    x = (rng.random((32, 32)) > 0.5).astype(float) * 3.0
    K = IdentityOperator((32, 32))
    # gradient magnitudes are 0, 3, or 3*sqrt(2); all >= 1, so mag**p shrinks as p does
    f1 = tpv_objective(x, x, K, lam=1.0, p=1.0)
    f05 = tpv_objective(x, x, K, lam=1.0, p=0.5)
    f01 = tpv_objective(x, x, K, lam=1.0, p=0.1)
    assert f1 > f05 > f01
