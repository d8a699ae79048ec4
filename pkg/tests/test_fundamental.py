import numpy as np
import pytest

from oracles import eval_steps, eval_steps_derivative, expm_eig, method_of_steps, random_stable
from retarda.convolution import rs_convolve, volterra
from retarda.errors import GridError
from retarda.fundamental import (expm_oracle, fundamental_derivative, principal_fundamental,
                                 pure_delay_series, pure_delay_series_derivative)
from retarda.history import GridSpec, instantaneous
from retarda.kernel import StieltjesKernel, reverse
from retarda.solver import solve_homogeneous


def test_zero_kernel():
    g = GridSpec(1.0, 0.125)
    k = StieltjesKernel.zero(2, g)
    X = principal_fundamental(k, 2.0)
    np.testing.assert_array_equal(X.future(), np.broadcast_to(np.eye(2), X.future().shape))
    D = fundamental_derivative(k, X)
    np.testing.assert_array_equal(D.future(), 0.0)


@pytest.mark.parametrize("b,tau", [(-1.0, 1.0), (0.7, 0.5), (-2.0, 0.25)])
def test_pure_delay(b, tau):
    g = GridSpec(1.0, 1 / 256)
    k = StieltjesKernel.differential_difference(g, None, [(tau, [[b]])])
    X = principal_fundamental(k, 3.0)
    t = X.grid.future_times()
    pieces = method_of_steps(b, tau, int(3.0 / tau) + 1)
    ref = eval_steps(pieces, tau, t)
    assert np.max(np.abs(X.future()[:, 0, 0] - ref)) < 1e-4 * max(1.0, np.abs(ref).max())
    np.testing.assert_allclose(pure_delay_series(b, tau, t), ref, atol=1e-10 * max(1, np.abs(ref).max()))


def test_pure_delay_derivative_pieces():
    g = GridSpec(1.0, 1 / 128)
    b, tau = -0.8, 1.0
    k = StieltjesKernel.differential_difference(g, None, [(tau, [[b]])])
    X = principal_fundamental(k, 3.0)
    D = fundamental_derivative(k, X)
    t = X.grid.future_times()
    d = D.future()[:, 0, 0]
    ref = np.where(t < tau, 0.0, np.where(t < 2 * tau, b, b * (1 + b * (t - 2 * tau))))
    assert np.max(np.abs(d - ref)) < 1e-4
    pieces = method_of_steps(b, tau, 4)
    np.testing.assert_allclose(pure_delay_series_derivative(b, tau, t),
                               eval_steps_derivative(pieces, tau, t), atol=1e-12)
    # right limits at the breakpoint t = tau, left limits just before
    i = round(tau / g.h)
    assert D.future()[i, 0, 0] == pytest.approx(b)
    assert D.left_limits()[g.N + i, 0, 0] == pytest.approx(0.0, abs=1e-12)
    assert D.breakpoints[g.N + i]


def test_ode_limit_and_derivative():
    rng = np.random.default_rng(2)
    A = random_stable(rng)
    g = GridSpec(1.0, 1 / 256)
    k = StieltjesKernel.differential_difference(g, A)
    X = principal_fundamental(k, 2.0)
    D = fundamental_derivative(k, X)
    for i, t in enumerate(X.grid.future_times()):
        E = expm_eig(A, t)
        assert np.max(np.abs(X.future()[i] - E)) < 1e-4
        assert np.max(np.abs(D.future()[i] - A @ X.future()[i])) < 1e-12


def test_columns_are_instantaneous_solutions():
    g = GridSpec(1.0, 1 / 64)
    k = StieltjesKernel(1.0, g.h, ((-0.5, [[-0.8, 0.1], [0.0, -0.3]]),), [[-0.3, 0.1], [0.05, -0.2]])
    X = principal_fundamental(k, 3.0)
    np.testing.assert_array_equal(X.samples[g.N], np.eye(2))
    assert np.linalg.matrix_rank(X.samples[g.N]) == 2
    xi = np.array([0.3, -1.2])
    x = solve_homogeneous(k, instantaneous(xi, g), 3.0)
    assert np.max(np.abs(x.future() - X.future() @ xi)) < 1e-9


def test_integrated_and_volterra_forms():
    g = GridSpec(1.0, 1 / 128)
    k = StieltjesKernel(1.0, g.h, ((-1.0, [[0.2, 0.0], [-0.4, -0.6]]), (-0.5, [[-0.8, 0.1], [0.0, -0.3]])),
                        [[-0.3, 0.1], [0.05, -0.2]])
    X = principal_fundamental(k, 3.0)
    rk = reverse(k)
    VX = volterra(X.future(), g.h)
    # the solver's increment scheme is exactly this discrete identity
    res = X.future() - np.eye(2) - rs_convolve(rk, VX).values
    assert np.max(np.abs(res)) < 1e-12
    # no atom at zero: X - I = V(d eta-check * X)
    res2 = X.future() - np.eye(2) - volterra(rs_convolve(rk, X.future()), g.h).values
    assert np.max(np.abs(res2)) < 1e-12


def test_derivative_matches_finite_differences():
    g = GridSpec(1.0, 1 / 256)
    k = StieltjesKernel(1.0, g.h, ((-1.0, [[0.2]]), (-0.5, [[-0.8]])), [[-0.3]])
    X = principal_fundamental(k, 3.0)
    D = fundamental_derivative(k, X)
    t = X.grid.future_times()
    x = X.future()[:, 0, 0]
    fd = (x[2:] - x[:-2]) / (2 * g.h)
    mask = np.min(np.abs(t[1:-1, None] - np.array([0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0])), axis=1) > 2 * g.h
    assert np.max(np.abs(fd - D.future()[1:-1, 0, 0])[mask]) < 10 * g.h


def test_expm_oracle_accuracy():
    rng = np.random.default_rng(0)
    for _ in range(20):
        A = rng.normal(size=(3, 3))
        A *= 10 / np.linalg.norm(A, 2) * rng.uniform(0.1, 1.0)
        ref = expm_eig(A, 1.0)
        assert np.max(np.abs(expm_oracle(A, 1.0) - ref)) <= 1e-12 * max(1.0, np.abs(ref).max())
    with pytest.raises(OverflowError):
        expm_oracle(np.array([[1e3]]), 1.0)


def test_grid_mismatch_rejected():
    g = GridSpec(1.0, 1 / 16)
    k = StieltjesKernel.differential_difference(g, [[-1.0]])
    X = principal_fundamental(k, 1.0)
    k2 = StieltjesKernel.differential_difference(GridSpec(1.0, 1 / 32), [[-1.0]])
    with pytest.raises(GridError):
        fundamental_derivative(k2, X)
