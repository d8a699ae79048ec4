import numpy as np
import pytest

from retarda.errors import DomainError, GridError
from retarda.history import (GridSpec, History, Trajectory, constant_prolongation, cumulative,
                             instantaneous, integrate_segments, segment, seminorm_m1)
from retarda.kernel import StieltjesKernel, apply_functional


def test_seminorm_examples():
    g = GridSpec(1.0, 1 / 32)
    assert seminorm_m1(History.zero(2, g)) == 0.0
    assert seminorm_m1(instantaneous([0.6, 0.8], g)) == pytest.approx(1.0)
    g2 = GridSpec(2.0, 1 / 16)
    assert seminorm_m1(History.constant([0.0, -1.0], g2)) == pytest.approx(3.0)


def test_instantaneous_layout():
    g = GridSpec(1.0, 0.25)
    xi = instantaneous([1.0, 2.0], g)
    assert not xi.is_continuous
    np.testing.assert_array_equal(xi.samples, 0.0)
    np.testing.assert_array_equal(xi.value_at_zero, [1.0, 2.0])


def test_constant_prolongation():
    g = GridSpec(1.0, 0.25)
    phi = History.sinusoid([1.0], 2.0, 0.3, g)
    x = constant_prolongation(phi, 1.0)
    np.testing.assert_array_equal(x.samples[:g.N + 1], phi.samples)
    np.testing.assert_array_equal(x.future(), np.tile(phi.value_at_zero, (5, 1)))


def test_segment_reads_grid_and_rejects_off_grid():
    g = GridSpec(1.0, 0.25, 2.0)
    s = g.times()[:, None] ** 2
    x = Trajectory(g, s)
    np.testing.assert_array_equal(segment(x, 0.5)[:, 0], (g.thetas() + 0.5) ** 2)
    with pytest.raises(GridError):
        segment(x, 0.3)
    with pytest.raises(DomainError):
        segment(x, 2.5)


def test_integrate_segments_constant():
    g = GridSpec(1.0, 1 / 8, 2.0)
    c = np.array([1.5, -2.0])
    x = Trajectory(g, np.tile(c, (g.size, 1)))
    for t in (0.0, 0.5, 2.0):
        np.testing.assert_allclose(integrate_segments(x, t), np.tile(c * t, (g.N + 1, 1)),
                                   atol=1e-14)


def test_integrate_segments_instantaneous():
    g = GridSpec(1.0, 1 / 16, 2.0)
    xi = np.array([1.0, -3.0])
    s = np.zeros((g.size, 2))
    s[g.N:] = xi
    x = Trajectory(g, s, value_at_zero_minus=np.zeros(2))
    th = g.thetas()
    for t in (0.25, 1.0, 1.5):
        ref = np.maximum(0.0, t + th)[:, None] * xi
        np.testing.assert_allclose(integrate_segments(x, t), ref, atol=1e-14)


def test_integrate_segments_factorization():
    g = GridSpec(1.0, 1 / 16, 2.0)
    rng = np.random.default_rng(3)
    x = Trajectory(g, rng.normal(size=(g.size, 2)))
    C = cumulative(x)
    i = 20
    np.testing.assert_array_equal(integrate_segments(x, i * g.h), C[i:i + g.N + 1] - C[:g.N + 1])


def test_integrate_segments_linear():
    g = GridSpec(1.0, 1 / 16, 2.0)
    rng = np.random.default_rng(4)
    a, b = rng.normal(size=(2, g.size, 2))
    t = 1.25
    lhs = integrate_segments(Trajectory(g, 2 * a - 3 * b), t)
    rhs = 2 * integrate_segments(Trajectory(g, a), t) - 3 * integrate_segments(Trajectory(g, b), t)
    np.testing.assert_allclose(lhs, rhs, atol=1e-13)


def test_functional_commutes_with_segment_integral():
    # both sides are the same double trapezoid sum, so they agree to roundoff
    errs = []
    for N in (32, 64):
        g = GridSpec(1.0, 1 / N, 2.0)
        tt = g.times()
        x = Trajectory(g, np.stack([np.sin(tt), np.cos(2 * tt)], 1))
        k = StieltjesKernel(1.0, g.h, ((-0.5, [[1.0, 0.5], [0.0, 2.0]]),), [[0.3, 0.0], [0.1, 0.2]])
        t = 1.5
        lhs = apply_functional(k, integrate_segments(x, t))
        vals = np.array([apply_functional(k, segment(x, s)) for s in np.arange(round(t / g.h) + 1) * g.h])
        rhs = np.trapezoid(vals, dx=g.h, axis=0)
        errs.append(np.max(np.abs(lhs - rhs)))
    assert max(errs) < 1e-12
