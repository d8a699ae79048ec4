import numpy as np
import pytest

from oracles import eval_steps, expm_eig, method_of_steps, random_stable
from retarda.convolution import GridFunction, volterra
from retarda.errors import ConfigError, InputError, PicardError
from retarda.history import GridSpec, History, instantaneous, segment
from retarda.kernel import StieltjesKernel, apply_functional, total_variation
from retarda.solver import (SolverConfig, deviation_from_prolongation, gamma_norm, mild_residual,
                            solve_forced_G, solve_forced_g, solve_homogeneous)
from retarda.stability import apriori_bound


@pytest.fixture
def mixed():
    g = GridSpec(1.0, 1 / 64)
    k = StieltjesKernel(1.0, g.h, ((-1.0, [[-0.9, 0.3], [0.2, -0.5]]),
                                   (-0.5, [[0.1, 0.0], [0.0, -0.4]]),
                                   (0.0, [[-0.3, 0.0], [0.1, -0.2]])),
                        [[0.2, -0.1], [0.0, 0.1]], 2)
    phi = History.from_function(lambda th: np.array([np.cos(2 * th), 1 + th]), g)
    return g, k, phi


def test_zero_kernel_keeps_value():
    g = GridSpec(1.0, 0.125)
    phi = History.sinusoid([1.0, 2.0], 3.0, [0.4, 1.0], g)
    x = solve_homogeneous(StieltjesKernel.zero(2, g), phi, 2.0)
    np.testing.assert_array_equal(x.future(), np.tile(phi.value_at_zero, (17, 1)))


def test_pure_delay_method_of_steps():
    pieces = method_of_steps(-1.0, 1.0, 5)
    errs = []
    for N in (64, 128):
        g = GridSpec(1.0, 1 / N)
        k = StieltjesKernel.differential_difference(g, None, [(1.0, [[-1.0]])])
        x = solve_homogeneous(k, instantaneous([1.0], g), 4.0)
        t = x.grid.future_times()
        errs.append(np.max(np.abs(x.future()[:, 0] - eval_steps(pieces, 1.0, t))))
    assert errs[0] < 1e-4
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


def test_ode_against_eigendecomposition():
    rng = np.random.default_rng(11)
    A = random_stable(rng)
    g = GridSpec(1.0, 1 / 256)
    xi = np.array([1.0, -0.5])
    x = solve_homogeneous(StieltjesKernel.differential_difference(g, A), instantaneous(xi, g), 2.0)
    ref = np.array([expm_eig(A, t) @ xi for t in x.grid.future_times()])
    assert np.max(np.abs(x.future() - ref)) < 1e-4


def test_x0_equals_phi0_exactly(mixed):
    g, k, phi = mixed
    x = solve_homogeneous(k, phi, 2.0)
    np.testing.assert_array_equal(x.samples[g.N], phi.value_at_zero)
    np.testing.assert_array_equal(x.samples[:g.N + 1], phi.samples)


def test_mild_residual_small(mixed):
    _, k, phi = mixed
    x = solve_homogeneous(k, phi, 3.0)
    assert mild_residual(k, x) < 1e-11


def test_forced_g_examples():
    g = GridSpec(1.0, 1 / 64)
    z = History.zero(2, g)
    k0 = StieltjesKernel.zero(2, g)
    t = g.with_horizon(2.0).future_times()
    c = np.array([1.0, -2.0])
    x = solve_forced_g(k0, z, np.tile(c, (len(t), 1)), 2.0)
    np.testing.assert_allclose(x.future(), t[:, None] * c, atol=1e-13)
    errs = []
    for N in (64, 128):
        gN = GridSpec(1.0, 1 / N)
        tN = gN.with_horizon(2.0).future_times()
        x = solve_forced_g(StieltjesKernel.zero(1, gN), History.zero(1, gN), np.cos(tN)[:, None], 2.0)
        errs.append(np.max(np.abs(x.future()[:, 0] - np.sin(tN))))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_forced_g_matches_forced_G(mixed):
    g, k, phi = mixed
    t = g.with_horizon(2.0).future_times()
    gv = np.stack([np.sin(t), np.exp(-t)], 1)
    a = solve_forced_g(k, phi, gv, 2.0)
    b = solve_forced_G(k, phi, volterra(GridFunction(gv, g.h)), 2.0)
    assert np.max(np.abs(a.future() - b.future())) <= 1e-12


def test_forced_G_zero_is_homogeneous(mixed):
    g, k, phi = mixed
    G = np.zeros((g.with_horizon(2.0).M + 1, 2))
    np.testing.assert_array_equal(solve_forced_G(k, phi, G, 2.0).samples,
                                  solve_homogeneous(k, phi, 2.0).samples)


def test_forced_G_zero_kernel_reproduces_G():
    g = GridSpec(1.0, 1 / 16)
    t = g.with_horizon(1.0).future_times()
    G = np.stack([t ** 2, np.sin(t)], 1)
    x = solve_forced_G(StieltjesKernel.zero(2, g), History.zero(2, g), G, 1.0)
    np.testing.assert_array_equal(x.future(), G)


def test_decomposition(mixed):
    g, k, phi = mixed
    t = g.with_horizon(2.0).future_times()
    G = np.stack([np.sin(3 * t), t * t], 1)
    full = solve_forced_G(k, phi, G, 2.0).future()
    parts = solve_homogeneous(k, phi, 2.0).future() + solve_forced_G(k, History.zero(2, g), G, 2.0).future()
    assert np.max(np.abs(full - parts)) <= 10 * 1e-12 * max(1.0, np.abs(full).max())


def test_G_must_vanish_at_zero(mixed):
    g, k, phi = mixed
    G = np.ones((g.with_horizon(1.0).M + 1, 2))
    with pytest.raises(InputError):
        solve_forced_G(k, phi, G, 1.0)


def test_linearity_small_grid():
    rng = np.random.default_rng(5)
    g = GridSpec(1.0, 1 / 16)
    k = StieltjesKernel(1.0, g.h, ((-1.0, [[-0.9, 0.3], [0.2, -0.5]]),), [[0.2, -0.1], [0.0, 0.1]], 2)
    worst = 0.0
    for _ in range(100):
        p, q = (History(rng.normal(size=(17, 2)), rng.normal(size=2), g.h) for _ in range(2))
        a, b = rng.normal(size=2)
        lhs = solve_homogeneous(k, a * p + b * q, 2.0).future()
        rhs = a * solve_homogeneous(k, p, 2.0).future() + b * solve_homogeneous(k, q, 2.0).future()
        worst = max(worst, np.max(np.abs(lhs - rhs)) / max(1.0, np.abs(lhs).max()))
    assert worst < 1e-9


def test_initial_guess_does_not_matter(mixed):
    _, k, phi = mixed
    a = solve_homogeneous(k, phi, 3.0, SolverConfig(initial_guess="previous"))
    b = solve_homogeneous(k, phi, 3.0, SolverConfig(initial_guess="zero"))
    scale = np.abs(a.future()).max()
    assert np.max(np.abs(a.future() - b.future())) <= 2 * 1e-12 * max(1.0, scale)


def test_apriori_bound(mixed):
    g, k, phi = mixed
    x = solve_homogeneous(k, phi, 3.0)
    y = deviation_from_prolongation(x, phi)
    bound = apriori_bound(k, phi, 3.0)
    assert np.all(y.segment_norms() <= bound + 1e-12)


def test_caratheodory_residual(mixed):
    g, k, phi = mixed
    x = solve_homogeneous(k, phi, 3.0)
    t = x.grid.future_times()
    h = g.h
    worst = 0.0
    for i in range(1, len(t) - 1):
        if np.min(np.abs(t[i] - np.array([0.5, 1.0, 1.5, 2.0, 2.5, 3.0]))) < 2 * h:
            continue
        fd = (x.future()[i + 1] - x.future()[i - 1]) / (2 * h)
        worst = max(worst, np.max(np.abs(fd - apply_functional(k, segment(x, t[i])))))
    assert worst < 5 * h


def test_gamma_norm():
    g = GridSpec(1.0, 1 / 16)
    k = StieltjesKernel.zero(1, g)
    t = g.with_horizon(2.0).future_times()
    x = solve_forced_G(k, History.zero(1, g), t[:, None], 2.0)
    assert gamma_norm(x, 1.0) == pytest.approx(np.max(t * np.exp(-t)))
    with pytest.raises(InputError):
        gamma_norm(solve_homogeneous(k, History.constant([1.0], g), 1.0), 1.0)


def test_config_validation():
    with pytest.raises(ConfigError):
        SolverConfig(picard_tol=0.0)
    with pytest.raises(ConfigError):
        SolverConfig(initial_guess="random")
    g = GridSpec(1.0, 1 / 16)
    k = StieltjesKernel.differential_difference(g, [[-4.0]])
    with pytest.raises(ConfigError) as err:
        SolverConfig(window=0.5).window_for(k)
    assert err.value.key == "window"
    assert SolverConfig().window_for(k) == pytest.approx(0.5 / total_variation(k))


def test_picard_failure_reports():
    g = GridSpec(1.0, 1 / 16)
    k = StieltjesKernel.differential_difference(g, [[-1.0]])
    with pytest.raises(PicardError) as err:
        solve_homogeneous(k, History.constant([1.0], g), 1.0, SolverConfig(max_picard_iters=1))
    assert err.value.t_last == 0.0
