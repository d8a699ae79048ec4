import math

import numpy as np
import pytest

from oracles import cubic_decay
from retarda.errors import CertificateError, InputError
from retarda.fundamental import principal_fundamental
from retarda.history import GridSpec, History, instantaneous, segment
from retarda.kernel import StieltjesKernel
from retarda.nonlinear import (PerturbationSpec, builtin, certificate_constant, cubic,
                               epsilon_on_ball,
                               gronwall_weighted_margins, linearized_stability_certificate,
                               poincare_lyapunov_certificate, quadratic, saturating,
                               settling_time, simulate, verify_decay)
from retarda.solver import SolverConfig, mild_residual, solve_homogeneous
from retarda.stability import DecayFit, history_envelope


@pytest.fixture(scope="module")
def delay():
    g = GridSpec(0.5, 0.5 / 64)
    k = StieltjesKernel.differential_difference(g, None, [(0.5, [[-1.0]])])
    X = principal_fundamental(k, 30.0)
    return g, k, history_envelope(X)


def test_zero_perturbation_is_linear(delay):
    g, k, _ = delay
    phi = History.sinusoid([0.3], 4.0, 0.5, g)
    a = simulate(k, None, phi, 5.0)
    assert a.completed
    b = solve_homogeneous(k, phi, 5.0)
    assert np.max(np.abs(a.trajectory.samples - b.samples)) < 1e-9


def test_cubic_separable_oracle():
    errs = []
    for N in (64, 128):
        g = GridSpec(1.0, 1 / N)
        res = simulate(StieltjesKernel.zero(1, g), cubic(-1.0), History.constant([0.5], g), 4.0)
        x = res.trajectory.future()[:, 0]
        t = res.trajectory.grid.future_times()
        assert np.all(np.diff(x) < 0) and np.all(x > 0)
        errs.append(np.max(np.abs(x - cubic_decay(0.5, t))))
    assert errs[0] < 1e-5
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


def test_integrated_residual(delay):
    g, k, _ = delay
    phi = History.constant([0.2], g)
    res = simulate(k, cubic(), phi, 3.0)
    x = res.trajectory
    # x - phi(0) - L int x_s - int f(x_s) ds with f evaluated by the hook
    t = x.grid.future_times()
    f = np.array([cubic().evaluate(np.array([s]), segment(x, s)[None])[0] for s in t])
    F = np.concatenate([[np.zeros(1)], np.cumsum(0.5 * g.h * (f[1:] + f[:-1]), axis=0)])
    assert mild_residual(k, x, F) < 1e-11


def test_small_decays_large_leaves_ball(delay):
    g, k, _ = delay
    small = simulate(k, quadratic(-1.0), History.constant([0.05], g), 10.0, ball=1.0)
    assert small.completed
    assert abs(small.trajectory.future()[-1, 0]) < 1e-4
    big = simulate(k, quadratic(-3.0), History.constant([-3.0], g), 10.0, ball=1.0)
    assert not big.completed
    assert "working ball" in big.reason
    assert big.t_last < 10.0
    assert big.trajectory.grid.T == pytest.approx(big.t_last)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_blowup_reports_last_time():
    g = GridSpec(1.0, 1 / 32)
    pert = PerturbationSpec(lambda t, s: s[:, -1, :] ** 3, name="blowup")
    res = simulate(StieltjesKernel.zero(1, g), pert, History.constant([1.0], g), 2.0,
                   cfg=SolverConfig(max_picard_iters=50))
    assert not res.completed
    assert res.t_last < 0.5 + 1e-9  # exact blow-up at t = 1/2


def test_t0_shift(delay):
    g, k, _ = delay
    pert = PerturbationSpec(N_map=lambda t, s: -np.exp(-t)[:, None] * s[:, -1, :],
                            nu_envelope=lambda t: math.exp(-t))
    r = simulate(k, pert, History.constant([0.1], g), 2.0, t0=1.5)
    assert r.trajectory.times()[g.N] == 1.5
    r2 = simulate(k, pert, History.constant([0.1], g), 2.0, t0=0.0)
    assert not np.allclose(r.trajectory.future(), r2.trajectory.future())


def test_simulate_rejects_discontinuous(delay):
    g, k, _ = delay
    with pytest.raises(InputError):
        simulate(k, cubic(), instantaneous([1.0], g), 1.0)


def test_builtin_moduli():
    s = np.linspace(0.01, 0.5, 20)
    rng = np.random.default_rng(0)
    for name, spec in (("cubic", cubic(-2.0)), ("quadratic", quadratic(1.5)), ("saturating", saturating(1.0))):
        for v in s:
            segs = rng.uniform(-v, v, size=(5, 9, 2))
            segs[0, :, :] = v
            out = np.abs(spec.h_map(np.zeros(5), segs))
            norms = np.abs(segs).max(axis=(1, 2))
            assert np.all(out.max(axis=1) <= spec.epsilon_modulus(v) * norms + 1e-15), name
    assert builtin("none").is_zero
    with pytest.raises(InputError):
        builtin("quartic")


def test_certificate_formulas(delay):
    _, k, fit = delay
    cert = linearized_stability_certificate(fit, cubic().epsilon_modulus, 0.3, kernel=k)
    eps = 0.09
    assert cert.epsilon == pytest.approx(eps)
    assert cert.M >= fit.M
    assert cert.beta == pytest.approx(fit.alpha - cert.M * eps)
    assert cert.delta == pytest.approx(0.3 / cert.M)
    with pytest.raises(CertificateError):
        linearized_stability_certificate(fit, cubic().epsilon_modulus, 3.0, kernel=k)
    unstable = DecayFit(1.0, 0.0, 0.0, 0.5, 10.0, False)
    with pytest.raises(CertificateError):
        linearized_stability_certificate(unstable, 0.01, 0.3)


def test_epsilon_on_ball_checks():
    assert epsilon_on_ball(lambda s: s * s, 0.5) == pytest.approx(0.25)
    with pytest.raises(InputError):
        epsilon_on_ball(lambda s: -s, 0.5)
    with pytest.raises(InputError):
        epsilon_on_ball(lambda s: math.sin(20 * s), 0.5)


def test_poincare_lyapunov(delay):
    _, k, fit = delay
    nu = lambda t: 2.0 * math.exp(-t)  # noqa: E731
    eps = 0.01
    cert = poincare_lyapunov_certificate(fit, eps, nu, 0.0, 3.0, 0.2, kernel=k)
    a = settling_time(nu, eps, 0.0)
    assert nu(a) <= eps * (1 + 1e-9)
    M0 = certificate_constant(fit, k)
    assert cert.M == pytest.approx(M0 * math.exp(M0 * (3.0 - eps) * a))
    assert cert.beta == pytest.approx(fit.alpha - 2 * M0 * eps)
    same = poincare_lyapunov_certificate(fit, eps, lambda t: 0.0, 0.0, 3.0, 0.2, kernel=k)
    assert same.M == pytest.approx(M0)


def test_certified_runs_decay(delay):
    g, k, fit = delay
    cert = linearized_stability_certificate(fit, cubic().epsilon_modulus, 0.3, kernel=k)
    rng = np.random.default_rng(1)
    for _ in range(10):
        amp = rng.uniform(0.1, 0.99) * cert.delta
        phi = History.sinusoid([1.0], rng.uniform(0.5, 6), rng.uniform(0, 6.3), g)
        phi = phi * (amp / phi.sup_norm())
        r = simulate(k, cubic(), phi, 8.0, t0=rng.uniform(-2, 2))
        rep = verify_decay(r.trajectory, cert, phi.sup_norm())
        assert rep.passed, rep.status
        assert gronwall_weighted_margins(r.trajectory, cert, phi.sup_norm()).min() >= -1e-6
    outside = verify_decay(r.trajectory, cert, 2 * cert.delta)
    assert outside.status == "outside certificate"
