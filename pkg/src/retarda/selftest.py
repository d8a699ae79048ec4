"""Built-in identity battery for ``retarda selftest``.

Each item computes a residual on a fixed fixture and compares it with a
tolerance.  Randomized fixtures draw from ``numpy.random.default_rng`` seeded
by ``RETARDA_SEED`` (default 0).  ``RETARDA_TOL_SCALE`` multiplies every
tolerance, which makes a deliberately corrupted tolerance fail visibly.
The printed table contains no timings, so two runs with the same seed are
byte-identical.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .convolution import GridFunction, check_convolution_identities, volterra
from .fundamental import (expm_oracle, fundamental_derivative, principal_fundamental,
                          pure_delay_series)
from .history import GridSpec, History, instantaneous
from .kernel import ReversedKernel, StieltjesKernel
from .solver import solve_forced_g, solve_homogeneous
from .stability import (apriori_bound, gronwall_classic, gronwall_classic_closed,
                        fit_exponential_envelope)
from .voc import (G_ell, G_ell_definition, G_ell_delays, g_ell, route_discrepancies,
                  voc_kernel_form, voc_routes, voc_zero_history)


@dataclass(frozen=True)
class Item:
    name: str
    residual: float
    tol: float

    @property
    def passed(self):
        return bool(np.isfinite(self.residual)) and self.residual <= self.tol


def seed_from_env():
    raw = os.environ.get("RETARDA_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"RETARDA_SEED must be an integer, got {raw!r}") from None


def tol_scale_from_env():
    raw = os.environ.get("RETARDA_TOL_SCALE", "1")
    try:
        s = float(raw)
    except ValueError:
        raise ValueError(f"RETARDA_TOL_SCALE must be a number, got {raw!r}") from None
    if not s > 0:
        raise ValueError("RETARDA_TOL_SCALE must be positive")
    return s


def _sup(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def _random_stable(rng, n=2):
    while True:
        A = rng.normal(size=(n, n))
        A -= (np.max(np.linalg.eigvals(A).real) + rng.uniform(0.2, 1.0)) * np.eye(n)
        if np.max(np.linalg.eigvals(A).real) < 0:
            return A


def run_battery(quick=False, seed=0, tol_scale=1.0):
    """Return the list of :class:`Item` results."""
    rng = np.random.default_rng(seed)
    items = []

    def add(name, residual, tol):
        items.append(Item(name, float(residual), float(tol) * tol_scale))

    # convolution identities on smooth scalar fixtures
    h = 1e-2 if quick else 1e-3
    T = 1.0
    t = np.arange(round(T / h) + 1) * h
    alpha = ReversedKernel(T, h, ((0.25, [[0.7]]), (0.5, [[-0.4]])),
                           (0.5 * np.cos(t))[:, None, None], 1)
    rep = check_convolution_identities(alpha, np.exp(-t) * np.sin(3 * t), np.cos(2 * t), T,
                                       g_prime=-2 * np.sin(2 * t), tol=1e-6 if not quick else 1e-4)
    for k in rep.residuals:
        add(f"convolution: {k}", rep.residuals[k], rep.tolerances[k])

    # pure delay fundamental solution against the series
    N = 64 if quick else 256
    g = GridSpec(1.0, 1.0 / N)
    k1 = StieltjesKernel.differential_difference(g, None, [(1.0, [[-1.0]])])
    X = principal_fundamental(k1, 4.0)
    tt = X.grid.future_times()
    add("fundamental: pure delay vs series", _sup(X.future()[:, 0, 0],
                                                  pure_delay_series(-1.0, 1.0, tt)),
        1e-4 if quick else 1e-5)

    # ODE limit against the matrix exponential
    A = _random_stable(rng)
    k2 = StieltjesKernel.differential_difference(g, A)
    X2 = principal_fundamental(k2, 2.0)
    ref = np.array([expm_oracle(A, s) for s in X2.grid.future_times()])
    add("fundamental: ODE limit vs expm", _sup(X2.future(), ref), 1e-3 if quick else 1e-4)

    # VOC routes on two fixtures
    kd = StieltjesKernel.differential_difference(
        g, [[-0.5, 0.2], [0.1, -0.4]], [(0.5, [[-0.8, 0.1], [0.0, -0.3]]),
                                        (1.0, [[0.2, 0.0], [-0.4, -0.6]])])
    kc = StieltjesKernel(1.0, 1.0 / N, ((-0.5, [[-0.8, 0.1], [0.0, -0.3]]),
                                        (-0.25, [[0.2, 0.0], [-0.4, -0.6]])),
                         [[-0.3, 0.1], [0.05, -0.2]], 2)
    phi = History.from_function(lambda th: np.array([np.cos(th), np.sin(th)]), g)
    vtol = 1e-3 if quick else 1e-4
    for label, kern in (("delays", kd), ("density", kc)):
        d = route_discrepancies(voc_routes(kern, phi, 3.0))
        add(f"voc routes ({label}): max pairwise", max(d.values()), vtol)

    # forced problem with zero history
    Xc = principal_fundamental(kc, 3.0)
    Dc = fundamental_derivative(kc, Xc)
    tt = Xc.grid.future_times()
    gv = np.stack([np.sin(tt), np.cos(2 * tt)], 1)
    z = History.zero(2, g)
    direct = solve_forced_g(kc, z, gv, 3.0).future()
    add("voc forced: convolution with X", _sup(voc_kernel_form(Xc, kc, z, gv).future(), direct),
        vtol)
    add("voc forced: zero-history formula",
        _sup(voc_zero_history(Xc, Dc, volterra(GridFunction(gv, g.h))).future(), direct), vtol)

    # instantaneous history against X xi
    xi = rng.normal(size=2)
    x = solve_homogeneous(kc, instantaneous(xi, g), 3.0)
    add("instantaneous history vs X xi", _sup(x.future(), Xc.future() @ xi), 1e-9)

    # history-induced forcing, three routes and the closed form
    GA = G_ell(kc, phi, 3.0).values
    add("G_ell: kernel form vs definition", _sup(GA, G_ell_definition(kc, phi, 3.0).values), 1e-6)
    add("G_ell: kernel form vs V(g_ell)", _sup(GA, volterra(g_ell(kc, phi, 3.0)).values), 1e-6)
    c = History.constant(rng.normal(size=2), g)
    add("G_ell: delay closed form", _sup(G_ell(kd, c, 3.0).values,
                                         G_ell_delays(kd.delays, c, 3.0).values), 1e-6)

    # Gronwall: closed form against quadrature, a-priori bound on a solution
    a0, b0 = rng.uniform(0.5, 2.0), rng.uniform(0.1, 1.0)
    add("gronwall: constant case closed vs quadrature",
        _sup(gronwall_classic(a0, b0, tt) / gronwall_classic_closed(a0, b0, tt), 1.0), 1e-12)
    xk = solve_homogeneous(kd, phi, 3.0)
    dev = np.linalg.norm(xk.future() - phi.value_at_zero, axis=1)
    add("gronwall: a-priori bound violation", max(0.0, float(np.max(dev - apriori_bound(kd, phi, 3.0)))),
        1e-12)

    # linearity
    worst = 0.0
    trials = 20 if quick else 200
    gs = GridSpec(1.0, 1.0 / 32)
    ks = StieltjesKernel(1.0, 1.0 / 32, ((-1.0, [[-0.9, 0.3], [0.2, -0.5]]),
                                         (0.0, [[-0.3, 0.0], [0.1, -0.2]])),
                         [[0.2, -0.1], [0.0, 0.1]], 2)
    for _ in range(trials):
        p1 = History(rng.normal(size=(33, 2)), rng.normal(size=2), gs.h)
        p2 = History(rng.normal(size=(33, 2)), rng.normal(size=2), gs.h)
        a, b = rng.normal(size=2)
        lhs = solve_homogeneous(ks, a * p1 + b * p2, 2.0).future()
        rhs = (a * solve_homogeneous(ks, p1, 2.0).future()
               + b * solve_homogeneous(ks, p2, 2.0).future())
        worst = max(worst, _sup(lhs, rhs) / max(1.0, float(np.max(np.abs(lhs)))))
    add("linearity (relative)", worst, 1e-9)

    # decay rate against the characteristic root
    Ns = 32 if quick else 128
    gst = GridSpec(0.5, 0.5 / Ns)
    kst = StieltjesKernel.differential_difference(gst, None, [(0.5, [[-1.0]])])
    fit = fit_exponential_envelope(principal_fundamental(kst, 20.0 if quick else 40.0))
    lam = _char_root()
    add("stability: relative rate error", abs(fit.alpha + lam.real) / abs(lam.real),
        0.02)
    return items


def _char_root():
    """Root of ``lambda + e^{-lambda / 2} = 0`` nearest ``-1.5 + 1.5i`` (Newton)."""
    z = complex(-1.5, 1.5)
    for _ in range(100):
        f = z + np.exp(-0.5 * z)
        step = f / (1 - 0.5 * np.exp(-0.5 * z))
        z -= step
        if abs(step) < 1e-15:
            break
    return z


def format_table(items):
    width = max(len(i.name) for i in items)
    lines = [f"{'check':<{width}}  {'residual':>10}  {'tolerance':>10}  result"]
    for i in items:
        lines.append(f"{i.name:<{width}}  {i.residual:10.3e}  {i.tol:10.3e}  "
                     f"{'PASS' if i.passed else 'FAIL'}")
    failed = sum(not i.passed for i in items)
    lines.append(f"{len(items) - failed}/{len(items)} passed")
    return "\n".join(lines)


def main(quick=False):
    items = run_battery(quick, seed_from_env(), tol_scale_from_env())
    print(format_table(items))
    return 0 if all(i.passed for i in items) else 4


__all__ = ["Item", "run_battery", "format_table", "main", "seed_from_env",
           "tol_scale_from_env"]
