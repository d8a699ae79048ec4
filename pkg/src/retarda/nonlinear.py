"""Perturbed equations ``x'(t) = L x_t + N(t) x_t + h(t, x_t)`` and decay certificates.

The simulator iterates the integrated form

    x(t) = phi(0) + L int_{t0}^t x_s ds + int_{t0}^t f(u, x_u) du,

which is the same fixed point as the variation-of-constants form
``x = x^L(. - t0; phi) + X * f(., x_.)``.  The horizon is cut into windows;
in each window the linear part and ``f`` are iterated together, and the
window is halved when the iteration stalls.  A run stops early (with a
report, not an exception) when Picard fails on a single step or when the
solution leaves a prescribed working ball.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import CertificateError, InputError
from .history import Trajectory, pointwise_norm
from .kernel import total_variation
from .solver import SolverConfig, _causal_conv, _check_inputs
from .stability import semigroup_constant_from_X


@dataclass(frozen=True)
class PerturbationSpec:
    """Nonlinear and time-varying perturbations with their advertised bounds.

    Hooks are vectorized: ``h_map(t, segs)`` and ``N_map(t, segs)`` take times
    of shape ``(m,)`` and segments of shape ``(m, N + 1, n)`` (oldest sample
    first) and return ``(m, n)``.  ``epsilon_modulus(s)`` bounds
    ``|h(t, phi)| / ||phi||`` for ``||phi|| <= s``; ``nu_envelope(t)`` bounds
    the operator norm of ``N(t)``.
    """

    h_map: Callable | None = None
    N_map: Callable | None = None
    epsilon_modulus: Callable | None = None
    nu_envelope: Callable | None = None
    name: str = "custom"

    @property
    def is_zero(self):
        return self.h_map is None and self.N_map is None

    def evaluate(self, t, segs):
        out = np.zeros((segs.shape[0], segs.shape[2]))
        if self.h_map is not None:
            out = out + np.asarray(self.h_map(t, segs), dtype=float).reshape(out.shape)
        if self.N_map is not None:
            out = out + np.asarray(self.N_map(t, segs), dtype=float).reshape(out.shape)
        return out


def zero_perturbation():
    return PerturbationSpec(name="none")


def cubic(coefficient=-1.0):
    """``h(t, phi) = c phi(0)^3`` (componentwise); ``epsilon(s) = |c| s^2``."""
    c = float(coefficient)
    return PerturbationSpec(lambda t, s: c * s[:, -1, :] ** 3,
                            epsilon_modulus=lambda s: abs(c) * s * s, name="cubic")


def quadratic(coefficient=-1.0):
    """``h(t, phi) = c phi(-r) * phi(0)`` (componentwise); ``epsilon(s) = |c| s``."""
    c = float(coefficient)
    return PerturbationSpec(lambda t, s: c * s[:, 0, :] * s[:, -1, :],
                            epsilon_modulus=lambda s: abs(c) * s, name="quadratic")


def saturating(coefficient=1.0):
    """``h(t, phi) = c (tanh phi(0) - phi(0))``; ``epsilon(s) = |c| s^2 / 3``."""
    c = float(coefficient)
    return PerturbationSpec(lambda t, s: c * (np.tanh(s[:, -1, :]) - s[:, -1, :]),
                            epsilon_modulus=lambda s: abs(c) * s * s / 3.0,
                            name="saturating")


BUILTINS = {"cubic": cubic, "quadratic": quadratic, "saturating": saturating}


def builtin(name, coefficient=None):
    if name in (None, "none"):
        return zero_perturbation()
    if name not in BUILTINS:
        raise InputError(f"unknown perturbation {name!r}; choose from {sorted(BUILTINS)}")
    return BUILTINS[name]() if coefficient is None else BUILTINS[name](coefficient)


@dataclass(frozen=True, eq=False)
class SimulationResult:
    """Trajectory up to the last accepted node and the reason a run stopped."""

    trajectory: Trajectory
    completed: bool
    t_last: float
    reason: str = ""


def _segments(x, lo, count, N):
    """Segments ending at global nodes ``lo .. lo + count - 1``."""
    win = np.lib.stride_tricks.sliding_window_view(x[lo - N:lo + count], N + 1, axis=0)
    return np.moveaxis(win, -1, 1)


def simulate(kernel, pert, phi, T, t0=0.0, cfg=None, ball=None):
    """Solve the perturbed equation on ``[t0, t0 + T]`` from ``x_{t0} = phi``.

    Parameters
    ----------
    ball : float, optional
        Working-ball radius; the run stops once ``||x_t||`` reaches it.

    Returns
    -------
    SimulationResult
        ``completed`` is False when Picard failed on a single step or the
        solution left the working ball; ``t_last`` is the last accepted time.
    """
    cfg = cfg or SolverConfig()
    pert = pert or zero_perturbation()
    if not phi.is_continuous:
        raise InputError("simulate needs a continuous history")
    grid = _check_inputs(kernel, phi, T)
    N, M, h, n = grid.N, grid.M, grid.h, kernel.n
    Mw = max(1, min(N, int(math.floor(cfg.window_for(kernel) / h + 1e-9))))

    x = np.zeros((grid.size, n))
    x[:N + 1] = phi.samples
    P = np.zeros((grid.size - 1, n))
    P[:N] = 0.5 * h * (x[:N] + x[1:N + 1])
    K = kernel.node_weights
    nz = np.array([j for j in range(N + 1) if np.any(K[j])], dtype=int)
    Knz = K[nz]
    Kband_full = K[N - np.arange(N)]
    fv = np.zeros((M + 1, n))
    active = not pert.is_zero
    if active:
        fv[0] = pert.evaluate(np.array([t0]), _segments(x, N, 1, N))[0]

    i0 = 0
    width = Mw
    reason = ""
    while i0 < M:
        i1 = min(i0 + width, M)
        ll = np.arange(i0 + 1, i1 + 1)
        frozen = np.zeros((len(ll), n))
        if nz.size:
            idx = ll[:, None] - 1 + nz[None, :]
            mask = idx < N + i0
            frozen = np.einsum("jab,ijb->ia", Knz, P[np.where(mask, idx, 0)] * mask[:, :, None])
        x_start = x[N + i0]
        x_old = np.broadcast_to(x_start, (len(ll), n)).copy()
        tt = t0 + ll * h
        converged = False
        for _ in range(int(cfg.max_picard_iters)):
            seq = np.vstack([x_start[None], x_old])
            inc = frozen + _causal_conv(Kband_full[:len(ll)], 0.5 * h * (seq[:-1] + seq[1:]))
            if active:
                x[N + i0 + 1:N + i1 + 1] = x_old
                fw = pert.evaluate(tt, _segments(x, N + i0 + 1, len(ll), N))
                fseq = np.vstack([fv[i0][None], fw])
                inc = inc + 0.5 * h * (fseq[:-1] + fseq[1:])
            with np.errstate(over="ignore", invalid="ignore"):
                x_new = x_start + np.cumsum(inc, axis=0)
                change = float(np.max(np.abs(x_new - x_old)))
                scale = float(np.max(np.abs(x_new)))
            x_old = x_new
            if not math.isfinite(change):
                break
            if change <= cfg.picard_tol * scale or change == 0.0:
                converged = True
                break
        if not converged:
            if width > 1:
                width = max(1, width // 2)
                continue
            reason = f"Picard iteration failed at t = {t0 + (i0 + 1) * h:.6g}"
            break
        x[N + i0 + 1:N + i1 + 1] = x_old
        seq = np.vstack([x_start[None], x_old])
        P[N + i0:N + i1] = 0.5 * h * (seq[:-1] + seq[1:])
        if active:
            fv[ll] = pert.evaluate(tt, _segments(x, N + i0 + 1, len(ll), N))
        if ball is not None:
            pw = pointwise_norm(x[N + i0 + 1:N + i1 + 1])
            out = np.nonzero(pw >= ball)[0]
            if out.size:
                i1 = i0 + int(out[0])
                reason = f"left the working ball of radius {ball:g} at t = {t0 + (i1 + 1) * h:.6g}"
                i0 = i1
                break
        i0 = i1

    last = i0
    sub = grid.with_horizon(last * h)
    traj = Trajectory(sub, x[:sub.size].copy(), None, float(t0))
    return SimulationResult(traj, last == M and not reason, float(t0 + last * h), reason)


# certificates ---------------------------------------------------------------


@dataclass(frozen=True)
class StabilityCertificate:
    """``||x_t|| <= M e^{-beta (t - t0)} ||phi||`` whenever ``||phi|| < delta``."""

    M: float
    beta: float
    delta: float
    delta_tilde: float
    epsilon: float
    alpha: float

    def bound(self, t, phi_norm, t0=0.0):
        return self.M * np.exp(-self.beta * (np.asarray(t) - t0)) * phi_norm


def epsilon_on_ball(epsilon_modulus, delta_tilde, samples=257):
    """``sup_{0 < s <= delta_tilde} epsilon(s)`` by sampling (nondecreasing modulus)."""
    s = np.linspace(0.0, float(delta_tilde), samples)[1:]
    vals = np.array([float(epsilon_modulus(v)) for v in s])
    if np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise InputError("epsilon_modulus must be finite and nonnegative")
    if np.any(np.diff(vals) < -1e-12 * max(1.0, vals.max())):
        raise InputError("epsilon_modulus must be nondecreasing")
    return float(vals.max())


def certificate_constant(hist_fit, kernel=None, semigroup_M=None):
    """Constant covering both ``sup_theta |X(t + theta)|`` and the solution operator.

    Without an explicit ``semigroup_M`` the bound implied by the history
    envelope is used (needs ``kernel`` for its total variation).
    """
    M = hist_fit.M
    if semigroup_M is None and kernel is not None:
        semigroup_M = semigroup_constant_from_X(hist_fit, total_variation(kernel), kernel.r)
    if semigroup_M is not None:
        M = max(M, float(semigroup_M))
    return max(M, 1.0)


def linearized_stability_certificate(fit, epsilon_modulus, delta_tilde, kernel=None,
                                     semigroup_M=None):
    """``beta = alpha - M eps`` and ``delta = delta_tilde / M``.

    ``fit`` is the history envelope of ``X``; ``eps`` is the sampled sup of
    ``epsilon_modulus`` on the working ball.
    """
    if not fit.alpha > 0:
        raise CertificateError("the linear part is not exponentially stable")
    if not delta_tilde > 0:
        raise InputError("delta_tilde must be positive")
    M = certificate_constant(fit, kernel, semigroup_M)
    eps = (epsilon_on_ball(epsilon_modulus, delta_tilde) if callable(epsilon_modulus)
           else float(epsilon_modulus))
    if M * eps >= fit.alpha:
        raise CertificateError(
            f"no admissible epsilon: M * eps = {M * eps:.6g} >= alpha = {fit.alpha:.6g}")
    return StabilityCertificate(M, fit.alpha - M * eps, delta_tilde / M, float(delta_tilde),
                                eps, fit.alpha)


def settling_time(nu_envelope, epsilon, sigma, horizon=1e6):
    """Smallest ``a >= sigma`` with ``nu(t) < epsilon`` for ``t >= a`` (decreasing ``nu``)."""
    if nu_envelope(sigma) < epsilon:
        return float(sigma)
    lo, hi = float(sigma), float(sigma) + 1.0
    while nu_envelope(hi) >= epsilon:
        hi = sigma + 2 * (hi - sigma)
        if hi - sigma > horizon:
            raise CertificateError("nu(t) never drops below epsilon")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if nu_envelope(mid) < epsilon:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-12 * max(1.0, hi):
            break
    return hi


def poincare_lyapunov_certificate(fit, epsilon, nu_envelope, sigma, R, delta_tilde,
                                  kernel=None, semigroup_M=None, epsilon_modulus=None):
    """Certificate for a linear part perturbed by a decaying ``N(t)``.

    ``beta = alpha - 2 M0 eps`` and ``M = M0 e^{M0 (R - eps)(a - sigma)}``
    with ``a`` the time after which ``nu < eps``; ``M = M0`` when ``a = sigma``.
    """
    if not fit.alpha > 0:
        raise CertificateError("the linear part is not exponentially stable")
    M0 = certificate_constant(fit, kernel, semigroup_M)
    eps = float(epsilon)
    if epsilon_modulus is not None and epsilon_on_ball(epsilon_modulus, delta_tilde) > eps:
        raise CertificateError("epsilon_modulus exceeds epsilon on the working ball")
    if 2 * M0 * eps >= fit.alpha:
        raise CertificateError(
            f"no admissible epsilon: 2 M0 eps = {2 * M0 * eps:.6g} >= alpha = {fit.alpha:.6g}")
    a = settling_time(nu_envelope, eps, sigma)
    if a > sigma:
        if not (R > eps and R > nu_envelope(sigma)):
            raise CertificateError("R must exceed epsilon and sup nu on [sigma, a]")
        M = M0 * math.exp(M0 * (R - eps) * (a - sigma))
    else:
        M = M0
    return StabilityCertificate(M, fit.alpha - 2 * M0 * eps, delta_tilde / M,
                                float(delta_tilde), eps, fit.alpha)


@dataclass
class DecayReport:
    times: np.ndarray
    margins: np.ndarray
    status: str
    tol: float = 1e-9

    @property
    def passed(self):
        return self.status == "pass"

    @property
    def worst(self):
        return float(np.min(self.margins)) if len(self.margins) else 0.0


def verify_decay(x, cert, phi_norm, t0=None, tol=1e-9):
    """Margins ``M e^{-beta (t - t0)} ||phi|| - ||x_t||`` on the trajectory's nodes.

    Histories with ``||phi|| >= delta`` are outside the certificate: no bound
    is asserted and the status says so.
    """
    t0 = x.t_offset if t0 is None else t0
    t = x.grid.future_times() + x.t_offset
    if phi_norm >= cert.delta:
        return DecayReport(t, np.zeros(0), "outside certificate", tol)
    margins = cert.bound(t, phi_norm, t0) - x.segment_norms()
    return DecayReport(t, margins, "pass" if margins.min() >= -tol else "fail", tol)


def gronwall_weighted_margins(x, cert, phi_norm, t0=None, rel=1e-6):
    """``M ||phi|| e^{M eps (t - t0)} (1 + rel) - e^{alpha (t - t0)} ||x_t||``."""
    t0 = x.t_offset if t0 is None else t0
    s = x.grid.future_times() + x.t_offset - t0
    lhs = np.exp(cert.alpha * s) * x.segment_norms()
    rhs = cert.M * phi_norm * np.exp(cert.M * cert.epsilon * s) * (1 + rel)
    return rhs - lhs


__all__ = [
    "PerturbationSpec", "zero_perturbation", "cubic", "quadratic", "saturating",
    "builtin", "BUILTINS", "SimulationResult", "simulate", "StabilityCertificate",
    "epsilon_on_ball", "certificate_constant", "linearized_stability_certificate",
    "settling_time", "poincare_lyapunov_certificate", "DecayReport", "verify_decay",
    "gronwall_weighted_margins",
]
