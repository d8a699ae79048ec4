"""Exponential decay envelopes and Gronwall-type bounds.

An envelope ``|f(t)| <= M e^{-alpha t}`` is fitted in two stages: the rate
comes from a least-squares line through ``log |f|`` at the local maxima of
``|f|`` (oscillating decay would bias a fit through every sample), and ``M``
is then the smallest constant making the envelope hold at every node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFitError, InputError
from .history import History, pointwise_norm, seminorm_m1
from .kernel import total_variation
from .solver import SolverConfig, solve_homogeneous


@dataclass(frozen=True)
class DecayFit:
    """Envelope ``M e^{-alpha t}`` valid on ``[0, T]``; fitted on ``[t_min, T]``."""

    M: float
    alpha: float
    residual: float
    t_min: float
    T: float
    stable: bool

    def envelope(self, t):
        return self.M * np.exp(-self.alpha * np.asarray(t, dtype=float))

    def as_dict(self):
        return {"M": self.M, "alpha": self.alpha, "residual": self.residual,
                "window": [self.t_min, self.T], "stable": self.stable}


def _local_maxima(f):
    i = np.arange(1, len(f) - 1)
    return i[(f[1:-1] >= f[:-2]) & (f[1:-1] > f[2:])]


def fit_envelope(t, f, t_min=0.0, T=None):
    """Envelope fit for nonnegative samples ``f`` at times ``t``."""
    t = np.asarray(t, dtype=float)
    f = np.asarray(f, dtype=float)
    T = float(t[-1]) if T is None else float(T)
    if not 0 <= t_min < T:
        raise InputError(f"need 0 <= t_min < T, got t_min = {t_min}, T = {T}")
    keep = t <= T + 1e-12 * max(1.0, T)
    t, f = t[keep], f[keep]
    win = np.nonzero(t >= t_min - 1e-12 * max(1.0, T))[0]
    peaks = win[_local_maxima(f[win])] if len(win) > 2 else np.array([], int)
    used = peaks if len(peaks) >= 2 else win
    if len(used) < 2:
        raise DegenerateFitError("fewer than two samples in the fit window")
    if np.any(f[used] <= 0) or not np.all(np.isfinite(f[used])):
        raise DegenerateFitError("envelope fit needs strictly positive finite samples")
    logs = np.log(f[used])
    slope, icpt = np.polyfit(t[used], logs, 1)
    alpha = -float(slope)
    if abs(alpha) < 1e-12:
        alpha = 0.0
    M = float(np.max(f * np.exp(alpha * t)))
    residual = float(np.max(np.abs(logs - (icpt + slope * t[used]))))
    return DecayFit(M, alpha, residual, float(t_min), T, alpha > 0)


def fit_exponential_envelope(X, t_min=None, T=None):
    """Envelope for ``t -> |X(t)|`` on ``[0, T]``; ``t_min`` defaults to ``min(r, T / 2)``."""
    t = X.grid.future_times()
    T = X.grid.T if T is None else T
    t_min = min(X.grid.r, 0.5 * T) if t_min is None else t_min
    return fit_envelope(t, pointwise_norm(X.future()), t_min, T)


def history_envelope(X, T=None, t_min=None):
    """Envelope for ``t -> sup_theta |X(t + theta)|``.

    The rate is that of the pointwise fit and ``M`` is the pointwise
    constant inflated by ``e^{alpha r}``, which is valid for every ``t``
    whenever the pointwise envelope is.
    """
    point = fit_exponential_envelope(X, t_min, T)
    M = point.M * math.exp(point.alpha * X.grid.r) if point.alpha > 0 else point.M
    seg = X.segment_norms()
    t = X.grid.future_times()
    keep = t <= point.T + 1e-12
    M = max(M, float(np.max(seg[keep] * np.exp(point.alpha * t[keep]))))
    return DecayFit(M, point.alpha, point.residual, point.t_min, point.T, point.stable)


def default_probes(grid, n):
    """``+-e_j`` constants, sinusoids and ramps (``4 n`` histories)."""
    eye = np.eye(n)
    probes = []
    for j in range(n):
        probes.append(History.constant(eye[j], grid))
        probes.append(History.constant(-eye[j], grid))
    for j in range(n):
        probes.append(History.sinusoid(eye[j], math.pi / grid.r, 0.5, grid))
    for j in range(n):
        probes.append(History.ramp(eye[j] / grid.r, grid, offset=0.5 * eye[j]))
    return probes


def semigroup_ratios(kernel, T, probes=None, cfg=None):
    """``max_phi ||x_t|| / ||phi||`` over the probes, at every node of ``[0, T]``."""
    grid = kernel.grid
    probes = default_probes(grid, kernel.n) if probes is None else list(probes)
    if not probes:
        raise InputError("semigroup_decay needs at least one probe history")
    worst = None
    for phi in probes:
        if not phi.is_continuous:
            raise InputError("probe histories must be continuous")
        s = phi.sup_norm()
        if s == 0:
            raise InputError("probe histories must be nonzero")
        x = solve_homogeneous(kernel, phi, T, cfg)
        ratio = x.segment_norms() / s
        worst = ratio if worst is None else np.maximum(worst, ratio)
    return worst


def semigroup_decay(kernel, T, probes=None, cfg=None, t_min=None):
    """Envelope of the probed solution-operator norms (a lower estimate)."""
    ratios = semigroup_ratios(kernel, T, probes, cfg)
    t = kernel.grid.with_horizon(T).future_times()
    t_min = min(kernel.r, 0.5 * T) if t_min is None else t_min
    return fit_envelope(t, ratios, t_min, T)


def semigroup_constant_from_X(hist_fit, variation, r):
    """Solution-operator constant implied by a history envelope of ``X``.

    ``max(M0 (1 + Var (e^{alpha r} - 1) / alpha), e^{alpha r})``.
    """
    a, M0 = hist_fit.alpha, hist_fit.M
    if not a > 0:
        raise InputError("the fit is not exponentially stable")
    return max(M0 * (1.0 + variation * math.expm1(a * r) / a), math.exp(a * r))


def X_constant_from_semigroup(semi_fit, sup_X_on_r, r):
    """``M0 e^{alpha r} sup_{[0, r]} |X|`` from a solution-operator envelope."""
    a = semi_fit.alpha
    if not a > 0:
        raise InputError("the fit is not exponentially stable")
    return semi_fit.M * math.exp(a * r) * float(sup_X_on_r)


# Gronwall bounds ------------------------------------------------------------


def _times(grid):
    if hasattr(grid, "future_times"):
        return grid.future_times()
    t = np.asarray(grid, dtype=float)
    if t.ndim != 1 or len(t) < 1 or np.any(np.diff(t) <= 0):
        raise InputError("time nodes must be a strictly increasing 1-d array")
    return t


def _profile(value, t, what):
    if callable(value):
        v = np.array([value(s) for s in t], dtype=float)
    else:
        v = np.broadcast_to(np.asarray(value, dtype=float), t.shape).astype(float)
    if v.shape != t.shape:
        raise InputError(f"{what} must be a scalar or have one value per node")
    return v


def _cumint(v, t):
    out = np.zeros_like(t)
    out[1:] = np.cumsum(0.5 * np.diff(t) * (v[1:] + v[:-1]))
    return out


def _beta(beta, t):
    b = _profile(beta, t, "beta")
    if np.any(b < 0):
        raise InputError("beta must be nonnegative")
    return b


def gronwall_classic(alpha, beta, grid):
    """Constant ``alpha``: ``alpha exp(int_a^t beta)``."""
    t = _times(grid)
    return float(alpha) * np.exp(_cumint(_beta(beta, t), t))


def gronwall_classic_closed(alpha, beta, grid):
    """Constant ``alpha`` and ``beta``: ``alpha e^{beta (t - a)}``."""
    t = _times(grid)
    if float(beta) < 0:
        raise InputError("beta must be nonnegative")
    return float(alpha) * np.exp(float(beta) * (t - t[0]))


def gronwall_generalized(alpha, beta, grid):
    """``alpha(t) + int_a^t alpha(s) beta(s) exp(int_s^t beta) ds``."""
    t = _times(grid)
    a = _profile(alpha, t, "alpha")
    b = _beta(beta, t)
    B = _cumint(b, t)
    inner = _cumint(a * b * np.exp(-B), t)
    return a + np.exp(B) * inner


def gronwall_bound(alpha0, beta, u_a_norm, grid):
    """Segment-norm bound ``max(||u_a||, alpha(t)) exp(int_a^t beta)``.

    ``alpha0`` may be a constant or a nondecreasing profile.
    """
    t = _times(grid)
    a = _profile(alpha0, t, "alpha0")
    if np.any(np.diff(a) < -1e-14 * max(1.0, float(np.max(np.abs(a))))):
        raise InputError("alpha0 must be monotonically increasing for the segment bound")
    b = _beta(beta, t)
    if u_a_norm < 0:
        raise InputError("u_a_norm must be nonnegative")
    return np.maximum(float(u_a_norm), a) * np.exp(_cumint(b, t))


@dataclass
class MarginReport:
    """Pointwise ``bound(t) - observed(t)``; passes when all exceed ``-tol``."""

    times: np.ndarray
    margins: np.ndarray
    tol: float = 1e-9
    note: str = ""

    @property
    def worst(self):
        return float(np.min(self.margins)) if len(self.margins) else 0.0

    @property
    def passed(self):
        return self.worst >= -self.tol


def verify_gronwall(x, alpha0, beta, u_a_norm=None, tol=1e-9):
    """Compare ``||x_t||`` with :func:`gronwall_bound` on the trajectory's grid."""
    seg = x.segment_norms()
    t = x.grid.future_times()
    ua = float(seg[0]) if u_a_norm is None else float(u_a_norm)
    bound = gronwall_bound(alpha0, beta, ua, t)
    return MarginReport(t + x.t_offset, bound - seg, tol)


def apriori_profile(kernel, phi, T):
    """Inputs of the a-priori estimate for ``y = x - phi_bar``.

    Returns ``(alpha(t), beta)`` with ``alpha(t) = Var (||phi||_1 + t |phi(0)|)``
    and ``beta = Var``.
    """
    var = total_variation(kernel)
    l1 = seminorm_m1(phi) - float(np.linalg.norm(phi.value_at_zero))
    t = kernel.grid.with_horizon(T).future_times()
    return var * (l1 + t * float(np.linalg.norm(phi.value_at_zero))), var


def apriori_bound(kernel, phi, T):
    """``Var (||phi||_1 + t |phi(0)|) e^{Var t}`` on the nodes of ``[0, T]``."""
    alpha, var = apriori_profile(kernel, phi, T)
    t = kernel.grid.with_horizon(T).future_times()
    return alpha * np.exp(var * t)


__all__ = [
    "DecayFit", "fit_envelope", "fit_exponential_envelope", "history_envelope",
    "default_probes", "semigroup_ratios", "semigroup_decay",
    "semigroup_constant_from_X", "X_constant_from_semigroup", "gronwall_classic",
    "gronwall_classic_closed", "gronwall_generalized", "gronwall_bound",
    "MarginReport", "verify_gronwall", "apriori_profile", "apriori_bound",
    "SolverConfig",
]
