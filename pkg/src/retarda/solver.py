"""Mild solutions of ``x'(t) = L x_t (+ forcing)`` by windowed Picard iteration.

The unknown satisfies the integrated equation

    x(t) = phi(0) + L int_0^t x_s ds + G(t),

where ``(int_0^t x_s ds)(theta) = C(t + theta) - C(theta)`` and ``C`` is the
running trapezoid integral of the solution glued to its history.  With the
kernel reduced to node weights ``K_j`` and ``P_p`` the trapezoid panel over
``[s_p, s_{p+1}]`` this telescopes to

    x_i = x_{i-1} + (G_i - G_{i-1}) + sum_j K_j P_{i-1+j},

which is the form iterated here: roundoff then scales with ``|x|`` rather
than with ``|C|``, so decaying solutions keep their relative accuracy.

The horizon is cut into windows of length ``a`` with ``Var(eta) a < 1``.
Inside a window the sum splits into a frozen part (nodes before the window)
and an in-window causal convolution, and the fixed point is found by Picard
iteration warm-started from the previous window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .convolution import GridFunction, as_grid_function, volterra
from .errors import ConfigError, GridError, InputError, PicardError
from .history import History, Trajectory, integrate_segments, pointwise_norm
from .kernel import apply_functional, total_variation


@dataclass(frozen=True)
class SolverConfig:
    """Picard controls.

    ``window`` defaults to ``min(r, 0.5 / Var(eta))``.  The stopping rule is
    ``sup |x_new - x_old| <= picard_tol * sup |x_new|`` over the window.
    ``initial_guess`` is ``"previous"`` (constant continuation of the last
    computed value) or ``"zero"``.
    """

    picard_tol: float = 1e-12
    max_picard_iters: int = 200
    window: float | None = None
    initial_guess: str = "previous"

    def __post_init__(self):
        if not self.picard_tol > 0:
            raise ConfigError("must be positive", "picard_tol")
        if int(self.max_picard_iters) < 1:
            raise ConfigError("must be a positive integer", "max_picard_iters")
        if self.window is not None and not self.window > 0:
            raise ConfigError("must be positive", "window")
        if self.initial_guess not in ("previous", "zero"):
            raise ConfigError("must be 'previous' or 'zero'", "initial_guess")

    def window_for(self, kernel):
        """Window length actually used for ``kernel``; checks contraction."""
        tv = total_variation(kernel)
        a = self.window
        if a is None:
            a = kernel.r if tv == 0 else min(kernel.r, 0.5 / tv)
        if tv * a >= 1:
            raise ConfigError(
                f"window {a} violates the contraction condition "
                f"Var(eta) * window = {tv * a:.6g} >= 1", "window")
        return a


def _check_inputs(kernel, phi, T):
    grid = phi.grid.with_horizon(T)
    kernel.check_grid(grid)
    if phi.n != kernel.n:
        raise GridError(f"history dimension {phi.n} != kernel dimension {kernel.n}")
    return grid


def _forcing_array(G, grid, n):
    if G is None:
        return None
    G = as_grid_function(G, grid.h)
    vals = np.asarray(G.values, dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    if vals.shape != (grid.M + 1, n):
        raise GridError(f"forcing needs shape {(grid.M + 1, n)}, got {vals.shape}")
    scale = max(1.0, float(np.max(np.abs(vals))) if vals.size else 1.0)
    if np.max(np.abs(vals[0])) > 1e-14 * scale:
        raise InputError("forcing G must vanish at t = 0")
    return vals


def _causal_conv(Kband, C):
    """``W_i = sum_d Kband[d] @ C[i - d]`` for a short block sequence."""
    m, n = C.shape
    out = np.zeros((m, n))
    nz = [d for d in range(min(len(Kband), m)) if np.any(Kband[d])]
    if len(nz) <= 8:
        for d in nz:
            out[d:] += C[:m - d] @ Kband[d].T
        return out
    for a in range(n):
        for b in range(n):
            out[:, a] += np.convolve(Kband[:m, a, b], C[:, b])[:m]
    return out


def _mild_solve(kernel, phi, G, T, cfg):
    cfg = cfg or SolverConfig()
    grid = _check_inputs(kernel, phi, T)
    N, M, h, n = grid.N, grid.M, grid.h, kernel.n
    window = cfg.window_for(kernel)
    Mw = max(1, min(N, int(math.floor(window / h + 1e-9))))

    x = np.zeros((grid.size, n))
    x[:N] = phi.samples[:N]
    x[N] = phi.value_at_zero
    left0 = phi.samples[N]

    # trapezoid panels P[p] over [s_p, s_{p+1}]; the panel ending at zero
    # uses the history-side value
    P = np.zeros((grid.size - 1, n))
    hist = x[:N + 1].copy()
    hist[N] = left0
    P[:N] = 0.5 * h * (hist[:-1] + hist[1:])

    K = kernel.node_weights
    nz = np.array([j for j in range(N + 1) if np.any(K[j])], dtype=int)
    Knz = K[nz]
    dG = np.zeros((M + 1, n))
    if G is not None:
        dG[1:] = np.diff(G, axis=0)
    # in-window band: Kband[d] = K_{N - d}
    Kband = K[N - np.arange(Mw)]

    i0 = 0
    while i0 < M:
        i1 = min(i0 + Mw, M)
        ll = np.arange(i0 + 1, i1 + 1)
        frozen = np.zeros((len(ll), n))
        if nz.size:
            idx = ll[:, None] - 1 + nz[None, :]
            mask = idx < N + i0
            vals = P[np.where(mask, idx, 0)] * mask[:, :, None]
            frozen = np.einsum("jab,ijb->ia", Knz, vals)
        rhs = dG[ll] + frozen
        x_start = x[N + i0]
        if cfg.initial_guess == "zero":
            x_old = np.zeros((len(ll), n))
        else:
            x_old = np.broadcast_to(x_start, (len(ll), n)).copy()
        converged = False
        change = math.inf
        for _ in range(int(cfg.max_picard_iters)):
            seq = np.vstack([x_start[None], x_old])
            Pw = 0.5 * h * (seq[:-1] + seq[1:])
            x_new = x_start + np.cumsum(rhs + _causal_conv(Kband, Pw), axis=0)
            change = float(np.max(np.abs(x_new - x_old)))
            scale = float(np.max(np.abs(x_new)))
            x_old = x_new
            if not math.isfinite(change):
                break
            if change <= cfg.picard_tol * scale or change == 0.0:
                converged = True
                break
        if not converged:
            raise PicardError(
                f"Picard iteration did not converge on window [{i0 * h}, {i1 * h}]"
                f" after {cfg.max_picard_iters} iterations (last change {change:.3e})",
                residual=change, t_last=i0 * h)
        seq = np.vstack([x_start[None], x_old])
        x[N + i0 + 1:N + i1 + 1] = x_old
        P[N + i0:N + i1] = 0.5 * h * (seq[:-1] + seq[1:])
        i0 = i1

    minus = None if phi.is_continuous else np.array(left0)
    return Trajectory(grid, x, minus)


def solve_homogeneous(kernel, phi, T, cfg=None):
    """Mild solution of ``x'(t) = L x_t`` with ``x_0 = phi`` on ``[0, T]``."""
    return _mild_solve(kernel, phi, None, T, cfg)


def solve_forced_G(kernel, phi, G, T, cfg=None):
    """Solution of ``x(t) = phi(0) + L int_0^t x_s ds + G(t)``; needs ``G(0) = 0``."""
    grid = phi.grid.with_horizon(T)
    return _mild_solve(kernel, phi, _forcing_array(G, grid, kernel.n), T, cfg)


def solve_forced_g(kernel, phi, g, T, cfg=None):
    """Mild solution of ``x'(t) = L x_t + g(t)``; ``g`` sampled on ``[0, T]``."""
    g = as_grid_function(g, phi.h)
    return solve_forced_G(kernel, phi, volterra(g), T, cfg)


def mild_residual(kernel, x, G=None, phi_at_zero=None):
    """Sup over grid times of ``|x(t) - x(0) - L int_0^t x_s ds - G(t)|``.

    Evaluated node by node with ``integrate_segments`` and
    ``apply_functional``, independently of the solver's bookkeeping.
    """
    grid = x.grid
    x0 = x.samples[grid.N] if phi_at_zero is None else phi_at_zero
    Gv = None
    if G is not None:
        Gv = _forcing_array(G, grid, kernel.n)
    worst = 0.0
    for i, t in enumerate(grid.future_times()):
        val = x0 + apply_functional(kernel, integrate_segments(x, t))
        if Gv is not None:
            val = val + Gv[i]
        worst = max(worst, float(np.max(np.abs(x.samples[grid.N + i] - val))))
    return worst


def gamma_norm(x, gamma):
    """``sup_t e^{-gamma t} |x(t)|`` for a trajectory with zero history."""
    N = x.grid.N
    if np.any(x.samples[:N + 1]) or (
            x.value_at_zero_minus is not None and np.any(x.value_at_zero_minus)):
        raise InputError("gamma_norm needs a trajectory with zero initial history")
    t = x.grid.future_times()
    return float(np.max(np.exp(-gamma * t) * pointwise_norm(x.future())))


def deviation_from_prolongation(x, phi):
    """``y = x - phi_bar``: zero history, ``y(t) = x(t) - phi(0)`` for ``t >= 0``."""
    N = x.grid.N
    y = np.zeros_like(x.samples)
    y[N:] = x.samples[N:] - phi.value_at_zero
    return Trajectory(x.grid, y)


__all__ = [
    "SolverConfig", "solve_homogeneous", "solve_forced_g", "solve_forced_G",
    "mild_residual", "gamma_norm", "deviation_from_prolongation", "History",
    "GridFunction",
]
