"""History-induced forcing terms and variation-of-constants assemblies.

For a history ``phi`` the solution of the homogeneous equation splits as
``x(t) = X(t) phi(0) + z(t)`` where ``z`` solves the zero-history equation
driven by the forcing ``G_ell(t; phi)``.  For continuous ``phi`` that forcing is
the integral of ``g_ell(t; phi) = int_{[-r, -t)} d eta(theta) phi(t + theta)``.

Every representation of the solution is assembled here from ``X``, ``X'``
and these forcings so that they can be compared against the direct solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .convolution import GridFunction, as_grid_function, convolve, volterra
from .errors import GridError, InputError
from .history import (History, Trajectory, constant_prolongation, cumulative)
from .kernel import StieltjesKernel, reverse, rs_integrate


@dataclass(frozen=True, eq=False)
class ForcingPair:
    """``g_ell`` (may be None for discontinuous histories) and ``G_ell``."""

    gl: GridFunction | None
    GL: GridFunction


def _check_history(kernel, phi):
    if phi.n != kernel.n:
        raise GridError(f"history dimension {phi.n} != kernel dimension {kernel.n}")
    kernel.check_grid(phi.grid)


def _require_continuous(phi, what):
    if not phi.is_continuous:
        raise InputError(
            f"{what} needs a continuous history; use G_ell for discontinuous data")


def g_ell(kernel, phi, T, return_both=False):
    """``g_ell(t; phi)`` on ``[0, T]`` for a continuous history.

    Values are right limits: the mass sitting at ``theta = -t`` is excluded.
    Left limits, which include it, are stored in ``GridFunction.left``.  With
    ``return_both`` the value computed from ``L phi_bar_t - [eta(0) -
    eta(-t)] phi(0)`` is returned as well.
    """
    _check_history(kernel, phi)
    _require_continuous(phi, "g_ell")
    grid = phi.grid.with_horizon(T)
    N, M, h, n = grid.N, grid.M, grid.h, kernel.n
    p = phi.samples
    out = np.zeros((M + 1, n))
    left = np.zeros((M + 1, n))
    for i in range(min(M, N - 1) + 1):
        # theta in [-r, -t]: nodes j = 0 .. N - i, phi index i + j
        jmax = N - i
        val = np.zeros(n)
        for k, (_, J) in zip(kernel.jump_index, kernel.jumps):
            if k < jmax:
                val = val + J @ p[i + k]
        if kernel.density is not None and jmax > 0:
            prod = np.einsum("jab,jb->ja", kernel.density[:jmax + 1], p[i:i + jmax + 1])
            val = val + np.trapezoid(prod, dx=h, axis=0)
        out[i] = val
        left[i] = val
        if i > 0:
            left[i] = val + kernel.jump_at_index(jmax) @ p[N]
    if M >= N:
        # the mass at -r leaves the window at t = r
        left[N] = kernel.jump_at_index(0) @ p[N]
    gl = GridFunction(out, h, left if np.any(left != out) else None)
    if not return_both:
        return gl
    return gl, GridFunction(_g_ell_closed(kernel, phi, grid), h)


def _g_ell_closed(kernel, phi, grid):
    """``L phi_bar_t - [eta(0) - eta(-t)] phi(0)`` on the nodes of ``[0, T]``."""
    N, M = grid.N, grid.M
    bar = constant_prolongation(phi, grid.T).samples
    inc = reverse(kernel).increments(M + 1)
    out = np.zeros((M + 1, kernel.n))
    for i in range(M + 1):
        out[i] = rs_integrate(kernel, bar[i:i + N + 1]) - inc[i] @ phi.value_at_zero
    return out


def G_ell(kernel, phi, T):
    """``G_ell(t; phi) = L int_0^t phi_bar_s ds - int_0^t [eta(0) - eta(-s)] phi(0) ds``.

    Valid for any history in the memory space.  The second term is
    evaluated in closed form: ``sum_k J_k (t + theta_k)_+`` for the point
    masses and a trapezoid of ``A(theta) (t + theta)`` over ``[-min(t, r), 0]``
    for the density.
    """
    _check_history(kernel, phi)
    grid = phi.grid.with_horizon(T)
    N, M, h, n = grid.N, grid.M, grid.h, kernel.n
    C = cumulative(constant_prolongation(phi, T))
    K = kernel.node_weights
    i = np.arange(M + 1)
    first = np.zeros((M + 1, n))
    for j in range(N + 1):
        if np.any(K[j]):
            first += (C[i + j] - C[j]) @ K[j].T
    t = i * h
    coef = np.zeros((M + 1, n, n))
    for th, J in kernel.jumps:
        coef += np.clip(t + th, 0.0, None)[:, None, None] * J
    if kernel.density is not None:
        A = kernel.density
        th = grid.thetas()
        for ii in range(1, M + 1):
            m = min(ii, N)
            w = (t[ii] + th[N - m:])[:, None, None] * A[N - m:]
            coef[ii] += np.trapezoid(w, dx=h, axis=0)
    out = first - coef @ phi.value_at_zero
    out[0] = 0.0
    return GridFunction(out, h)


def G_ell_definition(kernel, phi, T):
    """Two-case double quadrature of ``G_ell`` (reference implementation).

    ``int d eta(theta) int_theta^0 phi + int_{-r}^{-t} d eta(theta)
    int_0^{t + theta} phi`` for ``t < r`` and the first term alone for
    ``t >= r``.  Inner integrals are separate trapezoid sums per node.
    """
    _check_history(kernel, phi)
    grid = phi.grid.with_horizon(T)
    N, M, h = grid.N, grid.M, grid.h
    p = phi.samples
    P = np.zeros((N + 1, kernel.n))
    for j in range(N):
        P[j] = np.trapezoid(p[j:], dx=h, axis=0)
    head = rs_integrate(kernel, P)
    out = np.zeros((M + 1, kernel.n))
    thetas = grid.thetas()
    for i in range(1, M + 1):
        if i >= N:
            out[i] = head
            continue
        # int_0^{t + theta} phi = -P(t + theta) for theta <= -t
        shifted = np.zeros_like(P)
        shifted[:N + 1 - i] = -P[i:]
        out[i] = head + rs_integrate(kernel, shifted, -grid.r, float(thetas[N - i]))
    return GridFunction(out, h)


def G_ell_delays(delays, phi, T):
    """Closed form for differential-difference kernels.

    ``sum_k B_k int_{-tau_k}^{min(t, tau_k) - tau_k} phi(s) ds``; a mass at
    ``theta = 0`` contributes nothing.
    """
    grid = phi.grid.with_horizon(T)
    N, M, h = grid.N, grid.M, grid.h
    p = phi.samples
    cum = np.zeros_like(p)
    cum[1:] = np.cumsum(0.5 * h * (p[1:] + p[:-1]), axis=0)
    out = np.zeros((M + 1, phi.n))
    i = np.arange(M + 1)
    for tau, B in delays:
        if tau == 0:
            continue
        m = int(round(tau / h))
        lo = N - m
        hi = lo + np.minimum(i, m)
        out += (cum[hi] - cum[lo]) @ np.atleast_2d(B).T
    return GridFunction(out, h)


def forcing_pair(kernel, phi, T):
    gl = g_ell(kernel, phi, T) if phi.is_continuous else None
    return ForcingPair(gl, G_ell(kernel, phi, T))


# assemblies -----------------------------------------------------------------


def _future_gf(X, left=True):
    N = X.grid.N
    lf = X.left_limits()[N:] if left else None
    if lf is not None and np.array_equal(lf, X.samples[N:]):
        lf = None
    return GridFunction(X.samples[N:], X.grid.h, lf)


def _trajectory(grid, phi, future):
    N = grid.N
    s = np.zeros((grid.size, future.shape[1]))
    if phi is not None:
        s[:N] = phi.samples[:N]
    s[N:] = future
    minus = None
    if phi is not None and not phi.is_continuous:
        minus = np.array(phi.samples[N])
    return Trajectory(grid, s, minus)


def _forcing_values(G, grid, n):
    G = as_grid_function(G, grid.h)
    v = np.asarray(G.values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if v.shape != (grid.M + 1, n):
        raise GridError(f"forcing needs shape {(grid.M + 1, n)}, got {v.shape}")
    if np.max(np.abs(v[0])) > 1e-14 * max(1.0, float(np.max(np.abs(v)))):
        raise InputError("forcing G must vanish at t = 0")
    return v


def _Xphi0(X, v):
    return X.samples[X.grid.N:] @ np.asarray(v, dtype=float)


def voc_zero_history(X, Xdot, G):
    """``x(t) = G(t) + int_0^t X'(t - u) G(u) du`` (zero history)."""
    grid = X.grid
    v = _forcing_values(G, grid, X.samples.shape[1])
    fut = v + convolve(_future_gf(Xdot), GridFunction(v, grid.h)).values
    return _trajectory(grid, None, fut)


def voc_homogeneous(X, Xdot, kernel, phi):
    """``X(t) phi(0) + G_ell(t) + int_0^t X'(t - u) G_ell(u) du``."""
    grid = X.grid
    GL = G_ell(kernel, phi, grid.T).values
    fut = (_Xphi0(X, phi.value_at_zero) + GL
           + convolve(_future_gf(Xdot), GridFunction(GL, grid.h)).values)
    return _trajectory(grid, phi, fut)


def voc_full(X, Xdot, kernel, phi, G):
    """Full formula with forcing ``G`` (``G(0) = 0``)."""
    grid = X.grid
    v = _forcing_values(G, grid, kernel.n)
    S = G_ell(kernel, phi, grid.T).values + v
    fut = (_Xphi0(X, phi.value_at_zero) + S
           + convolve(_future_gf(Xdot), GridFunction(S, grid.h)).values)
    return _trajectory(grid, phi, fut)


def voc_kernel_form(X, kernel, phi, g=None):
    """``X(t) phi(0) + int_0^t X(t - u) [g_ell(u) + g(u)] du`` for continuous ``phi``.

    With ``phi = 0`` this is the convolution representation of the forced
    solution; with ``g = None`` the forcing is ``g_ell`` alone.
    """
    _require_continuous(phi, "voc_kernel_form")
    grid = X.grid
    gl = g_ell(kernel, phi, grid.T)
    vals, left = gl.values, gl.left_values
    if g is not None:
        g = as_grid_function(g, grid.h)
        gv = g.values if g.values.ndim == 2 else g.values[:, None]
        gvl = g.left_values if g.values.ndim == 2 else g.left_values[:, None]
        vals, left = vals + gv, left + gvl
    f = GridFunction(vals, grid.h, None if np.array_equal(vals, left) else left)
    fut = _Xphi0(X, phi.value_at_zero) + convolve(_future_gf(X, left=False), f).values
    return _trajectory(grid, phi, fut)


def naito_formula(X, kernel, phi):
    """``phi(0) + int_0^t X(t - u) L phi_bar_u du`` for continuous ``phi``."""
    _require_continuous(phi, "naito_formula")
    grid = X.grid
    N, M = grid.N, grid.M
    bar = constant_prolongation(phi, grid.T).samples
    K = kernel.node_weights
    i = np.arange(M + 1)
    Lbar = np.zeros((M + 1, kernel.n))
    for j in range(N + 1):
        if np.any(K[j]):
            Lbar += bar[i + j] @ K[j].T
    fut = phi.value_at_zero + convolve(_future_gf(X, left=False),
                                       GridFunction(Lbar, grid.h)).values
    return _trajectory(grid, phi, fut)


def dd_closed_form(X, delays, phi):
    """``X(t) phi(0) + sum_k int_{-tau_k}^0 X(t - tau_k - theta) B_k phi(theta) dtheta``.

    ``delays`` is a sequence of ``(tau_k, B_k)`` or a jump-only kernel.  ``X``
    is taken as ``O`` for negative arguments; trapezoid panels use the
    one-sided value of ``X`` on their own side of its jump at zero.
    """
    if isinstance(delays, StieltjesKernel):
        if delays.has_density:
            raise InputError("closed form needs a kernel without a density part")
        delays = delays.delays
    grid = X.grid
    N, M, h = grid.N, grid.M, grid.h
    XR = X.samples
    XL = XR.copy()
    XL[N] = 0.0
    p = phi.samples
    fut = _Xphi0(X, phi.value_at_zero)
    i = np.arange(M + 1)
    for tau, B in delays:
        if tau <= 0:
            continue
        m = int(round(tau / h))
        if abs(m * h - tau) > 1e-9 * tau or m > N:
            raise GridError(f"delay {tau} is not a grid node of [0, r]")
        Bp = p @ np.atleast_2d(B).T
        acc = np.zeros_like(fut)
        # theta_j = (j - N) h for j = N - m .. N; X argument index 2N + i - m - j
        for j in range(N - m, N):
            acc += XL[2 * N + i - m - j] @ Bp[j] + XR[2 * N + i - m - j - 1] @ Bp[j + 1]
        fut = fut + 0.5 * h * acc
    return _trajectory(grid, phi, fut)


def route_discrepancies(routes, reference="direct"):
    """Sup-norm differences on ``[0, T]`` between named trajectories."""
    ref = routes[reference].future()
    return {name: float(np.max(np.abs(x.future() - ref)))
            for name, x in routes.items() if name != reference}


def voc_routes(kernel, phi, T, cfg=None, X=None, Xdot=None):
    """All applicable solution representations for a homogeneous problem."""
    from .fundamental import fundamental_derivative, principal_fundamental
    from .solver import solve_homogeneous

    if X is None:
        X = principal_fundamental(kernel, T, cfg)
    if Xdot is None:
        Xdot = fundamental_derivative(kernel, X)
    routes = {"direct": solve_homogeneous(kernel, phi, T, cfg),
              "voc_homogeneous": voc_homogeneous(X, Xdot, kernel, phi)}
    if phi.is_continuous:
        routes["voc_kernel_form"] = voc_kernel_form(X, kernel, phi)
        routes["naito"] = naito_formula(X, kernel, phi)
    if not kernel.has_density:
        routes["dd_closed_form"] = dd_closed_form(X, kernel, phi)
    return routes


__all__ = [
    "ForcingPair", "forcing_pair", "g_ell", "G_ell", "G_ell_definition",
    "G_ell_delays", "voc_zero_history", "voc_homogeneous", "voc_full",
    "voc_kernel_form", "naito_formula", "dd_closed_form", "voc_routes",
    "route_discrepancies", "History",
]
