"""Principal fundamental matrix ``X`` of ``x'(t) = L x_t`` and its derivative.

``X`` is the solution started from the instantaneous identity: ``X = O`` on
``[-r, 0)`` and ``X(0) = I``.  Its derivative is

    X'(t) = int_{[max(-t, -r), 0]} d eta(theta) X(t + theta),

which exists except at the nodes ``t = -theta_k`` of the point masses, where
``X'`` jumps.  Both one-sided values are returned; the right limit is the
primary one.

Two analytic references live here as well: a scaled-and-squared Taylor
series for ``e^{tA}`` and the method-of-steps series for the scalar pure
delay equation.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import GridError, InputError
from .history import MatrixTrajectory, instantaneous
from .solver import SolverConfig, solve_homogeneous


def principal_fundamental(kernel, T, cfg=None, h=None):
    """Principal fundamental matrix on ``[-r, T]`` (one solve per column).

    The grid is the kernel's grid extended to ``T``; ``h`` is accepted only as
    a consistency check.
    """
    grid = kernel.grid.with_horizon(T)
    if h is not None and abs(h - grid.h) > 1e-12 * grid.h:
        raise GridError(f"requested h = {h} differs from the kernel step {grid.h}")
    n = kernel.n
    cfg = cfg or SolverConfig()
    X = np.zeros((grid.size, n, n))
    for j in range(n):
        x = solve_homogeneous(kernel, instantaneous(np.eye(n)[j], grid), T, cfg)
        X[:, :, j] = x.samples
    X[grid.N] = np.eye(n)
    return MatrixTrajectory(grid, X, np.zeros((n, n)))


def fundamental_derivative(kernel, X):
    """``X'`` by Riemann-Stieltjes quadrature of ``theta -> X(t + theta)``.

    Returns a MatrixTrajectory whose samples are right limits, ``left`` the
    left limits, and ``breakpoints`` flags nodes where the two differ.  The
    integrand jumps from ``O`` to ``I`` at ``theta = -t``; trapezoid panels use
    the one-sided value of ``X`` on their own side of that jump, so the
    density part is the same for both limits.
    """
    kernel.check_grid(X.grid)
    grid = X.grid
    N, M, h, n = grid.N, grid.M, grid.h, kernel.n
    if X.samples.shape[1:] != (n, n):
        raise GridError(f"X has blocks {X.samples.shape[1:]}, kernel dimension is {n}")
    XR = X.samples
    XL = XR.copy()
    XL[N] = 0.0
    # global index of t_i + theta_j is i + j for t_i = i h, i = 0..M
    i = np.arange(M + 1)
    right = np.zeros((M + 1, n, n))
    left = np.zeros((M + 1, n, n))
    for k, (_, J) in zip(kernel.jump_index, kernel.jumps):
        right += J @ XR[i + k]
        left += J @ XL[i + k]
    if kernel.density is not None:
        A = kernel.density
        dens = np.zeros((M + 1, n, n))
        for j in range(N):
            dens += A[j] @ XR[i + j] + A[j + 1] @ XL[i + j + 1]
        dens *= 0.5 * h
        right += dens
        left += dens
    # on [-r, 0) the fundamental matrix is constant (zero)
    R = np.zeros_like(XR)
    Lf = np.zeros_like(XR)
    R[N:] = right
    Lf[N:] = left
    Lf[N] = 0.0
    bp = np.zeros(grid.size, dtype=bool)
    bp[N:] = np.any(np.abs(R[N:] - Lf[N:]) > 0, axis=(1, 2))
    return MatrixTrajectory(grid, R, None, left=Lf, breakpoints=bp)


def expm_oracle(A, t=1.0):
    """``exp(t A)`` by scaling and squaring a truncated Taylor series.

    The scaled matrix has norm at most 1/2 and the series is summed until the
    terms stop contributing, which leaves an error near roundoff for moderate
    ``|t A|``.
    """
    B = t * np.asarray(A, dtype=float)
    if B.ndim == 0:
        B = B.reshape(1, 1)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise InputError(f"expm needs a square matrix, got shape {B.shape}")
    nrm = float(np.linalg.norm(B, 1))
    if not math.isfinite(nrm):
        raise OverflowError("matrix exponent is not finite")
    s = max(0, int(math.ceil(math.log2(nrm / 0.5)))) if nrm > 0.5 else 0
    B = B / 2.0 ** s
    n = B.shape[0]
    out = np.eye(n)
    term = np.eye(n)
    for k in range(1, 40):
        term = term @ B / k
        out = out + term
        if np.max(np.abs(term)) <= 1e-18 * np.max(np.abs(out)):
            break
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(s):
            out = out @ out
    if not np.all(np.isfinite(out)):
        raise OverflowError("matrix exponential overflowed")
    return out


def pure_delay_series(b, tau, t):
    """Solution of ``x'(t) = b x(t - tau)`` from the instantaneous unit history.

    ``sum_{k=0}^{floor(t / tau)} b^k (t - k tau)^k / k!``; accepts arrays.
    """
    if not tau > 0:
        raise InputError("tau must be positive")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise InputError("the series is defined for t >= 0")
    kmax = int(np.floor(np.max(t) / tau + 1e-12)) if t.size else 0
    out = np.zeros_like(t)
    for k in range(kmax + 1):
        s = np.clip(t - k * tau, 0.0, None)
        out = out + np.where(t >= k * tau - 1e-12 * tau,
                             b ** k * s ** k / math.factorial(k), 0.0)
    return out if out.ndim else float(out)


def pure_delay_series_derivative(b, tau, t):
    """Right derivative of :func:`pure_delay_series`."""
    t = np.asarray(t, dtype=float)
    kmax = int(np.floor(np.max(t) / tau + 1e-12)) if t.size else 0
    out = np.zeros_like(t)
    for k in range(1, kmax + 1):
        s = np.clip(t - k * tau, 0.0, None)
        out = out + np.where(t >= k * tau - 1e-12 * tau,
                             b ** k * s ** (k - 1) / math.factorial(k - 1), 0.0)
    return out if out.ndim else float(out)
