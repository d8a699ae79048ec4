"""Bounded-variation kernels and Riemann-Stieltjes quadrature.

A kernel ``eta`` on ``[-r, 0]`` is stored as point masses ``J_k`` at grid
nodes ``theta_k`` plus a density ``A(theta)`` sampled on the theta nodes, so
that ``d eta = sum_k J_k delta_{theta_k} + A(theta) d theta``.  The
functional it represents is ``L psi = int_{-r}^0 d eta(theta) psi(theta)``.

Point masses are evaluated exactly at their node; the density part is
integrated with the composite trapezoid rule on the same grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError, GridError, InputError
from .history import GridSpec, norm, pointwise_norm

_SNAP = 1e-12


def _matvec(A, f):
    """Apply matrices ``A[..., a, b]`` to vectors or matrices ``f``."""
    if f.ndim == A.ndim - 1:
        return np.einsum("...ab,...b->...a", A, f)
    return A @ f


def _trap_weights(count, h):
    w = np.full(count, h)
    if count:
        w[0] = w[-1] = 0.5 * h
    if count == 1:
        w[0] = 0.0
    return w


def _as_matrix(J, n=None):
    J = np.array(J, dtype=float)
    if J.ndim == 0:
        J = J.reshape(1, 1)
    if J.ndim != 2 or J.shape[0] != J.shape[1]:
        raise InputError(f"kernel matrices must be square, got shape {J.shape}")
    if n is not None and J.shape[0] != n:
        raise InputError(f"kernel matrix has size {J.shape[0]}, expected {n}")
    return J


def _snap(value, h, lo, hi, what):
    """Grid index of ``value``; rejects values off the grid or out of range."""
    r = (hi - lo)
    if value < lo - _SNAP * r or value > hi + _SNAP * r:
        raise DomainError(f"{what} = {value!r} lies outside [{lo}, {hi}]")
    k = round((value - lo) / h)
    if abs(lo + k * h - value) > _SNAP * r:
        raise GridError(f"{what} = {value!r} is not a grid node (h = {h!r})")
    return int(k)


def _density_samples(density, grid_nodes, n):
    if density is None:
        return None
    if callable(density):
        d = np.array([_as_matrix(density(th), n) for th in grid_nodes])
    else:
        d = np.array(density, dtype=float)
        if d.ndim <= 2:
            d = np.broadcast_to(_as_matrix(d, n), (len(grid_nodes), n, n)).copy()
    if d.shape != (len(grid_nodes), n, n):
        raise GridError(
            f"density needs {len(grid_nodes)} samples of shape ({n}, {n}), got {d.shape}")
    d.setflags(write=False)
    return d


@dataclass(frozen=True, eq=False)
class StieltjesKernel:
    """Kernel ``eta`` of bounded variation on ``[-r, 0]`` representing ``L``.

    Parameters
    ----------
    r, h : float
        Delay horizon and grid step (``r / h`` integral).
    jumps : sequence of (theta, matrix)
        Point masses; ``theta`` strictly increasing grid nodes in ``[-r, 0]``.
    density : array (N + 1, n, n), matrix, callable or None
        Absolutely continuous part sampled on the theta nodes.  A single
        matrix means a constant density; a callable is evaluated on the nodes.
    n : int, optional
        State dimension, inferred from the data when omitted.
    """

    r: float
    h: float
    jumps: tuple = ()
    density: np.ndarray | None = None
    n: int | None = None

    def __post_init__(self):
        grid = GridSpec(self.r, self.h)
        n = self.n
        jumps = []
        for theta, J in self.jumps:
            J = _as_matrix(J, n)
            n = J.shape[0]
            J.setflags(write=False)
            jumps.append((float(theta), J))
        if n is None:
            if self.density is None or callable(self.density):
                raise InputError("cannot infer the state dimension; pass n")
            n = _as_matrix(np.asarray(self.density)[0]
                           if np.ndim(self.density) == 3 else self.density).shape[0]
        thetas = [th for th, _ in jumps]
        if any(b <= a for a, b in zip(thetas, thetas[1:])):
            raise InputError("jump locations must be strictly increasing")
        idx = tuple(_snap(th, grid.h, -self.r, 0.0, "jump theta") for th in thetas)
        object.__setattr__(self, "jumps", tuple(jumps))
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "jump_index", idx)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "density",
                           _density_samples(self.density, grid.thetas(), int(n)))

    # constructors ---------------------------------------------------------

    @classmethod
    def zero(cls, n, grid):
        return cls(grid.r, grid.h, (), None, n)

    @classmethod
    def differential_difference(cls, grid, A=None, delays=(), n=None):
        """Kernel of ``x'(t) = A x(t) + sum_k B_k x(t - tau_k)``."""
        jumps = [(-tau, B) for tau, B in delays]
        if A is not None:
            jumps.append((0.0, A))
        jumps.sort(key=lambda p: p[0])
        return cls(grid.r, grid.h, tuple(jumps), None, n)

    # derived data ---------------------------------------------------------

    @property
    def N(self):
        return self.grid.N

    @property
    def has_density(self):
        return self.density is not None and bool(np.any(self.density))

    @property
    def delays(self):
        """``(tau_k, B_k)`` for the point masses strictly left of zero."""
        return tuple((-th, J) for th, J in self.jumps if th < 0)

    def jump_at_index(self, j):
        """Total point mass sitting on theta node ``j`` (zero matrix if none)."""
        out = np.zeros((self.n, self.n))
        for k, (_, J) in zip(self.jump_index, self.jumps):
            if k == j:
                out += J
        return out

    @cached_property
    def node_weights(self):
        """Quadrature weights ``K_j`` with ``L psi ~ sum_j K_j psi(theta_j)``."""
        K = np.zeros((self.N + 1, self.n, self.n))
        for k, (_, J) in zip(self.jump_index, self.jumps):
            K[k] += J
        if self.density is not None:
            K += _trap_weights(self.N + 1, self.h)[:, None, None] * self.density
        K.setflags(write=False)
        return K

    def check_grid(self, grid):
        self.grid.check_mesh(grid)


def _node(kernel, value, what):
    return _snap(value, kernel.h, -kernel.r, 0.0, what)


def rs_integrate(kernel, f, a=None, b=None, include_a=True, include_b=True):
    """Riemann-Stieltjes integral ``int_a^b d eta(theta) f(theta)``.

    ``f`` is sampled on the theta nodes of ``[-r, 0]`` (shape ``(N + 1, n)`` or
    ``(N + 1, n, m)``).  Point masses on an endpoint count fully unless the
    corresponding ``include_*`` flag is False.
    """
    f = np.asarray(f, dtype=float)
    if len(f) != kernel.N + 1:
        raise GridError(f"integrand has {len(f)} samples, kernel grid has {kernel.N + 1}")
    squeeze = False
    if f.ndim == 1:
        if kernel.n != 1:
            raise GridError("scalar integrand needs a scalar kernel")
        f = f[:, None]
        squeeze = True
    ia = 0 if a is None else _node(kernel, a, "a")
    ib = kernel.N if b is None else _node(kernel, b, "b")
    if ia > ib:
        raise DomainError(f"lower bound {a!r} exceeds upper bound {b!r}")
    out = np.zeros(f.shape[1:])
    for k, (_, J) in zip(kernel.jump_index, kernel.jumps):
        if ia == ib:
            inside = k == ia and include_a and include_b
        else:
            inside = ia < k < ib or (k == ia and include_a) or (k == ib and include_b)
        if inside:
            out = out + J @ f[k]
    if kernel.density is not None and ib > ia:
        prod = _matvec(kernel.density[ia:ib + 1], f[ia:ib + 1])
        out = out + np.trapezoid(prod, dx=kernel.h, axis=0)
    return out[0] if squeeze else out


def apply_functional(kernel, psi):
    """``L psi`` for a grid function ``psi`` on all of ``[-r, 0]``."""
    return rs_integrate(kernel, psi)


def total_variation(kernel):
    """``sum_k |J_k| + int |A(theta)| d theta`` with spectral matrix norms."""
    tv = sum(norm(J) for _, J in kernel.jumps)
    if kernel.density is not None:
        tv += float(np.trapezoid(pointwise_norm(kernel.density), dx=kernel.h))
    return float(tv)


@dataclass(frozen=True, eq=False)
class ReversedKernel:
    """Measure ``d alpha`` on ``[0, infinity)``, constant beyond ``r``.

    Obtained from a kernel by ``alpha(u) = -eta(-u)``: a mass ``J`` at
    ``theta`` becomes the same mass at ``u = -theta`` and the density is
    mirrored.  Also used directly for generic locally BV functions on
    ``[0, T]`` (take ``r = T``).
    """

    r: float
    h: float
    jumps: tuple = ()
    density: np.ndarray | None = None
    n: int | None = None

    def __post_init__(self):
        grid = GridSpec(self.r, self.h)
        n = self.n
        jumps = []
        for u, J in self.jumps:
            J = _as_matrix(J, n)
            n = J.shape[0]
            J.setflags(write=False)
            jumps.append((float(u), J))
        if n is None:
            if self.density is None or callable(self.density):
                raise InputError("cannot infer the state dimension; pass n")
            n = _as_matrix(np.asarray(self.density)[0]
                           if np.ndim(self.density) == 3 else self.density).shape[0]
        us = [u for u, _ in jumps]
        if any(b <= a for a, b in zip(us, us[1:])):
            raise InputError("jump locations must be strictly increasing")
        idx = tuple(_snap(u, grid.h, 0.0, self.r, "jump u") for u in us)
        object.__setattr__(self, "jumps", tuple(jumps))
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "jump_index", idx)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "density",
                           _density_samples(self.density, grid.thetas() + self.r, int(n)))

    @property
    def N(self):
        return self.grid.N

    def increments(self, count):
        """``alpha(t_i) - alpha(0)`` for ``t_i = i h``, ``i < count``.

        Counts every mass in ``[0, t_i]``; the density integral is clipped at
        ``r``.
        """
        out = np.zeros((count, self.n, self.n))
        for k, (_, J) in zip(self.jump_index, self.jumps):
            if k < count:
                out[k:] += J
        if self.density is not None:
            d = self.density
            cum = np.zeros_like(d)
            cum[1:] = np.cumsum(0.5 * self.h * (d[1:] + d[:-1]), axis=0)
            m = min(count, self.N + 1)
            out[:m] += cum[:m]
            out[m:] += cum[-1]
        return out


def total_variation_reversed(alpha):
    tv = sum(norm(J) for _, J in alpha.jumps)
    if alpha.density is not None:
        tv += float(np.trapezoid(pointwise_norm(alpha.density), dx=alpha.h))
    return float(tv)


def reverse(kernel):
    """Reversal ``eta -> alpha(u) = -eta(-u)`` and its inverse."""
    density = None if kernel.density is None else kernel.density[::-1].copy()
    jumps = tuple((-p, J) for p, J in reversed(kernel.jumps))
    if isinstance(kernel, StieltjesKernel):
        return ReversedKernel(kernel.r, kernel.h, jumps, density, kernel.n)
    return StieltjesKernel(kernel.r, kernel.h, jumps, density, kernel.n)
