"""Volterra operator, convolutions and Riemann-Stieltjes convolutions on a grid.

Grid functions live on ``[0, T]`` with ``M + 1`` uniform nodes.  A function
with jumps at grid nodes may carry its left limits in ``GridFunction.left``;
every trapezoid panel then uses the right value at its left end and the left
value at its right end, which keeps second-order accuracy for piecewise
smooth data whose jumps sit on nodes.

All convolutions are direct sums (no FFT).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GridError, InputError
from .kernel import ReversedKernel

_REL = 1e-12


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples of a function on ``[0, T]`` with optional left limits."""

    values: np.ndarray
    h: float
    left: np.ndarray | None = field(default=None)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if self.left is not None:
            lf = np.asarray(self.left, dtype=float)
            if lf.shape != v.shape:
                raise GridError("left limits must have the same shape as the values")
            object.__setattr__(self, "left", lf)

    @property
    def left_values(self):
        return self.values if self.left is None else self.left

    @property
    def M(self):
        return len(self.values) - 1

    @property
    def T(self):
        return self.M * self.h

    def times(self):
        return np.arange(self.M + 1) * self.h

    def __len__(self):
        return len(self.values)


def as_grid_function(f, h=None):
    if isinstance(f, GridFunction):
        if h is not None and abs(f.h - h) > _REL * h:
            raise GridError(f"grid step mismatch: {f.h} vs {h}")
        return f
    if h is None:
        raise GridError("a grid step h is required for raw sample arrays")
    return GridFunction(np.asarray(f, dtype=float), h)


def _check_same(f, g):
    if len(f) != len(g) or abs(f.h - g.h) > _REL * f.h:
        raise GridError(
            f"grid mismatch: {len(f)} nodes / h={f.h} vs {len(g)} nodes / h={g.h}")


def _as3(a):
    """View samples as ``(K, p, q)`` blocks; returns the array and its kind."""
    if a.ndim == 1:
        return a[:, None, None], "scalar"
    if a.ndim == 2:
        return a[:, :, None], "vector"
    if a.ndim == 3:
        return a, "matrix"
    raise InputError(f"unsupported sample shape {a.shape}")


def _restore(out, kind_g, kind_f):
    if kind_g == "scalar" and kind_f == "scalar":
        return out[:, 0, 0]
    if kind_f == "vector":
        return out[:, :, 0]
    return out


def _blockconv(a, b, length):
    """``c[i] = sum_j a[i - j] @ b[j]`` (block Cauchy product), first ``length`` terms."""
    if a.shape[1] == a.shape[2] == 1 and b.shape[1] != 1:
        a = np.broadcast_to(a, (a.shape[0], b.shape[1], b.shape[1])) * np.eye(b.shape[1])
    p, q = a.shape[1], b.shape[2]
    out = np.zeros((length, p, q))
    for i in range(p):
        for k in range(q):
            for j in range(a.shape[2]):
                out[:, i, k] += np.convolve(a[:, i, j], b[:, j, k])[:length]
    return out


def volterra(f, h=None):
    """``(V f)(t) = int_0^t f(s) ds`` by cumulative trapezoid; ``(Vf)(0) = 0``."""
    f = as_grid_function(f, h)
    right, left = f.values, f.left_values
    out = np.zeros_like(right)
    out[1:] = np.cumsum(0.5 * f.h * (right[:-1] + left[1:]), axis=0)
    return GridFunction(out, f.h)


def convolve(g, f, h=None):
    """``(g * f)(t) = int_0^t g(t - u) f(u) du`` by the trapezoid rule.

    ``g`` is scalar- or matrix-valued, ``f`` scalar-, vector- or
    matrix-valued; both on the same grid.  Either may carry left limits.
    """
    g = as_grid_function(g, h)
    f = as_grid_function(f, g.h)
    _check_same(g, f)
    g3, kg = _as3(g.values)
    gl3, _ = _as3(g.left_values)
    f3, kf = _as3(f.values)
    fl3, _ = _as3(f.left_values)
    K = len(f)
    # panel [u_j, u_{j+1}]: g_L(t - u_j) f_R(u_j) + g_R(t - u_{j+1}) f_L(u_{j+1})
    gl_shift = gl3.copy()
    gl_shift[0] = 0.0
    fl_shift = fl3.copy()
    fl_shift[0] = 0.0
    out = 0.5 * g.h * (_blockconv(gl_shift, f3, K) + _blockconv(g3, fl_shift, K))
    return GridFunction(_restore(out, kg, kf), g.h)


def rs_convolve(alpha, f, T=None):
    """``(d alpha * f)(t) = int_0^t d alpha(u) f(t - u)`` for continuous ``f``."""
    if not isinstance(alpha, ReversedKernel):
        raise InputError("rs_convolve expects a ReversedKernel")
    f = as_grid_function(f, alpha.h)
    if f.left is not None and not np.array_equal(f.left, f.values):
        raise InputError("rs_convolve needs a continuous integrand")
    if T is not None and abs(T - f.T) > 1e-9 * max(1.0, T):
        raise GridError(f"integrand covers [0, {f.T}], requested T = {T}")
    f3, kf = _as3(f.values)
    if f3.shape[1] != alpha.n:
        raise GridError(f"integrand dimension {f3.shape[1]} != kernel dimension {alpha.n}")
    K = len(f)
    out = np.zeros((K, alpha.n, f3.shape[2]))
    # a mass at u_k > 0 makes the output jump by J_k f(0) at t = u_k
    jump = np.zeros_like(out)
    for k, (_, J) in zip(alpha.jump_index, alpha.jumps):
        if k < K:
            out[k:] += J @ f3[:K - k]
            if k > 0:
                jump[k] += J @ f3[0]
    if alpha.density is not None:
        A = alpha.density
        h = alpha.h
        out += h * _blockconv(A, f3, K)
        i = np.arange(K)
        m = np.minimum(i, alpha.N)
        # trapezoid end corrections at u = 0 and u = min(t, r)
        out -= 0.5 * h * (A[0] @ f3)
        out -= 0.5 * h * (A[m] @ f3[i - m])
    left = None
    if np.any(jump):
        left = _restore(out - jump, kf, kf)
    return GridFunction(_restore(out, kf, kf), alpha.h, left)


@dataclass
class IdentityReport:
    """Sup-norm residuals of the identity battery.

    ``pointwise`` maps each identity defined node by node to its absolute
    residual on ``[0, T]``.
    """

    residuals: dict
    tolerances: dict
    pointwise: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(self.residuals[k] <= self.tolerances[k] for k in self.residuals)

    def failures(self):
        return [k for k in self.residuals if self.residuals[k] > self.tolerances[k]]


def _sup(a):
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def check_convolution_identities(alpha, f, g, T=None, g_prime=None, tol=1e-6):
    """Evaluate the identity battery on scalar grid functions.

    Parameters
    ----------
    alpha : ReversedKernel
        Scalar measure for the Riemann-Stieltjes convolution identities.
    f, g : array or GridFunction
        Smooth scalar samples on ``[0, T]`` with the kernel's step.
    g_prime : array, optional
        Samples of ``g'``; estimated by second-order differences if omitted.
    tol : float
        Tolerance for every identity except the Young-type bound.
    """
    h = alpha.h
    f = as_grid_function(f, h)
    g = as_grid_function(g, h)
    _check_same(f, g)
    if T is not None and abs(T - f.T) > 1e-9 * max(1.0, T):
        raise GridError(f"fixtures cover [0, {f.T}], requested T = {T}")
    gp = (np.gradient(g.values, h, edge_order=2) if g_prime is None
          else np.asarray(g_prime, dtype=float))
    dg = ReversedKernel(f.T, h, (), gp[:, None, None], 1) if f.M > 0 else None

    Vf = volterra(f)
    Vg = volterra(g)
    gf = convolve(g, f)
    pw = {}
    pw["V(da*f) = da*(Vf)"] = volterra(rs_convolve(alpha, f)).values - rs_convolve(alpha, Vf).values
    if dg is not None:
        rhs = g.values[0] * Vf.values + rs_convolve(dg, Vf).values
        pw["g*f = g(0)Vf + dg*(Vf)"] = gf.values - rhs
    else:
        pw["g*f = g(0)Vf + dg*(Vf)"] = np.zeros_like(f.values)
    Vgf = volterra(gf).values
    pw["V(g*f) = g*(Vf)"] = Vgf - convolve(g, Vf).values
    pw["V(g*f) = (Vg)*f"] = Vgf - convolve(Vg, f).values
    pw["da*(g*f) = (da*g)*f"] = (rs_convolve(alpha, gf).values
                                 - convolve(rs_convolve(alpha, g), f).values)
    # derivative identity in integrated form: a grid function has no exact
    # derivative, and a difference quotient would add its own O(h^2) error
    gpf = convolve(GridFunction(gp, h), f)
    pw["(g*f)' = g(0)f + g'*f"] = gf.values - (g.values[0] * Vf.values + volterra(gpf).values)
    pw = {k: np.abs(v) for k, v in pw.items()}
    res = {k: _sup(v) for k, v in pw.items()}
    l1 = lambda a: float(np.trapezoid(np.abs(a.values), dx=h))  # noqa: E731
    res["|g*f|_1 <= |g|_1 |f|_1"] = max(0.0, l1(gf) - l1(g) * l1(f))
    tols = {k: tol for k in res}
    # Young-type bound holds up to the trapezoid error, O(h)
    tols["|g*f|_1 <= |g|_1 |f|_1"] = max(tol, h)
    return IdentityReport(res, tols, pw)
