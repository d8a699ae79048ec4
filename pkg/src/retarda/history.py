"""Uniform grids, initial histories in the memory space and solution trajectories.

Every object here lives on one uniform grid of step ``h``.  The delay
interval ``[-r, 0]`` carries ``N + 1`` nodes and the horizon ``[0, T]``
carries ``M + 1`` nodes, so a trajectory holds ``N + M + 1`` samples and
the node with global index ``N`` is ``t = 0``.

A history stores its L1 representative on the ``theta`` nodes plus a
separately stored value at ``theta = 0``.  The two values at ``theta = 0``
may differ, which is how a discontinuity at zero (an instantaneous input)
is represented.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, GridError, InputError

_REL_TOL = 1e-12


def _integral_ratio(a, b, what):
    q = a / b
    k = round(q)
    if abs(q - k) > _REL_TOL * max(1.0, abs(q)):
        raise GridError(f"{what} is not an integer multiple of h (ratio {q!r})")
    return int(k)


@dataclass(frozen=True)
class GridSpec:
    """Uniform time discretization shared by kernels, histories and solutions.

    Parameters
    ----------
    r : float
        Delay horizon; the history lives on ``[-r, 0]``.
    h : float
        Step size; ``r / h`` and ``T / h`` must be integers.
    T : float
        Solution horizon (may be 0).
    """

    r: float
    h: float
    T: float = 0.0
    N: int = field(init=False)
    M: int = field(init=False)

    def __post_init__(self):
        if not (self.r > 0 and math.isfinite(self.r)):
            raise GridError(f"r must be positive and finite, got {self.r!r}")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise GridError(f"h must be positive and finite, got {self.h!r}")
        if not (self.T >= 0 and math.isfinite(self.T)):
            raise GridError(f"T must be nonnegative and finite, got {self.T!r}")
        object.__setattr__(self, "N", _integral_ratio(self.r, self.h, "r"))
        object.__setattr__(self, "M", _integral_ratio(self.T, self.h, "T"))
        if self.N < 1:
            raise GridError("r / h must be at least 1")

    @classmethod
    def from_steps(cls, r, N, T=0.0):
        """Grid with ``N`` steps on ``[-r, 0]``; ``T`` is snapped to a node."""
        h = r / N
        return cls(r, h, round(T / h) * h)

    def with_horizon(self, T):
        return GridSpec(self.r, self.h, T)

    @property
    def size(self):
        return self.N + self.M + 1

    def times(self):
        """All nodes ``-r, ..., T`` (computed as integer multiples of ``h``)."""
        return (np.arange(self.size) - self.N) * self.h

    def future_times(self):
        return np.arange(self.M + 1) * self.h

    def thetas(self):
        return (np.arange(self.N + 1) - self.N) * self.h

    def index(self, t):
        """Global node index of time ``t``; raises GridError when off-grid."""
        k = t / self.h
        i = round(k)
        if abs(k - i) > 1e-9:
            raise GridError(f"time {t!r} is not a grid node")
        if i < -self.N or i > self.M:
            raise DomainError(f"time {t!r} outside [-r, T] = [{-self.r}, {self.T}]")
        return int(i) + self.N

    def same_mesh(self, other):
        return (self.N == other.N
                and abs(self.h - other.h) <= _REL_TOL * self.h)

    def check_mesh(self, other):
        if not self.same_mesh(other):
            raise GridError(
                f"grid mismatch: (r={self.r}, h={self.h}) vs (r={other.r}, h={other.h})")


def pointwise_norm(values):
    """Euclidean norm of vectors or spectral norm of matrices, node by node."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        return np.abs(values)
    if values.ndim == 2:
        return np.linalg.norm(values, axis=1)
    if values.ndim == 3:
        if values.shape[1] == 1 or values.shape[2] == 1:
            return np.linalg.norm(values.reshape(len(values), -1), axis=1)
        return np.linalg.norm(values, ord=2, axis=(1, 2))
    raise ValueError(f"cannot take norms of an array of shape {values.shape}")


def norm(value):
    value = np.asarray(value, dtype=float)
    if value.ndim <= 1:
        return float(np.linalg.norm(value))
    return float(np.linalg.norm(value, ord=2))


@dataclass(frozen=True, eq=False)
class History:
    """Element of the memory space M1([-r, 0], R^n) sampled on the grid.

    ``samples[N]`` is the L1 representative at ``theta = 0`` and is allowed to
    differ from ``value_at_zero``.
    """

    samples: np.ndarray
    value_at_zero: np.ndarray
    h: float

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        v = np.array(self.value_at_zero, dtype=float).reshape(s.shape[1:])
        s.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "value_at_zero", v)
        if len(s) < 2:
            raise InputError("a history needs at least two samples")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(v))):
            raise InputError("history samples must be finite")

    @property
    def N(self):
        return len(self.samples) - 1

    @property
    def n(self):
        return self.samples.shape[1]

    @property
    def r(self):
        return self.N * self.h

    @property
    def grid(self):
        return GridSpec(self.r, self.h, 0.0)

    @property
    def is_continuous(self):
        return bool(np.array_equal(self.samples[-1], self.value_at_zero))

    def check_grid(self, grid):
        grid.check_mesh(self.grid)

    def sup_norm(self):
        """Sup norm over the nodes, including the value at zero."""
        return max(float(pointwise_norm(self.samples).max()), norm(self.value_at_zero))

    def __add__(self, other):
        self.grid.check_mesh(other.grid)
        return History(self.samples + other.samples,
                       self.value_at_zero + other.value_at_zero, self.h)

    def __mul__(self, c):
        return History(c * self.samples, c * self.value_at_zero, self.h)

    __rmul__ = __mul__

    # generators -----------------------------------------------------------

    @classmethod
    def from_function(cls, f, grid, value_at_zero=None):
        """Sample ``f(theta)`` on the theta nodes; continuous unless overridden."""
        thetas = grid.thetas()
        s = np.array([np.atleast_1d(f(th)) for th in thetas], dtype=float)
        v = s[-1] if value_at_zero is None else value_at_zero
        return cls(s, v, grid.h)

    @classmethod
    def constant(cls, c, grid):
        c = np.atleast_1d(np.asarray(c, dtype=float))
        return cls(np.tile(c, (grid.N + 1, 1)), c, grid.h)

    @classmethod
    def zero(cls, n, grid):
        return cls.constant(np.zeros(n), grid)

    @classmethod
    def sinusoid(cls, amplitude, frequency, phase, grid):
        """``amplitude * sin(frequency * theta + phase)`` componentwise."""
        a = np.atleast_1d(np.asarray(amplitude, dtype=float))
        p = np.broadcast_to(np.asarray(phase, dtype=float), a.shape)
        th = grid.thetas()[:, None]
        return cls(a * np.sin(frequency * th + p), a * np.sin(p), grid.h)

    @classmethod
    def ramp(cls, slope, grid, offset=None):
        """``offset + slope * theta`` componentwise."""
        s = np.atleast_1d(np.asarray(slope, dtype=float))
        c = np.zeros_like(s) if offset is None else np.broadcast_to(offset, s.shape)
        th = grid.thetas()[:, None]
        return cls(c + s * th, c, grid.h)


def seminorm_m1(phi):
    """M1 norm: trapezoid of ``|phi|`` over ``[-r, 0]`` plus ``|phi(0)|``."""
    return float(np.trapezoid(pointwise_norm(phi.samples), dx=phi.h)) + norm(phi.value_at_zero)


def instantaneous(xi, grid):
    """The history that vanishes on ``[-r, 0)`` and equals ``xi`` at zero."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    return History(np.zeros((grid.N + 1,) + xi.shape), xi, grid.h)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Grid function on ``[-r, T]`` produced by a solver.

    ``samples[N]`` is the solution value ``x(0)``; when the originating history
    jumps at zero its history-side value is kept in ``value_at_zero_minus``.
    ``t_offset`` shifts the time axis for non-autonomous runs started at
    ``t0 != 0``.
    """

    grid: GridSpec
    samples: np.ndarray
    value_at_zero_minus: np.ndarray | None = None
    t_offset: float = 0.0

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if len(s) != self.grid.size:
            raise GridError(
                f"trajectory has {len(s)} samples, grid needs {self.grid.size}")
        object.__setattr__(self, "samples", s)

    @property
    def n(self):
        return self.samples.shape[1]

    def times(self):
        return self.grid.times() + self.t_offset

    def future(self):
        """Samples on ``[0, T]``."""
        return self.samples[self.grid.N:]

    def at(self, t):
        return self.samples[self.grid.index(t)]

    def left_limits(self):
        """Samples with the history-side value substituted at ``t = 0``."""
        if self.value_at_zero_minus is None:
            return self.samples
        s = self.samples.copy()
        s[self.grid.N] = self.value_at_zero_minus
        return s

    def history(self):
        """The initial history ``x_0`` as a History."""
        N = self.grid.N
        return History(self.left_limits()[:N + 1], self.samples[N], self.grid.h)

    def segment_norms(self):
        """``t -> sup_theta |x(t + theta)|`` for every node ``t`` of ``[0, T]``."""
        pw = pointwise_norm(self.samples)
        win = np.lib.stride_tricks.sliding_window_view(pw, self.grid.N + 1)
        return win.max(axis=1)


@dataclass(frozen=True, eq=False)
class MatrixTrajectory(Trajectory):
    """Matrix-valued trajectory (fundamental matrix and its derivative).

    ``left`` optionally holds left limits for a function with jumps on grid
    nodes; ``breakpoints`` flags the nodes where left and right values differ.
    """

    left: np.ndarray | None = None
    breakpoints: np.ndarray | None = None

    def left_limits(self):
        if self.left is not None:
            return self.left
        return super().left_limits()


def constant_prolongation(phi, T):
    """Extend ``phi`` by its value at zero on ``[0, T]``."""
    grid = phi.grid.with_horizon(T)
    N = grid.N
    s = np.empty((grid.size,) + phi.value_at_zero.shape)
    s[:N] = phi.samples[:N]
    s[N:] = phi.value_at_zero
    minus = None if phi.is_continuous else phi.samples[N].copy()
    return Trajectory(grid, s, minus)


def segment(x, t):
    """History segment ``theta -> x(t + theta)`` as an ``(N + 1, ...)`` array."""
    i = x.grid.index(t)
    N = x.grid.N
    if i < N:
        raise DomainError(f"segment time {t!r} is negative")
    return x.samples[i - N:i + 1].copy()


def cumulative(x):
    """Signed running integral ``C(t) = int_0^t x`` on all of ``[-r, T]``.

    Panels left of zero use the history-side value at zero, panels right of
    zero use ``x(0)``.
    """
    N, h = x.grid.N, x.grid.h
    right = x.samples
    left = x.left_limits()
    panels = 0.5 * h * (right[:-1] + left[1:])
    C = np.zeros_like(right)
    C[N + 1:] = np.cumsum(panels[N:], axis=0)
    if N:
        C[:N] = -np.cumsum(panels[:N][::-1], axis=0)[::-1]
    return C


def integrate_segments(x, t):
    """``theta -> int_theta^{t + theta} x(s) ds``, i.e. the integral of segments."""
    i = x.grid.index(t) - x.grid.N
    if i < 0:
        raise DomainError(f"integration time {t!r} is negative")
    C = cumulative(x)
    N = x.grid.N
    return C[i:i + N + 1] - C[:N + 1]
