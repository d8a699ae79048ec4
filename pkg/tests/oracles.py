"""Reference solutions computed independently of the package internals."""

import cmath

import numpy as np
from numpy.polynomial import Polynomial


def method_of_steps(b, tau, n_intervals):
    """Polynomials ``p_k`` with ``x = p_k`` on ``[k tau, (k+1) tau]``.

    Solves ``x'(t) = b x(t - tau)`` with ``x = 0`` on ``[-tau, 0)`` and
    ``x(0) = 1`` by integrating the previous piece symbolically.
    """
    pieces = [Polynomial([1.0])]
    shift = Polynomial([-tau, 1.0])  # s -> s - tau
    for k in range(1, n_intervals):
        delayed = pieces[-1](shift)
        prim = (b * delayed).integ()
        start = k * tau
        pieces.append(prim - prim(start) + pieces[-1](start))
    return pieces


def eval_steps(pieces, tau, t):
    t = np.asarray(t, dtype=float)
    k = np.minimum((t / tau + 1e-12).astype(int), len(pieces) - 1)
    out = np.empty_like(t)
    for j, p in enumerate(pieces):
        m = k == j
        out[m] = p(t[m])
    return out


def eval_steps_derivative(pieces, tau, t):
    return eval_steps([p.deriv() for p in pieces], tau, t)


def expm_eig(A, t):
    """``e^{tA}`` by eigendecomposition (diagonalizable ``A``)."""
    w, V = np.linalg.eig(np.asarray(A, dtype=float))
    return (V @ np.diag(np.exp(w * t)) @ np.linalg.inv(V)).real


def dominant_root(tau=0.5, b=-1.0, z0=complex(-1.5, 1.5)):
    """Root of ``lambda = b e^{-tau lambda}`` by Newton iteration."""
    z = z0
    for _ in range(200):
        f = z - b * cmath.exp(-tau * z)
        df = 1 + b * tau * cmath.exp(-tau * z)
        step = f / df
        z -= step
        if abs(step) < 1e-15:
            break
    return z


def cubic_decay(x0, t, c=1.0):
    """Solution of ``x' = -c x^3``: ``x = x0 / sqrt(1 + 2 c x0^2 t)``."""
    return x0 / np.sqrt(1.0 + 2.0 * c * x0 * x0 * np.asarray(t, dtype=float))


def rs_sum(eta, f, a, b, m):
    """Tagged-partition Riemann-Stieltjes sum with midpoint tags on ``m`` cells."""
    x = np.linspace(a, b, m + 1)
    mid = 0.5 * (x[:-1] + x[1:])
    return float(np.sum(f(mid) * (eta(x[1:]) - eta(x[:-1]))))


def random_stable(rng, n=2, margin=0.2):
    while True:
        A = rng.normal(size=(n, n))
        A -= (max(np.linalg.eigvals(A).real) + margin + rng.uniform(0, 0.8)) * np.eye(n)
        if max(np.linalg.eigvals(A).real) < 0:
            return A


__all__ = ["method_of_steps", "eval_steps", "eval_steps_derivative", "expm_eig",
           "dominant_root", "cubic_decay", "rs_sum", "random_stable"]
