"""JSON scenario parsing and validation.

Every validation failure raises :class:`ConfigError` carrying the dotted key
of the offending entry (``kernel.jumps[0].theta`` and so on), so the command
line can report exactly what to fix.
"""

from __future__ import annotations

import csv
import json
import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, RetardaError
from .history import GridSpec, History, instantaneous
from .kernel import ReversedKernel, StieltjesKernel
from .solver import SolverConfig

TASKS = ("solve", "fundamental", "voc-check", "stability", "simulate", "convolve-check")


def _get(d, key, path, kind=None, default=...):
    if not isinstance(d, dict):
        raise ConfigError("must be an object", path)
    if key not in d:
        if default is ...:
            raise ConfigError("is required", f"{path}.{key}" if path else key)
        return default
    v = d[key]
    full = f"{path}.{key}" if path else key
    if kind == "number":
        return _number(v, full)
    if kind == "positive":
        x = _number(v, full)
        if not x > 0:
            raise ConfigError(f"must be positive, got {x!r}", full)
        return x
    if kind == "str" and not isinstance(v, str):
        raise ConfigError("must be a string", full)
    if kind == "list" and not isinstance(v, list):
        raise ConfigError("must be a list", full)
    if kind == "dict" and not isinstance(v, dict):
        raise ConfigError("must be an object", full)
    return v


def _number(v, path):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"must be a number, got {v!r}", path)
    if not math.isfinite(v):
        raise ConfigError("must be finite", path)
    return float(v)


def _matrix(v, path, n=None):
    try:
        a = np.array(v, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError("must be a number or a square matrix (list of rows)", path) from None
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ConfigError(f"must be a square matrix, got shape {a.shape}", path)
    if not np.all(np.isfinite(a)):
        raise ConfigError("entries must be finite", path)
    if n is not None and a.shape[0] != n:
        raise ConfigError(f"must be {n}x{n}, got {a.shape[0]}x{a.shape[0]}", path)
    return a


def _vector(v, path, n=None):
    try:
        a = np.atleast_1d(np.array(v, dtype=float))
    except (TypeError, ValueError):
        raise ConfigError("must be a number or a list of numbers", path) from None
    if a.ndim != 1 or not np.all(np.isfinite(a)):
        raise ConfigError("must be a finite vector", path)
    if n is not None:
        if a.size == 1 and n > 1:
            a = np.full(n, a[0])
        if a.size != n:
            raise ConfigError(f"must have {n} entries, got {a.size}", path)
    return a


def _on_grid(value, h, lo, hi, path):
    k = round((value - lo) / h)
    span = hi - lo
    if value < lo - 1e-12 * span or value > hi + 1e-12 * span:
        raise ConfigError(f"{value!r} lies outside [{lo}, {hi}]", path)
    if abs(lo + k * h - value) > 1e-12 * max(span, h):
        raise ConfigError(f"{value!r} is not a grid node (h = {h!r})", path)
    return int(k)


# scalar generators --------------------------------------------------------


def generator(spec, path):
    """Named scalar function of time: sin, cos, exp, poly or a sum of those."""
    kind = _get(spec, "kind", path, "str")
    if kind == "sum":
        terms = [generator(t, f"{path}.terms[{i}]")
                 for i, t in enumerate(_get(spec, "terms", path, "list"))]
        return lambda t: sum(f(t) for f in terms)
    a = _get(spec, "amplitude", path, "number", 1.0)
    if kind in ("sin", "cos"):
        w = _get(spec, "frequency", path, "number", 1.0)
        p = _get(spec, "phase", path, "number", 0.0)
        fn = np.sin if kind == "sin" else np.cos
        return lambda t: a * fn(w * np.asarray(t, dtype=float) + p)
    if kind == "exp":
        rate = _get(spec, "rate", path, "number", 1.0)
        return lambda t: a * np.exp(rate * np.asarray(t, dtype=float))
    if kind == "poly":
        c = [_number(x, f"{path}.coefficients[{i}]")
             for i, x in enumerate(_get(spec, "coefficients", path, "list"))]
        return lambda t: a * np.polynomial.polynomial.polyval(np.asarray(t, dtype=float), c)
    raise ConfigError(f"unknown generator {kind!r} (sin, cos, exp, poly, sum)", f"{path}.kind")


def generator_derivative(spec, path):
    """Exact derivative of a generator, used for the derivative identity."""
    kind = _get(spec, "kind", path, "str")
    if kind == "sum":
        terms = [generator_derivative(t, f"{path}.terms[{i}]")
                 for i, t in enumerate(_get(spec, "terms", path, "list"))]
        return lambda t: sum(f(t) for f in terms)
    a = _get(spec, "amplitude", path, "number", 1.0)
    if kind in ("sin", "cos"):
        w = _get(spec, "frequency", path, "number", 1.0)
        p = _get(spec, "phase", path, "number", 0.0)
        if kind == "sin":
            return lambda t: a * w * np.cos(w * np.asarray(t, dtype=float) + p)
        return lambda t: -a * w * np.sin(w * np.asarray(t, dtype=float) + p)
    if kind == "exp":
        rate = _get(spec, "rate", path, "number", 1.0)
        return lambda t: a * rate * np.exp(rate * np.asarray(t, dtype=float))
    if kind == "poly":
        c = np.polynomial.polynomial.polyder(
            [_number(x, f"{path}.coefficients[{i}]")
             for i, x in enumerate(_get(spec, "coefficients", path, "list"))])
        return lambda t: a * np.polynomial.polynomial.polyval(np.asarray(t, dtype=float), c)
    raise ConfigError(f"unknown generator {kind!r}", f"{path}.kind")


# CSV ------------------------------------------------------------------------


def fmt(x):
    return "%.17g" % x


def write_csv(path, header, columns):
    """Write columns with 17 significant digits and ``\\n`` line endings."""
    cols = [np.asarray(c, dtype=float).ravel() for c in columns]
    lines = [",".join(header)]
    for row in zip(*cols):
        lines.append(",".join(fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_csv(path, key):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}", key) from None
    if len(rows) < 2:
        raise ConfigError(f"{path} has no data rows", key)
    header = rows[0]
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError:
        raise ConfigError(f"{path} contains non-numeric values", key) from None
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ConfigError(f"{path} has ragged rows", key)
    return header, data


# scenario -------------------------------------------------------------------


@dataclass
class Scenario:
    task: str
    grid: GridSpec
    kernel: StieltjesKernel
    history: History | None
    g: np.ndarray | None
    G: np.ndarray | None
    solver: SolverConfig
    raw: dict
    base_dir: Path
    extras: dict = field(default_factory=dict)


def parse_grid(spec):
    r = _get(spec, "r", "grid", "positive")
    h = _get(spec, "h", "grid", "positive")
    T = _get(spec, "T", "grid", "number", 0.0)
    if T < 0:
        raise ConfigError("must be nonnegative", "grid.T")
    if abs(r / h - round(r / h)) > 1e-9 * max(1.0, r / h):
        raise ConfigError(f"r / h = {r / h!r} is not an integer", "grid.h")
    if abs(T / h - round(T / h)) > 1e-9 * max(1.0, T / h):
        raise ConfigError(f"T / h = {T / h!r} is not an integer", "grid.T")
    try:
        return GridSpec(r, h, round(T / h) * h)
    except RetardaError as exc:
        raise ConfigError(str(exc), "grid") from None


def parse_kernel(spec, grid):
    path = "kernel"
    n = _get(spec, "n", path, default=None)
    if n is not None and (isinstance(n, bool) or not isinstance(n, int) or n < 1):
        raise ConfigError("must be a positive integer", "kernel.n")
    jumps = []
    seen = {}
    for i, item in enumerate(_get(spec, "jumps", path, "list", [])):
        p = f"kernel.jumps[{i}]"
        theta = _get(item, "theta", p, "number")
        k = _on_grid(theta, grid.h, -grid.r, 0.0, f"{p}.theta")
        if k in seen:
            raise ConfigError(f"duplicates the location of jumps[{seen[k]}]", f"{p}.theta")
        seen[k] = i
        J = _matrix(_get(item, "matrix", p), f"{p}.matrix", n)
        n = J.shape[0]
        jumps.append(((k - grid.N) * grid.h, J))
    jumps.sort(key=lambda q: q[0])
    density = None
    dspec = _get(spec, "density", path, default=None)
    if dspec is not None:
        dp = "kernel.density"
        if "constant" in dspec:
            density = _matrix(dspec["constant"], f"{dp}.constant", n)
        elif "samples" in dspec:
            s = _get(dspec, "samples", dp, "list")
            if len(s) != grid.N + 1:
                raise ConfigError(f"needs {grid.N + 1} samples, got {len(s)}", f"{dp}.samples")
            density = np.array([_matrix(m, f"{dp}.samples[{i}]", n) for i, m in enumerate(s)])
        elif "generator" in dspec:
            base = _matrix(_get(dspec, "matrix", dp), f"{dp}.matrix", n)
            fn = generator(_get(dspec, "generator", dp, "dict"), f"{dp}.generator")
            density = np.array([base * float(fn(th)) for th in grid.thetas()])
        else:
            raise ConfigError("needs one of 'constant', 'samples', 'generator'", dp)
        if n is None:
            n = np.atleast_2d(density if density.ndim == 2 else density[0]).shape[0]
    if n is None:
        raise ConfigError("cannot infer the dimension; give 'n' or a jump", "kernel.n")
    return StieltjesKernel(grid.r, grid.h, tuple(jumps), density, int(n))


def _history_from_csv(spec, grid, n, base, path):
    file = base / _get(spec, "path", path, "str")
    header, data = read_csv(file, f"{path}.path")
    if header[0] != "t" or len(header) != n + 1:
        raise ConfigError(f"expected header t,x_1..x_{n}, got {','.join(header)}", f"{path}.path")
    at = _get(spec, "at", path, "number", None)
    t = data[:, 0]
    if at is None:
        at = float(t[np.argmin(np.abs(t))])
    end = int(np.argmin(np.abs(t - at)))
    if abs(t[end] - at) > 1e-9 * max(1.0, grid.h):
        raise ConfigError(f"no row at t = {at}", f"{path}.at")
    if end < grid.N:
        raise ConfigError(f"needs {grid.N + 1} rows ending at t = {at}", f"{path}.path")
    seg = data[end - grid.N:end + 1, 1:]
    if not np.allclose(np.diff(t[end - grid.N:end + 1]), grid.h, rtol=1e-9, atol=1e-12):
        raise ConfigError("row spacing does not match grid.h", f"{path}.path")
    return History(seg, seg[-1], grid.h)


def parse_history(spec, grid, n, base):
    path = "history"
    kind = _get(spec, "type", path, "str")
    if kind == "constant":
        return History.constant(_vector(_get(spec, "value", path), "history.value", n), grid)
    if kind == "zero":
        return History.zero(n, grid)
    if kind == "instantaneous":
        return instantaneous(_vector(_get(spec, "value", path), "history.value", n), grid)
    if kind == "sinusoid":
        a = _vector(_get(spec, "amplitude", path), "history.amplitude", n)
        w = _get(spec, "frequency", path, "number", 1.0)
        p = _vector(_get(spec, "phase", path, default=0.0), "history.phase", n)
        return History.sinusoid(a, w, p, grid)
    if kind == "ramp":
        s = _vector(_get(spec, "slope", path), "history.slope", n)
        o = _vector(_get(spec, "offset", path, default=0.0), "history.offset", n)
        return History.ramp(s, grid, o)
    if kind == "components":
        comps = _get(spec, "components", path, "list")
        if len(comps) != n:
            raise ConfigError(f"needs {n} generators", "history.components")
        fns = [generator(c, f"history.components[{i}]") for i, c in enumerate(comps)]
        th = grid.thetas()
        s = np.stack([np.broadcast_to(f(th), th.shape) for f in fns], axis=1)
        return History(s, s[-1], grid.h)
    if kind == "samples":
        vals = np.array(_get(spec, "values", path, "list"), dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.shape != (grid.N + 1, n):
            raise ConfigError(f"needs shape {(grid.N + 1, n)}, got {vals.shape}", "history.values")
        v0 = _get(spec, "value_at_zero", path, default=None)
        v0 = vals[-1] if v0 is None else _vector(v0, "history.value_at_zero", n)
        return History(vals, v0, grid.h)
    if kind == "csv":
        return _history_from_csv(spec, grid, n, base, path)
    raise ConfigError(
        f"unknown type {kind!r} (constant, zero, instantaneous, sinusoid, ramp,"
        " components, samples, csv)", "history.type")


def parse_forcing(spec, grid, n, base):
    """Returns ``(g, G)``; at most one is not None."""
    path = "forcing"
    if spec is None:
        return None, None
    kind = _get(spec, "type", path, "str")
    t = grid.future_times()
    if kind == "none":
        return None, None
    if kind == "g":
        comps = _get(spec, "components", path, "list")
        if len(comps) != n:
            raise ConfigError(f"needs {n} generators", "forcing.components")
        fns = [generator(c, f"forcing.components[{i}]") for i, c in enumerate(comps)]
        return np.stack([np.broadcast_to(f(t), t.shape) for f in fns], axis=1), None
    if kind in ("g_samples", "G_samples", "csv"):
        which = kind[0] if kind != "csv" else _get(spec, "kind", path, "str")
        if which not in ("g", "G"):
            raise ConfigError("must be 'g' or 'G'", "forcing.kind")
        if kind == "csv":
            header, data = read_csv(base / _get(spec, "path", path, "str"), "forcing.path")
            if header[0] != "t" or len(header) != n + 1:
                raise ConfigError(f"expected {n + 1} columns starting with t", "forcing.path")
            vals = data[:, 1:]
            key = "forcing.path"
        else:
            vals = np.array(_get(spec, "values", path, "list"), dtype=float)
            if vals.ndim == 1:
                vals = vals[:, None]
            key = "forcing.values"
        if vals.shape != (grid.M + 1, n):
            raise ConfigError(f"needs shape {(grid.M + 1, n)}, got {vals.shape}", key)
        if which == "G":
            if np.any(vals[0] != 0):
                raise ConfigError("G must vanish at t = 0", f"{key}[0]")
            return None, vals
        return vals, None
    raise ConfigError(f"unknown type {kind!r} (none, g, g_samples, G_samples, csv)",
                      "forcing.type")


def parse_solver(spec):
    if spec is None:
        return SolverConfig()
    kw = {}
    if "picard_tol" in spec:
        kw["picard_tol"] = _get(spec, "picard_tol", "solver", "positive")
    if "max_picard_iters" in spec:
        v = spec["max_picard_iters"]
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise ConfigError("must be a positive integer", "solver.max_picard_iters")
        kw["max_picard_iters"] = v
    if "window" in spec:
        kw["window"] = _get(spec, "window", "solver", "positive")
    if "initial_guess" in spec:
        kw["initial_guess"] = _get(spec, "initial_guess", "solver", "str")
    try:
        return SolverConfig(**kw)
    except ConfigError as exc:
        raise ConfigError(exc.message, f"solver.{exc.key}") from None


def parse_reversed(spec, h, T, path):
    """Scalar measure on ``[0, T]`` for the convolution battery."""
    jumps = []
    for i, item in enumerate(_get(spec, "jumps", path, "list", [])):
        p = f"{path}.jumps[{i}]"
        u = _get(item, "u", p, "number")
        k = _on_grid(u, h, 0.0, T, f"{p}.u")
        jumps.append((k * h, [[_get(item, "value", p, "number")]]))
    jumps.sort(key=lambda q: q[0])
    density = None
    if _get(spec, "density", path, default=None) is not None:
        fn = generator(spec["density"], f"{path}.density")
        u = np.arange(round(T / h) + 1) * h
        density = np.asarray(np.broadcast_to(fn(u), u.shape), dtype=float)[:, None, None]
    return ReversedKernel(T, h, tuple(jumps), density, 1)


@contextmanager
def _section(key):
    """Re-raise engine validation errors as ConfigError naming ``key``."""
    try:
        yield
    except ConfigError:
        raise
    except RetardaError as exc:
        raise ConfigError(str(exc), key) from None


def load(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}", "config") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}: {exc.msg}", "config") from None
    return parse(raw, path.parent)


def parse(raw, base_dir=Path(".")):
    if not isinstance(raw, dict):
        raise ConfigError("the scenario must be a JSON object", "config")
    task = _get(raw, "task", "", "str")
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}; choose from {', '.join(TASKS)}", "task")
    base_dir = Path(base_dir)
    if task == "convolve-check":
        spec = _get(raw, "convolution", "", "dict")
        h = _get(spec, "h", "convolution", "positive")
        T = _get(spec, "T", "convolution", "positive")
        if abs(T / h - round(T / h)) > 1e-9 * (T / h):
            raise ConfigError("T / h is not an integer", "convolution.T")
        grid = GridSpec(T, h, T)
        return Scenario(task, grid, None, None, None, None, SolverConfig(), raw, base_dir)
    grid = parse_grid(_get(raw, "grid", "", "dict"))
    with _section("kernel"):
        kernel = parse_kernel(_get(raw, "kernel", "", "dict"), grid)
    n = kernel.n
    hist = None
    if task in ("solve", "voc-check", "simulate"):
        with _section("history"):
            hist = parse_history(_get(raw, "history", "", "dict"), grid, n, base_dir)
    g = G = None
    if task in ("solve", "voc-check"):
        g, G = parse_forcing(_get(raw, "forcing", "", default=None), grid, n, base_dir)
    if task == "simulate" and not hist.is_continuous:
        raise ConfigError("simulate needs a continuous history", "history")
    solver = parse_solver(_get(raw, "solver", "", default=None))
    try:
        solver.window_for(kernel)
    except ConfigError as exc:
        raise ConfigError(exc.message, "solver.window") from None
    return Scenario(task, grid, kernel, hist, g, G, solver, raw, base_dir)
