"""Command-line front end.

    retarda run <config.json> [--assert] [--out DIR]
    retarda selftest [--quick]

Exit status: 0 on success, 2 on a validation error, 3 when a solver or fit
fails, 4 when ``--assert`` is given and the task's acceptance check fails.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import scenario as sc
from .convolution import GridFunction, check_convolution_identities, volterra
from .errors import (CertificateError, ConfigError, DegenerateFitError, DomainError,
                     GridError, InputError, PicardError)
from .fundamental import (expm_oracle, fundamental_derivative, principal_fundamental,
                          pure_delay_series)
from .history import Trajectory, pointwise_norm
from .nonlinear import (BUILTINS, builtin, linearized_stability_certificate, simulate,
                        verify_decay)
from .selftest import main as selftest_main, tol_scale_from_env
from .solver import mild_residual, solve_forced_G, solve_forced_g, solve_homogeneous
from .stability import fit_exponential_envelope, history_envelope, semigroup_decay
from .voc import voc_full, voc_kernel_form, voc_routes

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_ASSERT = 0, 2, 3, 4


class Outcome:
    """Files written plus the acceptance check of one task."""

    def __init__(self):
        self.files = []
        self.checks = []  # (name, value, tol)

    def check(self, name, value, tol):
        self.checks.append((name, float(value), float(tol)))

    @property
    def passed(self):
        return all(v <= t for _, v, t in self.checks)


def _assert_tol(s, default):
    spec = s.raw.get("assert", {})
    if not isinstance(spec, dict):
        raise ConfigError("must be an object", "assert")
    tol = sc._get(spec, "tol", "assert", "positive", default)
    return tol * tol_scale_from_env()


def _write(out, res, name, header, cols):
    path = out / name
    sc.write_csv(path, header, cols)
    res.files.append(path)


def _write_json(out, res, name, obj):
    path = out / name
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8",
                    newline="\n")
    res.files.append(path)


def _state_header(n):
    return ["t"] + [f"x_{i + 1}" for i in range(n)]


def _solve(s):
    T = s.grid.T
    if s.G is not None:
        return solve_forced_G(s.kernel, s.history, s.G, T, s.solver)
    if s.g is not None:
        return solve_forced_g(s.kernel, s.history, s.g, T, s.solver)
    return solve_homogeneous(s.kernel, s.history, T, s.solver)


def task_solve(s, out, res):
    x = _solve(s)
    _write(out, res, "trace.csv", _state_header(x.n), [x.times()] + list(x.samples.T))
    G = s.G
    if G is None and s.g is not None:
        G = volterra(GridFunction(s.g, s.grid.h)).values
    scale = max(1.0, float(np.max(np.abs(x.samples))))
    res.check("mild residual", mild_residual(s.kernel, x, G) / scale, _assert_tol(s, 1e-8))


def task_fundamental(s, out, res):
    k = s.kernel
    X = principal_fundamental(k, s.grid.T, s.solver)
    n = k.n
    header = ["t"] + [f"X_{a + 1}{b + 1}" for a in range(n) for b in range(n)]
    flat = X.samples.reshape(len(X.samples), n * n)
    _write(out, res, "fundamental.csv", header, [X.times()] + list(flat.T))
    t = X.grid.future_times()
    tol = _assert_tol(s, 1e-4)
    if not k.has_density and len(k.jumps) == 1:
        theta, J = k.jumps[0]
        if theta == 0.0:
            ref = np.array([expm_oracle(J, v) for v in t])
            res.check("X vs matrix exponential", np.max(np.abs(X.future() - ref)), tol)
            return
        if n == 1:
            ref = pure_delay_series(float(J[0, 0]), -theta, t)
            res.check("X vs pure delay series", np.max(np.abs(X.future()[:, 0, 0] - ref)), tol)
            return
    worst = 0.0
    for j in range(n):
        col = Trajectory(X.grid, X.samples[:, :, j], np.zeros(n))
        worst = max(worst, mild_residual(k, col, phi_at_zero=np.eye(n)[j]))
    res.check("column mild residual", worst, _assert_tol(s, 1e-8))


def task_voc(s, out, res):
    k, phi, T = s.kernel, s.history, s.grid.T
    X = principal_fundamental(k, T, s.solver)
    Xdot = fundamental_derivative(k, X)
    if s.g is None and s.G is None:
        routes = voc_routes(k, phi, T, s.solver, X, Xdot)
    else:
        G = s.G if s.G is not None else volterra(GridFunction(s.g, s.grid.h)).values
        routes = {"direct": _solve(s), "voc_full": voc_full(X, Xdot, k, phi, G)}
        if s.g is not None and phi.is_continuous:
            routes["voc_kernel_form"] = voc_kernel_form(X, k, phi, s.g)
    ref = routes["direct"].future()
    names = [r for r in routes if r != "direct"]
    cols = [np.max(np.abs(routes[r].future() - ref), axis=1) for r in names]
    _write(out, res, "residuals.csv", ["t"] + names, [X.grid.future_times()] + cols)
    tol = _assert_tol(s, 1e-3)
    for name, c in zip(names, cols):
        res.check(f"{name} vs direct", np.max(c), tol)


def task_stability(s, out, res):
    spec = s.raw.get("stability", {}) or {}
    T = sc._get(spec, "T", "stability", "positive", s.grid.T)
    t_min = sc._get(spec, "t_min", "stability", "number", None)
    X = principal_fundamental(s.kernel, T, s.solver)
    point = fit_exponential_envelope(X, t_min)
    hist = history_envelope(X, t_min=t_min)
    report = {"pointwise": point.as_dict(), "history": hist.as_dict()}
    if sc._get(spec, "semigroup", "stability", default=False):
        report["semigroup"] = semigroup_decay(s.kernel, T, cfg=s.solver, t_min=t_min).as_dict()
    _write_json(out, res, "decay_fit.json", report)
    t = X.grid.future_times()
    norms = pointwise_norm(X.future())
    _write(out, res, "decay.csv", ["t", "norm", "bound"], [t, norms, point.envelope(t)])
    res.check("exponentially stable (alpha > 0 required)", 0.0 if point.stable else 1.0, 0.0)


def _perturbation(s):
    spec = s.raw.get("perturbation")
    if spec is None:
        return builtin("none")
    name = sc._get(spec, "name", "perturbation", "str")
    if name not in BUILTINS and name != "none":
        raise ConfigError(f"unknown perturbation {name!r}; choose from {sorted(BUILTINS)}",
                          "perturbation.name")
    c = sc._get(spec, "coefficient", "perturbation", "number", None)
    return builtin(name, c)


def task_simulate(s, out, res):
    pert = _perturbation(s)
    t0 = sc._get(s.raw, "t0", "", "number", 0.0)
    ball = sc._get(s.raw, "ball", "", "positive", None)
    run = simulate(s.kernel, pert, s.history, s.grid.T, t0, s.solver, ball)
    x = run.trajectory
    _write(out, res, "trace.csv", _state_header(x.n), [x.times()] + list(x.samples.T))
    summary = {"completed": run.completed, "t_last": run.t_last, "reason": run.reason}
    res.check("run completed", 0.0 if run.completed else 1.0, 0.0)
    cspec = s.raw.get("certificate")
    if cspec is not None:
        dt = sc._get(cspec, "delta_tilde", "certificate", "positive")
        fitT = sc._get(cspec, "fit_T", "certificate", "positive", max(s.grid.T, 20 * s.grid.r))
        if pert.epsilon_modulus is None:
            raise ConfigError("needs a perturbation with a known modulus", "certificate")
        X = principal_fundamental(s.kernel, fitT, s.solver)
        cert = linearized_stability_certificate(history_envelope(X), pert.epsilon_modulus,
                                                dt, s.kernel)
        phin = s.history.sup_norm()
        rep = verify_decay(x, cert, phin)
        summary["certificate"] = {"M": cert.M, "beta": cert.beta, "delta": cert.delta,
                                  "delta_tilde": cert.delta_tilde, "epsilon": cert.epsilon,
                                  "alpha": cert.alpha, "phi_norm": phin, "status": rep.status}
        t = x.grid.future_times() + x.t_offset
        _write(out, res, "decay.csv", ["t", "norm", "bound"],
               [t, x.segment_norms(), cert.bound(t, phin, t0)])
        res.check("certified decay", 0.0 if rep.status != "fail" else -rep.worst, _assert_tol(s, 1e-9))
    _write_json(out, res, "simulation.json", summary)


def task_convolve(s, out, res):
    spec = s.raw["convolution"]
    h, T = s.grid.h, s.grid.T
    t = np.arange(s.grid.M + 1) * h
    alpha = sc.parse_reversed(sc._get(spec, "alpha", "convolution", "dict"), h, T,
                              "convolution.alpha")
    f = sc.generator(sc._get(spec, "f", "convolution", "dict"), "convolution.f")(t)
    gspec = sc._get(spec, "g", "convolution", "dict")
    g = sc.generator(gspec, "convolution.g")(t)
    gp = sc.generator_derivative(gspec, "convolution.g")(t)
    tol = sc._get(spec, "tol", "convolution", "positive", 1e-6) * tol_scale_from_env()
    rep = check_convolution_identities(alpha, np.broadcast_to(f, t.shape).astype(float),
                                       np.broadcast_to(g, t.shape).astype(float), T,
                                       g_prime=np.broadcast_to(gp, t.shape), tol=tol)
    names = list(rep.pointwise)
    _write(out, res, "residuals.csv", ["t"] + names, [t] + [rep.pointwise[k] for k in names])
    _write_json(out, res, "identities.json",
                {"residuals": rep.residuals, "tolerances": rep.tolerances,
                 "passed": rep.passed})
    for k in rep.residuals:
        res.check(k, rep.residuals[k], rep.tolerances[k])


TASK_HANDLERS = {
    "solve": task_solve, "fundamental": task_fundamental, "voc-check": task_voc,
    "stability": task_stability, "simulate": task_simulate, "convolve-check": task_convolve,
}


def run(config, out=None, do_assert=False, stream=sys.stdout):
    """Run one scenario file; returns the exit status."""
    try:
        s = sc.load(config)
        if out is None:
            odir = s.raw.get("output", {}).get("dir") if isinstance(s.raw.get("output"), dict) else None
            out = (s.base_dir / odir) if odir else Path.cwd()
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        res = Outcome()
        TASK_HANDLERS[s.task](s, out, res)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GridError, DomainError, InputError) as exc:
        print(f"error: {getattr(exc, 'key', None) or 'config'}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PicardError, CertificateError, DegenerateFitError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for p in res.files:
        print(f"wrote {p}", file=stream)
    for name, v, t in res.checks:
        print(f"check {name}: {v:.3e} (tol {t:.3e}) {'PASS' if v <= t else 'FAIL'}", file=stream)
    if do_assert and not res.passed:
        return EXIT_ASSERT
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="retarda",
                                description="Linear and perturbed delay equations.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a JSON scenario")
    r.add_argument("config", help="path to the scenario file")
    r.add_argument("--assert", dest="do_assert", action="store_true",
                   help="exit 4 if the task's acceptance check fails")
    r.add_argument("--out", help="output directory (default: current directory)")
    t = sub.add_parser("selftest", help="run the built-in identity battery")
    t.add_argument("--quick", action="store_true", help="coarse grids only")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return run(args.config, args.out, args.do_assert)
    try:
        return selftest_main(args.quick)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
