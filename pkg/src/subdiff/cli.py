"""Batch front door: one JSON run configuration in, CSV/JSON artifacts out.

Commands: ``forward`` (solve and dump the field plus diagnostics),
``inverse`` (recover the reaction coefficient from flux data), ``verify``
(run both solver routes against thresholds), ``selftest`` (identity suites
of the special-function and quadrature layers).

Determinism is part of the contract: identical config and seed must yield
byte-identical artifacts, so outputs carry no timestamps, hostnames, or any
other run-local state, and floats are written at full round-trip precision.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (
    AdmissibilityError,
    AliasingError,
    ConfigError,
    ConvergenceError,
    DomainError,
    GridMismatchError,
    ResourceError,
)
from .forward import ProblemSpec, residual_check, solve_forward
from .frackernel import TimeGrid, build_weights, caputo_l1, convolve
from .inverse import InverseSpec, recover_q, synthesize_data
from .mlf import MlfParams, eval_mlf, kernel, relaxation
from .oracle import solve_fd
from .profiles import Profile, named_profile
from .spectral import SpaceGrid

_SENTINEL = object()


# ---------------------------------------------------------------- config ---

def _load_config(path: Path) -> dict:
    try:
        text = path.read_text()
    except OSError:
        raise
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(
            f"{path}: parse error at line {e.lineno} column {e.colno}: "
            f"{e.msg}") from e
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return cfg


def _check_keys(block, allowed, where, required=frozenset()):
    if not isinstance(block, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(block) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    missing = sorted(set(required) - set(block))
    if missing:
        raise ConfigError(f"{where}: missing keys {missing}")


def _num(block, key, where, default=_SENTINEL, lo=None, hi=None,
         integer=False):
    if key not in block:
        if default is _SENTINEL:
            raise ConfigError(f"{where}: missing key '{key}'")
        return default
    v = block[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"{where}.{key}: expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(f"{where}.{key}: {v} is below the minimum {lo}")
    if hi is not None and v > hi:
        raise ConfigError(f"{where}.{key}: {v} exceeds the maximum {hi}")
    return int(v) if integer else float(v)


def _read_samples_csv(path: Path, tgrid: TimeGrid, where: str) -> np.ndarray:
    """Two-column (t, value) CSV, optional header, nodes matching the grid."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if rows and rows[0] and not _is_float(rows[0][0]):
        rows = rows[1:]
    if len(rows) != tgrid.n_steps + 1:
        raise ConfigError(
            f"{where}: {path} has {len(rows)} sample rows, need "
            f"{tgrid.n_steps + 1}")
    try:
        data = np.array([[float(c) for c in r[:2]] for r in rows])
    except (ValueError, IndexError) as e:
        raise ConfigError(f"{where}: {path}: {e}") from e
    if not np.allclose(data[:, 0], tgrid.nodes,
                       atol=1e-9 * max(1.0, tgrid.t_final), rtol=0.0):
        raise ConfigError(f"{where}: {path}: time column does not match the "
                          f"configured grid")
    return data[:, 1]


def _is_float(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def _profile(cfg, tgrid: TimeGrid, where: str, base: Path) -> Profile:
    _check_keys(cfg, {"kind", "value", "intercept", "slope", "offset",
                      "amplitude", "frequency", "coefficient", "exponent",
                      "path"}, where, required={"kind"})
    kind = cfg["kind"]
    if kind == "csv-samples":
        _check_keys(cfg, {"kind", "path"}, where, required={"path"})
        return Profile(tgrid, _read_samples_csv(base / cfg["path"], tgrid,
                                                where))
    params = {k: _num(cfg, k, where) for k in cfg if k != "kind"}
    try:
        return named_profile(tgrid, kind, **params)
    except DomainError as e:
        raise ConfigError(f"{where}: {e}") from e


def _mode_shape(sgrid: SpaceGrid, k: int) -> np.ndarray:
    sh = (math.sqrt(2.0 / sgrid.length)
          * np.sin(k * math.pi * sgrid.nodes / sgrid.length))
    sh[0] = sh[-1] = 0.0
    return sh


def _terms(cfg, where, K):
    _check_keys(cfg, {"terms"}, where, required={"terms"})
    terms = cfg["terms"]
    if not isinstance(terms, list) or not terms:
        raise ConfigError(f"{where}.terms: expected a nonempty list")
    for i, term in enumerate(terms):
        mode = _num(term, "mode", f"{where}.terms[{i}]", lo=1, integer=True)
        if mode > K:
            raise ConfigError(f"{where}.terms[{i}]: mode {mode} exceeds the "
                              f"{K} retained modes")
    return terms


def _build_spec(cfg, need_q: bool, base: Path) -> ProblemSpec:
    prob = cfg["problem"]
    _check_keys(prob, {"length", "t_final", "rho", "n_steps", "n_cells",
                       "n_modes"}, "problem",
                required={"length", "t_final", "rho", "n_steps", "n_cells"})
    tgrid = TimeGrid(_num(prob, "t_final", "problem", lo=1e-300),
                     _num(prob, "n_steps", "problem", lo=1, integer=True))
    sgrid = SpaceGrid(_num(prob, "length", "problem", lo=1e-300),
                      _num(prob, "n_cells", "problem", lo=2, integer=True))
    rho = _num(prob, "rho", "problem")
    K = _num(prob, "n_modes", "problem", default=None, lo=1, integer=True)
    if K is None:
        K = min(64, max(1, sgrid.n_cells // 4))

    sigma = _profile(cfg["sigma"], tgrid, "sigma", base)
    q = _profile(cfg["q"], tgrid, "q", base) if need_q else None

    phi = np.zeros(sgrid.n_cells + 1)
    for i, term in enumerate(_terms(cfg["phi"], "phi", K)):
        _check_keys(term, {"mode", "amplitude"}, f"phi.terms[{i}]",
                    required={"mode", "amplitude"})
        phi += (_num(term, "amplitude", f"phi.terms[{i}]")
                * _mode_shape(sgrid, _num(term, "mode", f"phi.terms[{i}]",
                                          integer=True)))

    f = np.zeros((tgrid.n_steps + 1, sgrid.n_cells + 1))
    for i, term in enumerate(_terms(cfg["f"], "f", K)):
        _check_keys(term, {"mode", "time"}, f"f.terms[{i}]",
                    required={"mode", "time"})
        prof = _profile(term["time"], tgrid, f"f.terms[{i}].time", base)
        k = _num(term, "mode", f"f.terms[{i}]", integer=True)
        f += prof.values[:, None] * _mode_shape(sgrid, k)[None, :]

    return ProblemSpec(sgrid=sgrid, tgrid=tgrid, rho=rho, sigma=sigma, q=q,
                       f=f, phi=phi, K=K)


def _solver_block(cfg, defaults):
    block = cfg.get("solver", {})
    _check_keys(block, set(defaults), "solver")
    out = {}
    for key, dv in defaults.items():
        is_int = isinstance(dv, int)
        out[key] = _num(block, key, "solver", default=dv,
                        lo=1 if is_int else 1e-300, integer=is_int)
    return out


def _resolved_config(command, cfg, spec, solver, extra=None):
    """The config with every default materialized, echoed into artifacts."""
    resolved = {
        "command": command,
        "problem": {"length": spec.length, "t_final": spec.t_final,
                    "rho": spec.rho, "n_steps": spec.tgrid.n_steps,
                    "n_cells": spec.sgrid.n_cells, "n_modes": spec.K},
        "sigma": cfg["sigma"],
        "phi": cfg["phi"],
        "f": cfg["f"],
        "solver": solver,
    }
    if spec.q is not None:
        resolved["q"] = cfg["q"]
    if extra:
        resolved.update(extra)
    return resolved


# --------------------------------------------------------------- outputs ---

def _fmt(x) -> str:
    return format(float(x), ".17g")


def _jnum(x):
    x = float(x)
    return x if math.isfinite(x) else None


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_json(path: Path, obj) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(json.dumps(obj, indent=2, sort_keys=True))
        fh.write("\n")


# -------------------------------------------------------------- commands ---

def _run_forward(cfg, out: Path, threads, base: Path) -> int:
    _check_keys(cfg, {"problem", "sigma", "q", "phi", "f", "solver"},
                "config", required={"problem", "sigma", "q", "phi", "f"})
    solver = _solver_block(cfg, {"tol": 1e-10, "max_iter": 200})
    spec = _build_spec(cfg, need_q=True, base=base)
    sol = solve_forward(spec, tol=solver["tol"], max_iter=solver["max_iter"],
                        threads=threads)
    residual = residual_check(sol, spec)

    _write_csv(out / "solution.csv",
               ["t"] + [f"u{j}" for j in range(spec.sgrid.n_cells + 1)],
               ([_fmt(t)] + [_fmt(v) for v in row]
                for t, row in zip(spec.tgrid.nodes, sol.u)))
    rep = sol.diagnostics["assumption1"]
    _write_json(out / "diagnostics.json", {
        "assumption1": {
            "m_sigma": rep.m_sigma, "M_sigma": rep.M_sigma,
            "n_q": rep.n_q, "N_q": rep.N_q,
            "q_window": list(rep.q_window),
            "cond1_sigma_positive": rep.cond1_sigma_positive,
            "cond2_q_in_window": rep.cond2_q_in_window,
            "cond3_endpoints": rep.cond3_endpoints,
            "endpoint_defect": rep.endpoint_defect,
            "all_passed": rep.all_passed,
        },
        "contraction_bounds": sol.diagnostics["contraction_bounds"],
        "picard_iterations": sol.diagnostics["picard_iterations"],
        "q1_value": sol.diagnostics["q1_value"],
        "q1_bound": sol.diagnostics["q1_bound"],
        "q2_weighted_max": sol.diagnostics["q2_weighted_max"],
        "q2_fitted_exponent": _jnum(sol.diagnostics["q2_fitted_exponent"]),
        "init_defect": sol.diagnostics["init_defect"],
        "residual": residual,
        "resolved_config": _resolved_config("forward", cfg, spec, solver),
    })
    print(f"forward: residual {residual:.6e}; "
          f"wrote {out / 'solution.csv'}, {out / 'diagnostics.json'}")
    return 0


def _run_inverse(cfg, out: Path, threads, base: Path) -> int:
    _check_keys(cfg, {"problem", "sigma", "phi", "f", "data", "solver"},
                "config", required={"problem", "sigma", "phi", "f", "data"})
    solver = _solver_block(cfg, {"tol": 1e-6, "max_iter": 500,
                                 "forward_tol": 1e-10,
                                 "forward_max_iter": 200})
    spec = _build_spec(cfg, need_q=False, base=base)

    data = cfg["data"]
    _check_keys(data, {"psi_csv", "psi0", "synthetic"}, "data")
    if ("synthetic" in data) == ("psi_csv" in data):
        raise ConfigError("data: exactly one of 'synthetic' or 'psi_csv' "
                          "must be given")
    if "synthetic" in data:
        if "psi0" in data:
            raise ConfigError("data.psi0 only applies to csv data; the "
                              "synthetic floor is the flux minimum")
        syn = data["synthetic"]
        _check_keys(syn, {"q_true", "noise_level", "seed"}, "data.synthetic",
                    required={"q_true"})
        q_true = _profile(syn["q_true"], spec.tgrid, "data.synthetic.q_true",
                          base)
        inv = synthesize_data(
            replace(spec, q=q_true),
            noise_level=_num(syn, "noise_level", "data.synthetic",
                             default=0.0, lo=0.0),
            seed=_num(syn, "seed", "data.synthetic", default=0, integer=True))
    else:
        psi = Profile(spec.tgrid,
                      _read_samples_csv(base / data["psi_csv"], spec.tgrid,
                                        "data.psi_csv"))
        psi0 = _num(data, "psi0", "data",
                    default=float(psi.values.min()), lo=1e-300)
        inv = InverseSpec(spec=spec, psi=psi, psi0=psi0)

    res = recover_q(inv, tol=solver["tol"], max_iter=solver["max_iter"],
                    threads=threads, forward_tol=solver["forward_tol"],
                    forward_max_iter=solver["forward_max_iter"])

    _write_csv(out / "recovered_q.csv", ["t", "q"],
               ([_fmt(t), _fmt(v)]
                for t, v in zip(spec.tgrid.nodes, res.q.values)))
    rep = res.condition_report
    _write_json(out / "report.json", {
        "condition_report": {
            "psi_min": rep.psi_min, "psi_deriv_max": rep.psi_deriv_max,
            "cond1_flux_floor": rep.cond1_flux_floor,
            "compat_defect": rep.compat_defect,
            "cond2_compatible": rep.cond2_compatible,
            "cond3_low": rep.cond3_low, "cond3_high": rep.cond3_high,
            "cond3_rhs": rep.cond3_rhs, "cond3_window": rep.cond3_window,
            "CT": rep.CT, "cond4_contraction": rep.cond4_contraction,
            "all_passed": rep.all_passed,
        },
        "CT_bound": res.CT_bound,
        "measured_ratio": res.measured_ratio,
        "iterations": len(res.iterates),
        "iterates": res.iterates,
        "clamp_count": res.clamp_count,
        "flux_defect": res.flux_defect,
        "trace_bound": res.trace_bound,
        "trace_sums": res.trace_sums,
        "recovery_error": res.recovery_error,
        "resolved_config": _resolved_config(
            "inverse", cfg, spec, solver, extra={"data": data}),
    })
    err = ("" if res.recovery_error is None
           else f"; recovery error {res.recovery_error:.6e}")
    print(f"inverse: {len(res.iterates)} sweeps, ratio "
          f"{res.measured_ratio:.4f}, flux defect {res.flux_defect:.3e}{err}; "
          f"wrote {out / 'recovered_q.csv'}, {out / 'report.json'}")
    return 0


def _run_verify(cfg, out: Path, threads, base: Path) -> int:
    _check_keys(cfg, {"problem", "sigma", "q", "phi", "f", "solver",
                      "verify"}, "config",
                required={"problem", "sigma", "q", "phi", "f"})
    solver = _solver_block(cfg, {"tol": 1e-10, "max_iter": 200})
    ver = cfg.get("verify", {})
    _check_keys(ver, {"max_residual", "max_cross_gap"}, "verify")
    max_res = _num(ver, "max_residual", "verify", default=1e-2, lo=0.0)
    max_gap = _num(ver, "max_cross_gap", "verify", default=5e-3, lo=0.0)

    spec = _build_spec(cfg, need_q=True, base=base)
    sol = solve_forward(spec, tol=solver["tol"], max_iter=solver["max_iter"],
                        threads=threads)
    residual = residual_check(sol, spec)
    gap = float(np.max(np.abs(sol.u - solve_fd(spec).u)))
    res_ok, gap_ok = residual <= max_res, gap <= max_gap

    _write_json(out / "verify.json", {
        "residual": residual, "max_residual": max_res, "residual_ok": res_ok,
        "cross_gap": gap, "max_cross_gap": max_gap, "cross_gap_ok": gap_ok,
        "passed": res_ok and gap_ok,
        "resolved_config": _resolved_config(
            "verify", cfg, spec, solver,
            extra={"verify": {"max_residual": max_res,
                              "max_cross_gap": max_gap}}),
    })
    print(f"verify: residual {residual:.6e} (<= {max_res:g}: {res_ok}), "
          f"cross gap {gap:.6e} (<= {max_gap:g}: {gap_ok}); "
          f"wrote {out / 'verify.json'}")
    return 0 if res_ok and gap_ok else 1


def _selftest_mlf():
    checks = []
    p11 = MlfParams(1.0, 1.0)
    worst = max(abs(eval_mlf(p11, -x) - math.exp(-x)) / math.exp(-x)
                for x in np.linspace(0.0, 30.0, 301))
    checks.append(("exp agreement on [-30, 0]", worst <= 1e-12,
                   f"max rel err {worst:.3e}"))

    rng = np.random.default_rng(20250815)
    bad = 0
    for _ in range(1000):
        rho = rng.uniform(0.05, 0.95)
        z = rng.uniform(0.01, 50.0) * rng.uniform(0.0, 3.0) ** rho
        for beta in (1.0, rho):
            v = eval_mlf(MlfParams(rho, beta), -z)
            if not -1e-15 <= v <= 1.0 / math.gamma(beta) + 1e-12:
                bad += 1
    checks.append(("0 <= E <= 1/Gamma(beta) on 1000 tuples", bad == 0,
                   f"{bad} violations"))

    worst = 0.0
    for rho, lam, t in [(0.3, 0.5, 0.7), (0.5, 2.0, 1.0), (0.8, 10.0, 0.4)]:
        h = 1e-5 * t
        fd = (relaxation(rho, lam, t + h) - relaxation(rho, lam, t - h)) / (2 * h)
        worst = max(worst, abs(kernel(rho, lam, t) + fd) / abs(fd))
    checks.append(("kernel = -d/dt relaxation vs central differences",
                   worst <= 1e-6, f"max rel err {worst:.3e}"))
    return checks


def _selftest_frackernel():
    checks = []
    g = TimeGrid(1.0, 256)

    d = caputo_l1(g, np.full(257, 3.7), 0.5)
    worst_c = float(np.max(np.abs(d[1:])))
    t = g.nodes
    d = caputo_l1(g, 2.0 + 0.5 * t, 0.4)
    worst_l = float(np.max(np.abs(
        d[1:] - 0.5 * t[1:] ** 0.6 / math.gamma(1.6))))
    checks.append(("L1 derivative exact on constants and linears",
                   worst_c <= 1e-12 and worst_l <= 1e-12,
                   f"const {worst_c:.3e}, linear {worst_l:.3e}"))

    rho, lam = 0.6, 3.0
    w = build_weights(g, rho, lam)
    out = convolve(w, np.ones(257))
    want = (1.0 - np.array([relaxation(rho, lam, s) for s in t])) / lam
    worst = float(np.max(np.abs(out[1:] - want[1:])))
    checks.append(("convolution weights integrate the kernel exactly",
                   worst <= 1e-12, f"max err {worst:.3e}"))

    rho = 0.5
    g2 = TimeGrid(1.0, 1024)
    out = convolve(build_weights(g2, rho, 1.0), g2.nodes)
    worst = 0.0
    for i in (256, 512, 1024):
        s = g2.nodes[i]
        want = s ** (rho + 1.0) * eval_mlf(MlfParams(rho, rho + 2.0), -s ** rho)
        worst = max(worst, abs(out[i] - want))
    checks.append(("kernel * t convolution matches the series identity",
                   worst <= 5e-4, f"max err {worst:.3e}"))
    return checks


def _run_selftest(out: Path) -> int:
    suites = {"mlf": _selftest_mlf(), "frackernel": _selftest_frackernel()}
    all_ok = True
    report = {}
    for name, checks in suites.items():
        passed = sum(ok for _, ok, _ in checks)
        all_ok = all_ok and passed == len(checks)
        print(f"selftest {name}: {passed}/{len(checks)} passed")
        for label, ok, detail in checks:
            print(f"  [{'ok' if ok else 'FAIL'}] {label} ({detail})")
        report[name] = [{"check": label, "passed": bool(ok), "detail": detail}
                        for label, ok, detail in checks]
    _write_json(out / "selftest.json", report)
    return 0 if all_ok else 1


# ------------------------------------------------------------ entry point --

def main(argv: Optional[list] = None) -> int:
    ap = argparse.ArgumentParser(
        prog="subdiff",
        description="Subdiffusion forward solver and reaction-coefficient "
                    "recovery")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, needs_config in (("forward", True), ("inverse", True),
                               ("verify", True), ("selftest", False)):
        p = sub.add_parser(name)
        if needs_config:
            p.add_argument("--config", required=True)
        p.add_argument("--out", default=".")
        p.add_argument("--threads", type=int, default=None)
    args = ap.parse_args(argv)

    try:
        threads = args.threads
        if threads is None and os.environ.get("SUBDIFF_THREADS"):
            raw = os.environ["SUBDIFF_THREADS"]
            try:
                threads = int(raw)
            except ValueError:
                raise ConfigError(
                    f"SUBDIFF_THREADS={raw!r} is not an integer") from None
        if threads is not None and threads < 1:
            raise ConfigError(f"thread count must be >= 1, got {threads}")

        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "selftest":
            return _run_selftest(out)
        cfg_path = Path(args.config)
        cfg = _load_config(cfg_path)
        base = cfg_path.resolve().parent
        runner = {"forward": _run_forward, "inverse": _run_inverse,
                  "verify": _run_verify}[args.command]
        return runner(cfg, out, threads, base)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except AdmissibilityError as e:
        print(f"inadmissible problem: {e}", file=sys.stderr)
        return 3
    except ConvergenceError as e:
        print(f"failed to converge: {e}", file=sys.stderr)
        return 4
    except (DomainError, GridMismatchError, AliasingError,
            ResourceError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
