"""Command-line scenario runner.

Every subcommand reads an optional JSON scenario (``--config``), runs one
pipeline and writes CSV tables plus ``report.json`` into ``--out``.

Exit codes: 0 success, 2 invariant check failed, 3 numerical failure,
4 configuration error (nothing is written; the error goes to stderr).

CSV columns per subcommand:

  evolve              t, row, col, re, im, abs
  project             t, gap, n_in, n_out        (gap_profile.csv)
  defect-sweep        metric, T, value, t_argmax, status
  superadiabatic      metric, eps, value, t_argmax, status
  stability           sample, length, total_s, norm
  extended-criterion  T, value, t_argmax, bound, identity_residual, status
  transport           metric, T, value, t_argmax, status
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from pathlib import Path
from typing import Any, Optional, Sequence

import jsonschema
import numpy as np

from . import __version__
from .adiabatic import SpectralRay, defect_sweep, extended_criterion, rate_fit, resolvent_ray_profile
from .errors import AdiabaticLabError, ConfigError, InsufficientDataError, InvariantFailure
from .evolution import DEFAULT_TOL, propagate_checkpoints
from .expr import ScalarExpr
from .family import ScalarFamily, expression_family, numerical_range_bound
from .gallery import Example, get_example, list_examples
from .riesz import analytic_projection_family, track_projections
from .spectra import SpectralWindow, gap_profile, stability_probe
from .superadiabatic import build_E_chain, eps0_prime, superadiabatic_defects, superadiabatic_projection
from .transport import CrossSectionSchedule, discretize_slab, transport_adiabatic_sweep

ACTIONS = ("evolve", "project", "defect-sweep", "superadiabatic", "stability", "extended-criterion", "transport")
JOBS_ENV = "ADIABATIC_LAB_JOBS"

_number_list = {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1}
_expr = {"type": ["string", "number"]}

SCENARIO_SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "example": {"type": "string"},
        "family": {
            "type": "object",
            "additionalProperties": False,
            "required": ["entries"],
            "properties": {
                "entries": {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": _expr}},
                "label": {"type": "string"},
            },
        },
        "action": {"enum": list(ACTIONS)},
        "params": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "T": {"type": "number", "exclusiveMinimum": 0},
                "T_grid": _number_list,
                "eps_grid": _number_list,
                "t_eval": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}, "minItems": 1},
                "time_grid": {"type": "integer", "minimum": 2},
                "grid": {"type": "integer", "minimum": 5},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "d_trunc": {"type": "integer", "minimum": 3},
                "lam": {"type": "number"},
                "samples": {"type": "integer", "minimum": 1},
                "max_length": {"type": "integer", "minimum": 1},
                "metrics": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                "m": {"type": "integer", "minimum": 1},
                "analytic": {"type": "boolean"},
                "projection": {"enum": ["auto", "analytic", "riesz"]},
                "nodes": {"type": "integer", "minimum": 16},
                "window": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {
                        "kind": {"enum": ["disk", "halfplane", "targets"]},
                        "center": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                        "radius": {"type": "number", "exclusiveMinimum": 0},
                        "offset": {"type": "number"},
                        "angle": {"type": "number"},
                        "targets": {"type": "array", "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}},
                    },
                },
                "lambda": _expr,
                "theta0": {"type": "number"},
                "ray_eps": _number_list,
            },
        },
        "transport": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "a": {"type": "number", "exclusiveMinimum": 0},
                "n_x": {"type": "integer", "minimum": 8},
                "n_mu": {"type": "integer", "minimum": 4},
                "c": _expr,
                "s": _expr,
                "T_grid": _number_list,
                "method": {"enum": ["magnus", "rk"]},
                "step": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "seed": {"type": "integer", "minimum": 0},
        "output": {"type": "object", "additionalProperties": False, "properties": {"dir": {"type": "string"}}},
    },
}

TRANSPORT_DEFAULTS = {"a": 1.0, "n_x": 24, "n_mu": 8, "c": "0.6 + 0.3*t**2", "s": "1.0",
                      "T_grid": [16, 32, 64, 128, 256, 512], "method": "magnus", "step": 0.2}


# ----------------------------------------------------------------- helpers


def _jobs(arg: Optional[int]) -> int:
    env = os.environ.get(JOBS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"{JOBS_ENV} must be an integer", value=env) from None
    elif arg is not None:
        n = arg
    else:
        n = os.cpu_count() or 1
    if n < 1:
        raise ConfigError("jobs must be positive", jobs=n)
    return n


def load_scenario(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in config: {exc.msg}", line=exc.lineno) from exc
    validate_scenario(data)
    return data


def validate_scenario(data: Any) -> None:
    try:
        jsonschema.validate(data, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path)
        raise ConfigError(f"scenario invalid at '{where}': {exc.message}") from None


def _complex_pair(v) -> complex:
    return complex(v[0], v[1])


def _window_from(spec: dict) -> SpectralWindow:
    kind = spec["kind"]
    try:
        if kind == "disk":
            return SpectralWindow.disk(_complex_pair(spec.get("center", [0, 0])), spec["radius"])
        if kind == "halfplane":
            return SpectralWindow.halfplane(spec.get("offset", 0.0), spec.get("angle", 0.0))
        return SpectralWindow.target_list([_complex_pair(z) for z in spec["targets"]], spec["radius"])
    except KeyError as exc:
        raise ConfigError(f"window of kind {kind!r} needs {exc.args[0]!r}") from None


def _example_from(scn: dict) -> Example:
    params = scn.get("params", {})
    if "example" in scn and "family" in scn:
        raise ConfigError("give either 'example' or 'family', not both")
    if "example" in scn:
        kwargs = {}
        if "d_trunc" in params:
            kwargs["d_trunc"] = params["d_trunc"]
        if "lam" in params:
            kwargs["lam"] = params["lam"]
        try:
            return get_example(scn["example"], **kwargs)
        except TypeError:
            raise ConfigError(f"parameters {sorted(kwargs)} do not apply to {scn['example']}") from None
        except AdiabaticLabError as exc:
            raise ConfigError(str(exc), **exc.details) from None
    if "family" in scn:
        fam = expression_family(scn["family"]["entries"], scn["family"].get("label", "inline"))
        window = _window_from(params["window"]) if "window" in params else None
        curve = None
        if "lambda" in params:
            ex = ScalarExpr(params["lambda"])
            curve = ScalarFamily(ex, ex.derivative, ex.source)
        return Example("inline", fam.label, "inline", "open", fam, None, window, curve, params.get("theta0", 0.0))
    raise ConfigError("scenario needs 'example' or 'family'")


def _projection_for(ex: Example, params: dict, grid: int):
    mode = params.get("projection", "auto")
    window = _window_from(params["window"]) if "window" in params else ex.window
    if mode == "analytic" or (mode == "auto" and ex.projection is not None):
        if ex.projection is None:
            raise ConfigError(f"{ex.id} has no closed-form projection")
        return analytic_projection_family(ex.projection, grid)
    if window is None:
        raise ConfigError(f"{ex.id}: a spectral window is needed for Riesz tracking")
    return track_projections(ex.family, window, grid, nodes=params.get("nodes", 128))


def _fmt(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _csv(rows: list[list], header: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _clean(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else _fmt(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def _check(name: str, residual: float, limit: float) -> dict:
    residual = float(residual)
    return {"name": name, "residual": residual, "limit": float(limit), "pass": bool(residual <= limit)}


class Run:
    """Collects files and report entries; writes nothing until :meth:`commit`."""

    def __init__(self, action: str, scenario: dict, timings: bool) -> None:
        self.action = action
        self.scenario = scenario
        self.files: dict[str, str] = {}
        self.report: dict[str, Any] = {"action": action, "scenario": scenario, "version": __version__}
        self.checks: list[dict] = []
        self.timings = timings
        self.walls: dict[str, Any] = {}

    def commit(self, out: Path) -> None:
        out.mkdir(parents=True, exist_ok=True)
        self.report["checks"] = self.checks
        self.report["status"] = "ok" if all(c["pass"] for c in self.checks) else "invariant-failure"
        if self.timings:
            self.report["wall_clock"] = self.walls
        for name, text in self.files.items():
            (out / name).write_text(text, encoding="utf-8")
        (out / "report.json").write_text(json.dumps(_clean(self.report), indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ----------------------------------------------------------------- actions


def do_evolve(run: Run, scn: dict, jobs: int) -> None:
    ex = _example_from(scn)
    p = scn.get("params", {})
    T = float(p.get("T", 16.0))
    tol = float(p.get("tol", DEFAULT_TOL))
    times = sorted(set(float(t) for t in p.get("t_eval", [0.0, 0.25, 0.5, 0.75, 1.0])))
    t0 = time.perf_counter()
    Us = propagate_checkpoints(ex.family, T, times, tol=tol)
    run.walls["evolve"] = time.perf_counter() - t0
    rows = []
    for t, U in zip(times, Us):
        for i in range(U.shape[0]):
            for j in range(U.shape[1]):
                z = U[i, j]
                rows.append([t, i, j, float(z.real), float(z.imag), float(abs(z))])
    run.files["evolution.csv"] = _csv(rows, ["t", "row", "col", "re", "im", "abs"])
    run.report.update({"example": ex.id, "T": T, "tol": tol, "times": times})
    run.checks.append(_check("U(0) = I", float(np.abs(Us[0] - np.eye(ex.dim)).max()) if times[0] == 0 else 0.0, 1e-12))
    if ex.closed_form is not None:
        err = max(float(np.linalg.norm(U - ex.closed_form(T, t), 2) / max(np.linalg.norm(ex.closed_form(T, t), 2), 1e-300)) for t, U in zip(times, Us))
        run.report["closed_form_relative_error"] = err
        run.checks.append(_check("closed form", err, 1e-7))


def do_project(run: Run, scn: dict, jobs: int) -> None:
    ex = _example_from(scn)
    p = scn.get("params", {})
    grid = int(p.get("grid", 257))
    window = _window_from(p["window"]) if "window" in p else ex.window
    if window is None:
        raise ConfigError(f"{ex.id} has no spectral window; pass params.window")
    prof = gap_profile(ex.family, window, grid)
    run.files["gap_profile.csv"] = prof.to_csv()
    run.report.update({
        "example": ex.id, "min_gap": prof.min_gap, "uniform": prof.uniform,
        "crossings": prof.crossings, "accumulating": prof.accumulating, "window": window.describe(),
    })
    if prof.uniform:
        pf = track_projections(ex.family, window, grid, nodes=p.get("nodes", 128))
        run.files["projection.json"] = pf.to_json() + "\n"
        run.report["rank"] = pf.rank
        run.checks.append(_check("idempotency", pf.idempotency_defect(), 1e-8))
        if ex.projection is not None:
            an = analytic_projection_family(ex.projection, pf.grid)
            run.report["closed_form_deviation"] = float(np.abs(an.P - pf.P).max())


def do_defect_sweep(run: Run, scn: dict, jobs: int) -> None:
    ex = _example_from(scn)
    p = scn.get("params", {})
    Ts = [float(T) for T in p.get("T_grid", [2.0 ** k for k in range(4, 11)])]
    metrics = p.get("metrics", ["proj"])
    pf = _projection_for(ex, p, int(p.get("grid", 257)))
    t0 = time.perf_counter()
    tables = defect_sweep(ex.family, pf, Ts, int(p.get("time_grid", 65)), metrics,
                          lam=ex.eigencurve, tol=float(p.get("tol", DEFAULT_TOL)), jobs=jobs)
    run.walls["sweep"] = time.perf_counter() - t0
    run.files["defects.csv"] = "".join(tb.to_csv(header=(i == 0)) for i, tb in enumerate(tables))
    fits = {}
    for tb in tables:
        try:
            fits[tb.metric] = rate_fit(tb).to_dict()
        except InsufficientDataError as exc:
            fits[tb.metric] = {"error": exc.to_dict()}
    run.files["fit.json"] = json.dumps(_clean(fits), indent=2, sort_keys=True) + "\n"
    run.report.update({"example": ex.id, "tables": [tb.to_dict() for tb in tables], "fits": fits, "projection": pf.provenance})
    run.checks.append(_check("projection idempotency", pf.idempotency_defect(), 1e-8))
    run.checks.append(_check("nonnegative defects", -min([0.0] + [v for tb in tables for v in tb.values if np.isfinite(v)]), 0.0))


def do_superadiabatic(run: Run, scn: dict, jobs: int) -> None:
    ex = _example_from(scn)
    p = scn.get("params", {})
    m = int(p.get("m", 2))
    grid = int(p.get("grid", 257))
    eps_grid = [float(e) for e in p.get("eps_grid", [2.0 ** -k for k in range(3, 9)])]
    if ex.window is None and "window" not in p:
        raise ConfigError(f"{ex.id} has no spectral window; pass params.window")
    window = _window_from(p["window"]) if "window" in p else ex.window
    pf = _projection_for(ex, p, grid)
    chain = build_E_chain(ex.family, pf, m, grid, window=window, analytic=bool(p.get("analytic", False)))
    t0 = time.perf_counter()
    tables = superadiabatic_defects(ex.family, chain, eps_grid, tol=float(p.get("tol", DEFAULT_TOL)))
    run.walls["sweep"] = time.perf_counter() - t0
    run.files["super_defects.csv"] = "".join(tb.to_csv(header=(i == 0)) for i, tb in enumerate(tables))
    fits = {}
    for tb in tables:
        try:
            fits[tb.metric] = rate_fit(tb).to_dict()
        except InsufficientDataError as exc:
            fits[tb.metric] = {"error": exc.to_dict()}
    alg = chain.algebra_residuals()
    run.report.update({
        "example": ex.id, "m": m, "g": chain.g, "analytic": chain.analytic,
        "m_eps": {repr(e): chain.m_eps(e) for e in eps_grid},
        "eps0_prime_neumann": eps0_prime(chain), "algebra_residuals": alg.tolist(),
        "derivative_checks": chain.derivative_checks, "tables": [tb.to_dict() for tb in tables], "fits": fits,
    })
    run.checks.append(_check("E-chain algebra", float(alg.max()), 1e-7))
    idem = max(superadiabatic_projection(chain, e).idempotency_defect() for e in eps_grid)
    run.checks.append(_check("P_eps idempotency", idem, 1e-7))


def do_stability(run: Run, scn: dict, jobs: int) -> None:
    ex = _example_from(scn)
    p = scn.get("params", {})
    seed = int(scn.get("seed", 0))
    rep = stability_probe(ex.family, int(p.get("samples", 64)), seed, max_length=int(p.get("max_length", 16)))
    run.report.update({"example": ex.id, "stability": rep.to_dict(), "numerical_range_bound": numerical_range_bound(ex.family)})
    run.files["stability.csv"] = _csv([["omega_prime", rep.omega_prime], ["M_hat", rep.M_hat], ["omega_hat", rep.omega_hat],
                                      ["worst_norm", rep.worst_norm]], ["quantity", "value"])
    run.checks.append(_check("omega_hat <= omega_prime", rep.omega_hat - rep.omega_prime, 1e-9))


def do_extended(run: Run, scn: dict, jobs: int) -> None:
    ex = _example_from(scn)
    p = scn.get("params", {})
    if ex.eigencurve is None:
        raise ConfigError(f"{ex.id} has no eigenvalue curve; pass params.lambda for inline families")
    Ts = [float(T) for T in p.get("T_grid", [2.0 ** k for k in range(4, 11)])]
    pf = _projection_for(ex, p, int(p.get("grid", 257)))
    t0 = time.perf_counter()
    tb = extended_criterion(ex.family, ex.eigencurve, pf, Ts, int(p.get("time_grid", 65)), tol=float(p.get("tol", DEFAULT_TOL)), jobs=jobs)
    run.walls["sweep"] = time.perf_counter() - t0
    rows = [[r.param, r.value, r.t_argmax, b, res, r.status] for r, b, res in zip(tb.rows, tb.extra["bound"], tb.extra["identity_residual"])]
    run.files["extended.csv"] = _csv(rows, ["T", "value", "t_argmax", "bound", "identity_residual", "status"])
    run.report.update({"example": ex.id, "table": tb.to_dict(), "extra": tb.extra, "verdict": None})
    if "ray_eps" in p:
        ray = SpectralRay(float(p.get("theta0", ex.theta0)), tuple(p["ray_eps"]), ex.eigencurve)
        prof = resolvent_ray_profile(ex.family, ray, pf, weighted=True)
        run.files["ray_profile.csv"] = prof.to_csv()
    finite = [r for r in tb.extra["identity_residual"] if np.isfinite(r)]
    run.checks.append(_check("Duhamel identity", max(finite) if finite else 0.0, 1e-6))


def do_transport(run: Run, scn: dict, jobs: int) -> None:
    cfg = dict(TRANSPORT_DEFAULTS)
    if scn.get("example", "transport-basic") != "transport-basic":
        raise ConfigError("the transport action runs the transport-basic scenario")
    cfg.update(scn.get("transport", {}))
    disc = discretize_slab(cfg["a"], cfg["n_x"], cfg["n_mu"])
    sched = CrossSectionSchedule.from_expr(cfg["c"], cfg["s"])
    t0 = time.perf_counter()
    res = transport_adiabatic_sweep(disc, sched, cfg["T_grid"], method=cfg["method"], step=cfg["step"], jobs=jobs)
    run.walls["sweep"] = time.perf_counter() - t0
    run.walls["rows"] = res.timings
    run.files["transport.csv"] = res.table.to_csv()
    fit = res.fit.to_dict() if res.fit else None
    run.files["fit.json"] = json.dumps(_clean({"evolution": fit}), indent=2, sort_keys=True) + "\n"
    run.report.update({"transport": cfg, "table": res.table.to_dict(), "fit": fit, "min_gap": res.min_gap, "method": res.method})
    run.checks.append(_check("B idempotent", float(np.abs(disc.B @ disc.B - disc.B).max()), 1e-10))
    run.checks.append(_check("A0 dissipative", float(np.linalg.eigvalsh(0.5 * (disc.A0 + disc.A0.T)).max()), 1e-9))


DISPATCH = {
    "evolve": do_evolve,
    "project": do_project,
    "defect-sweep": do_defect_sweep,
    "superadiabatic": do_superadiabatic,
    "stability": do_stability,
    "extended-criterion": do_extended,
    "transport": do_transport,
}


# --------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adiabatic-lab",
        description="Adiabatic-theorem experiments for non-unitary evolutions.",
        epilog=__doc__.split("\n\n", 2)[2] if __doc__ else None,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, needs_out: bool = True) -> None:
        p.add_argument("--config", metavar="PATH", help="JSON scenario file")
        p.add_argument("--example", metavar="ID", help="gallery id (overrides the scenario)")
        if needs_out:
            p.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")
        p.add_argument("--jobs", type=int, default=None, help=f"worker threads (env {JOBS_ENV} overrides)")
        p.add_argument("--seed", type=int, default=None, help="random seed (stability probe)")
        p.add_argument("--timings", action="store_true", help="record wall-clock times in report.json")

    lst = sub.add_parser("list-examples", help="list the example registry")
    lst.add_argument("--json", action="store_true", help="print JSON instead of a table")
    for name in ACTIONS:
        common(sub.add_parser(name, help=f"run the {name} pipeline"))
    r = sub.add_parser("run", help="run the action named in the scenario")
    common(r)
    return parser


def _emit_error(exc: AdiabaticLabError, out: Optional[Path]) -> int:
    payload = json.dumps(_clean({"error": exc.to_dict()}), indent=2, sort_keys=True) + "\n"
    if exc.exit_code == 4 or out is None:
        sys.stderr.write(payload)
    else:
        out.mkdir(parents=True, exist_ok=True)
        (out / "error.json").write_text(payload, encoding="utf-8")
        sys.stderr.write(f"error: {exc}\n")
    return exc.exit_code


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; map them to the config code
        return 4 if exc.code not in (0, None) else 0
    if args.command == "list-examples":
        rows = list_examples()
        if args.json:
            print(json.dumps(rows, indent=2))
        else:
            print(f"{'id':<16}{'dim':>5}  {'chapter':<16}{'tag':<13}title")
            for r in rows:
                print(f"{r['id']:<16}{r['dim']:>5}  {r['chapter']:<16}{r['tag']:<13}{r['title']}")
        return 0
    out = Path(args.out)
    try:
        scn = load_scenario(args.config)
        if args.example:
            scn = dict(scn)
            scn.pop("family", None)
            scn["example"] = args.example
        if args.seed is not None:
            scn["seed"] = args.seed
        validate_scenario(scn)
        if args.command == "run":
            if "action" not in scn:
                raise ConfigError("scenario has no 'action' for the run command")
            action = scn["action"]
        else:
            action = args.command
            if scn.get("action", action) != action:
                raise ConfigError(f"scenario action {scn['action']!r} conflicts with subcommand {action!r}")
        if "output" in scn and "dir" in scn["output"] and args.out == "out":
            out = Path(scn["output"]["dir"])
        jobs = _jobs(args.jobs)
        run = Run(action, scn, args.timings)
        DISPATCH[action](run, scn, jobs)
    except AdiabaticLabError as exc:
        return _emit_error(exc, None if isinstance(exc, ConfigError) else out)
    run.commit(out)
    failed = [c for c in run.checks if not c["pass"]]
    if failed:
        err = InvariantFailure("invariant check failed", checks=failed)
        return _emit_error(err, out)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
