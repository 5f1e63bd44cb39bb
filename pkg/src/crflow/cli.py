"""Command-line entry point: run | sweep | check | convert.

Configurations are JSON documents validated against the schema shipped at
crflow/schemas/run_config.schema.json.  Exit codes: 0 success, 1 malformed
config or snapshot, 2 solver failure, 3 hypothesis failure, 4 no-limit
verdict from a ladder.  Every artifact embeds the config digest and the
tool version; CRFLOW_OUT sets the default output directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import diagnostics as diag
from . import serialize as ser
from ._version import __version__
from .flow import (NORMALIZED, UNNORMALIZED, HypothesisFailure, SchemeConfig,
                   StepFailure, config_digest, from_unnormalized,
                   make_problem, run, to_unnormalized)
from .geometry import (HypothesisSpec, InitialData, check_hypotheses,
                       initial_preset, make_background, table_profile)
from .grid import RadialGrid
from .ladder import (BaseRunConfig, LadderConfig, SweepResult, diagonal_limit,
                     sweep, uniformity_report)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_HYPOTHESIS = 3
EXIT_NO_LIMIT = 4

ALL_CHECKS = ("upper", "lower", "trace", "equiv", "completeness",
              "attainment", "ke", "udot-longtime", "scalar-floor",
              "identity", "comparison")


class ConfigError(ValueError):
    pass


def _schema() -> dict:
    with resources.files("crflow").joinpath(
            "schemas/run_config.schema.json").open() as fh:
        return json.load(fh)


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: line {exc.lineno}, "
                          f"column {exc.colno}: {exc.msg}") from exc
    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = ".".join(str(p) for p in err.absolute_path) or "(top level)"
        raise ConfigError(f"config field {where}: {err.message}")
    return cfg


def _build_initial(cfg: dict) -> InitialData:
    section = cfg["initial"]
    if "table" in section:
        return table_profile([tuple(p) for p in section["table"]])
    kwargs = {}
    if "fraction" in section:
        kwargs["fraction"] = section["fraction"]
    if "bump_window" in section:
        kwargs["bump_window"] = tuple(section["bump_window"])
    if "bump_margin" in section:
        kwargs["bump_margin"] = section["bump_margin"]
    return initial_preset(section["preset"], **kwargs)


def _build_pieces(cfg: dict):
    background = make_background(cfg["background"]["kind"])
    init = _build_initial(cfg)
    hyp = HypothesisSpec(s=cfg["hypothesis"]["s"], beta=cfg["hypothesis"]["beta"])
    grid = RadialGrid(cfg["grid"]["n_nodes"], cfg["grid"]["rho_hat_max"])
    scheme = SchemeConfig(**cfg.get("scheme", {}))
    return background, init, hyp, grid, scheme


def _outdir(args, cfg: dict) -> Path:
    if args.out:
        return Path(args.out)
    if cfg and cfg.get("output", {}).get("dir"):
        return Path(cfg["output"]["dir"])
    return Path(os.environ.get("CRFLOW_OUT", "crflow_out"))


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    outdir = _outdir(args, cfg)
    digest = config_digest(cfg)
    background, init, hyp, grid, scheme = _build_pieces(cfg)
    flow_cfg = cfg["flow"]
    eps = flow_cfg.get("eps", 0.0)
    rho0 = flow_cfg.get("rho0")
    kind = flow_cfg.get("kind", NORMALIZED)

    problem = make_problem(background, grid, init, eps, rho0)
    try:
        traj = run(problem, scheme, flow_cfg["horizon"],
                   must_hit=flow_cfg.get("checkpoints", ()), hyp=hyp,
                   init=init, flow=kind,
                   provenance={"config_digest": digest})
    except HypothesisFailure as exc:
        print(f"hypothesis failure: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except StepFailure as exc:
        print(f"solver failure at t={exc.t:.6g}: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    doc = ser.trajectory_to_doc(traj, hypothesis=hyp)
    ser.write_json(outdir / "trajectory.json", doc)
    ser.write_trajectory_csv(outdir / "trajectory.csv", traj)
    final = traj.states[-1]
    summary = {
        "version": __version__,
        "config_digest": digest,
        "flow": kind,
        "horizon": flow_cfg["horizon"],
        "checkpoints": len(traj.states),
        "sup_abs_u": float(np.max([np.max(np.abs(st.u)) for st in traj.states])),
        "final_min_metric_ratio": float(np.min(final.metric_ratio)),
        "max_newton_iterations": max((r.newton_iters for r in traj.steps),
                                     default=0),
    }
    ser.write_json(outdir / "summary.json", summary)
    print(f"run complete: {len(traj.states)} checkpoints -> {outdir}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        cfg = load_config(args.config)
        if "ladder" not in cfg:
            raise ConfigError("config field ladder: section is required for sweep")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    outdir = _outdir(args, cfg)
    digest = config_digest(cfg)
    background, init, hyp, grid, scheme = _build_pieces(cfg)
    lad_cfg = dict(cfg["ladder"])
    for key in ("eps_schedule", "rho_hat_max_schedule", "checkpoint_times",
                "rho0_schedule", "window", "equiv_window"):
        if key in lad_cfg and lad_cfg[key] is not None:
            lad_cfg[key] = tuple(lad_cfg[key])
    try:
        ladder = LadderConfig(**lad_cfg)
        base = BaseRunConfig(background=background, init=init, hyp=hyp,
                             scheme=scheme, n_nodes=grid.n_nodes)
        result = sweep(ladder, base, jobs=args.jobs)
    except HypothesisFailure as exc:
        print(f"hypothesis failure: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except StepFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    run_files = []
    for eps, rmax, traj in result.runs:
        name = f"traj_eps{eps:.6f}_rmax{rmax:.1f}.json"
        ser.write_json(outdir / name, ser.trajectory_to_doc(traj, hypothesis=hyp))
        run_files.append({"eps": eps, "rho_hat_max": rmax, "file": name})

    try:
        limit = diagonal_limit(result)
        limit_doc = limit.as_dict()
        no_limit = not limit.certified
    except ValueError as exc:
        limit_doc = {"certified": False, "reason": str(exc)}
        no_limit = True

    uni = uniformity_report(result)
    manifest = {
        "version": __version__,
        "config_digest": digest,
        "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "runs": run_files,
        "diagonal_limit": limit_doc,
        "uniformity": uni.as_dict(),
    }
    ser.write_json(outdir / "manifest.json", manifest)
    if no_limit:
        print("no-limit verdict: ladder differences do not contract",
              file=sys.stderr)
        return EXIT_NO_LIMIT
    print(f"sweep complete: {len(result.runs)} runs -> {outdir}; "
          f"limit certified, uniformity pass={uni.passed}")
    return EXIT_OK if uni.passed else EXIT_NO_LIMIT


def _auto_attainment_window(traj) -> tuple[float, float] | None:
    lam = traj.problem.lam
    if lam is None:
        return None
    grid = traj.problem.grid
    pos = np.min(lam, axis=0) > 0.5 * np.max(lam)
    if not np.any(pos):
        return None
    idx = np.flatnonzero(pos)
    lo, hi = grid.nodes[idx[0]], grid.nodes[idx[-1]]
    width = hi - lo
    if width <= 4 * grid.spacing:
        return None
    return (lo + 0.25 * width, hi - 0.25 * width)


def _run_check(name: str, traj, hyp) -> diag.BoundReport | dict:
    """One named diagnostic; a dict marks a not-applicable check."""
    T = traj.states[-1].t
    if name == "upper":
        return diag.upper_bounds(traj)
    if name == "lower":
        if hyp is None:
            return {"name": "potential_lower", "not_applicable":
                    "snapshot carries no hypothesis spec"}
        return diag.lower_bounds(traj, hyp)
    if name == "trace":
        if hyp is None:
            return {"name": "trace_log_bound", "not_applicable":
                    "snapshot carries no hypothesis spec"}
        s1 = min(1.0, 0.9 * hyp.s, T)
        return diag.trace_bound(traj, hyp.s, s1)
    if name == "equiv":
        s1 = min(1.0, T)
        return diag.uniform_equivalence(traj, s1 / 2.0, s1)
    if name == "completeness":
        t = 0.1 if T >= 0.1 else traj.states[len(traj.states) // 2].t
        return diag.completeness(traj, traj.state_at(t, tol=np.inf).t)
    if name == "attainment":
        window = _auto_attainment_window(traj)
        if window is None:
            return {"name": "initial_attainment", "not_applicable":
                    "no strictly positive initial region"}
        return diag.initial_attainment(traj, window)
    if name == "ke":
        return diag.ke_report(traj)
    if name == "udot-longtime":
        if T < 6.0:
            return {"name": "udot_longtime_decay", "not_applicable":
                    f"horizon {T} < 6"}
        return diag.udot_lower_longtime(traj)
    if name == "scalar-floor":
        if traj.flow != UNNORMALIZED:
            return {"name": "scalar_curvature_floor", "not_applicable":
                    "trajectory is normalized"}
        return diag.scalar_lower_unnormalized(traj)
    if name == "identity":
        if traj.flow != NORMALIZED or len(traj.states) < 3:
            return {"name": "rate_identity_residual", "not_applicable":
                    "needs a normalized run with 3+ checkpoints"}
        return diag.identity_residual(traj)
    if name == "comparison":
        st = traj.states[len(traj.states) // 2]
        rep = diag.comparison_test(np.asarray(st.metric_ratio), traj.problem,
                                   trials=100, seed=0)
        return diag.BoundReport(
            name="comparison_principle", window=(st.t, st.t),
            functional_trace=((st.t, rep.max_value),),
            sup_or_inf=rep.max_value, threshold=1e-12,
            passed=rep.passed, bound_constant=max(0.0, rep.max_value),
            details={"trials": rep.trials})
    raise ConfigError(f"unknown check {name!r}")


def cmd_check(args) -> int:
    outdir = _outdir(args, {})
    try:
        doc = ser.read_json(Path(args.trajectory))
        traj = ser.doc_to_trajectory(doc)
        hyp = ser.hypothesis_from_doc(doc)
    except (OSError, json.JSONDecodeError, ser.SnapshotError, KeyError,
            TypeError, ValueError) as exc:
        print(f"invalid snapshot: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    names = ALL_CHECKS if args.checks == "all" \
        else tuple(c.strip() for c in args.checks.split(","))
    all_pass = True
    lines = []
    for name in names:
        try:
            rep = _run_check(name, traj, hyp)
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except ValueError as exc:
            rep = {"name": name, "not_applicable": str(exc)}
        if isinstance(rep, dict):
            ser.write_json(outdir / f"report_{name}.json", rep)
            lines.append(f"{rep['name']}: not applicable ({rep['not_applicable']})")
            continue
        ser.write_report_json(outdir / f"report_{name}.json", rep)
        ser.write_report_csv(outdir / f"report_{name}.csv", rep)
        all_pass &= rep.passed
        lines.append(f"{rep.name}: {'PASS' if rep.passed else 'FAIL'} "
                     f"(value {rep.sup_or_inf:.6g})")
    print("\n".join(lines))
    return EXIT_OK if all_pass else EXIT_CONFIG


def cmd_convert(args) -> int:
    outdir = _outdir(args, {})
    try:
        doc = ser.read_json(Path(args.trajectory))
        traj = ser.doc_to_trajectory(doc)
    except (OSError, json.JSONDecodeError, ser.SnapshotError, KeyError,
            TypeError, ValueError) as exc:
        print(f"invalid snapshot: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.direction == UNNORMALIZED:
        if traj.flow == UNNORMALIZED:
            print("error: trajectory is already unnormalized", file=sys.stderr)
            return EXIT_CONFIG
        converted = to_unnormalized(traj)
    else:
        if traj.flow == NORMALIZED:
            print("error: trajectory is already normalized", file=sys.stderr)
            return EXIT_CONFIG
        converted = from_unnormalized(traj)
    out_doc = ser.trajectory_to_doc(converted)
    out_doc["meta"]["provenance"] = dict(doc["meta"].get("provenance", {}))
    ser.write_json(outdir / f"trajectory_{args.direction}.json", out_doc)
    print(f"converted -> {outdir / f'trajectory_{args.direction}.json'}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="crflow",
        description="Radial Chern-Ricci potential-flow lab")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="advance one flow from a config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a regularization ladder")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.set_defaults(func=cmd_sweep)

    p_check = sub.add_parser("check", help="evaluate diagnostics on a snapshot")
    p_check.add_argument("trajectory")
    p_check.add_argument("--checks", default="all",
                         help=f"comma list from {','.join(ALL_CHECKS)} or 'all'")
    p_check.add_argument("--out", default=None)
    p_check.set_defaults(func=cmd_check)

    p_conv = sub.add_parser("convert", help="reparametrize a snapshot")
    p_conv.add_argument("trajectory")
    p_conv.add_argument("--direction", required=True,
                        choices=[NORMALIZED, UNNORMALIZED])
    p_conv.add_argument("--out", default=None)
    p_conv.set_defaults(func=cmd_convert)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
