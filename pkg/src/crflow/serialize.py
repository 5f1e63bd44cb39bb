"""JSON snapshot and CSV trace formats for trajectories and reports.

A trajectory document is

    {"meta": {...}, "checkpoints": [{t, eps, rho0, grid, u, udot,
                                     metric_ratio}, ...]}

with metric_ratio a flat list on the disc and a [spherical, radial] pair of
lists on the ball.  Numeric fields round-trip exactly (json uses the
shortest representation that does).  CSV traces use the fixed column order
t, node, rho_hat, u, udot, metric_ratio (the ball emits metric_ratio_sph
and metric_ratio_rad instead of the single column).
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable

import numpy as np

from ._version import __version__
from .diagnostics import BoundReport
from .flow import (FlowProblem, FlowState, SchemeConfig, Trajectory)
from .geometry import HypothesisSpec, make_background
from .grid import RadialGrid


def _ratio_payload(arr: np.ndarray) -> list:
    a = np.asarray(arr)
    return a[0].tolist() if a.shape[0] == 1 else [a[0].tolist(), a[1].tolist()]


def _ratio_from_payload(payload) -> np.ndarray:
    arr = np.asarray(payload, dtype=float)
    return arr[None, :] if arr.ndim == 1 else arr


def state_to_doc(state: FlowState, grid: RadialGrid) -> dict:
    return {
        "t": state.t,
        "eps": state.eps,
        "rho0": state.rho0,
        "grid": {"n_nodes": grid.n_nodes, "rho_hat_max": grid.rho_hat_max},
        "u": np.asarray(state.u).tolist(),
        "udot": np.asarray(state.udot).tolist(),
        "metric_ratio": _ratio_payload(state.metric_ratio),
    }


def trajectory_to_doc(traj: Trajectory,
                      hypothesis: HypothesisSpec | None = None) -> dict:
    problem = traj.problem
    grid = problem.grid
    meta = {
        "version": __version__,
        "flow": traj.flow,
        "background": {"kind": problem.background.kind,
                       "dim": problem.background.dim},
        "grid": {"n_nodes": grid.n_nodes, "rho_hat_max": grid.rho_hat_max},
        "eps": problem.eps,
        "rho0": problem.rho0,
        "gamma": _ratio_payload(problem.gamma),
        "lambda": None if problem.lam is None else _ratio_payload(problem.lam),
        "hypothesis": None if hypothesis is None
        else {"s": hypothesis.s, "beta": hypothesis.beta},
        "scheme": {
            "t_min": traj.scheme.t_min, "ratio": traj.scheme.ratio,
            "dt_max": traj.scheme.dt_max, "newton_tol": traj.scheme.newton_tol,
            "max_newton": traj.scheme.max_newton,
            "max_halvings": traj.scheme.max_halvings,
            "positivity_floor": traj.scheme.positivity_floor,
        },
        "provenance": dict(traj.provenance),
    }
    return {"meta": meta,
            "checkpoints": [state_to_doc(st, grid) for st in traj.states]}


class SnapshotError(ValueError):
    """The snapshot document is malformed or inconsistent."""


def validate_trajectory_doc(doc: dict) -> None:
    try:
        meta = doc["meta"]
        checkpoints = doc["checkpoints"]
        n = int(meta["grid"]["n_nodes"])
    except (KeyError, TypeError) as exc:
        raise SnapshotError(f"missing snapshot field: {exc}") from exc
    if not checkpoints:
        raise SnapshotError("snapshot has no checkpoints")
    t_prev = -np.inf
    for k, cp in enumerate(checkpoints):
        for fld in ("t", "u", "udot", "metric_ratio"):
            if fld not in cp:
                raise SnapshotError(f"checkpoint {k} lacks field {fld!r}")
        if len(cp["u"]) != n or len(cp["udot"]) != n:
            raise SnapshotError(f"checkpoint {k} has wrong array length")
        ratio = _ratio_from_payload(cp["metric_ratio"])
        if ratio.shape[-1] != n:
            raise SnapshotError(f"checkpoint {k} metric_ratio has wrong length")
        if not np.all(np.isfinite(ratio)):
            raise SnapshotError(f"checkpoint {k} metric_ratio is not finite")
        if cp["t"] > 0 and np.min(ratio) <= 0:
            raise SnapshotError(
                f"checkpoint {k} has non-positive metric_ratio at t > 0")
        if cp["t"] <= t_prev:
            raise SnapshotError("checkpoint times are not increasing")
        t_prev = cp["t"]


def doc_to_trajectory(doc: dict) -> Trajectory:
    validate_trajectory_doc(doc)
    meta = doc["meta"]
    background = make_background(meta["background"]["kind"])
    grid = RadialGrid(int(meta["grid"]["n_nodes"]),
                      float(meta["grid"]["rho_hat_max"]))
    lam = meta.get("lambda")
    problem = FlowProblem(
        background=background, grid=grid,
        gamma=_ratio_from_payload(meta["gamma"]),
        lam=None if lam is None else _ratio_from_payload(lam),
        eps=float(meta["eps"]),
        rho0=None if meta["rho0"] is None else float(meta["rho0"]))
    scheme = SchemeConfig(**meta["scheme"])
    states = tuple(
        FlowState(t=float(cp["t"]), u=np.asarray(cp["u"], dtype=float),
                  udot=np.asarray(cp["udot"], dtype=float),
                  metric_ratio=_ratio_from_payload(cp["metric_ratio"]),
                  eps=float(cp["eps"]), rho0=None if cp["rho0"] is None
                  else float(cp["rho0"]))
        for cp in doc["checkpoints"])
    return Trajectory(flow=meta["flow"], problem=problem, scheme=scheme,
                      states=states, steps=(),
                      provenance=dict(meta.get("provenance", {})))


def hypothesis_from_doc(doc: dict) -> HypothesisSpec | None:
    hyp = doc["meta"].get("hypothesis")
    if hyp is None:
        return None
    return HypothesisSpec(s=float(hyp["s"]), beta=float(hyp["beta"]))


def write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def read_json(path: Path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def trajectory_csv_rows(traj: Trajectory) -> Iterable[list]:
    grid = traj.problem.grid
    two_channel = traj.problem.background.dim > 1
    if two_channel:
        yield ["t", "node", "rho_hat", "u", "udot",
               "metric_ratio_sph", "metric_ratio_rad"]
    else:
        yield ["t", "node", "rho_hat", "u", "udot", "metric_ratio"]
    for st in traj.states:
        ratio = np.asarray(st.metric_ratio)
        for i in range(grid.n_nodes):
            row = [st.t, i, grid.nodes[i], st.u[i], st.udot[i]]
            if two_channel:
                row += [ratio[0, i], ratio[1, i]]
            else:
                row.append(ratio[0, i])
            yield row


def write_trajectory_csv(path: Path, traj: Trajectory) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerows(trajectory_csv_rows(traj))


def write_report_json(path: Path, report: BoundReport) -> None:
    write_json(path, report.as_dict())


def write_report_csv(path: Path, report: BoundReport) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "t", "value", "threshold", "pass"])
        for t, v in report.functional_trace:
            writer.writerow([report.name, t, v,
                             "" if report.threshold is None else report.threshold,
                             report.passed])
