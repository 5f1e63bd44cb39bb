"""Regularization ladders: (eps, rho_hat_max) sweeps and the diagonal limit.

A sweep runs the flow for every pair of a decreasing eps schedule and an
increasing truncation-radius schedule, keeping the grid spacing fixed.  The
diagonal limit interpolates all runs onto a common comparison window and
certifies a limit candidate only when the successive sup-differences
contract geometrically in both ladder directions; uniformity reports check
that the measured bound constants stay within a fixed factor of the
largest-eps run.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from . import diagnostics as diag
from .flow import (HypothesisFailure, SchemeConfig, StepFailure, Trajectory,
                   make_problem, run)
from .geometry import Background, HypothesisSpec, InitialData, check_hypotheses
from .grid import RadialGrid

# Successive ladder differences must shrink by at least this factor to
# certify convergence rather than stagnation.
CONTRACTION_GATE = 2.0


@dataclass(frozen=True)
class LadderConfig:
    eps_schedule: tuple[float, ...] = (1e-1, 1e-2, 1e-3)
    rho_hat_max_schedule: tuple[float, ...] = (10.0, 20.0, 40.0)
    rho0_schedule: Optional[tuple[float, ...]] = None  # default rho_hat_max/4
    checkpoint_times: tuple[float, ...] = (1e-4, 1e-3, 2e-3, 4e-3, 1e-2,
                                           0.1, 0.5, 1.0)
    horizon: float = 1.0
    window: tuple[float, float] = (0.0, 5.0)
    cauchy_tol: float = 1e-3
    uniformity_gate: float = 1.25
    # uniform-equivalence constants are multiplicative (always >= 1), so the
    # gate compares them on a window clear of the initial layer
    equiv_window: tuple[float, float] = (0.5, 1.0)
    s1: float = 1.0

    def __post_init__(self):
        eps = self.eps_schedule
        if len(eps) < 1 or any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("eps schedule must be strictly decreasing")
        if any(e <= 0 for e in eps):
            raise ValueError("eps schedule must be positive")
        rmx = self.rho_hat_max_schedule
        if any(b <= a for a, b in zip(rmx, rmx[1:])):
            raise ValueError("rho_hat_max schedule must be strictly increasing")
        if self.rho0_schedule is not None \
                and len(self.rho0_schedule) != len(rmx):
            raise ValueError("rho0 schedule must match rho_hat_max schedule")
        if not self.window[0] < self.window[1] <= rmx[0]:
            raise ValueError("comparison window must lie inside the smallest domain")

    def rho0_for(self, level: int) -> float:
        if self.rho0_schedule is not None:
            return self.rho0_schedule[level]
        return self.rho_hat_max_schedule[level] / 4.0


@dataclass(frozen=True)
class BaseRunConfig:
    background: Background
    init: InitialData
    hyp: HypothesisSpec
    scheme: SchemeConfig
    n_nodes: int  # at the smallest rho_hat_max; spacing is held fixed


@dataclass(frozen=True)
class SweepResult:
    ladder: LadderConfig
    base: BaseRunConfig
    runs: tuple[tuple[float, float, Trajectory], ...]  # (eps, rho_hat_max, traj)

    def get(self, eps: float, rho_hat_max: float) -> Trajectory:
        for e, r, traj in self.runs:
            if e == eps and r == rho_hat_max:
                return traj
        raise KeyError((eps, rho_hat_max))

    @property
    def finest(self) -> Trajectory:
        return self.get(self.ladder.eps_schedule[-1],
                        self.ladder.rho_hat_max_schedule[-1])


def _grid_for(ladder: LadderConfig, base: BaseRunConfig, level: int) -> RadialGrid:
    r0 = ladder.rho_hat_max_schedule[0]
    rmax = ladder.rho_hat_max_schedule[level]
    n = int(round((base.n_nodes - 1) * rmax / r0)) + 1
    return RadialGrid(n, rmax)


def sweep(ladder: LadderConfig, base: BaseRunConfig, jobs: int = 1) -> SweepResult:
    """Run every (eps, rho_hat_max) pair; deterministic output ordering.

    The hypothesis gate runs once per grid before any stepping; a failed
    gate or a failed run aborts the sweep with the offending ladder point
    attached.
    """
    grids = [_grid_for(ladder, base, k)
             for k in range(len(ladder.rho_hat_max_schedule))]
    for grid in grids:
        report = check_hypotheses(base.background, base.init, base.hyp, grid)
        if not report.passed:
            raise HypothesisFailure(
                f"hypothesis gate failed on grid rho_hat_max={grid.rho_hat_max}: "
                f"min margin {report.ratio_min:.6g}, beta {base.hyp.beta:.6g}, "
                f"g0<=h {report.g0_below_h}")

    tasks = []
    for k, rmax in enumerate(ladder.rho_hat_max_schedule):
        for eps in ladder.eps_schedule:
            tasks.append((eps, rmax, grids[k], ladder.rho0_for(k)))

    def run_one(task):
        eps, rmax, grid, rho0 = task
        problem = make_problem(base.background, grid, base.init, eps, rho0)
        try:
            return run(problem, base.scheme, ladder.horizon,
                       must_hit=ladder.checkpoint_times)
        except StepFailure as exc:
            raise StepFailure(
                f"ladder point eps={eps}, rho_hat_max={rmax}: {exc}",
                exc.t, exc.residual) from exc

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_one, tasks))
    else:
        results = [run_one(t) for t in tasks]
    runs = tuple((t[0], t[1], traj) for t, traj in zip(tasks, results))
    return SweepResult(ladder=ladder, base=base, runs=runs)


# ---------------------------------------------------------------------------
# Diagonal limit.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LimitResult:
    certified: bool
    eps_diffs: tuple[float, ...]
    rho_diffs: tuple[float, ...]
    window_nodes: np.ndarray
    times: tuple[float, ...]
    limit_u: dict = field(default_factory=dict)  # t -> window profile
    limit_key: tuple[float, float] = (np.nan, np.nan)

    def as_dict(self) -> dict:
        return {
            "certified": bool(self.certified),
            "eps_diffs": list(self.eps_diffs),
            "rho_diffs": list(self.rho_diffs),
            "times": list(self.times),
            "limit_key": {"eps": self.limit_key[0],
                          "rho_hat_max": self.limit_key[1]},
        }


def _window_profile(traj: Trajectory, t: float, x_win: np.ndarray) -> np.ndarray:
    st = traj.state_at(t)
    grid = traj.problem.grid
    return CubicSpline(grid.nodes, np.asarray(st.u))(x_win)


def _contracts(diffs: list[float], tol: float) -> bool:
    for a, b in zip(diffs, diffs[1:]):
        if a <= tol and b <= tol:
            continue
        if b > a / CONTRACTION_GATE:
            return False
    return True


def diagonal_limit(sweeped: SweepResult) -> LimitResult:
    """Cauchy certificate for the joint eps -> 0, rho_hat_max -> inf limit.

    Interpolates every run onto the comparison window of the coarsest grid,
    forms successive sup-differences in eps (at the largest domain) and in
    rho_hat_max (at the smallest eps), and emits the finest run as the
    limit candidate iff both sequences contract by the gate factor per
    level or sit below the Cauchy tolerance.
    """
    ladder = sweeped.ladder
    if len(ladder.eps_schedule) < 3 or len(ladder.rho_hat_max_schedule) < 2:
        raise ValueError("need at least 3 eps levels and 2 domain levels")
    coarse_grid = sweeped.runs[0][2].problem.grid
    mask = coarse_grid.window_mask(*ladder.window)
    x_win = coarse_grid.nodes[mask]
    times = tuple(t for t in ladder.checkpoint_times
                  if t >= sweeped.base.scheme.t_min)

    rmax_top = ladder.rho_hat_max_schedule[-1]
    eps_min = ladder.eps_schedule[-1]

    eps_diffs = []
    for e_a, e_b in zip(ladder.eps_schedule, ladder.eps_schedule[1:]):
        worst = 0.0
        for t in times:
            pa = _window_profile(sweeped.get(e_a, rmax_top), t, x_win)
            pb = _window_profile(sweeped.get(e_b, rmax_top), t, x_win)
            worst = max(worst, float(np.max(np.abs(pa - pb))))
        eps_diffs.append(worst)

    rho_diffs = []
    for r_a, r_b in zip(ladder.rho_hat_max_schedule,
                        ladder.rho_hat_max_schedule[1:]):
        worst = 0.0
        for t in times:
            pa = _window_profile(sweeped.get(eps_min, r_a), t, x_win)
            pb = _window_profile(sweeped.get(eps_min, r_b), t, x_win)
            worst = max(worst, float(np.max(np.abs(pa - pb))))
        rho_diffs.append(worst)

    certified = _contracts(eps_diffs, ladder.cauchy_tol) \
        and _contracts(rho_diffs, ladder.cauchy_tol)

    limit_u = {}
    if certified:
        finest = sweeped.finest
        for t in times:
            limit_u[t] = _window_profile(finest, t, x_win)
    return LimitResult(certified=certified, eps_diffs=tuple(eps_diffs),
                       rho_diffs=tuple(rho_diffs), window_nodes=x_win,
                       times=times, limit_u=limit_u,
                       limit_key=(eps_min, rmax_top))


# ---------------------------------------------------------------------------
# Uniformity of the bound constants across the eps ladder.
# ---------------------------------------------------------------------------

UNIFORM_CHECKS = ("potential_upper", "potential_lower", "trace_log_bound",
                  "uniform_equivalence")


@dataclass(frozen=True)
class UniformityReport:
    factors: dict
    gate: float
    passed: bool

    def as_dict(self) -> dict:
        return {"factors": dict(self.factors), "gate": self.gate,
                "pass": bool(self.passed)}


def _bound_reports(traj: Trajectory, base: BaseRunConfig,
                   ladder: LadderConfig) -> dict:
    s = base.hyp.s
    s1 = min(ladder.s1, 0.99 * s)
    return {
        "potential_upper": diag.upper_bounds(traj),
        "potential_lower": diag.lower_bounds(traj, base.hyp, s1=s1),
        "trace_log_bound": diag.trace_bound(traj, s, s1),
        "uniform_equivalence": diag.uniform_equivalence(traj,
                                                        *ladder.equiv_window),
    }


def uniformity_report(sweeped: SweepResult) -> UniformityReport:
    """Per-check worst/largest-eps factor of the bound constants.

    For each domain level the constants are collected along the eps
    schedule (largest first); the factor is their worst value relative to
    the largest-eps one, and every check must stay within the gate.
    """
    ladder = sweeped.ladder
    factors: dict[str, float] = {name: 1.0 for name in UNIFORM_CHECKS}
    for rmax in ladder.rho_hat_max_schedule:
        values: dict[str, list[float]] = {name: [] for name in UNIFORM_CHECKS}
        for eps in ladder.eps_schedule:
            reports = _bound_reports(sweeped.get(eps, rmax), sweeped.base, ladder)
            for name in UNIFORM_CHECKS:
                if not reports[name].passed:
                    return UniformityReport(
                        factors={name: float("inf")}, gate=ladder.uniformity_gate,
                        passed=False)
                values[name].append(reports[name].bound_constant)
        for name in UNIFORM_CHECKS:
            factors[name] = max(factors[name],
                                diag.uniformity_factor(values[name]))
    passed = all(f <= ladder.uniformity_gate for f in factors.values())
    return UniformityReport(factors=factors, gate=ladder.uniformity_gate,
                            passed=bool(passed))
