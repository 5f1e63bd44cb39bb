"""Quantified verdicts for the a priori estimates along a trajectory.

The analytic statements under test assert existence of constants, never
their values, so each report computes the relevant sup/inf functional,
passes on finiteness (plus any explicit threshold), and exposes an
oriented ``bound_constant`` so that a regularization ladder can check the
constants stay uniform as eps decreases.  All reports are pure functions
of the trajectory and their parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .flow import (NORMALIZED, UNNORMALIZED, FlowProblem, FlowState,
                   Trajectory, _channel_weights, heat_step,
                   step_jacobian_bands)
from .geometry import HypothesisSpec, hessian_channels, ric_of_metric

INTERIOR_MARGIN = 2  # nodes dropped at each end for curvature evaluations


@dataclass(frozen=True)
class BoundReport:
    """Named verdict with its per-checkpoint functional trace.

    bound_constant is the uniformity measure: the smallest C >= 0 for which
    the checked inequality holds with constant C on this trajectory.
    """

    name: str
    window: tuple[float, float]
    functional_trace: tuple[tuple[float, float], ...]
    sup_or_inf: float
    threshold: Optional[float]
    passed: bool
    bound_constant: float
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "window": list(self.window),
            "functional_trace": [[t, v] for t, v in self.functional_trace],
            "sup_or_inf": self.sup_or_inf,
            "threshold": self.threshold,
            "pass": bool(self.passed),
            "bound_constant": self.bound_constant,
            "details": dict(self.details),
        }


def _finite(x: float) -> bool:
    return bool(np.isfinite(x))


def _positive_states(traj: Trajectory) -> list[FlowState]:
    return [st for st in traj.states if st.t > 0.0]


def _window_of(states: Sequence[FlowState]) -> tuple[float, float]:
    return (states[0].t, states[-1].t)


def trace_of_background(state: FlowState, dim: int) -> np.ndarray:
    """tr_h g per node from the ratio channels."""
    w = _channel_weights(dim)
    return np.tensordot(w, state.metric_ratio, axes=(0, 0))


# ---------------------------------------------------------------------------
# Potential bounds.
# ---------------------------------------------------------------------------


def upper_bounds(traj: Trajectory) -> BoundReport:
    """Sup of u/min(t,1) and of udot*(e^t-1)/t over nodes and checkpoints.

    Both quantities are bounded above by a constant depending only on the
    background data; the report passes when the measured sups are finite.
    """
    states = _positive_states(traj)
    if not states:
        raise ValueError("trajectory has no positive-time checkpoints")
    trace = []
    sup_u = -np.inf
    sup_rate = -np.inf
    for st in states:
        f1 = float(np.max(st.u)) / min(st.t, 1.0)
        f2 = float(np.max(st.udot)) * np.expm1(st.t) / st.t
        sup_u = max(sup_u, f1)
        sup_rate = max(sup_rate, f2)
        trace.append((st.t, max(f1, f2)))
    sup = max(sup_u, sup_rate)
    return BoundReport(
        name="potential_upper",
        window=_window_of(states),
        functional_trace=tuple(trace),
        sup_or_inf=sup,
        threshold=None,
        passed=_finite(sup),
        bound_constant=max(0.0, sup),
        details={"sup_u_over_min_t_1": sup_u, "sup_rate_weighted": sup_rate},
    )


def lower_bounds(traj: Trajectory, hyp: HypothesisSpec,
                 s1: Optional[float] = None) -> BoundReport:
    """Inf of the potential lower envelope and of the small-time rate.

    envelope: (u - n t log(1-e^{-t})) (1-e^{-s})/t  bounded below,
    rate:     udot + u - n log t on t <= min(1, s1)  bounded below.
    """
    dim = traj.problem.background.dim
    states = _positive_states(traj)
    if not states:
        raise ValueError("trajectory has no positive-time checkpoints")
    if s1 is None:
        s1 = min(1.0, 0.9 * hyp.s, states[-1].t)
    es = 1.0 - np.exp(-hyp.s)
    inf_env = np.inf
    inf_rate = np.inf
    trace = []
    for st in states:
        t = st.t
        env = float(np.min(st.u - dim * t * np.log(-np.expm1(-t)))) * es / t
        inf_env = min(inf_env, env)
        val = env
        if t <= min(1.0, s1):
            rate = float(np.min(st.udot + st.u)) - dim * np.log(t)
            inf_rate = min(inf_rate, rate)
            val = min(env, rate)
        trace.append((t, val))
    inf = min(inf_env, inf_rate)
    return BoundReport(
        name="potential_lower",
        window=_window_of(states),
        functional_trace=tuple(trace),
        sup_or_inf=inf,
        threshold=None,
        passed=_finite(inf),
        bound_constant=max(0.0, -inf),
        details={"inf_envelope": inf_env, "inf_smalltime_rate": inf_rate,
                 "s1": s1},
    )


def trace_constant(s: float, s1: float) -> float:
    """E = (1 + s1 e^{s1-s}) / ((1-e^{-s})(1-e^{s1-s})), the trace-bound scale."""
    if not 0.0 < s1 < s:
        raise ValueError("need 0 < s1 < s")
    return float((1.0 + s1 * np.exp(s1 - s))
                 / ((1.0 - np.exp(-s)) * (1.0 - np.exp(s1 - s))))


def trace_bound(traj: Trajectory, s: float, s1: float) -> BoundReport:
    """Sup of (1-e^{-t}) log tr_h g / (E - log(1-e^{-s})) on (0, s1]."""
    E = trace_constant(s, s1)
    denom = E - np.log(-np.expm1(-s))
    dim = traj.problem.background.dim
    states = [st for st in _positive_states(traj) if st.t <= s1 + 1e-12]
    if not states:
        raise ValueError(f"no checkpoints in (0, {s1}]")
    trace = []
    sup = -np.inf
    for st in states:
        ups = trace_of_background(st, dim)
        val = float(-np.expm1(-st.t)) * float(np.max(np.log(ups))) / denom
        sup = max(sup, val)
        trace.append((st.t, val))
    return BoundReport(
        name="trace_log_bound",
        window=_window_of(states),
        functional_trace=tuple(trace),
        sup_or_inf=sup,
        threshold=None,
        passed=_finite(sup),
        bound_constant=max(0.0, sup),
        details={"E": E, "denominator": denom},
    )


def uniform_equivalence(traj: Trajectory, s0: float, s1: float) -> BoundReport:
    """Smallest C with C^{-1} h <= g(t) <= C h over the window [s0, s1]."""
    if not 0.0 < s0 < s1:
        raise ValueError("need 0 < s0 < s1")
    states = traj.window(s0, s1)
    if not states:
        raise ValueError(f"no checkpoints in [{s0}, {s1}]")
    trace = []
    sup = -np.inf
    for st in states:
        r = st.metric_ratio
        val = float(max(np.max(r), np.max(1.0 / r)))
        sup = max(sup, val)
        trace.append((st.t, val))
    return BoundReport(
        name="uniform_equivalence",
        window=(s0, s1),
        functional_trace=tuple(trace),
        sup_or_inf=sup,
        threshold=None,
        passed=_finite(sup),
        bound_constant=sup,
    )


# ---------------------------------------------------------------------------
# Completeness and initial attainment.
# ---------------------------------------------------------------------------


def completeness_slope(traj: Trajectory, t: float) -> float:
    """g(t)-length of the radial path divided by its h-length.

    The radial line element of g is sqrt(radial ratio) times that of h, so
    the slope is the dl_h-weighted average of sqrt(metric_ratio); it equals
    sqrt(c) for g = c h and stays bounded below for instantaneously
    complete flows.
    """
    st = traj.state_at(t)
    grid = traj.problem.grid
    bg = traj.problem.background
    x = grid.nodes
    h_rad = bg.h_channels(x)[-1]
    dl_h = np.sqrt(2.0 * h_rad) / np.cosh(x) ** 2  # per unit rho_hat
    ratio_rad = st.metric_ratio[-1]
    num = np.trapezoid(np.sqrt(ratio_rad) * dl_h, x)
    den = np.trapezoid(dl_h, x)
    return float(num / den)


def completeness(traj: Trajectory, t: float, kappa: float = 0.25) -> BoundReport:
    slope = completeness_slope(traj, t)
    return BoundReport(
        name="completeness_slope",
        window=(t, t),
        functional_trace=((t, slope),),
        sup_or_inf=slope,
        threshold=kappa,
        passed=_finite(slope) and slope >= kappa,
        bound_constant=slope,
        details={"rho_hat_max": traj.problem.grid.rho_hat_max},
    )


def initial_attainment(traj: Trajectory, window: tuple[float, float],
                       tol: float = 5e-3, n_checkpoints: int = 3) -> BoundReport:
    """Decay of |metric_ratio - lambda| and its finite differences on K.

    K = [window] must lie where lambda is strictly positive.  The report
    traces the sup over K of the discrepancy at the n_checkpoints earliest
    positive times; it passes when the discrepancy decreases as t drops and
    ends below tol, and the first two divided differences decrease as well.
    """
    problem = traj.problem
    if problem.lam is None:
        raise ValueError("trajectory does not carry its initial profile")
    grid = problem.grid
    mask = grid.window_mask(*window)
    if not np.any(mask):
        raise ValueError("empty comparison window")
    lam = problem.lam[:, mask]
    if np.min(lam) <= 0.0:
        raise ValueError("window is not inside the positivity set of omega_0")
    states = _positive_states(traj)[:n_checkpoints]
    if len(states) < n_checkpoints:
        raise ValueError(f"need {n_checkpoints} positive-time checkpoints")
    dlt = grid.spacing
    trace = []
    d1s, d2s = [], []
    for st in states:
        disc = st.metric_ratio[:, mask] - lam
        trace.append((st.t, float(np.max(np.abs(disc)))))
        d1s.append(float(np.max(np.abs(np.diff(disc, axis=1)))) / dlt)
        d2s.append(float(np.max(np.abs(np.diff(disc, 2, axis=1)))) / dlt**2)
    sup0 = trace[0][1]
    decreasing = all(trace[k][1] <= trace[k + 1][1] * (1.0 + 1e-9)
                     for k in range(len(trace) - 1))
    diffs_decay = (all(d1s[k] <= d1s[k + 1] * (1.0 + 1e-9) for k in range(len(d1s) - 1))
                   and all(d2s[k] <= d2s[k + 1] * (1.0 + 1e-9) for k in range(len(d2s) - 1)))
    passed = decreasing and diffs_decay and sup0 <= tol
    return BoundReport(
        name="initial_attainment",
        window=(states[0].t, states[-1].t),
        functional_trace=tuple(trace),
        sup_or_inf=sup0,
        threshold=tol,
        passed=bool(passed),
        bound_constant=sup0,
        details={"d1": d1s, "d2": d2s, "coordinate_window": list(window)},
    )


# ---------------------------------------------------------------------------
# Curvature functionals.
# ---------------------------------------------------------------------------


def _metric_coefficients(state: FlowState, problem: FlowProblem) -> np.ndarray:
    h = problem.background.h_channels(problem.grid.nodes)
    coeffs = state.metric_ratio * h
    return coeffs[0] if problem.background.dim == 1 else coeffs


def ke_residual(state: FlowState, problem: FlowProblem) -> float:
    """Sup over interior nodes of |Ric(g) + g| measured in g.

    Zero exactly for the Kaehler-Einstein limit; the finite-difference
    evaluation contributes O(spacing^2).
    """
    grid = problem.grid
    coeffs = _metric_coefficients(state, problem)
    ric = ric_of_metric(grid, coeffs)
    rel = np.abs(ric + coeffs) / coeffs
    sl = slice(INTERIOR_MARGIN, -INTERIOR_MARGIN)
    return float(np.max(np.atleast_2d(rel)[:, sl]))


def ke_report(traj: Trajectory, threshold: float = 1e-3,
              n_checkpoints: int = 8) -> BoundReport:
    states = traj.states[-n_checkpoints:]
    trace = [(st.t, ke_residual(st, traj.problem)) for st in states]
    final = trace[-1][1]
    return BoundReport(
        name="ke_residual",
        window=(states[0].t, states[-1].t),
        functional_trace=tuple(trace),
        sup_or_inf=final,
        threshold=threshold,
        passed=_finite(final) and final <= threshold,
        bound_constant=final,
    )


def scalar_curvature(state: FlowState, problem: FlowProblem) -> np.ndarray:
    """Chern scalar curvature tr_g Ric(g) per node."""
    coeffs = _metric_coefficients(state, problem)
    ric = ric_of_metric(problem.grid, coeffs)
    w = _channel_weights(problem.background.dim)
    return np.tensordot(w, np.atleast_2d(ric / coeffs), axes=(0, 0))


def scalar_lower_unnormalized(traj: Trajectory, L: Optional[float] = None,
                              allowance_factor: float = 10.0) -> BoundReport:
    """Scalar-curvature floor R(g(s)) >= max(-L, -n/s) for the unnormalized flow.

    L defaults to -min R at s = 0.  The discrete verdict allows a
    discretization slack of allowance_factor * spacing^2.
    """
    if traj.flow != UNNORMALIZED:
        raise ValueError("scalar floor applies to unnormalized trajectories")
    dim = traj.problem.background.dim
    sl = slice(INTERIOR_MARGIN, -INTERIOR_MARGIN)
    allowance = allowance_factor * traj.problem.grid.spacing ** 2
    if L is None:
        L = -float(np.min(scalar_curvature(traj.states[0], traj.problem)[sl]))
    trace = []
    worst = np.inf
    for st in traj.states:
        r_min = float(np.min(scalar_curvature(st, traj.problem)[sl]))
        floor = -L if st.t == 0.0 else max(-L, -dim / st.t)
        margin = r_min - (floor - allowance)
        worst = min(worst, margin)
        trace.append((st.t, margin))
    return BoundReport(
        name="scalar_curvature_floor",
        window=(traj.states[0].t, traj.states[-1].t),
        functional_trace=tuple(trace),
        sup_or_inf=worst,
        threshold=0.0,
        passed=_finite(worst) and worst >= 0.0,
        bound_constant=max(0.0, -worst),
        details={"L": L, "allowance": allowance},
    )


def udot_lower_longtime(traj: Trajectory) -> BoundReport:
    """Sup of max(0, -udot) e^{t/2} on [2, T]; decays for convergent flows.

    Passes when finite and non-increasing over the last dyadic window.
    """
    T = traj.states[-1].t
    if T < 6.0:
        raise ValueError("need a horizon of at least 6")
    states = traj.window(2.0, T)
    trace = []
    for st in states:
        val = float(np.max(np.maximum(0.0, -st.udot))) * np.exp(st.t / 2.0)
        trace.append((st.t, val))
    sup = max(v for _, v in trace)
    last = [v for t, v in trace if t >= T / 2.0]
    prev = [v for t, v in trace if T / 4.0 <= t < T / 2.0]
    non_increasing = max(last) <= max(prev) * (1.0 + 1e-9) if prev else True
    return BoundReport(
        name="udot_longtime_decay",
        window=(2.0, T),
        functional_trace=tuple(trace),
        sup_or_inf=sup,
        threshold=None,
        passed=_finite(sup) and non_increasing,
        bound_constant=max(0.0, sup),
        details={"last_window_sup": max(last), "previous_window_sup":
                 max(prev) if prev else None},
    )


# ---------------------------------------------------------------------------
# Evolution identity.
# ---------------------------------------------------------------------------


def identity_residual(traj: Trajectory) -> BoundReport:
    """Residual of (d/dt - Lap_g)(udot + u) = -tr_g Ric(theta_0) - n.

    Uses the stored rate v = udot + u (the log volume ratio), a three-point
    nonuniform time derivative at interior checkpoints and the Chern
    Laplacian of the evolving metric; interior nodes only.
    """
    if traj.flow != NORMALIZED:
        raise ValueError("the evolution identity is stated for the normalized flow")
    if len(traj.states) < 3:
        raise ValueError("need at least 3 consecutive checkpoints")
    problem = traj.problem
    bg, grid = problem.background, problem.grid
    w = _channel_weights(bg.dim)
    h = bg.h_channels(grid.nodes)
    sl = slice(INTERIOR_MARGIN, -INTERIOR_MARGIN)
    trace = []
    sup = -np.inf
    for k in range(1, len(traj.states) - 1):
        sm, s0, sp = traj.states[k - 1], traj.states[k], traj.states[k + 1]
        dm, dp = s0.t - sm.t, sp.t - s0.t
        vm, v0, vp = (sm.udot + sm.u), (s0.udot + s0.u), (sp.udot + sp.u)
        # nonuniform central first derivative
        dvdt = (dm * dm * vp - dp * dp * vm - (dm * dm - dp * dp) * v0) \
            / (dm * dp * (dm + dp))
        hess = hessian_channels(v0, grid, bg.dim) / (h * s0.metric_ratio)
        lap = np.tensordot(w, hess, axes=(0, 0))
        rhs = -bg.ric_sign * np.tensordot(w, 1.0 / s0.metric_ratio, axes=(0, 0)) \
            - bg.dim
        res = float(np.max(np.abs((dvdt - lap - rhs)[sl])))
        sup = max(sup, res)
        trace.append((s0.t, res))
    return BoundReport(
        name="rate_identity_residual",
        window=(traj.states[1].t, traj.states[-2].t),
        functional_trace=tuple(trace),
        sup_or_inf=sup,
        threshold=None,
        passed=_finite(sup),
        bound_constant=max(0.0, sup),
    )


def identity_order(coarse: Trajectory, fine: Trajectory) -> float:
    """Measured decay order of the identity residual under (dt, spacing) halving."""
    rc = identity_residual(coarse).sup_or_inf
    rf = identity_residual(fine).sup_or_inf
    return float(np.log2(rc / rf))


# ---------------------------------------------------------------------------
# Discrete comparison principle.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ComparisonReport:
    applicable: bool
    max_value: float
    trials: int
    passed: bool


def comparison_test(ratio: np.ndarray, problem: FlowProblem, dt: float = 0.01,
                    n_steps: int = 20, trials: int = 100, seed: int = 0,
                    with_forcing: bool = True, tol: float = 1e-12,
                    f0: Optional[np.ndarray] = None) -> ComparisonReport:
    """Evolve nonpositive data under the frozen-coefficient heat step.

    With (d/dt - Lap_g) f = forcing <= 0 and f(0) <= 0, the implicit scheme
    must keep f <= 0 up to roundoff; this is the discrete shadow of the
    parabolic comparison principle and follows from the M-matrix structure.
    A supplied f0 with positive values makes the test not applicable.
    """
    n = problem.grid.n_nodes
    rng = np.random.default_rng(seed)
    if f0 is not None and np.max(f0) > 0:
        return ComparisonReport(False, float(np.max(f0)), 0, False)
    worst = -np.inf
    done = 0
    for _ in range(trials):
        f = -rng.random(n) if f0 is None else np.asarray(f0, dtype=float).copy()
        f[-1] = 0.0
        forcing = -rng.random(n) if with_forcing else None
        for _ in range(n_steps):
            f = heat_step(f, ratio, dt, problem, forcing)
            worst = max(worst, float(np.max(f)))
        done += 1
        if f0 is not None:
            break
    return ComparisonReport(True, worst, done, worst <= tol)


@dataclass(frozen=True)
class MMatrixReport:
    offdiag_ok: bool
    diag_positive: bool
    diagonally_dominant: bool

    @property
    def passed(self) -> bool:
        return self.offdiag_ok and self.diag_positive and self.diagonally_dominant


def m_matrix_pattern(ratio: np.ndarray, dt: float, problem: FlowProblem,
                     flow: str = NORMALIZED) -> MMatrixReport:
    """Sign pattern of the linearized step operator at a frozen state."""
    sub, diag, sup = step_jacobian_bands(ratio, dt, problem, flow)
    off_ok = bool(np.all(sub <= 0.0) and np.all(sup <= 0.0))
    diag_pos = bool(np.all(diag > 0.0))
    row = diag.copy()
    row[:-1] -= np.abs(sup)
    row[1:] -= np.abs(sub)
    return MMatrixReport(off_ok, diag_pos, bool(np.all(row >= -1e-14)))


# ---------------------------------------------------------------------------
# Uniformity across a regularization ladder.
# ---------------------------------------------------------------------------


def uniformity_factor(values: Sequence[float], floor: float = 1.0) -> float:
    """Worst constant over the ladder relative to the largest-eps one.

    values are bound_constants ordered from the largest eps downwards.  The
    reference is clamped to the floor (default the unit scale): a constant
    below 1 certifies its inequality at unit strength, so sub-unit
    fluctuation is not evidence of eps-degeneracy, while genuine blow-up of
    O(1) constants is still caught.  The factor is reported as >= 1.
    """
    ref = max(values[0], floor)
    return float(max(1.0, max(values) / ref))
