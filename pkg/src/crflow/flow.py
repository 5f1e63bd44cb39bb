"""Implicit time stepping for the radial potential flow.

The evolving metric is written relative to the background as ratio channels
    ratio(t) = alpha(t)/theta_0 + (i ddbar u)/theta_0,
with alpha(t) = (1 - e^{-t}) theta_0 + e^{-t} gamma_0 on the shipped
Einstein backgrounds.  One backward-Euler step solves

    (1 + dt) u - u_prev - dt * log(ratio-determinant(u)) = 0

by damped Newton iteration on a tridiagonal Jacobian; the logarithm acts as
a positivity barrier and the step-halving line search keeps every iterate
above the configured floor.  The truncated domain is closed by a Dirichlet
value at rho_hat_max given by the spatially homogeneous tail solution.

The unnormalized variant evolves phi with d phi/ds = log-ratio of
(gamma_0 + s) theta_0 + i ddbar phi and no zeroth-order term; the two are
related by s = e^t - 1 and a rescaling of the metric by e^t.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.linalg import solve_banded

from ._version import __version__
from .cutoff import ETA_C1, cutoff_eta, smoothstep_quintic  # noqa: F401  (re-export)
from .geometry import (Background, HypothesisSpec, InitialData,
                       PositivityError, check_hypotheses, hessian_channels)
from .grid import RadialGrid

NORMALIZED = "normalized"
UNNORMALIZED = "unnormalized"


class StepFailure(RuntimeError):
    """Newton did not converge or positivity could not be restored."""

    def __init__(self, message: str, t: float, residual: float):
        super().__init__(message)
        self.t = t
        self.residual = residual


class HypothesisFailure(RuntimeError):
    """A run was requested whose configured hypotheses do not hold."""


@dataclass(frozen=True)
class SchemeConfig:
    """Time ramp and Newton parameters.

    Steps follow t_{k+1} = min(ratio * t_k, t_k + dt_max) with first step
    t_min; near t = 0 the potential behaves like n*t*log(t), so uniform
    steps from zero would be wrong.
    """

    t_min: float = 1e-4
    ratio: float = 1.5
    dt_max: float = 0.05
    newton_tol: float = 1e-10
    max_newton: int = 30
    max_halvings: int = 40
    positivity_floor: float = 1e-12

    def __post_init__(self):
        if not self.t_min > 0:
            raise ValueError("t_min must be > 0")
        if not self.ratio > 1:
            raise ValueError("ratio must be > 1")
        if not (self.dt_max > 0 and self.newton_tol > 0):
            raise ValueError("dt_max and newton_tol must be > 0")


@dataclass(frozen=True)
class FlowState:
    """Immutable snapshot of the flow at one time.

    metric_ratio has shape (channels, n_nodes); for unnormalized
    trajectories u and udot hold phi and d phi/ds.
    """

    t: float
    u: np.ndarray
    udot: np.ndarray
    metric_ratio: np.ndarray
    eps: float
    rho0: Optional[float]

    def __post_init__(self):
        for name in ("u", "udot", "metric_ratio"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class StepRecord:
    t: float
    dt: float
    newton_iters: int
    residual: float


@dataclass(frozen=True)
class FlowProblem:
    """Background, grid and regularized initial data for one run."""

    background: Background
    grid: RadialGrid
    gamma: np.ndarray          # (channels, n) ratio of gamma_0 to theta_0
    lam: Optional[np.ndarray]  # (channels, n) ratio of omega_0, if known
    eps: float
    rho0: Optional[float]

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)
        if self.lam is not None:
            l = np.asarray(self.lam, dtype=float)
            l.setflags(write=False)
            object.__setattr__(self, "lam", l)

    @property
    def tail_gamma(self) -> float:
        return float(self.gamma[0, -1])


@dataclass(frozen=True)
class Trajectory:
    flow: str
    problem: FlowProblem
    scheme: SchemeConfig
    states: tuple[FlowState, ...]
    steps: tuple[StepRecord, ...]
    provenance: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return np.array([st.t for st in self.states])

    def state_at(self, t: float, tol: float = 1e-9) -> FlowState:
        times = self.times
        k = int(np.argmin(np.abs(times - t)))
        if abs(times[k] - t) > tol * max(1.0, abs(t)):
            raise KeyError(f"no recorded state at t={t}")
        return self.states[k]

    def window(self, t0: float, t1: float) -> list[FlowState]:
        return [st for st in self.states if t0 - 1e-12 <= st.t <= t1 + 1e-12]


# ---------------------------------------------------------------------------
# Regularization and the time-dependent reference form.
# ---------------------------------------------------------------------------


def regularize_initial(init: InitialData, eps: float, rho0: Optional[float],
                       background: Background, grid: RadialGrid) -> np.ndarray:
    """Ratio channels of gamma_0 = eta0*omega_0 + (1-eta0)*theta_0 + eps*theta_0.

    eta0 = cutoff_eta(rho(x)/rho0); rho0 = None disables the collar
    (eta0 = 1, gamma_0 = omega_0 + eps*theta_0).
    """
    if eps < 0:
        raise ValueError("eps must be >= 0")
    lam = init.ratio_channels(grid, background.dim)
    if rho0 is None:
        eta = np.ones(grid.n_nodes)
    else:
        if rho0 < 1:
            raise ValueError("rho0 must be >= 1")
        eta = cutoff_eta(background.exhaustion(grid.nodes) / rho0)
    return eta * lam + (1.0 - eta) + eps


def build_alpha(t: float, gamma: np.ndarray, background: Background) -> np.ndarray:
    """Ratio channels of alpha(t) = -Ric(theta_0) + e^{-t}(Ric(theta_0) + gamma_0)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    es = np.exp(-t)
    return -background.ric_sign * (1.0 - es) + es * gamma


def hessian_ratio(u: np.ndarray, grid: RadialGrid,
                  background: Background) -> np.ndarray:
    """(i ddbar u)/theta_0 per channel, matching the stepper's stencils."""
    return hessian_channels(u, grid, background.dim) \
        / background.h_channels(grid.nodes)


def state_ratio(u: np.ndarray, t: float, problem: FlowProblem,
                flow: str = NORMALIZED) -> np.ndarray:
    """Metric ratio channels exactly as the stepper stores them.

    Interior and origin nodes use the discrete Hessian of u; the boundary
    node carries the spatially homogeneous tail form.
    """
    if flow == NORMALIZED:
        alpha = build_alpha(t, problem.gamma, problem.background)
    else:
        alpha = problem.gamma - problem.background.ric_sign * t
    ratio = alpha + hessian_ratio(u, problem.grid, problem.background)
    ratio[:, -1] = alpha[:, -1]
    return ratio


def chern_laplacian_radial(u: np.ndarray, grid: RadialGrid,
                           background: Background) -> np.ndarray:
    """Chern Laplacian of u with respect to the background metric.

    Dim 1: h^{1 1bar} d_z d_zbar u.  Ball: the trace of i ddbar u against
    h, i.e. (n-1) * sph/H_sph + rad/H_rad.
    """
    ratios = hessian_ratio(u, grid, background)
    weights = _channel_weights(background.dim)
    return np.tensordot(weights, ratios, axes=(0, 0))


def _channel_weights(dim: int) -> np.ndarray:
    # log det = (n-1) log(sph) + log(rad); dim 1 has the single channel
    return np.array([1.0]) if dim == 1 else np.array([dim - 1.0, 1.0])


def ma_log_ratio(u: np.ndarray, alpha: np.ndarray, grid: RadialGrid,
                 background: Background) -> np.ndarray:
    """Pointwise log of ((alpha + i ddbar u)^n / theta_0^n)."""
    ratio = alpha + hessian_ratio(u, grid, background)
    return _log_det(ratio, background.dim)


def _log_det(ratio: np.ndarray, dim: int) -> np.ndarray:
    if np.any(ratio <= 0.0):
        bad = int(np.argwhere(ratio <= 0.0)[0][-1])
        raise PositivityError(f"metric ratio non-positive at node {bad}", node=bad)
    w = _channel_weights(dim)
    return np.tensordot(w, np.log(ratio), axes=(0, 0))


# ---------------------------------------------------------------------------
# Truncation closure.
# ---------------------------------------------------------------------------


def boundary_value(t: float, eps: float) -> float:
    """Homogeneous tail solution of udot = log(1 + eps*e^{-t}) - u, u(0) = 0.

    Evaluated as e^{-t} * integral of e^s log(1 + eps e^{-s}) by adaptive
    quadrature.  eps may be any offset > -1; the regularized tail uses
    eps >= 0.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0.0 or eps == 0.0:
        return 0.0
    val, _ = quad(lambda s: np.exp(s) * np.log1p(eps * np.exp(-s)),
                  0.0, t, epsabs=1e-12, epsrel=1e-12, limit=200)
    return float(np.exp(-t) * val)


def boundary_value_unnormalized(s: float, gamma_tail: float, dim: int) -> float:
    """Closed-form tail potential n * integral_0^s log(gamma_tail + sigma)."""
    if gamma_tail <= 0:
        raise ValueError("tail coefficient must be positive")
    g = gamma_tail
    return dim * ((g + s) * np.log(g + s) - g * np.log(g) - s)


# ---------------------------------------------------------------------------
# Newton stepper.
# ---------------------------------------------------------------------------


def _stencil(problem: FlowProblem):
    grid = problem.grid
    x = grid.nodes
    dlt = grid.spacing
    t = np.tanh(x)
    rp = 2.0 * t / np.cosh(x) ** 2
    w_half = np.sinh(2.0 * grid.half_nodes()) / 4.0
    h = problem.background.h_channels(x)
    return x, dlt, rp, w_half, h


def _jacobian_bands(ratio, dt_weight, dt, problem: FlowProblem):
    """Bands of d/du of the step residual; rows 1..n-2 interior, 0 origin.

    dt_weight is (1 + dt) for the normalized flow and 1 for the
    unnormalized one.  The final row is the Dirichlet identity.
    """
    bg = problem.background
    grid = problem.grid
    n = grid.n_nodes
    _, dlt, rp, w_half, h = _stencil(problem)
    diag = np.full(n, dt_weight)
    sup = np.zeros(n - 1)
    sub = np.zeros(n - 1)

    if bg.dim == 1:
        r = ratio[0]
        cp = w_half[1:n - 1] / (rp[1:n - 1] * dlt * dlt * h[0, 1:n - 1])
        cm = w_half[0:n - 2] / (rp[1:n - 1] * dlt * dlt * h[0, 1:n - 1])
        diag[1:n - 1] += dt * (cp + cm) / r[1:n - 1]
        sup[1:n - 1] = -dt * cp / r[1:n - 1]
        sub[0:n - 2] = -dt * cm / r[1:n - 1]
        g0 = 1.0 / (dlt * dlt * h[0, 0])
        diag[0] += dt * g0 / r[0]
        sup[0] = -dt * g0 / r[0]
    else:
        rs, rr = ratio[0], ratio[1]
        ndim = bg.dim
        i = np.arange(1, n - 1)
        sph_c = 1.0 / (2.0 * dlt * rp[i] * h[0, i])
        rad_p = w_half[i] / (rp[i] * dlt * dlt * h[1, i])
        rad_m = w_half[i - 1] / (rp[i] * dlt * dlt * h[1, i])
        dlog_up = (ndim - 1) * sph_c / rs[i] + rad_p / rr[i]
        dlog_dn = -(ndim - 1) * sph_c / rs[i] + rad_m / rr[i]
        dlog_di = -(rad_p + rad_m) / rr[i]
        diag[i] += -dt * dlog_di
        sup[i] = -dt * dlog_up
        sub[i - 1] = -dt * dlog_dn
        g0 = 1.0 / (dlt * dlt)
        dlog0 = g0 * ((ndim - 1) / (h[0, 0] * rs[0]) + 1.0 / (h[1, 0] * rr[0]))
        diag[0] += dt * dlog0
        sup[0] = -dt * dlog0

    diag[n - 1] = 1.0
    sub[n - 2] = 0.0
    return sub, diag, sup


def _solve_tridiag(sub, diag, sup, rhs):
    n = diag.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = sup
    ab[1, :] = diag
    ab[2, :-1] = sub
    return solve_banded((1, 1), ab, rhs)


def _step_once(u_prev: np.ndarray, u_guess: np.ndarray, t_new: float,
               dt: float, alpha: np.ndarray, bval: float, dt_weight: float,
               cfg: SchemeConfig, problem: FlowProblem):
    """One implicit step; returns (u, ratio, logq, newton_iters, residual)."""
    bg, grid = problem.background, problem.grid
    floor = cfg.positivity_floor

    def evaluate(u):
        ratio = alpha + hessian_ratio(u, grid, bg)
        # The Dirichlet closure models the tail as spatially homogeneous,
        # so the boundary node carries the tail form with zero Hessian.
        ratio[:, -1] = alpha[:, -1]
        if np.min(ratio) <= floor:
            return ratio, None, None, np.inf
        logq = _log_det(ratio, bg.dim)
        res_vec = dt_weight * u - u_prev - dt * logq
        res_vec[-1] = 0.0
        return ratio, logq, res_vec, float(np.max(np.abs(res_vec)))

    u = u_guess.copy()
    u[-1] = bval
    ratio, logq, res_vec, res = evaluate(u)
    if not np.isfinite(res):
        # fall back on the unpredicted previous profile
        u = u_prev.copy()
        u[-1] = bval
        ratio, logq, res_vec, res = evaluate(u)
    if not np.isfinite(res):
        raise StepFailure("infeasible initial Newton iterate", t_new, np.inf)

    iters = 0
    while res > cfg.newton_tol:
        if iters >= cfg.max_newton:
            raise StepFailure(
                f"Newton stalled at t={t_new:.6g} (residual {res:.3e})",
                t_new, res)
        sub, diag, sup = _jacobian_bands(ratio, dt_weight, dt, problem)
        delta = _solve_tridiag(sub, diag, sup, -res_vec)
        delta[-1] = 0.0
        scale = 1.0
        for _ in range(cfg.max_halvings + 1):
            trial = u + scale * delta
            t_ratio, t_logq, t_res_vec, t_res = evaluate(trial)
            if t_res < res or t_res <= cfg.newton_tol:
                u, ratio, logq, res_vec, res = trial, t_ratio, t_logq, t_res_vec, t_res
                break
            scale *= 0.5
        else:
            raise StepFailure(
                f"line search failed at t={t_new:.6g} (residual {res:.3e})",
                t_new, res)
        iters += 1

    if np.min(ratio) <= floor:
        bad = int(np.argwhere(ratio <= floor)[0][-1])
        raise PositivityError(
            f"metric ratio at floor after step to t={t_new:.6g}", node=bad)
    return u, ratio, logq, iters, res


def _advance(state: FlowState, dt: float, config: SchemeConfig,
             problem: FlowProblem, flow: str):
    """One step, with the Dirichlet tail advanced by the same implicit rule.

    The boundary node follows the backward-Euler discretization of the
    homogeneous tail ODE, so spatially constant data solves the same scalar
    recursion at every node and stays exactly constant; boundary_value is
    the continuum limit of this recursion.
    """
    t_new = state.t + dt
    weights = _channel_weights(problem.background.dim)
    if flow == NORMALIZED:
        alpha = build_alpha(t_new, problem.gamma, problem.background)
        tail_rate = float(weights @ np.log(alpha[:, -1]))
        bval = (float(state.u[-1]) + dt * tail_rate) / (1.0 + dt)
        dt_weight = 1.0 + dt
    else:
        alpha = problem.gamma - problem.background.ric_sign * t_new
        tail_rate = float(weights @ np.log(alpha[:, -1]))
        bval = float(state.u[-1]) + dt * tail_rate
        dt_weight = 1.0
    u_prev = np.asarray(state.u)
    guess = u_prev + dt * np.asarray(state.udot)
    u, ratio, logq, iters, res = _step_once(
        u_prev, guess, t_new, dt, alpha, bval, dt_weight, config, problem)
    udot = logq - u if flow == NORMALIZED else logq
    new_state = FlowState(t=t_new, u=u, udot=udot, metric_ratio=ratio,
                          eps=state.eps, rho0=state.rho0)
    return new_state, iters, res


def step(state: FlowState, dt: float, config: SchemeConfig,
         problem: FlowProblem) -> FlowState:
    """Advance one backward-Euler step of the normalized potential flow."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    return _advance(state, dt, config, problem, NORMALIZED)[0]


def step_unnormalized(state: FlowState, ds: float, config: SchemeConfig,
                      problem: FlowProblem) -> FlowState:
    """Advance the unnormalized flow d phi/ds = log-ratio(omega_0 - s Ric + i ddbar phi)."""
    if ds <= 0:
        raise ValueError("ds must be > 0")
    return _advance(state, ds, config, problem, UNNORMALIZED)[0]


# ---------------------------------------------------------------------------
# Runs.
# ---------------------------------------------------------------------------


def make_problem(background: Background, grid: RadialGrid, init: InitialData,
                 eps: float, rho0: Optional[float]) -> FlowProblem:
    gamma = regularize_initial(init, eps, rho0, background, grid)
    lam = init.ratio_channels(grid, background.dim)
    return FlowProblem(background=background, grid=grid, gamma=gamma,
                       lam=lam, eps=eps, rho0=rho0)


def time_schedule(scheme: SchemeConfig, horizon: float,
                  must_hit: Sequence[float] = ()) -> list[float]:
    """Step times of the geometric ramp, landing exactly on must_hit times."""
    if horizon <= 0:
        raise ValueError("horizon must be > 0")
    targets = sorted({float(m) for m in must_hit if 0.0 < m <= horizon})
    if not targets or targets[-1] < horizon:
        targets.append(float(horizon))
    times = [0.0]
    t = 0.0
    k = 0
    while k < len(targets):
        if targets[k] <= t * (1.0 + 1e-12):
            k += 1
            continue
        t_next = scheme.t_min if t == 0.0 else min(t * scheme.ratio, t + scheme.dt_max)
        if t_next >= targets[k] * (1.0 - 1e-12):
            t_next = targets[k]
            k += 1
        times.append(t_next)
        t = t_next
    return times


def initial_state(problem: FlowProblem, flow: str = NORMALIZED) -> FlowState:
    gamma = problem.gamma
    if np.min(gamma) <= 0.0:
        raise HypothesisFailure(
            "regularized initial data is degenerate (min gamma <= 0); "
            "use eps > 0 or the regularization ladder")
    logq = _log_det(gamma, problem.background.dim)
    u0 = np.zeros(problem.grid.n_nodes)
    udot0 = logq - u0 if flow == NORMALIZED else logq
    return FlowState(t=0.0, u=u0, udot=udot0, metric_ratio=gamma,
                     eps=problem.eps, rho0=problem.rho0)


def run(problem: FlowProblem, scheme: SchemeConfig, horizon: float,
        must_hit: Sequence[float] = (), hyp: Optional[HypothesisSpec] = None,
        init: Optional[InitialData] = None, flow: str = NORMALIZED,
        provenance: Optional[dict] = None) -> Trajectory:
    """Advance from t = 0 through the ramp to the horizon, recording each step.

    When a hypothesis spec (and the unregularized initial data) is supplied,
    the margin condition is verified first and a failure aborts the run
    before any stepping.
    """
    if flow not in (NORMALIZED, UNNORMALIZED):
        raise ValueError(f"unknown flow {flow!r}")
    if hyp is not None:
        if init is None:
            raise ValueError("hypothesis gating needs the unregularized data")
        report = check_hypotheses(problem.background, init, hyp, problem.grid)
        if not report.passed:
            detail = (f"min margin {report.ratio_min:.6g} < beta {hyp.beta:.6g}"
                      if not report.passes_margin
                      else "initial form exceeds the background")
            raise HypothesisFailure(f"hypotheses fail: {detail}")

    state = initial_state(problem, flow)
    states = [state]
    records: list[StepRecord] = []
    times = time_schedule(scheme, horizon, must_hit)
    for t_prev, t_new in zip(times[:-1], times[1:]):
        dt = t_new - t_prev
        try:
            new_state, iters, res = _advance(state, dt, scheme, problem, flow)
        except PositivityError as exc:
            raise StepFailure(f"positivity lost stepping to t={t_new:.6g}: {exc}",
                              t_new, np.nan) from exc
        records.append(StepRecord(t=t_new, dt=dt, newton_iters=iters, residual=res))
        states.append(new_state)
        state = new_state
    prov = {"package_version": __version__}
    if provenance:
        prov.update(provenance)
    return Trajectory(flow=flow, problem=problem, scheme=scheme,
                      states=tuple(states), steps=tuple(records),
                      provenance=prov)


# ---------------------------------------------------------------------------
# Normalized <-> unnormalized conversion (time reparametrization s = e^t - 1
# and metric rescaling; potential fields are carried through unchanged, so
# the round trip is the identity on them).
# ---------------------------------------------------------------------------


def to_unnormalized(traj: Trajectory) -> Trajectory:
    if traj.flow != NORMALIZED:
        raise ValueError("trajectory is already unnormalized")
    states = tuple(
        FlowState(t=float(np.expm1(st.t)), u=st.u, udot=st.udot,
                  metric_ratio=st.metric_ratio * np.exp(st.t),
                  eps=st.eps, rho0=st.rho0)
        for st in traj.states)
    return replace(traj, flow=UNNORMALIZED, states=states)


def from_unnormalized(traj: Trajectory) -> Trajectory:
    if traj.flow != UNNORMALIZED:
        raise ValueError("trajectory is already normalized")
    states = tuple(
        FlowState(t=float(np.log1p(st.t)), u=st.u, udot=st.udot,
                  metric_ratio=st.metric_ratio / (1.0 + st.t),
                  eps=st.eps, rho0=st.rho0)
        for st in traj.states)
    return replace(traj, flow=NORMALIZED, states=states)


def unnormalized_rate(state: FlowState, dim: int) -> np.ndarray:
    """d phi/ds of the converted state: u + udot + n*log(1+s)."""
    return state.u + state.udot + dim * np.log1p(state.t)


# ---------------------------------------------------------------------------
# Potential reconstruction.
# ---------------------------------------------------------------------------


def potential_integral(traj: Trajectory) -> tuple[list[np.ndarray], float]:
    """Reconstruct u(t) = e^{-t} integral_0^t e^s (udot + u) ds by trapezoid.

    Returns the reconstructed per-node values at every checkpoint and the
    sup-difference against the evolved potential.
    """
    if traj.flow != NORMALIZED:
        raise ValueError("potential reconstruction applies to the normalized flow")
    if len(traj.states) < 8:
        raise ValueError("need at least 8 checkpoints for the reconstruction")
    if traj.states[0].t != 0.0:
        raise ValueError("trajectory must start at t = 0")
    times = traj.times
    integrand = np.stack([np.exp(st.t) * (st.udot + st.u) for st in traj.states])
    rebuilt = []
    sup_diff = 0.0
    acc = np.zeros_like(traj.states[0].u)
    rebuilt.append(acc.copy())
    for k in range(1, len(times)):
        dt = times[k] - times[k - 1]
        acc = acc + 0.5 * dt * (integrand[k] + integrand[k - 1])
        u_rec = np.exp(-times[k]) * acc
        rebuilt.append(u_rec)
        sup_diff = max(sup_diff, float(np.max(np.abs(u_rec - traj.states[k].u))))
    return rebuilt, sup_diff


# ---------------------------------------------------------------------------
# Frozen-coefficient heat step, shared with the comparison-principle checks.
# ---------------------------------------------------------------------------


def step_jacobian_bands(ratio: np.ndarray, dt: float, problem: FlowProblem,
                        flow: str = NORMALIZED):
    """(sub, diag, sup) bands of the Newton matrix at a frozen metric ratio."""
    dt_weight = 1.0 + dt if flow == NORMALIZED else 1.0
    return _jacobian_bands(ratio, dt_weight, dt, problem)


def heat_bands(ratio: np.ndarray, dt: float, problem: FlowProblem):
    """Bands of I - dt * Laplacian_g at frozen metric ratio channels.

    The residual Jacobian at dt_weight 1 is exactly this matrix, since the
    derivative of the log determinant is the Chern Laplacian of the metric
    with those ratio channels.
    """
    return _jacobian_bands(ratio, 1.0, dt, problem)


def heat_step(f: np.ndarray, ratio: np.ndarray, dt: float,
              problem: FlowProblem, forcing: Optional[np.ndarray] = None) -> np.ndarray:
    """One implicit step of (d/dt - Laplacian_g) f = forcing, Dirichlet 0 tail."""
    sub, diag, sup = heat_bands(ratio, dt, problem)
    rhs = f + (0.0 if forcing is None else dt * forcing)
    rhs = np.asarray(rhs, dtype=float).copy()
    rhs[-1] = 0.0
    return _solve_tridiag(sub, diag, sup, rhs)


def config_digest(payload: dict) -> str:
    """Canonical content hash recorded in every artifact."""
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
