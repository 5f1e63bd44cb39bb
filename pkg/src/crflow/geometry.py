"""Model backgrounds, initial-data profiles and hypothesis checkers.

Two complete Kaehler-Einstein backgrounds are shipped, both normalized so
the Chern-Ricci form equals minus the metric:

* Poincare disc (complex dimension 1): coefficient h(r) = 2/(1-r^2)^2.
* Complex hyperbolic ball (complex dimension 2): Kaehler potential
  -(n+1)*log(1-rho) with rho = |z|^2.

Everything is rotation invariant, so a Hermitian (1,1)-form reduces to one
radial coefficient on the disc and to a (spherical, radial) eigenvalue pair
on the ball.  Arrays of such data use shape (channels, n_nodes) with the
spherical channel first; the disc has a single channel.

The grid variable is rho_hat = arctanh(r).  The chain-rule weights for the
flux-form stencils below are closed-form hyperbolic functions of rho_hat,
so no cancellation-prone 1-r^2 arithmetic appears anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .cutoff import smoothstep_quintic
from .grid import RadialGrid

KIND_DISC = "poincare_disc"
KIND_BALL = "complex_hyperbolic_ball"


class PositivityError(ValueError):
    """A metric coefficient that must be positive is not."""

    def __init__(self, message: str, node: Optional[int] = None):
        super().__init__(message)
        self.node = node


@dataclass(frozen=True)
class Background:
    """A model geometry together with its analytic hypothesis constants.

    ric_sign is the Einstein constant of theta_0 (Ric = ric_sign * theta_0);
    both shipped backgrounds have ric_sign = -1.  torsion_bound and bk_lower
    are the analytic constants entering the standing hypotheses; they are
    reported by the checkers, never assumed by the solver.
    """

    kind: str
    dim: int
    ric_sign: float
    torsion_bound: float
    bk_lower: float

    @property
    def n_channels(self) -> int:
        return 1 if self.dim == 1 else 2

    def h_channels(self, rho_hat: np.ndarray) -> np.ndarray:
        """Coefficients of theta_0 at the nodes, shape (channels, n)."""
        c = np.cosh(rho_hat)
        if self.dim == 1:
            return (2.0 * c**4)[None, :]
        m = self.dim + 1.0
        return np.stack([m * c**2, m * c**4])

    def metric_profile(self, x):
        """Closed-form metric data at the coordinate value x in [0, 1).

        Disc: x is the radius r, returns h(r) = 2/(1-r^2)^2.
        Ball: x is rho = |z|^2, returns the eigenvalue pair
        (Phi'(rho), Phi'(rho) + rho*Phi''(rho)) of the potential
        Phi = -(n+1)*log(1-rho).
        """
        x = float(x)
        if not 0.0 <= x < 1.0:
            raise ValueError(f"coordinate must lie in [0, 1), got {x}")
        if self.dim == 1:
            return 2.0 / (1.0 - x * x) ** 2
        m = self.dim + 1.0
        return (m / (1.0 - x), m / (1.0 - x) ** 2)

    def exhaustion(self, rho_hat: np.ndarray) -> np.ndarray:
        """Proper exhaustion rho(x) = sqrt(1 + rho_hat^2), smooth at the origin."""
        return np.sqrt(1.0 + np.asarray(rho_hat, dtype=float) ** 2)

    def exhaustion_bound(self, grid: RadialGrid) -> float:
        """Measured sup of |d rho|_h^2 + |i ddbar rho|_h over the grid."""
        rho = self.exhaustion(grid.nodes)
        grad2 = gradient_norm_sq(rho, grid, self)
        hess = hessian_channels(rho, grid, self.dim)
        hess_norm = np.max(np.abs(hess) / self.h_channels(grid.nodes), axis=0)
        return float(np.max(grad2[1:-1] + hess_norm[1:-1]))


def poincare_disc() -> Background:
    return Background(kind=KIND_DISC, dim=1, ric_sign=-1.0,
                      torsion_bound=0.0, bk_lower=-1.0)


def complex_hyperbolic_ball() -> Background:
    # Holomorphic bisectional curvature of the ball normalization ranges in
    # [-2/(n+1), -1/(n+1)].
    return Background(kind=KIND_BALL, dim=2, ric_sign=-1.0,
                      torsion_bound=0.0, bk_lower=-2.0 / 3.0)


def make_background(kind: str) -> Background:
    if kind == KIND_DISC:
        return poincare_disc()
    if kind == KIND_BALL:
        return complex_hyperbolic_ball()
    raise ValueError(f"unknown background kind {kind!r}")


# ---------------------------------------------------------------------------
# Discrete radial calculus.
#
# For a radial function F(rho_hat) = psi(rho), rho = tanh(rho_hat)^2, the
# eigenvalues of i ddbar F in the Euclidean frame are
#     spherical: psi'(rho)                (multiplicity n-1)
#     radial:    psi' + rho psi'' = (1/rho') d/drho_hat [ (rho/rho') F' ]
# with rho' = d rho/d rho_hat = 2 tanh sech^2 and rho/rho' = sinh(2 x)/4.
# The radial channel is discretized in flux form (nonnegative off-diagonal
# weights, second order); the spherical channel by centered differences.
# Both use the even-symmetry closure F'(0) = 0 at the origin, where the two
# channels share the limit psi'(0).
# ---------------------------------------------------------------------------


def _rho_prime(rho_hat: np.ndarray) -> np.ndarray:
    t = np.tanh(rho_hat)
    return 2.0 * t / np.cosh(rho_hat) ** 2


def _flux_weight(rho_hat: np.ndarray) -> np.ndarray:
    return np.sinh(2.0 * rho_hat) / 4.0


def hessian_radial_channel(values: np.ndarray, grid: RadialGrid) -> np.ndarray:
    """Radial eigenvalue of i ddbar F for radial F given at the nodes.

    Flux-form central differences at interior nodes, even-symmetry closure
    at the origin, one-sided second-order closure at rho_hat_max.  On the
    disc (dim 1) this is exactly d_z d_zbar F.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    if grid.n_nodes < 3 or n != grid.n_nodes:
        raise ValueError(f"need values on all {grid.n_nodes} nodes, got {n}")
    dlt = grid.spacing
    x = grid.nodes
    out = np.empty(n)
    w_half = _flux_weight(grid.half_nodes())
    rp = _rho_prime(x)
    flux = w_half * (values[1:] - values[:-1])
    out[1:-1] = (flux[1:] - flux[:-1]) / (rp[1:-1] * dlt * dlt)
    # origin: limit psi'(0) = F''(0)/2 with mirrored ghost node
    out[0] = (values[1] - values[0]) / (dlt * dlt)
    # outer node: non-flux form a F'' + b F' with one-sided stencils
    a = _flux_weight(x[-1]) / rp[-1]
    b = (np.cosh(2.0 * x[-1]) / 2.0) / rp[-1]
    fp = (3.0 * values[-1] - 4.0 * values[-2] + values[-3]) / (2.0 * dlt)
    fpp = (2.0 * values[-1] - 5.0 * values[-2] + 4.0 * values[-3] - values[-4]) / (dlt * dlt)
    out[-1] = a * fpp + b * fp
    return out


def hessian_spherical_channel(values: np.ndarray, grid: RadialGrid) -> np.ndarray:
    """Spherical eigenvalue psi'(rho) of i ddbar F for radial F."""
    values = np.asarray(values, dtype=float)
    if values.shape[0] != grid.n_nodes:
        raise ValueError("values must live on the grid nodes")
    dlt = grid.spacing
    x = grid.nodes
    rp = _rho_prime(x)
    out = np.empty(grid.n_nodes)
    out[1:-1] = (values[2:] - values[:-2]) / (2.0 * dlt * rp[1:-1])
    out[0] = (values[1] - values[0]) / (dlt * dlt)
    out[-1] = (3.0 * values[-1] - 4.0 * values[-2] + values[-3]) / (2.0 * dlt * rp[-1])
    return out


def hessian_channels(values: np.ndarray, grid: RadialGrid, dim: int) -> np.ndarray:
    """All i ddbar eigenvalue channels of a radial function, shape (C, n)."""
    rad = hessian_radial_channel(values, grid)
    if dim == 1:
        return rad[None, :]
    sph = hessian_spherical_channel(values, grid)
    return np.stack([sph, rad])


def gradient_norm_sq(values: np.ndarray, grid: RadialGrid,
                     background: Background) -> np.ndarray:
    """|dF|_h^2 = rho (F_rho)^2 / H_rad for radial F, by centered differences."""
    values = np.asarray(values, dtype=float)
    dlt = grid.spacing
    x = grid.nodes
    fp = np.empty_like(values)
    fp[1:-1] = (values[2:] - values[:-2]) / (2.0 * dlt)
    fp[0] = 0.0  # even symmetry
    fp[-1] = (3.0 * values[-1] - 4.0 * values[-2] + values[-3]) / (2.0 * dlt)
    rp = _rho_prime(x)
    rho = np.tanh(x) ** 2
    h_rad = background.h_channels(x)[-1]
    out = np.zeros_like(values)
    out[1:] = rho[1:] * (fp[1:] / rp[1:]) ** 2 / h_rad[1:]
    return out


def ric_of_metric(grid: RadialGrid, coefficients: np.ndarray) -> np.ndarray:
    """Chern-Ricci coefficients -i ddbar log det of a radial metric.

    coefficients has shape (n,) for a conformal disc metric or (2, n) for a
    ball metric given by its (spherical, radial) eigenvalue pair; the return
    value has the same shape.  Second-order accurate at interior nodes.
    """
    m = np.asarray(coefficients, dtype=float)
    if np.any(m <= 0.0):
        bad = int(np.argwhere(m <= 0.0)[0][-1])
        raise PositivityError(f"metric coefficient non-positive at node {bad}", node=bad)
    if m.ndim == 1:
        return -hessian_radial_channel(np.log(m), grid)
    if m.ndim == 2 and m.shape[0] == 2:
        n_dim = 2
        log_det = (n_dim - 1) * np.log(m[0]) + np.log(m[1])
        return -hessian_channels(log_det, grid, n_dim)
    raise ValueError(f"unsupported coefficient shape {m.shape}")


# ---------------------------------------------------------------------------
# Initial data.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InitialData:
    """Nonnegative initial form omega_0 = lambda(rho_hat) * theta_0.

    On the disc this is the general rotation-invariant conformal datum.  On
    the ball, constant lambda is the potential-increment datum
    lambda * Phi_h; non-constant profiles are admitted as Hermitian (not
    necessarily closed) data with equal eigenvalue channels.
    """

    name: str
    profile: Callable[[np.ndarray], np.ndarray]

    def lambda_values(self, grid: RadialGrid) -> np.ndarray:
        lam = np.asarray(self.profile(grid.nodes), dtype=float)
        lam = np.broadcast_to(lam, grid.nodes.shape).copy()
        if not np.all(np.isfinite(lam)):
            raise ValueError("initial profile produced non-finite values")
        return lam

    def ratio_channels(self, grid: RadialGrid, dim: int) -> np.ndarray:
        lam = self.lambda_values(grid)
        return np.tile(lam, (1 if dim == 1 else 2, 1))

    def support_intervals(self, grid: RadialGrid) -> list[tuple[float, float]]:
        """Maximal rho_hat intervals where lambda > 0 on the grid."""
        lam = self.lambda_values(grid)
        pos = lam > 0.0
        intervals = []
        start = None
        for i, p in enumerate(pos):
            if p and start is None:
                start = grid.nodes[i]
            elif not p and start is not None:
                intervals.append((float(start), float(grid.nodes[i - 1])))
                start = None
        if start is not None:
            intervals.append((float(start), float(grid.nodes[-1])))
        return intervals


def initial_preset(name: str, *, fraction: float = 0.5,
                   bump_window: tuple[float, float] = (1.0, 3.0),
                   bump_margin: float = 1.0) -> InitialData:
    """Named initial-data profiles covering the regimes under study.

    stationary        lambda = 1 (omega_0 = theta_0)
    homogeneous       lambda = fraction, spatially constant
    degenerate        lambda = 0
    bump              lambda = 1 on bump_window, C^2 taper to 0 over
                      bump_margin on both sides (compact support)
    exp_tail          lambda = exp(-rho(x)); trace grows like e^rho, the
                      profile that fails the o(rho) trace-growth test
    """
    if name == "stationary":
        return InitialData(name, lambda x: np.ones_like(x))
    if name == "homogeneous":
        if not 0.0 <= fraction <= 1.0:
            raise ValueError("fraction must lie in [0, 1]")
        return InitialData(name, lambda x, c=float(fraction): np.full_like(x, c))
    if name == "degenerate":
        return InitialData(name, lambda x: np.zeros_like(x))
    if name == "bump":
        lo, hi = bump_window
        m = bump_margin
        if not (lo > 0 and hi > lo and m > 0):
            raise ValueError("bump needs 0 < lo < hi and margin > 0")

        def lam(x, lo=lo, hi=hi, m=m):
            up = smoothstep_quintic((x - (lo - m)) / m)
            down = 1.0 - smoothstep_quintic((x - hi) / m)
            return up * down

        return InitialData(name, lam)
    if name == "exp_tail":
        return InitialData(name, lambda x: np.exp(-np.sqrt(1.0 + x * x)))
    raise ValueError(f"unknown initial preset {name!r}")


def table_profile(points: list[tuple[float, float]]) -> InitialData:
    """Piecewise-linear lambda from (rho_hat, lambda) pairs."""
    pts = sorted((float(a), float(b)) for a, b in points)
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    if np.any(ys < 0):
        raise ValueError("table lambda values must be >= 0")
    return InitialData("table", lambda x: np.interp(x, xs, ys))


# ---------------------------------------------------------------------------
# Hypothesis checkers.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HypothesisSpec:
    """Positivity-margin data (s, beta, f) for the initial-form condition."""

    s: float
    beta: float
    f_profile: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError("horizon s must be > 0")
        if not self.beta > 0:
            raise ValueError("beta must be > 0")


@dataclass(frozen=True)
class HypothesisReport:
    ratio_min: float
    beta: float
    passes_margin: bool
    exhaustion_bound: float
    bk_lower: float
    torsion_bound: float
    g0_below_h: bool
    g0_gradient_bound: float
    passed: bool

    def as_dict(self) -> dict:
        return {
            "ratio_min": self.ratio_min,
            "beta": self.beta,
            "passes_margin": self.passes_margin,
            "exhaustion_bound": self.exhaustion_bound,
            "bk_lower": self.bk_lower,
            "torsion_bound": self.torsion_bound,
            "g0_below_h": self.g0_below_h,
            "g0_gradient_bound": self.g0_gradient_bound,
            "passed": self.passed,
        }


def check_hypotheses(background: Background, init: InitialData,
                     hyp: HypothesisSpec, grid: RadialGrid) -> HypothesisReport:
    """Quantified verdicts for the standing hypotheses.

    The margin condition is evaluated pointwise as the smallest eigenvalue
    ratio of  -Ric(theta_0) + e^{-s}(omega_0 + Ric(theta_0)) + i ddbar f
    against theta_0; in the shipped symmetry classes the form is diagonal,
    so the minimum over the two scalar channels is exact.  The remaining
    hypotheses have analytic constants on the backgrounds (torsion 0,
    curvature lower bound) or are measured on the grid (exhaustion bound,
    gradient of the initial form).  A failed hypothesis yields a negative
    verdict, not an exception.
    """
    lam = init.ratio_channels(grid, background.dim)
    es = np.exp(-hyp.s)
    form = -background.ric_sign * (1.0 - es) + es * lam
    if hyp.f_profile is not None:
        f_vals = np.asarray(hyp.f_profile(grid.nodes), dtype=float)
        f_vals = np.broadcast_to(f_vals, grid.nodes.shape)
        form = form + hessian_channels(f_vals, grid, background.dim) \
            / background.h_channels(grid.nodes)
    ratio_min = float(np.min(form))
    passes_margin = ratio_min >= hyp.beta

    k_exh = background.exhaustion_bound(grid)
    lam0 = init.lambda_values(grid)
    g0_below = bool(np.max(lam0) <= 1.0 + 1e-12)
    grad = gradient_norm_sq(lam0, grid, background)
    grad_bound = float(np.sqrt(np.max(grad)))

    passed = (passes_margin and g0_below
              and np.isfinite(k_exh) and np.isfinite(grad_bound)
              and np.isfinite(background.bk_lower)
              and np.isfinite(background.torsion_bound))
    return HypothesisReport(
        ratio_min=ratio_min,
        beta=hyp.beta,
        passes_margin=passes_margin,
        exhaustion_bound=k_exh,
        bk_lower=background.bk_lower,
        torsion_bound=background.torsion_bound,
        g0_below_h=g0_below,
        g0_gradient_bound=grad_bound,
        passed=bool(passed),
    )


@dataclass(frozen=True)
class TraceGrowthReport:
    applicable: bool
    window_maxima: tuple[float, ...]
    passed: bool


# Dyadic windows must contract at least this much for tr_{g0} h = o(rho);
# 0.75 separates 1/rho-type decay (ratio ~0.5) from order-rho traces
# (ratio -> 1).
TRACE_CONTRACTION = 0.75


def tr_growth_check(init: InitialData, background: Background,
                    grid: RadialGrid) -> TraceGrowthReport:
    """Tail test of tr_{g0} h = o(rho) over the last three dyadic windows.

    Evaluates m_k = max over the window of tr_{g0}h / rho and requires each
    successive dyadic window (doubling rho_hat) to contract by the factor
    TRACE_CONTRACTION.  Not applicable when lambda vanishes somewhere on
    the tail.
    """
    lam = init.lambda_values(grid)
    rho = background.exhaustion(grid.nodes)
    rmax = grid.rho_hat_max
    edges = [rmax / 8.0, rmax / 4.0, rmax / 2.0, rmax]
    maxima = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mask = grid.window_mask(lo, hi)
        if np.any(lam[mask] <= 0.0):
            return TraceGrowthReport(False, (), False)
        trace = background.dim / lam[mask]
        maxima.append(float(np.max(trace / rho[mask])))
    ok = all(maxima[k + 1] <= TRACE_CONTRACTION * maxima[k] for k in range(2))
    return TraceGrowthReport(True, tuple(maxima), bool(ok))
