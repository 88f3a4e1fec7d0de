"""Closed forms and the integral equation for the jump-crossing transform.

Everything here concerns the mean-reverting diffusion (beta < 0) with
upward exponential jumps below a constant barrier a. The object of
interest is the discounted probability of crossing by a jump,

    G_q(x) = E_x[ exp(-q tau) ; crossing happens with strict overshoot ],

together with its q = 0 value and derivative. The derivative w_q = G_q'
solves a second-order equation driven by an exponential integral term;
pulling the integral through turns it into a fixed-point problem

    w_q = w0 + eta * q * (Green kernel applied to the tail integral of w_q)

whose q = 0 solution is the closed form w0. The homogeneous solutions of
the underlying operator are parabolic cylinder functions in a gauge that
removes the first-order term: psi decays to the left and picks out the
bounded solution, chi satisfies the reflecting (Robin) condition at the
barrier. All basis values are handled in log space because chi grows like
exp(2 p(x) - eta x) far below the barrier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ResonanceError, StructuralError
from .quad import composite_gl, fd_derivative
from .simulate import ModelParams
from .weber import WeberContext, log_pcf_d, log_pcf_d_batch, make_context

_LOG_EPS = math.log(1e-12)
_RESONANCE_FLOOR = math.log(1e-10)


def _as_batch(g: Callable, xs: np.ndarray) -> np.ndarray:
    """Call g vectorised if it supports arrays, else pointwise."""
    try:
        out = np.asarray(g(xs), dtype=float)
        if out.shape == xs.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.array([float(g(float(v))) for v in xs])


@dataclass(eq=False)
class HomogeneousBasis:
    """Log-space basis pair for the gauge-reduced operator at discount q.

    psi_q decays like exp(eta x) to the left; chi_q is the combination
    annihilated by the Robin boundary operator at the barrier. wronskian(x)
    is psi chi' - psi' chi, computed once at the barrier and propagated by
    Abel's identity (it is a constant times exp(2 p(x))). boundary_psi is
    the Robin operator applied to psi_q at the barrier, and ratio is the
    coefficient of psi inside chi.
    """

    params: ModelParams
    q: float
    ctx: WeberContext
    ratio: float
    log_ratio: float
    log_wronskian_scale: float  # log(-W(x) e^{-2p(x)}), W itself is negative
    boundary_psi: float

    def log_psi(self, x) -> np.ndarray:
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = self.ctx.p(xs) + log_pcf_d_batch(self.ctx.nu_q, self.ctx.z(xs))
        return out if np.ndim(x) else out[0]

    def log_chi(self, x) -> np.ndarray:
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        zs = self.ctx.z(xs)
        direct = log_pcf_d_batch(self.ctx.nu_q, -zs)
        mixed = self.log_ratio + log_pcf_d_batch(self.ctx.nu_q, zs)
        out = self.ctx.p(xs) + np.logaddexp(direct, mixed)
        return out if np.ndim(x) else out[0]

    def psi_q(self, x):
        return np.exp(self.log_psi(x))

    def chi_q(self, x):
        return np.exp(self.log_chi(x))

    def wronskian(self, x):
        xs = np.asarray(x, dtype=float)
        return -np.exp(self.log_wronskian_scale + 2.0 * self.ctx.p(xs))

    def psi_prime(self, x) -> float:
        """d psi_q / dx by the exact cylinder-function derivative rule."""
        ctx = self.ctx
        z = ctx.z(x)
        A = ctx.p_prime(x) + 0.5 * ctx.z1 * z
        d0 = math.exp(log_pcf_d(ctx.nu_q, z))
        d1 = math.exp(log_pcf_d(ctx.nu_q + 1.0, z))
        return math.exp(ctx.p(x)) * (A * d0 - ctx.z1 * d1)

    def chi_prime(self, x) -> float:
        ctx = self.ctx
        z = ctx.z(x)
        A = ctx.p_prime(x) + 0.5 * ctx.z1 * z
        d0p = math.exp(log_pcf_d(ctx.nu_q, z))
        d1p = math.exp(log_pcf_d(ctx.nu_q + 1.0, z))
        d0m = math.exp(log_pcf_d(ctx.nu_q, -z))
        d1m = math.exp(log_pcf_d(ctx.nu_q + 1.0, -z))
        return math.exp(ctx.p(x)) * (
            A * (d0m + self.ratio * d0p)
            + ctx.z1 * d1m - self.ratio * ctx.z1 * d1p)


def robin_operator(params: ModelParams, value_at_a: float,
                   deriv_at_a: float) -> float:
    """0.5 sigma^2 w'(a-) + (alpha + beta a) w(a-), the barrier-side form."""
    return 0.5 * params.sigma ** 2 * deriv_at_a \
        + (params.alpha + params.beta * params.a) * value_at_a


def homogeneous_basis(params: ModelParams, q: float) -> HomogeneousBasis:
    ctx = make_context(params, q)
    za = ctx.z(params.a)
    nu = ctx.nu_q
    l_d1_pos = log_pcf_d(nu + 1.0, za)
    l_d1_neg = log_pcf_d(nu + 1.0, -za)
    if l_d1_pos - max(l_d1_pos, l_d1_neg) < _RESONANCE_FLOOR:
        raise ResonanceError(
            f"barrier-side cylinder value vanishes at index {nu + 1.0!r}; "
            "the Robin combination is not well conditioned here")
    log_ratio = l_d1_neg - l_d1_pos
    l_d0_pos = log_pcf_d(nu, za)
    l_d0_neg = log_pcf_d(nu, -za)
    # Wronskian at the barrier splits off exp(2p); both cross terms positive
    log_scale = math.log(-ctx.z1) + np.logaddexp(
        l_d0_pos + l_d1_neg, l_d0_neg + l_d1_pos)
    basis = HomogeneousBasis(params, float(q), ctx, math.exp(log_ratio),
                             float(log_ratio), float(log_scale), 0.0)
    basis.boundary_psi = robin_operator(
        params, float(basis.psi_q(params.a)), basis.psi_prime(params.a))
    return basis


# ---------------------------------------------------------------------------
# closed forms at q = 0 and the inhomogeneous seed for general q

def _log_w0_batch(params: ModelParams, q: float, xs: np.ndarray) -> np.ndarray:
    """log |w0(x)|; w0 itself is negative (the transform decreases in x)."""
    ctx = make_context(params, q)
    a = params.a
    la = log_pcf_d(ctx.nu_q + 1.0, ctx.z(a))
    pref = math.log(math.sqrt(2.0) * params.lam
                    / (params.sigma * math.sqrt(ctx.b)))
    return pref + ctx.p(xs) - ctx.p(a) \
        + log_pcf_d_batch(ctx.nu_q, ctx.z(xs)) - la


def w0_term(params: ModelParams, q: float, x: float) -> float:
    """Seed of the fixed point: the exact w_q for q = 0, evaluated at x."""
    return -float(np.exp(_log_w0_batch(params, float(q), np.array([float(x)]))[0]))


def g0_prime(params: ModelParams, x: float) -> float:
    """Derivative in x of the undiscounted jump-crossing probability."""
    if x > params.a:
        raise StructuralError(f"x = {x!r} must not exceed the barrier")
    return w0_term(params, 0.0, x)


def g0(params: ModelParams, x: float, rtol: float = 1e-12) -> float:
    """Undiscounted probability that the crossing happens by a jump."""
    if x > params.a:
        raise StructuralError(f"x = {x!r} must not exceed the barrier")
    if x == params.a:
        return 0.0

    def integrand(ys):
        return np.exp(_log_w0_batch(params, 0.0, np.asarray(ys)))

    return composite_gl(integrand, x, params.a, rtol=rtol)


def g0_profile(params: ModelParams, grid: Sequence[float]) -> np.ndarray:
    """g0 at each grid point, by cumulative per-cell quadrature from the barrier.

    The grid must be increasing and end at the barrier. Each cell uses a
    two-point Gauss rule on the closed-form integrand, so the profile is an
    integration route independent of any interpolation of w0.
    """
    xs = np.asarray(grid, dtype=float)
    if xs.ndim != 1 or xs.shape[0] < 2 or np.any(np.diff(xs) <= 0):
        raise StructuralError("grid must be strictly increasing")
    if xs[-1] != params.a:
        raise StructuralError("grid must end exactly at the barrier")
    mid = 0.5 * (xs[:-1] + xs[1:])
    half = 0.5 * np.diff(xs)
    offset = half / math.sqrt(3.0)
    nodes = np.concatenate([mid - offset, mid + offset])
    vals = np.exp(_log_w0_batch(params, 0.0, nodes)).reshape(2, -1)
    cell = half * (vals[0] + vals[1])
    out = np.zeros_like(xs)
    out[:-1] = np.cumsum(cell[::-1])[::-1]
    return out


def creeping_prob(params: ModelParams, x: float, rtol: float = 1e-12) -> float:
    """Probability the barrier is first reached continuously (no overshoot)."""
    return 1.0 - g0(params, x, rtol=rtol)


def boundary_slope(params: ModelParams) -> float:
    """-g0'(a-): the slope of the jump-crossing probability at the barrier."""
    return -g0_prime(params, params.a)


def green_kernel(basis: HomogeneousBasis, x: float, y: float) -> float:
    """Green function of the gauge operator with decay at -inf and Robin at a."""
    a = basis.params.a
    if not (x <= a and y <= a):
        raise StructuralError("kernel arguments must lie at or below the barrier")
    lo, hi = (x, y) if x <= y else (y, x)
    sig2 = basis.params.sigma ** 2
    log_val = math.log(2.0 / sig2) \
        + float(basis.log_psi(lo)) + float(basis.log_chi(hi)) \
        - (basis.log_wronskian_scale + 2.0 * basis.ctx.p(y))
    return -math.exp(log_val)


# ---------------------------------------------------------------------------
# the Volterra fixed point for q > 0

_GL3_POINTS = np.array([-math.sqrt(0.6), 0.0, math.sqrt(0.6)])
_GL3_WEIGHTS = np.array([5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])


@dataclass(frozen=True)
class VolterraGrid:
    """Discretisation controls for solve_wq."""

    n_cells: int = 16384
    x_min: float | None = None
    tol: float = 1e-10
    max_iter: int = 100
    truncation_check: bool = True

    def __post_init__(self):
        if self.n_cells < 16:
            raise StructuralError("n_cells must be at least 16")
        if not (self.tol > 0.0 and self.max_iter >= 1):
            raise StructuralError("need tol > 0 and max_iter >= 1")


@dataclass(eq=False)
class VolterraSolution:
    """Converged derivative w_q on its grid, plus the seed it started from."""

    params: ModelParams
    q: float
    grid: np.ndarray
    w_values: np.ndarray
    w0_values: np.ndarray
    iterations: int
    sup_delta: float
    converged: bool
    truncation_error: float | None

    def _antiderivative(self):
        cached = getattr(self, "_anti", None)
        if cached is None:
            cached = CubicSpline(self.grid, self.w_values).antiderivative()
            self._anti = cached
        return cached


def _auto_x_min(params: ModelParams, q: float) -> float:
    """Leftmost grid point: where the decaying solution is 1e-12 of its peak."""
    ctx = make_context(params, q)
    step = 0.25 * max(1.0, params.sigma / math.sqrt(ctx.b), 1.0 / params.eta)
    x = params.a
    best = -math.inf
    for _ in range(100_000):
        lp = ctx.p(x) + float(log_pcf_d(ctx.nu_q, float(ctx.z(x))))
        best = max(best, lp)
        if lp - best <= _LOG_EPS:
            return x
        x -= step
    raise StructuralError("could not locate a decayed left endpoint")


def solve_wq(params: ModelParams, q: float,
             grid: VolterraGrid | None = None) -> VolterraSolution:
    """Fixed-point solution of the integral equation for w_q = G_q'.

    Picard iteration on a fixed Gauss grid: the kernel application is a
    pair of prefix/suffix sums in log space (the kernel is separable on
    each side of the diagonal), and the tail integral of the iterate is
    taken from a cubic-spline antiderivative. q = 0 returns the seed
    itself. The returned object carries a truncation estimate obtained by
    re-solving on a domain extended to twice the depth; values inside a
    thin layer at the left edge (about 2 percent of the domain) carry the
    cut-off error of the kernel and are excluded from that estimate.
    """
    if q < 0.0:
        raise StructuralError(f"q must be nonnegative, got {q!r}")
    spec = grid or VolterraGrid()
    x_min = spec.x_min if spec.x_min is not None else _auto_x_min(params, q)
    if not x_min < params.a:
        raise StructuralError("x_min must lie below the barrier")
    sol = _solve_on(params, q, x_min, spec.n_cells, spec.tol, spec.max_iter)
    if spec.truncation_check:
        deep = x_min - (params.a - x_min)
        ref = _solve_on(params, q, deep, 2 * spec.n_cells, spec.tol,
                        spec.max_iter)
        # the cut perturbs the kernel inside a thin layer at x_min (the
        # Green function keeps O(1) diagonal mass there); judge truncation
        # on the part of the grid past that layer
        interior = sol.grid >= x_min + 0.02 * (params.a - x_min)
        here = gq_from_solution(sol, sol.grid[interior])
        there = gq_from_solution(ref, sol.grid[interior])
        sol.truncation_error = float(np.max(np.abs(here - there)))
    return sol


def _solve_on(params: ModelParams, q: float, x_min: float, n_cells: int,
              tol: float, max_iter: int) -> VolterraSolution:
    a = params.a
    xs = np.linspace(x_min, a, n_cells + 1)
    w0 = -np.exp(_log_w0_batch(params, q, xs))
    if q == 0.0:
        return VolterraSolution(params, q, xs, w0.copy(), w0, 1, 0.0, True,
                                None)

    basis = homogeneous_basis(params, q)
    ctx = basis.ctx
    eta_q = params.eta * q
    sig2 = params.sigma ** 2

    mid = 0.5 * (xs[:-1] + xs[1:])
    half = 0.5 * np.diff(xs)
    gl_nodes = (mid[:, None] + half[:, None] * _GL3_POINTS[None, :]).ravel()
    gl_logw = np.log(half[:, None] * _GL3_WEIGHTS[None, :]).ravel()

    lpsi_nodes = basis.log_psi(xs)
    lchi_nodes = basis.log_chi(xs)
    two_p = 2.0 * ctx.p(gl_nodes)
    lker = math.log(2.0 / sig2) - basis.log_wronskian_scale
    logP = basis.log_psi(gl_nodes) - two_p + lker + gl_logw
    logQ = basis.log_chi(gl_nodes) - two_p + lker + gl_logw

    w = w0.copy()
    sup_delta = math.inf
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        anti = CubicSpline(xs, w).antiderivative()
        tail = np.minimum(anti(a) - anti(gl_nodes), 0.0)  # integral of w, <= 0
        with np.errstate(divide="ignore"):
            log_tail = np.log(-tail)
        cell_p = np.logaddexp.reduce(
            (logP + log_tail).reshape(n_cells, 3), axis=1)
        cell_q = np.logaddexp.reduce(
            (logQ + log_tail).reshape(n_cells, 3), axis=1)
        prefix = np.concatenate(([-math.inf], np.logaddexp.accumulate(cell_p)))
        suffix = np.concatenate(
            (np.logaddexp.accumulate(cell_q[::-1])[::-1], [-math.inf]))
        applied = np.exp(np.logaddexp(lchi_nodes + prefix,
                                      lpsi_nodes + suffix))
        w_new = w0 + eta_q * applied
        sup_delta = float(np.max(np.abs(w_new - w)))
        w = w_new
        if sup_delta <= tol:
            converged = True
            break
    return VolterraSolution(params, q, xs, w, w0, iterations, sup_delta,
                            converged, None)


def gq_from_solution(sol: VolterraSolution, x) -> np.ndarray | float:
    """G_q(x) = -integral of w_q from x to the barrier, off the spline."""
    anti = sol._antiderivative()
    xs = np.asarray(x, dtype=float)
    if np.any(xs < sol.grid[0]) or np.any(xs > sol.params.a):
        raise StructuralError("x outside the solved domain")
    out = anti(xs) - anti(sol.params.a)
    return float(out) if np.isscalar(x) or xs.ndim == 0 else out


# ---------------------------------------------------------------------------
# residual diagnostics

def oide_residual(params: ModelParams, q: float, g: Callable, x: float,
                  h1: float | None = None, h2: float | None = None,
                  quad_rtol: float = 1e-11) -> float:
    """Defect of g in the integro-differential crossing equation at x.

    Derivatives are fourth-order finite differences; defaults h1, h2 are
    tuned for functions evaluated near machine precision but backed by
    quadrature or interpolation (callers with analytically smooth g may
    shrink them). The exponential tail integral is evaluated by adaptive
    Gauss quadrature of g itself.
    """
    a, eta, lam = params.a, params.eta, params.lam
    if not x < a:
        raise StructuralError("residual point must lie strictly below a")
    scale = max(1.0, abs(x))
    h1 = h1 if h1 is not None else 1e-3 * scale
    h2 = h2 if h2 is not None else 2e-3 * scale
    side1 = "central" if x + 2.0 * h1 <= a else "left"
    side2 = "central" if x + 2.0 * h2 <= a else "left"
    d1 = fd_derivative(g, x, order=1, h=h1, side=side1)
    d2 = fd_derivative(g, x, order=2, h=h2, side=side2)

    def integrand(ys):
        ys = np.asarray(ys)
        return _as_batch(g, ys) * eta * np.exp(-eta * (ys - x))

    tail = composite_gl(integrand, x, a, rtol=quad_rtol, atol=1e-13)
    gx = float(g(x))
    return 0.5 * params.sigma ** 2 * d2 + (params.alpha + params.beta * x) * d1 \
        + lam * tail - (lam + q) * gx + lam * math.exp(-eta * (a - x))


def compatibility_defect(params: ModelParams, q: float, g: Callable,
                         h: float = 2e-3) -> float:
    """Barrier-side second-order condition every admissible g must satisfy.

    Evaluates 0.5 sigma^2 g''(a-) + (alpha + beta a) g'(a-) + lam with
    one-sided stencils from below; the discount enters only through g.
    """
    a = params.a
    d1 = fd_derivative(g, a, order=1, h=h, side="left")
    d2 = fd_derivative(g, a, order=2, h=h, side="left")
    return 0.5 * params.sigma ** 2 * d2 \
        + (params.alpha + params.beta * a) * d1 + params.lam


def basis_operator_residual(basis: HomogeneousBasis, member: str,
                            x) -> np.ndarray | float:
    """Relative defect of the gauge operator on psi_q or chi_q at x.

    Both members are annihilated exactly; this measures how far fourth
    order finite differences are from seeing that. Stencil values are
    normalised by the member's value at each centre (working from logs, so
    chi's growth far below the barrier cannot overflow), and the step
    adapts to the local log-slope. The defect is normalised by the sum of
    the three term magnitudes; accepts a scalar or an array of points.
    """
    params, ctx, q = basis.params, basis.ctx, basis.q
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if member == "psi":
        log_f = basis.log_psi
        rate = np.full_like(xs, params.eta + abs(ctx.z1))
    elif member == "chi":
        log_f = basis.log_chi
        rate = np.abs(2.0 * ctx.p_prime(xs) - params.eta) \
            + params.eta + abs(ctx.z1)
    else:
        raise StructuralError(f"member must be 'psi' or 'chi', not {member!r}")
    h = np.minimum(1e-3 * np.maximum(1.0, np.abs(xs)), 0.02 / rate)
    # one batched evaluation of the 7 stencil points per centre
    offsets = np.array([-4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0])
    pts = xs[:, None] + h[:, None] * offsets[None, :]
    logs = log_f(pts.ravel()).reshape(pts.shape)
    rel = np.exp(logs - logs[:, 3:4])  # member / member(centre)
    d1 = (8.0 * (rel[:, 4] - rel[:, 2]) - (rel[:, 5] - rel[:, 1])) / (12.0 * h)
    step2 = 2.0 * h
    d2 = (-rel[:, 0] + 16.0 * rel[:, 1] - 30.0 * rel[:, 3]
          + 16.0 * rel[:, 5] - rel[:, 6]) / (12.0 * step2 ** 2)
    sig2 = params.sigma ** 2
    drift = params.alpha + params.beta * xs
    c1 = drift - 0.5 * params.eta * sig2
    c0 = params.beta - params.eta * drift - params.lam - q
    num = 0.5 * sig2 * d2 + c1 * d1 + c0
    den = np.abs(0.5 * sig2 * d2) + np.abs(c1 * d1) + np.abs(c0)
    out = num / den
    return out if np.ndim(x) else float(out[0])


def ode3_residual(params: ModelParams, q: float, g: Callable, x: float,
                  h: float = 2e-3) -> float:
    """Defect in the pure third-order form (integral term eliminated).

    Complements oide_residual: no quadrature of g is involved, at the cost
    of a third difference whose step must stay well above the noise floor
    of g (interpolation or quadrature error to the power 1/3).
    """
    if not x + 3.0 * h < params.a:
        raise StructuralError("third-order residual needs room below a")
    alpha, beta, sig2 = params.alpha, params.beta, params.sigma ** 2
    eta, lam = params.eta, params.lam
    d1 = fd_derivative(g, x, order=1, h=h)
    d2 = fd_derivative(g, x, order=2, h=h)
    d3 = fd_derivative(g, x, order=3, h=h)
    drift = alpha + beta * x
    return 0.5 * sig2 * d3 + (drift - 0.5 * eta * sig2) * d2 \
        + (beta - eta * drift - lam - q) * d1 + eta * q * float(g(x))


def small_q_slope(params: ModelParams, x: float, q: float,
                  grid: VolterraGrid | None = None) -> float:
    """(g0(x) - G_q(x)) / q: the discount sensitivity of the jump route.

    Bounded between 0 and the expected crossing time restricted to jump
    crossings; tends to that restricted mean as q decreases to 0.
    """
    if not q > 0.0:
        raise StructuralError("q must be positive for the slope quotient")
    sol = solve_wq(params, q, grid)
    return (g0(params, x) - gq_from_solution(sol, float(x))) / q
