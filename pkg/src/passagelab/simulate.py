"""Exact-step simulation of barrier crossings for an affine jump diffusion.

The model between jumps is the linear SDE dX = (alpha + beta X) dt
+ sigma dW; jumps arrive at Poisson rate lam and are upward, exponential
with rate eta. The barrier is the constant level a, started from x < a.

Between jump epochs the transition law is Gaussian with exactly known mean
and variance, so the step size controls only barrier monitoring, not the
marginal law. Two refinements keep the discretisation bias small:

  * a Brownian-bridge correction supplies the probability that the path
    crossed inside a step whose endpoints are both below the barrier;
  * jump epochs are placed exactly (the clock between them is simulated
    on the step grid, with a final partial step onto the epoch).

Because jumps are upward and exponential, a crossing is either a creep of
the diffusion part onto the barrier or a strict jump over it; a jump can
land exactly on the barrier only with probability zero, and the engine
never produces that mode. Each path owns a counter-based RNG stream keyed
by (seed, path index), so results are independent of batching and worker
count, and re-running any single path reproduces it bit for bit.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import StructuralError
from .paths import Barrier, CrossingRecord, Jump, Mode, PiecewisePath, Segment, first_passage

_MASK64 = (1 << 64) - 1
_NS_AFFINE = 0
_NS_CP = 1
# cap on |beta| * dt * chunk so the rescaled-cumsum recursion stays in range
_LOG_CHUNK = 60.0

MODE_CODES = {0: Mode.CREEP, 1: Mode.JUMP_OVER, 2: Mode.CENSORED}


@dataclass(frozen=True)
class ModelParams:
    """Affine jump diffusion with upward exponential jumps and barrier a."""

    alpha: float
    beta: float
    sigma: float
    lam: float
    eta: float
    a: float
    x: float

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise StructuralError(f"sigma must be positive, got {self.sigma!r}")
        if not self.lam > 0.0:
            raise StructuralError(f"lam must be positive, got {self.lam!r}")
        if not self.eta > 0.0:
            raise StructuralError(f"eta must be positive, got {self.eta!r}")
        if not self.x < self.a:
            raise StructuralError(
                f"start {self.x!r} must lie strictly below the barrier {self.a!r}")
        for name in ("alpha", "beta", "sigma", "lam", "eta", "a", "x"):
            if not math.isfinite(getattr(self, name)):
                raise StructuralError(f"{name} must be finite")


@dataclass(frozen=True)
class SimConfig:
    horizon: float = 50.0
    step: float = 1e-3
    seed: int = 0
    bridge_correction: bool = True
    n_paths: int = 10_000

    def __post_init__(self):
        if not (self.horizon > 0.0 and math.isfinite(self.horizon)):
            raise StructuralError(f"bad horizon {self.horizon!r}")
        if not (0.0 < self.step <= self.horizon):
            raise StructuralError(f"bad step {self.step!r}")
        if self.n_paths < 1:
            raise StructuralError("n_paths must be >= 1")
        if not (0 <= int(self.seed) <= _MASK64):
            raise StructuralError("seed must fit in 64 bits")


@dataclass(frozen=True)
class CrossingOutcome:
    """One simulated path, summarised at its crossing (or censoring) time."""

    mode: Mode
    tau: float
    overshoot: float
    pre_jump_level: float
    compensator_integral: float


def _path_rng(seed: int, namespace: int, index: int) -> np.random.Generator:
    if index >= (1 << 48):
        raise StructuralError("path index exceeds the 48-bit stream space")
    key = np.array([seed & _MASK64, (namespace << 48) | index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def ou_exact_step(x, dt: float, noise, params: ModelParams):
    """One exact Gaussian transition of the diffusion part over dt.

    noise is a standard normal draw; accepts arrays for x/noise. The
    beta = 0 case (pure drift plus Brownian motion) is an explicit branch
    rather than a limit, so there is no 0/0 at that parameter point.
    """
    if dt <= 0.0:
        raise StructuralError(f"dt must be positive, got {dt!r}")
    alpha, beta, sigma = params.alpha, params.beta, params.sigma
    if beta == 0.0:
        return x + alpha * dt + sigma * math.sqrt(dt) * np.asarray(noise)
    g = math.exp(beta * dt)
    mean_shift = (alpha / beta) * math.expm1(beta * dt)
    sd = sigma * math.sqrt(math.expm1(2.0 * beta * dt) / (2.0 * beta))
    return np.asarray(x) * g + mean_shift + sd * np.asarray(noise)


def _ou_segment(x0: float, dt: float, xi: np.ndarray,
                params: ModelParams) -> np.ndarray:
    """Values after 1..n exact steps of size dt, vectorised along the path.

    Uses the rescaled-cumsum form of the one-step recursion, renormalised
    in chunks so the exponential weights stay within double range whatever
    beta * dt * n is.
    """
    n = xi.shape[0]
    alpha, beta, sigma = params.alpha, params.beta, params.sigma
    if beta == 0.0:
        return x0 + alpha * dt * np.arange(1, n + 1) \
            + sigma * math.sqrt(dt) * np.cumsum(xi)
    bdt = beta * dt
    em1 = math.expm1(bdt)
    mean_shift = (alpha / beta) * em1
    sd = sigma * math.sqrt(math.expm1(2.0 * bdt) / (2.0 * beta))
    out = np.empty(n)
    chunk = max(1, int(_LOG_CHUNK / abs(bdt)))
    pos = 0
    cur = x0
    while pos < n:
        k = min(chunk, n - pos)
        j = np.arange(1, k + 1)
        growth = np.exp(bdt * j)
        weights = np.cumsum(np.exp(-bdt * j) * xi[pos:pos + k])
        out[pos:pos + k] = growth * cur \
            + mean_shift * np.expm1(bdt * j) / em1 \
            + sd * growth * weights
        cur = out[pos + k - 1]
        pos += k
    return out


def bridge_crossing_prob(y0, y1, sigma: float, dt: float):
    """P(Brownian bridge from y0 to y1 over dt reaches 0), both ends below.

    y0, y1 are gaps to the barrier (negative). Vectorised; the exponent is
    always <= 0 so the result lies in (0, 1] without clipping.
    """
    y0 = np.asarray(y0, dtype=float)
    y1 = np.asarray(y1, dtype=float)
    if np.any(y0 >= 0.0) or np.any(y1 >= 0.0):
        raise StructuralError("bridge endpoints must lie strictly below the barrier")
    return np.exp(-2.0 * y0 * y1 / (sigma * sigma * dt))


@dataclass(eq=False)
class SimResult:
    """Per-path crossing summaries for a batch, in path-index order."""

    params: ModelParams
    config: SimConfig
    q_list: tuple[float, ...]
    modes: np.ndarray          # int8 codes, see MODE_CODES
    taus: np.ndarray
    overshoots: np.ndarray     # nan unless jump_over
    pre_jump_levels: np.ndarray  # barrier level for creep, nan if censored
    comp: np.ndarray           # shape (n_paths, len(q_list))

    @property
    def n(self) -> int:
        return self.modes.shape[0]

    def q_index(self, q: float) -> int:
        for i, qq in enumerate(self.q_list):
            if qq == q:
                return i
        raise StructuralError(f"q = {q!r} was not simulated; have {self.q_list}")


def _simulate_path(params: ModelParams, config: SimConfig,
                   q_arr: np.ndarray, index: int,
                   jump_scale: float = 1.0):
    """One path; returns (mode code, tau, overshoot, pre jump level, comp)."""
    rng = _path_rng(config.seed, _NS_AFFINE, index)
    alpha, beta, sigma = params.alpha, params.beta, params.sigma
    lam, eta, a = params.lam, params.eta, params.a
    horizon, h = config.horizon, config.step
    sig2 = sigma * sigma

    t = 0.0
    x = params.x
    comp = np.zeros(q_arr.shape[0])

    def accumulate(nodes_t, nodes_x, upto=None):
        # trapezoid of exp(-q s) * lam * exp(-eta (a - X_s)) over the nodes;
        # `upto` replaces the last node by (tau, barrier) for a partial step
        phi = lam * np.exp(-eta * (a - nodes_x))
        if upto is not None:
            nodes_t = np.append(nodes_t, upto)
            phi = np.append(phi, lam)
        if nodes_t.shape[0] < 2:
            return
        w = np.exp(-np.outer(q_arr, nodes_t)) * phi
        dt_arr = np.diff(nodes_t)
        comp[:] += ((w[:, :-1] + w[:, 1:]) * 0.5 * dt_arr).sum(axis=1)

    while True:
        gap = rng.exponential(1.0 / lam)
        t_end = t + gap
        jump_pending = True
        if t_end >= horizon:
            t_end = horizon
            jump_pending = False
        seg = t_end - t
        x_end = x
        if seg > 0.0:
            n = max(1, math.ceil(seg / h))
            dt = seg / n
            xi = rng.standard_normal(n)
            uni = rng.random(n) if config.bridge_correction else None
            xs = _ou_segment(x, dt, xi, params)
            prev = np.concatenate(([x], xs[:-1]))
            hit = xs >= a
            if config.bridge_correction:
                below = ~hit & (prev < a)
                p_bridge = np.zeros(n)
                if below.any():
                    p_bridge[below] = np.exp(
                        -2.0 * (prev[below] - a) * (xs[below] - a) / (sig2 * dt))
                hit = hit | (uni < p_bridge)
            if hit.any():
                k = int(np.argmax(hit))
                if xs[k] >= a:
                    denom = xs[k] - prev[k]
                    theta = (a - prev[k]) / denom if denom > 0 else 1.0
                    theta = min(max(theta, 0.0), 1.0)
                else:
                    theta = 0.5
                tau = t + (k + theta) * dt
                nodes_t = t + dt * np.arange(k + 1)
                accumulate(nodes_t, np.concatenate(([x], xs[:k])), upto=tau)
                return 0, tau, 0.0, a, comp
            nodes_t = t + dt * np.arange(n + 1)
            accumulate(nodes_t, np.concatenate(([x], xs)))
            x_end = xs[-1]
        t = t_end
        if not jump_pending:
            return 2, math.inf, 0.0, math.nan, comp
        size = rng.exponential(1.0 / eta) * jump_scale
        landed = x_end + size
        if landed >= a:
            return 1, t, landed - a, x_end, comp
        x = landed


def _run_block(params: ModelParams, config: SimConfig, q_list,
               start: int, count: int, jump_scale: float = 1.0):
    q_arr = np.asarray(q_list, dtype=float)
    modes = np.empty(count, dtype=np.int8)
    taus = np.empty(count)
    overshoots = np.full(count, np.nan)
    pre = np.empty(count)
    comp = np.empty((count, q_arr.shape[0]))
    for i in range(count):
        code, tau, osh, pj, c = _simulate_path(
            params, config, q_arr, start + i, jump_scale)
        modes[i] = code
        taus[i] = tau
        if code == 1:
            overshoots[i] = osh
        pre[i] = pj
        comp[i] = c
    return start, modes, taus, overshoots, pre, comp


def _worker_count(workers: int | None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("PASSAGELAB_WORKERS", "")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def run_paths(params: ModelParams, config: SimConfig,
              q_list: Sequence[float] = (), workers: int | None = None,
              jump_scale: float = 1.0) -> SimResult:
    """Simulate config.n_paths independent paths and stack their summaries.

    Every path draws from its own stream keyed by (seed, index), and the
    output arrays are ordered by index, so the result is bitwise identical
    for any worker count or block size. `workers` defaults to the
    PASSAGELAB_WORKERS environment variable, else 1.
    """
    n = config.n_paths
    q_tuple = tuple(float(q) for q in q_list)
    nw = _worker_count(workers)
    block = 4096
    tasks = [(s, min(block, n - s)) for s in range(0, n, block)]
    results = []
    if nw == 1 or len(tasks) == 1:
        for s, c in tasks:
            results.append(_run_block(params, config, q_tuple, s, c, jump_scale))
    else:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=nw) as ex:
            futs = [ex.submit(_run_block, params, config, q_tuple, s, c, jump_scale)
                    for s, c in tasks]
            results = [f.result() for f in futs]
    results.sort(key=lambda r: r[0])
    modes = np.concatenate([r[1] for r in results])
    taus = np.concatenate([r[2] for r in results])
    overshoots = np.concatenate([r[3] for r in results])
    pre = np.concatenate([r[4] for r in results])
    comp = np.concatenate([r[5] for r in results], axis=0)
    return SimResult(params, config, q_tuple, modes, taus, overshoots, pre, comp)


def simulate_crossing(params: ModelParams, config: SimConfig, q: float = 0.0,
                      path_index: int = 0) -> CrossingOutcome:
    """Simulate a single path and summarise its crossing."""
    code, tau, osh, pj, comp = _simulate_path(
        params, config, np.array([float(q)]), path_index)
    return CrossingOutcome(MODE_CODES[code], float(tau), float(osh),
                           float(pj), float(comp[0]))


# ---------------------------------------------------------------------------
# compound Poisson model (piecewise-constant paths, general jump law)

class JumpLaw:
    """Interface: sample sizes and evaluate the closed upper tail P(U >= y)."""

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def tail(self, y: float) -> float:
        raise NotImplementedError

    @property
    def is_diffuse(self) -> bool:
        raise NotImplementedError


@dataclass(frozen=True)
class DegenerateJumps(JumpLaw):
    size: float

    def __post_init__(self):
        if not self.size > 0.0:
            raise StructuralError("jump size must be positive")

    def sample(self, rng, n):
        return np.full(n, self.size)

    def tail(self, y):
        return 1.0 if y <= self.size else 0.0

    @property
    def is_diffuse(self):
        return False


@dataclass(frozen=True)
class LatticeJumps(JumpLaw):
    values: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != len(self.probs) or not self.values:
            raise StructuralError("values and probs must match and be nonempty")
        if any(v <= 0.0 for v in self.values):
            raise StructuralError("jump values must be positive")
        if abs(sum(self.probs) - 1.0) > 1e-12 or any(p < 0 for p in self.probs):
            raise StructuralError("probs must be a probability vector")

    def sample(self, rng, n):
        idx = rng.choice(len(self.values), size=n, p=np.asarray(self.probs))
        return np.asarray(self.values)[idx]

    def tail(self, y):
        return float(sum(p for v, p in zip(self.values, self.probs) if v >= y))

    @property
    def is_diffuse(self):
        return False


@dataclass(frozen=True)
class ExponentialJumps(JumpLaw):
    rate: float

    def __post_init__(self):
        if not self.rate > 0.0:
            raise StructuralError("rate must be positive")

    def sample(self, rng, n):
        return rng.exponential(1.0 / self.rate, size=n)

    def tail(self, y):
        return 1.0 if y <= 0.0 else math.exp(-self.rate * y)

    @property
    def is_diffuse(self):
        return True


@dataclass(frozen=True)
class UniformJumps(JumpLaw):
    lo: float
    hi: float

    def __post_init__(self):
        if not (0.0 <= self.lo < self.hi):
            raise StructuralError("need 0 <= lo < hi")

    def sample(self, rng, n):
        return rng.uniform(self.lo, self.hi, size=n)

    def tail(self, y):
        if y <= self.lo:
            return 1.0
        if y >= self.hi:
            return 0.0
        return (self.hi - y) / (self.hi - self.lo)

    @property
    def is_diffuse(self):
        return True


@dataclass(frozen=True)
class CompoundPoissonSpec:
    intensity: float
    jump_law: JumpLaw
    barrier_level: float
    start: float

    def __post_init__(self):
        if not self.intensity > 0.0:
            raise StructuralError("intensity must be positive")
        if not self.start < self.barrier_level:
            raise StructuralError("start must lie strictly below the barrier")


def _cp_events(spec: CompoundPoissonSpec, rng: np.random.Generator,
               horizon: float):
    """Jump times and post-jump levels until crossing or horizon.

    Returns (times, levels, crossed) where levels[k] is the value right
    after times[k]; the walk stops at the first level >= barrier.
    """
    t = 0.0
    x = spec.start
    times: list[float] = []
    levels: list[float] = []
    crossed = False
    while True:
        t += rng.exponential(1.0 / spec.intensity)
        if t > horizon:
            break
        u = float(spec.jump_law.sample(rng, 1)[0])
        x = x + u
        times.append(t)
        levels.append(x)
        if x >= spec.barrier_level:
            crossed = True
            break
    return times, levels, crossed


def cp_to_path(spec: CompoundPoissonSpec, times: list[float],
               levels: list[float], horizon: float) -> PiecewisePath:
    segs = []
    jumps = []
    cur = spec.start
    t_prev = 0.0
    for t, lvl in zip(times, levels):
        segs.append(Segment(t_prev, t, cur, 0.0))
        jumps.append(Jump(t, cur, lvl))
        cur = lvl
        t_prev = t
    if t_prev < horizon:
        segs.append(Segment(t_prev, horizon, cur, 0.0))
        return PiecewisePath(tuple(segs), tuple(jumps), horizon)
    # crossing exactly at the horizon: pad so the last jump stays interior
    padded = t_prev + 1.0
    segs.append(Segment(t_prev, padded, cur, 0.0))
    return PiecewisePath(tuple(segs), tuple(jumps), padded)


def simulate_compound_poisson(spec: CompoundPoissonSpec, seed: int,
                              horizon: float, path_index: int = 0
                              ) -> tuple[PiecewisePath, CrossingRecord]:
    """One compound Poisson path as a PiecewisePath, classified exactly.

    path_index selects the same stream as path path_index of a batch run
    with this seed, so single-path inspection can replay any batch member.
    """
    rng = _path_rng(int(seed), _NS_CP, path_index)
    times, levels, _ = _cp_events(spec, rng, horizon)
    path = cp_to_path(spec, times, levels, horizon)
    record = first_passage(path, Barrier.constant(spec.barrier_level))
    return path, record


@dataclass(eq=False)
class CpResult:
    """Batch summaries for the compound Poisson model on a time grid."""

    spec: CompoundPoissonSpec
    horizon: float
    grid: np.ndarray
    modes: np.ndarray        # int8: 3 = jump_hit, 1 = jump_over, 2 = censored
    taus: np.ndarray
    crossed_at: np.ndarray   # indicator 1{tau <= t}, shape (n, len(grid))
    comp_at: np.ndarray      # compensator at grid times, same shape

    @property
    def n(self) -> int:
        return self.modes.shape[0]


CP_MODE_CODES = {3: Mode.JUMP_HIT, 1: Mode.JUMP_OVER, 2: Mode.CENSORED}


def run_compound_poisson(spec: CompoundPoissonSpec, n_paths: int, seed: int,
                         horizon: float,
                         grid: Sequence[float] = ()) -> CpResult:
    """Simulate n_paths compound Poisson paths with exact jump bookkeeping.

    Crossing detection is exact (float comparison against the barrier), so a
    lattice walk landing exactly on the level is a jump_hit. The compensator
    uses the closed-tail intensity lam * P(U >= a - X_s) integrated along
    the flat pieces up to min(t, tau).
    """
    grid = np.asarray(sorted(float(t) for t in grid))
    n_grid = grid.shape[0]
    modes = np.empty(n_paths, dtype=np.int8)
    taus = np.empty(n_paths)
    crossed = np.zeros((n_paths, n_grid))
    comp = np.zeros((n_paths, n_grid))
    lam = spec.intensity
    a = spec.barrier_level
    for i in range(n_paths):
        rng = _path_rng(int(seed), _NS_CP, i)
        times, levels, did_cross = _cp_events(spec, rng, horizon)
        if did_cross:
            tau = times[-1]
            end_level = levels[-1]
            modes[i] = 3 if end_level == a else 1
            taus[i] = tau
        else:
            tau = math.inf
            modes[i] = 2
            taus[i] = math.inf
        if n_grid:
            crossed[i] = (grid >= tau) if math.isfinite(tau) else 0.0
            # piecewise-constant level between jump epochs
            seg_starts = [0.0] + times
            seg_levels = [spec.start] + levels
            if did_cross:
                seg_starts = seg_starts[:-1]
                seg_levels = seg_levels[:-1]
                seg_ends = times[:-1] + [tau]
            else:
                seg_ends = times + [horizon]
            acc = np.zeros(n_grid)
            for s0, s1, lvl in zip(seg_starts, seg_ends, seg_levels):
                rate = lam * spec.jump_law.tail(a - lvl)
                if rate == 0.0:
                    continue
                overlap = np.clip(np.minimum(grid, s1) - s0, 0.0, None)
                acc += rate * overlap
            comp[i] = acc
    return CpResult(spec, horizon, grid, modes, taus, crossed, comp)
