"""Simulation engine: exact diffusion steps, bridge correction, jump paths."""

import math

import numpy as np
import pytest
from scipy.linalg import solve_banded

from passagelab.errors import StructuralError
from passagelab.paths import Mode, first_passage, Barrier
from passagelab.simulate import (
    CompoundPoissonSpec,
    DegenerateJumps,
    ExponentialJumps,
    LatticeJumps,
    ModelParams,
    SimConfig,
    UniformJumps,
    _ou_segment,
    _path_rng,
    bridge_crossing_prob,
    cp_to_path,
    ou_exact_step,
    run_compound_poisson,
    run_paths,
    simulate_compound_poisson,
    simulate_crossing,
)

REF = ModelParams(alpha=0.1, beta=-0.5, sigma=0.3, lam=1.0, eta=2.0,
                  a=1.0, x=0.0)


class TestModelParams:
    @pytest.mark.parametrize("field,value", [
        ("sigma", 0.0), ("sigma", -1.0), ("lam", 0.0), ("eta", -2.0),
    ])
    def test_positive_parameters(self, field, value):
        kw = dict(alpha=0.1, beta=-0.5, sigma=0.3, lam=1.0, eta=2.0,
                  a=1.0, x=0.0)
        kw[field] = value
        with pytest.raises(StructuralError):
            ModelParams(**kw)

    def test_start_below_barrier(self):
        with pytest.raises(StructuralError):
            ModelParams(alpha=0.1, beta=-0.5, sigma=0.3, lam=1.0, eta=2.0,
                        a=1.0, x=1.0)

    def test_finite(self):
        with pytest.raises(StructuralError):
            ModelParams(alpha=math.nan, beta=-0.5, sigma=0.3, lam=1.0,
                        eta=2.0, a=1.0, x=0.0)


def _moment_ode_oracle(x0: float, dt: float, params: ModelParams,
                       n_rk: int = 4000):
    """Mean and variance of the diffusion part by RK4 on the moment ODEs.

    dm/dt = alpha + beta m and dv/dt = 2 beta v + sigma^2, independent of
    the closed-form transition used by the sampler.
    """
    h = dt / n_rk
    m, v = x0, 0.0

    def f(state):
        m_, v_ = state
        return (params.alpha + params.beta * m_,
                2.0 * params.beta * v_ + params.sigma ** 2)

    for _ in range(n_rk):
        k1 = f((m, v))
        k2 = f((m + 0.5 * h * k1[0], v + 0.5 * h * k1[1]))
        k3 = f((m + 0.5 * h * k2[0], v + 0.5 * h * k2[1]))
        k4 = f((m + h * k3[0], v + h * k3[1]))
        m += h * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]) / 6.0
        v += h * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]) / 6.0
    return m, v


class TestExactStep:
    @pytest.mark.parametrize("beta", [-0.5, -2.0, 0.0])
    def test_transition_moments_match_ode(self, beta):
        params = ModelParams(alpha=0.3, beta=beta, sigma=0.4, lam=1.0,
                             eta=2.0, a=5.0, x=0.0)
        x0, dt = -0.7, 0.8
        m_want, v_want = _moment_ode_oracle(x0, dt, params)
        mean = ou_exact_step(x0, dt, 0.0, params)
        plus = ou_exact_step(x0, dt, 1.0, params)
        assert mean == pytest.approx(m_want, rel=1e-10)
        assert (plus - mean) ** 2 == pytest.approx(v_want, rel=1e-10)

    def test_noise_enters_linearly(self):
        vals = [ou_exact_step(0.2, 0.05, g, REF) for g in (-1.0, 0.0, 1.0)]
        assert vals[2] - vals[1] == pytest.approx(vals[1] - vals[0], rel=1e-12)

    def test_segment_matches_stepwise_loop(self):
        rng = np.random.default_rng(5)
        xi = rng.standard_normal(257)
        seg = _ou_segment(-0.3, 1e-3, xi, REF)
        x = -0.3
        walked = []
        for g in xi:
            x = ou_exact_step(x, 1e-3, float(g), REF)
            walked.append(x)
        assert seg == pytest.approx(np.array(walked), rel=1e-12, abs=1e-14)

    def test_segment_long_horizon_stable(self):
        # the rescaled cumulative sum must not overflow over many steps
        params = ModelParams(alpha=0.0, beta=-3.0, sigma=0.5, lam=1.0,
                             eta=2.0, a=10.0, x=0.0)
        xi = np.zeros(60000)
        seg = _ou_segment(4.0, 1e-3, xi, params)
        assert np.all(np.isfinite(seg))
        assert abs(seg[-1]) < 1e-6  # decayed to the mean level 0


def _cn_survival(y0: float, a: float, sigma: float, dt: float,
                 n_x: int = 4001, n_t: int = 1500, width: float = 1.6):
    """Survival probability of a driftless diffusion below level a.

    Crank-Nicolson on u_t = (sigma^2/2) u_yy with absorption at a, run on
    [a - width, a]; independent of any reflection-principle formula.
    """
    ys = np.linspace(a - width, a, n_x)
    h = ys[1] - ys[0]
    k = dt / n_t
    r = 0.5 * sigma ** 2 * k / (h * h)
    u = np.ones(n_x)
    u[-1] = 0.0
    # interior tridiagonal systems, Dirichlet 0 at a and (approximately)
    # u = 1 at the far-left edge, which the width keeps many sds away
    n_in = n_x - 2
    ab = np.zeros((3, n_in))
    ab[0, 1:] = -0.5 * r
    ab[1, :] = 1.0 + r
    ab[2, :-1] = -0.5 * r
    for _ in range(n_t):
        rhs = u[1:-1] + 0.5 * r * (u[2:] - 2.0 * u[1:-1] + u[:-2])
        rhs[0] += 0.5 * r * (u[0] + u[0])  # left boundary pinned at 1
        rhs[0] -= 0.5 * r * u[0]
        u[1:-1] = solve_banded((1, 1), ab, rhs)
        u[0] = 1.0
        u[-1] = 0.0
    return float(np.interp(y0, ys, u))


class TestBridge:
    def test_validates_side(self):
        with pytest.raises(StructuralError):
            bridge_crossing_prob(0.5, -0.5, 0.3, 0.01)

    def test_limits(self):
        tiny = bridge_crossing_prob(-3.0, -3.0, 0.3, 1e-3)
        assert tiny < 1e-200 or tiny == 0.0
        near = bridge_crossing_prob(-1e-9, -1e-9, 0.3, 1e-3)
        assert near == pytest.approx(1.0, abs=1e-6)

    def test_unconditional_crossing_matches_pde(self):
        # integrate the bridge formula over the free endpoint and compare
        # with an absorbing-boundary PDE solve of the same crossing event
        from scipy.integrate import quad
        from scipy.stats import norm
        sigma, dt, a = 0.3, 0.05, 0.0
        for y0 in (-0.05, -0.12, -0.25):
            sd = sigma * math.sqrt(dt)

            def integrand(v):
                return norm.pdf(v, loc=y0, scale=sd) \
                    * bridge_crossing_prob(y0 - a, v - a, sigma, dt)

            below, _err = quad(integrand, y0 - 10.0 * sd, a, limit=200)
            hit = below + float(norm.sf(a, loc=y0, scale=sd))
            surv_pde = _cn_survival(y0, a, sigma, dt)
            assert 1.0 - hit == pytest.approx(surv_pde, abs=2e-5)


class TestEngine:
    CFG = SimConfig(horizon=10.0, step=2e-3, seed=99, n_paths=768)

    def test_worker_counts_bitwise_identical(self):
        a = run_paths(REF, self.CFG, q_list=(0.05,), workers=1)
        b = run_paths(REF, self.CFG, q_list=(0.05,), workers=3)
        assert np.array_equal(a.modes, b.modes)
        assert np.array_equal(a.taus, b.taus)
        assert np.array_equal(a.overshoots, b.overshoots, equal_nan=True)
        assert np.array_equal(a.comp, b.comp)

    def test_same_seed_reproduces(self):
        a = run_paths(REF, self.CFG, workers=1)
        b = run_paths(REF, self.CFG, workers=1)
        assert np.array_equal(a.taus, b.taus)

    def test_different_seeds_differ(self):
        other = SimConfig(horizon=10.0, step=2e-3, seed=100, n_paths=768)
        a = run_paths(REF, self.CFG, workers=1)
        b = run_paths(REF, other, workers=1)
        assert not np.array_equal(a.taus, b.taus)

    def test_result_shapes_and_codes(self):
        res = run_paths(REF, self.CFG, q_list=(0.0, 0.1), workers=1)
        assert res.n == 768
        assert res.comp.shape == (768, 2)
        assert set(np.unique(res.modes)) <= {0, 1, 2}
        assert res.q_index(0.1) == 1
        with pytest.raises(StructuralError):
            res.q_index(0.2)

    def test_overshoots_only_for_jump_crossings(self):
        res = run_paths(REF, self.CFG, workers=1)
        over = res.modes == 1
        assert np.all(res.overshoots[over] > 0.0)
        assert np.all(np.isnan(res.overshoots[~over]))
        # creep paths sit exactly at the barrier when they cross
        creep = res.modes == 0
        assert np.all(res.pre_jump_levels[creep] == REF.a)

    def test_jump_scale_zero_removes_jump_crossings(self):
        res = run_paths(REF, self.CFG, workers=1, jump_scale=0.0)
        assert not np.any(res.modes == 1)

    def test_single_path_summary(self):
        out = simulate_crossing(REF, self.CFG, q=0.05, path_index=7)
        assert out.mode in (Mode.CREEP, Mode.JUMP_OVER, Mode.CENSORED)
        assert isinstance(out.tau, float)
        if out.mode is Mode.JUMP_OVER:
            assert out.overshoot > 0.0
        assert out.compensator_integral >= 0.0


class TestCompoundPoisson:
    def test_degenerate_unit_jump_hits_exactly(self):
        spec = CompoundPoissonSpec(intensity=1.0, jump_law=DegenerateJumps(1.0),
                                   barrier_level=1.0, start=0.0)
        res = run_compound_poisson(spec, 500, seed=1, horizon=50.0)
        crossed = res.modes != 2
        assert np.all(res.modes[crossed] == 3)  # every crossing is an exact hit

    def test_degenerate_jump_overshoot_value(self):
        spec = CompoundPoissonSpec(intensity=1.0, jump_law=DegenerateJumps(1.0),
                                   barrier_level=1.5, start=0.0)
        path, rec = simulate_compound_poisson(spec, seed=3, horizon=100.0)
        assert rec.mode is Mode.JUMP_OVER
        assert rec.y_at == pytest.approx(0.5)  # lands at 2, barrier 1.5

    def test_exponential_jumps_never_hit_exactly(self):
        spec = CompoundPoissonSpec(intensity=1.0, jump_law=ExponentialJumps(2.0),
                                   barrier_level=1.0, start=0.0)
        res = run_compound_poisson(spec, 3000, seed=5, horizon=8.0)
        assert int((res.modes == 3).sum()) == 0

    def test_path_route_agrees_with_batch(self):
        # replaying a batch member through the PiecewisePath machinery must
        # reproduce the batch classification and crossing time exactly
        spec = CompoundPoissonSpec(intensity=1.5, jump_law=UniformJumps(0.2, 0.9),
                                   barrier_level=1.0, start=0.0)
        res = run_compound_poisson(spec, 40, seed=11, horizon=6.0)
        code = {Mode.JUMP_HIT: 3, Mode.JUMP_OVER: 1, Mode.CENSORED: 2}
        for i in range(40):
            _, rec = simulate_compound_poisson(spec, seed=11, horizon=6.0,
                                               path_index=i)
            assert code[rec.mode] == res.modes[i]
            if rec.mode is not Mode.CENSORED:
                assert rec.tau == res.taus[i]

    def test_compensator_linear_before_first_jump(self):
        lam, rate = 2.0, 3.0
        spec = CompoundPoissonSpec(intensity=lam, jump_law=ExponentialJumps(rate),
                                   barrier_level=1.0, start=0.0)
        grid = (0.25, 0.5)
        res = run_compound_poisson(spec, 200, seed=7, horizon=1.0, grid=grid)
        # paths that have not jumped by t have compensator lam*tail(a)*t
        quiet = res.taus > 0.5
        still = res.crossed_at[:, 1] == 0.0
        want = lam * math.exp(-rate * 1.0)
        for t_idx, t in enumerate(grid):
            vals = res.comp_at[quiet & still, t_idx]
            # all-quiet paths share it only if no sub-barrier jump happened;
            # the minimum over them is the no-jump value
            assert float(vals.min()) == pytest.approx(want * t, rel=1e-12)

    def test_horizon_censoring(self):
        spec = CompoundPoissonSpec(intensity=0.01, jump_law=DegenerateJumps(2.0),
                                   barrier_level=1.0, start=0.0)
        res = run_compound_poisson(spec, 100, seed=9, horizon=0.5)
        assert np.all(np.isinf(res.taus[res.modes == 2]))
        assert (res.modes == 2).sum() > 90

    def test_spec_validation(self):
        with pytest.raises(StructuralError):
            CompoundPoissonSpec(intensity=1.0, jump_law=DegenerateJumps(1.0),
                                barrier_level=0.0, start=0.0)
        with pytest.raises(StructuralError):
            CompoundPoissonSpec(intensity=-1.0, jump_law=DegenerateJumps(1.0),
                                barrier_level=1.0, start=0.0)

    def test_uniform_tail(self):
        law = UniformJumps(0.2, 0.9)
        assert law.tail(0.1) == 1.0
        assert law.tail(0.9) == pytest.approx(0.0)
        assert law.tail(0.55) == pytest.approx(0.5)

    def test_lattice_tail_closed_above(self):
        law = LatticeJumps((1.0, 2.0), (0.5, 0.5))
        assert law.tail(1.0) == 1.0
        assert law.tail(1.5) == 0.5
        assert law.tail(2.0) == 0.5
        assert law.tail(2.1) == 0.0

    def test_cp_path_exact_jump_bookkeeping(self):
        path = cp_to_path(
            CompoundPoissonSpec(intensity=1.0, jump_law=DegenerateJumps(0.4),
                                barrier_level=1.0, start=0.0),
            [1.0, 2.5], [0.4, 0.8], horizon=4.0)
        assert path.value(0.5) == 0.0
        assert path.value(1.7) == 0.4
        assert path.left_limit(2.5) == 0.4
        assert path.value(2.5) == 0.8
        rec = first_passage(path, Barrier.constant(1.0))
        assert rec.mode is Mode.NO_CROSSING


def test_per_path_streams_are_stable_and_distinct():
    g1 = _path_rng(11, 1, 3)
    g2 = _path_rng(11, 1, 3)
    g3 = _path_rng(11, 1, 4)
    first = g1.random()
    assert first == g2.random()
    assert first != g3.random()
    with pytest.raises(StructuralError):
        _path_rng(11, 1, 1 << 48)
