"""Special-function layer: cylinder function values and the gauge context."""

import math

import numpy as np
import pytest

from passagelab.errors import UnsupportedRegimeError
from passagelab.simulate import ModelParams
from passagelab.weber import (
    log_pcf_d,
    log_pcf_d_batch,
    make_context,
    pcf_d,
    pcf_d_pair,
)

# Reference values computed with mpmath.pcfd at 40 decimal digits and
# frozen here so the suite does not depend on mpmath being installed.
FROZEN = [
    (-1.0, 0.0, 1.2533141373155003),
    (0.0, 1.0, 0.7788007830714049),
    (-2.0, 0.0, 1.0),
    (-2.5, 1.3, 0.11349552066330045),
    (-3.0, 1.2666666666666666, 0.07629289222551778),
    (-2.0, -2.066666666666667, 15.120894255339380),
]

REF = ModelParams(alpha=0.1, beta=-0.5, sigma=0.3, lam=1.0, eta=2.0,
                  a=1.0, x=0.0)


@pytest.mark.parametrize("nu,z,want", FROZEN)
def test_frozen_reference_values(nu, z, want):
    assert pcf_d(nu, z) == pytest.approx(want, rel=1e-12)


def test_order_zero_is_gaussian():
    for z in (-4.0, -1.0, 0.0, 0.5, 2.0, 6.0):
        assert pcf_d(0.0, z) == pytest.approx(math.exp(-z * z / 4.0), rel=1e-12)


def test_order_minus_one_matches_erfc_form():
    zs = np.linspace(-6.0, 6.0, 25)
    for z in zs:
        want = math.exp(z * z / 4.0) * math.sqrt(math.pi / 2.0) \
            * math.erfc(z / math.sqrt(2.0))
        assert pcf_d(-1.0, float(z)) == pytest.approx(want, rel=1e-10)


def test_three_term_recurrence():
    # D_{nu+1}(z) = z D_nu(z) - nu D_{nu-1}(z), exercised so that the
    # middle order sits in (-1, 0) where evaluation takes its own branch.
    rng = np.random.default_rng(7)
    for _ in range(12):
        nu = float(rng.uniform(-0.95, -0.05))
        z = float(rng.uniform(-2.5, 2.5))
        lhs = pcf_d(nu + 1.0, z) if nu + 1.0 <= 0.0 else None
        rhs = z * pcf_d(nu, z) - nu * pcf_d(nu - 1.0, z)
        if lhs is None:
            continue
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-12)
    # fixed spot checks with all three orders at or below zero
    for nu, z in ((-1.5, 0.7), (-2.2, -1.1), (-4.0, 2.0)):
        lhs = pcf_d(nu + 1.0, z)
        rhs = z * pcf_d(nu, z) - nu * pcf_d(nu - 1.0, z)
        assert lhs == pytest.approx(rhs, rel=1e-9)


def test_derivative_identity_by_central_difference():
    rng = np.random.default_rng(11)
    for _ in range(10):
        nu = float(rng.uniform(-5.0, -1.1))
        z = float(rng.uniform(-3.0, 3.0))
        h = 1e-4 * max(1.0, abs(z))
        diff = (pcf_d(nu, z + h) - pcf_d(nu, z - h)) / (2.0 * h)
        want = 0.5 * z * pcf_d(nu, z) - pcf_d(nu + 1.0, z)
        assert diff == pytest.approx(want, rel=5e-7)


def test_positive_order_rejected():
    with pytest.raises(UnsupportedRegimeError):
        pcf_d(0.5, 1.0)
    with pytest.raises(UnsupportedRegimeError):
        log_pcf_d_batch(1e-9, np.array([0.0]))


def test_batch_matches_scalar():
    # The adaptive panel count is decided for a batch as a whole, so a
    # scalar call may stop a refinement earlier; values agree to a few ulp
    # on the log scale and repeated identical calls are bitwise equal.
    zs = np.array([-30.0, -3.0, -0.4, 0.0, 1.7, 12.0, 80.0])
    for nu in (-0.3, -1.0, -2.7, -6.0):
        batch = log_pcf_d_batch(nu, zs)
        scalars = np.array([log_pcf_d(nu, float(z)) for z in zs])
        assert batch == pytest.approx(scalars, abs=1e-13)
        assert np.array_equal(batch, log_pcf_d_batch(nu, zs))


def test_pair_is_consistent_with_singles():
    for nu, z in ((-3.0, 0.9), (-1.2, -2.0), (-5.5, 4.0)):
        d0, d1 = pcf_d_pair(nu, z)
        assert d0 == pytest.approx(pcf_d(nu, z), rel=1e-12)
        assert d1 == pytest.approx(pcf_d(nu + 1.0, z), rel=1e-12)


def test_large_argument_asymptotics():
    # D_nu(z) ~ e^{-z^2/4} z^nu for z -> +inf; at z = 40 the first
    # correction term nu(nu-1)/(2 z^2) is ~1e-3, so compare loosely.
    z = 40.0
    for nu in (-1.0, -2.5):
        approx_log = -z * z / 4.0 + nu * math.log(z)
        assert log_pcf_d(nu, z) == pytest.approx(approx_log, abs=5e-3)


def test_against_mpmath_when_available():
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 30
    rng = np.random.default_rng(3)
    for _ in range(15):
        nu = float(rng.uniform(-8.0, -0.1))
        z = float(rng.uniform(-20.0, 20.0))
        want = float(mp.log(mp.pcfd(nu, z)))
        assert log_pcf_d(nu, z) == pytest.approx(want, rel=1e-9, abs=1e-9)


class TestContext:
    def test_reference_numerology(self):
        ctx = make_context(REF, 0.0)
        assert ctx.b == pytest.approx(0.5)
        assert ctx.nu_q == pytest.approx(-3.0)
        assert ctx.z1 == pytest.approx(-math.sqrt(1.0) / 0.3)
        assert ctx.z(0.0) == pytest.approx(1.2666666666666666)
        assert ctx.z(REF.a) == pytest.approx(-2.066666666666667)
        assert ctx.p(REF.a) == pytest.approx(8.0 / 3.0)

    def test_unit_rate_order(self):
        params = ModelParams(alpha=0.0, beta=-1.0, sigma=1.0, lam=1.0,
                             eta=1.0, a=1.0, x=0.0)
        ctx = make_context(params, 0.0)
        assert ctx.nu_q == pytest.approx(-2.0)
        ctx_q = make_context(params, 0.5)
        assert ctx_q.nu_q == pytest.approx(-2.5)

    def test_order_decreases_with_discount(self):
        for q in (0.0, 0.1, 1.0):
            ctx = make_context(REF, q)
            assert ctx.nu_q == pytest.approx(-1.0 - (REF.lam + q) / 0.5)

    def test_gauge_exponent_derivative(self):
        ctx = make_context(REF, 0.2)
        for x in (-2.0, 0.0, 0.7):
            h = 1e-6
            fd = (ctx.p(x + h) - ctx.p(x - h)) / (2.0 * h)
            assert ctx.p_prime(x) == pytest.approx(fd, rel=1e-8)

    def test_no_mean_reversion_rejected(self):
        flat = ModelParams(alpha=0.1, beta=0.0, sigma=0.3, lam=1.0,
                           eta=2.0, a=1.0, x=0.0)
        with pytest.raises(UnsupportedRegimeError):
            make_context(flat, 0.0)
