"""Weber parabolic cylinder functions and the gauge that produces them.

The mean-reverting model is reduced, by an exponential-quadratic gauge and
an affine change of variable, to Weber's equation; the bounded and unbounded
solutions are D_nu evaluated at +z(x) and -z(x). This module evaluates D_nu
for nu <= 0 from its real integral representation

    D_nu(z) = exp(-z^2/4) / Gamma(-nu) * I(nu, z),
    I(nu, z) = int_0^inf t^(-nu-1) exp(-z t - t^2/2) dt      (nu < 0)

and packages the gauge bookkeeping into WeberContext.

Everything is computed in log space first: the integrand is factored by its
peak value, so the returned log is accurate even where exp(p(x)) D_nu(z(x))
style products would overflow a double.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import AccuracyError, UnsupportedRegimeError
from .quad import _gl_rule

if TYPE_CHECKING:
    from .simulate import ModelParams

TOL_PCF = 1e-10
_GL_N = 64
_MAX_PANELS = 128


def _phi(c: float, z: np.ndarray, t: np.ndarray) -> np.ndarray:
    # log integrand, c = -nu - 1 >= 0
    if c == 0.0:
        return -z * t - 0.5 * t * t
    return c * np.log(t) - z * t - 0.5 * t * t


def _log_integral_batch(c: float, z: np.ndarray, rtol: float) -> np.ndarray:
    """log of int_0^inf t^c exp(-z t - t^2/2) dt, elementwise over z. c >= 0."""
    z = np.asarray(z, dtype=float)
    if c > 0.0:
        tstar = 0.5 * (-z + np.sqrt(z * z + 4.0 * c))
    else:
        tstar = np.maximum(-z, 0.0)
    phimax = np.where(tstar > 0.0, _phi(c, z, np.maximum(tstar, 1e-300)), 0.0)

    nodes, weights = _gl_rule(_GL_N)
    # master nodes on [0, 1]
    s01 = 0.5 * (nodes + 1.0)
    w01 = 0.5 * weights

    def level_values(idx: np.ndarray, panels: int) -> np.ndarray:
        zz = z[idx][:, None]
        ts = tstar[idx][:, None]
        pm = phimax[idx][:, None]
        edges = np.linspace(0.0, 1.0, panels + 1)
        lo = edges[:-1][:, None]
        width = (edges[1:] - edges[:-1])[:, None]
        s = (lo + width * s01[None, :]).ravel()[None, :]      # (1, panels*n)
        w = (width * w01[None, :]).ravel()[None, :]
        # head: t = tstar * s^2 (softens the t^c endpoint), dt = 2 tstar s ds
        head = np.zeros(len(idx))
        mask = (ts[:, 0] > 0.0)
        if np.any(mask):
            t_h = ts[mask] * s * s
            f_h = np.exp(_phi(c, zz[mask], np.maximum(t_h, 1e-300)) - pm[mask]) \
                * 2.0 * ts[mask] * s
            head_m = f_h @ w[0]
            head[mask] = head_m
        # tail: t = tstar - log u, dt = -du/u, so the 1/u becomes exp(t - tstar)
        t_t = ts - np.log(s)
        f_t = np.exp(_phi(c, zz, t_t) - pm + (t_t - ts))
        tail = f_t @ w[0]
        return head + tail

    n = len(z)
    out = np.empty(n)
    active = np.arange(n)
    prev = level_values(active, 1)
    panels = 2
    while panels <= _MAX_PANELS and len(active):
        cur = level_values(active, panels)
        ok = np.abs(cur - prev) <= rtol * np.abs(cur)
        done = active[ok]
        out[done] = cur[ok]
        active = active[~ok]
        prev = cur[~ok]
        panels *= 2
    if len(active):
        raise AccuracyError(
            f"parabolic cylinder quadrature stalled at rtol={rtol:g} for "
            f"{len(active)} argument(s), first z={z[active[0]]:g}")
    return np.log(out) + phimax


def log_pcf_d_batch(nu: float, z, rtol: float = TOL_PCF) -> np.ndarray:
    """Elementwise log D_nu(z) for nu <= 0 (D_nu > 0 on this range)."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if nu > 0.0:
        raise UnsupportedRegimeError(f"pcf order must be <= 0, got {nu:g}")
    if nu == 0.0:
        return -0.25 * z * z
    if nu > -1.0:
        # lift the integrable endpoint singularity with one upward recurrence:
        # D_nu = z D_(nu-1) - (nu - 1) D_(nu-2), both shifted orders <= -1
        l1 = log_pcf_d_batch(nu - 1.0, z, rtol)
        l2 = log_pcf_d_batch(nu - 2.0, z, rtol)
        m = np.maximum(l1, l2)
        val = z * np.exp(l1 - m) + (1.0 - nu) * np.exp(l2 - m)
        if np.any(val <= 0.0):
            raise AccuracyError(f"recurrence lost positivity at nu={nu:g}")
        return m + np.log(val)
    c = -nu - 1.0
    return -0.25 * z * z - math.lgamma(-nu) + _log_integral_batch(c, z, rtol)


def log_pcf_d(nu: float, z: float, rtol: float = TOL_PCF) -> float:
    return float(log_pcf_d_batch(nu, np.array([z]), rtol)[0])


def pcf_d(nu: float, z: float, rtol: float = TOL_PCF) -> float:
    """Weber parabolic cylinder function D_nu(z), nu <= 0."""
    return math.exp(log_pcf_d(nu, z, rtol))


def pcf_d_pair(nu: float, z: float, rtol: float = TOL_PCF) -> tuple[float, float]:
    """(D_nu(z), D_(nu+1)(z)) with one consistent quadrature policy.

    Requires nu + 1 <= 0; the pair is what the derivative identity
    D_nu'(z) = (z/2) D_nu(z) - D_(nu+1)(z) consumes.
    """
    if nu + 1.0 > 0.0:
        raise UnsupportedRegimeError(
            f"pcf_d_pair needs nu + 1 <= 0, got nu={nu:g}")
    return pcf_d(nu, z, rtol), pcf_d(nu + 1.0, z, rtol)


@dataclass(frozen=True)
class WeberContext:
    """Derived quantities of the gauge reduction for one (params, q).

    p(x) = p_lin x + p_quad x^2 is the gauge exponent, z(x) = z0 + z1 x the
    affine argument map, b = -beta the mean-reversion rate and nu_q the
    (always < -1) order of the Weber functions involved.
    """

    b: float
    q: float
    nu_q: float
    p_lin: float
    p_quad: float
    z0: float
    z1: float

    def p(self, x):
        return self.p_lin * x + self.p_quad * x * x

    def p_prime(self, x):
        return self.p_lin + 2.0 * self.p_quad * x

    def z(self, x):
        return self.z0 + self.z1 * x


def make_context(params: "ModelParams", q: float) -> WeberContext:
    """Build the gauge context; the reduction needs strict mean reversion."""
    if params.beta >= 0.0:
        raise UnsupportedRegimeError(
            f"closed forms need beta < 0, got beta={params.beta:g}")
    if q < 0.0:
        raise ValueError(f"discount rate must be >= 0, got {q:g}")
    b = -params.beta
    sig2 = params.sigma * params.sigma
    nu_q = -1.0 - (params.lam + q) / b
    return WeberContext(
        b=b,
        q=q,
        nu_q=nu_q,
        p_lin=0.5 * params.eta - params.alpha / sig2,
        p_quad=0.5 * b / sig2,
        z0=math.sqrt(2.0) * (params.alpha + 0.5 * params.eta * sig2)
            / (params.sigma * math.sqrt(b)),
        z1=-math.sqrt(2.0 * b) / params.sigma,
    )
