"""Closed-form solver for the unit-EIS aggregator.

With elasticity of intertemporal substitution equal to one, consumption is
myopic (c* = delta x) and the conjecture

    v(t, x, m) = x^(1-gamma) g(t, m) / (1 - gamma),
    g(t, m)    = exp(G(t) m^2 + L(t) m + H(t)),

closes the max-min equation provided (G, L, H) solve, forward in t with
zero terminal values,

    G' = G1 G^2 + G2 G + G3,
    L' = [G1 G + (disc - d1)] L - (2 h2_0 G + h1_src),
    H' = disc H - [(beta^2/2 + G0) L^2 + h2_0 L + beta^2 G + p0].

G has the closed Riccati form, L and H are single quadratures on top of it.
The log-linearized mode reduces to the same three equations with its own
constants and discount rate, so the reduction machinery below is written
against the neutral coefficient container ExpQuadCoeffs and shared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonpositiveWealth
from .exact import GBundle, GValue, StrategyPoint, ValueDerivs, derivs_from_g
from .params import ModelParams
from .quadrature import (
    DEFAULT_QUAD,
    QuadratureConfig,
    adaptive_gauss,
    gauss_rule_01,
)
from .riccati import riccati_zero_ic, riccati_zero_ic_integral

__all__ = [
    "ExpQuadCoeffs",
    "UnitEisCoeffs",
    "UnitEisSolver",
    "coeff_G",
    "coeff_G_integral",
    "coeff_L",
    "coeff_H",
    "glh_rhs",
    "glh_state",
    "quadratic_noise_coeff",
    "unit_coeffs",
    "unit_g",
    "unit_g_bundle",
    "unit_strategy",
    "unit_value",
    "unit_value_derivs",
]

_INNER_N = 64


# ---------------------------------------------------------------- #
# shared exponential-quadratic reduction

@dataclass(frozen=True)
class ExpQuadCoeffs:
    """Constants of one exponential-quadratic reduction.

    disc is the discount rate acting on L and H (delta here, the steady
    consumption-wealth level in the log-linearized mode); d1 is the slope
    of the m-drift; h1_src the constant source in the L equation; p0 the
    constant source in the H equation.
    """

    G0: float
    G1: float
    G2: float
    G3: float
    disc: float
    d1: float
    h1_src: float
    h2_0: float
    p0: float
    beta: float
    T: float

    def kernel_abc(self) -> tuple[float, float, float]:
        """Riccati coefficients of G in the lag variable tau = T - t."""
        return -self.G1, -self.G2, -self.G3


def coeff_G(t, co: ExpQuadCoeffs):
    """G(t), vectorized over t (requires t <= T)."""
    tau = co.T - np.asarray(t, dtype=float)
    a, b, c = co.kernel_abc()
    return riccati_zero_ic(tau, a, b, c)


def coeff_G_integral(t, s, co: ExpQuadCoeffs):
    """int_t^s G(u) du for t <= s <= T, vectorized."""
    a, b, c = co.kernel_abc()
    iy_t = riccati_zero_ic_integral(co.T - np.asarray(t, float), a, b, c)
    iy_s = riccati_zero_ic_integral(co.T - np.asarray(s, float), a, b, c)
    return iy_t - iy_s


def _L_integrand(t, s, co: ExpQuadCoeffs):
    """Integrand of L at outer time t, broadcast over s."""
    G = coeff_G(s, co)
    expo = (co.d1 - co.disc) * (np.asarray(s, float) - np.asarray(t, float))
    expo = expo - co.G1 * coeff_G_integral(t, s, co)
    return (2.0 * co.h2_0 * G + co.h1_src) * np.exp(expo)


def coeff_L(t: float, co: ExpQuadCoeffs, quad: QuadratureConfig = DEFAULT_QUAD) -> float:
    """L(t) = int_t^T (2 h2_0 G + h1_src) e^{(d1-disc)(s-t) - G1 int_t^s G} ds."""
    if t > co.T:
        raise ValueError(f"t = {t} is past the terminal time T = {co.T}")
    if t == co.T:
        return 0.0
    return float(adaptive_gauss(lambda s: _L_integrand(t, s, co), t, co.T, quad))


def _L_gl(t_arr: np.ndarray, co: ExpQuadCoeffs, x01: np.ndarray, w01: np.ndarray):
    """L at an array of times by one fixed Gauss-Legendre layer."""
    t_arr = np.asarray(t_arr, dtype=float)
    span = co.T - t_arr
    s = t_arr[..., None] + span[..., None] * x01
    f = _L_integrand(t_arr[..., None], s, co)
    return span * (f @ w01)


def coeff_H(t: float, co: ExpQuadCoeffs, quad: QuadratureConfig = DEFAULT_QUAD) -> float:
    """H(t), quadrature over s of the discounted L/G quadratic form.

    H(t) = int_t^T e^{-disc (s-t)} [(beta^2/2 + G0) L^2 + h2_0 L + beta^2 G] ds
           + p0 (1 - e^{-disc (T-t)}) / disc,
    with the affine term switching to its disc -> 0 limit p0 (T-t) when disc
    is tiny.  L at the inner nodes comes from the fixed layer _L_gl.
    """
    if t > co.T:
        raise ValueError(f"t = {t} is past the terminal time T = {co.T}")
    if t == co.T:
        return 0.0
    x01, w01 = gauss_rule_01(_INNER_N)

    def f(s: np.ndarray) -> np.ndarray:
        L = _L_gl(s, co, x01, w01)
        G = coeff_G(s, co)
        quad_form = (0.5 * co.beta**2 + co.G0) * L * L + co.h2_0 * L + co.beta**2 * G
        return np.exp(-co.disc * (s - t)) * quad_form

    integral = float(adaptive_gauss(f, t, co.T, quad))
    span = co.T - t
    if abs(co.disc) < 1e-12:
        affine = co.p0 * span
    else:
        affine = co.p0 * (-math.expm1(-co.disc * span)) / co.disc
    return integral + affine


def glh_rhs(G: float, L: float, H: float, co: ExpQuadCoeffs):
    """Forward-time right-hand sides (dG/dt, dL/dt, dH/dt) at given values."""
    dG = co.G1 * G * G + co.G2 * G + co.G3
    dL = (co.G1 * G + (co.disc - co.d1)) * L - (2.0 * co.h2_0 * G + co.h1_src)
    quad_form = (0.5 * co.beta**2 + co.G0) * L * L + co.h2_0 * L + co.beta**2 * G
    dH = co.disc * H - (quad_form + co.p0)
    return dG, dL, dH


def glh_state(
    t: float, co: ExpQuadCoeffs, quad: QuadratureConfig = DEFAULT_QUAD
) -> tuple[float, float, float]:
    """(G, L, H) at time t."""
    return float(coeff_G(t, co)), coeff_L(t, co, quad), coeff_H(t, co, quad)


def _glh_bundle(
    t: float, m: float, co: ExpQuadCoeffs, quad: QuadratureConfig = DEFAULT_QUAD
) -> GBundle:
    """g = exp(G m^2 + L m + H) with derivatives; g_t via the ODE right-hand
    sides, so it is exact up to the quadrature error in L and H."""
    G, L, H = glh_state(t, co, quad)
    g = math.exp(G * m * m + L * m + H)
    lin = 2.0 * G * m + L
    dG, dL, dH = glh_rhs(G, L, H, co)
    return GBundle(
        g=g,
        g_m=g * lin,
        g_mm=g * (lin * lin + 2.0 * G),
        g_t=g * (dG * m * m + dL * m + dH),
    )


# ---------------------------------------------------------------- #
# unit-EIS constants

def quadratic_noise_coeff(k: float, params: ModelParams) -> float:
    """Coefficient of (g_m)^2/g left by the pi/xi completion of squares.

    k beta^2 rho1^2 (1-gamma-Phi)^2 / (2 (Phi+gamma)(1-gamma))
    - Phi k beta^2 / (2 (1-gamma)) + beta^2 (k-1)/2.
    Identically zero at the derived k; the unit-EIS mode pins k = 1 and
    keeps the leftover.
    """
    mk, pf = params.market, params.preference
    one_g = 1.0 - pf.gamma
    pg = pf.Phi + pf.gamma
    return (
        k * mk.beta**2 * mk.rho1**2 * (one_g - pf.Phi) ** 2 / (2.0 * pg * one_g)
        - pf.Phi * k * mk.beta**2 / (2.0 * one_g)
        + mk.beta**2 * (k - 1.0) / 2.0
    )


@dataclass(frozen=True)
class UnitEisCoeffs:
    """Reduction constants plus the strategy loadings for the unit-EIS mode."""

    params: ModelParams
    red: ExpQuadCoeffs
    kappa: float
    c_pi: float

    @property
    def G0(self) -> float:
        return self.red.G0

    @property
    def G1(self) -> float:
        return self.red.G1

    @property
    def G2(self) -> float:
        return self.red.G2

    @property
    def G3(self) -> float:
        return self.red.G3


def unit_coeffs(params: ModelParams) -> UnitEisCoeffs:
    """Assemble the unit-EIS constants; rejects gamma = 1.

    The value normalization 1/(1-gamma) (and the noise coefficient G0 when
    Phi > 0) degenerates at gamma = 1 exactly; the mode covers EIS = 1 with
    any other gamma.
    """
    mk, ins, pf = params.market, params.insurance, params.preference
    one_g = 1.0 - pf.gamma
    if abs(one_g) < 1e-12:
        raise ValueError(
            "gamma = 1 makes the 1/(1-gamma) value normalization degenerate; "
            "perturb gamma away from 1"
        )
    pg = pf.Phi + pf.gamma
    if pg <= 0.0:
        raise ValueError(f"Phi + gamma = {pg!r} must be positive")
    kappa = mk.alpha - (one_g - pf.Phi) * mk.beta * mk.rho1 / pg
    G0 = quadratic_noise_coeff(1.0, params)
    x_claims = ins.lam * ins.theta1**2 * ins.mu1**2 / (2.0 * pg * ins.mu2)
    p0 = one_g * (
        pf.delta * math.log(pf.delta)
        + mk.r
        - pf.delta
        + (mk.a - mk.r) ** 2 / (2.0 * pg * mk.sigma**2)
        + x_claims
    )
    red = ExpQuadCoeffs(
        G0=G0,
        G1=-2.0 * (mk.beta**2 + 2.0 * G0),
        G2=2.0 * kappa + pf.delta,
        G3=-one_g / (2.0 * pg),
        disc=pf.delta,
        d1=-kappa,
        h1_src=one_g * (mk.a - mk.r) / (pg * mk.sigma),
        h2_0=(one_g - pf.Phi) * (mk.a - mk.r) * mk.beta * mk.rho1 / (pg * mk.sigma),
        p0=p0,
        beta=mk.beta,
        T=params.horizon.T,
    )
    c_pi = (one_g - pf.Phi) * mk.beta * mk.rho1 * mk.sigma / one_g
    return UnitEisCoeffs(params=params, red=red, kappa=kappa, c_pi=c_pi)


# ---------------------------------------------------------------- #
# g, value, strategy

def unit_g(
    t: float, m: float, co: UnitEisCoeffs, quad: QuadratureConfig = DEFAULT_QUAD
) -> GValue:
    """g(t, m) and g_m(t, m) = (2 G m + L) g."""
    b = _glh_bundle(t, m, co.red, quad)
    return GValue(g=b.g, g_m=b.g_m)


def unit_g_bundle(
    t: float, m: float, co: UnitEisCoeffs, quad: QuadratureConfig = DEFAULT_QUAD
) -> GBundle:
    """g with g_m, g_mm, g_t."""
    return _glh_bundle(t, m, co.red, quad)


def unit_value(
    t: float,
    x: float,
    m: float,
    co: UnitEisCoeffs,
    quad: QuadratureConfig = DEFAULT_QUAD,
) -> float:
    """v(t, x, m) = x^(1-gamma) g(t, m) / (1-gamma); requires x > 0."""
    if x <= 0.0:
        raise NonpositiveWealth(f"wealth must be positive, got x = {x}")
    gamma = co.params.preference.gamma
    g = unit_g(t, m, co, quad).g
    return x ** (1.0 - gamma) * g / (1.0 - gamma)


def unit_value_derivs(
    t: float,
    x: float,
    m: float,
    co: UnitEisCoeffs,
    quad: QuadratureConfig = DEFAULT_QUAD,
) -> ValueDerivs:
    """ValueDerivs at (t, x, m); the g-exponent is 1 here."""
    if x <= 0.0:
        raise NonpositiveWealth(f"wealth must be positive, got x = {x}")
    gb = unit_g_bundle(t, m, co, quad)
    return derivs_from_g(x, co.params.preference.gamma, 1.0, gb)


def unit_strategy(
    t: float,
    x: float,
    m: float,
    co: UnitEisCoeffs,
    quad: QuadratureConfig = DEFAULT_QUAD,
) -> StrategyPoint:
    """Optimal controls and worst-case distortions; c*/x = delta exactly."""
    if x <= 0.0:
        raise NonpositiveWealth(f"wealth must be positive, got x = {x}")
    mk, ins, pf = co.params.market, co.params.insurance, co.params.preference
    pg = pf.Phi + pf.gamma
    one_g = 1.0 - pf.gamma
    G, L, _ = glh_state(t, co.red, quad)
    u = 2.0 * G * m + L
    R = mk.sigma * m + mk.a - mk.r
    pi_over_x = (R + co.c_pi * u) / (pg * mk.sigma**2)
    q_over_x = ins.theta1 * ins.mu1 / (pg * ins.mu2)
    c_over_x = pf.delta
    xi1 = pf.Phi * R / (pg * mk.sigma) + pf.Phi * mk.beta * mk.rho1 * u / (one_g * pg)
    xi2 = pf.Phi * mk.beta * math.sqrt(1.0 - mk.rho1**2) * u / one_g
    xi3 = pf.Phi * ins.theta1 * ins.mu1 * math.sqrt(ins.lam) / (pg * math.sqrt(ins.mu2))
    return StrategyPoint(
        pi=pi_over_x * x,
        q=q_over_x * x,
        c=c_over_x * x,
        xi1=xi1,
        xi2=xi2,
        xi3=xi3,
        pi_over_x=pi_over_x,
        q_over_x=q_over_x,
        c_over_x=c_over_x,
    )


class UnitEisSolver:
    """Convenience wrapper binding params + quadrature config once."""

    aggregator = "unit"

    def __init__(self, params: ModelParams, quad: QuadratureConfig = DEFAULT_QUAD):
        self.params = params
        self.quad = quad
        self.coeffs = unit_coeffs(params)

    def G(self, t: float) -> float:
        return float(coeff_G(t, self.coeffs.red))

    def L(self, t: float) -> float:
        return coeff_L(t, self.coeffs.red, self.quad)

    def H(self, t: float) -> float:
        return coeff_H(t, self.coeffs.red, self.quad)

    def g(self, t: float, m: float) -> GValue:
        return unit_g(t, m, self.coeffs, self.quad)

    def g_full(self, t: float, m: float) -> GBundle:
        return unit_g_bundle(t, m, self.coeffs, self.quad)

    def value(self, t: float, x: float, m: float) -> float:
        return unit_value(t, x, m, self.coeffs, self.quad)

    def value_derivs(self, t: float, x: float, m: float) -> ValueDerivs:
        return unit_value_derivs(t, x, m, self.coeffs, self.quad)

    def strategy(self, t: float, x: float, m: float) -> StrategyPoint:
        return unit_strategy(t, x, m, self.coeffs, self.quad)
