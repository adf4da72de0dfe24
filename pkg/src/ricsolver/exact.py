"""Closed-form solution in the exact (non-unit-EIS) mode.

The value function is v(t, x, m) = x^(1-gamma) g(t, m)^k / (1-gamma) with

    g(t, m) = delta^phi * int_t^T h(t, m; s) ds + h(t, m; T),
    h(t, m; s) = exp(A(t, s) - B(t, s) m - C(t, s) m^2),

where (A, B, C) solve, backward in t with A = B = C = 0 at t = s,

    dC/dt = 2 beta^2 C^2 + 2 kappa C - b0
    dB/dt = (kappa + 2 beta^2 C) B - 2 h2_0 C + h1_1
    dA/dt = -(1/2) beta^2 B^2 + beta^2 C + h2_0 B - h1_0.

C has the usual Riccati closed form; B and A are reduced to quadratures
using the analytic antiderivative of C (coeff_C_integral below), so the
integrating factor exp(-int (kappa + 2 beta^2 C)) is evaluated in closed
form and only the outer integrals are numerical. Inner layers use fixed
64-node Gauss-Legendre (the integrands are entire in the integration
variable, so 64 nodes are converged far past the adaptive tolerances);
the outermost integral of every public quantity is adaptive and honors
the QuadratureConfig passed in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonpositiveWealth
from .params import DerivedCoeffs, ModelParams, derive_coeffs
from .quadrature import DEFAULT_QUAD, QuadratureConfig, adaptive_gauss, gauss_rule_01

_UNIT_PHI_TOL = 1e-9
_INNER_N = 64


@dataclass(frozen=True)
class ExactCoeffs:
    """DerivedCoeffs plus the reduced-equation constants.

    The reduced equation for g is
        g_t + (1/2) beta^2 g_mm + H2(m) g_m + H1(m) g + delta^phi = 0
    with H1(m) = h1_0 + h1_1 m - b0 m^2 and H2(m) = h2_0 - kappa m.
    c_pi is the factor loading inside pi*: pi*/x = (R + c_pi g_m/g)
    / ((Phi+gamma) sigma^2) with R = sigma m + a - r.
    """

    params: ModelParams
    base: DerivedCoeffs
    h1_0: float
    h1_1: float
    h2_0: float
    c_pi: float
    delta_phi: float
    beta: float
    T: float


@dataclass(frozen=True)
class GValue:
    """g and its m-derivative at one (t, m)."""

    g: float
    g_m: float


@dataclass(frozen=True)
class GBundle:
    """g with every derivative the verification layer consumes."""

    g: float
    g_m: float
    g_mm: float
    g_t: float


@dataclass(frozen=True)
class StrategyPoint:
    """Optimal controls and worst-case drift distortions at one (t, x, m).

    pi: amount in the risky asset; q: retained claim fraction; c: consumption
    rate; xi1..xi3 distort the asset, the orthogonal factor noise, and the
    claim noise. *_over_x are the wealth-scaled ratios.
    """

    pi: float
    q: float
    c: float
    xi1: float
    xi2: float
    xi3: float
    pi_over_x: float
    q_over_x: float
    c_over_x: float


@dataclass(frozen=True)
class ValueDerivs:
    """v and the partial derivatives the HJBI bracket consumes."""

    v: float
    v_t: float
    v_x: float
    v_xx: float
    v_m: float
    v_mm: float
    v_xm: float


def exact_coeffs(params: ModelParams) -> ExactCoeffs:
    """Assemble every constant of the closed form; validates applicability."""
    base = derive_coeffs(params)
    if abs(base.phi - 1.0) <= _UNIT_PHI_TOL:
        raise ValueError(
            f"derived phi = {base.phi!r} is within {_UNIT_PHI_TOL} of 1; "
            "this mode has a removable singularity there, use the unit-EIS solver"
        )
    if 2.0 * base.kappa + base.Delta <= 0.0:
        raise ValueError(
            f"2*kappa + Delta = {2.0 * base.kappa + base.Delta:.6e} <= 0; "
            "C(t, s) blows up in finite time for these parameters"
        )
    mk, ins, pf = params.market, params.insurance, params.preference
    one_g = 1.0 - pf.gamma
    pg = pf.Phi + pf.gamma
    x_claims = ins.lam * ins.theta1**2 * ins.mu1**2 / (2.0 * pg * ins.mu2)
    # delta/(1 - 1/phi) is written as delta*phi/(phi-1) so phi = 0 is fine;
    # phi = 1 is excluded above.
    h1_0 = (one_g / base.k) * (
        mk.r
        + (mk.a - mk.r) ** 2 / (2.0 * pg * mk.sigma**2)
        + x_claims
        - pf.delta * base.phi / (base.phi - 1.0)
    )
    h1_1 = one_g * (mk.a - mk.r) / (base.k * pg * mk.sigma)
    h2_0 = (one_g - pf.Phi) * (mk.a - mk.r) * mk.beta * mk.rho1 / (pg * mk.sigma)
    c_pi = (one_g - pf.Phi) * base.k * mk.beta * mk.rho1 * mk.sigma / one_g
    return ExactCoeffs(
        params=params,
        base=base,
        h1_0=h1_0,
        h1_1=h1_1,
        h2_0=h2_0,
        c_pi=c_pi,
        delta_phi=pf.delta**base.phi,
        beta=mk.beta,
        T=params.horizon.T,
    )


# ---------------------------------------------------------------- #
# A, B, C

def coeff_C(t, s, co: ExactCoeffs):
    """C(t, s), vectorized over broadcastable t and s (requires t <= s).

    Written in terms of E = exp(-Delta (s-t)) in (0, 1] so no growing
    exponential ever appears.
    """
    tau = np.asarray(s, dtype=float) - np.asarray(t, dtype=float)
    if np.any(tau < 0.0):
        raise ValueError("coeff_C needs t <= s")
    base = co.base
    E = np.exp(-base.Delta * tau)
    P = 2.0 * base.kappa + base.Delta
    Q = base.Delta - 2.0 * base.kappa
    out = 2.0 * base.b0 * (1.0 - E) / (P + Q * E)
    return out if out.ndim else float(out)


def coeff_C_integral(theta, co: ExactCoeffs):
    """int_0^theta C(s - u, s) du as a function of the lag theta = s - t.

    Closed form; the (2/Q) log term is evaluated through log1p and switched
    to its series when |Q z| is tiny, so the near-cancellation at Delta ~
    2 kappa costs no precision.
    """
    th = np.asarray(theta, dtype=float)
    if np.any(th < 0.0):
        raise ValueError("coeff_C_integral needs theta >= 0")
    base = co.base
    P = 2.0 * base.kappa + base.Delta
    Q = base.Delta - 2.0 * base.kappa
    z = np.expm1(-base.Delta * th) / (P + Q)
    qz = Q * z
    small = np.abs(qz) < 1e-8
    safe_q = np.where(small, 1.0, Q)
    term = np.where(
        small,
        2.0 * z * (1.0 - 0.5 * qz + qz * qz / 3.0),
        2.0 * np.log1p(np.where(small, 0.0, qz)) / safe_q,
    )
    out = (2.0 * base.b0 / P) * (th + term)
    return out if out.ndim else float(out)


def _decay_exponent(t_lo, u, s, co: ExactCoeffs):
    """int_{t_lo}^{u} (kappa + 2 beta^2 C(w, s)) dw, all arrays broadcastable."""
    ic_lo = coeff_C_integral(np.asarray(s, float) - np.asarray(t_lo, float), co)
    ic_u = coeff_C_integral(np.asarray(s, float) - np.asarray(u, float), co)
    return co.base.kappa * (np.asarray(u, float) - np.asarray(t_lo, float)) + 2.0 * co.beta**2 * (
        ic_lo - ic_u
    )


def _B_gl(t_lo, s, co: ExactCoeffs, x01: np.ndarray, w01: np.ndarray):
    """B(t_lo, s) by one fixed Gauss-Legendre layer, broadcast over inputs."""
    t_lo, s = np.broadcast_arrays(np.asarray(t_lo, float), np.asarray(s, float))
    span = s - t_lo
    u = t_lo[..., None] + span[..., None] * x01
    s_b = s[..., None]
    C = coeff_C(u, s_b, co)
    decay = np.exp(-_decay_exponent(t_lo[..., None], u, s_b, co))
    f = (2.0 * co.h2_0 * C - co.h1_1) * decay
    return span * (f @ w01)


def _A_gl(t_lo, s, co: ExactCoeffs, x01: np.ndarray, w01: np.ndarray):
    """A(t_lo, s) by two nested fixed layers, broadcast over inputs."""
    t_lo, s = np.broadcast_arrays(np.asarray(t_lo, float), np.asarray(s, float))
    span = s - t_lo
    tau = t_lo[..., None] + span[..., None] * x01
    s_b = s[..., None]
    B = _B_gl(tau, s_b, co, x01, w01)
    C = coeff_C(tau, s_b, co)
    f = 0.5 * co.beta**2 * B * B - co.beta**2 * C - co.h2_0 * B
    return span * (f @ w01) + co.h1_0 * span


def coeff_B(t: float, s: float, co: ExactCoeffs, quad: QuadratureConfig = DEFAULT_QUAD) -> float:
    """B(t, s) = int_t^s (2 h2_0 C(u,s) - h1_1) e^{-int_t^u (kappa+2 beta^2 C)} du.

    Adaptive in the (single) outer variable; the integrating factor is
    closed-form via coeff_C_integral.
    """
    if s < t:
        raise ValueError("coeff_B needs t <= s")
    if s == t:
        return 0.0

    def f(u: np.ndarray) -> np.ndarray:
        C = coeff_C(u, s, co)
        return (2.0 * co.h2_0 * C - co.h1_1) * np.exp(-_decay_exponent(t, u, s, co))

    return float(adaptive_gauss(f, t, s, quad))


def coeff_A(t: float, s: float, co: ExactCoeffs, quad: QuadratureConfig = DEFAULT_QUAD) -> float:
    """A(t, s) = int_t^s [beta^2 B^2/2 - beta^2 C - h2_0 B] du + h1_0 (s-t).

    Adaptive outer integral; B at the outer nodes comes from the fixed
    inner layer (_B_gl), which is converged to machine precision for these
    entire integrands.
    """
    if s < t:
        raise ValueError("coeff_A needs t <= s")
    if s == t:
        return 0.0
    x01, w01 = gauss_rule_01(_INNER_N)

    def f(tau: np.ndarray) -> np.ndarray:
        B = _B_gl(tau, s, co, x01, w01)
        C = coeff_C(tau, s, co)
        return 0.5 * co.beta**2 * B * B - co.beta**2 * C - co.h2_0 * B

    return float(adaptive_gauss(f, t, s, quad)) + co.h1_0 * (s - t)


def abc_rhs(A, B, C, co: ExactCoeffs):
    """Backward-ODE right-hand sides (dA/dt, dB/dt, dC/dt) at given values."""
    base = co.base
    dC = 2.0 * co.beta**2 * C * C + 2.0 * base.kappa * C - base.b0
    dB = (base.kappa + 2.0 * co.beta**2 * C) * B - 2.0 * co.h2_0 * C + co.h1_1
    dA = -0.5 * co.beta**2 * B * B + co.beta**2 * C + co.h2_0 * B - co.h1_0
    return dA, dB, dC


def h_eval(
    t: float, m: float, s: float, co: ExactCoeffs, quad: QuadratureConfig = DEFAULT_QUAD
) -> float:
    """h(t, m; s) = exp(A - B m - C m^2)."""
    A = coeff_A(t, s, co, quad)
    B = coeff_B(t, s, co, quad)
    C = coeff_C(t, s, co)
    return math.exp(A - B * m - C * m * m)


# ---------------------------------------------------------------- #
# g and everything built on it

def _abc_panel(t: float, s_arr: np.ndarray, co: ExactCoeffs):
    """(A, B, C) at fixed t for an array of upper limits s."""
    x01, w01 = gauss_rule_01(_INNER_N)
    A = _A_gl(t, s_arr, co, x01, w01)
    B = _B_gl(t, s_arr, co, x01, w01)
    C = coeff_C(t, s_arr, co)
    return A, B, C


def g_eval(
    t: float, m: float, co: ExactCoeffs, quad: QuadratureConfig = DEFAULT_QUAD
) -> GValue:
    """g(t, m) and g_m(t, m), sharing one pass over the s-integral.

    g_m is obtained by differentiating under the integral sign: each h
    contributes h * (-(B + 2 C m)).
    """
    bundle = g_bundle(t, m, co, quad)
    return GValue(g=bundle.g, g_m=bundle.g_m)


def g_bundle(
    t: float, m: float, co: ExactCoeffs, quad: QuadratureConfig = DEFAULT_QUAD
) -> GBundle:
    """g with g_m, g_mm, g_t in one adaptive pass.

    All derivatives are differentiation under the integral; g_t uses the
    backward-ODE right-hand sides for (A_t, B_t, C_t) plus the boundary
    term -delta^phi from the moving lower limit (h(t, m; t) = 1).
    """
    T = co.T
    if t > T:
        raise ValueError(f"t = {t} is past the terminal time T = {T}")

    def columns(s_arr: np.ndarray) -> np.ndarray:
        A, B, C = _abc_panel(t, s_arr, co)
        h = np.exp(A - B * m - C * m * m)
        lin = B + 2.0 * C * m
        dA, dB, dC = abc_rhs(A, B, C, co)
        return np.stack(
            [
                h,
                -h * lin,
                h * (lin * lin - 2.0 * C),
                h * (dA - m * dB - m * m * dC),
            ],
            axis=-1,
        )

    if t == T:
        ints = np.zeros(4)
    else:
        ints = adaptive_gauss(columns, t, T, quad)
    term = columns(np.array([T]))[0]
    dp = co.delta_phi
    return GBundle(
        g=float(dp * ints[0] + term[0]),
        g_m=float(dp * ints[1] + term[1]),
        g_mm=float(dp * ints[2] + term[2]),
        g_t=float(dp * (ints[3] - 1.0) + term[3]),
    )


def value_function(
    t: float,
    x: float,
    m: float,
    co: ExactCoeffs,
    quad: QuadratureConfig = DEFAULT_QUAD,
) -> float:
    """v(t, x, m) = x^(1-gamma) g^k / (1-gamma); requires x > 0."""
    if x <= 0.0:
        raise NonpositiveWealth(f"wealth must be positive, got x = {x}")
    gamma = co.params.preference.gamma
    g = g_eval(t, m, co, quad).g
    return x ** (1.0 - gamma) * g**co.base.k / (1.0 - gamma)


def derivs_from_g(x: float, gamma: float, k: float, gb: GBundle) -> ValueDerivs:
    """Partial derivatives of v = x^(1-gamma) g^k / (1-gamma) from a g-bundle.

    Shared by every mode whose value function has this separable shape; the
    unit-EIS mode passes k = 1.
    """
    one_g = 1.0 - gamma
    gk = gb.g**k
    v = x**one_g * gk / one_g
    ratio_m = k * gb.g_m / gb.g
    return ValueDerivs(
        v=v,
        v_t=v * k * gb.g_t / gb.g,
        v_x=x ** (-gamma) * gk,
        v_xx=-gamma * x ** (-gamma - 1.0) * gk,
        v_m=v * ratio_m,
        v_mm=v * (k * (k - 1.0) * (gb.g_m / gb.g) ** 2 + k * gb.g_mm / gb.g),
        v_xm=x ** (-gamma) * gk * ratio_m,
    )


def value_derivs(
    t: float,
    x: float,
    m: float,
    co: ExactCoeffs,
    quad: QuadratureConfig = DEFAULT_QUAD,
) -> ValueDerivs:
    """ValueDerivs at (t, x, m); requires x > 0."""
    if x <= 0.0:
        raise NonpositiveWealth(f"wealth must be positive, got x = {x}")
    gb = g_bundle(t, m, co, quad)
    return derivs_from_g(x, co.params.preference.gamma, co.base.k, gb)


def strategy(
    t: float,
    x: float,
    m: float,
    co: ExactCoeffs,
    quad: QuadratureConfig = DEFAULT_QUAD,
) -> StrategyPoint:
    """Optimal (pi, q, c) and worst-case (xi1, xi2, xi3) at (t, x, m)."""
    if x <= 0.0:
        raise NonpositiveWealth(f"wealth must be positive, got x = {x}")
    gv = g_eval(t, m, co, quad)
    u = gv.g_m / gv.g
    return strategy_from_ratio(t, x, m, u, gv.g, co.base.k, co)


def strategy_from_ratio(
    t: float, x: float, m: float, u: float, g: float, k: float, co: ExactCoeffs
) -> StrategyPoint:
    """Strategy formulas given u = g_m/g; the log-linearized mode reuses
    them with its own (u, g)."""
    mk, ins, pf = co.params.market, co.params.insurance, co.params.preference
    pg = pf.Phi + pf.gamma
    one_g = 1.0 - pf.gamma
    R = mk.sigma * m + mk.a - mk.r
    pi_over_x = (R + co.c_pi * u) / (pg * mk.sigma**2)
    q_over_x = ins.theta1 * ins.mu1 / (pg * ins.mu2)
    c_over_x = co.delta_phi / g
    xi1 = pf.Phi * R / (pg * mk.sigma) + pf.Phi * k * mk.beta * mk.rho1 * u / (one_g * pg)
    xi2 = pf.Phi * k * mk.beta * math.sqrt(1.0 - mk.rho1**2) * u / one_g
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


class ExactSolver:
    """Convenience wrapper binding params + quadrature config once."""

    aggregator = "power"

    def __init__(self, params: ModelParams, quad: QuadratureConfig = DEFAULT_QUAD):
        self.params = params
        self.quad = quad
        self.coeffs = exact_coeffs(params)

    def C(self, t: float, s: float) -> float:
        return float(coeff_C(t, s, self.coeffs))

    def B(self, t: float, s: float) -> float:
        return coeff_B(t, s, self.coeffs, self.quad)

    def A(self, t: float, s: float) -> float:
        return coeff_A(t, s, self.coeffs, self.quad)

    def h(self, t: float, m: float, s: float) -> float:
        return h_eval(t, m, s, self.coeffs, self.quad)

    def g(self, t: float, m: float) -> GValue:
        return g_eval(t, m, self.coeffs, self.quad)

    def g_full(self, t: float, m: float) -> GBundle:
        return g_bundle(t, m, self.coeffs, self.quad)

    def value(self, t: float, x: float, m: float) -> float:
        return value_function(t, x, m, self.coeffs, self.quad)

    def value_derivs(self, t: float, x: float, m: float) -> ValueDerivs:
        return value_derivs(t, x, m, self.coeffs, self.quad)

    def strategy(self, t: float, x: float, m: float) -> StrategyPoint:
        return strategy(t, x, m, self.coeffs, self.quad)
