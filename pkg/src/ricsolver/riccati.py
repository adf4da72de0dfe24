"""Scalar Riccati kernel with zero initial condition.

Every quadratic-in-m ansatz in this package reduces its m^2 coefficient to
the same scalar problem in the lag variable tau = T - t:

    y'(tau) = a y(tau)^2 + b y(tau) + c,    y(0) = 0.

When the discriminant b^2 - 4ac is positive the solution and its running
integral are elementary.  Both are arranged around E = exp(-theta tau),
which lives in (0, 1] for tau >= 0, so no growing exponential appears no
matter how large the horizon is.
"""

from __future__ import annotations

import numpy as np

from .errors import ComplexDiscriminant

__all__ = ["riccati_zero_ic", "riccati_zero_ic_integral"]


def _theta_pq(a: float, b: float, c: float) -> tuple[float, float, float]:
    disc = b * b - 4.0 * a * c
    if disc <= 0.0:
        raise ComplexDiscriminant(
            f"b^2 - 4ac = {disc:.6e} <= 0; the closed form needs a positive "
            "discriminant (two real equilibria)"
        )
    theta = float(np.sqrt(disc))
    P = theta - b
    Q = theta + b
    if P <= 0.0:
        raise ValueError(
            f"theta - b = {P:.6e} <= 0; y(tau) reaches a pole in finite time "
            "for these coefficients"
        )
    return theta, P, Q


def riccati_zero_ic(tau, a: float, b: float, c: float):
    """y(tau) solving y' = a y^2 + b y + c with y(0) = 0, vectorized in tau.

    y = 2 c (1 - E) / (P + Q E) with theta = sqrt(b^2 - 4ac), P = theta - b,
    Q = theta + b, E = exp(-theta tau).  P > 0 keeps the denominator positive
    for every tau >= 0, so the formula is globally valid there.
    """
    th = np.asarray(tau, dtype=float)
    if np.any(th < 0.0):
        raise ValueError("riccati_zero_ic needs tau >= 0")
    theta, P, Q = _theta_pq(a, b, c)
    E = np.exp(-theta * th)
    out = 2.0 * c * (1.0 - E) / (P + Q * E)
    return out if out.ndim else float(out)


def riccati_zero_ic_integral(tau, a: float, b: float, c: float):
    """int_0^tau y(u) du for the same y, vectorized in tau.

    Equals (2c/P) [tau + (2/Q) ln((P + Q E)/(P + Q))].  The log is evaluated
    as log1p(Q z) with z = expm1(-theta tau)/(P + Q) and switched to its
    series when |Q z| is tiny, so the Q ~ 0 cancellation costs no precision.
    """
    th = np.asarray(tau, dtype=float)
    if np.any(th < 0.0):
        raise ValueError("riccati_zero_ic_integral needs tau >= 0")
    theta, P, Q = _theta_pq(a, b, c)
    z = np.expm1(-theta * th) / (P + Q)
    qz = Q * z
    small = np.abs(qz) < 1e-8
    safe_q = np.where(small, 1.0, Q)
    term = np.where(
        small,
        2.0 * z * (1.0 - 0.5 * qz + qz * qz / 3.0),
        2.0 * np.log1p(np.where(small, 0.0, qz)) / safe_q,
    )
    out = (2.0 * c / P) * (th + term)
    return out if out.ndim else float(out)
