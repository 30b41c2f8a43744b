"""Special functions and thermal momentum distributions.

Internal units fix the gas particle mass, the most probable gas velocity and
the reduced Planck constant to one, so that beta = 2 and p_beta = 1. All
functions below nevertheless accept explicit ``beta`` and ``m`` so that the
same code serves SI inputs at the CLI boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

SQRT_PI = math.sqrt(math.pi)

SERIES_RTOL = 1e-15
SERIES_MAX_TERMS = 500
SMALL_X = 1e-3
# Below this the closed forms cancel badly and the series is used instead.
CLOSED_FORM_X = 0.1
ASYMPTOTIC_Y = 60.0


@dataclass(frozen=True)
class UnitSystem:
    """Internal dimensionless units: m = v_beta = hbar = 1."""

    m: float = 1.0
    v_beta: float = 1.0
    hbar: float = 1.0

    @property
    def beta(self) -> float:
        return 2.0 / (self.m * self.v_beta**2)

    @property
    def p_beta(self) -> float:
        return self.m * self.v_beta


INTERNAL = UnitSystem()


def erf(x):
    """Error function, vectorised."""
    return special.erf(x)


def _forbidden_c(c: float) -> bool:
    return c <= 0 and float(c).is_integer()


def kummer_series(a: float, c: float, x: float) -> float:
    """Direct term-by-term sum of M(a, c; x).

    Stops once the next term drops below ``SERIES_RTOL`` times the partial
    sum, or after ``SERIES_MAX_TERMS`` terms.
    """
    if _forbidden_c(c):
        raise ValueError(f"hyp1f1 undefined for c = {c}")
    term = 1.0
    total = 1.0
    for k in range(SERIES_MAX_TERMS):
        term *= (a + k) / (c + k) * x / (k + 1)
        total += term
        if term == 0.0 or abs(term) < SERIES_RTOL * abs(total):
            break
    return total


def _asymptotic_negative(a: float, c: float, y: float) -> float:
    # M(a, c; -y) for large y > 0; the exponentially small part is dropped.
    if (c - a) <= 0 and float(c - a).is_integer():
        lead = 0.0
    else:
        sign = special.gammasgn(c) * special.gammasgn(c - a)
        lead = sign * math.exp(math.lgamma(c) - math.lgamma(c - a)) * y ** (-a)
    s = 1.0
    term = 1.0
    for k in range(40):
        nxt = term * (a + k) * (a - c + 1 + k) / ((k + 1) * y)
        if abs(nxt) > abs(term):
            break
        term = nxt
        s += term
        if abs(term) < 1e-17 * abs(s):
            break
    return lead * s


def _hyp1f1_scalar(a: float, c: float, x: float) -> float:
    if x == 0.0:
        return 1.0
    if x > 0.0:
        return kummer_series(a, c, x)
    y = -x
    if y > ASYMPTOTIC_Y:
        return _asymptotic_negative(a, c, y)
    # Kummer's transformation turns an alternating series into a positive one.
    return math.exp(x) * kummer_series(c - a, c, y)


def _f_m12_52(x):
    # 1F1(-1/2, 5/2; -x^2)
    x2 = x * x
    e = np.exp(-x2)
    r = SQRT_PI / 2.0 * special.erf(x) / x
    return 3.0 / 16.0 / x2 * ((1 + 2 * x2) * e - (1 - 4 * x2 - 4 * x2 * x2) * r)


def _f_m32_32(x):
    # 1F1(-3/2, 3/2; -x^2)
    x2 = x * x
    e = np.exp(-x2)
    r = SQRT_PI / 2.0 * special.erf(x) / x
    return 0.125 * ((5 + 2 * x2) * e + (3 + 12 * x2 + 4 * x2 * x2) * r)


def _f_m12_32(x):
    # 1F1(-1/2, 3/2; -x^2)
    x2 = x * x
    return 0.5 * np.exp(-x2) + (1 + 2 * x2) * SQRT_PI / 4.0 * special.erf(x) / x


CLOSED_FORMS = {
    (-0.5, 2.5): _f_m12_52,
    (-1.5, 1.5): _f_m32_32,
    (-0.5, 1.5): _f_m12_32,
}


def hyp1f1_closed(a: float, c: float, x):
    """Closed form of M(a, c; -x^2) for the three tabulated parameter pairs.

    ``x`` here is the square root of the negated argument, ``x >= 0``.
    Small ``x`` falls back to the series to avoid cancellation.
    """
    f = CLOSED_FORMS[(float(a), float(c))]
    x = np.abs(np.asarray(x, dtype=float))
    out = np.empty_like(x)
    small = x < CLOSED_FORM_X
    if np.any(~small):
        out[~small] = f(x[~small])
    for idx in np.flatnonzero(small.ravel()):
        out.flat[idx] = kummer_series(a, c, -(x.flat[idx] ** 2))
    return out if out.ndim else float(out)


def hyp1f1(a: float, c: float, x):
    """Confluent hypergeometric function M(a, c; x) for real x.

    Uses the elementary closed forms when (a, c) is one of the tabulated
    pairs and x <= 0, otherwise a series (Kummer-transformed for x < 0) or
    the large-argument expansion.
    """
    if _forbidden_c(c):
        raise ValueError(f"hyp1f1 undefined for c = {c}")
    x = np.asarray(x, dtype=float)
    key = (float(a), float(c))
    out = np.empty_like(x)
    flat_x = x.ravel()
    flat_out = out.ravel()
    if key in CLOSED_FORMS:
        neg = flat_x <= 0
        if np.any(neg):
            flat_out[neg] = hyp1f1_closed(a, c, np.sqrt(-flat_x[neg]))
        rest = np.flatnonzero(~neg)
    else:
        rest = np.arange(flat_x.size)
    for i in rest:
        flat_out[i] = _hyp1f1_scalar(float(a), float(c), float(flat_x[i]))
    out = flat_out.reshape(x.shape)
    return out if out.ndim else float(out)


def loss_function(u):
    """1F1(-1/2, 3/2; -u^2), the shape of the constant cross-section loss rate.

    Scalar fast path used by the trajectory engine.
    """
    u = abs(u)
    if u < SMALL_X:
        u2 = u * u
        return 1.0 + u2 / 3.0 - u2 * u2 / 30.0
    return 0.5 * math.exp(-u * u) + (1 + 2 * u * u) * SQRT_PI / 4.0 * math.erf(u) / u


# Thermal distributions ------------------------------------------------------


def p_beta(beta: float, m: float) -> float:
    """Most probable momentum sqrt(2m/beta)."""
    return math.sqrt(2.0 * m / beta)


def mb_density(p, beta: float = 2.0, m: float = 1.0):
    """Maxwell-Boltzmann momentum density; ``p`` has a trailing axis of size 3."""
    pb = p_beta(beta, m)
    p = np.asarray(p, dtype=float)
    p2 = np.sum(p * p, axis=-1)
    return np.exp(-p2 / pb**2) / (math.pi**1.5 * pb**3)


def mb_marginal_2d(p, beta: float = 2.0, m: float = 1.0):
    """Two-dimensional marginal; ``p`` has a trailing axis of size 2 or 3.

    For three-component input the caller is responsible for ``p`` lying in
    the plane of interest; the full squared norm is used.
    """
    p = np.asarray(p, dtype=float)
    p2 = np.sum(p * p, axis=-1)
    return beta / (2 * math.pi * m) * np.exp(-beta * p2 / (2 * m))


def mb_marginal_1d(p, beta: float = 2.0, m: float = 1.0):
    """One-dimensional marginal of the Maxwell-Boltzmann density."""
    p = np.asarray(p, dtype=float)
    return math.sqrt(beta / (2 * math.pi * m)) * np.exp(-beta * p * p / (2 * m))


def reduced_mass(m: float, M: float) -> float:
    if math.isinf(M):
        return m
    return m * M / (m + M)
