"""Quantum Brownian motion limit of the collision dynamics.

Friction and diffusion coefficients follow from the microscopic
cross-section. The frictionless master equation

    d rho / dt = -(i/hbar)[H0, rho] - (Dpp/hbar^2)[X,[X,rho]]
                 - (Dxx/hbar^2)[P,[P,rho]]

is solved exactly for initial states that are finite sums of Gaussian
wave packets. The three Cartesian directions decouple, so states and
solutions are one-dimensional; a product state in 3D is the product of
three such factors.

Here hbar, beta and M enter explicitly rather than through the internal
rate unit.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .scattering import (
    BornPotential,
    Constant,
    GasSpec,
    ParticleSpec,
    PowerLaw,
    QuadratureError,
)


def _dsigma(model, p: float, theta: float, m: float, hbar: float) -> float:
    # Differential cross-section in the massive limit, m* = m.
    if isinstance(model, Constant):
        return model.strength
    if isinstance(model, PowerLaw):
        return model.strength * (p / m) ** model.exponent
    if isinstance(model, BornPotential):
        return float(model.differential_q(2.0 * p * math.sin(theta / 2.0), m, hbar))
    raise TypeError(f"unsupported model {type(model).__name__}")


def friction_coefficient(model, gas: GasSpec, particle: ParticleSpec, hbar: float = 1.0,
                         rtol: float = 1e-11) -> float:
    """Friction rate from the momentum-transfer cross-section.

    ``eta = (16/3) sqrt(pi) (m/M) n sqrt(2/(beta m))
    int du u^5 e^{-u^2} int dtheta sin(theta)(1 - cos(theta)) sigma(theta; u p_beta)``,
    evaluated by nested adaptive quadrature.
    """
    m = gas.m
    pb = gas.p_beta

    def transport(u):
        if u == 0.0:
            return 0.0
        val, err = integrate.quad(
            lambda th: math.sin(th) * (1 - math.cos(th)) * _dsigma(model, u * pb, th, m, hbar),
            0.0, math.pi, epsabs=0.0, epsrel=rtol, limit=200,
        )
        return val

    def outer(u):
        return u**5 * math.exp(-u * u) * transport(u)

    val, err = integrate.quad(outer, 0.0, 12.0, epsabs=0.0, epsrel=rtol, limit=200)
    if not math.isfinite(val) or err > 1e3 * rtol * abs(val):
        raise QuadratureError("friction integral did not converge", val, err)
    pref = 16.0 / 3.0 * math.sqrt(math.pi) * m / particle.M * gas.n_gas
    return pref * math.sqrt(2.0 / (gas.beta * m)) * val


def diffusion_coefficients(eta: float, beta: float, M: float,
                           hbar: float = 1.0) -> tuple[float, float]:
    """Momentum and position diffusion coefficients ``(Dpp, Dxx)``."""
    d_pp = eta * M / beta
    d_xx = beta * hbar**2 * eta / (16.0 * M)
    return d_pp, d_xx


def thermal_wavelength(beta: float, M: float, hbar: float = 1.0) -> float:
    return math.sqrt(2.0 * math.pi * hbar**2 * beta / M)


def crossover_ratio(t, beta: float, hbar: float = 1.0):
    """Cubic position-induced exponent over the position-diffusion exponent.

    Both decay exponents of momentum coherences grow with ``(P - P')^2``;
    their ratio is ``(4/3)(t / beta hbar)^2``, below one for ``t < beta hbar``.
    """
    t = np.asarray(t, float)
    return 4.0 / 3.0 * (t / (beta * hbar)) ** 2


# Gaussian-sum states --------------------------------------------------------


@dataclass(frozen=True)
class Gaussian1D:
    """``exp(-a x^2 + b x + c)`` with complex coefficients, ``Re a > 0``."""

    a: complex
    b: complex
    c: complex

    def __call__(self, x):
        x = np.asarray(x, float)
        return np.exp(-self.a * x * x + self.b * x + self.c)

    def fourier(self, hbar: float) -> "Gaussian1D":
        """Momentum representation ``(2 pi hbar)^-1/2 int dx e^{-ipx/hbar} g(x)``."""
        a, b = self.a, self.b
        # (b - i p/hbar)^2 / 4a expanded in p; principal root since Re a > 0.
        return Gaussian1D(
            a=1.0 / (4.0 * a * hbar**2),
            b=-1j * b / (2.0 * a * hbar),
            c=self.c + b * b / (4.0 * a) + cmath.log(cmath.sqrt(math.pi / a))
            - 0.5 * math.log(2.0 * math.pi * hbar),
        )

    def inverse_fourier(self, hbar: float) -> "Gaussian1D":
        a, b = self.a, self.b
        return Gaussian1D(
            a=1.0 / (4.0 * a * hbar**2),
            b=1j * b / (2.0 * a * hbar),
            c=self.c + b * b / (4.0 * a) + cmath.log(cmath.sqrt(math.pi / a))
            - 0.5 * math.log(2.0 * math.pi * hbar),
        )

    def free_evolve(self, t: float, M: float, hbar: float) -> "Gaussian1D":
        """Free Schroedinger evolution over time ``t``."""
        if t == 0:
            return self
        g = self.fourier(hbar)
        g = Gaussian1D(g.a + 1j * t / (2.0 * M * hbar), g.b, g.c)
        return g.inverse_fourier(hbar)


def wave_packet(x0: float, p0: float, width: float, hbar: float = 1.0) -> Gaussian1D:
    """Normalised packet centred at ``x0`` with mean momentum ``p0``.

    ``width`` is the position standard deviation.
    """
    if not width > 0:
        raise ValueError("packet width must be positive")
    a = 1.0 / (4.0 * width**2)
    b = 2.0 * a * x0 + 1j * p0 / hbar
    c = -a * x0 * x0 - 1j * p0 * x0 / hbar - 0.25 * math.log(2.0 * math.pi * width**2)
    return Gaussian1D(a, b, c)


@dataclass(frozen=True)
class GaussianSumState:
    """Pure state ``sum_k w_k g_k(x)`` in one dimension."""

    weights: tuple
    packets: tuple

    def __post_init__(self):
        if len(self.weights) != len(self.packets) or not self.packets:
            raise ValueError("need one weight per packet and at least one packet")
        for g in self.packets:
            if not isinstance(g, Gaussian1D):
                raise TypeError("only Gaussian packets are supported")
            if not complex(g.a).real > 0:
                raise ValueError("packets must be normalisable, Re a > 0")

    def position(self, x):
        return sum(w * g(x) for w, g in zip(self.weights, self.packets))

    def momentum(self, p, hbar: float = 1.0):
        return sum(w * g.fourier(hbar)(p) for w, g in zip(self.weights, self.packets))

    def norm(self, hbar: float = 1.0) -> float:
        total = 0.0 + 0.0j
        for wj, gj in zip(self.weights, self.packets):
            for wk, gk in zip(self.weights, self.packets):
                a = gj.a + np.conj(gk.a)
                b = gj.b + np.conj(gk.b)
                total += wj * np.conj(wk) * cmath.sqrt(math.pi / a) * cmath.exp(
                    b * b / (4 * a) + gj.c + np.conj(gk.c)
                )
        return float(total.real)

    def free_evolve(self, t: float, M: float, hbar: float = 1.0) -> "GaussianSumState":
        return GaussianSumState(
            self.weights, tuple(g.free_evolve(t, M, hbar) for g in self.packets)
        )


def superposition(packets, weights=None, hbar: float = 1.0) -> GaussianSumState:
    """Normalised superposition of packets, equal weights by default."""
    packets = tuple(packets)
    weights = tuple(complex(w) for w in (weights or [1.0] * len(packets)))
    state = GaussianSumState(weights, packets)
    scale = 1.0 / math.sqrt(state.norm(hbar))
    return GaussianSumState(tuple(w * scale for w in weights), packets)


def _gauss_pair_integral(alpha, beta_, gamma):
    # int dY exp(-alpha Y^2 + beta Y + gamma), Re alpha > 0.
    return np.sqrt(np.pi / alpha) * np.exp(beta_ * beta_ / (4 * alpha) + gamma)


def _pair_convolution(gj: Gaussian1D, gk: Gaussian1D, x, xp, width2, k0):
    # int dY N(Y; 2 width2) e^{i k0 Y} g_j(x - Y) conj(g_k(xp - Y)),
    # with width2 the variance parameter (kernel exp(-Y^2 / (4 width2)))
    # and the normalisation (4 pi width2)^-1/2.
    aj, bj, cj = gj.a, gj.b, gj.c
    ak, bk, ck = np.conj(gk.a), np.conj(gk.b), np.conj(gk.c)
    alpha = 1.0 / (4.0 * width2) + aj + ak
    lin = 1j * k0 + 2 * aj * x - bj + 2 * ak * xp - bk
    const = -aj * x * x + bj * x + cj - ak * xp * xp + bk * xp + ck
    return _gauss_pair_integral(alpha, lin, const) / np.sqrt(4.0 * np.pi * width2)


def _check_state(state):
    if not isinstance(state, GaussianSumState):
        raise TypeError("initial state must be a GaussianSumState")


def frictionless_solution_position(state: GaussianSumState, X, Xp, t: float,
                                   D_pp: float, D_xx: float, M: float,
                                   hbar: float = 1.0):
    """``<X|rho_t|X'>`` for the initial pure state ``state``.

    A Gaussian decay in ``X - X'`` multiplies a Gaussian-weighted, phase
    modulated average over displacements ``Y`` of the freely evolved state
    ``<X - Y|rho_t^free|X' - Y>``. All integrals are Gaussian and done in
    closed form.
    """
    _check_state(state)
    X = np.asarray(X, float)
    Xp = np.asarray(Xp, float)
    free = state.free_evolve(t, M, hbar)
    width = D_xx + D_pp * t * t / (3.0 * M * M)
    s = X - Xp
    if t == 0 or width == 0:
        rho = sum(
            wj * np.conj(wk) * gj(X) * np.conj(gk(Xp))
            for wj, gj in zip(free.weights, free.packets)
            for wk, gk in zip(free.weights, free.packets)
        )
        return np.exp(-D_pp * s * s * t / hbar**2) * rho
    factor = 1.0 - (D_pp / (4.0 * M * M)) * t * t / width
    decay = np.exp(-D_pp / hbar**2 * s * s * t * factor)
    k0 = D_pp * s * t / (2.0 * M * hbar * width)
    rho = 0.0
    for wj, gj in zip(free.weights, free.packets):
        for wk, gk in zip(free.weights, free.packets):
            rho = rho + wj * np.conj(wk) * _pair_convolution(gj, gk, X, Xp, width * t, k0)
    return decay * rho


def frictionless_solution_momentum(state: GaussianSumState, P, Pp, t: float,
                                   D_pp: float, D_xx: float, M: float,
                                   hbar: float = 1.0):
    """``<P|rho_t|P'>`` for the initial pure state ``state``.

    Decay from position diffusion, the cubic decay from localisation acting
    on a freely moving packet, and the free phase, times a Gaussian
    momentum-diffusion average of ``<P - Q|rho_0|P' - Q>``. The average
    carries the phase ``exp(i (P - P') Q t / (2 hbar M))``, which is what
    makes this form the exact Fourier transform of the position solution.
    """
    _check_state(state)
    P = np.asarray(P, float)
    Pp = np.asarray(Pp, float)
    q = P - Pp
    decay = np.exp(-D_xx * q * q * t / hbar**2 - D_pp * (q * t / M) ** 2 * t / (12.0 * hbar**2))
    phase = np.exp(-1j * (P * P - Pp * Pp) * t / (2.0 * M * hbar))
    mom = [g.fourier(hbar) for g in state.packets]
    if t == 0 or D_pp == 0:
        rho = sum(
            wj * np.conj(wk) * gj(P) * np.conj(gk(Pp))
            for wj, gj in zip(state.weights, mom)
            for wk, gk in zip(state.weights, mom)
        )
        return decay * phase * rho
    k0 = q * t / (2.0 * hbar * M)
    rho = 0.0
    for wj, gj in zip(state.weights, mom):
        for wk, gk in zip(state.weights, mom):
            rho = rho + wj * np.conj(wk) * _pair_convolution(gj, gk, P, Pp, D_pp * t, k0)
    return decay * phase * rho
