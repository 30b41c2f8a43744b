"""Collision models and the classical Boltzmann rates built from them.

Three models are provided: a constant cross-section, a power law in the
relative speed, and the first Born approximation for a radial potential.
Only the Born model carries a scattering phase; the other two expose the
differential cross-section ``|f|^2`` alone.

All functions take explicit masses, ``beta`` and ``hbar`` so that any
consistent unit system works; the defaults are the internal units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special

from .core_math import SQRT_PI, hyp1f1, mb_marginal_1d, reduced_mass

GH_START = 16
GH_MAX = 256
GH_RTOL = 1e-8


class PhaseFreeModel(TypeError):
    """Raised when an amplitude is requested from a modulus-only model."""


class QuadratureError(RuntimeError):
    """Raised when a quadrature misses its tolerance; carries the estimate."""

    def __init__(self, message: str, estimate: float = math.nan, error: float = math.nan):
        super().__init__(f"{message} (estimate {estimate!r}, error {error!r})")
        self.estimate = estimate
        self.error = error


# Specs -----------------------------------------------------------------------

STATISTICS = ("MB", "BE", "FD")


@dataclass(frozen=True)
class GasSpec:
    """Ideal background gas."""

    n_gas: float = 1.0
    m: float = 1.0
    beta: float = 2.0
    statistics: str = "MB"
    z: float = 0.0

    def __post_init__(self):
        if not self.n_gas > 0:
            raise ValueError("n_gas must be positive")
        if not self.m > 0:
            raise ValueError("gas mass m must be positive")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.statistics not in STATISTICS:
            raise ValueError(f"statistics must be one of {STATISTICS}")
        if self.statistics == "BE" and not 0 < self.z < 1:
            raise ValueError("Bose-Einstein fugacity must lie in (0, 1)")
        if self.statistics == "FD" and not self.z > 0:
            raise ValueError("Fermi-Dirac fugacity must be positive")

    @property
    def p_beta(self) -> float:
        return math.sqrt(2.0 * self.m / self.beta)

    @property
    def v_beta(self) -> float:
        return self.p_beta / self.m

    @property
    def mean_speed(self) -> float:
        """Mean thermal speed ``sqrt(8 / (pi m beta))``."""
        return math.sqrt(8.0 / (math.pi * self.m * self.beta))


@dataclass(frozen=True)
class ParticleSpec:
    """Test particle of mass ``M``, optionally with a reference momentum."""

    M: float = 1.0
    P0: tuple | None = None

    def __post_init__(self):
        if not self.M > 0:
            raise ValueError("test particle mass M must be positive")

    def reduced_mass(self, gas: GasSpec) -> float:
        return reduced_mass(gas.m, self.M)

    def mass_ratio(self, gas: GasSpec) -> float:
        return gas.m / self.M


# Models ------------------------------------------------------------------------


def _norm(v):
    v = np.asarray(v, dtype=float)
    return np.sqrt(np.sum(v * v, axis=-1))


@dataclass(frozen=True)
class Constant:
    """Isotropic constant cross-section, ``|f|^2 = sigma_tot / 4 pi``."""

    sigma_tot: float
    has_phase = False

    def __post_init__(self):
        if not self.sigma_tot > 0:
            raise ValueError("sigma_tot must be positive")

    @property
    def exponent(self) -> float:
        return 0.0

    @property
    def strength(self) -> float:
        return self.sigma_tot / (4 * math.pi)

    def differential(self, p_f, p_i, mstar: float = 0.5, hbar: float = 1.0):
        shape = np.broadcast_shapes(np.shape(p_f)[:-1], np.shape(p_i)[:-1])
        return np.full(shape, self.strength)

    def differential_q(self, q, mstar: float = 0.5, hbar: float = 1.0):
        return np.full(np.shape(q), self.strength)

    def total_cross_section(self, p, mstar: float = 0.5, hbar: float = 1.0):
        return np.full(np.shape(p), self.sigma_tot) if np.ndim(p) else self.sigma_tot


@dataclass(frozen=True)
class PowerLaw:
    """``|f|^2 = c |v_rel|^a`` per solid angle, ``v_rel`` the relative speed."""

    c: float
    a: float
    has_phase = False

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("power-law strength c must be positive")
        if not self.a > -3:
            raise ValueError("power-law exponent must exceed -3")

    @property
    def exponent(self) -> float:
        return self.a

    @property
    def strength(self) -> float:
        return self.c

    def differential(self, p_f, p_i, mstar: float = 0.5, hbar: float = 1.0):
        # Symmetric in the two arguments; on shell both moduli coincide.
        pf2 = np.sum(np.asarray(p_f, float) ** 2, axis=-1)
        pi2 = np.sum(np.asarray(p_i, float) ** 2, axis=-1)
        v = np.sqrt(0.5 * (pf2 + pi2)) / mstar
        return self.c * v**self.a

    def total_cross_section(self, p, mstar: float = 0.5, hbar: float = 1.0):
        return 4 * math.pi * self.c * (np.asarray(p, float) / mstar) ** self.a


@dataclass(frozen=True)
class GaussianPotential:
    """``V(r) = V0 exp(-r^2 / r0^2)``, with an exact Fourier transform."""

    V0: float
    r0: float

    def __post_init__(self):
        if not self.r0 > 0:
            raise ValueError("potential range r0 must be positive")

    def __call__(self, r):
        return self.V0 * np.exp(-((np.asarray(r, float) / self.r0) ** 2))

    @property
    def scale(self) -> float:
        return self.r0

    def born_closed(self, q, mstar: float, hbar: float = 1.0):
        """Closed-form Born amplitude at momentum transfer ``q``."""
        q = np.asarray(q, dtype=float)
        pref = -mstar / (2 * math.pi * hbar**2) * self.V0 * math.pi**1.5 * self.r0**3
        return pref * np.exp(-((q * self.r0 / hbar) ** 2) / 4)

    def total_closed(self, p, mstar: float, hbar: float = 1.0):
        """Closed-form total Born cross-section at relative momentum ``p``."""
        p = np.asarray(p, dtype=float)
        amp = self.born_closed(0.0, mstar, hbar)
        k = p * self.r0 / hbar
        small = k < 1e-4
        ks = np.where(small, 1.0, k)
        val = 2 * math.pi * amp**2 * (-np.expm1(-2 * ks * ks)) / (ks * ks)
        return np.where(small, 4 * math.pi * amp**2 * (1 - k * k), val)


@dataclass(frozen=True)
class RadialPotential:
    """Tabulated or analytic radial potential ``V(r)`` with a length scale."""

    func: Callable
    scale: float

    def __call__(self, r):
        return self.func(np.asarray(r, float))


def born_amplitude(potential, q, mstar: float, hbar: float = 1.0, rtol: float = 1e-10):
    """First Born amplitude of a radial potential at transfer modulus ``q``.

    ``f_B(q) = -(2 m* / hbar^2) int_0^inf r^2 V(r) sinc(q r / hbar) dr``.
    Raises :class:`QuadratureError` when the quadrature misses ``rtol``.
    """
    qs = np.atleast_1d(np.asarray(q, dtype=float))
    out = np.empty(qs.shape)
    span = 40.0 * potential.scale
    for i, qi in enumerate(qs.ravel()):
        k = abs(qi) / hbar

        def integrand(r, k=k):
            return r * r * potential(r) * np.sinc(k * r / math.pi)

        val, err = integrate.quad(integrand, 0.0, span, limit=400, epsabs=0.0, epsrel=rtol)
        if not math.isfinite(val) or err > max(1e3 * rtol * abs(val), 1e-300):
            raise QuadratureError("Born amplitude quadrature did not converge", val, err)
        out.flat[i] = -2.0 * mstar / hbar**2 * val
    return out.reshape(np.shape(q)) if np.ndim(q) else float(out[0])


@dataclass(frozen=True)
class BornPotential:
    """First Born approximation for a radial potential.

    The forward amplitude is completed by the optical theorem,
    ``f_0(p) = f_B(0) + i p sigma_B(p) / (4 pi hbar)``, since the first
    Born amplitude alone is real.
    """

    potential: object
    has_phase = True

    def amplitude(self, q, mstar: float, hbar: float = 1.0):
        closed = getattr(self.potential, "born_closed", None)
        if closed is not None:
            return closed(q, mstar, hbar)
        return born_amplitude(self.potential, q, mstar, hbar)

    def differential_q(self, q, mstar: float, hbar: float = 1.0):
        return np.asarray(self.amplitude(q, mstar, hbar)) ** 2

    def differential(self, p_f, p_i, mstar: float, hbar: float = 1.0):
        q = _norm(np.asarray(p_f, float) - np.asarray(p_i, float))
        return self.differential_q(q, mstar, hbar)

    def total_cross_section(self, p, mstar: float, hbar: float = 1.0):
        closed = getattr(self.potential, "total_closed", None)
        if closed is not None:
            return closed(p, mstar, hbar)
        ps = np.atleast_1d(np.asarray(p, dtype=float))
        out = np.empty(ps.shape)
        for i, pi in enumerate(ps.ravel()):
            if pi == 0:
                out.flat[i] = 4 * math.pi * float(self.amplitude(0.0, mstar, hbar)) ** 2
                continue
            val, _ = integrate.quad(
                lambda q: float(self.amplitude(q, mstar, hbar)) ** 2 * q, 0.0, 2 * pi
            )
            out.flat[i] = 2 * math.pi * val / pi**2
        return out.reshape(np.shape(p)) if np.ndim(p) else float(out[0])

    def forward_amplitude(self, p, mstar: float, hbar: float = 1.0):
        p = np.asarray(p, dtype=float)
        re = float(self.amplitude(0.0, mstar, hbar))
        im = p * self.total_cross_section(p, mstar, hbar) / (4 * math.pi * hbar)
        return re + 1j * im


def require_phase(model) -> None:
    if not getattr(model, "has_phase", False):
        raise PhaseFreeModel(
            f"{type(model).__name__} carries no scattering phase; only |f|^2 is defined"
        )


# Rates ---------------------------------------------------------------------------


def thermal_rate(gas: GasSpec, sigma_tot: float) -> float:
    """Collision rate at the most probable speed, ``n_gas v_beta sigma_tot``."""
    return gas.n_gas * gas.v_beta * sigma_tot


def _power_params(model) -> tuple[float, float]:
    if isinstance(model, (Constant, PowerLaw)):
        return model.strength, model.exponent
    raise TypeError("effective cross-section needs a Constant or PowerLaw model")


def _loss_prefactor(model, gas: GasSpec, particle: ParticleSpec, u: float) -> float:
    # n_gas (P/M) sigma_eff(P), with the 1/P of sigma_eff cancelled.
    c, a = _power_params(model)
    vb = gas.v_beta
    f = hyp1f1(-(a + 1) / 2.0, 1.5, -(u * u))
    return gas.n_gas * 8 * SQRT_PI * math.gamma(a / 2 + 2) * vb ** (a + 1) * c * f


def effective_cross_section(P, model, gas: GasSpec, particle: ParticleSpec) -> float:
    """Thermally averaged cross-section defining the loss rate; ``inf`` at P = 0."""
    p = float(_norm(P))
    if p == 0:
        return math.inf
    u = p / (particle.M * gas.v_beta)
    return _loss_prefactor(model, gas, particle, u) * particle.M / (gas.n_gas * p)


def classical_loss_rate(P, model, gas: GasSpec, particle: ParticleSpec,
                        method: str = "auto", hbar: float = 1.0) -> float:
    """Total collision rate ``M_out`` of a test particle with momentum ``P``.

    ``method`` is ``"closed"`` (Constant and PowerLaw), ``"forward"``
    (thermal forward amplitude, phase-carrying models), ``"quadrature"``
    (integral of the gain rate over all transfers) or ``"auto"``.
    """
    if method == "auto":
        method = "closed" if isinstance(model, (Constant, PowerLaw)) else "forward"
    if method == "closed":
        u = float(_norm(P)) / (particle.M * gas.v_beta)
        return float(_loss_prefactor(model, gas, particle, u))
    if method == "forward":
        require_phase(model)
        from .qlbe_generator import thermal_forward_average

        mstar = particle.reduced_mass(gas)
        avg = thermal_forward_average(model, gas, particle, P, hbar=hbar, method="1d")
        return gas.n_gas / mstar * 4 * math.pi * hbar * avg.imag
    if method == "quadrature":
        return loss_rate_quadrature(P, model, gas, particle, hbar=hbar)
    raise ValueError(f"unknown method {method!r}")


def _basis(qhat):
    # Two unit vectors spanning the plane orthogonal to qhat.
    qhat = np.asarray(qhat, float)
    trial = np.where(np.abs(qhat[..., :1]) < 0.9, [1.0, 0.0, 0.0], [0.0, 1.0, 0.0])
    e1 = np.cross(qhat, trial)
    e1 /= _norm(e1)[..., None]
    e2 = np.cross(qhat, e1)
    return e1, e2


def _gh_nodes(n):
    x, w = special.roots_hermite(n)
    return x, w / SQRT_PI


def _radial_rule(n: int, panels: int = 8, grading: int = 12, ratio: float = 0.25):
    # Gauss-Legendre on [0, 1]: uniform panels, with the first panel graded
    # geometrically towards 0 to absorb algebraic endpoint behaviour.
    x, w = special.roots_legendre(n)
    edges = [0.0] + [ratio ** (grading - k) / panels for k in range(grading)]
    edges += [(k + 1) / panels for k in range(1, panels)]
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        nodes.append(lo + (hi - lo) * (x + 1) / 2)
        weights.append((hi - lo) / 2 * w)
    return np.concatenate(nodes), np.concatenate(weights)


def averaged_sigma_perp(p_perp, q, model, gas: GasSpec, particle: ParticleSpec,
                        hbar: float = 1.0, degree: int | None = None):
    """Cross-section averaged over the 2D thermal momenta orthogonal to ``Q``.

    ``p_perp`` is the modulus of the test momentum component orthogonal to
    ``Q`` and ``q`` the transfer modulus; for isotropic models nothing else
    matters. For the power law the plane integral is taken in polar
    coordinates about the zero of the relative momentum, where the
    azimuth is exact (a Bessel function) and the radius uses a graded
    Gauss-Legendre rule, doubled until the relative change drops below
    ``GH_RTOL``.
    """
    mstar = particle.reduced_mass(gas)
    shape = np.broadcast_shapes(np.shape(p_perp), np.shape(q))
    if isinstance(model, Constant):
        return np.full(shape, model.strength)
    if isinstance(model, BornPotential):
        return np.broadcast_to(model.differential_q(q, mstar, hbar), shape).copy()
    p_perp = np.broadcast_to(np.asarray(p_perp, float), shape)[..., None]
    q = np.broadcast_to(np.asarray(q, float), shape)[..., None]
    # Thermal 2D momentum k; the relative momentum vanishes at k = (m/M) P_perp.
    lam = gas.beta / gas.m
    c = gas.m / particle.M * p_perp
    R = c + 12.0 / math.sqrt(lam)

    def at(n):
        x, w = _radial_rule(n)
        r = R * x
        dens = lam * r * np.exp(-lam * (r - c) ** 2 / 2) * special.ive(0, lam * r * c)
        v = np.sqrt((mstar / gas.m * r) ** 2 + q * q / 4) / mstar
        return np.sum(R * w * dens * model.strength * v**model.exponent, axis=-1)

    if degree is not None:
        return at(degree)
    n = GH_START
    prev = at(n)
    while n < GH_MAX:
        n *= 2
        cur = at(n)
        if np.all(np.abs(cur - prev) <= GH_RTOL * np.abs(cur)):
            return cur
        prev = cur
    worst = float(np.max(np.abs(cur - prev) / np.abs(cur)))
    raise QuadratureError("averaged cross-section did not converge", float(np.max(cur)), worst)


def classical_gain_rate(P, Q, model, gas: GasSpec, particle: ParticleSpec,
                        hbar: float = 1.0, degree: int | None = None):
    """Rate density for arriving at final momentum ``P`` by a transfer ``Q``.

    Vectorised over leading axes of ``P`` and ``Q``. The gas factorises into
    a 1D marginal along ``Q`` times a 2D average orthogonal to it.
    """
    P = np.asarray(P, float)
    Q = np.asarray(Q, float)
    q = _norm(Q)
    if np.any(q == 0):
        raise ValueError("gain rate is undefined at Q = 0")
    mstar = particle.reduced_mass(gas)
    P_init = P - Q
    qhat = Q / q[..., None]
    p_par = np.sum(P_init * qhat, axis=-1)
    p_perp = _norm(P_init - p_par[..., None] * qhat)
    x = gas.m / mstar * q / 2 + gas.m / particle.M * p_par
    sig = averaged_sigma_perp(p_perp, q, model, gas, particle, hbar, degree)
    return gas.n_gas * gas.m / (mstar**2 * q) * mb_marginal_1d(x, gas.beta, gas.m) * sig


def _angular_marginal(a_q, b, gas: GasSpec):
    # int_{-1}^{1} mu_1d(a_q + b c) dc, closed form through erf.
    k = math.sqrt(gas.beta / (2 * gas.m))
    if b < 1e-12:
        return 2.0 * mb_marginal_1d(a_q, gas.beta, gas.m)
    return 0.5 / b * (special.erf(k * (a_q + b)) - special.erf(k * (a_q - b)))


def loss_rate_quadrature(P, model, gas: GasSpec, particle: ParticleSpec,
                         hbar: float = 1.0, rtol: float = 1e-11, n_cos: int = 48) -> float:
    """Integral of the gain rate over all transfers, in spherical coordinates.

    The ``1/Q`` of the kernel cancels against the ``Q^2`` measure. For
    models whose perpendicular average is a function of ``Q`` alone the
    polar angle is integrated in closed form.
    """
    p = float(_norm(P))
    mstar = particle.reduced_mass(gas)
    a = gas.m / (2 * mstar)
    b = gas.m / particle.M * p
    pref = 2 * math.pi * gas.n_gas * gas.m / mstar**2
    qmax = (12.0 * gas.p_beta + 2 * b) / a
    if isinstance(model, (Constant, BornPotential)):
        def radial(q):
            sig = float(averaged_sigma_perp(0.0, q, model, gas, particle, hbar))
            return q * sig * _angular_marginal(a * q, b, gas)
    else:
        c, wc = special.roots_legendre(n_cos)

        def radial(q):
            x = a * q + b * c
            perp = p * np.sqrt(1 - c * c)
            sig = averaged_sigma_perp(perp, np.full_like(c, q), model, gas, particle, hbar)
            return q * np.sum(wc * mb_marginal_1d(x, gas.beta, gas.m) * sig)
    val, err = integrate.quad(radial, 0.0, qmax, limit=400, epsabs=0.0, epsrel=rtol)
    return pref * val


# London dispersion -----------------------------------------------------------


def london_prefactor(C6: float, hbar: float = 1.0) -> float:
    """Coefficient ``K`` in ``sigma_tot = K v^(-2/5)`` for a ``-C6/r^6`` tail."""
    if not C6 > 0:
        raise ValueError("C6 must be positive")
    g = math.pi**2 / (math.sin(math.pi / 5) * math.gamma(0.4))
    return g * (3 * math.pi * C6 / (8 * hbar)) ** 0.4


def london_cross_section(v_rel, C6: float, hbar: float = 1.0):
    """Semiclassical total cross-section of a van der Waals interaction."""
    v = np.asarray(v_rel, dtype=float)
    if np.any(v <= 0):
        raise ValueError("relative speed must be positive")
    out = london_prefactor(C6, hbar) * v**-0.4
    return float(out) if out.ndim == 0 else out


def london_model(C6: float, hbar: float = 1.0) -> PowerLaw:
    """Isotropic power-law model with the London total cross-section."""
    return PowerLaw(c=london_prefactor(C6, hbar) / (4 * math.pi), a=-0.4)
