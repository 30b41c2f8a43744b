"""Pure collisional decoherence of a very massive test particle.

When ``M >> m`` the collisions leave the momentum distribution unchanged
on the time scale of interest and only imprint random momentum kicks.
Position coherences at separation ``S`` then decay through the
characteristic function ``Phi(S)`` of the kick distribution.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import constants, special

from .core_math import hyp1f1
from .scattering import (
    BornPotential,
    Constant,
    GasSpec,
    ParticleSpec,
    PowerLaw,
    QuadratureError,
    _norm,
    classical_gain_rate,
    classical_loss_rate,
    loss_rate_quadrature,
)

MASSIVE_WARN = 0.1
THETA_NODES = 128
SPEED_NODES = 128
JUMP_TERMS = 30


@dataclass(frozen=True)
class DecoherenceSpec:
    """Model, gas and test particle for the massive-tracer limit.

    With ``P0`` unset the kick distribution is that of a particle at rest
    and infinite mass, which is what the isotropic formulas assume.
    """

    model: object
    gas: GasSpec
    particle: ParticleSpec
    P0: tuple | None = None

    def __post_init__(self):
        ratio = self.particle.mass_ratio(self.gas)
        if ratio > MASSIVE_WARN:
            warnings.warn(
                f"m/M = {ratio:.3g} exceeds {MASSIVE_WARN}; the massive-tracer "
                "limit may be inaccurate",
                stacklevel=2,
            )

    @property
    def reference(self) -> np.ndarray:
        return np.zeros(3) if self.P0 is None else np.asarray(self.P0, float)

    @property
    def kinematic_particle(self) -> ParticleSpec:
        # Infinite mass for the isotropic case, so that m* = m.
        if self.P0 is None:
            return ParticleSpec(M=math.inf)
        return self.particle


def total_rate(spec: DecoherenceSpec, hbar: float = 1.0) -> float:
    """Total collision rate at the reference momentum."""
    part = spec.kinematic_particle
    if isinstance(spec.model, (Constant, PowerLaw)):
        return classical_loss_rate(spec.reference, spec.model, spec.gas, part, "closed")
    return loss_rate_quadrature(spec.reference, spec.model, spec.gas, part, hbar=hbar)


def transfer_distribution(Q, spec: DecoherenceSpec, hbar: float = 1.0, rate=None):
    """Probability density of a momentum kick ``Q`` in one collision.

    ``rate`` may pass a precomputed :func:`total_rate`.
    """
    Q = np.asarray(Q, float)
    if np.any(_norm(Q) == 0):
        raise ValueError("transfer distribution is undefined at Q = 0")
    gamma = total_rate(spec, hbar) if rate is None else rate
    final = spec.reference + Q
    gain = classical_gain_rate(final, Q, spec.model, spec.gas, spec.kinematic_particle, hbar)
    return gain / gamma


def _dsigma(model, p, cos_t, m: float, hbar: float):
    # |f|^2 at relative momentum p and scattering angle theta, with m* = m.
    if isinstance(model, Constant):
        return np.full(np.broadcast_shapes(np.shape(p), np.shape(cos_t)), model.strength)
    if isinstance(model, PowerLaw):
        return np.broadcast_to(model.strength * (p / m) ** model.exponent,
                               np.broadcast_shapes(np.shape(p), np.shape(cos_t)))
    if isinstance(model, BornPotential):
        q = p * np.sqrt(np.maximum(2.0 * (1.0 - cos_t), 0.0))
        return model.differential_q(q, m, hbar)
    raise TypeError(f"unsupported model {type(model).__name__}")


def _isotropic_phi(S, spec: DecoherenceSpec, hbar: float, n_speed: int, n_theta: int,
                   rate: float):
    gas = spec.gas
    m = gas.m
    alpha = 1.0
    if isinstance(spec.model, PowerLaw):
        # The (p/m)^a factor joins the Laguerre weight.
        alpha += spec.model.exponent / 2.0
    x, wx = special.roots_genlaguerre(n_speed, alpha)
    c, wc = special.roots_legendre(n_theta)
    pb = gas.p_beta
    p = pb * np.sqrt(x)[:, None]
    sig = _dsigma(spec.model, p, c[None, :], m, hbar)
    if isinstance(spec.model, PowerLaw):
        sig = sig / (x[:, None] ** (spec.model.exponent / 2.0))
    # nu(p) (p/m) dp = (2/sqrt(pi)) (p_beta/m) x e^-x dx, x = (p/p_beta)^2.
    pref = 2.0 * math.pi * gas.n_gas / rate * 2.0 / math.sqrt(math.pi) * pb / m
    q = p * np.sqrt(np.maximum(2.0 * (1.0 - c[None, :]), 0.0))
    base = sig * wx[:, None] * wc[None, :]
    S = np.atleast_1d(np.asarray(S, float))
    out = np.empty(S.shape)
    for i, s in enumerate(S.ravel()):
        kern = np.sinc(q * s / (math.pi * hbar))
        out.flat[i] = pref * np.sum(base * kern)
    return out


def _general_phi(S, spec: DecoherenceSpec, hbar: float, n_radial: int, n_theta: int,
                 n_phi: int, rate: float):
    S = np.asarray(S, float)
    s = float(_norm(S))
    ez = S / s if s > 0 else np.array([0.0, 0.0, 1.0])
    trial = np.array([1.0, 0.0, 0.0]) if abs(ez[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    ex = np.cross(ez, trial)
    ex /= np.linalg.norm(ex)
    ey = np.cross(ez, ex)
    gas = spec.gas
    part = spec.kinematic_particle
    mstar = part.reduced_mass(gas)
    p0 = float(_norm(spec.reference))
    qmax = (14.0 * gas.p_beta + 2.0 * gas.m / part.M * p0) * 2.0 * mstar / gas.m
    xr, wr = special.roots_legendre(n_radial)
    edges = np.linspace(0.0, qmax, 9)
    qs = np.concatenate([(a + b) / 2 + (b - a) / 2 * xr for a, b in zip(edges[:-1], edges[1:])])
    wq = np.concatenate([(b - a) / 2 * wr for a, b in zip(edges[:-1], edges[1:])])
    c, wc = special.roots_legendre(n_theta)
    phis = 2 * math.pi * np.arange(n_phi) / n_phi
    sin_t = np.sqrt(1 - c * c)
    dirs = (c[:, None, None] * ez
            + (sin_t[:, None] * np.cos(phis)[None, :])[..., None] * ex
            + (sin_t[:, None] * np.sin(phis)[None, :])[..., None] * ey)
    total = 0.0 + 0.0j
    for q, w in zip(qs, wq):
        Q = q * dirs
        dens = transfer_distribution(Q, spec, hbar, rate=rate)
        phase = np.exp(1j * q * c * s / hbar)[:, None]
        total += w * q * q * np.sum(wc[:, None] * dens * phase) * (2 * math.pi / n_phi)
    return total


def decoherence_function(S, spec: DecoherenceSpec, hbar: float = 1.0,
                         n_speed: int = SPEED_NODES, n_theta: int = THETA_NODES,
                         n_radial: int = 48, n_phi: int = 32):
    """Characteristic function ``Phi(S)`` of the momentum kicks.

    Without a reference momentum ``S`` is a separation modulus (scalar or
    array) and the result is real. With ``P0`` set, ``S`` is a 3-vector and
    the full three-dimensional transform is returned as a complex number.
    """
    rate = total_rate(spec, hbar)
    if spec.P0 is None:
        out = _isotropic_phi(S, spec, hbar, n_speed, n_theta, rate)
        if not np.all(np.isfinite(out)):
            raise QuadratureError("decoherence function quadrature failed")
        return out.reshape(np.shape(S)) if np.ndim(S) else float(out[0])
    return _general_phi(S, spec, hbar, n_radial, n_theta, n_phi, rate)


def coherence_factor(phi, rate: float, t):
    """``Psi = exp(-rate (1 - phi) t)``, the factor multiplying ``rho(X, X')``."""
    return np.exp(-rate * (1.0 - np.asarray(phi)) * np.asarray(t, float))


def jump_series(phi, rate: float, t: float, n_max: int = JUMP_TERMS):
    """Partial sum ``sum_n p_n(t) phi^n`` with Poisson weights ``p_n``."""
    phi = np.asarray(phi)
    mean = rate * t
    if mean <= 0:
        return np.ones_like(phi)
    n = np.arange(n_max + 1)
    weights = np.exp(-mean + n * math.log(mean) - special.gammaln(n + 1))
    powers = phi[..., None] ** n
    return np.sum(weights * powers, axis=-1)


def evolve_position_coherence(rho0, S, t, spec: DecoherenceSpec, hbar: float = 1.0):
    """Off-diagonal element ``<X|rho_t|X'>`` at separation ``S = X - X'``."""
    phi = decoherence_function(S, spec, hbar)
    return rho0 * coherence_factor(phi, total_rate(spec, hbar), t)


def jump_expansion(rho0, S, t, spec: DecoherenceSpec, hbar: float = 1.0,
                   n_max: int = JUMP_TERMS):
    """The same element from the expansion in the number of collisions."""
    phi = decoherence_function(S, spec, hbar)
    return rho0 * jump_series(phi, total_rate(spec, hbar), t, n_max)


# Interferometer visibility ------------------------------------------------------


LONDON_RATE_CONST = 4 * math.pi * math.gamma(0.9) / (5 * math.sin(math.pi / 5))


def london_collision_rate(n_gas: float, P0: float, M: float, v_beta: float, C6: float,
                          hbar: float = 1.0) -> float:
    """Total collision rate of a particle moving through a van der Waals gas."""
    u = P0 / (M * v_beta)
    shape = hyp1f1(-0.3, 1.5, -(u * u))
    return n_gas * LONDON_RATE_CONST * (1.5 * math.pi * C6 / hbar) ** 0.4 * v_beta**0.6 * shape


def london_collision_rate_expansion(n_gas: float, P0: float, M: float, v_beta: float,
                                    C6: float, hbar: float = 1.0) -> float:
    """Second-order small-momentum form of :func:`london_collision_rate`."""
    u = P0 / (M * v_beta)
    lead = n_gas * LONDON_RATE_CONST * (1.5 * math.pi * C6 / hbar) ** 0.4 * v_beta**0.6
    return lead * (1.0 + 0.2 * u * u)


@dataclass(frozen=True)
class Beam:
    """Interferometer beam in SI units: momentum, mass and flight time."""

    P0: float
    M: float
    flight_time: float


@dataclass(frozen=True)
class BackgroundGas:
    """Background gas in SI units: temperature and molecular mass."""

    T: float
    m: float

    @property
    def v_beta(self) -> float:
        return math.sqrt(2 * constants.k * self.T / self.m)


def _rate_per_density(beam: Beam, gas: BackgroundGas, C6: float) -> float:
    return london_collision_rate(1.0, beam.P0, beam.M, gas.v_beta, C6, constants.hbar)


def critical_pressure(beam: Beam, gas: BackgroundGas, C6: float) -> float:
    """Pressure at which the visibility has dropped by ``1/e``."""
    return constants.k * gas.T / (beam.flight_time * _rate_per_density(beam, gas, C6))


def visibility(pressure, beam: Beam, gas: BackgroundGas, C6: float, V0: float = 1.0):
    """Fringe visibility after flying through gas at ``pressure`` (Pa)."""
    n_gas = np.asarray(pressure, float) / (constants.k * gas.T)
    rate = n_gas * _rate_per_density(beam, gas, C6)
    return V0 * np.exp(-rate * beam.flight_time)
