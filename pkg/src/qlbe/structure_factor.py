"""Dynamic structure factor of an ideal gas and the rates written through it.

The structure factor ``S(Q, E)`` weighs a momentum transfer ``Q`` to the
test particle together with the energy ``E`` it absorbs. For a
Maxwell-Boltzmann gas it is a Gaussian in ``E``; for Bose or Fermi gases
it takes a logarithmic closed form. The classical gain rate factorises
into an averaged cross-section times ``S``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, special

from .scattering import (
    BornPotential,
    Constant,
    GasSpec,
    ParticleSpec,
    PowerLaw,
    _norm,
    averaged_sigma_perp,
    classical_loss_rate,
    loss_rate_quadrature,
)

RADIAL_PANELS = 12
RADIAL_NODES = 32
ANGLE_NODES = 96


def _modulus(Q):
    q = np.asarray(Q, float)
    if q.ndim and q.shape[-1] == 3:
        q = _norm(q)
    q = np.abs(q)
    if np.any(q == 0):
        raise ValueError("structure factor is undefined at Q = 0")
    return q


def energy_transfer(Q, P, M: float):
    """Energy gained by a particle of momentum ``P`` kicked by ``Q``."""
    Q = np.asarray(Q, float)
    P = np.asarray(P, float)
    return (np.sum(Q * Q, axis=-1) + 2.0 * np.sum(Q * P, axis=-1)) / (2.0 * M)


def _mb_exponent(q, E, gas: GasSpec):
    return gas.beta * (q * q + 2.0 * gas.m * E) ** 2 / (8.0 * gas.m * q * q)


def log_s_mb(Q, E, gas: GasSpec):
    """Logarithm of :func:`s_mb`, free of underflow far from the peak."""
    q = _modulus(Q)
    E = np.asarray(E, float)
    pref = 0.5 * math.log(gas.beta * gas.m / (2.0 * math.pi))
    return pref - np.log(q) - _mb_exponent(q, E, gas)


def s_mb(Q, E, gas: GasSpec):
    """Maxwell-Boltzmann structure factor; ``Q`` is a modulus or a 3-vector."""
    return np.exp(log_s_mb(Q, E, gas))


def thermal_wavelength(gas: GasSpec, hbar: float = 1.0) -> float:
    return math.sqrt(2.0 * math.pi * hbar**2 * gas.beta / gas.m)


def quantum_gas_density(z: float, statistics: str, beta: float, m: float,
                        hbar: float = 1.0) -> float:
    """Number density of an ideal Bose (``"BE"``) or Fermi (``"FD"``) gas."""
    if statistics == "BE":
        if not 0 < z < 1:
            raise ValueError("Bose-Einstein fugacity must lie in (0, 1)")
        sign = 1.0
    elif statistics == "FD":
        if not z > 0:
            raise ValueError("Fermi-Dirac fugacity must be positive")
        sign = -1.0
    else:
        raise ValueError("statistics must be 'BE' or 'FD'")
    scale = math.sqrt(2.0 * m / beta)

    def occ(x):
        # x = p / sqrt(2m/beta); occupation 1/(z^-1 e^{x^2} -+ 1).
        return x * x / (math.exp(x * x) / z - sign)

    upper = max(12.0, 2.0 * math.sqrt(max(math.log(z), 0.0)) + 12.0)
    val, _ = integrate.quad(occ, 0.0, upper, epsabs=0.0, epsrel=1e-13, limit=200)
    return 4.0 * math.pi * scale**3 * val / (2.0 * math.pi * hbar) ** 3


def degenerate_gas(z: float, statistics: str, beta: float = 2.0, m: float = 1.0,
                   hbar: float = 1.0) -> GasSpec:
    """Gas specification whose density is consistent with the fugacity ``z``."""
    n = quantum_gas_density(z, statistics, beta, m, hbar)
    return GasSpec(n_gas=n, m=m, beta=beta, statistics=statistics, z=z)


def log_s_bf(Q, E, gas: GasSpec, hbar: float = 1.0):
    """Logarithm of the structure factor of an ideal Bose or Fermi gas.

    The logarithmic ratio form is rewritten as
    ``z a / (1 -+ z a) * log1p(y) / y`` with
    ``y = -+ z a expm1(beta E) / (1 -+ z a)``, which stays accurate when
    ``E`` is small; ``a`` is the Maxwell-Boltzmann Gaussian factor. Upper
    signs are for bosons.
    """
    if gas.statistics == "BE":
        sign = -1.0
    elif gas.statistics == "FD":
        sign = 1.0
    else:
        raise ValueError("s_bf needs a gas with BE or FD statistics")
    q = _modulus(Q)
    E = np.asarray(E, float)
    log_za = math.log(gas.z) - _mb_exponent(q, E, gas)
    za = np.exp(log_za)
    log_base = log_za - np.log1p(sign * za)
    y = sign * np.exp(log_base) * np.expm1(gas.beta * E)
    safe = np.where(y == 0, 1.0, y)
    log_ratio = np.where(y == 0, 0.0, np.log(np.log1p(safe) / safe))
    pref = math.log(2.0 * math.pi * gas.m**2 / (gas.beta * (2.0 * math.pi * hbar) ** 3))
    return pref - math.log(gas.n_gas) - np.log(q) + log_base + log_ratio


def s_bf(Q, E, gas: GasSpec, hbar: float = 1.0):
    """Structure factor of an ideal Bose (``BE``) or Fermi (``FD``) gas."""
    return np.exp(log_s_bf(Q, E, gas, hbar))


def log_structure_factor(Q, E, gas: GasSpec, hbar: float = 1.0):
    if gas.statistics == "MB":
        return log_s_mb(Q, E, gas)
    return log_s_bf(Q, E, gas, hbar)


def structure_factor(Q, E, gas: GasSpec, hbar: float = 1.0):
    """``s_mb`` or ``s_bf`` according to the gas statistics."""
    return np.exp(log_structure_factor(Q, E, gas, hbar))


def detailed_balance_residual(Q, E, gas: GasSpec, hbar: float = 1.0):
    """Relative violation of ``S(Q, E) = exp(-beta E) S(-Q, -E)``.

    Evaluated on logarithms, ``|log S(Q,E) + beta E - log S(Q,-E)|``, so
    that points far in the tails keep full relative precision.
    """
    E = np.asarray(E, float)
    lhs = log_structure_factor(Q, E, gas, hbar)
    rhs = log_structure_factor(Q, -E, gas, hbar) - gas.beta * E
    return np.abs(np.expm1(lhs - rhs))


def lab_frame_cross_section(P, Q, potential, gas: GasSpec, particle: ParticleSpec,
                            E=None, hbar: float = 1.0):
    """Double-differential laboratory cross-section ``d2 Sigma / dOmega dE``.

    ``potential`` is a :class:`BornPotential`; ``E`` defaults to the energy
    transfer fixed by ``P`` and ``Q``.
    """
    if not isinstance(potential, BornPotential):
        raise TypeError("laboratory cross-section needs a Born model")
    P = np.asarray(P, float)
    Q = np.asarray(Q, float)
    if E is None:
        E = energy_transfer(Q, P, particle.M)
    mstar = particle.reduced_mass(gas)
    q = _modulus(Q)
    ratio = _norm(P + Q) / _norm(P)
    amp2 = potential.differential_q(q, mstar, hbar)
    return (particle.M / mstar) ** 2 * ratio * amp2 * structure_factor(q, E, gas, hbar)


def averaged_cross_section(P_perp, Q, model, gas: GasSpec, particle: ParticleSpec,
                           hbar: float = 1.0):
    """Cross-section averaged over thermal gas momenta orthogonal to ``Q``."""
    return averaged_sigma_perp(P_perp, _modulus(Q), model, gas, particle, hbar)


def _split(P, Q):
    q = _norm(Q)
    qhat = Q / q[..., None]
    par = np.sum(P * qhat, axis=-1)
    perp = _norm(P - par[..., None] * qhat)
    return q, perp


def gain_rate_from_structure_factor(P_final, Q, model, gas: GasSpec,
                                    particle: ParticleSpec, hbar: float = 1.0):
    """Classical gain rate rebuilt as ``(n / m*^2) sigma_av S_MB``."""
    P_final = np.asarray(P_final, float)
    Q = np.asarray(Q, float)
    P_init = P_final - Q
    q, perp = _split(P_init, Q)
    mstar = particle.reduced_mass(gas)
    sig = averaged_sigma_perp(perp, q, model, gas, particle, hbar)
    E = energy_transfer(Q, P_init, particle.M)
    return gas.n_gas / mstar**2 * sig * s_mb(q, E, gas)


def statistical_gain_rate(P_final, Q, model, gas: GasSpec, particle: ParticleSpec,
                          hbar: float = 1.0):
    """Rate kernel ``(n / m*^2) |f_B(Q)|^2 S(Q, E)`` with quantum statistics.

    Only models whose cross-section depends on the transfer alone are
    accepted, for which the statistical correction acts on ``S`` only.
    """
    if not isinstance(model, (BornPotential, Constant)):
        raise TypeError("statistical rates need a cross-section depending on Q only")
    P_final = np.asarray(P_final, float)
    Q = np.asarray(Q, float)
    q = _modulus(Q)
    mstar = particle.reduced_mass(gas)
    sig = averaged_sigma_perp(0.0, q, model, gas, particle, hbar)
    E = energy_transfer(Q, P_final - Q, particle.M)
    return gas.n_gas / mstar**2 * sig * structure_factor(q, E, gas, hbar)


def _transfer_rule(gas: GasSpec, particle: ParticleSpec, p: float):
    # Composite Gauss-Legendre in |Q| and in the cosine to the axis of P.
    mstar = particle.reduced_mass(gas)
    qmax = (14.0 * gas.p_beta + 2.0 * gas.m / particle.M * p) * 2.0 * mstar / gas.m
    qmax += 14.0 * math.sqrt(particle.M / gas.beta)
    x, w = special.roots_legendre(RADIAL_NODES)
    edges = np.linspace(0.0, qmax, RADIAL_PANELS + 1)
    qs = np.concatenate([(a + b) / 2 + (b - a) / 2 * x for a, b in zip(edges[:-1], edges[1:])])
    wq = np.concatenate([(b - a) / 2 * w for a, b in zip(edges[:-1], edges[1:])])
    c, wc = special.roots_legendre(ANGLE_NODES)
    return qs, wq, c, wc


def generator_on_diagonal(P, nu, model, gas: GasSpec, particle: ParticleSpec,
                          hbar: float = 1.0, gain=None) -> tuple[float, float]:
    """Collision term acting on a momentum density ``nu`` at momentum ``P``.

    Returns ``(value, loss)`` where ``loss = M_out(P) nu(P)`` sets the scale.
    The gain integral runs over transfers in spherical coordinates about
    ``P``; the azimuth is trivial for isotropic models. ``gain`` replaces
    the structure-factor form of the gain rate, with the same signature.
    """
    gain = gain_rate_from_structure_factor if gain is None else gain
    P = np.asarray(P, float)
    p = float(_norm(P))
    axis = P / p if p > 0 else np.array([0.0, 0.0, 1.0])
    trial = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    side = np.cross(axis, trial)
    side /= np.linalg.norm(side)
    qs, wq, c, wc = _transfer_rule(gas, particle, p)
    s = np.sqrt(1.0 - c * c)
    dirs = c[:, None] * axis + s[:, None] * side
    Q = qs[:, None, None] * dirs[None, :, :]
    rates = gain(np.broadcast_to(P, Q.shape), Q, model, gas, particle, hbar)
    dens = nu(P[None, None, :] - Q)
    weight = 2.0 * math.pi * (wq * qs * qs)[:, None] * wc[None, :]
    gain_total = float(np.sum(weight * rates * dens))
    if isinstance(model, (Constant, PowerLaw)):
        out = classical_loss_rate(P, model, gas, particle, "closed")
    else:
        out = loss_rate_quadrature(P, model, gas, particle, hbar=hbar)
    loss = out * float(nu(P))
    return gain_total - loss, loss


def thermal_density(gas: GasSpec, particle: ParticleSpec, beta: float | None = None):
    """Normalised Maxwell-Boltzmann momentum density of the test particle."""
    b = gas.beta if beta is None else beta
    var = particle.M / b

    def nu(P):
        P = np.asarray(P, float)
        return np.exp(-np.sum(P * P, axis=-1) / (2 * var)) / (2 * math.pi * var) ** 1.5

    return nu


def stationarity_residual(P, model, gas: GasSpec, particle: ParticleSpec,
                          hbar: float = 1.0, beta: float | None = None) -> float:
    """Collision term on the thermal density, relative to its loss part."""
    val, loss = generator_on_diagonal(
        P, thermal_density(gas, particle, beta), model, gas, particle, hbar
    )
    return abs(val) / loss

