"""Lindblad kernels, coherent corrections and a small-grid generator oracle.

The Lindblad function ``L(p, P; Q)`` is evaluated at classical momentum
arguments: ``p`` a gas momentum orthogonal to ``Q`` and ``P`` the test
momentum before the collision. Kernel integrals over the plane orthogonal
to ``Q`` use the factorisation of the Maxwell-Boltzmann density into a 1D
marginal along ``Q`` and a 2D Gaussian orthogonal to it.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .core_math import SQRT_PI, mb_density, mb_marginal_1d
from .scattering import (
    BornPotential,
    Constant,
    GasSpec,
    ParticleSpec,
    PhaseFreeModel,
    _basis,
    _gh_nodes,
    _norm,
    classical_gain_rate,
    classical_loss_rate,
    loss_rate_quadrature,
    require_phase,
)

LEAK_WARN = 0.01
ANGULAR_NODES = 96


def _split(P, qhat):
    par = np.sum(P * qhat, axis=-1)
    return par, P - par[..., None] * qhat


def _rel(p, P, gas: GasSpec, particle: ParticleSpec):
    mstar = particle.reduced_mass(gas)
    return mstar / gas.m * p - mstar / particle.M * P


def _lindblad_parts(p_perp, P, Q, model, gas, particle, hbar):
    P = np.asarray(P, float)
    Q = np.asarray(Q, float)
    p_perp = np.asarray(p_perp, float)
    q = _norm(Q)
    if np.any(q == 0):
        raise ValueError("Lindblad function is undefined at Q = 0")
    qhat = Q / q[..., None]
    p_par, p_orth = _split(p_perp, qhat)
    if np.any(np.abs(p_par) > 1e-9 * (1 + _norm(p_perp))):
        raise ValueError("gas momentum must be orthogonal to Q")
    mstar = particle.reduced_mass(gas)
    P_par, P_orth = _split(P, qhat)
    rel = _rel(p_orth, P_orth, gas, particle)
    arg = p_orth + (gas.m / mstar * q / 2 + gas.m / particle.M * P_par)[..., None] * qhat
    pref = np.sqrt(gas.n_gas * gas.m / (mstar**2 * q))
    root_mu = np.sqrt(mb_density(arg, gas.beta, gas.m))
    return pref * root_mu, rel - Q / 2, rel + Q / 2, mstar


def lindblad_value(p_perp, P, Q, model, gas: GasSpec, particle: ParticleSpec,
                   hbar: float = 1.0):
    """Complex Lindblad function; defined only for phase-carrying models."""
    require_phase(model)
    scale, p_f, p_i, mstar = _lindblad_parts(p_perp, P, Q, model, gas, particle, hbar)
    amp = model.amplitude(_norm(p_f - p_i), mstar, hbar)
    return scale * amp + 0j


def lindblad_modulus(p_perp, P, Q, model, gas: GasSpec, particle: ParticleSpec,
                     hbar: float = 1.0):
    """``|L(p, P; Q)|``, available for every model."""
    scale, p_f, p_i, mstar = _lindblad_parts(p_perp, P, Q, model, gas, particle, hbar)
    return scale * np.sqrt(model.differential(p_f, p_i, mstar, hbar))


def born_lindblad_scaled(u, k, mass_ratio: float, gamma_beta: float = 1.0):
    """Dimensionless Born Lindblad function for a constant cross-section.

    ``|L(U; K)|^2`` integrated over ``d^3K / (4 pi)`` gives the scaled loss
    rate; the value depends on ``U`` only through ``U . K / K``.
    """
    u = np.asarray(u, float)
    k = np.asarray(k, float)
    kn = _norm(k)
    along = np.sum(u * k, axis=-1) / kn
    return np.sqrt(gamma_beta / (SQRT_PI * kn)) * np.exp(-((kn / 2 + along) ** 2) / 2)


def quantum_gain_kernel(P, P_prime, Q, model, gas: GasSpec, particle: ParticleSpec,
                        hbar: float = 1.0, degree: int = 48):
    """Gain kernel ``M_in(P, P'; Q)`` by Gauss-Hermite over ``Q``-orthogonal momenta.

    ``P`` and ``P'`` are final momenta; the collision starts from
    ``P - Q`` and ``P' - Q``. Phase-free models are accepted only where the
    unknown phase provably cancels: always for a constant cross-section,
    and for ``P`` and ``P'`` with equal components orthogonal to ``Q``
    otherwise.
    """
    P = np.asarray(P, float)
    Pp = np.asarray(P_prime, float)
    Q = np.asarray(Q, float)
    q = float(_norm(Q))
    if q == 0:
        raise ValueError("gain kernel is undefined at Q = 0")
    qhat = Q / q
    a_par, a_orth = _split(P - Q, qhat)
    b_par, b_orth = _split(Pp - Q, qhat)
    same_orth = np.allclose(a_orth, b_orth, rtol=0, atol=1e-12 * (1 + np.abs(a_orth).max()))
    if not model.has_phase and not isinstance(model, Constant) and not same_orth:
        raise PhaseFreeModel(
            "gain kernel between different orthogonal momenta needs an amplitude phase"
        )
    mstar = particle.reduced_mass(gas)
    e1, e2 = _basis(qhat)
    x, w = _gh_nodes(degree)
    s = math.sqrt(2 * gas.m / gas.beta)
    kx, ky = np.meshgrid(s * x, s * x, indexing="ij")
    ww = np.outer(w, w)
    k = kx[..., None] * e1 + ky[..., None] * e2

    def factor(orth):
        rel = _rel(k, orth, gas, particle)
        if model.has_phase:
            return model.amplitude(np.full(kx.shape, q), mstar, hbar) + 0j
        return np.sqrt(model.differential(rel - Q / 2, rel + Q / 2, mstar, hbar)) + 0j

    fa = factor(a_orth)
    fb = factor(b_orth)
    plane = np.sum(ww * fa * np.conj(fb))
    xa = gas.m / mstar * q / 2 + gas.m / particle.M * a_par
    xb = gas.m / mstar * q / 2 + gas.m / particle.M * b_par
    along = np.sqrt(mb_marginal_1d(xa, gas.beta, gas.m) * mb_marginal_1d(xb, gas.beta, gas.m))
    return gas.n_gas * gas.m / (mstar**2 * q) * along * plane


# Thermal forward amplitude and optics -------------------------------------------


def _forward_function(model, gas, particle, hbar):
    if callable(model) and not hasattr(model, "has_phase"):
        return model
    require_phase(model)
    mstar = particle.reduced_mass(gas)
    return lambda p: model.forward_amplitude(p, mstar, hbar)


def thermal_forward_average(model, gas: GasSpec, particle: ParticleSpec, P,
                            hbar: float = 1.0, method: str = "1d", rtol: float = 1e-12):
    """Thermal average of the forward amplitude at test momentum ``P``.

    ``model`` is a phase-carrying model or a callable ``f0(p)`` of the
    relative momentum modulus. ``method="1d"`` uses the speed integral with
    the sinh kernel; ``method="3d"`` integrates over relative velocities in
    spherical coordinates, the polar angle by Gauss-Legendre.
    """
    f0 = _forward_function(model, gas, particle, hbar)
    mstar = particle.reduced_mass(gas)
    vb = gas.v_beta
    V = float(_norm(P)) / particle.M / vb
    hi = V + 12.0

    def cplx_quad(fun):
        re = integrate.quad(lambda v: fun(v).real, 0.0, hi, points=[V] if V > 0 else None,
                            limit=400, epsabs=0.0, epsrel=rtol)[0]
        im = integrate.quad(lambda v: fun(v).imag, 0.0, hi, points=[V] if V > 0 else None,
                            limit=400, epsabs=0.0, epsrel=rtol)[0]
        return complex(re, im)

    if method == "1d":
        def kern(v):
            f = complex(f0(mstar * v * vb))
            if V < 1e-8:
                return 4.0 / SQRT_PI * v * v * math.exp(-v * v) * f
            # (v/V) sinh(2vV) exp(-v^2 - V^2), written without overflow.
            g = v / (2 * V) * (math.exp(-((v - V) ** 2)) - math.exp(-((v + V) ** 2)))
            return 2.0 / SQRT_PI * g * f

        return cplx_quad(kern)
    if method == "3d":
        c, wc = special.roots_legendre(ANGULAR_NODES)

        def kern(w):
            f = complex(f0(mstar * w * vb))
            ang = np.sum(wc * np.exp(-(w * w + V * V + 2 * w * V * c)))
            return 2 * math.pi / math.pi**1.5 * w * w * ang * f

        return cplx_quad(kern)
    raise ValueError(f"unknown method {method!r}")


def energy_shift(P, model, gas: GasSpec, particle: ParticleSpec, hbar: float = 1.0) -> float:
    """Gas-induced energy shift ``-2 pi hbar^2 (n/m*) Re <f_0(P)>``."""
    avg = thermal_forward_average(model, gas, particle, P, hbar)
    return -2 * math.pi * hbar**2 * gas.n_gas / particle.reduced_mass(gas) * avg.real


def optical_potential(P, model, gas: GasSpec, particle: ParticleSpec, hbar: float = 1.0) -> complex:
    """Complex optical potential ``-2 pi hbar^2 (n/m*) <f_0(P)>``."""
    avg = thermal_forward_average(model, gas, particle, P, hbar)
    return -2 * math.pi * hbar**2 * gas.n_gas / particle.reduced_mass(gas) * avg


def refraction_index(K: float, model, gas: GasSpec, particle: ParticleSpec,
                     hbar: float = 1.0, method: str = "1d") -> complex:
    """Complex index of refraction for a beam of wavenumber ``K``."""
    if not K > 0:
        raise ValueError("wavenumber must be positive")
    P = np.array([0.0, 0.0, hbar * K])
    avg = thermal_forward_average(model, gas, particle, P, hbar, method=method)
    return 1 + 2 * math.pi * gas.n_gas / K**2 * particle.M / particle.reduced_mass(gas) * avg


def attenuation_from_loss(K: float, model, gas: GasSpec, particle: ParticleSpec,
                          hbar: float = 1.0) -> float:
    """Imaginary index part from the integrated gain rate, ``M_out / (2 hbar K^2 / M)``."""
    if not K > 0:
        raise ValueError("wavenumber must be positive")
    P = np.array([0.0, 0.0, hbar * K])
    m_out = loss_rate_quadrature(P, model, gas, particle, hbar=hbar)
    return m_out / (2 * hbar * K**2 / particle.M)


# Grid oracle -------------------------------------------------------------------

MAX_GRID = 9


@dataclass
class DensityMatrixGrid:
    """Momentum-space density matrix on an ``n^3`` Cartesian grid.

    ``matrix[i, j]`` holds ``<P_i|rho|P_j>`` as a density; the trace is
    ``cell * sum(diag)``.
    """

    n: int
    spacing: float
    matrix: np.ndarray

    def __post_init__(self):
        if not 1 <= self.n <= MAX_GRID:
            raise ValueError(f"grid size must be between 1 and {MAX_GRID}")
        size = self.n**3
        self.matrix = np.asarray(self.matrix, dtype=complex)
        if self.matrix.shape != (size, size):
            raise ValueError(f"matrix must be {size} x {size}")

    @property
    def cell(self) -> float:
        return self.spacing**3

    @property
    def axis(self) -> np.ndarray:
        return (np.arange(self.n) - (self.n - 1) / 2) * self.spacing

    @property
    def momenta(self) -> np.ndarray:
        a = self.axis
        g = np.stack(np.meshgrid(a, a, a, indexing="ij"), axis=-1)
        return g.reshape(-1, 3)

    @property
    def trace(self) -> complex:
        return self.cell * np.trace(self.matrix)

    def is_hermitian(self, atol: float = 1e-12) -> bool:
        return bool(np.allclose(self.matrix, self.matrix.conj().T, atol=atol))

    @classmethod
    def from_diagonal(cls, n: int, spacing: float, density) -> "DensityMatrixGrid":
        d = np.asarray(density, dtype=float).reshape(-1)
        d = d / (spacing**3 * d.sum())
        return cls(n, spacing, np.diag(d.astype(complex)))

    @classmethod
    def thermal(cls, n: int, spacing: float, gas: GasSpec, particle: ParticleSpec):
        g = cls(n, spacing, np.zeros((n**3, n**3)))
        p2 = np.sum(g.momenta**2, axis=-1)
        return cls.from_diagonal(n, spacing, np.exp(-gas.beta * p2 / (2 * particle.M)))

    @classmethod
    def pure(cls, n: int, spacing: float, psi) -> "DensityMatrixGrid":
        psi = np.asarray(psi, dtype=complex).reshape(-1)
        psi = psi / math.sqrt(spacing**3 * np.sum(np.abs(psi) ** 2))
        rho = np.outer(psi, psi.conj())
        # Fused multiply-add can break the conjugate symmetry in the last bit.
        return cls(n, spacing, 0.5 * (rho + rho.conj().T))


def _separable_factors(Pinit, Q, model, gas, particle, hbar):
    # Born-type kernels split into c(Q) g(P - Q) g(P' - Q).
    mstar = particle.reduced_mass(gas)
    q = float(_norm(Q))
    qhat = Q / q
    par = Pinit @ qhat
    x = gas.m / mstar * q / 2 + gas.m / particle.M * par
    g = np.sqrt(mb_marginal_1d(x, gas.beta, gas.m))
    if isinstance(model, Constant):
        sig = model.strength
    else:
        sig = float(model.differential_q(q, mstar, hbar))
    return gas.n_gas * gas.m / (mstar**2 * q) * sig, g


def grid_loss_rates(grid: DensityMatrixGrid, model, gas: GasSpec, particle: ParticleSpec,
                    hbar: float = 1.0) -> np.ndarray:
    """Loss rate of every grid point summed over in-grid transfers only."""
    mom = grid.momenta
    out = np.zeros(len(mom))
    n = grid.n
    idx = np.arange(n**3).reshape(n, n, n)
    for dx in range(-(n - 1), n):
        for dy in range(-(n - 1), n):
            for dz in range(-(n - 1), n):
                if dx == dy == dz == 0:
                    continue
                src = idx[max(0, -dx):n - max(0, dx), max(0, -dy):n - max(0, dy),
                          max(0, -dz):n - max(0, dz)].ravel()
                Q = np.array([dx, dy, dz], float) * grid.spacing
                c, g = _separable_factors(mom[src], Q, model, gas, particle, hbar)
                out[src] += grid.cell * c * g * g
    return out


def apply_generator(grid: DensityMatrixGrid, model, gas: GasSpec, particle: ParticleSpec,
                    hbar: float = 1.0, loss: str = "grid", hamiltonian: bool = False,
                    return_diagnostics: bool = False):
    """Time derivative of a grid density matrix under the Born-type generator.

    Gain terms use only transfers equal to exact grid differences. With
    ``loss="grid"`` the loss rates are the matching in-grid sums, so the
    trace is conserved exactly; ``loss="continuum"`` uses the full
    classical loss rate and warns when the boundary leak exceeds 1 % of
    the total rate. ``hamiltonian`` adds the kinetic commutator and, for
    phase-carrying models, the gas-induced energy shift.
    """
    if not (isinstance(model, Constant) or isinstance(model, BornPotential)):
        raise TypeError("grid oracle supports Constant and Born models only")
    n = grid.n
    mom = grid.momenta
    rho = grid.matrix
    out = np.zeros_like(rho)
    idx = np.arange(n**3).reshape(n, n, n)
    for dx in range(-(n - 1), n):
        for dy in range(-(n - 1), n):
            for dz in range(-(n - 1), n):
                if dx == dy == dz == 0:
                    continue
                sl_dst = (slice(max(0, dx), n + min(0, dx)), slice(max(0, dy), n + min(0, dy)),
                          slice(max(0, dz), n + min(0, dz)))
                sl_src = (slice(max(0, -dx), n + min(0, -dx)), slice(max(0, -dy), n + min(0, -dy)),
                          slice(max(0, -dz), n + min(0, -dz)))
                dst = idx[sl_dst].ravel()
                src = idx[sl_src].ravel()
                Q = np.array([dx, dy, dz], float) * grid.spacing
                c, g = _separable_factors(mom[src], Q, model, gas, particle, hbar)
                out[np.ix_(dst, dst)] += grid.cell * c * np.outer(g, g) * rho[np.ix_(src, src)]
    if loss == "grid":
        rates = grid_loss_rates(grid, model, gas, particle, hbar)
    elif loss == "continuum":
        rates = np.array([classical_loss_rate(p, model, gas, particle, hbar=hbar) for p in mom])
    else:
        raise ValueError(f"unknown loss mode {loss!r}")
    out -= 0.5 * (rates[:, None] + rates[None, :]) * rho
    if hamiltonian:
        energy = np.sum(mom**2, axis=-1) / (2 * particle.M)
        if model.has_phase:
            energy = energy + np.array([energy_shift(p, model, gas, particle, hbar) for p in mom])
        out += -1j / hbar * (energy[:, None] - energy[None, :]) * rho
    leak = abs(grid.cell * np.trace(out))
    scale = abs(grid.cell * np.sum(rates * np.diag(rho)))
    if loss == "continuum" and scale > 0 and leak > LEAK_WARN * scale:
        warnings.warn(
            f"boundary leakage {leak:.3g} is {leak / scale:.1%} of the total rate",
            RuntimeWarning,
            stacklevel=2,
        )
    if return_diagnostics:
        return out, {"trace_rate": complex(grid.cell * np.trace(out)), "loss_scale": scale}
    return out
