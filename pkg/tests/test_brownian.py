import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from qlbe.brownian import (
    Gaussian1D,
    GaussianSumState,
    crossover_ratio,
    diffusion_coefficients,
    friction_coefficient,
    frictionless_solution_momentum,
    frictionless_solution_position,
    superposition,
    thermal_wavelength,
    wave_packet,
)
from qlbe.observables import friction_rate
from qlbe.scattering import (
    BornPotential,
    Constant,
    GasSpec,
    GaussianPotential,
    ParticleSpec,
    PowerLaw,
)

GAS = GasSpec()
STATE = superposition([wave_packet(-1.5, 0.8, 0.6), wave_packet(1.2, -0.3, 0.5)])
M, DPP, DXX = 3.0, 0.4, 0.05


def _friction_oracle_q(model, gas, M):
    # Same thermal average with the angle traded for the transfer q = 2p sin(theta/2):
    # int sin(th)(1 - cos th) sigma dth = int_0^{2p} q^3 / (2 p^4) sigma(q) dq.
    m, pb = gas.m, gas.p_beta

    def transport(u):
        p = u * pb
        return integrate.quad(lambda q: q**3 / (2 * p**4) * float(model.differential_q(q, m)),
                              0, 2 * p, epsrel=1e-12)[0]

    val = integrate.quad(lambda u: u**5 * math.exp(-u * u) * transport(u), 1e-9, 12,
                         epsrel=1e-12, limit=200)[0]
    return 16 / 3 * math.sqrt(math.pi) * m / M * gas.n_gas * math.sqrt(2 / (gas.beta * m)) * val


@pytest.mark.parametrize("mass", [1.0, 5.0, 50.0])
def test_constant_friction_is_the_known_rate(mass):
    eta = friction_coefficient(Constant(1.0), GAS, ParticleSpec(M=mass))
    assert eta == pytest.approx(friction_rate(1 / mass), rel=1e-12)


def test_power_law_friction_closed_form():
    model = PowerLaw(0.1, -0.4)
    a = model.exponent
    # Transport integral 2 s (u v_beta)^a, speed moment Gamma(3 + a/2) / 2.
    want = (16 / 3 * math.sqrt(math.pi) / 10 * math.sqrt(2 / GAS.beta)
            * model.strength * GAS.v_beta**a * special.gamma(3 + a / 2))
    assert friction_coefficient(model, GAS, ParticleSpec(M=10)) == pytest.approx(want, rel=1e-10)


def test_born_friction_matches_transfer_integral():
    model = BornPotential(GaussianPotential(0.3, 0.7))
    got = friction_coefficient(model, GAS, ParticleSpec(M=10))
    assert got == pytest.approx(_friction_oracle_q(model, GAS, 10), rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(mass=st.floats(0.5, 1e4))
def test_friction_scales_as_inverse_mass(mass):
    eta1 = friction_coefficient(Constant(1.0), GAS, ParticleSpec(M=1.0))
    assert friction_coefficient(Constant(1.0), GAS, ParticleSpec(M=mass)) == pytest.approx(
        eta1 / mass, rel=1e-12)


def test_diffusion_coefficients_and_crossover():
    eta, beta, mass = 0.3, 1.7, 4.0
    dpp, dxx = diffusion_coefficients(eta, beta, mass)
    assert dpp == pytest.approx(eta * mass / beta)
    assert dpp * dxx == pytest.approx(eta**2 / 16)
    t = np.array([0.2, beta, 3.0])
    # Ratio of the cubic decay exponent to the position-diffusion exponent.
    cubic = dpp * t**3 / (12 * mass**2)
    assert np.allclose(crossover_ratio(t, beta), cubic / (dxx * t), rtol=1e-13)
    assert crossover_ratio(beta, beta) == pytest.approx(4 / 3)
    assert thermal_wavelength(2.0, 1.0) == pytest.approx(2 * math.sqrt(math.pi))


@settings(max_examples=40, deadline=None)
@given(x0=st.floats(-3, 3), p0=st.floats(-3, 3), w=st.floats(0.2, 3.0),
       hbar=st.floats(0.3, 2.0))
def test_fourier_round_trip_and_normalisation(x0, p0, w, hbar):
    g = wave_packet(x0, p0, w, hbar)
    back = g.fourier(hbar).inverse_fourier(hbar)
    x = np.linspace(x0 - 3 * w, x0 + 3 * w, 7)
    assert np.allclose(back(x), g(x), rtol=1e-10, atol=1e-14)
    assert GaussianSumState((1.0,), (g,)).norm(hbar) == pytest.approx(1.0, rel=1e-12)
    assert GaussianSumState((1.0,), (g,)).free_evolve(1.3, 2.0, hbar).norm(hbar) == pytest.approx(
        1.0, rel=1e-10)


def test_fourier_matches_direct_quadrature():
    g = wave_packet(0.7, -1.1, 0.8)
    for p in (-2.0, -1.1, 0.4):
        re = integrate.quad(lambda x: (np.exp(-1j * p * x) * g(x)).real, -15, 15, epsabs=1e-14)[0]
        im = integrate.quad(lambda x: (np.exp(-1j * p * x) * g(x)).imag, -15, 15, epsabs=1e-14)[0]
        assert g.fourier(1.0)(p) == pytest.approx((re + 1j * im) / math.sqrt(2 * math.pi),
                                                   abs=1e-12)


def test_free_evolution_moves_the_centre_and_spreads():
    g = wave_packet(0.0, 2.0, 0.5)
    x = np.linspace(-10, 20, 3001)
    dx = x[1] - x[0]
    later = np.abs(g.free_evolve(1.5, 2.0, 1.0)(x)) ** 2
    mean = np.sum(x * later) * dx
    var = np.sum((x - mean) ** 2 * later) * dx
    assert mean == pytest.approx(2.0 * 1.5 / 2.0, rel=1e-9)
    assert var == pytest.approx(0.25 + (1.5 / (2.0 * 2 * 0.5)) ** 2, rel=1e-9)


def test_state_validation():
    with pytest.raises(ValueError):
        wave_packet(0, 0, 0.0)
    with pytest.raises(ValueError):
        GaussianSumState((1.0,), (Gaussian1D(-1.0, 0, 0),))
    with pytest.raises(ValueError):
        GaussianSumState((1.0, 2.0), (wave_packet(0, 0, 1),))
    with pytest.raises(TypeError):
        frictionless_solution_position("psi", 0.0, 0.0, 1.0, DPP, DXX, M)
    assert STATE.norm() == pytest.approx(1.0, rel=1e-13)


def test_solutions_reduce_to_the_initial_state():
    a = frictionless_solution_position(STATE, 0.3, -0.2, 0.0, DPP, DXX, M)
    assert a == pytest.approx(STATE.position(0.3) * np.conj(STATE.position(-0.2)), abs=1e-15)
    b = frictionless_solution_momentum(STATE, 0.3, -0.2, 0.0, DPP, DXX, M)
    assert b == pytest.approx(STATE.momentum(0.3) * np.conj(STATE.momentum(-0.2)), abs=1e-15)


def test_position_solution_obeys_the_master_equation():
    # d rho/dt = (i/2M)(d_X^2 - d_X'^2) rho - Dpp (X - X')^2 rho + Dxx (d_X + d_X')^2 rho.
    t, h, ht = 0.7, 2e-3, 1e-4

    def rho(x, xp, tt=t):
        return frictionless_solution_position(STATE, x, xp, tt, DPP, DXX, M)

    for x, xp in [(0.2, -0.9), (-1.4, 1.1), (0.5, 0.5)]:
        lhs = (rho(x, xp, t + ht) - rho(x, xp, t - ht)) / (2 * ht)
        c = rho(x, xp)
        dxx = (rho(x + h, xp) - 2 * c + rho(x - h, xp)) / h**2
        dpp = (rho(x, xp + h) - 2 * c + rho(x, xp - h)) / h**2
        # Second derivative along the diagonal direction (1, 1).
        ddiag = (rho(x + h, xp + h) - 2 * c + rho(x - h, xp - h)) / h**2
        rhs = 0.5j / M * (dxx - dpp) - DPP * (x - xp) ** 2 * c + DXX * ddiag
        assert lhs == pytest.approx(rhs, rel=1e-5, abs=1e-7)


def test_momentum_solution_is_the_fourier_transform_of_the_position_solution():
    t = 0.7
    x = np.linspace(-14, 14, 561)
    dx = x[1] - x[0]
    XX, XP = np.meshgrid(x, x, indexing="ij")
    rx = frictionless_solution_position(STATE, XX, XP, t, DPP, DXX, M)
    assert np.trace(rx).real * dx == pytest.approx(1.0, abs=1e-12)
    for P, Pp in [(0.3, 0.3), (0.5, -0.4), (1.2, 0.1), (-0.7, 0.9)]:
        ph = np.exp(-1j * P * x)[:, None] * np.exp(1j * Pp * x)[None, :]
        ft = np.sum(ph * rx) * dx * dx / (2 * math.pi)
        mp = frictionless_solution_momentum(STATE, P, Pp, t, DPP, DXX, M)
        assert ft == pytest.approx(mp, rel=1e-11)


def test_momentum_spread_grows_diffusively():
    p = np.linspace(-15, 15, 1201)
    dp = p[1] - p[0]

    def moments(t):
        d = frictionless_solution_momentum(STATE, p, p, t, DPP, DXX, M).real
        return np.sum(d) * dp, np.sum(p * p * d) * dp

    n0, m0 = moments(0.0)
    n1, m1 = moments(0.7)
    assert n0 == pytest.approx(1.0, abs=1e-12)
    assert n1 == pytest.approx(1.0, abs=1e-12)
    assert m1 - m0 == pytest.approx(2 * DPP * 0.7, rel=1e-10)
