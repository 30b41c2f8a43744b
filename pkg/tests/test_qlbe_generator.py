import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from qlbe.qlbe_generator import (
    DensityMatrixGrid,
    apply_generator,
    attenuation_from_loss,
    born_lindblad_scaled,
    energy_shift,
    grid_loss_rates,
    lindblad_modulus,
    lindblad_value,
    optical_potential,
    quantum_gain_kernel,
    refraction_index,
    thermal_forward_average,
)
from qlbe.scattering import (
    BornPotential,
    Constant,
    GasSpec,
    GaussianPotential,
    ParticleSpec,
    PhaseFreeModel,
    PowerLaw,
    _basis,
    classical_gain_rate,
    classical_loss_rate,
)
from qlbe.trajectory_engine import loss_rate_scaled

GAS = GasSpec()
PART = ParticleSpec(M=2.0)
BORN = BornPotential(GaussianPotential(-0.5, 0.8))
MODELS = [Constant(1.0), PowerLaw(0.2, -0.4), BORN]
vec = st.tuples(*[st.floats(-2.0, 2.0)] * 3).map(np.array)


@pytest.mark.parametrize("model", MODELS, ids=["constant", "power", "born"])
def test_gain_kernel_diagonal_is_the_classical_rate(model):
    P = np.array([0.4, -0.3, 1.1])
    Q = np.array([0.5, 0.9, -0.2])
    kernel = quantum_gain_kernel(P, P, Q, model, GAS, PART)
    assert kernel.real == pytest.approx(float(classical_gain_rate(P, Q, model, GAS, PART)),
                                        rel=1e-8)
    assert abs(kernel.imag) < 1e-14


@settings(max_examples=25, deadline=None)
@given(P=vec, Pp=vec, Q=vec)
def test_gain_kernel_is_hermitian(P, Pp, Q):
    if np.linalg.norm(Q) < 1e-2:
        return
    for model in (Constant(1.0), BORN):
        a = quantum_gain_kernel(P, Pp, Q, model, GAS, PART)
        b = quantum_gain_kernel(Pp, P, Q, model, GAS, PART)
        assert a == pytest.approx(np.conj(b), rel=1e-12, abs=1e-300)


def test_gain_kernel_refuses_unknown_phases():
    Q = np.array([0.0, 0.0, 1.0])
    with pytest.raises(PhaseFreeModel):
        quantum_gain_kernel(np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), Q,
                            PowerLaw(0.2, -0.4), GAS, PART)
    # Equal orthogonal parts are fine: the phase cancels.
    quantum_gain_kernel(np.array([1.0, 0, 0.3]), np.array([1.0, 0, -0.4]), Q,
                        PowerLaw(0.2, -0.4), GAS, PART)


@pytest.mark.parametrize("model", MODELS, ids=["constant", "power", "born"])
def test_lindblad_modulus_squared_integrates_to_gain_rate(model):
    P_init = np.array([0.3, 0.8, -0.5])
    Q = np.array([0.2, -0.6, 0.9])
    qhat = Q / np.linalg.norm(Q)
    e1, e2 = _basis(qhat)

    def integrand(y, x):
        return float(lindblad_modulus(x * e1 + y * e2, P_init, Q, model, GAS, PART)) ** 2

    total = integrate.dblquad(integrand, -8, 8, -8, 8, epsabs=1e-12, epsrel=1e-9)[0]
    want = float(classical_gain_rate(P_init + Q, Q, model, GAS, PART))
    assert total == pytest.approx(want, rel=1e-7)


def test_lindblad_value_modulus_and_phase_requirement():
    p = np.array([0.3, 0.0, 0.0])
    P = np.array([0.1, 0.2, 0.5])
    Q = np.array([0.0, 0.0, 0.7])
    v = lindblad_value(p, P, Q, BORN, GAS, PART)
    assert abs(v) == pytest.approx(float(lindblad_modulus(p, P, Q, BORN, GAS, PART)), rel=1e-14)
    with pytest.raises(PhaseFreeModel):
        lindblad_value(p, P, Q, Constant(1.0), GAS, PART)
    with pytest.raises(ValueError):
        lindblad_modulus(np.array([0.0, 0.0, 0.3]), P, Q, BORN, GAS, PART)


@pytest.mark.parametrize("u", [0.0, 0.7, 3.0])
def test_scaled_lindblad_function_integrates_to_loss_rate(u):
    U = np.array([0.0, 0.0, u])

    def integrand(xi, k):
        K = np.array([k * math.sqrt(1 - xi * xi), 0.0, k * xi])
        return 2 * math.pi * k * k * float(born_lindblad_scaled(U, K, 1.0)) ** 2 / (4 * math.pi)

    val = integrate.dblquad(integrand, 0.0, 2 * u + 14, -1.0, 1.0, epsabs=1e-12)[0]
    assert val == pytest.approx(loss_rate_scaled(u), rel=1e-9)


def test_forward_average_of_a_constant_is_the_constant():
    for method in ("1d", "3d"):
        avg = thermal_forward_average(lambda p: 2.5 + 1j, GAS, PART, np.array([0, 0, 1.3]),
                                      method=method)
        assert avg == pytest.approx(2.5 + 1j, rel=1e-11)
    with pytest.raises(ValueError):
        thermal_forward_average(lambda p: 1.0, GAS, PART, np.zeros(3), method="2d")


def test_forward_average_at_rest_matches_direct_speed_integral():
    f0 = lambda p: np.exp(-p)  # noqa: E731
    mstar = PART.reduced_mass(GAS)
    want = integrate.quad(lambda v: 4 / math.sqrt(math.pi) * v * v * math.exp(-v * v)
                          * math.exp(-mstar * v), 0, 20)[0]
    got = thermal_forward_average(f0, GAS, PART, np.zeros(3))
    assert got.real == pytest.approx(want, rel=1e-11)


def test_optics_are_consistent():
    P = np.array([0.0, 0.0, 1.2])
    v = optical_potential(P, BORN, GAS, PART)
    assert energy_shift(P, BORN, GAS, PART) == pytest.approx(v.real)
    # The imaginary optical potential is half the loss rate.
    assert -2 * v.imag == pytest.approx(classical_loss_rate(P, BORN, GAS, PART), rel=1e-9)
    n = refraction_index(1.2, BORN, GAS, PART)
    assert n.imag == pytest.approx(attenuation_from_loss(1.2, BORN, GAS, PART), rel=1e-9)
    with pytest.raises(ValueError):
        refraction_index(0.0, BORN, GAS, PART)
    with pytest.raises(PhaseFreeModel):
        refraction_index(1.0, Constant(1.0), GAS, PART)


def test_grid_validation_and_constructors():
    with pytest.raises(ValueError):
        DensityMatrixGrid(10, 0.5, np.zeros((1000, 1000)))
    with pytest.raises(ValueError):
        DensityMatrixGrid(3, 0.5, np.zeros((9, 9)))
    th = DensityMatrixGrid.thermal(5, 0.5, GAS, PART)
    assert th.trace == pytest.approx(1.0)
    psi = np.random.default_rng(0).normal(size=125) + 0j
    pure = DensityMatrixGrid.pure(5, 0.5, psi)
    assert pure.trace == pytest.approx(1.0)
    assert pure.is_hermitian(atol=0.0)
    assert np.allclose(pure.momenta.mean(axis=0), 0.0)


@pytest.mark.parametrize("model", [Constant(1.0), BORN], ids=["constant", "born"])
def test_generator_conserves_trace_and_hermiticity(model):
    rng = np.random.default_rng(4)
    psi = rng.normal(size=125) + 1j * rng.normal(size=125)
    grid = DensityMatrixGrid.pure(5, 0.7, psi)
    d, diag = apply_generator(grid, model, GAS, PART, hamiltonian=True, return_diagnostics=True)
    assert abs(diag["trace_rate"]) < 1e-12 * diag["loss_scale"]
    assert np.max(np.abs(d - d.conj().T)) < 1e-14 * np.max(np.abs(d))


def test_grid_loss_rates_stay_below_the_continuum_rate():
    grid = DensityMatrixGrid(5, 0.6, np.zeros((125, 125)))
    rates = grid_loss_rates(grid, Constant(1.0), GAS, PART)
    full = np.array([classical_loss_rate(p, Constant(1.0), GAS, PART) for p in grid.momenta])
    assert np.all(rates > 0)
    assert np.all(rates < full)


def test_continuum_loss_warns_about_leakage_and_bad_models():
    grid = DensityMatrixGrid.thermal(3, 0.5, GAS, PART)
    with pytest.warns(RuntimeWarning, match="leakage"):
        apply_generator(grid, Constant(1.0), GAS, PART, loss="continuum")
    with pytest.raises(TypeError):
        apply_generator(grid, PowerLaw(0.2, -0.4), GAS, PART)
    with pytest.raises(ValueError):
        apply_generator(grid, Constant(1.0), GAS, PART, loss="other")
