"""Monte Carlo wave-function unravelling on momentum superpositions.

A trajectory state is a finite superposition of momentum eigenstates,
``sum_j c_j |U_j>``, with ``U`` the test-particle momentum in units of
``M v_beta``. Between collisions the amplitudes drift (phase plus
norm-decay); at a collision every component is kicked by the same scaled
transfer ``(m*/M) K`` and the amplitudes are reweighted by the Born
Lindblad function. Time is in internal units; with the default
``gamma_beta = 1`` this coincides with units of ``1/Gamma_beta``.

Every trajectory owns a random stream derived from ``(seed, index)`` only,
so ensembles are reproducible regardless of how they are scheduled.
"""

from __future__ import annotations

import cmath
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core_math import SQRT_PI, loss_function

BISECTION_STEPS = 60
MAX_PROPOSALS = 1_000_000


class SamplerStall(RuntimeError):
    """Raised when a rejection sampler exceeds its proposal budget."""


@dataclass
class SuperpositionState:
    """Normalised superposition of scaled momentum eigenstates."""

    amplitudes: np.ndarray
    momenta: np.ndarray
    mass_ratio: float
    time: float = 0.0

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        self.momenta = np.asarray(self.momenta, dtype=float).reshape(-1, 3)
        if self.amplitudes.size != self.momenta.shape[0]:
            raise ValueError("one amplitude per momentum component is required")
        if self.mass_ratio <= 0:
            raise ValueError("mass_ratio must be positive")
        norm = np.sqrt(np.sum(np.abs(self.amplitudes) ** 2))
        if norm == 0:
            raise ValueError("state has zero norm")
        self.amplitudes = self.amplitudes / norm

    @classmethod
    def eigenstate(cls, u, mass_ratio: float) -> "SuperpositionState":
        return cls(np.ones(1), np.asarray(u, dtype=float).reshape(1, 3), mass_ratio)

    @classmethod
    def symmetric_pair(cls, u0, mass_ratio: float) -> "SuperpositionState":
        """Equal-weight superposition of ``+u0`` and ``-u0``."""
        u0 = np.asarray(u0, dtype=float)
        return cls(np.ones(2) / math.sqrt(2), np.stack([u0, -u0]), mass_ratio)

    @property
    def n_components(self) -> int:
        return self.amplitudes.size

    @property
    def weights(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def copy(self) -> "SuperpositionState":
        return SuperpositionState(
            self.amplitudes.copy(), self.momenta.copy(), self.mass_ratio, self.time
        )


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for trajectory ``index`` of master seed ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.PCG64(ss))


def kick_factor(mass_ratio: float) -> float:
    """m*/M expressed through m/M."""
    return mass_ratio / (1.0 + mass_ratio)


def loss_rate_scaled(u, gamma_beta: float = 1.0):
    """Scaled loss rate ``Gamma_beta (2/sqrt(pi)) 1F1(-1/2, 3/2; -U^2)``."""
    if np.ndim(u) == 0:
        return gamma_beta * 2.0 / SQRT_PI * loss_function(float(u))
    u = np.asarray(u, dtype=float)
    return gamma_beta * 2.0 / SQRT_PI * np.vectorize(loss_function, otypes=[float])(u)


def transfer_density(k, xi, u: float, gamma_beta: float = 1.0):
    """Joint density of transfer modulus ``K`` and cosine ``xi`` at speed ``u``."""
    k = np.asarray(k, dtype=float)
    norm = gamma_beta / (2 * SQRT_PI * loss_rate_scaled(u, gamma_beta))
    return norm * k * np.exp(-((k / 2 + u * np.asarray(xi)) ** 2))


# Waiting times and drift ---------------------------------------------------


def survival(weights, rates, tau: float) -> float:
    """``1 - F(tau)``: probability that no jump happened within ``tau``."""
    return float(sum(w * math.exp(-r * tau) for w, r in zip(weights, rates)))


def invert_survival(weights, rates, target: float) -> float:
    """Smallest ``tau`` with ``survival(tau) = target`` for ``0 < target <= 1``."""
    if target >= 1.0:
        return 0.0
    r0 = rates[0]
    if all(r == r0 for r in rates):
        return math.inf if r0 == 0 else -math.log(target) / r0
    if survival(weights, rates, math.inf) >= target:
        return math.inf
    lo, hi = 0.0, 1.0 / max(rates)
    while survival(weights, rates, hi) > target:
        lo, hi = hi, 2.0 * hi
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if survival(weights, rates, mid) > target:
            lo = mid
        else:
            hi = mid
    return hi


def _rate(ux: float, uy: float, uz: float, gamma_beta: float) -> float:
    return gamma_beta * 2.0 / SQRT_PI * loss_function(math.sqrt(ux * ux + uy * uy + uz * uz))


def _as_lists(state: SuperpositionState):
    amps = [complex(c) for c in state.amplitudes]
    us = [tuple(float(v) for v in u) for u in state.momenta]
    return amps, us


def _drift_amps(amps, us, rates, mass_ratio: float, tau: float):
    out = []
    for c, (ux, uy, uz), r in zip(amps, us, rates):
        energy = 0.5 * (ux * ux + uy * uy + uz * uz) / mass_ratio
        out.append(c * cmath.exp(complex(-0.5 * r * tau, -energy * tau)))
    norm = math.sqrt(sum(c.real * c.real + c.imag * c.imag for c in out))
    return [c / norm for c in out]


def _jump_amps(amps, us, k, kick: float):
    kx, ky, kz = k
    kn = math.sqrt(kx * kx + ky * ky + kz * kz)
    args = [kn / 2 + (ux * kx + uy * ky + uz * kz) / kn for ux, uy, uz in us]
    e = [x * x for x in args]
    e_min = min(e)
    # The common factor exp(-min arg^2 / 2) cancels in the normalisation.
    out = [c * math.exp(-(ei - e_min) / 2) for c, ei in zip(amps, e)]
    norm = math.sqrt(sum(c.real * c.real + c.imag * c.imag for c in out))
    out = [c / norm for c in out]
    new_us = [(ux + kick * kx, uy + kick * ky, uz + kick * kz) for ux, uy, uz in us]
    return out, new_us


def component_rates(state: SuperpositionState, gamma_beta: float = 1.0) -> list[float]:
    """Scaled loss rate of every component."""
    return [_rate(*u, gamma_beta) for u in _as_lists(state)[1]]


def sample_waiting_time(
    state: SuperpositionState, rng: np.random.Generator, gamma_beta: float = 1.0
) -> float:
    """Draw the time to the next collision by inverting the survival function."""
    target = 1.0 - rng.random()
    return invert_survival(
        list(state.weights), component_rates(state, gamma_beta), target
    )


def drift(
    state: SuperpositionState, tau: float, gamma_beta: float = 1.0
) -> SuperpositionState:
    """Deterministic evolution between collisions; momenta are unchanged."""
    amps, us = _as_lists(state)
    c = _drift_amps(amps, us, component_rates(state, gamma_beta), state.mass_ratio, tau)
    return SuperpositionState(
        np.array(c), state.momenta.copy(), state.mass_ratio, state.time + tau
    )


# Jump sampling ---------------------------------------------------------------


def _xi_weight(s: float) -> float:
    # Marginal weight of the cosine: int_0^inf K exp(-(K/2 + s)^2) dK.
    return 2.0 * math.exp(-s * s) - 2.0 * SQRT_PI * s * math.erfc(s)


def _sample_half_transfer(s: float, rng: np.random.Generator) -> float:
    # Draw y = K/2 >= 0 from the density proportional to y exp(-(y + s)^2).
    for _ in range(MAX_PROPOSALS):
        if s >= 0.5:
            y = rng.gamma(2.0, 0.5 / s)
            if rng.random() < math.exp(-y * y):
                return y
        elif s >= 0.0:
            y = math.sqrt(-math.log1p(-rng.random()))
            if rng.random() < math.exp(-2.0 * s * y):
                return y
        else:
            # w = y + s has density (w + a) exp(-w^2) on w > -a, a = -s.
            a = -s
            m_flat = a * SQRT_PI / 2.0 * (1.0 + math.erf(a))
            m_pos = 0.5
            m_neg = 0.5 * (-math.expm1(-a * a))
            pick = rng.random() * (m_flat + m_pos + m_neg)
            if pick < m_flat:
                # Truncated normal: redraw within the component so the
                # mixture weights stay exact.
                w = rng.standard_normal() / math.sqrt(2.0)
                while w <= -a:
                    w = rng.standard_normal() / math.sqrt(2.0)
            elif pick < m_flat + m_pos:
                w = math.sqrt(-math.log1p(-rng.random()))
            else:
                w = -math.sqrt(-math.log1p(rng.random() * math.expm1(-a * a)))
            if rng.random() * (abs(w) + a) < w + a:
                return w + a
    raise SamplerStall(f"transfer sampler stalled at s = {s}")


def sample_xi(u: float, rng: np.random.Generator) -> float:
    """Cosine between transfer and momentum, marginal of the transfer density."""
    if u == 0.0:
        return 2.0 * rng.random() - 1.0
    g_max = _xi_weight(-u)
    for _ in range(MAX_PROPOSALS):
        xi = 2.0 * rng.random() - 1.0
        if rng.random() * g_max < _xi_weight(u * xi):
            return xi
    raise SamplerStall(f"cosine sampler stalled at U = {u}")


def sample_k_xi(u: float, rng: np.random.Generator) -> tuple[float, float]:
    """Draw ``(K, xi)`` from the scaled transfer density at speed ``u``."""
    xi = sample_xi(u, rng)
    y = _sample_half_transfer(u * xi, rng)
    return 2.0 * y, xi


def _isotropic(rng: np.random.Generator) -> tuple[float, float, float]:
    z = 2.0 * rng.random() - 1.0
    phi = 2.0 * math.pi * rng.random()
    r = math.sqrt(max(0.0, 1.0 - z * z))
    return r * math.cos(phi), r * math.sin(phi), z


def _transfer(ux: float, uy: float, uz: float, rng: np.random.Generator):
    # Transfer vector for one eigenstate; azimuth about U is uniform.
    u = math.sqrt(ux * ux + uy * uy + uz * uz)
    k, xi = sample_k_xi(u, rng)
    if u > 0:
        ax, ay, az = ux / u, uy / u, uz / u
    else:
        ax, ay, az = _isotropic(rng)
    if abs(ax) < 0.9:
        e1x, e1y, e1z = 0.0, az, -ay
    else:
        e1x, e1y, e1z = -az, 0.0, ax
    n = math.sqrt(e1x * e1x + e1y * e1y + e1z * e1z)
    e1x, e1y, e1z = e1x / n, e1y / n, e1z / n
    e2x = ay * e1z - az * e1y
    e2y = az * e1x - ax * e1z
    e2z = ax * e1y - ay * e1x
    phi = 2.0 * math.pi * rng.random()
    c, s = math.cos(phi), math.sin(phi)
    kpar = k * xi
    kperp = k * math.sqrt(max(0.0, 1.0 - xi * xi))
    return (
        kpar * ax + kperp * (c * e1x + s * e2x),
        kpar * ay + kperp * (c * e1y + s * e2y),
        kpar * az + kperp * (c * e1z + s * e2z),
    )


def sample_transfer(u_vec, rng: np.random.Generator) -> np.ndarray:
    """Scaled transfer vector for a single eigenstate of momentum ``u_vec``."""
    ux, uy, uz = (float(v) for v in np.asarray(u_vec, dtype=float).reshape(3))
    return np.array(_transfer(ux, uy, uz, rng))


def jump_weights(state: SuperpositionState, gamma_beta: float = 1.0) -> np.ndarray:
    """Mixture weights ``|c_i|^2 Gamma_i`` for choosing the emitting component."""
    lam = state.weights * np.asarray(component_rates(state, gamma_beta))
    return lam / np.sum(lam)


def _pick(weights, rates, rng: np.random.Generator) -> int:
    lam = [w * r for w, r in zip(weights, rates)]
    x = rng.random() * sum(lam)
    acc = 0.0
    for i, v in enumerate(lam):
        acc += v
        if x < acc:
            return i
    return len(lam) - 1


def sample_jump(
    state: SuperpositionState, rng: np.random.Generator, gamma_beta: float = 1.0
) -> np.ndarray:
    """Draw the scaled transfer ``K`` from the component mixture.

    ``state`` must already carry the amplitudes at the jump epoch.
    """
    amps, us = _as_lists(state)
    if len(us) == 1:
        return np.array(_transfer(*us[0], rng))
    i = _pick(list(state.weights), component_rates(state, gamma_beta), rng)
    return np.array(_transfer(*us[i], rng))


def apply_jump(state: SuperpositionState, k) -> SuperpositionState:
    """Kick every component by ``(m*/M) K`` and reweight the amplitudes."""
    amps, us = _as_lists(state)
    k = tuple(float(v) for v in np.asarray(k, dtype=float).reshape(3))
    c, new_us = _jump_amps(amps, us, k, kick_factor(state.mass_ratio))
    return SuperpositionState(np.array(c), np.array(new_us), state.mass_ratio, state.time)


# Trajectories ---------------------------------------------------------------


@dataclass
class TrajectoryRecord:
    """Per-sample-time statistics of one trajectory."""

    times: np.ndarray
    mean_u: np.ndarray
    mean_usq: np.ndarray
    coherence: np.ndarray | None
    n_jumps: int
    states: list = field(default_factory=list)


def run_trajectory(
    initial: SuperpositionState,
    t_max: float,
    sample_times: Sequence[float],
    rng: np.random.Generator,
    gamma_beta: float = 1.0,
    keep_states: bool = False,
) -> TrajectoryRecord:
    """Alternate drift and jumps up to ``t_max``, recording ``sample_times``.

    Sample times must be sorted; a snapshot is the state drifted from the
    most recent jump to that time.
    """
    times = np.asarray(sample_times, dtype=float)
    if np.any(np.diff(times) < 0):
        raise ValueError("sample_times must be non-decreasing")
    n_t = times.size
    mass_ratio = initial.mass_ratio
    kick = kick_factor(mass_ratio)
    amps, us = _as_lists(initial)
    n = len(amps)
    ref = abs(amps[0] * amps[1].conjugate()) if n >= 2 else 0.0
    mean_u = np.zeros((n_t, 3))
    mean_usq = np.zeros(n_t)
    coherence = np.zeros(n_t) if ref > 0 else None
    states = []
    t = initial.time
    k_next = 0
    jumps = 0
    time_list = times.tolist()
    while True:
        rates = [_rate(*u, gamma_beta) for u in us]
        weights = [c.real * c.real + c.imag * c.imag for c in amps]
        tau = invert_survival(weights, rates, 1.0 - rng.random())
        t_jump = t + tau
        while k_next < n_t and time_list[k_next] < t_jump:
            snap = _drift_amps(amps, us, rates, mass_ratio, time_list[k_next] - t)
            w = [c.real * c.real + c.imag * c.imag for c in snap]
            mean_u[k_next] = [
                sum(wi * u[d] for wi, u in zip(w, us)) for d in range(3)
            ]
            mean_usq[k_next] = sum(
                wi * (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]) for wi, u in zip(w, us)
            )
            if coherence is not None:
                coherence[k_next] = abs(snap[0] * snap[1].conjugate()) / ref
            if keep_states:
                states.append(
                    SuperpositionState(
                        np.array(snap), np.array(us), mass_ratio, time_list[k_next]
                    )
                )
            k_next += 1
        if t_jump > t_max or not math.isfinite(t_jump):
            break
        amps = _drift_amps(amps, us, rates, mass_ratio, tau)
        t = t_jump
        if n == 1:
            i = 0
        else:
            w = [c.real * c.real + c.imag * c.imag for c in amps]
            i = _pick(w, rates, rng)
        k = _transfer(*us[i], rng)
        amps, us = _jump_amps(amps, us, k, kick)
        jumps += 1
    return TrajectoryRecord(times, mean_u, mean_usq, coherence, jumps, states)


@dataclass
class EnsembleData:
    """Stacked per-trajectory records, index-ordered."""

    times: np.ndarray
    mean_u: np.ndarray
    mean_usq: np.ndarray
    coherence: np.ndarray | None
    n_jumps: np.ndarray
    mass_ratio: float


def _run_chunk(args):
    initial, t_max, times, seed, lo, hi, gamma_beta = args
    recs = [
        run_trajectory(initial, t_max, times, trajectory_rng(seed, i), gamma_beta)
        for i in range(lo, hi)
    ]
    mean_u = np.stack([r.mean_u for r in recs])
    mean_usq = np.stack([r.mean_usq for r in recs])
    coh = None
    if recs and recs[0].coherence is not None:
        coh = np.stack([r.coherence for r in recs])
    jumps = np.array([r.n_jumps for r in recs], dtype=np.int64)
    return mean_u, mean_usq, coh, jumps


def simulate_ensemble(
    initial: SuperpositionState,
    n_traj: int,
    t_max: float,
    sample_times: Sequence[float],
    master_seed: int,
    gamma_beta: float = 1.0,
    workers: int = 1,
) -> EnsembleData:
    """Run ``n_traj`` independent trajectories and stack their records.

    Trajectory ``i`` always uses stream ``(master_seed, i)``; chunks are
    reassembled in index order, so ``workers`` never changes the result.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be at least 1")
    times = np.asarray(sample_times, dtype=float)
    workers = max(1, int(workers))
    n_chunks = min(n_traj, workers * 4) if workers > 1 else 1
    edges = np.linspace(0, n_traj, n_chunks + 1).astype(int)
    jobs = [
        (initial, t_max, times, master_seed, int(lo), int(hi), gamma_beta)
        for lo, hi in zip(edges[:-1], edges[1:])
        if hi > lo
    ]
    if workers == 1:
        parts = [_run_chunk(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, jobs))
    mean_u = np.concatenate([p[0] for p in parts])
    mean_usq = np.concatenate([p[1] for p in parts])
    coh = None
    if parts[0][2] is not None:
        coh = np.concatenate([p[2] for p in parts])
    jumps = np.concatenate([p[3] for p in parts])
    return EnsembleData(times, mean_u, mean_usq, coh, jumps, initial.mass_ratio)


def run_ensemble(
    initial: SuperpositionState,
    n_traj: int,
    t_max: float,
    sample_times: Sequence[float],
    master_seed: int,
    gamma_beta: float = 1.0,
    workers: int = 1,
):
    """Simulate an ensemble and reduce it to an :class:`EnsembleSeries`."""
    from .observables import EnsembleSeries

    data = simulate_ensemble(
        initial, n_traj, t_max, sample_times, master_seed, gamma_beta, workers
    )
    return EnsembleSeries.from_data(data)
