"""Classical linear Boltzmann equation: balance, stationarity, H-theorem.

Classical ensembles are N = 1 runs of the trajectory engine: a single
momentum eigenstate performs exactly the classical jump process. This
module supplies the checks applied to the rates and to such ensembles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .scattering import GasSpec, ParticleSpec, classical_gain_rate
from .structure_factor import energy_transfer, generator_on_diagonal, thermal_density

BIN_WIDTH = 0.25
BIN_BOUND = 6.0
MIN_COUNT = 5


def detailed_balance_residual(P, Q, model, gas: GasSpec, particle: ParticleSpec,
                              hbar: float = 1.0):
    """Relative violation of ``M_in(P+Q; Q) = M_in(P; -Q) exp(-beta E(Q, P))``.

    The left side is the rate of the kick ``P -> P + Q``, the right side
    that of the reverse kick weighted by the Boltzmann factor.
    """
    P = np.asarray(P, float)
    Q = np.asarray(Q, float)
    forward = classical_gain_rate(P + Q, Q, model, gas, particle, hbar)
    backward = classical_gain_rate(P, -Q, model, gas, particle, hbar)
    E = energy_transfer(Q, P, particle.M)
    rhs = backward * np.exp(-gas.beta * E)
    scale = np.maximum(np.abs(forward), np.abs(rhs))
    return np.abs(forward - rhs) / np.where(scale > 0, scale, 1.0)


def transition_symmetry(P, P_prime, model, gas: GasSpec, particle: ParticleSpec,
                        hbar: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """``W(P, P') = M(P' -> P) exp(beta P^2 / 2M)`` and its transpose."""
    P = np.asarray(P, float)
    Pp = np.asarray(P_prime, float)
    boltz = gas.beta / (2.0 * particle.M)
    w = classical_gain_rate(P, P - Pp, model, gas, particle, hbar) * np.exp(
        boltz * np.sum(P * P, axis=-1))
    wt = classical_gain_rate(Pp, Pp - P, model, gas, particle, hbar) * np.exp(
        boltz * np.sum(Pp * Pp, axis=-1))
    return w, wt


def stationary_residual(model, gas: GasSpec, particle: ParticleSpec, grid,
                        hbar: float = 1.0, density=None) -> float:
    """Largest collision term on ``density`` over the momenta in ``grid``.

    Each point's value is divided by its loss term ``M_out(P) nu(P)``. The
    default density is the thermal one of the test particle, for which
    detailed balance makes the result vanish up to quadrature error.
    """
    nu = thermal_density(gas, particle) if density is None else density
    worst = 0.0
    for P in np.atleast_2d(np.asarray(grid, float)):
        val, loss = generator_on_diagonal(P, nu, model, gas, particle, hbar,
                                          gain=classical_gain_rate)
        worst = max(worst, abs(val) / loss)
    return worst


# Histograms and relative entropy ------------------------------------------------


@dataclass
class MomentumHistogram:
    """Counts of scaled momenta in cubic bins."""

    edges: np.ndarray
    counts: np.ndarray
    outside: int = 0

    @classmethod
    def empty(cls, width: float = BIN_WIDTH, bound: float = BIN_BOUND) -> "MomentumHistogram":
        n = int(round(2 * bound / width))
        edges = np.linspace(-bound, bound, n + 1)
        return cls(edges, np.zeros((n, n, n), dtype=np.int64))

    @classmethod
    def from_samples(cls, u, width: float = BIN_WIDTH,
                     bound: float = BIN_BOUND) -> "MomentumHistogram":
        hist = cls.empty(width, bound)
        hist.add(u)
        return hist

    @property
    def width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    @property
    def total(self) -> int:
        return int(self.counts.sum()) + self.outside

    def bin_index(self, u) -> np.ndarray:
        """Flat bin index of each sample, ``-1`` outside the box."""
        u = np.atleast_2d(np.asarray(u, float))
        n = self.counts.shape[0]
        idx = np.floor((u - self.edges[0]) / self.width).astype(np.int64)
        inside = np.all((idx >= 0) & (idx < n), axis=1)
        flat = np.ravel_multi_index(tuple(np.clip(idx, 0, n - 1).T), self.counts.shape)
        return np.where(inside, flat, -1)

    def add(self, u) -> None:
        idx = self.bin_index(u)
        inside = idx >= 0
        self.outside += int(np.sum(~inside))
        self.counts += np.bincount(idx[inside], minlength=self.counts.size).reshape(
            self.counts.shape)

    def merge(self, other: "MomentumHistogram") -> "MomentumHistogram":
        if not np.array_equal(self.edges, other.edges):
            raise ValueError("histograms have different bins")
        return MomentumHistogram(self.edges, self.counts + other.counts,
                                 self.outside + other.outside)

    def density(self) -> np.ndarray:
        """Estimate of ``f`` normalised over all samples, per unit volume."""
        return self.counts / (self.total * self.width**3)


def thermal_bin_probabilities(edges, variance: float) -> np.ndarray:
    """Probability of each cubic bin under an isotropic Gaussian."""
    edges = np.asarray(edges, float)
    cdf = 0.5 * special.erfc(-edges / math.sqrt(2.0 * variance))
    p1 = np.diff(cdf)
    return p1[:, None, None] * p1[None, :, None] * p1[None, None, :]


def entropy_from_counts(counts, reference, min_count: int = MIN_COUNT) -> float:
    """Relative entropy of binned counts against reference bin probabilities.

    Only bins with at least ``min_count`` samples enter. The sample
    frequencies are renormalised over those bins while the reference keeps
    its full normalisation, which keeps the result non-negative:
    ``H >= -log(sum of kept reference mass) >= 0``. Returns ``inf`` when an
    occupied bin has zero reference probability.
    """
    counts = np.asarray(counts, float).ravel()
    reference = np.asarray(reference, float).ravel()
    keep = counts >= min_count
    if not np.any(keep):
        raise ValueError(f"no bin holds {min_count} or more samples")
    c = counts[keep]
    g = reference[keep]
    if np.any(g == 0):
        return math.inf
    f = c / c.sum()
    return float(np.sum(f * np.log(f / g)))


def relative_entropy(hist: MomentumHistogram, reference, min_count: int = MIN_COUNT) -> float:
    """``H(f|g) = sum f_i log(f_i / g_i) dV`` over well-populated bins.

    ``reference`` holds the bin probabilities of ``g``.
    """
    return entropy_from_counts(hist.counts, reference, min_count)


def equilibrium_reference(mass_ratio: float, width: float = BIN_WIDTH,
                          bound: float = BIN_BOUND) -> np.ndarray:
    """Bin probabilities of the thermal state in scaled momentum ``U``."""
    edges = MomentumHistogram.empty(width, bound).edges
    return thermal_bin_probabilities(edges, 0.5 * mass_ratio)


@dataclass
class EntropyRun:
    """Relative entropy along an ensemble with bootstrap errors."""

    times: np.ndarray
    entropy: np.ndarray
    entropy_se: np.ndarray
    step: np.ndarray
    step_se: np.ndarray

    def increases(self, n_se: float = 3.0) -> np.ndarray:
        """Indices of steps where the entropy grows by more than ``n_se`` errors."""
        return np.flatnonzero(self.step > n_se * self.step_se)


def entropy_history(times, u, mass_ratio: float, n_boot: int = 200, seed: int = 0,
                    width: float = BIN_WIDTH, bound: float = BIN_BOUND,
                    min_count: int = MIN_COUNT) -> EntropyRun:
    """Binned ``H(f_t | nu_EQ)`` at each snapshot of an N = 1 ensemble.

    ``u`` has shape ``(n_traj, n_times, 3)``. Bootstrap resamples whole
    trajectories, so that successive snapshots stay paired and the error
    of each entropy step accounts for their correlation.
    """
    u = np.asarray(u, float)
    n_traj, n_times, _ = u.shape
    hist = MomentumHistogram.empty(width, bound)
    reference = equilibrium_reference(mass_ratio, width, bound).ravel()
    idx = np.stack([hist.bin_index(u[:, k]) for k in range(n_times)], axis=1)
    size = hist.counts.size

    def entropies(mult):
        out = np.empty(n_times)
        for k in range(n_times):
            inside = idx[:, k] >= 0
            counts = np.bincount(idx[inside, k], weights=mult[inside], minlength=size)
            out[k] = entropy_from_counts(counts, reference, min_count)
        return out

    base = entropies(np.ones(n_traj))
    rng = np.random.default_rng(seed)
    boots = np.empty((n_boot, n_times))
    for b in range(n_boot):
        mult = rng.multinomial(n_traj, np.full(n_traj, 1.0 / n_traj)).astype(float)
        boots[b] = entropies(mult)
    steps = np.diff(boots, axis=1)
    return EntropyRun(
        times=np.asarray(times, float),
        entropy=base,
        entropy_se=boots.std(axis=0, ddof=1),
        step=np.diff(base),
        step_se=steps.std(axis=0, ddof=1),
    )
