"""Ensemble estimators, analytic relaxation laws and exponential fits.

Momenta are scaled, ``U = P / (M v_beta)``, and time is internal time
(units of ``1/Gamma_beta`` when ``gamma_beta = 1``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core_math import SQRT_PI, hyp1f1, loss_function
from .trajectory_engine import EnsembleData, kick_factor

MIN_FIT_POINTS = 4
WINDOW_SNR = 20.0


def jackknife(samples: np.ndarray, stat) -> tuple[np.ndarray, np.ndarray]:
    """Estimate and per-trajectory jackknife standard error of ``stat``.

    ``samples`` has trajectories along axis 0; ``stat`` maps a mean over
    axis 0 to the estimate. Leave-one-out means are formed in closed form.
    """
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    mean = samples.mean(axis=0)
    est = np.asarray(stat(mean))
    if n < 2:
        return est, np.zeros_like(est)
    loo = (samples.sum(axis=0)[None, ...] - samples) / (n - 1)
    vals = np.asarray(stat(loo))
    var = (n - 1) / n * np.sum((vals - vals.mean(axis=0)) ** 2, axis=0)
    return est, np.sqrt(var)


def _sq_norm(mean_u):
    return np.sum(mean_u**2, axis=-1)


@dataclass
class EnsembleSeries:
    """Time-indexed ensemble estimates with jackknife standard errors."""

    times: np.ndarray
    mean_u: np.ndarray
    mean_u_se: np.ndarray
    mean_u_squared: np.ndarray
    mean_u_squared_se: np.ndarray
    mean_usq: np.ndarray
    mean_usq_se: np.ndarray
    energy: np.ndarray
    energy_se: np.ndarray
    coherence: np.ndarray | None
    coherence_se: np.ndarray | None
    n_traj: int
    mass_ratio: float
    mean_jumps: float = 0.0
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_data(cls, data: EnsembleData) -> "EnsembleSeries":
        n = data.mean_u.shape[0]
        mean_u = data.mean_u.mean(axis=0)
        se_u = data.mean_u.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else 0 * mean_u
        u2, u2_se = jackknife(data.mean_u, _sq_norm)
        usq = data.mean_usq.mean(axis=0)
        usq_se = data.mean_usq.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else 0 * usq
        # Kinetic energy in internal units: E = M U^2 / 2 with M = 1 / (m/M).
        scale = 0.5 / data.mass_ratio
        coh = coh_se = None
        if data.coherence is not None:
            coh = data.coherence.mean(axis=0)
            coh_se = (
                data.coherence.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else 0 * coh
            )
        return cls(
            times=data.times,
            mean_u=mean_u,
            mean_u_se=se_u,
            mean_u_squared=u2,
            mean_u_squared_se=u2_se,
            mean_usq=usq,
            mean_usq_se=usq_se,
            energy=scale * usq,
            energy_se=scale * usq_se,
            coherence=coh,
            coherence_se=coh_se,
            n_traj=n,
            mass_ratio=data.mass_ratio,
            mean_jumps=float(np.mean(data.n_jumps)),
        )

    def columns(self) -> dict[str, np.ndarray]:
        cols = {
            "t": self.times,
            "mean_U_x": self.mean_u[:, 0],
            "mean_U_y": self.mean_u[:, 1],
            "mean_U_z": self.mean_u[:, 2],
            "mean_U2": self.mean_u_squared,
            "mean_U2_se": self.mean_u_squared_se,
            "mean_Usq": self.mean_usq,
            "mean_Usq_se": self.mean_usq_se,
            "energy": self.energy,
            "energy_se": self.energy_se,
        }
        if self.coherence is not None:
            cols["C"] = self.coherence
            cols["C_se"] = self.coherence_se
        return cols


# Analytic drifts for a constant cross-section --------------------------------


def momentum_drift_analytic(u, mass_ratio: float, gamma_beta: float = 1.0):
    """Instantaneous ``dU/dt`` of a momentum eigenstate, constant cross-section.

    ``u`` is a scaled momentum vector, or an array of them (trailing axis 3);
    an array is averaged, giving the drift of the ensemble mean.
    """
    u = np.asarray(u, dtype=float)
    mod = np.sqrt(np.sum(u * u, axis=-1))
    f = hyp1f1(-0.5, 2.5, -(mod**2))
    rate = 8.0 / (3.0 * SQRT_PI) * kick_factor(mass_ratio) * gamma_beta
    d = -rate * u * np.asarray(f)[..., None]
    return d if d.ndim == 1 else d.mean(axis=0)


def energy_drift_analytic(energy, mass_ratio: float, gamma_beta: float = 1.0):
    """Instantaneous ``dE/dt`` at kinetic energy ``energy`` (internal units).

    Arrays are averaged, giving the drift of the ensemble mean energy.
    """
    e = np.asarray(energy, dtype=float)
    if np.any(e < 0):
        raise ValueError("kinetic energy must be non-negative")
    beta = 2.0
    x = beta * e * mass_ratio
    kick = kick_factor(mass_ratio)
    reduced_over_m = 1.0 / (1.0 + mass_ratio)
    rate = 16.0 / (3.0 * SQRT_PI) * kick * gamma_beta
    d = -rate * (
        hyp1f1(-0.5, 2.5, -x) * e
        - 1.5 / beta * reduced_over_m * hyp1f1(-1.5, 1.5, -x)
    )
    d = np.asarray(d)
    return float(d) if d.ndim == 0 else float(d.mean())


def friction_rate(mass_ratio: float, gamma_beta: float = 1.0) -> float:
    """Diffusive-limit friction ``eta = (8 / 3 sqrt(pi)) (m/M) Gamma_beta``."""
    return 8.0 / (3.0 * SQRT_PI) * mass_ratio * gamma_beta


def equilibrium_usq(mass_ratio: float) -> float:
    """Equipartition value of the mean squared scaled momentum, ``3m / 2M``."""
    return 1.5 * mass_ratio


def diffusive_solutions(u2_0: float, usq_0: float, eta: float, t, mass_ratio: float):
    """Diffusive-limit predictions for ``<U>^2`` and ``<U^2>`` at times ``t``."""
    t = np.asarray(t, dtype=float)
    decay = np.exp(-2.0 * eta * t)
    eq = equilibrium_usq(mass_ratio)
    return u2_0 * decay, eq + (usq_0 - eq) * decay


def decoherence_rate_prediction(u0: float, gamma_beta: float = 1.0) -> float:
    """Single-jump decoherence rate of a ``+U0, -U0`` momentum superposition."""
    u0 = abs(float(u0))
    if u0 < 1e-4:
        # Gamma(U) - erf(U)/U vanishes at zero; leading term is U^2.
        return gamma_beta * 2.0 / SQRT_PI * (1.0 / 3.0 + 1.0 / 3.0) * u0 * u0
    gamma = gamma_beta * 2.0 / SQRT_PI * loss_function(u0)
    return gamma - gamma_beta * math.erf(u0) / u0


def coherence_estimate(data: EnsembleData) -> tuple[np.ndarray, np.ndarray]:
    """Mean normalised coherence ``C(t)`` and its standard error."""
    if data.coherence is None:
        raise ValueError("coherence requires a two-component initial state")
    n = data.coherence.shape[0]
    c = data.coherence.mean(axis=0)
    se = data.coherence.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else 0 * c
    return c, se


# Fitting --------------------------------------------------------------------


@dataclass
class ExponentialFit:
    """Result of a log-linear fit ``value = exp(intercept - rate t)``."""

    rate: float
    intercept: float
    covariance: np.ndarray
    window: tuple[float, float]
    n_points: int
    n_excluded: int
    chi2_per_dof: float

    @property
    def rate_se(self) -> float:
        return float(math.sqrt(self.covariance[0, 0]))


def signal_window(values, stderr, snr: float = WINDOW_SNR) -> np.ndarray:
    """Mask of the leading run of points whose value exceeds ``snr`` stderr."""
    values = np.asarray(values, dtype=float)
    stderr = np.asarray(stderr, dtype=float)
    ok = values > snr * stderr
    mask = np.zeros(values.shape, dtype=bool)
    for i, good in enumerate(ok):
        if not good:
            break
        mask[i] = True
    return mask


def fit_exponential(t, values, stderr=None, mask=None) -> ExponentialFit:
    """Weighted least squares of ``log(values)`` against ``t``.

    Weights are ``(values / stderr)^2``, the inverse variance of the log.
    Zero standard errors are floored at the smallest positive one in the
    window; without errors all points weigh equally.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(values, dtype=float)
    sel = np.ones(t.shape, dtype=bool) if mask is None else np.asarray(mask, bool)
    positive = y > 0
    n_excluded = int(np.sum(sel & ~positive))
    sel = sel & positive
    if np.sum(sel) < MIN_FIT_POINTS:
        raise ValueError(
            f"need at least {MIN_FIT_POINTS} positive points, got {int(np.sum(sel))}"
        )
    ts, ys = t[sel], y[sel]
    if stderr is None:
        sig = np.ones_like(ys)
    else:
        se = np.asarray(stderr, dtype=float)[sel]
        floor = se[se > 0].min() if np.any(se > 0) else 1.0
        sig = np.maximum(se, floor) / ys
    w = 1.0 / sig**2
    a = np.stack([np.ones_like(ts), -ts], axis=1)
    aw = a * w[:, None]
    cov = np.linalg.inv(a.T @ aw)
    coef = cov @ (aw.T @ np.log(ys))
    resid = np.log(ys) - a @ coef
    dof = max(1, ts.size - 2)
    chi2 = float(np.sum(w * resid**2) / dof)
    # Reorder to (rate, intercept).
    perm = np.array([[0, 1], [1, 0]])
    return ExponentialFit(
        rate=float(coef[1]),
        intercept=float(coef[0]),
        covariance=perm @ cov @ perm,
        window=(float(ts[0]), float(ts[-1])),
        n_points=int(ts.size),
        n_excluded=n_excluded,
        chi2_per_dof=chi2,
    )
