"""Command line entry point: configured experiments written to CSV.

Each subcommand reads a ``key = value`` configuration, runs one
experiment and writes ``<kind>.csv`` plus a ``<kind>.json`` metadata
sidecar to the output directory. The CSV bytes depend only on the
configuration and seed; thread count and wall-clock never enter them.

Configuration layout::

    schema = 1
    seed = 7
    units = internal          # or si
    mass_ratio = 1
    u0 = 4, 0, 0

    [decohere-momentum]       # keys read only by that experiment
    u0 = 1, 2, 4

A sidecar ``.json`` file is itself accepted as ``--config``.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import io
import json
import math
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy
from scipy import constants

from . import __version__
from .brownian import crossover_ratio, diffusion_coefficients, friction_coefficient
from .decoherence import (
    BackgroundGas,
    Beam,
    DecoherenceSpec,
    coherence_factor,
    critical_pressure,
    decoherence_function,
    jump_series,
    total_rate,
    visibility,
)
from .observables import (
    EnsembleSeries,
    decoherence_rate_prediction,
    equilibrium_usq,
    fit_exponential,
    friction_rate,
    signal_window,
)
from .qlbe_generator import attenuation_from_loss, refraction_index, thermal_forward_average
from .scattering import (
    BornPotential,
    Constant,
    GasSpec,
    GaussianPotential,
    ParticleSpec,
    PowerLaw,
)
from .structure_factor import degenerate_gas, detailed_balance_residual, structure_factor
from .trajectory_engine import SuperpositionState, simulate_ensemble

SCHEMA = 1
EXPERIMENTS = (
    "thermalize",
    "relax-moments",
    "decohere-momentum",
    "decohere-position",
    "visibility",
    "refraction",
    "structure-factor",
    "brownian-check",
)

EXIT_CONFIG = 2
EXIT_RUNTIME = 1


class ConfigError(ValueError):
    """Every violation found in a configuration, not only the first."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


# Key table --------------------------------------------------------------------
# name: (type, unit system, default, positive). Unit system "any" keys are
# dimensionless or counts; "internal" and "si" keys only make sense in one.

_ANY, _INT, _SI = "any", "internal", "si"

KEYS = {
    "schema": (int, _ANY, None, True),
    "experiment": (str, _ANY, None, False),
    "seed": (int, _ANY, None, False),
    "units": (str, _ANY, "internal", False),
    "model": (str, _ANY, "constant", False),
    "n_traj": (int, _ANY, 2000, True),
    "n_samples": (int, _ANY, 61, True),
    "u0": ("vector", _ANY, "4, 0, 0", False),
    "fit_snr": (float, _ANY, 20.0, True),
    "z": (float, _ANY, 0.5, True),
    "statistics": (str, _ANY, "MB", False),
    "gamma_t": ("vector", _ANY, "0.5, 1, 3", False),
    # internal units: m = v_beta = hbar = 1, time in 1 / Gamma_beta
    "mass_ratio": (float, _INT, 1.0, True),
    "t_max": (float, _ANY, None, True),
    "sigma": (float, _ANY, 1.0, True),
    "c": (float, _INT, 0.1, True),
    "a": (float, _INT, -0.4, False),
    "v0": (float, _INT, 0.3, False),
    "r0": (float, _INT, 0.7, True),
    "n_gas": (float, _INT, 1.0, True),
    "s_max": (float, _INT, 10.0, True),
    "k_values": ("vector", _INT, "0.5, 1, 2, 4", False),
    "q_max": (float, _INT, 5.0, True),
    "e_max": (float, _INT, 4.0, True),
    "n_grid": (int, _ANY, 50, True),
    # SI units
    "temperature": (float, _SI, None, True),
    "gas_mass": (float, _SI, None, True),
    "particle_mass": (float, _SI, None, True),
    "particle_velocity": (float, _SI, None, True),
    "flight_time": (float, _SI, None, True),
    "c6": (float, _SI, None, True),
    "pressure_max": (float, _SI, None, True),
}

REQUIRED = {
    "visibility": ("temperature", "gas_mass", "particle_mass", "particle_velocity",
                   "flight_time", "c6", "pressure_max"),
}

DEFAULT_T_MAX = {
    "thermalize": 30.0,
    "relax-moments": 30.0,
    "decohere-momentum": None,
    "brownian-check": 4.0,
}


@dataclass
class ExperimentConfig:
    """Validated configuration with defaults filled in."""

    experiment: str
    seed: int
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def as_dict(self) -> dict:
        out = {"experiment": self.experiment, "seed": self.seed}
        out.update(self.values)
        return out


def _convert(key: str, raw: str, kind):
    if kind == "vector":
        parts = [p for p in raw.replace(";", ",").split(",") if p.strip()]
        return [float(p) for p in parts]
    if kind is int:
        val = float(raw)
        if not val.is_integer():
            raise ValueError(f"{key} must be an integer")
        return int(val)
    if kind is float:
        return float(raw)
    return raw.strip()


def _read_pairs(text: str, experiment: str | None):
    parser = configparser.ConfigParser(
        inline_comment_prefixes=("#",), interpolation=None, strict=True
    )
    parser.optionxform = str
    parser.read_string("[__top__]\n" + text)
    pairs = dict(parser["__top__"])
    kind = experiment or pairs.get("experiment")
    extra = [s for s in parser.sections() if s != "__top__"]
    bad_sections = [s for s in extra if s not in EXPERIMENTS]
    if kind in parser:
        pairs.update(dict(parser[kind]))
    return pairs, bad_sections


def parse_config(text: str, experiment: str | None = None,
                 seed: int | None = None) -> ExperimentConfig:
    """Parse and validate a configuration, collecting all violations.

    ``experiment`` and ``seed`` come from the command line and take
    precedence over the file.
    """
    violations: list[str] = []
    try:
        pairs, bad_sections = _read_pairs(text, experiment)
    except configparser.Error as exc:
        raise ConfigError([f"malformed configuration: {exc}"]) from exc
    for s in bad_sections:
        violations.append(f"unknown section [{s}]")
    values: dict = {}
    for key, raw in pairs.items():
        if key not in KEYS:
            violations.append(f"unknown key '{key}'")
            continue
        kind = KEYS[key][0]
        try:
            values[key] = _convert(key, raw, kind)
        except ValueError:
            violations.append(f"key '{key}': cannot read {raw!r} as {getattr(kind, '__name__', kind)}")
    if "schema" not in values:
        violations.append("missing required key 'schema'")
    elif values["schema"] != SCHEMA:
        violations.append(f"key 'schema': unsupported version {values['schema']}, expected {SCHEMA}")
    kind = experiment or values.get("experiment")
    if kind is None:
        violations.append("missing experiment kind (subcommand or key 'experiment')")
    elif kind not in EXPERIMENTS:
        violations.append(f"key 'experiment': unknown kind {kind!r}")
    elif experiment and values.get("experiment", experiment) != experiment:
        violations.append(
            f"key 'experiment': file says {values['experiment']!r} but subcommand is {experiment!r}"
        )
    if seed is not None:
        values["seed"] = int(seed)
    if "seed" not in values:
        violations.append("missing required key 'seed' (or --seed)")
    elif not 0 <= values["seed"] < 2**64:
        violations.append("key 'seed': must be an unsigned 64-bit integer")
    units = values.get("units", "internal")
    if units not in (_INT, _SI):
        violations.append(f"key 'units': must be 'internal' or 'si', got {units!r}")
    for key, val in values.items():
        _, system, _, positive = KEYS[key]
        if system not in (_ANY, units) and units in (_INT, _SI):
            label = "an SI" if system == _SI else "an internal-unit"
            violations.append(f"unit mixing: '{key}' is {label} quantity but units = {units}")
        if positive:
            nums = val if isinstance(val, list) else [val]
            if any(not (isinstance(x, (int, float)) and x > 0) for x in nums):
                violations.append(f"key '{key}': must be strictly positive, got {val}")
    if kind in REQUIRED:
        for key in REQUIRED[kind]:
            if key not in values:
                violations.append(f"missing required key '{key}' for {kind}")
    if values.get("model", "constant") not in ("constant", "power_law", "gaussian_born"):
        violations.append(f"key 'model': unknown model {values['model']!r}")
    if values.get("statistics", "MB") not in ("MB", "BE", "FD"):
        violations.append(f"key 'statistics': unknown statistics {values['statistics']!r}")
    if "u0" in values and kind in ("thermalize", "relax-moments") and len(values["u0"]) != 3:
        violations.append("key 'u0': needs three components")
    if violations:
        raise ConfigError(violations)
    for key, (typ, system, default, _) in KEYS.items():
        if key in values or default is None or system not in (_ANY, units):
            continue
        values[key] = _convert(key, str(default), typ)
    if "t_max" not in values and DEFAULT_T_MAX.get(kind) is not None:
        values["t_max"] = DEFAULT_T_MAX[kind]
    values.pop("experiment", None)
    seed_val = values.pop("seed")
    return ExperimentConfig(kind, seed_val, values)


def load_config(path: Path, experiment: str | None, seed: int | None) -> ExperimentConfig:
    text = Path(path).read_text(encoding="utf-8")
    if Path(path).suffix == ".json":
        record = json.loads(text)["config"]
        lines = [f"{k} = {', '.join(map(repr, v)) if isinstance(v, list) else v}"
                 for k, v in record.items()]
        text = "\n".join(lines)
    return parse_config(text, experiment, seed)


# Physical setup ------------------------------------------------------------------


def _model(cfg: ExperimentConfig):
    kind = cfg["model"]
    if kind == "constant":
        return Constant(cfg["sigma"])
    if kind == "power_law":
        return PowerLaw(cfg["c"], cfg["a"])
    return BornPotential(GaussianPotential(cfg["v0"], cfg["r0"]))


def _engine_setup(cfg: ExperimentConfig):
    if cfg["model"] != "constant":
        raise ConfigError(["trajectory experiments support model = constant only"])
    if cfg.values.get("units") == _SI:
        raise ConfigError(["trajectory experiments run in internal units"])
    return cfg["mass_ratio"]


# Output --------------------------------------------------------------------------


def format_float(x) -> str:
    return format(float(x), ".17g")


def write_csv(path: Path, columns: dict, header: dict) -> str:
    """Write columns with a '#' header block; returns the SHA-256 of the bytes."""
    names = list(columns)
    n = len(next(iter(columns.values())))
    buf = io.StringIO()
    digest = hashlib.sha256(json.dumps(header, sort_keys=True).encode()).hexdigest()
    buf.write(f"# metadata_sha256: {digest}\n")
    for key in sorted(header):
        buf.write(f"# {key}: {json.dumps(header[key], sort_keys=True)}\n")
    buf.write(",".join(names) + "\n")
    for i in range(n):
        row = []
        for name in names:
            v = columns[name][i]
            row.append(v if isinstance(v, str) else format_float(v))
        buf.write(",".join(row) + "\n")
    data = buf.getvalue().encode("utf-8")
    path.write_bytes(data)
    return hashlib.sha256(data).hexdigest()


@dataclass
class Result:
    columns: dict
    units: dict
    summary: dict = field(default_factory=dict)


# Experiments ---------------------------------------------------------------------


def _times(cfg, t_max):
    return np.linspace(0.0, t_max, cfg["n_samples"])


def _ensemble(cfg, initial, t_max, threads):
    times = _times(cfg, t_max)
    data = simulate_ensemble(initial, cfg["n_traj"], t_max, times, cfg.seed, 1.0, threads)
    return EnsembleSeries.from_data(data)


def run_thermalize(cfg, threads):
    mr = _engine_setup(cfg)
    series = _ensemble(cfg, SuperpositionState.eigenstate(cfg["u0"], mr), cfg["t_max"], threads)
    cols = series.columns()
    units = {k: "1" for k in cols}
    units["t"] = "1/Gamma_beta"
    units["energy"] = units["energy_se"] = "m v_beta^2"
    eq = equilibrium_usq(mr)
    summary = {
        "final_mean_Usq": float(series.mean_usq[-1]),
        "final_mean_Usq_se": float(series.mean_usq_se[-1]),
        "equilibrium_Usq": eq,
        "final_mean_U": [float(x) for x in series.mean_u[-1]],
        "mean_jumps": series.mean_jumps,
    }
    return Result(cols, units, summary)


def _fit_summary(t, values, se, snr):
    mask = signal_window(values, se, snr)
    try:
        fit = fit_exponential(t, values, se, mask)
    except ValueError as exc:
        return {"error": str(exc)}
    return {"rate": fit.rate, "rate_se": fit.rate_se, "window": list(fit.window),
            "n_points": fit.n_points, "chi2_per_dof": fit.chi2_per_dof}


def run_relax_moments(cfg, threads):
    mr = _engine_setup(cfg)
    series = _ensemble(cfg, SuperpositionState.eigenstate(cfg["u0"], mr), cfg["t_max"], threads)
    eq = equilibrium_usq(mr)
    sign = 1.0 if series.mean_usq[0] >= eq else -1.0
    deficit = sign * (series.mean_usq - eq)
    cols = {
        "t": series.times,
        "mean_U2": series.mean_u_squared,
        "mean_U2_se": series.mean_u_squared_se,
        "Usq_excess": deficit,
        "Usq_excess_se": series.mean_usq_se,
    }
    units = {"t": "1/Gamma_beta", "mean_U2": "1", "mean_U2_se": "1",
             "Usq_excess": "1", "Usq_excess_se": "1"}
    summary = {
        "two_eta": 2 * friction_rate(mr),
        "excess_sign": sign,
        "fit_mean_U2": _fit_summary(series.times, series.mean_u_squared,
                                    series.mean_u_squared_se, cfg["fit_snr"]),
        "fit_Usq_excess": _fit_summary(series.times, deficit, series.mean_usq_se,
                                       cfg["fit_snr"]),
    }
    return Result(cols, units, summary)


def run_decohere_momentum(cfg, threads):
    mr = _engine_setup(cfg)
    u0s = cfg["u0"]
    rows = {"U0": [], "t": [], "C": [], "C_se": []}
    fits = {}
    for k, u0 in enumerate(u0s):
        lam = decoherence_rate_prediction(u0)
        t_max = cfg.get("t_max") or 6.0 / lam
        times = _times(cfg, t_max)
        initial = SuperpositionState.symmetric_pair([u0, 0.0, 0.0], mr)
        # Each magnitude gets its own seed stream so that lists can be extended.
        data = simulate_ensemble(initial, cfg["n_traj"], t_max, times,
                                 cfg.seed + k * 1_000_003, 1.0, threads)
        c = data.coherence.mean(axis=0)
        se = data.coherence.std(axis=0, ddof=1) / math.sqrt(data.coherence.shape[0])
        rows["U0"] += [u0] * times.size
        rows["t"] += list(times)
        rows["C"] += list(c)
        rows["C_se"] += list(se)
        fit = _fit_summary(times, c, se, cfg["fit_snr"])
        fit["predicted_rate"] = lam
        fits[format_float(u0)] = fit
    units = {"U0": "1", "t": "1/Gamma_beta", "C": "1", "C_se": "1"}
    return Result({k: np.asarray(v) for k, v in rows.items()}, units, {"fits": fits})


def run_decohere_position(cfg, threads):
    gas = GasSpec(n_gas=cfg["n_gas"])
    spec = DecoherenceSpec(_model(cfg), gas, ParticleSpec(M=1.0 / cfg["mass_ratio"]))
    S = np.linspace(0.0, cfg["s_max"], cfg["n_grid"])
    phi = decoherence_function(S, spec)
    rate = total_rate(spec)
    cols = {"S": S, "Phi": phi}
    units = {"S": "hbar/(m v_beta)", "Phi": "1"}
    for gt in cfg["gamma_t"]:
        t = gt / rate
        cols[f"Psi_Gt{format_float(gt)}"] = coherence_factor(phi, rate, t)
        cols[f"jumps_Gt{format_float(gt)}"] = jump_series(phi, rate, t)
        units[f"Psi_Gt{format_float(gt)}"] = units[f"jumps_Gt{format_float(gt)}"] = "1"
    return Result(cols, units, {"total_rate": rate})


def run_visibility(cfg, threads):
    beam = Beam(P0=cfg["particle_mass"] * cfg["particle_velocity"], M=cfg["particle_mass"],
                flight_time=cfg["flight_time"])
    bg = BackgroundGas(T=cfg["temperature"], m=cfg["gas_mass"])
    p = np.linspace(0.0, cfg["pressure_max"], cfg["n_grid"])
    v = visibility(p, beam, bg, cfg["c6"])
    p0 = critical_pressure(beam, bg, cfg["c6"])
    return Result({"pressure": p, "V": v, "lnV": np.log(v)},
                  {"pressure": "Pa", "V": "1", "lnV": "1"},
                  {"critical_pressure_Pa": p0, "k_B": constants.k, "hbar": constants.hbar})


def run_refraction(cfg, threads):
    if cfg["model"] != "gaussian_born":
        raise ConfigError(["refraction needs model = gaussian_born (a scattering phase)"])
    model = _model(cfg)
    gas = GasSpec(n_gas=cfg["n_gas"])
    part = ParticleSpec(M=1.0 / cfg["mass_ratio"])
    ks = np.asarray(cfg["k_values"], float)
    cols = {"K": ks, "f0_re": [], "f0_im": [], "f0_re_3d": [], "f0_im_3d": [],
            "n_re": [], "n_im": [], "n_im_loss": []}
    for K in ks:
        P = np.array([0.0, 0.0, K])
        a1 = thermal_forward_average(model, gas, part, P)
        a3 = thermal_forward_average(model, gas, part, P, method="3d")
        n = refraction_index(K, model, gas, part)
        cols["f0_re"].append(a1.real)
        cols["f0_im"].append(a1.imag)
        cols["f0_re_3d"].append(a3.real)
        cols["f0_im_3d"].append(a3.imag)
        cols["n_re"].append(n.real)
        cols["n_im"].append(n.imag)
        cols["n_im_loss"].append(attenuation_from_loss(K, model, gas, part))
    units = {k: "1" for k in cols}
    units["K"] = "m v_beta/hbar"
    units.update({k: "hbar/(m v_beta)" for k in ("f0_re", "f0_im", "f0_re_3d", "f0_im_3d")})
    return Result({k: np.asarray(v) for k, v in cols.items()}, units)


def run_structure_factor(cfg, threads):
    stat = cfg["statistics"]
    gas = GasSpec() if stat == "MB" else degenerate_gas(cfg["z"], stat)
    q = np.linspace(cfg["q_max"] / cfg["n_grid"], cfg["q_max"], cfg["n_grid"])
    e = np.linspace(-cfg["e_max"], cfg["e_max"], cfg["n_grid"])
    qq, ee = np.meshgrid(q, e, indexing="ij")
    s = structure_factor(qq, ee, gas)
    res = detailed_balance_residual(qq, ee, gas)
    cols = {"Q": qq.ravel(), "E": ee.ravel(), "S": s.ravel(), "balance_residual": res.ravel()}
    units = {"Q": "m v_beta", "E": "m v_beta^2", "S": "1/(m v_beta^2)", "balance_residual": "1"}
    return Result(cols, units, {"n_gas": gas.n_gas, "max_balance_residual": float(res.max())})


def run_brownian_check(cfg, threads):
    mr = cfg["mass_ratio"]
    gas = GasSpec(n_gas=cfg["n_gas"])
    part = ParticleSpec(M=1.0 / mr)
    eta = friction_coefficient(_model(cfg), gas, part)
    d_pp, d_xx = diffusion_coefficients(eta, gas.beta, part.M)
    t = _times(cfg, cfg["t_max"])
    ratio = crossover_ratio(t, gas.beta)
    cols = {"t": t, "cubic_over_diffusion": ratio}
    units = {"t": "hbar/(m v_beta^2)", "cubic_over_diffusion": "1"}
    summary = {
        "eta": eta,
        "D_pp": d_pp,
        "D_xx": d_xx,
        "Dxx_Dpp_over_bound": d_xx * d_pp / (eta**2 / 16.0),
    }
    return Result(cols, units, summary)


RUNNERS = {
    "thermalize": run_thermalize,
    "relax-moments": run_relax_moments,
    "decohere-momentum": run_decohere_momentum,
    "decohere-position": run_decohere_position,
    "visibility": run_visibility,
    "refraction": run_refraction,
    "structure-factor": run_structure_factor,
    "brownian-check": run_brownian_check,
}


def run(cfg: ExperimentConfig, out_dir: Path, threads: int = 1) -> Path:
    """Run an experiment; returns the CSV path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    result = RUNNERS[cfg.experiment](cfg, threads)
    runtime = time.perf_counter() - start
    header = {
        "config": cfg.as_dict(),
        "units": result.units,
        "summary": result.summary,
        "qlbe_version": __version__,
    }
    csv_path = out_dir / f"{cfg.experiment}.csv"
    csv_sha = write_csv(csv_path, result.columns, header)
    meta = {
        "config": cfg.as_dict(),
        "schema": SCHEMA,
        "units": result.units,
        "summary": result.summary,
        "csv": csv_path.name,
        "csv_sha256": csv_sha,
        "runtime_s": runtime,
        "threads": threads,
        "versions": {
            "qlbe": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    (out_dir / f"{cfg.experiment}.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return csv_path


def _fail(out_dir: Path, code: int, record: dict) -> int:
    text = json.dumps(record, sort_keys=True)
    print(text, file=sys.stderr)
    try:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "error.json").write_text(text + "\n", encoding="utf-8")
    except OSError:
        pass
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qlbe", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out", type=Path, default=Path("."))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.experiment, args.seed)
    except ConfigError as exc:
        return _fail(args.out, EXIT_CONFIG, {"error": "config", "violations": exc.violations})
    except (OSError, ValueError, KeyError) as exc:
        return _fail(args.out, EXIT_CONFIG, {"error": "config", "violations": [str(exc)]})
    try:
        path = run(cfg, args.out, max(1, args.threads))
    except ConfigError as exc:
        return _fail(args.out, EXIT_CONFIG, {"error": "config", "violations": exc.violations})
    except Exception as exc:  # noqa: BLE001 - reported as a machine-readable record
        return _fail(args.out, EXIT_RUNTIME,
                     {"error": "runtime", "type": type(exc).__name__, "message": str(exc)})
    print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
