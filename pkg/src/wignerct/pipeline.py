"""End-to-end synthetic experiment: state -> bolometer spectra -> reconstruction."""

from __future__ import annotations

import datetime
import hashlib
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bolometry import (
    CalibrationCurves,
    CalibrationRangeWarning,
    ChainConfig,
    PhotonStats,
    VoigtParams,
    apply_calibration,
    combined_stats_exact,
    default_calibration,
    default_frequencies,
    extract_quadratures,
    fit_voigt,
    fold_half_period,
    homodyne_beta,
    invert_calibration,
    synthesize_spectrum,
)
from .gaussian import GaussianParams, QuadratureStats, WignerGrid, default_extent, moments, wigner_eval
from .io import read_json, read_spectrum, write_grid_csv, write_json, write_pgm, write_spectrum
from .metrics import gaussian_fidelity, nrmse, param_errors
from .modelfit import lls_fit, load_model, nn_infer
from .sparse import SparseBasis, SolverConfig, build_measurement, default_config, solve
from .tomography import fbp, refit_gaussian, sinogram_from_stats

METHODS = ("fbp", "cs-dct", "cs-wavelet", "lls", "nn")
CORRECTIONS = (None, "gaussian")


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` and ``angle`` locate it."""

    def __init__(self, stage: str, err: Exception, angle: float | None = None):
        where = f" at angle {angle:g} deg" if angle is not None else ""
        super().__init__(f"[{stage}{where}] {err}")
        self.stage = stage
        self.angle = angle
        self.cause = err


@dataclass
class ExperimentConfig:
    state: GaussianParams
    chain: ChainConfig = field(default_factory=ChainConfig)
    beta2: float = 15.3
    # quadrature angles of the sweep; homodyne phases sit 90 degrees below
    angle_start: float = 0.0
    angle_stop: float = 360.0
    angle_count: int = 72
    size_m: int = 101
    extent: float | None = None
    seed: int = 0
    spectrum_noise: float = 0.0
    method: str = "fbp"
    correction: str | None = "gaussian"
    thermometer: VoigtParams = field(default_factory=lambda: VoigtParams(0.0, 0.0))
    calibration: CalibrationCurves = field(default_factory=default_calibration)
    solver: dict = field(default_factory=dict)
    model_path: str | None = None

    def __post_init__(self):
        if not (self.beta2 > 0 and math.isfinite(self.beta2)):
            raise ConfigError("beta2 must be a positive finite number")
        if self.angle_count < 2:
            raise ConfigError("angles.count must be >= 2")
        if not math.isclose(self.angle_stop - self.angle_start, 360.0):
            raise ConfigError("the angle sweep must span exactly 360 degrees (stop - start = 360)")
        if self.size_m % 2 != 1 or self.size_m < 3:
            raise ConfigError("grid.size_m must be an odd integer >= 3")
        if self.extent is not None and not self.extent > 0:
            raise ConfigError("grid.extent must be positive")
        if self.spectrum_noise < 0:
            raise ConfigError("noise.spectrum must be >= 0")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.correction not in CORRECTIONS:
            raise ConfigError(f"extraction.correction must be one of {CORRECTIONS}")
        if self.method == "nn" and not self.model_path:
            raise ConfigError("method 'nn' needs a model file (model_path)")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    @property
    def quadrature_angles(self) -> np.ndarray:
        return self.angle_start + np.arange(self.angle_count) * 360.0 / self.angle_count

    @property
    def grid_extent(self) -> float:
        return self.extent if self.extent is not None else default_extent(self.state)

    @classmethod
    def from_json(cls, obj: dict, base_dir: Path | None = None) -> "ExperimentConfig":
        try:
            known = {"state", "chain", "beta2", "angles", "grid", "noise", "method", "extraction", "thermometer", "calibration", "solver", "model", "output_dir"}
            unknown = set(obj) - known
            if unknown:
                raise ConfigError(f"unknown config fields: {sorted(unknown)}")
            if "state" not in obj:
                raise ConfigError("config field 'state' is required")
            angles = obj.get("angles", {})
            grid = obj.get("grid", {})
            noise = obj.get("noise", {})
            cal = obj.get("calibration")
            if isinstance(cal, str):
                cal = CalibrationCurves.from_json(read_json(_resolve(cal, base_dir)))
            elif isinstance(cal, dict):
                cal = CalibrationCurves.from_json(cal)
            else:
                cal = default_calibration()
            model = obj.get("model")
            therm = obj.get("thermometer")
            return cls(
                state=GaussianParams.from_json(obj["state"]),
                chain=ChainConfig.from_json(obj.get("chain", {})),
                beta2=float(obj.get("beta2", 15.3)),
                angle_start=float(angles.get("start", 0.0)),
                angle_stop=float(angles.get("stop", 360.0)),
                angle_count=int(angles.get("count", 72)),
                size_m=int(grid.get("size_m", 101)),
                extent=None if grid.get("extent") is None else float(grid["extent"]),
                seed=int(noise.get("seed", 0)),
                spectrum_noise=float(noise.get("spectrum", 0.0)),
                method=obj.get("method", "fbp"),
                correction=obj.get("extraction", {}).get("correction", "gaussian"),
                thermometer=VoigtParams.from_json(therm) if therm else VoigtParams(0.0, 0.0),
                calibration=cal,
                solver=dict(obj.get("solver", {})),
                model_path=str(_resolve(model, base_dir)) if model else None,
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as err:
            raise ConfigError(f"invalid config: {err}") from None

    def to_json(self) -> dict:
        return {
            "state": self.state.to_json(),
            "chain": self.chain.to_json(),
            "beta2": self.beta2,
            "angles": {"start": self.angle_start, "stop": self.angle_stop, "count": self.angle_count},
            "grid": {"size_m": self.size_m, "extent": self.extent},
            "noise": {"seed": self.seed, "spectrum": self.spectrum_noise},
            "method": self.method,
            "extraction": {"correction": self.correction},
            "thermometer": self.thermometer.to_json(),
            "calibration": self.calibration.to_json(),
            "solver": self.solver,
            "model": self.model_path,
        }


def _resolve(path: str, base_dir: Path | None) -> Path:
    p = Path(path)
    return p if p.is_absolute() or base_dir is None else base_dir / p


STREAMS = {"spectrum": 1, "dataset": 2, "train": 3}


def stream(seed: int, name: str, index: int = 0) -> np.random.Generator:
    """Independent generator per (seed, stage, index)."""
    return np.random.default_rng([seed, STREAMS[name], index])


def homodyne_phase(quadrature_angle: float) -> float:
    return (quadrature_angle - 90.0) % 360.0


# --- simulation -------------------------------------------------------------------


@dataclass
class Simulation:
    config: ExperimentConfig
    records: list  # per angle dict
    spectra: list  # (freqs, s11)


def simulate(cfg: ExperimentConfig) -> Simulation:
    m = moments(cfg.state)
    freqs = default_frequencies()
    records, spectra = [], []
    for i, q in enumerate(cfg.quadrature_angles):
        phase = homodyne_phase(q)
        try:
            stats = combined_stats_exact(m, cfg.chain.gamma_t, homodyne_beta(cfg.beta2, phase))
        except ValueError as err:
            raise StageError("combined_stats", err, q) from err
        try:
            vp = invert_calibration(stats, cfg.calibration, cfg.thermometer)
        except ValueError as err:
            raise StageError("inverse_calibration", err, q) from err
        rng = stream(cfg.seed, "spectrum", i) if cfg.spectrum_noise > 0 else None
        f, s11 = synthesize_spectrum(vp, freqs, cfg.spectrum_noise, rng)
        records.append({
            "index": i,
            "quadrature_deg": float(q),
            "homodyne_phase_deg": phase,
            "photon_mean": stats.mean,
            "photon_variance": stats.variance,
            "voigt": vp.to_json(),
            "file": f"spectrum_{i:03d}.csv",
        })
        spectra.append((f, s11))
    return Simulation(cfg, records, spectra)


def config_digest(cfg: ExperimentConfig) -> str:
    import json

    return hashlib.sha256(json.dumps(cfg.to_json(), sort_keys=True).encode()).hexdigest()


def write_simulation(sim: Simulation, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for rec, (f, s11) in zip(sim.records, sim.spectra):
        write_spectrum(out / rec["file"], f, s11)
    manifest = {
        "format": "wignerct-manifest",
        "version": 1,
        "config": sim.config.to_json(),
        "truth": sim.config.state.to_json(),
        "grid": {"size_m": sim.config.size_m, "extent": sim.config.grid_extent},
        "angles": sim.records,
        "metadata": {"created": datetime.datetime.now(datetime.timezone.utc).isoformat(), "version": __version__, "config_sha256": config_digest(sim.config)},
    }
    write_json(out / "manifest.json", manifest)
    return out / "manifest.json"


# --- reconstruction ----------------------------------------------------------------


@dataclass
class Reconstruction:
    method: str
    stats: list  # folded QuadratureStats in [0, 180)
    raw_stats: list
    grid: WignerGrid
    params: GaussianParams
    report: dict


def measure(series, cfg: ExperimentConfig) -> tuple[list, list]:
    """Photon statistics per homodyne phase -> (raw quadrature stats, folded stats)."""
    try:
        raw = extract_quadratures(series, cfg.chain, cfg.beta2, correction=cfg.correction)
    except ValueError as err:
        raise StageError("extract_quadratures", err) from err
    return raw, fold_half_period(raw)


def fit_spectra(spectra, phases, calibration: CalibrationCurves) -> tuple[list, list]:
    series, fits = [], []
    for phase, (f, s11) in zip(phases, spectra):
        try:
            fit = fit_voigt(f, s11)
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", CalibrationRangeWarning)
                stats = apply_calibration(fit.params, calibration)
        except (ValueError, RuntimeError) as err:
            raise StageError("fit_voigt/calibration", err, (phase + 90.0) % 360.0) from err
        fits.append({"voigt": fit.params.to_json(), "residual_norm": fit.residual_norm, "extrapolated": bool(caught)})
        series.append((phase, stats))
    return series, fits


def reconstruct_from_stats(folded, cfg: ExperimentConfig, extent: float, method: str | None = None) -> tuple[WignerGrid, GaussianParams, dict]:
    method = method or cfg.method
    m = cfg.size_m
    angles = [s.angle_deg for s in folded]
    diag: dict = {}
    try:
        if method in ("fbp", "cs-dct", "cs-wavelet"):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                sino = sinogram_from_stats(angles, [s.mean for s in folded], [s.variance for s in folded], m, extent)
            if method == "fbp":
                grid = fbp(sino, m, extent)
            else:
                basis = SparseBasis("dct2") if method == "cs-dct" else SparseBasis("daubechies")
                kind = cfg.solver.get("kind", "l1_min")
                base = default_config(kind).to_json()
                base.update(cfg.solver)
                sysm = build_measurement(angles, m, extent).with_rhs(sino.profiles().ravel())
                res = solve(sysm, basis, SolverConfig(**base))
                grid = res.grid
                diag = res.diagnostics
            params = refit_gaussian(grid)
        elif method == "lls":
            params, trig, resid = lls_fit(folded)
            grid = wigner_eval(params, m, extent)
            diag = {"trig": {"mean": list(trig.mean_coeffs), "var": list(trig.var_coeffs)}, "residuals": resid}
        else:
            model = load_model(cfg.model_path)
            params = nn_infer(model, folded)
            grid = wigner_eval(params, m, extent)
    except (ValueError, RuntimeError, FloatingPointError) as err:
        raise StageError(method, err) from err
    grid.meta.setdefault("method", method)
    return grid, params, diag


def score(grid: WignerGrid, params: GaussianParams, truth: GaussianParams) -> dict:
    ref = wigner_eval(truth, grid.size_m, grid.extent)
    return {
        "nrmse": nrmse(grid, ref),
        "fidelity": gaussian_fidelity(params, truth),
        "param_errors": param_errors(params, truth),
    }


def reconstruct(spectra_dir, method: str | None = None, model_path: str | None = None, solver: dict | None = None) -> Reconstruction:
    d = Path(spectra_dir)
    manifest = read_json(d / "manifest.json")
    cfg = ExperimentConfig.from_json(manifest["config"])
    if method:
        if method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        cfg.method = method
    if model_path:
        cfg.model_path = model_path
    if solver:
        cfg.solver.update(solver)
    if cfg.method == "nn" and not cfg.model_path:
        raise ConfigError("method 'nn' needs a model file (--model)")
    spectra = [read_spectrum(d / rec["file"]) for rec in manifest["angles"]]
    phases = [float(rec["homodyne_phase_deg"]) for rec in manifest["angles"]]
    series, fits = fit_spectra(spectra, phases, cfg.calibration)
    raw, folded = measure(series, cfg)
    extent = float(manifest["grid"]["extent"])
    grid, params, diag = reconstruct_from_stats(folded, cfg, extent)
    report = {
        "method": cfg.method,
        "angles_deg": [s.angle_deg for s in folded],
        "quadratures": [{"angle_deg": s.angle_deg, "mean": s.mean, "variance": s.variance} for s in folded],
        "fits": fits,
        "params": params.to_json(),
        "diagnostics": diag,
    }
    if "truth" in manifest:
        report["score"] = score(grid, params, GaussianParams.from_json(manifest["truth"]))
    return Reconstruction(cfg.method, folded, raw, grid, params, report)


def write_reconstruction(rec: Reconstruction, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_grid_csv(rec.grid, out / "grid.csv")
    write_pgm(rec.grid, out / "grid.pgm")
    write_json(out / "params.json", rec.params.to_json())
    write_json(out / "report.json", rec.report)


# --- direct (spectrum-free) chain used by tests and acceptance runs ------------------


def chain_stats(params: GaussianParams, chain: ChainConfig, beta2: float, quadrature_angles, correction=None):
    """Exact photon statistics at each angle, inverted back to folded quadrature stats."""
    m = moments(params)
    series = []
    for q in quadrature_angles:
        phase = homodyne_phase(q)
        series.append((phase, combined_stats_exact(m, chain.gamma_t, homodyne_beta(beta2, phase))))
    raw = extract_quadratures(series, chain, beta2, correction=correction)
    return fold_half_period(raw)


def projection_angles(n: int) -> np.ndarray:
    """Quadrature sweep over 360 degrees that folds onto ``n`` angles evenly spaced in [0, 180)."""
    return np.arange(2 * n) * 180.0 / n


def photon_series(records) -> list:
    return [(r["homodyne_phase_deg"], PhotonStats(r["photon_mean"], r["photon_variance"])) for r in records]


def as_stats(rows) -> list[QuadratureStats]:
    return [QuadratureStats(r["angle_deg"], r["mean"], r["variance"]) for r in rows]
