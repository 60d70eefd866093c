"""Command-line entry point: ``wignerct {simulate,reconstruct,calibrate,train,render}``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .bolometry import CalibrationError, PhotonStats, VoigtParams, calibrate, default_calibration
from .io import FormatError, read_grid_csv, read_json, write_json, write_pgm
from .modelfit import ParamBox, TrainConfig, TrainingError, gen_dataset, model_digest, nn_train, save_dataset, save_model
from .pipeline import ConfigError, ExperimentConfig, StageError, reconstruct, simulate, stream, write_reconstruction, write_simulation

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


def _load_config(path: str, seed: int | None) -> ExperimentConfig:
    obj = read_json(path)
    if seed is not None:
        obj.setdefault("noise", {})["seed"] = seed
    return ExperimentConfig.from_json(obj, Path(path).parent)


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config, args.seed)
    sim = simulate(cfg)
    manifest = write_simulation(sim, args.out)
    print(f"wrote {len(sim.records)} spectra and {manifest}")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    solver = json.loads(args.solver) if args.solver else None
    rec = reconstruct(args.spectra_dir, args.method, args.model, solver)
    out = args.out or str(Path(args.spectra_dir) / f"recon_{rec.method}")
    write_reconstruction(rec, out)
    msg = f"{rec.method}: n_thermal={rec.params.n_thermal:.4f} zeta={rec.params.zeta:.4f} alpha={rec.params.alpha:.4f}"
    if "score" in rec.report:
        msg += f" nrmse={rec.report['score']['nrmse']:.3e}"
    print(msg)
    return EXIT_OK


SAMPLE_COLUMNS = ("mu_hz", "sigma2", "n_mean", "n_var")


def read_samples(path) -> list:
    samples = []
    with open(path, newline="") as fh:
        rows = csv.DictReader(fh)
        if rows.fieldnames is None or tuple(rows.fieldnames) != SAMPLE_COLUMNS:
            raise FormatError(f"{path}: line 1: expected columns {','.join(SAMPLE_COLUMNS)}")
        for lineno, row in enumerate(rows, start=2):
            try:
                vp = VoigtParams(float(row["mu_hz"]), float(row["sigma2"]))
                ps = PhotonStats(float(row["n_mean"]), float(row["n_var"]))
            except (TypeError, ValueError) as err:
                raise FormatError(f"{path}: line {lineno}: {err}") from None
            samples.append((vp, ps))
    return samples


def synthetic_samples(seed: int, count: int = 24, noise: tuple[float, float] = (0.02, 0.05)) -> list:
    """Samples of the default thermometer response over its calibrated range with additive noise."""
    cal = default_calibration()
    rng = stream(seed, "dataset", 99)
    mus = np.linspace(*cal.mu_range, count)
    s2 = np.linspace(*cal.sigma2_range, count)
    out = []
    for mu, var_s2 in zip(mus, rng.permutation(s2)):
        n = float(cal.n_of_mu(mu)) + noise[0] * rng.standard_normal()
        v = float(cal.var_of_sigma2(var_s2)) + noise[1] * rng.standard_normal()
        out.append((VoigtParams(float(mu), float(var_s2)), PhotonStats(max(n, 0.0), max(v, 0.0))))
    return out


def cmd_calibrate(args) -> int:
    if args.samples:
        samples = read_samples(args.samples)
    else:
        samples = synthetic_samples(args.seed or 0)
    curves = calibrate(samples)
    write_json(args.out, curves.to_json())
    flag = "" if curves.monotone else " (WARNING: not monotone over the range)"
    print(f"cubic {np.round(curves.n_coeffs, 6).tolist()}, affine {np.round(curves.var_coeffs, 6).tolist()}{flag}")
    return EXIT_OK


def cmd_train(args) -> int:
    obj = read_json(args.config) if args.config else {}
    seed = args.seed if args.seed is not None else int(obj.get("seed", 0))
    try:
        box = ParamBox(*obj.get("box", [1.0, 0.5, 1.5]))
        tcfg = TrainConfig(**{**TrainConfig().to_json(), **obj.get("train", {})})
        tcfg.hidden = tuple(tcfg.hidden)
        count = int(obj.get("count", 32768))
        angles = tuple(float(a) for a in obj.get("angles", (0.0, 60.0, 120.0)))
        noise = tuple(obj.get("noise", (0.0, 0.0)))
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid training config: {err}") from None
    ds = gen_dataset(count, seed, box, angles, noise)
    model = nn_train(ds, tcfg, seed)
    save_model(model, args.out)
    if args.dataset_out:
        save_dataset(ds, args.dataset_out)
    mae = model.history.get("val_mae")
    print(f"model {model_digest(model)[:16]} written to {args.out}; validation MAE {np.round(mae, 4).tolist() if mae else 'n/a'}")
    return EXIT_OK


def cmd_render(args) -> int:
    grid = read_grid_csv(args.grid)
    out = args.out or str(Path(args.grid).with_suffix(".pgm"))
    write_pgm(grid, out)
    print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wignerct", description="Wigner-function tomography from synthetic bolometric projections")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("simulate", help="state -> bolometer spectra + manifest")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="spectra directory -> grid, parameters and report")
    p.add_argument("spectra_dir")
    p.add_argument("--method", choices=["fbp", "cs-dct", "cs-wavelet", "lls", "nn"])
    p.add_argument("--model", help="trained model file (method nn)")
    p.add_argument("--solver", help="JSON overrides for the sparse solver")
    p.add_argument("--out")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("calibrate", help="fit calibration curves")
    p.add_argument("samples", nargs="?", help=f"CSV with columns {','.join(SAMPLE_COLUMNS)}; omitted = synthetic set")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("train", help="train the parameter-regression network")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--dataset-out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("render", help="grid CSV -> 16-bit PGM")
    p.add_argument("grid")
    p.add_argument("--out")
    p.set_defaults(func=cmd_render)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2**64:
        print(f"{args.verb}: seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return args.func(args)
    except (ConfigError, FormatError) as err:
        print(f"{args.verb}: validation error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except (StageError, CalibrationError, TrainingError, FloatingPointError, np.linalg.LinAlgError) as err:
        print(f"{args.verb}: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as err:
        print(f"{args.verb}: I/O error: {err}", file=sys.stderr)
        return EXIT_IO
    except ValueError as err:
        print(f"{args.verb}: validation error: {err}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
