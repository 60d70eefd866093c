import csv
import json

import numpy as np
import pytest

from wignerct.cli import main
from wignerct.gaussian import VACUUM, GaussianParams, wigner_eval
from wignerct.io import read_grid_csv, read_json, read_pgm, read_spectrum, write_grid_csv

STATE = GaussianParams.create(0.71, 0.16 - 0.13j, 0.55 + 0.25j)


def _config(tmp_path, name="cfg.json", count=12, size_m=41, **extra):
    obj = {"state": STATE.to_json(), "angles": {"start": 0, "stop": 360, "count": count}, "grid": {"size_m": size_m}}
    obj.update(extra)
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


def test_simulate_then_reconstruct(tmp_path, capsys):
    cfg = _config(tmp_path)
    out = tmp_path / "run"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    manifest = read_json(out / "manifest.json")
    assert len(manifest["angles"]) == 12
    assert manifest["truth"] == STATE.to_json()
    assert (out / "spectrum_000.csv").exists()
    for method in ("fbp", "lls"):
        assert main(["reconstruct", str(out), "--method", method]) == 0
        rec = out / f"recon_{method}"
        for f in ("grid.csv", "grid.pgm", "grid.pgm.json", "params.json", "report.json"):
            assert (rec / f).exists()
        report = read_json(rec / "report.json")
        assert report["method"] == method and "score" in report
    assert "lls:" in capsys.readouterr().out


def test_lls_on_three_angle_run_recovers_manifest(tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", "--config", _config(tmp_path, count=6), "--out", str(out)]) == 0
    assert main(["reconstruct", str(out), "--method", "lls", "--out", str(tmp_path / "r")]) == 0
    got = GaussianParams.from_json(read_json(tmp_path / "r" / "params.json"))
    assert len(read_json(tmp_path / "r" / "report.json")["angles_deg"]) == 3
    assert abs(got.n_thermal - STATE.n_thermal) < 1e-4
    assert abs(got.zeta - STATE.zeta) < 1e-4
    assert abs(got.alpha - STATE.alpha) < 1e-4


def test_more_angles_give_better_fbp(tmp_path):
    errs = {}
    for count in (4, 72):
        out = tmp_path / f"n{count}"
        assert main(["simulate", "--config", _config(tmp_path, f"c{count}.json", count=count, size_m=61), "--out", str(out)]) == 0
        assert main(["reconstruct", str(out), "--method", "fbp"]) == 0
        errs[count] = read_json(out / "recon_fbp" / "report.json")["score"]["nrmse"]
    assert errs[72] < errs[4]


def test_thermal_spectra_are_phase_flat(tmp_path):
    thermal = GaussianParams.create(0.45)
    path = tmp_path / "t.json"
    path.write_text(json.dumps({"state": thermal.to_json(), "angles": {"count": 8}}))
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "t")]) == 0
    spectra = [read_spectrum(tmp_path / "t" / f"spectrum_{i:03d}.csv")[1] for i in range(8)]
    assert max(np.max(np.abs(s - spectra[0])) for s in spectra) < 1e-12


def test_invalid_config_leaves_no_output(tmp_path, capsys):
    cfg = _config(tmp_path, chain={"gamma_t": 1.5})
    out = tmp_path / "never"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 2
    assert not out.exists()
    assert "validation error" in capsys.readouterr().err


def test_bad_json_and_unknown_fields(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{ nope")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert main(["simulate", "--config", _config(tmp_path, colour="red"), "--out", str(tmp_path / "o")]) == 2
    assert main(["simulate", "--config", _config(tmp_path), "--out", str(tmp_path / "o"), "--seed", "-1"]) == 2
    assert main(["frobnicate"]) == 2


def test_nn_without_model_is_validation_error(tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", "--config", _config(tmp_path, count=6), "--out", str(out)]) == 0
    assert main(["reconstruct", str(out), "--method", "nn"]) == 2


def test_missing_directory_is_io_error(tmp_path):
    assert main(["reconstruct", str(tmp_path / "absent"), "--method", "fbp"]) == 4


def test_flat_spectrum_is_numerical_failure(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["simulate", "--config", _config(tmp_path, count=6), "--out", str(out)]) == 0
    path = out / "spectrum_002.csv"
    lines = path.read_text().splitlines()
    rows = [lines[0]] + [f"{ln.split(',')[0]},1.0,0.0" for ln in lines[1:]]
    path.write_text("\n".join(rows) + "\n")
    assert main(["reconstruct", str(out), "--method", "lls"]) == 3
    assert "fit_voigt" in capsys.readouterr().err


def test_outputs_are_deterministic(tmp_path):
    cfg = _config(tmp_path, count=8, noise={"spectrum": 1e-3})
    for tag in ("a", "b"):
        assert main(["simulate", "--config", cfg, "--seed", "77", "--out", str(tmp_path / tag)]) == 0
        assert main(["reconstruct", str(tmp_path / tag), "--method", "fbp", "--out", str(tmp_path / tag / "rec")]) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert len(files) > 10
    for rel in files:
        if rel.name == "manifest.json":
            ma, mb = read_json(a / rel), read_json(b / rel)
            ma.pop("metadata")
            mb.pop("metadata")
            assert ma == mb
        else:
            assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel
    # a different seed changes the noisy spectra
    assert main(["simulate", "--config", cfg, "--seed", "78", "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "c" / "spectrum_000.csv").read_bytes() != (a / "spectrum_000.csv").read_bytes()


def test_calibrate_synthetic_and_csv(tmp_path, capsys):
    out = tmp_path / "cal.json"
    assert main(["calibrate", "--seed", "3", "--out", str(out)]) == 0
    cal = read_json(out)
    assert len(cal["n_coeffs"]) == 4 and len(cal["var_coeffs"]) == 2
    assert "cubic" in capsys.readouterr().out

    samples = tmp_path / "s.csv"
    with open(samples, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mu_hz", "sigma2", "n_mean", "n_var"])
        for i in range(10):
            mu = 510e6 + 2.5e6 * i
            n = 4 * (540e6 - mu) / 10e6
            s2 = 0.1e12 + 0.08e12 * ((i * 7) % 10)
            w.writerow([mu, s2, n, (s2 / 1e12 - 0.09) / 0.0225])
    assert main(["calibrate", str(samples), "--out", str(tmp_path / "c2.json")]) == 0
    assert read_json(tmp_path / "c2.json")["n_coeffs"][1] == pytest.approx(-4.0 * read_json(tmp_path / "c2.json")["mu_scale"] / 10e6, rel=1e-8)

    bad = tmp_path / "bad.csv"
    bad.write_text("mu_hz,sigma2,n_mean,n_var\n525e6,1e11,x,1\n")
    assert main(["calibrate", str(bad), "--out", str(tmp_path / "c3.json")]) == 2
    assert "line 2" in capsys.readouterr().err


def test_train_twice_same_hash(tmp_path, capsys):
    cfg = tmp_path / "train.json"
    cfg.write_text(json.dumps({"count": 600, "train": {"hidden": [8, 8], "epochs": 3}}))
    for tag in ("a", "b"):
        assert main(["train", "--config", str(cfg), "--seed", "5", "--out", str(tmp_path / f"{tag}.json")]) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split()[1] == lines[1].split()[1]


def test_train_bad_config(tmp_path):
    cfg = tmp_path / "train.json"
    cfg.write_text(json.dumps({"train": {"layers": 3}}))
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "m.json")]) == 2


def test_nn_reconstruct_with_model(tmp_path):
    cfg = tmp_path / "train.json"
    cfg.write_text(json.dumps({"count": 2000, "train": {"hidden": [16, 16], "epochs": 10}}))
    model = tmp_path / "m.json"
    assert main(["train", "--config", str(cfg), "--seed", "1", "--out", str(model), "--dataset-out", str(tmp_path / "d.bin")]) == 0
    assert (tmp_path / "d.bin").exists()
    out = tmp_path / "run"
    assert main(["simulate", "--config", _config(tmp_path, count=6), "--out", str(out)]) == 0
    assert main(["reconstruct", str(out), "--method", "nn", "--model", str(model)]) == 0
    # a model trained on other angles is refused
    out8 = tmp_path / "run8"
    assert main(["simulate", "--config", _config(tmp_path, "c8.json", count=8), "--out", str(out8)]) == 0
    assert main(["reconstruct", str(out8), "--method", "nn", "--model", str(model)]) == 3


def test_render_vacuum_peak_at_center(tmp_path):
    g = wigner_eval(VACUUM, 41, 4.0)
    write_grid_csv(g, tmp_path / "v.csv")
    assert main(["render", str(tmp_path / "v.csv")]) == 0
    img = read_pgm(tmp_path / "v.pgm")
    assert np.unravel_index(np.argmax(img), img.shape) == (20, 20)
    assert read_grid_csv(tmp_path / "v.csv").size_m == 41


def test_render_bad_grid_reports_line(tmp_path, capsys):
    p = tmp_path / "g.csv"
    p.write_text("# size_m=3 extent=1.0\n1,2,3\n4,5\n7,8,9\n")
    assert main(["render", str(p)]) == 2
    assert "line 3" in capsys.readouterr().err
