"""File formats: grids (CSV, 16-bit PGM), spectra and sinograms (CSV), JSON helpers."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .gaussian import WignerGrid
from .tomography import Sinogram


class FormatError(ValueError):
    """A file does not follow the expected layout; the message names the line or field."""


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise FormatError(f"{path}: invalid JSON at line {err.lineno}: {err.msg}") from None


def _fmt(x: float) -> str:
    return repr(float(x))


# --- grids ----------------------------------------------------------------------


def write_grid_csv(grid: WignerGrid, path) -> None:
    """Header line ``# size_m=<M> extent=<L>``, then M rows of M values; row i is ``p_i``."""
    with open(path, "w") as fh:
        fh.write(f"# size_m={grid.size_m} extent={_fmt(grid.extent)}\n")
        for row in grid.values:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_grid_csv(path) -> WignerGrid:
    with open(path) as fh:
        header = fh.readline().strip()
        try:
            fields = dict(item.split("=") for item in header.lstrip("#").split())
            size_m = int(fields["size_m"])
            extent = float(fields["extent"])
        except (ValueError, KeyError):
            raise FormatError(f"{path}: line 1: expected '# size_m=<M> extent=<L>', got {header!r}") from None
        rows = []
        for lineno, line in enumerate(fh, start=2):
            try:
                rows.append([float(v) for v in line.split(",")])
            except ValueError:
                raise FormatError(f"{path}: line {lineno}: non-numeric value") from None
            if len(rows[-1]) != size_m:
                raise FormatError(f"{path}: line {lineno}: expected {size_m} values, got {len(rows[-1])}")
    if len(rows) != size_m:
        raise FormatError(f"{path}: expected {size_m} rows, got {len(rows)}")
    return WignerGrid(size_m, extent, np.array(rows))


def write_pgm(grid: WignerGrid, path) -> dict:
    """16-bit binary PGM (top row = largest ``p``) plus a ``.json`` sidecar with the value range."""
    vals = grid.values[::-1]
    lo, hi = float(vals.min()), float(vals.max())
    span = hi - lo if hi > lo else 1.0
    pix = np.round((vals - lo) / span * 65535).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{grid.size_m} {grid.size_m}\n65535\n".encode())
        fh.write(pix.tobytes())
    side = {"min": lo, "max": hi, "extent": grid.extent, "size_m": grid.size_m, "orientation": "row 0 is p=+extent"}
    write_json(str(path) + ".json", side)
    return side


def read_pgm(path) -> np.ndarray:
    """Raw 16-bit pixel array as stored (no rescaling, top row first)."""
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if len(parts) < 5 or parts[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    dtype = ">u2" if maxval > 255 else "u1"
    return np.frombuffer(parts[4], dtype=dtype, count=w * h).reshape(h, w)


# --- spectra ----------------------------------------------------------------------

SPECTRUM_COLUMNS = ("f_hz", "re_s11", "im_s11")


def write_spectrum(path, freqs, s11) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(SPECTRUM_COLUMNS)
        for f, z in zip(freqs, s11):
            out.writerow([_fmt(f), _fmt(z.real), _fmt(z.imag)])


def read_spectrum(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header is None or tuple(h.strip() for h in header) != SPECTRUM_COLUMNS:
            raise FormatError(f"{path}: line 1: expected columns {','.join(SPECTRUM_COLUMNS)}")
        freqs, s11 = [], []
        for lineno, row in enumerate(rows, start=2):
            if len(row) != 3:
                raise FormatError(f"{path}: line {lineno}: expected 3 fields, got {len(row)}")
            try:
                f, re, im = (float(v) for v in row)
            except ValueError:
                raise FormatError(f"{path}: line {lineno}: non-numeric field") from None
            freqs.append(f)
            s11.append(complex(re, im))
    return np.array(freqs), np.array(s11)


# --- sinograms ----------------------------------------------------------------------


def write_sinogram(s: Sinogram, path) -> None:
    """Header ``# angles=<N> bins=<B> range=<R> mode=<mode>``; one row per angle: angle, then data."""
    with open(path, "w") as fh:
        fh.write(f"# angles={s.angles_deg.size} bins={s.bins} range={_fmt(s.range_)} mode={s.mode}\n")
        for a, row in zip(s.angles_deg, s.data):
            fh.write(",".join([_fmt(a)] + [_fmt(v) for v in row]) + "\n")


def read_sinogram(path) -> Sinogram:
    with open(path) as fh:
        header = fh.readline().strip()
        try:
            fields = dict(item.split("=") for item in header.lstrip("#").split())
            n, bins, rng, mode = int(fields["angles"]), int(fields["bins"]), float(fields["range"]), fields["mode"]
        except (ValueError, KeyError):
            raise FormatError(f"{path}: line 1: malformed sinogram header {header!r}") from None
        angles, data = [], []
        width = bins if mode == "sampled" else 2
        for lineno, line in enumerate(fh, start=2):
            try:
                vals = [float(v) for v in line.split(",")]
            except ValueError:
                raise FormatError(f"{path}: line {lineno}: non-numeric value") from None
            if len(vals) != width + 1:
                raise FormatError(f"{path}: line {lineno}: expected {width + 1} values, got {len(vals)}")
            angles.append(vals[0])
            data.append(vals[1:])
    if len(angles) != n:
        raise FormatError(f"{path}: header announces {n} angles, found {len(angles)}")
    return Sinogram(np.array(angles), bins, rng, np.array(data), mode)

