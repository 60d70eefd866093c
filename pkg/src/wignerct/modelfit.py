"""Ultra-sparse reconstruction from a handful of projection angles.

Two routes from per-angle quadrature statistics to Gaussian parameters:
closed-form linear least squares on the trigonometric angle dependence, and
a small tanh MLP trained on simulated states.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .gaussian import GaussianParams, QuadratureStats, SqueezeParam, quad_mean, quad_var
from .metrics import gaussian_fidelity  # noqa: F401  re-exported

DEFAULT_ANGLES = (0.0, 60.0, 120.0)
MODEL_FORMAT_VERSION = 1


class FitError(ValueError):
    """The angle set is degenerate or the fitted trig model is unphysical."""

    def __init__(self, msg, trig=None):
        super().__init__(msg)
        self.trig = trig


@dataclass(frozen=True)
class TrigFit:
    mean_coeffs: tuple[float, float]  # <X_phi> = c cos phi + s sin phi
    var_coeffs: tuple[float, float, float]  # a0 + a2c cos 2phi + a2s sin 2phi

    @property
    def modulation(self) -> float:
        return math.hypot(self.var_coeffs[1], self.var_coeffs[2])

    def mean(self, angle_deg):
        phi = np.deg2rad(angle_deg)
        c, s = self.mean_coeffs
        return c * np.cos(phi) + s * np.sin(phi)

    def variance(self, angle_deg):
        phi = np.deg2rad(angle_deg)
        a0, a2c, a2s = self.var_coeffs
        return a0 + a2c * np.cos(2 * phi) + a2s * np.sin(2 * phi)

    def to_params(self) -> GaussianParams:
        a0, a2c, a2s = self.var_coeffs
        mod = self.modulation
        if a0 <= mod:
            raise FitError(f"unphysical variance fit: a0={a0:.4g} <= modulation {mod:.4g}", self)
        nu = math.sqrt(a0 * a0 - mod * mod)
        if nu < 0.5 - 1e-9:
            raise FitError(f"fit violates the uncertainty bound (n+1/2 = {nu:.4g})", self)
        r = 0.5 * math.atanh(mod / a0)
        # -nu sinh2r cos(2phi - theta) = a2c cos2phi + a2s sin2phi
        theta = math.atan2(-a2s, -a2c) if mod > 0 else 0.0
        c, s = self.mean_coeffs
        return GaussianParams(max(nu - 0.5, 0.0), SqueezeParam(r, theta), complex(c, s) / math.sqrt(2.0))


def _distinct(angles_rad, period) -> int:
    wrapped = np.round(np.mod(angles_rad, period) / period * 1e9) % 1e9
    return len(np.unique(wrapped))


def lls_fit(stats: list[QuadratureStats]) -> tuple[GaussianParams, TrigFit, dict]:
    """Fit mean and variance trig models by least squares and map them to a state.

    The two linear systems are independent: means only enter the
    first-harmonic system and variances only the second-harmonic one.
    """
    if len(stats) < 3:
        raise FitError("need at least 3 angles")
    phi = np.deg2rad([s.angle_deg for s in stats])
    if _distinct(phi, 2 * math.pi) < 2 or _distinct(phi, math.pi) < 3:
        raise FitError("degenerate angle set: need >= 3 distinct angles modulo 180 deg")
    means = np.array([s.mean for s in stats])
    variances = np.array([s.variance for s in stats])

    design_m = np.column_stack([np.cos(phi), np.sin(phi)])
    design_v = np.column_stack([np.ones_like(phi), np.cos(2 * phi), np.sin(2 * phi)])
    cm, *_ = np.linalg.lstsq(design_m, means, rcond=None)
    cv, *_ = np.linalg.lstsq(design_v, variances, rcond=None)
    if np.linalg.cond(design_v) > 1e10 or np.linalg.cond(design_m) > 1e10:
        raise FitError("degenerate angle set: singular design matrix")
    trig = TrigFit((float(cm[0]), float(cm[1])), (float(cv[0]), float(cv[1]), float(cv[2])))
    residuals = {
        "mean_rms": float(np.sqrt(np.mean((design_m @ cm - means) ** 2))),
        "var_rms": float(np.sqrt(np.mean((design_v @ cv - variances) ** 2))),
    }
    return trig.to_params(), trig, residuals


# --- simulated training data ------------------------------------------------


@dataclass(frozen=True)
class ParamBox:
    n_max: float = 1.0
    r_max: float = 0.5
    alpha_max: float = 1.5

    def __post_init__(self):
        if min(self.n_max, self.r_max, self.alpha_max) <= 0:
            raise ValueError("parameter box has an empty range")


LABEL_NAMES = ("n_thermal", "zeta_re", "zeta_im", "alpha_re", "alpha_im")


def labels_of(p: GaussianParams) -> np.ndarray:
    return np.array([p.n_thermal, p.zeta.real, p.zeta.imag, p.alpha.real, p.alpha.imag])


def params_of(label) -> GaussianParams:
    n, zr, zi, ar, ai = (float(v) for v in label)
    return GaussianParams.create(max(n, 0.0), complex(zr, zi), complex(ar, ai))


def features_of(stats: list[QuadratureStats]) -> np.ndarray:
    return np.array([s.mean for s in stats] + [s.variance for s in stats])


@dataclass
class Dataset:
    features: np.ndarray  # (count, 2N): means then variances
    labels: np.ndarray  # (count, 5), see LABEL_NAMES
    angles_deg: tuple
    seed: int
    box: ParamBox
    noise: tuple = (0.0, 0.0)

    def __len__(self):
        return len(self.labels)


def gen_dataset(
    count: int,
    seed: int,
    box: ParamBox = ParamBox(),
    angles_deg=DEFAULT_ANGLES,
    noise: tuple[float, float] = (0.0, 0.0),
) -> Dataset:
    """Uniform draws of ``n``, ``r``, ``theta`` and ``alpha`` uniform over the disk ``|alpha| <= alpha_max``."""
    rng = np.random.default_rng(seed)
    n = rng.uniform(0.0, box.n_max, count)
    r = rng.uniform(0.0, box.r_max, count)
    theta = rng.uniform(0.0, 2 * math.pi, count)
    rad = box.alpha_max * np.sqrt(rng.uniform(0.0, 1.0, count))
    arg = rng.uniform(0.0, 2 * math.pi, count)
    alpha = rad * np.exp(1j * arg)
    phi = np.deg2rad(np.asarray(angles_deg, dtype=float))
    means = math.sqrt(2) * np.real(alpha[:, None] * np.exp(-1j * phi))
    variances = (n[:, None] + 0.5) * (np.cosh(2 * r[:, None]) - np.sinh(2 * r[:, None]) * np.cos(2 * phi - theta[:, None]))
    if noise[0] > 0:
        means = means + rng.normal(0.0, noise[0], means.shape)
    if noise[1] > 0:
        variances = variances + rng.normal(0.0, noise[1], variances.shape)
    labels = np.column_stack([n, r * np.cos(theta), r * np.sin(theta), alpha.real, alpha.imag])
    return Dataset(np.hstack([means, variances]), labels, tuple(float(a) for a in angles_deg), seed, box, tuple(noise))


_DATASET_MAGIC = b"WCTDATA1\n"


def save_dataset(ds: Dataset, path) -> None:
    """Binary record file: magic line, JSON header line, then float64 LE rows of features+labels."""
    header = {
        "count": len(ds),
        "n_features": ds.features.shape[1],
        "n_labels": ds.labels.shape[1],
        "angles_deg": list(ds.angles_deg),
        "seed": ds.seed,
        "box": [ds.box.n_max, ds.box.r_max, ds.box.alpha_max],
        "noise": list(ds.noise),
        "label_names": list(LABEL_NAMES),
    }
    rows = np.hstack([ds.features, ds.labels]).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(_DATASET_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(rows.tobytes())


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        if fh.readline() != _DATASET_MAGIC:
            raise ValueError(f"{path}: not a dataset file")
        header = json.loads(fh.readline())
        raw = np.frombuffer(fh.read(), dtype="<f8")
    nf, nl = header["n_features"], header["n_labels"]
    rows = raw.reshape(header["count"], nf + nl)
    return Dataset(
        rows[:, :nf].copy(),
        rows[:, nf:].copy(),
        tuple(header["angles_deg"]),
        header["seed"],
        ParamBox(*header["box"]),
        tuple(header["noise"]),
    )


# --- neural network -------------------------------------------------------------


@dataclass
class TrainConfig:
    hidden: tuple = (64, 64)
    epochs: int = 300
    batch_size: int = 128
    learning_rate: float = 0.05
    momentum: float = 0.9
    val_fraction: float = 0.1

    def to_json(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


@dataclass
class NNModel:
    weights: list  # per layer (fan_in, fan_out)
    biases: list
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray
    angles_deg: tuple
    config_hash: str = ""
    history: dict = field(default_factory=dict)

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def predict(self, features) -> np.ndarray:
        x = (np.atleast_2d(features) - self.x_mean) / self.x_std
        out = _forward(self.weights, self.biases, x)[-1]
        return out * self.y_std + self.y_mean


def _forward(weights, biases, x):
    acts = [x]
    for i, (w, b) in enumerate(zip(weights, biases)):
        z = acts[-1] @ w + b
        acts.append(z if i == len(weights) - 1 else np.tanh(z))
    return acts


def loss_and_grads(weights, biases, x, y):
    """Mean squared error over all outputs and its gradient by backpropagation."""
    acts = _forward(weights, biases, x)
    diff = acts[-1] - y
    loss = float(np.mean(diff**2))
    delta = 2.0 * diff / diff.size
    gw = [None] * len(weights)
    gb = [None] * len(weights)
    for i in range(len(weights) - 1, -1, -1):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ weights[i].T) * (1.0 - acts[i] ** 2)
    return loss, gw, gb


class TrainingError(RuntimeError):
    pass


def _split(count: int, val_fraction: float, seed: int):
    perm = np.random.default_rng([seed, 1]).permutation(count)
    n_val = int(round(count * val_fraction))
    return perm[n_val:], perm[:n_val]


def nn_train(ds: Dataset, config: TrainConfig = TrainConfig(), seed: int = 0) -> NNModel:
    """Mini-batch SGD with heavy-ball momentum and a cosine learning-rate schedule."""
    if len(ds) < 2:
        raise TrainingError("dataset too small")
    train_idx, val_idx = _split(len(ds), config.val_fraction, seed)
    x_mean = ds.features[train_idx].mean(0)
    x_std = ds.features[train_idx].std(0)
    y_mean = ds.labels[train_idx].mean(0)
    y_std = ds.labels[train_idx].std(0)
    x_std = np.where(x_std > 0, x_std, 1.0)
    y_std = np.where(y_std > 0, y_std, 1.0)
    xn = (ds.features - x_mean) / x_std
    yn = (ds.labels - y_mean) / y_std

    rng = np.random.default_rng([seed, 2])
    dims = [xn.shape[1], *config.hidden, yn.shape[1]]
    weights = [rng.standard_normal((a, b)) / math.sqrt(a) for a, b in zip(dims, dims[1:])]
    biases = [np.zeros(b) for b in dims[1:]]
    vel_w = [np.zeros_like(w) for w in weights]
    vel_b = [np.zeros_like(b) for b in biases]

    history = {"train_loss": [], "val_loss": []}
    for epoch in range(config.epochs):
        lr = config.learning_rate * 0.5 * (1 + math.cos(math.pi * epoch / config.epochs)) + 1e-4 * config.learning_rate
        order = rng.permutation(train_idx)
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            loss, gw, gb = loss_and_grads(weights, biases, xn[batch], yn[batch])
            if not math.isfinite(loss):
                raise TrainingError(f"loss became {loss} at epoch {epoch}, batch starting {start}")
            total += loss * len(batch)
            for i in range(len(weights)):
                vel_w[i] = config.momentum * vel_w[i] - lr * gw[i]
                vel_b[i] = config.momentum * vel_b[i] - lr * gb[i]
                weights[i] += vel_w[i]
                biases[i] += vel_b[i]
        history["train_loss"].append(total / len(order))
        if len(val_idx):
            vl = float(np.mean((_forward(weights, biases, xn[val_idx])[-1] - yn[val_idx]) ** 2))
            history["val_loss"].append(vl)

    model = NNModel(weights, biases, x_mean, x_std, y_mean, y_std, ds.angles_deg, history=history)
    model.config_hash = _config_hash(config, ds, seed)
    if len(val_idx):
        pred = model.predict(ds.features[val_idx])
        history["val_mae"] = np.abs(pred - ds.labels[val_idx]).mean(0).tolist()
    return model


def _config_hash(config: TrainConfig, ds: Dataset, seed: int) -> str:
    blob = json.dumps(
        {"config": config.to_json(), "seed": seed, "count": len(ds), "angles": list(ds.angles_deg), "data_seed": ds.seed},
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def nn_infer(model: NNModel, stats: list[QuadratureStats], atol: float = 1e-6) -> GaussianParams:
    angles = [s.angle_deg for s in stats]
    if len(angles) != len(model.angles_deg) or not np.allclose(angles, model.angles_deg, atol=atol):
        raise ValueError(f"angle set {angles} does not match the training angles {list(model.angles_deg)}")
    return params_of(model.predict(features_of(stats))[0])


def stats_for(params: GaussianParams, angles_deg=DEFAULT_ANGLES) -> list[QuadratureStats]:
    return [QuadratureStats(a, float(quad_mean(params, a)), float(quad_var(params, a))) for a in angles_deg]


def _b64(arr) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode()


def _unb64(text, shape) -> np.ndarray:
    return np.frombuffer(base64.b64decode(text), dtype="<f8").reshape(shape).copy()


def model_to_json(model: NNModel) -> dict:
    return {
        "format": "wignerct-mlp",
        "version": MODEL_FORMAT_VERSION,
        "layer_dims": model.layer_dims,
        "activation": "tanh",
        "angles_deg": list(model.angles_deg),
        "labels": list(LABEL_NAMES),
        "weights": [_b64(w) for w in model.weights],
        "biases": [_b64(b) for b in model.biases],
        "normalization": {k: _b64(getattr(model, k)) for k in ("x_mean", "x_std", "y_mean", "y_std")},
        "config_hash": model.config_hash,
    }


def model_from_json(obj: dict) -> NNModel:
    if obj.get("format") != "wignerct-mlp" or obj.get("version") != MODEL_FORMAT_VERSION:
        raise ValueError("unsupported model file")
    dims = obj["layer_dims"]
    weights = [_unb64(w, (a, b)) for w, a, b in zip(obj["weights"], dims, dims[1:])]
    biases = [_unb64(b, (n,)) for b, n in zip(obj["biases"], dims[1:])]
    norm = obj["normalization"]
    return NNModel(
        weights,
        biases,
        _unb64(norm["x_mean"], (dims[0],)),
        _unb64(norm["x_std"], (dims[0],)),
        _unb64(norm["y_mean"], (dims[-1],)),
        _unb64(norm["y_std"], (dims[-1],)),
        tuple(obj["angles_deg"]),
        obj.get("config_hash", ""),
    )


def save_model(model: NNModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_json(model), fh, indent=1, sort_keys=True)


def load_model(path) -> NNModel:
    with open(path) as fh:
        return model_from_json(json.load(fh))


def model_digest(model: NNModel) -> str:
    buf = io.BytesIO()
    for arr in [*model.weights, *model.biases]:
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return hashlib.sha256(buf.getvalue()).hexdigest()
