"""Residual multilayer perceptron for 3-class classification, from scratch.

The network is an initial block (affine, activation, affine), a stack of
additive residual blocks (affine, activation, affine, activation around a
skip connection), and an affine output layer producing 3 logits.  Training
minimizes mean softmax cross-entropy with mini-batch Adam; initialization and
shuffling draw from one seeded generator, so runs are bit-reproducible.

Model files are plain JSON (version-tagged) with base64-encoded float64
parameter tensors, chosen over npz for byte-stable output.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import FfdlabError
from .features import Dataset

MODEL_FORMAT = "ffdlab-model-v1"


class DimensionMismatch(FfdlabError):
    pass


class NonFiniteLoss(FfdlabError):
    pass


class LengthMismatch(FfdlabError):
    pass


class EmptyInput(FfdlabError):
    pass


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    hidden_dim: int = 64
    n_residual_blocks: int = 2
    n_classes: int = 3
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 100
    batch_size: int = 64
    seed: int = 0
    activation: str = "relu"  # or "leaky_relu"

    def __post_init__(self):
        if min(self.input_dim, self.hidden_dim, self.n_classes) < 1:
            raise ValueError("dimensions must be positive")
        if self.n_residual_blocks < 0:
            raise ValueError("n_residual_blocks must be non-negative")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.activation not in ("relu", "leaky_relu"):
            raise ValueError("activation must be 'relu' or 'leaky_relu'")


LEAKY_SLOPE = 0.01


def _act(x: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(x, 0.0)
    return np.where(x > 0, x, LEAKY_SLOPE * x)


def _act_grad(x: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (x > 0).astype(float)
    return np.where(x > 0, 1.0, LEAKY_SLOPE)


def _he_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class MlpModel:
    """Parameter tensors plus the config and per-epoch loss history."""

    config: MlpConfig
    params: dict[str, np.ndarray]
    loss_history: list[float] = field(default_factory=list)

    @classmethod
    def initialize(cls, config: MlpConfig, rng: np.random.Generator | None = None) -> "MlpModel":
        if rng is None:
            rng = np.random.default_rng(config.seed)
        d_in, d_h, d_out = config.input_dim, config.hidden_dim, config.n_classes
        params = {
            "in_w1": _he_uniform(rng, d_in, d_h),
            "in_b1": np.zeros(d_h),
            "in_w2": _he_uniform(rng, d_h, d_h),
            "in_b2": np.zeros(d_h),
        }
        for i in range(config.n_residual_blocks):
            params[f"res{i}_w1"] = _he_uniform(rng, d_h, d_h)
            params[f"res{i}_b1"] = np.zeros(d_h)
            params[f"res{i}_w2"] = _he_uniform(rng, d_h, d_h)
            params[f"res{i}_b2"] = np.zeros(d_h)
        params["out_w"] = _he_uniform(rng, d_h, d_out)
        params["out_b"] = np.zeros(d_out)
        return cls(config=config, params=params)

    def param_names(self) -> list[str]:
        return list(self.params)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _forward_cached(model: MlpModel, X: np.ndarray) -> tuple[np.ndarray, dict]:
    p, act = model.params, model.config.activation
    cache: dict = {"X": X}
    u0 = X @ p["in_w1"] + p["in_b1"]
    a0 = _act(u0, act)
    z = a0 @ p["in_w2"] + p["in_b2"]
    cache["u0"], cache["a0"], cache["z0"] = u0, a0, z
    for i in range(model.config.n_residual_blocks):
        u = z @ p[f"res{i}_w1"] + p[f"res{i}_b1"]
        a1 = _act(u, act)
        v = a1 @ p[f"res{i}_w2"] + p[f"res{i}_b2"]
        a2 = _act(v, act)
        cache[f"r{i}_in"], cache[f"r{i}_u"], cache[f"r{i}_a1"], cache[f"r{i}_v"] = z, u, a1, v
        z = z + a2
    cache["z_final"] = z
    logits = z @ p["out_w"] + p["out_b"]
    return logits, cache


def forward(model: MlpModel, batch: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Logits and softmax probabilities for a batch (rows sum to 1)."""
    X = np.atleast_2d(np.asarray(batch, dtype=float))
    if X.shape[1] != model.config.input_dim:
        raise DimensionMismatch(
            f"batch has {X.shape[1]} columns, model expects {model.config.input_dim}"
        )
    logits, _ = _forward_cached(model, X)
    return logits, softmax(logits)


def loss_and_gradients(
    model: MlpModel, X: np.ndarray, y: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy and its gradient for every parameter tensor.

    This is the exact path used by training, exposed so the analytic
    gradients can be checked against finite differences.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=int)
    if X.shape[1] != model.config.input_dim:
        raise DimensionMismatch(
            f"batch has {X.shape[1]} columns, model expects {model.config.input_dim}"
        )
    p, act = model.params, model.config.activation
    n = X.shape[0]
    logits, cache = _forward_cached(model, X)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        # log-softmax form; divergence surfaces as a non-finite loss, which
        # the training loop turns into NonFiniteLoss
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        probs = np.exp(log_probs)
        loss = float(-np.mean(log_probs[np.arange(n), y]))

    grads: dict[str, np.ndarray] = {}
    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n

    z_final = cache["z_final"]
    grads["out_w"] = z_final.T @ dlogits
    grads["out_b"] = dlogits.sum(axis=0)
    dz = dlogits @ p["out_w"].T

    for i in reversed(range(model.config.n_residual_blocks)):
        z_in, u, a1, v = cache[f"r{i}_in"], cache[f"r{i}_u"], cache[f"r{i}_a1"], cache[f"r{i}_v"]
        da2 = dz  # skip connection passes dz through unchanged
        dv = da2 * _act_grad(v, act)
        grads[f"res{i}_w2"] = a1.T @ dv
        grads[f"res{i}_b2"] = dv.sum(axis=0)
        da1 = dv @ p[f"res{i}_w2"].T
        du = da1 * _act_grad(u, act)
        grads[f"res{i}_w1"] = z_in.T @ du
        grads[f"res{i}_b1"] = du.sum(axis=0)
        dz = dz + du @ p[f"res{i}_w1"].T

    a0, u0 = cache["a0"], cache["u0"]
    grads["in_w2"] = a0.T @ dz
    grads["in_b2"] = dz.sum(axis=0)
    da0 = dz @ p["in_w2"].T
    du0 = da0 * _act_grad(u0, act)
    grads["in_w1"] = cache["X"].T @ du0
    grads["in_b1"] = du0.sum(axis=0)
    return loss, grads


def train(dataset: Dataset, cfg: MlpConfig) -> MlpModel:
    """Fit the network on the dataset's training rows with mini-batch Adam.

    Deterministic for a given seed: one generator drives initialization and
    every epoch's shuffle.  The loss history records each epoch's mean
    cross-entropy over the shuffled batches.
    """
    X = np.asarray(dataset.X_train, dtype=float)
    y = np.asarray(dataset.y_train, dtype=int)
    n = len(y)
    if n < cfg.batch_size:
        raise ValueError(f"training rows ({n}) below batch_size ({cfg.batch_size})")
    if X.shape[1] != cfg.input_dim:
        raise DimensionMismatch(
            f"dataset has {X.shape[1]} features, config expects {cfg.input_dim}"
        )

    rng = np.random.default_rng(cfg.seed)
    model = MlpModel.initialize(cfg, rng)
    m = {k: np.zeros_like(v) for k, v in model.params.items()}
    v = {k: np.zeros_like(p) for k, p in model.params.items()}
    step = 0

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            loss, grads = loss_and_gradients(model, X[batch], y[batch])
            if not np.isfinite(loss):
                raise NonFiniteLoss(
                    f"loss diverged at epoch {epoch} (learning_rate={cfg.learning_rate})"
                )
            epoch_loss += loss * len(batch)
            step += 1
            bc1 = 1.0 - cfg.beta1**step
            bc2 = 1.0 - cfg.beta2**step
            for name, grad in grads.items():
                m[name] = cfg.beta1 * m[name] + (1.0 - cfg.beta1) * grad
                v[name] = cfg.beta2 * v[name] + (1.0 - cfg.beta2) * grad**2
                update = (m[name] / bc1) / (np.sqrt(v[name] / bc2) + cfg.epsilon)
                model.params[name] = model.params[name] - cfg.learning_rate * update
        model.loss_history.append(epoch_loss / n)
    return model


def predict(model: MlpModel, features: np.ndarray) -> np.ndarray:
    """Class with the largest logit per row; ties go to the lowest class."""
    logits, _ = forward(model, features)
    return np.argmax(logits, axis=1)


@dataclass(frozen=True)
class ClassificationReport:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    macro_avg: tuple[float, float, float]
    weighted_avg: tuple[float, float, float]
    accuracy: float
    confusion_matrix: np.ndarray  # rows: true class, columns: predicted
    zero_division: tuple[str, ...]


def classification_report(y_true: np.ndarray, y_pred: np.ndarray) -> ClassificationReport:
    """Per-class precision/recall/F1 with macro and support-weighted averages.

    Zero-denominator metrics (class never predicted, absent, or with zero
    precision+recall) are reported as 0 and flagged.
    """
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    if len(y_true) != len(y_pred):
        raise LengthMismatch(f"{len(y_true)} true labels vs {len(y_pred)} predictions")
    if len(y_true) == 0:
        raise EmptyInput("no observations")
    classes = np.arange(3)
    if y_true.min() < 0 or y_true.max() > 2 or y_pred.min() < 0 or y_pred.max() > 2:
        raise ValueError("labels must lie in {0, 1, 2}")

    confusion = np.zeros((3, 3), dtype=int)
    for t, p in zip(y_true, y_pred):
        confusion[t, p] += 1

    support = confusion.sum(axis=1)
    predicted = confusion.sum(axis=0)
    tp = np.diag(confusion)
    flags: list[str] = []
    precision = np.zeros(3)
    recall = np.zeros(3)
    f1 = np.zeros(3)
    for i in classes:
        if predicted[i] > 0:
            precision[i] = tp[i] / predicted[i]
        else:
            flags.append(f"precision[{i}]")
        if support[i] > 0:
            recall[i] = tp[i] / support[i]
        else:
            flags.append(f"recall[{i}]")
        if precision[i] + recall[i] > 0:
            f1[i] = 2 * precision[i] * recall[i] / (precision[i] + recall[i])
        else:
            flags.append(f"f1[{i}]")

    total = support.sum()
    macro = (float(precision.mean()), float(recall.mean()), float(f1.mean()))
    weighted = (
        float((precision * support).sum() / total),
        float((recall * support).sum() / total),
        float((f1 * support).sum() / total),
    )
    return ClassificationReport(
        precision=precision,
        recall=recall,
        f1=f1,
        support=support,
        macro_avg=macro,
        weighted_avg=weighted,
        accuracy=float(tp.sum() / total),
        confusion_matrix=confusion,
        zero_division=tuple(flags),
    )


def format_report(report: ClassificationReport) -> str:
    """Aligned text table of the report (per-class rows, averages, accuracy)."""
    lines = [f"{'':>14}{'precision':>11}{'recall':>10}{'f1-score':>10}{'support':>10}", ""]
    for i in range(3):
        lines.append(
            f"{i:>14}{report.precision[i]:>11.4f}{report.recall[i]:>10.4f}"
            f"{report.f1[i]:>10.4f}{report.support[i]:>10d}"
        )
    total = int(report.support.sum())
    lines.append("")
    lines.append(f"{'accuracy':>14}{'':>11}{'':>10}{report.accuracy:>10.4f}{total:>10d}")
    for name, avg in (("macro avg", report.macro_avg), ("weighted avg", report.weighted_avg)):
        lines.append(
            f"{name:>14}{avg[0]:>11.4f}{avg[1]:>10.4f}{avg[2]:>10.4f}{total:>10d}"
        )
    return "\n".join(lines)


def report_to_dict(report: ClassificationReport) -> dict:
    out: dict = {}
    for i in range(3):
        out[str(i)] = {
            "precision": float(report.precision[i]),
            "recall": float(report.recall[i]),
            "f1-score": float(report.f1[i]),
            "support": int(report.support[i]),
        }
    total = int(report.support.sum())
    out["accuracy"] = report.accuracy
    for name, avg in (("macro avg", report.macro_avg), ("weighted avg", report.weighted_avg)):
        out[name] = {
            "precision": avg[0],
            "recall": avg[1],
            "f1-score": avg[2],
            "support": total,
        }
    out["confusion_matrix"] = report.confusion_matrix.tolist()
    out["zero_division"] = list(report.zero_division)
    return out


def save_model(model: MlpModel, path: str | Path) -> None:
    """Write the model as version-tagged JSON with base64 float64 tensors."""
    payload = {
        "format": MODEL_FORMAT,
        "config": asdict(model.config),
        "loss_history": model.loss_history,
        "params": {
            name: {
                "shape": list(arr.shape),
                "data": base64.b64encode(
                    np.ascontiguousarray(arr, dtype="<f8").tobytes()
                ).decode("ascii"),
            }
            for name, arr in model.params.items()
        },
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1))


def load_model(path: str | Path) -> MlpModel:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a {MODEL_FORMAT} file: {path}")
    config = MlpConfig(**payload["config"])
    params = {
        name: np.frombuffer(
            base64.b64decode(entry["data"]), dtype="<f8"
        ).reshape(entry["shape"]).copy()
        for name, entry in payload["params"].items()
    }
    return MlpModel(config=config, params=params, loss_history=list(payload["loss_history"]))
