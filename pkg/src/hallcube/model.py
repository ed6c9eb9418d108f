"""Plain-numpy fully connected regressor with from-scratch training.

Maps 9 normalized sensor channels to 100 normalized heatmap values.
Hidden layers are ReLU; the output layer is linear, clamped to [0,1]
only at inference. Training is minibatch Adam (or SGD) on MSE with
per-epoch shuffling from a seeded stream and selection of the epoch
with the lowest validation loss.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import IntegrityError, TrainingError, UsageError
from .heatmap import NormStats

FULL_SIZES = [9, 600, 2000, 2000, 2000, 100]
SMALL_SIZES = [9, 64, 64, 100]
# smallest tested layout whose last hidden layer still spans the 100 output
# pixels; narrower nets plateau near the zero-prediction loss
COMPACT_SIZES = [9, 128, 256, 256, 100]

PARAMS_FILE = "params.bin"
MANIFEST_FILE = "manifest.json"


@dataclass
class MLP:
    sizes: list[int]
    weights: list[np.ndarray]  # (fan_in, fan_out) per layer
    biases: list[np.ndarray]  # (fan_out,) per layer

    def copy(self) -> "MLP":
        return MLP(list(self.sizes), [w.copy() for w in self.weights],
                   [b.copy() for b in self.biases])


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 2000
    max_epochs: int = 200
    seed: int = 0
    optimizer: str = "adam"  # or "sgd"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_decay: float = 1.0  # per-epoch multiplier; 1.0 keeps the rate constant
    warmup_epochs: int = 0  # linear ramp from 0 avoids dead-unit collapse at high rates
    dtype: str = "float64"  # optimization precision; parameters are stored as float64 either way
    val_every: int = 1  # epochs between validation passes; the final epoch is always scored
    ema: float = 0.0  # per-epoch weight-average decay; > 0 validates and returns the average
    input_noise_sd: float = 0.0  # train-time Gaussian jitter on normalized inputs; smooths
    # the learned map between calibration points without touching targets or validation


@dataclass
class Checkpoint:
    mlp: MLP
    norm_stats: NormStats | None
    provenance: dict
    history: list[dict] = field(default_factory=list)


def init_mlp(sizes: list[int], seed: int) -> MLP:
    """He-scaled random weights, zero biases; deterministic per seed."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in))
        biases.append(np.zeros(fan_out))
    return MLP(sizes=list(sizes), weights=weights, biases=biases)


def _check_input(mlp: MLP, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != mlp.sizes[0]:
        raise UsageError(f"expected (n, {mlp.sizes[0]}) inputs, got {x.shape}")
    return x


def forward(mlp: MLP, x: np.ndarray) -> np.ndarray:
    """Raw network output (no clamp), shape (n, sizes[-1])."""
    h = _check_input(mlp, x)
    last = len(mlp.weights) - 1
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        h = h @ w + b
        if i < last:
            np.maximum(h, 0.0, out=h)
    return h


def forward_cached(mlp: MLP, x: np.ndarray):
    """Forward pass keeping post-activation values for backprop."""
    acts = [_check_input(mlp, x)]
    last = len(mlp.weights) - 1
    h = acts[0]
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        h = h @ w + b
        if i < last:
            np.maximum(h, 0.0, out=h)
        acts.append(h)
    return h, acts


def predict(mlp: MLP, x: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Inference output clamped to [0,1], evaluated in bounded chunks."""
    x = _check_input(mlp, x)
    outs = [np.clip(forward(mlp, x[i : i + chunk]), 0.0, 1.0)
            for i in range(0, len(x), chunk)]
    return np.concatenate(outs) if outs else np.empty((0, mlp.sizes[-1]))


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    if pred.shape != target.shape:
        raise UsageError(f"loss shapes differ: {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff))


def backward(mlp: MLP, acts: list[np.ndarray], pred: np.ndarray, target: np.ndarray):
    """Gradients of mse_loss wrt every weight and bias (mean reduction)."""
    n, out = pred.shape
    delta = 2.0 * (pred - target) / (n * out)
    g_w = [None] * len(mlp.weights)
    g_b = [None] * len(mlp.biases)
    for i in range(len(mlp.weights) - 1, -1, -1):
        g_w[i] = acts[i].T @ delta
        g_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ mlp.weights[i].T) * (acts[i] > 0.0)
    return g_w, g_b


def val_loss(mlp: MLP, x: np.ndarray, y: np.ndarray, chunk: int = 4096) -> float:
    """MSE over a split without building one huge activation matrix."""
    total = 0.0
    # diverged parameters overflow to inf here; the caller treats
    # non-finite losses as a training failure, so don't warn
    with np.errstate(over="ignore"):
        for i in range(0, len(x), chunk):
            p = forward(mlp, x[i : i + chunk])
            d = p - y[i : i + chunk]
            total += float(np.sum(d * d))
    return total / y.size


def train(
    mlp: MLP,
    train_x: np.ndarray,
    train_y: np.ndarray,
    val_x: np.ndarray,
    val_y: np.ndarray,
    cfg: TrainConfig,
    norm_stats: NormStats | None = None,
    data_hash: str = "",
) -> Checkpoint:
    """Optimize and return the parameters of the best-validation epoch."""
    n = len(train_x)
    if not 1 <= cfg.batch_size <= n:
        raise UsageError(f"batch_size {cfg.batch_size} outside [1, {n}]")
    if cfg.optimizer not in ("adam", "sgd"):
        raise UsageError(f"unknown optimizer {cfg.optimizer!r}")
    if cfg.dtype not in ("float64", "float32"):
        raise UsageError(f"unknown dtype {cfg.dtype!r}")
    if cfg.dtype == "float32":
        dt = np.float32
        train_x, train_y = train_x.astype(dt), train_y.astype(dt)
        val_x, val_y = val_x.astype(dt), val_y.astype(dt)
        mlp.weights = [w.astype(dt) for w in mlp.weights]
        mlp.biases = [b.astype(dt) for b in mlp.biases]
    rng = np.random.default_rng(cfg.seed)
    m_w = [np.zeros_like(w) for w in mlp.weights]
    v_w = [np.zeros_like(w) for w in mlp.weights]
    m_b = [np.zeros_like(b) for b in mlp.biases]
    v_b = [np.zeros_like(b) for b in mlp.biases]
    step = 0
    ema = mlp.copy() if cfg.ema > 0 else None

    scored_mlp = ema if ema is not None else mlp
    best_loss = val_loss(scored_mlp, val_x, val_y)
    best_params = scored_mlp.copy()
    best_epoch = 0
    history = [{"epoch": 0, "train_loss": None, "val_loss": best_loss}]

    for epoch in range(1, cfg.max_epochs + 1):
        lr = cfg.learning_rate * cfg.lr_decay ** (epoch - 1)
        if cfg.warmup_epochs > 0 and epoch <= cfg.warmup_epochs:
            lr *= epoch / cfg.warmup_epochs
        perm = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            xb = train_x[idx]
            if cfg.input_noise_sd > 0:
                xb = xb + rng.normal(0.0, cfg.input_noise_sd, xb.shape).astype(xb.dtype)
            pred, acts = forward_cached(mlp, xb)
            loss = mse_loss(pred, train_y[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"training loss diverged at epoch {epoch}", epoch=epoch)
            batch_losses.append(loss)
            g_w, g_b = backward(mlp, acts, pred, train_y[idx])
            step += 1
            if cfg.optimizer == "adam":
                c1 = 1.0 - cfg.beta1**step
                c2 = 1.0 - cfg.beta2**step
                for i in range(len(mlp.weights)):
                    m_w[i] = cfg.beta1 * m_w[i] + (1 - cfg.beta1) * g_w[i]
                    v_w[i] = cfg.beta2 * v_w[i] + (1 - cfg.beta2) * g_w[i] ** 2
                    mlp.weights[i] -= lr * (m_w[i] / c1) / (np.sqrt(v_w[i] / c2) + cfg.eps)
                    m_b[i] = cfg.beta1 * m_b[i] + (1 - cfg.beta1) * g_b[i]
                    v_b[i] = cfg.beta2 * v_b[i] + (1 - cfg.beta2) * g_b[i] ** 2
                    mlp.biases[i] -= lr * (m_b[i] / c1) / (np.sqrt(v_b[i] / c2) + cfg.eps)
            else:
                for i in range(len(mlp.weights)):
                    mlp.weights[i] -= lr * g_w[i]
                    mlp.biases[i] -= lr * g_b[i]
        if ema is not None:
            # bias-corrected running average of the epoch-end iterates
            w = 1.0 - cfg.ema
            for i in range(len(mlp.weights)):
                ema.weights[i] += w * (mlp.weights[i] - ema.weights[i])
                ema.biases[i] += w * (mlp.biases[i] - ema.biases[i])
        scored = epoch % max(1, cfg.val_every) == 0 or epoch == cfg.max_epochs
        scored_mlp = ema if ema is not None else mlp
        vl = val_loss(scored_mlp, val_x, val_y) if scored else None
        if scored and not np.isfinite(vl):
            raise TrainingError(f"validation loss diverged at epoch {epoch}", epoch=epoch)
        history.append({"epoch": epoch, "train_loss": float(np.mean(batch_losses)), "val_loss": vl})
        if scored and vl < best_loss:
            best_loss = vl
            best_params = scored_mlp.copy()
            best_epoch = epoch

    provenance = {
        "seed": cfg.seed,
        "data_hash": data_hash,
        "epochs_run": cfg.max_epochs,
        "best_epoch": best_epoch,
        "best_val_loss": best_loss,
        "train_rows": n,
        "optimizer": cfg.optimizer,
        "learning_rate": cfg.learning_rate,
        "batch_size": cfg.batch_size,
    }
    if cfg.dtype == "float32":
        best_params.weights = [w.astype(np.float64) for w in best_params.weights]
        best_params.biases = [b.astype(np.float64) for b in best_params.biases]
    return Checkpoint(mlp=best_params, norm_stats=norm_stats,
                      provenance=provenance, history=history)


def _params_blob(mlp: MLP) -> bytes:
    parts = []
    for w, b in zip(mlp.weights, mlp.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return b"".join(parts)


def save_checkpoint(ckpt: Checkpoint, out_dir: str) -> str:
    """Write manifest.json plus a flat little-endian float64 parameter blob."""
    os.makedirs(out_dir, exist_ok=True)
    blob = _params_blob(ckpt.mlp)
    manifest = {
        "layer_sizes": ckpt.mlp.sizes,
        "params_file": PARAMS_FILE,
        "params_sha256": hashlib.sha256(blob).hexdigest(),
        "param_count": len(blob) // 8,
        "norm_stats": ckpt.norm_stats.to_dict() if ckpt.norm_stats else None,
        "provenance": ckpt.provenance,
        "history": ckpt.history,
    }
    with open(os.path.join(out_dir, PARAMS_FILE), "wb") as fh:
        fh.write(blob)
    with open(os.path.join(out_dir, MANIFEST_FILE), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out_dir


def load_checkpoint(ckpt_dir: str) -> Checkpoint:
    with open(os.path.join(ckpt_dir, MANIFEST_FILE)) as fh:
        manifest = json.load(fh)
    sizes = [int(s) for s in manifest["layer_sizes"]]
    with open(os.path.join(ckpt_dir, manifest["params_file"]), "rb") as fh:
        blob = fh.read()
    if hashlib.sha256(blob).hexdigest() != manifest["params_sha256"]:
        raise IntegrityError(f"parameter blob checksum mismatch in {ckpt_dir}")
    expected = sum((sizes[i] + 1) * sizes[i + 1] for i in range(len(sizes) - 1))
    flat = np.frombuffer(blob, dtype="<f8")
    if flat.size != expected:
        raise IntegrityError(
            f"parameter count {flat.size} does not fit layer sizes {sizes}"
        )
    weights, biases = [], []
    pos = 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(flat[pos : pos + fan_in * fan_out].reshape(fan_in, fan_out).copy())
        pos += fan_in * fan_out
        biases.append(flat[pos : pos + fan_out].copy())
        pos += fan_out
    stats = NormStats.from_dict(manifest["norm_stats"]) if manifest["norm_stats"] else None
    return Checkpoint(
        mlp=MLP(sizes=sizes, weights=weights, biases=biases),
        norm_stats=stats,
        provenance=manifest["provenance"],
        history=manifest.get("history", []),
    )
