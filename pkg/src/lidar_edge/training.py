"""End-to-end training: dataset splitting, the multi-task loss, the
epoch loop with validation-based model selection, gradient checking,
and patch-classifier training.

Everything is deterministic given the config seed: shuffling, weight
init, per-sample augmentation seeds, and dropout all derive from
SplitMix64 streams.
"""

from __future__ import annotations

import copy
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .augment import AugmentSpec, sample_and_apply
from .errors import ConfigError, DivergenceError, ParameterError
from .evaluation import ConfusionMatrix, confusion, metrics
from .formats import DatasetManifest, read_pgm, resolve
from .losses import pixel_loss
from .models import (ForwardTrace, NestedArch, NestedNetParams, PatchArch,
                     PatchNetParams, backward_nested, backward_patch,
                     forward_nested, forward_patch, init_nested, init_patch)
from .optim import OptimizerConfig, OptimizerState, optimizer_step
from .rng import SplitMix64, splitmix64


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 8
    optimizer: OptimizerConfig = OptimizerConfig()
    loss_kind: str = "bce"
    class_balance: bool = True
    lambdas: tuple | None = None   # None = 1.0 per side
    augment: AugmentSpec | None = None
    patience: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.loss_kind not in ("bce", "mse"):
            raise ConfigError(f"unknown loss kind {self.loss_kind!r}")
        if self.lambdas is not None and any(l < 0 for l in self.lambdas):
            raise ConfigError("side-loss weights must be nonnegative")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_f1: float
    wall_seconds: float


@dataclass
class RunLog:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1


def runlog_csv(log: RunLog) -> str:
    """CSV export. The seconds column is fixed at 0.000 so identical
    seeds yield byte-identical files; measured wall time stays in the
    in-memory records."""
    lines = ["epoch,train_loss,val_f1,seconds"]
    for r in log.records:
        lines.append(f"{r.epoch},{r.train_loss:.10f},{r.val_f1:.6f},0.000")
    return "\n".join(lines) + "\n"


def split_dataset(manifest: DatasetManifest, ratios: tuple,
                  seed: int) -> DatasetManifest:
    """Tag entries train/val/test by seeded shuffle + contiguous blocks.

    Block sizes are round(n * ratio); any rounding excess or deficit is
    absorbed by the train block so the splits stay exhaustive.
    """
    n = len(manifest.entries)
    if n == 0:
        raise ParameterError("cannot split an empty manifest")
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ParameterError(f"ratios must be 3 nonnegative values summing to 1, got {ratios}")
    counts = [int(np.floor(n * r + 0.5)) for r in ratios]
    counts[0] += n - sum(counts)
    if counts[0] < 0:
        raise ParameterError(f"rounding left a negative train count for n={n}, {ratios}")
    order = list(range(n))
    SplitMix64(seed).shuffle(order)
    tagged = copy.deepcopy(manifest)
    bounds = np.cumsum(counts)
    for pos, idx in enumerate(order):
        tag = "train" if pos < bounds[0] else "val" if pos < bounds[1] else "test"
        tagged.entries[idx].split = tag
    return tagged


def load_split(manifest: DatasetManifest, base_dir, split: str) -> list:
    """(intensity image, label) pairs for one split tag."""
    base = Path(base_dir)
    out = []
    for e in manifest.entries:
        if e.split == split:
            out.append((read_pgm(resolve(base, e.intensity)),
                        read_pgm(resolve(base, e.label))))
    return out


def total_loss(trace: ForwardTrace, label: np.ndarray,
               cfg: TrainConfig) -> tuple[float, np.ndarray, list]:
    """Multi-task loss: weighted side losses plus the fused-map loss.

    Returns (scalar, dL/d fused map, [direct dL/d side map i]).
    """
    s = len(trace.side_probs)
    lambdas = cfg.lambdas if cfg.lambdas is not None else (1.0,) * s
    if len(lambdas) != s:
        raise ConfigError(f"{len(lambdas)} side-loss weights for {s} side outputs")
    loss, d_fused = pixel_loss(cfg.loss_kind, trace.fused, label, cfg.class_balance)
    d_sides = []
    for lam, side in zip(lambdas, trace.side_probs):
        side_loss, d_side = pixel_loss(cfg.loss_kind, side, label, cfg.class_balance)
        loss += lam * side_loss
        d_sides.append(lam * d_side)
    return loss, d_fused, d_sides


def _nested_grad_list(params: NestedNetParams, grads) -> list:
    out = []
    for s, (dwa, dba, dwb, dbb) in enumerate(grads.stage_convs):
        out += [(f"stage{s}.conv_a.weights", dwa), (f"stage{s}.conv_a.bias", dba),
                (f"stage{s}.conv_b.weights", dwb), (f"stage{s}.conv_b.bias", dbb)]
    for s, (dw, db) in enumerate(grads.side_heads):
        out += [(f"side{s}.weights", dw), (f"side{s}.bias", db)]
    out.append(("alpha", grads.alpha))
    return out


def _zero_like(tensors: list) -> list:
    return [(name, np.zeros_like(t)) for name, t in tensors]


def _accumulate(total: list, part: list, scale: float) -> None:
    for (_, acc), (_, g) in zip(total, part):
        acc += scale * g


def validation_f1(params: NestedNetParams, val_samples: list,
                  threshold: float = 0.5) -> float:
    cm = ConfusionMatrix()
    for img, label in val_samples:
        fused = forward_nested(params, img).fused
        cm = cm + confusion((fused >= threshold).astype(np.float64), label)
    return metrics(cm).f1


def train_nested(train_samples: list, val_samples: list, arch: NestedArch,
                 cfg: TrainConfig,
                 progress=None) -> tuple[NestedNetParams, RunLog]:
    """Minibatch training of the nested detector with best-val-F1
    selection and early stopping."""
    if not train_samples or not val_samples:
        raise ParameterError("train and validation splits must be nonempty")
    params = init_nested(arch, cfg.seed)
    state = OptimizerState()
    log = RunLog()
    best = copy.deepcopy(params)
    best_f1 = -1.0
    stale = 0
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = list(range(len(train_samples)))
        SplitMix64(splitmix64(cfg.seed, 1000 + epoch)).shuffle(order)
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            tensors = params.named_tensors()
            grad_sum = _zero_like(tensors)
            for idx in batch:
                img, label = train_samples[idx]
                if cfg.augment is not None:
                    aug_seed = splitmix64(cfg.seed, epoch * 1_000_003 + idx)
                    img, label = sample_and_apply(img, label, cfg.augment, aug_seed)
                trace = forward_nested(params, img)
                loss, d_fused, d_sides = total_loss(trace, label, cfg)
                if not np.isfinite(loss):
                    raise DivergenceError(
                        f"non-finite loss {loss} at epoch {epoch}, sample {idx}")
                grads = backward_nested(params, trace, d_fused, d_sides)
                _accumulate(grad_sum, _nested_grad_list(params, grads),
                            1.0 / len(batch))
                epoch_loss += loss
            optimizer_step(tensors, grad_sum, state, cfg.optimizer,
                           simplex_names=("alpha",))
        epoch_loss /= len(order)
        val_f1 = validation_f1(params, val_samples)
        record = EpochRecord(epoch=epoch, train_loss=epoch_loss, val_f1=val_f1,
                             wall_seconds=time.perf_counter() - t0)
        log.records.append(record)
        if progress is not None:
            progress(record)
        if val_f1 > best_f1:
            best_f1 = val_f1
            best = copy.deepcopy(params)
            log.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return best, log


def _extract_patch(img: np.ndarray, row: int, col: int, half: int = 14) -> np.ndarray:
    padded = np.pad(img, half, mode="edge")
    return padded[row:row + 2 * half, col:col + 2 * half]


def _patch_grad_list(grads) -> list:
    return [("conv1.weights", grads.conv1[0]), ("conv1.bias", grads.conv1[1]),
            ("conv2.weights", grads.conv2[0]), ("conv2.bias", grads.conv2[1]),
            ("fc1.weights", grads.fc1[0]), ("fc1.bias", grads.fc1[1]),
            ("fc2.weights", grads.fc2[0]), ("fc2.bias", grads.fc2[1])]


def train_patch(train_samples: list, val_samples: list, arch: PatchArch,
                cfg: TrainConfig, patches_per_image: int = 32,
                progress=None) -> tuple[PatchNetParams, RunLog]:
    """Train the 28x28 patch classifier on balanced center-pixel samples.

    Each epoch draws patches_per_image patches per training image, half
    centered on edge pixels where available. Validation F1 is computed
    on a fixed seeded patch sample per epoch.
    """
    if not train_samples or not val_samples:
        raise ParameterError("train and validation splits must be nonempty")
    params = init_patch(arch, cfg.seed)
    state = OptimizerState()
    log = RunLog()
    best = copy.deepcopy(params)
    best_f1 = -1.0
    stale = 0

    def draw_patches(samples, seed, per_image):
        rng = SplitMix64(seed)
        out = []
        for img, label in samples:
            pos = np.argwhere(label == 1.0)
            h, w = img.shape
            for k in range(per_image):
                if k % 2 == 0 and len(pos):
                    r, c = pos[rng.randint(len(pos))]
                else:
                    r, c = rng.randint(h), rng.randint(w)
                out.append((_extract_patch(img, r, c), float(label[r, c])))
        return out

    val_patches = draw_patches(val_samples, splitmix64(cfg.seed, 7), patches_per_image)
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        batch_items = draw_patches(train_samples, splitmix64(cfg.seed, 2000 + epoch),
                                   patches_per_image)
        SplitMix64(splitmix64(cfg.seed, 3000 + epoch)).shuffle(batch_items)
        epoch_loss = 0.0
        step = 0
        for start in range(0, len(batch_items), cfg.batch_size):
            batch = batch_items[start:start + cfg.batch_size]
            tensors = params.named_tensors()
            grad_sum = _zero_like(tensors)
            for patch, y in batch:
                drop_seed = splitmix64(cfg.seed, 4000 + epoch * 100_003 + step)
                step += 1
                trace = forward_patch(params, patch, train_mode=True, seed=drop_seed)
                loss, d_prob = pixel_loss(cfg.loss_kind, np.array([trace.prob]),
                                          np.array([y]), class_balance=False)
                if not np.isfinite(loss):
                    raise DivergenceError(f"non-finite loss at epoch {epoch}")
                grads = backward_patch(params, trace, float(d_prob[0]))
                _accumulate(grad_sum, _patch_grad_list(grads), 1.0 / len(batch))
                epoch_loss += loss
            optimizer_step(tensors, grad_sum, state, cfg.optimizer)
        epoch_loss /= max(len(batch_items), 1)
        cm = ConfusionMatrix()
        for patch, y in val_patches:
            pred = 1.0 if forward_patch(params, patch).prob >= 0.5 else 0.0
            cm = cm + confusion(np.array([[pred]]), np.array([[y]]))
        val_f1 = metrics(cm).f1
        record = EpochRecord(epoch=epoch, train_loss=epoch_loss, val_f1=val_f1,
                             wall_seconds=time.perf_counter() - t0)
        log.records.append(record)
        if progress is not None:
            progress(record)
        if val_f1 > best_f1:
            best_f1, best, stale = val_f1, copy.deepcopy(params), 0
            log.best_epoch = epoch
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return best, log


def patch_prob_map(params: PatchNetParams, img: np.ndarray) -> np.ndarray:
    """Sliding-window edge probabilities, one patch per pixel."""
    h, w = img.shape
    half = 14
    padded = np.pad(img, half, mode="edge")
    out = np.zeros((h, w))
    for r in range(h):
        for c in range(w):
            patch = padded[r:r + 2 * half, c:c + 2 * half]
            out[r, c] = forward_patch(params, patch).prob
    return out


@dataclass
class GradCheckEntry:
    name: str
    max_rel_error: float


def _rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return float((np.abs(analytic - numeric) / denom).max())


def grad_check_nested(seed: int = 0, eps: float = 1e-5) -> list[GradCheckEntry]:
    """Central-difference check of every nested-net parameter tensor on
    a tiny 8x8 instance."""
    arch = NestedArch(stages=2, widths=(2, 2), input_hw=(8, 8))
    params = init_nested(arch, seed)
    rng = SplitMix64(splitmix64(seed, 99))
    # nonzero side heads so their gradients are exercised away from 0.5
    for head in params.side_heads:
        head.weights[...] = rng.normals(head.weights.size).reshape(head.weights.shape) * 0.3
        head.bias[...] = rng.normals(head.bias.size) * 0.1
    x = rng.floats(64).reshape(8, 8)
    label = (rng.floats(64).reshape(8, 8) < 0.3).astype(np.float64)
    cfg = TrainConfig(lambdas=(1.0, 0.7), seed=seed)

    def loss_of() -> float:
        trace = forward_nested(params, x)
        return total_loss(trace, label, cfg)[0]

    trace = forward_nested(params, x)
    _, d_fused, d_sides = total_loss(trace, label, cfg)
    grads = backward_nested(params, trace, d_fused, d_sides)
    analytic = dict(_nested_grad_list(params, grads))
    return _run_fd(params.named_tensors(), analytic, loss_of, eps)


def grad_check_patch(seed: int = 0, eps: float = 1e-5) -> list[GradCheckEntry]:
    """Central-difference check of the patch classifier, dropout active
    with a fixed mask seed."""
    arch = PatchArch(conv_channels=(2, 2), hidden=4, dropout_rate=0.5)
    params = init_patch(arch, seed)
    rng = SplitMix64(splitmix64(seed, 98))
    patch = rng.floats(28 * 28).reshape(28, 28)
    y = 1.0
    drop_seed = splitmix64(seed, 97)

    def loss_of() -> float:
        trace = forward_patch(params, patch, train_mode=True, seed=drop_seed)
        return pixel_loss("bce", np.array([trace.prob]), np.array([y]), False)[0]

    trace = forward_patch(params, patch, train_mode=True, seed=drop_seed)
    _, d_prob = pixel_loss("bce", np.array([trace.prob]), np.array([y]), False)
    grads = backward_patch(params, trace, float(d_prob[0]))
    analytic = dict(_patch_grad_list(grads))
    return _run_fd(params.named_tensors(), analytic, loss_of, eps)


def _run_fd(tensors: list, analytic: dict, loss_of, eps: float) -> list[GradCheckEntry]:
    report = []
    for name, tensor in tensors:
        numeric = np.zeros_like(tensor)
        flat = tensor.reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_of()
            flat[i] = orig - eps
            down = loss_of()
            flat[i] = orig
            num_flat[i] = (up - down) / (2.0 * eps)
        report.append(GradCheckEntry(name=name,
                                     max_rel_error=_rel_err(analytic[name], numeric)))
    return report


def grad_check(variant: str = "nested", seed: int = 0,
               tolerance: float = 1e-4) -> tuple[bool, list[GradCheckEntry]]:
    """Run the finite-difference harness for one model variant."""
    if variant == "nested":
        report = grad_check_nested(seed)
    elif variant == "patch":
        report = grad_check_patch(seed)
    else:
        raise ParameterError(f"unknown model variant {variant!r}")
    return all(e.max_rel_error <= tolerance for e in report), report
