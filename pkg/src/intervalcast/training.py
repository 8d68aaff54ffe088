"""Training policies, masked losses, AdamW with cosine annealing, checkpoints.

Five policies share one loop; they differ only in how each sample's
conditioning interval, loss weight, and (for the patching-augmented policy)
per-entry classification labels are produced:

* ``b``     -- full domain, weight 1, interval covariate disabled.
* ``e2e``   -- one fixed task interval, hard indicator weight, covariate disabled.
* ``c``     -- per-sample interval drawn uniformly over lengths >= delta,
               hard indicator weight.
* ``d``     -- per-sample cell of a fixed partition, hard indicator weight.
* ``dstar`` -- per-sample cell, decay-product weight with rate nu, per-entry
               in-interval labels, total loss = regression + phi * classification.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import WindowSample
from .errors import ConfigError, NumericError, TrainingError
from .intervals import (
    INDICATOR,
    FULL_DOMAIN,
    DecaySpec,
    DiscretePartition,
    Interval,
    UniformSampler,
    sample_discrete,
    sample_uniform,
    target_weight,
    target_weights,
)
from .models import (
    ModelArch,
    ModelParams,
    backward,
    batch_loss,
    forward_batch,
    init,
)

POLICY_KINDS = ("b", "e2e", "c", "d", "dstar")

LR_MAX = 1e-3
LR_MIN = 1e-5
DEFAULT_EPOCHS = 50
DEFAULT_BATCH = 32
DEFAULT_PATIENCE = 5
VALIDATION_PROBE_CELLS = 4  # probe partition for the continuous policy

# Offset separating the training-loop RNG stream from the init stream.
_LOOP_SEED_OFFSET = 0x9E3779B9

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class PolicyConfig:
    """Full description of one training policy.

    Fields required by the kind must be present and all others absent;
    ``weight_decay`` (the coefficient of the squared-norm regularizer,
    applied decoupled) is common to every kind.
    """

    kind: str
    task_interval: Interval | None = None
    delta: float | None = None
    partition: DiscretePartition | None = None
    nu: DecaySpec | None = None
    phi: float | None = None
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ConfigError(f"unknown policy kind {self.kind!r}, expected one of {POLICY_KINDS}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        required = {
            "b": (),
            "e2e": ("task_interval",),
            "c": ("delta",),
            "d": ("partition",),
            "dstar": ("partition", "nu", "phi"),
        }[self.kind]
        for name in ("task_interval", "delta", "partition", "nu", "phi"):
            value = getattr(self, name)
            if name in required and value is None:
                raise ConfigError(f"policy {self.kind!r} requires {name}")
            if name not in required and value is not None:
                raise ConfigError(f"policy {self.kind!r} does not take {name}")
        if self.phi is not None and not (0.0 <= self.phi <= 1.0):
            raise ConfigError(f"phi must be in [0, 1], got {self.phi}")
        if self.delta is not None:
            UniformSampler(self.delta)  # range check

    @property
    def uses_covariate(self) -> bool:
        return self.kind in ("c", "d", "dstar")

    @property
    def effective_phi(self) -> float:
        return self.phi if self.kind == "dstar" else 0.0

    def label(self) -> str:
        """Short policy name for result tables."""
        if self.kind == "b":
            return "B"
        if self.kind == "e2e":
            return f"E2E[{self.task_interval.lo:g},{self.task_interval.hi:g}]"
        if self.kind == "c":
            return f"C{self.delta:g}"
        if self.kind == "d":
            return f"D{self.partition.L}"
        return f"Dstar{self.partition.L}"


@dataclass(frozen=True)
class SampleLossSpec:
    """Per-sample loss shaping: conditioning interval, weight, optional labels."""

    interval: Interval
    weight: float
    label: np.ndarray | None = None


def masked_mae(pred: np.ndarray, target: np.ndarray, weight: float) -> float:
    """weight * mean(|pred - target|); the unmasked baseline uses weight 1."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ConfigError(f"shape mismatch {p.shape} vs {t.shape}")
    return float(weight * np.abs(p - t).mean())


def weighted_bce(prob: np.ndarray, label: np.ndarray, weight: float) -> float:
    """weight * mean binary cross entropy, probabilities clamped away from {0, 1}."""
    p = np.clip(np.asarray(prob, dtype=np.float64), 1e-12, 1.0 - 1e-12)
    y = np.asarray(label, dtype=np.float64)
    if p.shape != y.shape:
        raise ConfigError(f"shape mismatch {p.shape} vs {y.shape}")
    return float(weight * (-(y * np.log(p) + (1.0 - y) * np.log1p(-p))).mean())


def entry_labels(target: np.ndarray, interval: Interval) -> np.ndarray:
    """Per-entry indicator 1(y in [lo, hi]) as floats, shape tau x n."""
    t = np.asarray(target, dtype=np.float64)
    return ((t >= interval.lo) & (t <= interval.hi)).astype(np.float64)


def make_batch_losses(
    policy: PolicyConfig,
    batch: Sequence[WindowSample],
    rng: np.random.Generator,
) -> list[SampleLossSpec]:
    """Draw per-sample intervals and weights for one mini-batch.

    Interval draws are per sample and are repeated every time the sample is
    seen (fresh draws each epoch).
    """
    if len(batch) == 0:
        raise ConfigError("batch must be non-empty")
    specs = []
    if policy.kind == "b":
        for _ in batch:
            specs.append(SampleLossSpec(FULL_DOMAIN, 1.0))
    elif policy.kind == "e2e":
        for s in batch:
            w = target_weight(s.target, policy.task_interval, INDICATOR)
            specs.append(SampleLossSpec(policy.task_interval, w))
    elif policy.kind == "c":
        sampler = UniformSampler(policy.delta)
        for s in batch:
            iv = sample_uniform(sampler, rng)
            specs.append(SampleLossSpec(iv, target_weight(s.target, iv, INDICATOR)))
    elif policy.kind == "d":
        for s in batch:
            iv = sample_discrete(policy.partition, rng)
            specs.append(SampleLossSpec(iv, target_weight(s.target, iv, INDICATOR)))
    else:  # dstar
        for s in batch:
            iv = sample_discrete(policy.partition, rng)
            w = target_weight(s.target, iv, policy.nu)
            specs.append(SampleLossSpec(iv, w, entry_labels(s.target, iv)))
    return specs


def cosine_lr(epoch: int, n_epochs: int, lr_max: float = LR_MAX, lr_min: float = LR_MIN) -> float:
    """lr_min + 0.5 * (lr_max - lr_min) * (1 + cos(pi * epoch / n_epochs))."""
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * epoch / n_epochs))


@dataclass
class AdamwState:
    """First/second moment accumulators and the update count."""

    step: int
    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, dim: int) -> "AdamwState":
        return cls(0, np.zeros(dim), np.zeros(dim))

    def copy(self) -> "AdamwState":
        return AdamwState(self.step, self.m.copy(), self.v.copy())


def adamw_update(
    state: AdamwState,
    theta: np.ndarray,
    grad: np.ndarray,
    lr: float,
    weight_decay: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One decoupled-weight-decay Adam step, in place on theta."""
    state.step += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = state.m / (1.0 - beta1 ** state.step)
    v_hat = state.v / (1.0 - beta2 ** state.step)
    theta -= lr * (m_hat / (np.sqrt(v_hat) + eps) + weight_decay * theta)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


@dataclass
class TrainReport:
    """Per-epoch history plus early-stopping outcome."""

    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False
    wall_clock_seconds: float = 0.0


def _validation_intervals(policy: PolicyConfig) -> tuple[Interval, ...]:
    if policy.kind == "b":
        return (FULL_DOMAIN,)
    if policy.kind == "e2e":
        return (policy.task_interval,)
    if policy.kind == "c":
        return DiscretePartition(VALIDATION_PROBE_CELLS).intervals
    return policy.partition.intervals


def validation_loss(
    params: ModelParams, policy: PolicyConfig, val_samples: Sequence[WindowSample]
) -> float:
    """Mean over the policy's intervals of the masked loss conditioned on each.

    The per-sample loss matches the training objective of the policy
    (indicator or decay weighting, plus the phi-scaled classification term
    for the patching-augmented policy). The baseline simply averages the
    unmasked MAE.
    """
    H = np.stack([s.history for s in val_samples])
    Y = np.stack([s.target for s in val_samples])
    spec = policy.nu if policy.kind == "dstar" else INDICATOR
    phi = policy.effective_phi
    cell_losses = []
    for iv in _validation_intervals(policy):
        reg, prob = forward_batch(params, H, [iv] * len(val_samples))
        if policy.kind == "b":
            weights = np.ones(len(val_samples))
        else:
            weights = target_weights(Y, iv, spec)
        losses = weights * np.abs(reg - Y).mean(axis=(1, 2))
        if phi != 0.0:
            labels = ((Y >= iv.lo) & (Y <= iv.hi)).astype(np.float64)
            p = np.clip(prob, 1e-12, 1.0 - 1e-12)
            bce = -(labels * np.log(p) + (1.0 - labels) * np.log1p(-p))
            losses = losses + phi * weights * bce.mean(axis=(1, 2))
        cell_losses.append(float(losses.mean()))
    return float(np.mean(cell_losses))


def train(
    policy: PolicyConfig,
    kind: str,
    train_samples: Sequence[WindowSample],
    val_samples: Sequence[WindowSample],
    seed: int,
    *,
    epochs: int = DEFAULT_EPOCHS,
    batch_size: int = DEFAULT_BATCH,
    patience: int = DEFAULT_PATIENCE,
    lr_max: float = LR_MAX,
    lr_min: float = LR_MIN,
    hidden: int = 64,
    kernel: int = 25,
) -> tuple[ModelParams, TrainReport, AdamwState]:
    """Mini-batch training with per-epoch cosine annealing and early stopping.

    Returns the parameters (and optimizer state) from the epoch with the
    lowest validation loss. Fully deterministic for a given seed and
    configuration.
    """
    if len(train_samples) == 0 or len(val_samples) == 0:
        raise TrainingError("training and validation splits must be non-empty")
    if epochs < 1 or batch_size < 1 or patience < 1:
        raise ConfigError("epochs, batch_size and patience must be >= 1")
    w, n = train_samples[0].history.shape
    tau = train_samples[0].target.shape[0]
    params = init(kind, (w, tau, n), seed, hidden=hidden, kernel=kernel,
                  use_covariate=policy.uses_covariate)
    opt = AdamwState.zeros(params.theta.size)
    loop_rng = np.random.default_rng(seed + _LOOP_SEED_OFFSET)
    phi = policy.effective_phi

    report = TrainReport()
    best_val = math.inf
    best_theta = params.theta.copy()
    best_opt = opt.copy()
    t0 = time.perf_counter()
    for epoch in range(epochs):
        lr = cosine_lr(epoch, epochs, lr_max, lr_min)
        order = loop_rng.permutation(len(train_samples))
        batch_losses = []
        for b, start in enumerate(range(0, len(order), batch_size)):
            batch = [train_samples[i] for i in order[start : start + batch_size]]
            specs = make_batch_losses(policy, batch, loop_rng)
            try:
                loss, grad = backward(params, batch, specs, phi)
            except NumericError as exc:
                raise TrainingError(f"epoch {epoch}, batch {b}: {exc}") from exc
            adamw_update(opt, params.theta, grad, lr, policy.weight_decay)
            batch_losses.append(loss)
        train_loss = float(np.mean(batch_losses))
        val_loss = validation_loss(params, policy, val_samples)
        report.epochs.append(EpochRecord(epoch, train_loss, val_loss, lr))
        if val_loss < best_val:
            best_val = val_loss
            report.best_epoch = epoch
            best_theta = params.theta.copy()
            best_opt = opt.copy()
        elif epoch - report.best_epoch >= patience:
            report.stopped_early = True
            break
    report.wall_clock_seconds = time.perf_counter() - t0
    return ModelParams(params.arch, best_theta), report, best_opt


# ---------------------------------------------------------------------------
# checkpoint and report files


def _policy_doc(policy: PolicyConfig) -> dict:
    return {
        "kind": policy.kind,
        "task_interval": (
            [policy.task_interval.lo, policy.task_interval.hi]
            if policy.task_interval
            else None
        ),
        "delta": policy.delta,
        "L": policy.partition.L if policy.partition else None,
        "nu": (
            None
            if policy.nu is None
            else ("inf" if math.isinf(policy.nu.nu) else policy.nu.nu)
        ),
        "phi": policy.phi,
        "weight_decay": policy.weight_decay,
    }


def _policy_from_doc(doc: dict) -> PolicyConfig:
    nu = doc.get("nu")
    return PolicyConfig(
        kind=doc["kind"],
        task_interval=(
            Interval(*doc["task_interval"]) if doc.get("task_interval") else None
        ),
        delta=doc.get("delta"),
        partition=DiscretePartition(doc["L"]) if doc.get("L") else None,
        nu=None if nu is None else DecaySpec(math.inf if nu == "inf" else float(nu)),
        phi=doc.get("phi"),
        weight_decay=doc.get("weight_decay", 0.0),
    )


def save_checkpoint(
    path: str | Path,
    params: ModelParams,
    opt: AdamwState,
    policy: PolicyConfig,
) -> None:
    """Versioned JSON checkpoint; floats round-trip exactly via repr."""
    arch = params.arch
    doc = {
        "version": CHECKPOINT_VERSION,
        "arch": {
            "kind": arch.kind,
            "w": arch.w,
            "tau": arch.tau,
            "n": arch.n,
            "hidden": arch.hidden,
            "kernel": arch.kernel,
            "use_covariate": arch.use_covariate,
        },
        "theta": params.theta.tolist(),
        "optimizer": {"step": opt.step, "m": opt.m.tolist(), "v": opt.v.tolist()},
        "policy": _policy_doc(policy),
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_checkpoint(path: str | Path) -> tuple[ModelParams, AdamwState, PolicyConfig]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(
            f"unsupported checkpoint version {doc.get('version')!r} in {path}"
        )
    a = doc["arch"]
    arch = ModelArch(
        kind=a["kind"], w=a["w"], tau=a["tau"], n=a["n"],
        hidden=a["hidden"], kernel=a["kernel"], use_covariate=a["use_covariate"],
    )
    params = ModelParams(arch, np.array(doc["theta"], dtype=np.float64))
    o = doc["optimizer"]
    opt = AdamwState(o["step"], np.array(o["m"]), np.array(o["v"]))
    return params, opt, _policy_from_doc(doc["policy"])


def write_report_csv(path: str | Path, report: TrainReport) -> None:
    """One record per epoch: epoch, train_loss, val_loss, lr."""
    lines = ["epoch,train_loss,val_loss,lr"]
    for r in report.epochs:
        lines.append(f"{r.epoch},{r.train_loss!r},{r.val_loss!r},{r.lr!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_summary_csv(path: str | Path, report: TrainReport) -> None:
    """Early-stopping outcome; wall-clock stays in the log file only."""
    lines = [
        "best_epoch,stopped_early,epochs_run",
        f"{report.best_epoch},{report.stopped_early},{len(report.epochs)}",
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
