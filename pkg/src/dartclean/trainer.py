"""Seeded mini-batch training loop with early stopping and metric logging."""

from __future__ import annotations

import io
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, NumericError
from .optim import Adam, LrSchedule, PlateauTracker, clip_by_global_norm, accumulate_gradients

LOG_HEADER = "epoch,recon,kl,temporal,mean,total,val_total,lr,grad_norm"


@dataclass
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 128
    base_lr: float = 1e-4
    decay_steps: int = 100
    schedule: str = "step_decay"
    patience: int = 10
    min_delta: float = 1e-4
    t_anneal: int = 5000
    t_warmup: int = 1000
    clip_tau: float = 1.0
    weight_decay: float = 1e-5
    lam_temporal: float = 0.1
    lam_mean: float = 0.1
    seed: int = 0
    val_fraction: float = 0.1
    accumulation_steps: int = 1
    kl_stall_delta: float = 1e-5
    grad_norm_floor: float = 0.1
    max_epochs: int = 1000

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not 0.0 < self.val_fraction < 0.5:
            raise ConfigError("validation fraction must lie in (0, 0.5)")
        if self.batch_size < 1:
            raise ConfigError("batch size must be >= 1")
        if self.accumulation_steps < 1:
            raise ConfigError("accumulation steps must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    recon: float
    kl: float
    temporal: float
    mean: float
    total: float
    val_total: float
    lr: float
    grad_norm: float
    wall_time: float
    val_recon: float = math.nan  # tracked for diagnostics, not part of the CSV


@dataclass
class TrainLog:
    records: list = field(default_factory=list)

    def to_csv(self, destination=None) -> str:
        buf = io.StringIO()
        buf.write(LOG_HEADER + "\n")
        for r in self.records:
            buf.write(
                f"{r.epoch},{r.recon:.10g},{r.kl:.10g},{r.temporal:.10g},"
                f"{r.mean:.10g},{r.total:.10g},{r.val_total:.10g},"
                f"{r.lr:.10g},{r.grad_norm:.10g}\n"
            )
        text = buf.getvalue()
        if destination is not None:
            with open(destination, "w") as fh:
                fh.write(text)
        return text


class DivergenceError(NumericError):
    """Training diverged; carries the log accumulated so far."""

    def __init__(self, message, log: TrainLog):
        super().__init__(message)
        self.log = log


def early_stop_check(val_history, kl_history, grad_norm, config: TrainConfig):
    """Decide whether training should stop after the latest epoch.

    Returns (stop: bool, reason: str | None).  Reasons: "patience" when the
    validation loss has not beaten its best by min_delta for a full patience
    window, "kl_stabilized" when the KL change and gradient norm both sit
    below their stall thresholds, "max_epochs" at the epoch cap.  No
    criterion may fire before ``patience`` epochs have been recorded, except
    the hard epoch cap.
    """
    if not val_history:
        raise DataError("early stopping needs at least one recorded epoch")
    epoch = len(val_history)
    if epoch >= config.max_epochs:
        return True, "max_epochs"
    if epoch <= config.patience:
        return False, None
    best_before_window = min(val_history[:-config.patience])
    recent = val_history[-config.patience:]
    if min(recent) > best_before_window - config.min_delta:
        return True, "patience"
    if len(kl_history) >= 2:
        kl_delta = abs(kl_history[-1] - kl_history[-2])
        if kl_delta < config.kl_stall_delta and grad_norm < config.grad_norm_floor:
            return True, "kl_stabilized"
    return False, None


def train(model, windows, config: TrainConfig):
    """Train a Vae on a WindowBatch; returns (TrainLog, stop reason).

    The model is left holding the parameters with the best validation loss
    seen during the run.  The validation split is the chronologically last
    fraction of windows, so the same seed always yields the same split,
    batches, and numeric trajectory.
    """
    X = np.asarray(windows.windows if hasattr(windows, "windows") else windows,
                   dtype=float)
    if X.size == 0:
        raise DataError("no training windows supplied")
    n_windows = X.shape[0]
    n_val = max(1, int(round(config.val_fraction * n_windows)))
    if n_val >= n_windows:
        raise DataError("too few windows for the requested validation fraction")
    X_train, X_val = X[:-n_val], X[-n_val:]

    rng = np.random.default_rng(config.seed)
    schedule = LrSchedule(
        variant=config.schedule, base_lr=config.base_lr,
        decay_steps=config.decay_steps, t_warmup=config.t_warmup,
        total_steps=config.epochs * max(1, math.ceil(len(X_train) / config.batch_size)),
        apply_warmup=config.schedule != "warmup",
    )
    plateau = PlateauTracker(patience=config.patience, min_delta=config.min_delta)
    optimizer = Adam(model.trainable(), weight_decay=config.weight_decay)

    log = TrainLog()
    val_history, kl_history = [], []
    best_val = math.inf
    best_state = model.clone_state()
    global_step = 0
    reason = "epochs_exhausted"
    bad_batches = 0
    pending = []
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(X_train))
        sums = np.zeros(5)
        norms = []
        n_batches = 0
        for start in range(0, len(X_train), config.batch_size):
            batch = X_train[order[start:start + config.batch_size]]
            lr = schedule.lr_at(global_step, epoch - 1, plateau.multiplier)
            lb, _, grads = model.loss_and_grads(
                batch, step=global_step, train=True, rng=rng,
                t_anneal=config.t_anneal, lam_temporal=config.lam_temporal,
                lam_mean=config.lam_mean,
            )
            if not math.isfinite(lb.total):
                bad_batches += 1
                if bad_batches >= 3:
                    raise DivergenceError(
                        f"non-finite loss for {bad_batches} consecutive batches", log
                    )
                global_step += 1
                continue
            bad_batches = 0
            grads.pop("beta", None)  # beta follows the confidence rule, not Adam
            clipped, _ = clip_by_global_norm(grads, config.clip_tau)
            norms.append(min(_grad_norm(clipped), config.clip_tau))
            pending.append(clipped)
            if len(pending) >= config.accumulation_steps:
                optimizer.step(accumulate_gradients(pending), lr)
                pending = []
            model.update_global_skip(lb.recon)
            sums += (lb.recon, lb.kl, lb.temporal, lb.mean, lb.total)
            n_batches += 1
            global_step += 1
        if n_batches == 0:
            raise DivergenceError("no finite batches in epoch", log)

        val_total = _validation_loss(model, X_val, global_step, config)
        val_history.append(val_total)
        kl_history.append(sums[1] / n_batches)
        grad_norm = float(np.mean(norms)) if norms else 0.0
        lr_logged = schedule.lr_at(global_step, epoch - 1, plateau.multiplier)
        log.records.append(EpochRecord(
            epoch=epoch, recon=sums[0] / n_batches, kl=sums[1] / n_batches,
            temporal=sums[2] / n_batches, mean=sums[3] / n_batches,
            total=sums[4] / n_batches, val_total=val_total, lr=lr_logged,
            grad_norm=grad_norm, wall_time=time.perf_counter() - t0,
            val_recon=validation_recon_loss(model, X_val),
        ))
        if val_total < best_val:
            best_val = val_total
            best_state = model.clone_state()
        plateau.observe(val_total)
        stop, why = early_stop_check(val_history, kl_history, grad_norm, config)
        if stop:
            reason = why
            break
    model.load_state(best_state)
    return log, reason


def _grad_norm(grads) -> float:
    return math.sqrt(sum(float(np.sum(np.asarray(g) ** 2)) for g in grads.values()))


def _validation_loss(model, X_val, step, config: TrainConfig) -> float:
    latent, _ = model.encode(X_val, train=False)
    xhat, _ = model.decode(latent.z, X_val, train=False)
    lb = model.composite_loss(X_val, xhat, latent, step, config.t_anneal,
                              config.lam_temporal, config.lam_mean)
    return lb.total


def validation_recon_loss(model, X_val) -> float:
    """Infer-mode reconstruction MSE on a window batch."""
    xhat = model.reconstruct(np.asarray(X_val, dtype=float))
    return float(np.mean((xhat - X_val) ** 2))


def convergence_profile(log: TrainLog) -> dict:
    """Mean |delta loss| per epoch over the initial / mid / late phases."""
    totals = [r.total for r in log.records]
    if len(totals) < 21:
        raise DataError("convergence profile needs at least 21 logged epochs")
    deltas = np.abs(np.diff(totals))
    return {
        "initial": float(deltas[0:9].mean()),
        "mid": float(deltas[9:19].mean()),
        "late": float(deltas[19:].mean()),
    }
