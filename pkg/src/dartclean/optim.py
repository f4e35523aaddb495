"""Adam with global-norm clipping, gradient accumulation, and LR schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError


def global_norm(grads: dict) -> float:
    total = 0.0
    for g in grads.values():
        total += float(np.sum(np.asarray(g) ** 2))
    return math.sqrt(total)


def clip_by_global_norm(grads: dict, tau: float):
    """Scale all gradients by min(1, tau / ||g||_2); returns (clipped, norm)."""
    norm = global_norm(grads)
    scale = min(1.0, tau / norm) if norm > 0 else 1.0
    if scale >= 1.0:
        return dict(grads), norm
    return {k: np.asarray(g) * scale for k, g in grads.items()}, norm


def accumulate_gradients(grad_list):
    """Elementwise mean over a list of gradient dicts with identical keys."""
    if not grad_list:
        raise ConfigError("cannot accumulate an empty gradient list")
    out = {}
    for key in grad_list[0]:
        out[key] = sum(np.asarray(g[key]) for g in grad_list) / len(grad_list)
    return out


class Adam:
    """Adam with decoupled weight decay applied to dense weight matrices.

    ``params`` is a dict of live arrays updated in place.  Decay is applied
    only to names in ``decay_names`` so batch-norm scales and biases are not
    pulled toward zero.
    """

    def __init__(self, params: dict, beta1=0.9, beta2=0.999, eps=1e-8,
                 weight_decay=1e-5, decay_names=None):
        self.params = params
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.decay_names = set(decay_names) if decay_names is not None else {
            name for name in params if name.endswith(".W")
        }
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict, lr: float):
        for g in grads.values():
            if not np.all(np.isfinite(g)):
                raise NumericError("non-finite gradient; optimizer step aborted")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = np.asarray(grads[name])
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            mhat = self.m[name] / bc1
            vhat = self.v[name] / bc2
            if name in self.decay_names and self.weight_decay > 0:
                p -= lr * self.weight_decay * p
            p -= lr * mhat / (np.sqrt(vhat) + self.eps)


LR_FLOOR = 1e-8

SCHEDULE_VARIANTS = ("step_decay", "warmup", "cosine", "plateau")


@dataclass
class LrSchedule:
    """Learning-rate schedule.

    Composition order when several mechanisms are active: warm-up factor,
    then the variant's decay (cosine or halving-by-epoch), then the plateau
    multiplier maintained by a :class:`PlateauTracker`.
    """

    variant: str = "step_decay"
    base_lr: float = 1e-4
    decay_steps: int = 100
    t_warmup: int = 1000
    total_steps: int = 0
    apply_warmup: bool = False

    def __post_init__(self):
        if self.variant not in SCHEDULE_VARIANTS:
            raise ConfigError(f"unknown schedule variant {self.variant!r}")
        if self.variant == "cosine" and self.total_steps <= 0:
            raise ConfigError("cosine schedule requires total_steps > 0")

    def warmup_factor(self, step: int) -> float:
        if self.t_warmup <= 0:
            return 1.0
        return min(1.0, step / self.t_warmup)

    def lr_at(self, step: int, epoch: int = 0, plateau_mult: float = 1.0) -> float:
        if step < 0:
            raise ConfigError("step must be >= 0")
        if self.variant == "warmup":
            lr = self.base_lr * self.warmup_factor(step)
        elif self.variant == "step_decay":
            lr = self.base_lr * 0.5 ** (epoch // self.decay_steps)
            if self.apply_warmup:
                lr *= self.warmup_factor(step)
        elif self.variant == "cosine":
            lr = self.base_lr * (1.0 + math.cos(math.pi * step / self.total_steps)) / 2.0
            if self.apply_warmup:
                lr *= self.warmup_factor(step)
        else:  # plateau: base rate scaled only by the tracker's multiplier
            lr = self.base_lr
        lr *= plateau_mult
        return max(lr, LR_FLOOR)


@dataclass
class PlateauTracker:
    """Halves its multiplier when the monitored loss stops improving."""

    patience: int = 10
    min_delta: float = 1e-4
    factor: float = 0.5
    best: float = field(default=math.inf, init=False)
    wait: int = field(default=0, init=False)
    multiplier: float = field(default=1.0, init=False)

    def observe(self, monitored: float) -> float:
        if monitored < self.best - self.min_delta:
            self.best = monitored
            self.wait = 0
        else:
            self.wait += 1
            if self.wait > self.patience:
                self.multiplier *= self.factor
                self.wait = 0
        return self.multiplier
