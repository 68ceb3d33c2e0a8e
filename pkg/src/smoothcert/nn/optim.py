"""Optimizers with epoch-indexed schedules.

Supported kinds: plain SGD with momentum and factor-10 learning-rate
drops at configured epochs, Adam, and an Adam phase followed by an SGD
phase (switching at a configured epoch, with the SGD drops counted from
the switch).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from .model import Model


@dataclass
class OptimizerSpec:
    kind: str = "adam"  # "sgd" | "adam" | "adam_then_sgd"
    lr: float = 1e-3
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    drop_epochs: tuple[int, ...] = ()  # epochs at which SGD lr divides by 10
    sgd_lr: float = 1e-4  # SGD-phase lr for adam_then_sgd
    switch_epoch: int = 0  # adam -> sgd switch for adam_then_sgd

    def __post_init__(self):
        if self.kind not in ("sgd", "adam", "adam_then_sgd"):
            raise ConfigError(f"unknown optimizer kind: {self.kind!r}")
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")

    @classmethod
    def from_dict(cls, data: dict) -> "OptimizerSpec":
        extra = set(data) - {f.name for f in cls.__dataclass_fields__.values()}
        if extra:
            raise ConfigError(f"unknown optimizer fields: {sorted(extra)}")
        if "drop_epochs" in data:
            data = dict(data, drop_epochs=tuple(data["drop_epochs"]))
        return cls(**data)


@dataclass
class OptimizerState:
    spec: OptimizerSpec
    epoch: int = 0
    step_count: int = 0
    adam_steps: int = 0
    slot1: dict[str, np.ndarray] = field(default_factory=dict)  # momentum / first moment
    slot2: dict[str, np.ndarray] = field(default_factory=dict)  # second moment

    def set_epoch(self, epoch: int) -> None:
        self.epoch = int(epoch)

    def _in_sgd_phase(self) -> bool:
        return self.spec.kind == "sgd" or (
            self.spec.kind == "adam_then_sgd" and self.epoch >= self.spec.switch_epoch
        )

    def current_lr(self) -> float:
        if not self._in_sgd_phase():
            return self.spec.lr
        if self.spec.kind == "sgd":
            lr, start = self.spec.lr, 0
        else:
            lr, start = self.spec.sgd_lr, self.spec.switch_epoch
        for drop in self.spec.drop_epochs:
            if self.epoch - start >= drop:
                lr /= 10.0
        return lr

    def _slot(self, slot: dict[str, np.ndarray], name: str, like: np.ndarray) -> np.ndarray:
        if name not in slot:
            slot[name] = np.zeros_like(like)
        return slot[name]

    def step(self, model: Model) -> None:
        """Apply one update from model.grads to model.params, then zero the grads."""
        self.step_count += 1
        lr = self.current_lr()
        sgd = self._in_sgd_phase()
        if not sgd:
            self.adam_steps += 1
        for name, param in model.params.items():
            g = model.grads[name]
            if sgd:
                buf = self._slot(self.slot1, "sgd." + name, param)
                buf *= self.spec.momentum
                buf += g
                param -= lr * buf
            else:
                m = self._slot(self.slot1, "adam." + name, param)
                v = self._slot(self.slot2, "adam." + name, param)
                t = self.adam_steps
                m *= self.spec.beta1
                m += (1.0 - self.spec.beta1) * g
                v *= self.spec.beta2
                v += (1.0 - self.spec.beta2) * g * g
                m_hat = m / (1.0 - self.spec.beta1**t)
                v_hat = v / (1.0 - self.spec.beta2**t)
                param -= lr * m_hat / (np.sqrt(v_hat) + self.spec.eps)
        model.zero_grads()


def make_optimizer(spec: OptimizerSpec | dict | None) -> OptimizerState:
    if spec is None:
        spec = OptimizerSpec()
    elif isinstance(spec, dict):
        spec = OptimizerSpec.from_dict(spec)
    return OptimizerState(spec=spec)
