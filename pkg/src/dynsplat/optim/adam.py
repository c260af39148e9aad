"""Adam updates over named, optionally reparameterized parameter groups.

Each group owns a flat vector of raw values; constrained quantities
(scales, radii, opacities) live in the raw space and are mapped through
`exp` or `sigmoid` on read, so no projection step is ever needed.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import OptimError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-15


@dataclass
class ParamGroup:
    """A named flat parameter vector with its learning-rate schedule.

    transform: 'identity', 'exp' (positive quantities) or 'sigmoid'
    (quantities in (0, 1)). `value` always stores the unconstrained raw
    numbers; `constrained()` applies the transform.
    """

    name: str
    value: np.ndarray
    lr: float
    lr_final: float = None
    lr_max_steps: int = None
    transform: str = "identity"
    shape: tuple = None

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=float)
        if self.shape is None:
            self.shape = self.value.shape
        self.value = self.value.reshape(-1)
        if self.transform not in ("identity", "exp", "sigmoid"):
            raise OptimError(f"unknown transform {self.transform!r}")

    def learning_rate(self, step: int) -> float:
        """Exponential interpolation from lr to lr_final over lr_max_steps."""
        if self.lr_final is None or self.lr_max_steps is None:
            return self.lr
        t = min(max(step / self.lr_max_steps, 0.0), 1.0)
        return float(self.lr * (self.lr_final / self.lr) ** t)

    def constrained(self) -> np.ndarray:
        raw = self.value.reshape(self.shape)
        if self.transform == "exp":
            return np.exp(raw)
        if self.transform == "sigmoid":
            return 1.0 / (1.0 + np.exp(-raw))
        return raw.copy()

    def set_constrained(self, target: np.ndarray) -> None:
        """Replace the raw vector so that constrained() == target."""
        target = np.asarray(target, dtype=float)
        if self.transform == "exp":
            raw = np.log(target)
        elif self.transform == "sigmoid":
            eps = 1e-12
            t = np.clip(target, eps, 1.0 - eps)
            raw = np.log(t) - np.log1p(-t)
        else:
            raw = target
        self.shape = target.shape
        self.value = raw.reshape(-1).astype(float)

    def chain_grad(self, grad_constrained: np.ndarray) -> np.ndarray:
        """Pull a gradient on constrained values back to the raw vector."""
        g = np.asarray(grad_constrained, dtype=float).reshape(-1)
        if self.transform == "exp":
            return g * np.exp(self.value)
        if self.transform == "sigmoid":
            sig = 1.0 / (1.0 + np.exp(-self.value))
            return g * sig * (1.0 - sig)
        return g


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def like(cls, group: ParamGroup) -> "AdamState":
        return cls(m=np.zeros_like(group.value), v=np.zeros_like(group.value))


def adam_step(group: ParamGroup, grad: np.ndarray, state: AdamState, step: int = None) -> None:
    """One Adam update on the group's raw vector, in place.

    `grad` is with respect to the raw (unconstrained) values and must be
    flat or match the group shape. Raises on non-finite gradients so a bad
    step never corrupts the parameters silently.
    """
    grad = np.asarray(grad, dtype=float).reshape(-1)
    if grad.shape != group.value.shape:
        raise OptimError(
            f"gradient shape {grad.shape} does not match group "
            f"{group.name!r} ({group.value.shape})"
        )
    if not np.isfinite(grad).all():
        raise OptimError(f"non-finite gradient in parameter group {group.name!r}")
    state.t += 1
    lr = group.learning_rate(state.t if step is None else step)
    state.m = ADAM_BETA1 * state.m + (1.0 - ADAM_BETA1) * grad
    state.v = ADAM_BETA2 * state.v + (1.0 - ADAM_BETA2) * grad**2
    m_hat = state.m / (1.0 - ADAM_BETA1**state.t)
    v_hat = state.v / (1.0 - ADAM_BETA2**state.t)
    group.value -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


def cosine_lr(base: float, step: int, max_steps: int, floor_ratio: float = 0.01) -> float:
    """Cosine decay from base to floor_ratio*base over max_steps."""
    t = min(max(step / max_steps, 0.0), 1.0)
    lo = base * floor_ratio
    return float(lo + 0.5 * (base - lo) * (1.0 + math.cos(math.pi * t)))
