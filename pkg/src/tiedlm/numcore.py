"""Deterministic dense numeric kernels shared by every model in the package.

All operations work on plain numpy arrays: 2-D "matrices" for parameters and
1-D vectors for scores/probabilities. Everything here is pure except
``optimizer_step``, which updates the parameter dict in place (documented).
Correctness tests run these ops at 64-bit precision; training code may feed
32-bit arrays through the same paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

# -log(0) guard: probabilities are floored here before taking the log, so a
# zero target probability yields a large finite loss instead of inf.
PROB_CLAMP = 1e-12


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of two 2-D arrays, validating the inner dimension."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got shapes {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}: "
            f"inner dimensions {a.shape[1]} != {b.shape[0]}"
        )
    return a @ b


def softmax(logits) -> np.ndarray:
    """Stable softmax of a 1-D score vector: exp(l - max(l)) normalized to sum 1."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1 or z.size == 0:
        raise ValueError(f"softmax expects a non-empty 1-D vector, got shape {z.shape}")
    e = np.exp(z - z.max())
    return e / e.sum()


def xent_loss(p, target: int) -> float:
    """Cross-entropy -log p[target] of a probability vector.

    p[target] is floored at PROB_CLAMP so a zero probability gives a large
    finite loss rather than inf.
    """
    p = np.asarray(p)
    if not 0 <= target < p.shape[0]:
        raise ValueError(f"target {target} out of range for {p.shape[0]} classes")
    return float(-np.log(max(float(p[target]), PROB_CLAMP)))


def softmax_xent_grad(logits, target: int) -> np.ndarray:
    """Gradient of xent_loss(softmax(logits), target) w.r.t. the logits: p - onehot."""
    p = softmax(logits)
    if not 0 <= target < p.shape[0]:
        raise ValueError(f"target {target} out of range for {p.shape[0]} classes")
    g = p.copy()
    g[target] -= 1.0
    return g


def finite_diff(f: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function: (f(x+eps) - f(x-eps)) / 2eps per entry.

    The gradient oracle used by every analytic-backward test in the package.
    f must be deterministic and must not mutate its argument.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    work = x.copy()
    flat = work.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(work)
        flat[i] = orig - eps
        lo = f(work)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * eps)
    return grad


def frobenius_norm(m: np.ndarray) -> float:
    """Square root of the sum of squared entries."""
    return float(np.sqrt(np.sum(np.square(np.asarray(m, dtype=np.float64)))))


def global_grad_norm(grads: dict) -> float:
    """Joint 2-norm of a dict of gradient arrays, as used for global clipping."""
    total = 0.0
    for g in grads.values():
        total += float(np.sum(np.square(g, dtype=np.float64)))
    return float(np.sqrt(total))


@dataclass
class SGD:
    """Plain SGD with optional global-norm clipping and a step lr-decay schedule.

    After epoch ``decay_start`` the learning rate is multiplied by
    ``decay_factor`` once per subsequent epoch (epochs are 1-based).
    """

    lr: float
    clip_norm: float | None = None
    decay_start: int | None = None
    decay_factor: float = 1.0

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError(f"learning rate must be >= 0, got {self.lr}")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError(f"clip_norm must be positive, got {self.clip_norm}")

    def lr_at(self, epoch: int) -> float:
        if self.decay_start is None or epoch <= self.decay_start:
            return self.lr
        return self.lr * self.decay_factor ** (epoch - self.decay_start)


@dataclass
class Adadelta:
    """Adadelta with running averages of squared gradients and squared updates.

    rho/eps defaults follow the optimizer's original recommendation; lr is a
    plain multiplier on the computed delta (1.0 reproduces the classic rule).
    """

    lr: float = 1.0
    rho: float = 0.95
    eps: float = 1e-6
    clip_norm: float | None = None
    acc_grad: dict = field(default_factory=dict, repr=False)
    acc_delta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError(f"learning rate must be >= 0, got {self.lr}")
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must be in (0, 1), got {self.rho}")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError(f"clip_norm must be positive, got {self.clip_norm}")


Optimizer = Union[SGD, Adadelta]


def optimizer_step(opt: Optimizer, params: dict, grads: dict, lr: float | None = None) -> dict:
    """Apply one optimizer update to ``params`` in place and return it.

    params and grads are dicts of same-shaped arrays keyed by parameter name.
    Clipping, when configured, rescales by the joint norm across all grads.
    ``lr`` overrides the optimizer's stored rate for this step (used by
    epoch-level schedules).
    """
    for name, g in grads.items():
        if name not in params:
            raise ShapeError(f"gradient for unknown parameter {name!r}")
        if np.shape(g) != np.shape(params[name]):
            raise ShapeError(
                f"gradient shape {np.shape(g)} does not match parameter "
                f"{name!r} shape {np.shape(params[name])}"
            )
    step_lr = opt.lr if lr is None else lr
    if opt.clip_norm is not None:
        norm = global_grad_norm(grads)
        if norm > opt.clip_norm:
            scale = opt.clip_norm / norm
            grads = {k: g * scale for k, g in grads.items()}
    if isinstance(opt, SGD):
        for name, g in grads.items():
            params[name] -= step_lr * g
        return params
    for name, g in grads.items():
        if name not in opt.acc_grad:
            opt.acc_grad[name] = np.zeros_like(params[name])
            opt.acc_delta[name] = np.zeros_like(params[name])
        ag = opt.acc_grad[name]
        ad = opt.acc_delta[name]
        ag *= opt.rho
        ag += (1.0 - opt.rho) * np.square(g)
        delta = np.sqrt(ad + opt.eps) / np.sqrt(ag + opt.eps) * g
        ad *= opt.rho
        ad += (1.0 - opt.rho) * np.square(delta)
        params[name] -= step_lr * delta
    return params
