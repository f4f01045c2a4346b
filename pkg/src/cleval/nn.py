"""Self-contained MLP training substrate: forward pass, analytic
gradients for cross-entropy + optional distillation + weight decay,
learning-rate schedules, and a seeded minibatch SGD epoch.

Layers are affine with ReLU between them and a linear final layer.
Weight matrices are stored (fan_in, fan_out) so a batch flows as
``X @ W + b``. All operations are deterministic given their seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import Decimal

import numpy as np

from .errors import ContractViolation, DivergenceError
from .seeding import rng_from


@dataclass
class MlpParams:
    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.layer_dims) < 2:
            raise ContractViolation("an MLP needs at least one layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_dims[i], self.layer_dims[i + 1]):
                raise ContractViolation(f"layer {i} weight shape {w.shape} mismatch")
            if b.shape != (self.layer_dims[i + 1],):
                raise ContractViolation(f"layer {i} bias shape {b.shape} mismatch")

    @property
    def in_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]

    def clone(self) -> "MlpParams":
        return MlpParams(
            layer_dims=self.layer_dims,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def count(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


def init_mlp(layer_dims: list[int] | tuple[int, ...], seed: int) -> MlpParams:
    """Seeded uniform init in +-sqrt(6 / (fan_in + fan_out)); zero biases."""
    rng = rng_from(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(tuple(int(d) for d in layer_dims), weights, biases)


def forward(params: MlpParams, batch: np.ndarray) -> np.ndarray:
    """Logits for a batch; ReLU between layers, linear final layer."""
    logits, _ = forward_cached(params, batch)
    return logits


def forward_cached(
    params: MlpParams, batch: np.ndarray
) -> tuple[np.ndarray, list[tuple[np.ndarray, np.ndarray]]]:
    """Forward pass keeping (input, pre-activation) per layer for backprop."""
    if batch.ndim != 2 or batch.shape[1] != params.in_dim:
        raise ContractViolation(
            f"batch width {batch.shape} incompatible with input dim {params.in_dim}"
        )
    a = batch
    caches = []
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w + b
        caches.append((a, z))
        a = z if i == last else np.maximum(z, 0.0)
    return a, caches


def backward_from_logits(
    params: MlpParams,
    caches: list[tuple[np.ndarray, np.ndarray]],
    d_logits: np.ndarray,
    weight_decay: float = 0.0,
) -> tuple[Gradients, np.ndarray]:
    """Backpropagate a gradient on the logits through the network.

    Returns parameter gradients (weight decay folded into the weight
    terms) and the gradient with respect to the batch input, which lets
    composite networks chain through sub-networks.
    """
    dw = [np.empty(0)] * len(params.weights)
    db = [np.empty(0)] * len(params.biases)
    dz = d_logits
    for i in range(len(params.weights) - 1, -1, -1):
        a_prev, _ = caches[i]
        dw[i] = a_prev.T @ dz
        if weight_decay:
            dw[i] = dw[i] + weight_decay * params.weights[i]
        db[i] = dz.sum(axis=0)
        da = dz @ params.weights[i].T
        if i > 0:
            _, z_prev = caches[i - 1]
            dz = da * (z_prev > 0.0)
        else:
            dz = da
    return Gradients(weights=dw, biases=db), dz


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient on the logits."""
    n = logits.shape[0]
    logp = log_softmax(logits)
    loss = -float(logp[np.arange(n), labels].mean())
    d_logits = softmax(logits)
    d_logits[np.arange(n), labels] -= 1.0
    return loss, d_logits / n


def distillation(
    student_logits: np.ndarray,
    teacher_logits: np.ndarray,
    temperature: float,
    lam: float,
) -> tuple[float, np.ndarray]:
    """lam * T^2 * KL(softmax(teacher/T) || softmax(student/T)).

    The teacher may cover fewer classes than the student; distillation
    is computed over the teacher's class prefix. Returns the loss term
    and its gradient on the full student logits.
    """
    if temperature <= 0:
        raise ContractViolation("distillation temperature must be > 0")
    c_old = teacher_logits.shape[1]
    if c_old > student_logits.shape[1]:
        raise ContractViolation("teacher has more outputs than the student")
    n = student_logits.shape[0]
    log_q = log_softmax(student_logits[:, :c_old] / temperature)
    log_p = log_softmax(teacher_logits / temperature)
    p = np.exp(log_p)
    kl = float((p * (log_p - log_q)).sum(axis=1).mean())
    loss = lam * temperature**2 * kl
    d_student = np.zeros_like(student_logits)
    d_student[:, :c_old] = lam * temperature * (np.exp(log_q) - p) / n
    return loss, d_student


def loss_and_grad(
    params: MlpParams,
    batch: np.ndarray,
    labels: np.ndarray,
    kd_ref: tuple[np.ndarray, float, float] | None = None,
    weight_decay: float = 0.0,
) -> tuple[float, Gradients]:
    """Cross-entropy (+ optional distillation term, + L2 weight decay on
    weight matrices) and its exact analytic gradient.

    Raises DivergenceError if the loss is non-finite; that signal is the
    learners' cue to mark the trial diverged.
    """
    logits, caches = forward_cached(params, batch)
    loss, d_logits = cross_entropy(logits, labels)
    if kd_ref is not None:
        teacher_logits, temperature, lam = kd_ref
        if lam > 0.0:
            kd_loss, kd_grad = distillation(logits, teacher_logits, temperature, lam)
            loss += kd_loss
            d_logits = d_logits + kd_grad
    if weight_decay:
        loss += 0.5 * weight_decay * sum(float((w * w).sum()) for w in params.weights)
    if not np.isfinite(loss):
        raise DivergenceError(f"loss became {loss}")
    grads, _ = backward_from_logits(params, caches, d_logits, weight_decay)
    return loss, grads


@dataclass(frozen=True)
class Schedule:
    kind: str  # "step" | "cosine"
    base_lr: float
    epochs: int
    milestones: tuple[int, ...] = ()
    decay: float = 0.1

    def __post_init__(self):
        if self.kind not in ("step", "cosine"):
            raise ContractViolation(f"unknown schedule kind '{self.kind}'")
        if not self.base_lr > 0:
            raise ContractViolation("base_lr must be > 0")
        if self.epochs < 1:
            raise ContractViolation("epochs must be >= 1")
        if self.kind == "step":
            if not 0.0 < self.decay <= 1.0:
                raise ContractViolation("decay must lie in (0, 1]")
            if list(self.milestones) != sorted(set(self.milestones)):
                raise ContractViolation("milestones must be strictly increasing")
            if self.milestones and self.milestones[-1] >= self.epochs:
                raise ContractViolation("milestones must be < epochs")


def lr_at(schedule: Schedule, epoch: int) -> float:
    """Learning rate for a 0-based epoch index."""
    if not 0 <= epoch < schedule.epochs:
        raise ContractViolation(
            f"epoch {epoch} outside schedule range 0..{schedule.epochs - 1}"
        )
    if schedule.kind == "step":
        k = sum(1 for m in schedule.milestones if m <= epoch)
        # decay accumulated in decimal so plateau values land exactly on
        # the decimal numbers the configuration spells out
        return float(Decimal(str(schedule.base_lr)) * Decimal(str(schedule.decay)) ** k)
    return schedule.base_lr * 0.5 * (1.0 + math.cos(math.pi * epoch / schedule.epochs))


@dataclass(frozen=True)
class LossConfig:
    weight_decay: float = 0.0
    kd_teacher: MlpParams | None = None
    kd_temperature: float = 1.0
    kd_lambda: float = 0.0


def sgd_step(params: MlpParams, grads: Gradients, lr: float) -> MlpParams:
    return MlpParams(
        layer_dims=params.layer_dims,
        weights=[w - lr * g for w, g in zip(params.weights, grads.weights)],
        biases=[b - lr * g for b, g in zip(params.biases, grads.biases)],
    )


def sgd_epoch(
    params: MlpParams,
    features: np.ndarray,
    labels: np.ndarray,
    lr: float,
    batch_size: int,
    rng_seed: int,
    loss_config: LossConfig = LossConfig(),
) -> tuple[MlpParams, float]:
    """One pass of minibatch SGD over a seeded shuffle of the examples.

    Propagates DivergenceError from any batch whose loss is non-finite.
    """
    if batch_size < 1:
        raise ContractViolation("batch_size must be >= 1")
    n = features.shape[0]
    rng = rng_from(rng_seed)
    order = rng.permutation(n)
    losses = []
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            xb, yb = features[idx], labels[idx]
            kd_ref = None
            if loss_config.kd_teacher is not None and loss_config.kd_lambda > 0.0:
                teacher_logits = forward(loss_config.kd_teacher, xb)
                kd_ref = (teacher_logits, loss_config.kd_temperature, loss_config.kd_lambda)
            loss, grads = loss_and_grad(
                params, xb, yb, kd_ref=kd_ref, weight_decay=loss_config.weight_decay
            )
            params = sgd_step(params, grads, lr)
            losses.append(loss)
    return params, float(np.mean(losses))
