"""Synthetic per-token classification task and a plain SGD trainer.

The task: each token's feature vector is a class template plus Gaussian
noise, labels are the template indices. It exercises every layer of an
encoder, converges in seconds at desk scale, and is fully determined by
its seeds. The trainer is intentionally bare (fixed batch schedule, no
momentum) so two runs with the same seeds produce bit-identical curves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import (
    encoder_backward,
    encoder_grad_blocks,
    encoder_param_blocks,
    linear_backward,
)
from .streaming import EncoderModel, offline_forward
from .tensor import Array, softmax_lastdim


@dataclass(frozen=True)
class ToyTask:
    seed: int = 7
    num_classes: int = 4
    seq_len: int = 12
    feature_dim: int = 16
    noise: float = 0.3
    train_sequences: int = 64
    eval_sequences: int = 16


@dataclass
class ToyData:
    templates: Array          # [K, feature_dim]
    train_frames: Array       # [M, T, feature_dim]
    train_labels: Array       # [M, T] int
    eval_frames: Array
    eval_labels: Array


def make_toy_data(task: ToyTask, dtype=np.float64) -> ToyData:
    rng = np.random.default_rng(task.seed)
    templates = rng.normal(0.0, 1.0, size=(task.num_classes, task.feature_dim))

    def draw(count):
        labels = rng.integers(0, task.num_classes, size=(count, task.seq_len))
        noise = rng.normal(0.0, task.noise, size=(count, task.seq_len, task.feature_dim))
        return (templates[labels] + noise).astype(dtype), labels

    train_frames, train_labels = draw(task.train_sequences)
    eval_frames, eval_labels = draw(task.eval_sequences)
    return ToyData(templates.astype(dtype), train_frames, train_labels,
                   eval_frames, eval_labels)


@dataclass
class ClassifierHead:
    w: Array  # [D, K]
    b: Array  # [K]


def init_head(width: int, num_classes: int, seed: int, dtype=np.float64) -> ClassifierHead:
    rng = np.random.default_rng(seed)
    limit = np.sqrt(6.0 / (width + num_classes))
    return ClassifierHead(
        w=rng.uniform(-limit, limit, size=(width, num_classes)).astype(dtype),
        b=np.zeros(num_classes, dtype=dtype),
    )


def token_logits(model: EncoderModel, head: ClassifierHead, frames: Array) -> Array:
    return offline_forward(model, frames) @ head.w + head.b


def cross_entropy(logits: Array, labels: Array):
    """Mean per-token CE loss and its gradient w.r.t. the logits."""
    p = softmax_lastdim(logits)
    t = labels.shape[0]
    loss = -np.mean(np.log(p[np.arange(t), labels] + 1e-300))
    dlogits = p.copy()
    dlogits[np.arange(t), labels] -= 1.0
    return loss, dlogits / t


def evaluate(model: EncoderModel, head: ClassifierHead, frames: Array, labels: Array):
    """Mean per-token CE loss and accuracy over a set of sequences."""
    loss_sum = 0.0
    correct = total = 0
    for seq, lab in zip(frames, labels):
        logits = token_logits(model, head, seq)
        loss, _ = cross_entropy(logits, lab)
        loss_sum += loss
        correct += int(np.sum(np.argmax(logits, axis=-1) == lab))
        total += lab.size
    return loss_sum / len(labels), correct / total


@dataclass
class TrainResult:
    """Per-step (after-update) loss/accuracy on the held-out split.

    Row 0 is the untrained model, so `steps` training updates yield
    steps + 1 rows.
    """

    steps: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    accuracies: list[float] = field(default_factory=list)
    diverged_at: int | None = None

    @property
    def final_accuracy(self) -> float:
        return self.accuracies[-1] if self.accuracies else 0.0

    @property
    def final_loss(self) -> float:
        return self.losses[-1] if self.losses else float("nan")


def train_toy(
    model: EncoderModel,
    head: ClassifierHead,
    task: ToyTask,
    steps: int = 500,
    lr: float = 0.05,
    batch_size: int = 8,
) -> TrainResult:
    """Plain SGD on the toy task; deterministic given the task seed.

    The batch schedule is fixed: update s consumes training sequences
    (s*batch_size + i) mod train_sequences. A non-finite batch loss stops
    training and records the offending step in `diverged_at`.
    """
    data = make_toy_data(task, dtype=model.params.in_proj_w.dtype)
    if data.train_frames.shape[2] != model.spec.feature_dim:
        raise ValueError(
            f"task feature_dim {data.train_frames.shape[2]} != "
            f"encoder feature_dim {model.spec.feature_dim}"
        )
    result = TrainResult()
    n_train = data.train_frames.shape[0]

    loss, acc = evaluate(model, head, data.eval_frames, data.eval_labels)
    result.steps.append(0)
    result.losses.append(float(loss))
    result.accuracies.append(acc)

    for step in range(steps):
        idx = [(step * batch_size + i) % n_train for i in range(batch_size)]

        batch_loss = 0.0
        head_dw = np.zeros_like(head.w)
        head_db = np.zeros_like(head.b)
        enc_grads_sum: dict[str, Array] | None = None
        for j in idx:
            frames, labels = data.train_frames[j], data.train_labels[j]
            enc_out = offline_forward(model, frames)
            logits = enc_out @ head.w + head.b
            loss, dlogits = cross_entropy(logits, labels)
            batch_loss += loss

            d_enc_out, dw, db = linear_backward(enc_out, head.w, dlogits)
            head_dw += dw
            head_db += db
            _, enc_grads = encoder_backward(model, frames, d_enc_out)
            g_blocks = encoder_grad_blocks(model, enc_grads)
            if enc_grads_sum is None:
                enc_grads_sum = g_blocks
            else:
                for name in enc_grads_sum:
                    enc_grads_sum[name] = enc_grads_sum[name] + g_blocks[name]

        if not np.isfinite(batch_loss):
            result.diverged_at = step
            break

        scale = lr / len(idx)
        head.w -= scale * head_dw
        head.b -= scale * head_db
        p_blocks = encoder_param_blocks(model)
        for name, grad in enc_grads_sum.items():
            p_blocks[name] -= scale * grad

        loss, acc = evaluate(model, head, data.eval_frames, data.eval_labels)
        result.steps.append(step + 1)
        result.losses.append(float(loss))
        result.accuracies.append(acc)

    return result
