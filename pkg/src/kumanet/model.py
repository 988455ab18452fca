"""One-hidden-layer softmax classifier.

Parameters follow the usual column-vector notation, ``p(y | v) =
softmax(U f(W v + c) + d)`` with ``W`` of shape (M, D) and ``U`` of shape
(K, M). Batches are stored as rows, so the code computes ``x @ W.T + c``.
The loss is the mean cross-entropy over the batch and all gradients are
gradients of that mean.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import linalg as la
from .activations import (
    ActivationKind,
    ForwardTrace,
    Mode,
    activation_from_tag,
    apply_backward,
    apply_forward,
)
from .rng import Rng

__all__ = [
    "MlpParams",
    "Gradients",
    "Batch",
    "init_params",
    "forward",
    "softmax",
    "cross_entropy",
    "backward",
    "predict",
    "save_checkpoint",
    "load_checkpoint",
    "CheckpointError",
]

PROB_FLOOR = 1e-300


@dataclass
class MlpParams:
    W: np.ndarray
    c: np.ndarray
    U: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        M, D = self.W.shape
        K, M2 = self.U.shape
        if M2 != M or self.c.shape != (M,) or self.d.shape != (K,):
            raise la.ShapeError(
                f"inconsistent parameter shapes W{self.W.shape} c{self.c.shape} "
                f"U{self.U.shape} d{self.d.shape}"
            )

    @property
    def dims(self) -> tuple[int, int, int]:
        """``(D, M, K)``."""
        return self.W.shape[1], self.W.shape[0], self.U.shape[0]

    def copy(self) -> MlpParams:
        return MlpParams(self.W.copy(), self.c.copy(), self.U.copy(), self.d.copy())

    def arrays(self) -> tuple[np.ndarray, ...]:
        return tuple(getattr(self, f.name) for f in fields(self))

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())


@dataclass
class Gradients:
    dW: np.ndarray
    dc: np.ndarray
    dU: np.ndarray
    dd: np.ndarray

    def arrays(self) -> tuple[np.ndarray, ...]:
        return (self.dW, self.dc, self.dU, self.dd)


@dataclass
class Batch:
    x: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.x.ndim != 2 or self.x.shape[0] != self.labels.shape[0]:
            raise la.ShapeError(f"batch has {self.x.shape} inputs but {self.labels.shape[0]} labels")

    def __len__(self) -> int:
        return self.x.shape[0]


def init_params(D: int, M: int, K: int, rng: Rng) -> MlpParams:
    """Glorot-uniform weights (W first, then U, row-major), zero biases."""
    if min(D, M, K) < 1:
        raise ValueError(f"layer sizes must be positive, got D={D} M={M} K={K}")
    r_w = math.sqrt(6.0 / (D + M))
    r_u = math.sqrt(6.0 / (M + K))
    W = (2.0 * rng.uniform((M, D)) - 1.0) * r_w
    U = (2.0 * rng.uniform((K, M)) - 1.0) * r_u
    return MlpParams(W, np.zeros(M), U, np.zeros(K))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(
    params: MlpParams,
    x: np.ndarray,
    kind: ActivationKind,
    rng: Optional[Rng] = None,
    mode: Mode = Mode.EVAL,
) -> tuple[ForwardTrace, np.ndarray]:
    """Return the hidden-layer trace and the (batch, K) class probabilities."""
    pre = la.add_row_broadcast(la.matmul_transpose_b(x, params.W), params.c)
    hidden = apply_forward(kind, pre, rng, mode)
    logits = la.add_row_broadcast(la.matmul_transpose_b(hidden.act, params.U), params.d)
    return hidden, softmax(logits)


def cross_entropy(probs: np.ndarray, labels: Sequence[int]) -> float:
    """Mean negative log-probability of the true labels."""
    labels = np.asarray(labels, dtype=np.int64)
    picked = probs[np.arange(labels.shape[0]), labels]
    return float(-np.mean(np.log(np.maximum(picked, PROB_FLOOR))))


def _one_hot(labels: np.ndarray, K: int) -> np.ndarray:
    t = np.zeros((labels.shape[0], K))
    t[np.arange(labels.shape[0]), labels] = 1.0
    return t


def backward(
    params: MlpParams,
    batch: Batch,
    hidden: ForwardTrace,
    probs: np.ndarray,
    kind: ActivationKind,
) -> Gradients:
    n = len(batch)
    if probs.shape != (n, params.U.shape[0]) or hidden.act.shape != (n, params.W.shape[0]):
        raise ValueError(
            f"trace does not match batch: probs {probs.shape}, hidden {hidden.act.shape}, batch of {n}"
        )
    delta_out = (probs - _one_hot(batch.labels, probs.shape[1])) / n
    dU = la.matmul_transpose_a(delta_out, hidden.act)
    dd = la.col_sums(delta_out)
    delta_hid = la.hadamard(la.matmul(delta_out, params.U), apply_backward(kind, hidden))
    dW = la.matmul_transpose_a(delta_hid, batch.x)
    dc = la.col_sums(delta_hid)
    return Gradients(dW, dc, dU, dd)


def predict(probs: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. ties go to the lowest class
    return np.argmax(probs, axis=1)


# -- checkpoints --------------------------------------------------------------
#
# Layout (little-endian):
#   b"KMLP" | version u32 | D u32 | M u32 | K u32 | activation tag u32 |
#   p1 f64 | p2 f64 | W (M*D f64) | c (M f64) | U (K*M f64) | d (K f64)
# p1/p2 are (noise_var, 0) for Noisy ReLU, (a, b) for Kumaraswamy, else zeros.

MAGIC = b"KMLP"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIIdd")


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params: MlpParams, kind: ActivationKind) -> None:
    D, M, K = params.dims
    p1, p2 = kind.params
    header = _HEADER.pack(MAGIC, VERSION, D, M, K, kind.tag, p1, p2)
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in params.arrays())
    Path(path).write_bytes(header + body)


def load_checkpoint(path) -> tuple[MlpParams, ActivationKind]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CheckpointError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, D, M, K, tag, p1, p2 = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    sizes = [(M, D), (M,), (K, M), (K,)]
    expected = _HEADER.size + 8 * sum(int(np.prod(s)) for s in sizes)
    if len(raw) != expected:
        raise CheckpointError(f"{path}: expected {expected} bytes, found {len(raw)}")
    arrays, offset = [], _HEADER.size
    for shape in sizes:
        count = int(np.prod(shape))
        arrays.append(np.frombuffer(raw, dtype="<f8", count=count, offset=offset).astype(np.float64).reshape(shape))
        offset += 8 * count
    return MlpParams(*arrays), activation_from_tag(tag, p1, p2)
