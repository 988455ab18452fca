"""Hidden-unit nonlinearities and their derivatives.

The Kumaraswamy unit pushes a sigmoid through the Kumaraswamy CDF,

    K(x) = 1 - (1 - sigmoid(x)**a)**b,

and its derivative is the generalised Kumaraswamy density with the sigmoid
as base distribution,

    K'(x) = a * b * sigmoid'(x) * sigmoid(x)**(a - 1) * (1 - sigmoid(x)**a)**(b - 1).

Both are evaluated from ``log sigmoid(x) = -softplus(-x)`` so that large
``|x|`` neither overflows nor turns into NaN. With integer shape parameters,
``b`` independent copies of a unit made of ``a`` independent sigmoid
elements fire together with probability ``K(x)``.

All scalar functions accept floats or arrays and broadcast like numpy ufuncs.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.special import ndtr

from .rng import Rng

__all__ = [
    "Mode",
    "Sigmoid",
    "Relu",
    "NoisyRelu",
    "Kumaraswamy",
    "ActivationKind",
    "ForwardTrace",
    "parse_activation",
    "activation_from_tag",
    "sigmoid",
    "sigmoid_deriv",
    "log_sigmoid",
    "relu",
    "relu_deriv",
    "noisy_relu_sample",
    "noisy_relu_mean",
    "kumaraswamy",
    "kumaraswamy_deriv",
    "apply_forward",
    "apply_backward",
]

_LN2 = math.log(2.0)


class Mode(enum.Enum):
    TRAIN = "train"
    EVAL = "eval"


@dataclass(frozen=True)
class Sigmoid:
    tag = 0

    @property
    def name(self) -> str:
        return "sigmoid"

    @property
    def params(self) -> tuple[float, float]:
        return (0.0, 0.0)


@dataclass(frozen=True)
class Relu:
    tag = 1

    @property
    def name(self) -> str:
        return "relu"

    @property
    def params(self) -> tuple[float, float]:
        return (0.0, 0.0)


@dataclass(frozen=True)
class NoisyRelu:
    # Figure 1 of the original experiment only ever shows v = 1.
    noise_var: float = 1.0
    tag = 2

    def __post_init__(self):
        if not (self.noise_var > 0 and math.isfinite(self.noise_var)):
            raise ValueError(f"noise_var must be positive, got {self.noise_var}")

    @property
    def name(self) -> str:
        return f"noisy-relu({self.noise_var:g})"

    @property
    def params(self) -> tuple[float, float]:
        return (float(self.noise_var), 0.0)


@dataclass(frozen=True)
class Kumaraswamy:
    a: float
    b: float
    tag = 3

    def __post_init__(self):
        for label, value in (("a", self.a), ("b", self.b)):
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"Kumaraswamy shape parameter {label} must be positive, got {value}")

    @property
    def name(self) -> str:
        return f"kumaraswamy({self.a:g},{self.b:g})"

    @property
    def params(self) -> tuple[float, float]:
        return (float(self.a), float(self.b))


ActivationKind = Union[Sigmoid, Relu, NoisyRelu, Kumaraswamy]


def parse_activation(name: str, a: float = 8.0, b: float = 30.0, noise_var: float = 1.0) -> ActivationKind:
    """Build an activation from its CLI name."""
    key = name.strip().lower().replace("_", "-")
    if key == "sigmoid":
        return Sigmoid()
    if key == "relu":
        return Relu()
    if key == "noisy-relu":
        return NoisyRelu(noise_var)
    if key == "kumaraswamy":
        return Kumaraswamy(a, b)
    raise ValueError(f"unknown activation {name!r}")


def activation_from_tag(tag: int, p1: float, p2: float) -> ActivationKind:
    if tag == Sigmoid.tag:
        return Sigmoid()
    if tag == Relu.tag:
        return Relu()
    if tag == NoisyRelu.tag:
        return NoisyRelu(p1)
    if tag == Kumaraswamy.tag:
        return Kumaraswamy(p1, p2)
    raise ValueError(f"unknown activation tag {tag}")


# -- scalar functions ---------------------------------------------------------


def softplus(x):
    return np.logaddexp(0.0, x)


def log_sigmoid(x):
    return -softplus(-np.asarray(x, dtype=np.float64))


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    # two-branch form: exp only ever sees non-positive arguments
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return out[()] if out.ndim == 0 else out


def sigmoid_deriv(x):
    s = sigmoid(x)
    return s * (1.0 - s)


def relu(x):
    out = np.maximum(0.0, np.asarray(x, dtype=np.float64))
    return out[()] if out.ndim == 0 else out


def relu_deriv(x):
    # subgradient at exactly 0 is 0
    out = (np.asarray(x, dtype=np.float64) > 0).astype(np.float64)
    return out[()] if out.ndim == 0 else out


def noisy_relu_sample(x, noise_var: float, rng: Rng):
    """``max(0, x + eps)`` with ``eps ~ N(0, noise_var)``; returns ``(value, gate)``."""
    x = np.asarray(x, dtype=np.float64)
    noisy = x + rng.normal(x.shape, 0.0, noise_var)
    gate = (noisy > 0).astype(np.float64)
    value = np.maximum(0.0, noisy)
    if x.ndim == 0:
        return float(value), float(gate)
    return value, gate


def noisy_relu_mean(x, noise_var: float):
    """``E[max(0, x + eps)] = x Phi(x/s) + s phi(x/s)`` with ``s = sqrt(noise_var)``.

    Only used for plotting; training always samples.
    """
    s = math.sqrt(noise_var)
    z = np.asarray(x, dtype=np.float64) / s
    phi = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    out = s * (z * ndtr(z) + phi)
    return out[()] if out.ndim == 0 else out


def _log1m_exp(log_u):
    """``log(1 - exp(log_u))`` for ``log_u <= 0`` without cancellation."""
    with np.errstate(divide="ignore"):
        return np.where(
            log_u < -_LN2,
            np.log1p(-np.exp(np.minimum(log_u, -_LN2))),
            np.log(-np.expm1(np.maximum(log_u, -_LN2))),
        )


def _kum_logs(x, a):
    """Shared intermediates: ``log sigmoid(x)``, ``log sigmoid(x)**a``, ``log(1 - sigmoid(x)**a)``."""
    x = np.asarray(x, dtype=np.float64)
    log_s = log_sigmoid(x)
    log_u = a * log_s
    log_1mu = _log1m_exp(log_u)
    # Once sigmoid(x)**a rounds to 1, use 1 - s**a ~ a * (1 - s) = a * sigmoid(-x).
    log_1mu = np.where(log_u < 0.0, log_1mu, math.log(a) + log_sigmoid(-x))
    return x, log_s, log_u, log_1mu


def kumaraswamy(x, a: float, b: float):
    """Kumaraswamy unit ``1 - (1 - sigmoid(x)**a)**b``, in [0, 1]."""
    _, _, _, log_1mu = _kum_logs(x, a)
    out = -np.expm1(b * log_1mu)
    return out[()] if out.ndim == 0 else out


def kumaraswamy_deriv(x, a: float, b: float):
    """Derivative of :func:`kumaraswamy`; non-negative everywhere."""
    x, _, log_u, log_1mu = _kum_logs(x, a)
    # sigmoid'(x) sigmoid(x)**(a-1) = sigmoid(x)**a sigmoid(-x)
    log_pdf = math.log(a * b) + log_u + log_sigmoid(-x)
    if b != 1.0:
        log_pdf = log_pdf + (b - 1.0) * log_1mu
    out = np.exp(log_pdf)
    return out[()] if out.ndim == 0 else out


# -- matrix application -------------------------------------------------------


@dataclass
class ForwardTrace:
    """What the backward pass needs from a hidden-layer forward pass."""

    pre: np.ndarray
    act: np.ndarray
    noise_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.act.shape != self.pre.shape:
            raise ValueError(f"act shape {self.act.shape} != pre shape {self.pre.shape}")
        if self.noise_mask is not None and self.noise_mask.shape != self.pre.shape:
            raise ValueError(f"noise_mask shape {self.noise_mask.shape} != pre shape {self.pre.shape}")


def apply_forward(
    kind: ActivationKind,
    pre: np.ndarray,
    rng: Optional[Rng] = None,
    mode: Mode = Mode.EVAL,
) -> ForwardTrace:
    if isinstance(kind, Sigmoid):
        return ForwardTrace(pre, sigmoid(pre))
    if isinstance(kind, Relu):
        return ForwardTrace(pre, relu(pre))
    if isinstance(kind, NoisyRelu):
        if mode is Mode.TRAIN:
            if rng is None:
                raise ValueError("NoisyRelu in training mode needs an rng")
            act, gate = noisy_relu_sample(pre, kind.noise_var, rng)
        else:
            act, gate = relu(pre), relu_deriv(pre)
        return ForwardTrace(pre, act, gate)
    if isinstance(kind, Kumaraswamy):
        return ForwardTrace(pre, kumaraswamy(pre, kind.a, kind.b))
    raise TypeError(f"unsupported activation {kind!r}")


def apply_backward(kind: ActivationKind, trace: ForwardTrace) -> np.ndarray:
    """Elementwise d act / d pre at the traced pre-activations."""
    if isinstance(kind, Sigmoid):
        return sigmoid_deriv(trace.pre)
    if isinstance(kind, Relu):
        return relu_deriv(trace.pre)
    if isinstance(kind, NoisyRelu):
        if trace.noise_mask is None:
            raise ValueError("NoisyRelu backward needs the gate recorded by apply_forward")
        return trace.noise_mask
    if isinstance(kind, Kumaraswamy):
        return kumaraswamy_deriv(trace.pre, kind.a, kind.b)
    raise TypeError(f"unsupported activation {kind!r}")
