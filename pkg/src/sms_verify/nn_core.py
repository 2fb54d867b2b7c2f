# src/sms_verify/nn_core.py
"""
Minimal feed-forward network engine on numpy float64 arrays.

A "tensor" here is a plain float64 ndarray; gradient buffers live on Param.
Layers cache their forward inputs so that backward can run the chain rule.
"""
import copy
import logging
import struct
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        __str__ = str.__str__
        __format__ = str.__format__
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DimensionError, FormatError, InputError, NumericalError, ParameterError, StateError
from .schemas import GradCheckReport

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"SMSM"
CHECKPOINT_VERSION = 1
LOG_FLOOR = 1e-12
REL_ERR_FLOOR = 1e-5

LossFn = Callable[[np.ndarray], tuple[float, np.ndarray]]


class Activation(StrEnum):
    RELU = "relu"
    SIGMOID = "sigmoid"
    IDENTITY = "identity"


_ACTIVATION_CODES: dict[Activation, int] = {
    Activation.RELU: 0,
    Activation.SIGMOID: 1,
    Activation.IDENTITY: 2,
}
_ACTIVATION_BY_CODE = {code: act for act, code in _ACTIVATION_CODES.items()}


def ensure_finite(arr: np.ndarray, where: str) -> np.ndarray:
    """Raise NumericalError if arr holds NaN or Inf."""
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"non-finite values produced in {where}")
    return arr


def sigmoid(z: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=1, keepdims=True)


class Param:
    """A trainable array and its gradient buffer (None until backward runs)."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.ascontiguousarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None

    def zero_grad(self):
        self.grad = None


class DenseLayer:
    """
    Fully connected layer y = act(x W^T + b).

    Attributes:
        weights: Param of shape [out, in].
        bias: Param of shape [out].
        activation: element-wise activation.
        name: used in error messages and checkpoints.
    """

    def __init__(
        self,
        weights: np.ndarray,
        bias: np.ndarray,
        activation: Activation = Activation.RELU,
        name: str = "layer",
    ):
        weights = np.asarray(weights, dtype=np.float64)
        bias = np.asarray(bias, dtype=np.float64)
        if weights.ndim != 2 or bias.shape != (weights.shape[0],):
            raise DimensionError(
                f"{name}: weights {weights.shape} and bias {bias.shape} are inconsistent"
            )
        self.name = name
        self.activation = Activation(activation)
        self.weights = Param(f"{name}.weights", weights)
        self.bias = Param(f"{name}.bias", bias)
        self._cache: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None

    @classmethod
    def initialize(
        cls,
        in_dim: int,
        out_dim: int,
        activation: Activation,
        rng: np.random.Generator,
        name: str = "layer",
    ) -> "DenseLayer":
        """Glorot-uniform weights, zero bias."""
        limit = np.sqrt(6.0 / (in_dim + out_dim))
        weights = rng.uniform(-limit, limit, size=(out_dim, in_dim))
        return cls(weights, np.zeros(out_dim), activation, name)

    @property
    def in_dim(self) -> int:
        return self.weights.value.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.value.shape[0]

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise DimensionError(
                f"{self.name}: expected input of width {self.in_dim}, got shape {x.shape}"
            )
        z = x @ self.weights.value.T + self.bias.value
        if self.activation is Activation.RELU:
            a = np.maximum(z, 0.0)
        elif self.activation is Activation.SIGMOID:
            a = sigmoid(z)
        else:
            a = z
        ensure_finite(a, self.name)
        self._cache = (x, z, a)
        return a

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        """Fill weight/bias gradients and return the gradient w.r.t. the input."""
        if self._cache is None:
            raise StateError(f"{self.name}: backward called before forward")
        x, z, a = self._cache
        if grad_out.shape != a.shape:
            raise DimensionError(
                f"{self.name}: output gradient shape {grad_out.shape} != output shape {a.shape}"
            )
        if self.activation is Activation.RELU:
            g = grad_out * (z > 0.0)
        elif self.activation is Activation.SIGMOID:
            g = grad_out * a * (1.0 - a)
        else:
            g = grad_out
        self.weights.grad = ensure_finite(g.T @ x, self.weights.name)
        self.bias.grad = ensure_finite(g.sum(axis=0), self.bias.name)
        return g @ self.weights.value

    def parameters(self) -> list[Param]:
        return [self.weights, self.bias]

    def clear_cache(self):
        self._cache = None


class Mlp:
    """Ordered stack of DenseLayers whose dimensions chain."""

    def __init__(self, layers: Sequence[DenseLayer], name: str = "mlp"):
        if not layers:
            raise ParameterError(f"{name}: an Mlp needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise DimensionError(
                    f"{name}: {prev.name} outputs {prev.out_dim} but {nxt.name} expects {nxt.in_dim}"
                )
        self.name = name
        self.layers = list(layers)

    @classmethod
    def build(
        cls,
        dims: Sequence[int],
        activations: Sequence[Activation],
        rng: np.random.Generator,
        name: str = "mlp",
    ) -> "Mlp":
        """
        Build a freshly initialized Mlp.

        Args:
            dims: layer widths including input, e.g. [144, 128, 64].
            activations: one per layer (len(dims) - 1).
        """
        if len(activations) != len(dims) - 1:
            raise ParameterError(
                f"{name}: {len(dims) - 1} layers need {len(dims) - 1} activations, got {len(activations)}"
            )
        layers = [
            DenseLayer.initialize(i, o, act, rng, name=f"{name}.{n}")
            for n, (i, o, act) in enumerate(zip(dims[:-1], dims[1:], activations))
        ]
        return cls(layers, name=name)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def forward(self, batch: np.ndarray) -> np.ndarray:
        out = np.asarray(batch, dtype=np.float64)
        for layer in self.layers:
            out = layer.forward(out)
        return out

    def backward(self, out_grad: np.ndarray) -> np.ndarray:
        grad = out_grad
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def parameters(self) -> list[Param]:
        return [p for layer in self.layers for p in layer.parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def clone(self) -> "Mlp":
        twin = copy.deepcopy(self)
        for layer in twin.layers:
            layer.clear_cache()
        return twin


def forward(mlp: Mlp, batch: np.ndarray) -> np.ndarray:
    """Evaluate mlp on a [B x d_in] batch, caching activations for backward."""
    return mlp.forward(batch)


def backward(mlp: Mlp, out_grad: np.ndarray) -> list[Param]:
    """Back-propagate out_grad through mlp; returns its params with grads filled."""
    mlp.backward(out_grad)
    return mlp.parameters()


def cross_entropy_loss(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood of labels under softmax(logits), and d loss / d logits."""
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError(f"cross_entropy_loss: logits {logits.shape} vs labels {labels.shape}")
    batch, classes = logits.shape
    if batch < 1:
        raise InputError("cross_entropy_loss: empty batch")
    if labels.min() < 0 or labels.max() >= classes:
        raise InputError(f"cross_entropy_loss: labels must lie in [0, {classes})")
    probs = softmax(logits)
    rows = np.arange(batch)
    loss = float(-np.log(np.maximum(probs[rows, labels], LOG_FLOOR)).mean())
    grad = probs
    grad[rows, labels] -= 1.0
    grad /= batch
    return loss, ensure_finite(grad, "cross_entropy_loss")


def mse_loss(recon: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean over all elements of the squared difference, and its gradient w.r.t. recon."""
    if recon.shape != target.shape:
        raise DimensionError(f"mse_loss: recon {recon.shape} vs target {target.shape}")
    diff = recon - target
    loss = float(np.mean(diff**2))
    grad = 2.0 * diff / diff.size
    return loss, ensure_finite(grad, "mse_loss")


def sgd_step(params: Iterable[Param], learning_rate: float):
    """
    theta <- theta - learning_rate * grad, then clear the grads.

    Note:
        A negative learning_rate performs gradient ascent.
    """
    for p in params:
        if p.grad is None:
            raise StateError(f"{p.name}: sgd_step before backward")
        p.value -= learning_rate * p.grad
        p.grad = None


def gradient_check(
    params: Sequence[Param],
    loss_and_grads: Callable[[], float],
    h: float = 1e-6,
    tol: float = 1e-4,
) -> GradCheckReport:
    """
    Compare analytic gradients with central differences, element by element.

    Args:
        params: parameters to check.
        loss_and_grads: recomputes the loss from current param values and fills
            every param's grad.
        h: perturbation size.
        tol: max accepted relative error.
    """
    if not 0.0 < h <= 1e-3:
        raise ParameterError(f"finite difference step h must lie in (0, 1e-3], got {h}")
    loss_and_grads()
    analytic = []
    for p in params:
        if p.grad is None:
            raise StateError(f"{p.name}: no gradient after loss_and_grads()")
        analytic.append(p.grad.copy())

    worst, worst_name, n_checked = 0.0, "", 0
    for p, grad in zip(params, analytic):
        flat = p.value.reshape(-1)
        flat_grad = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            plus = loss_and_grads()
            flat[i] = orig - h
            minus = loss_and_grads()
            flat[i] = orig
            numeric = (plus - minus) / (2.0 * h)
            denom = max(abs(numeric) + abs(flat_grad[i]), REL_ERR_FLOOR)
            rel = abs(numeric - flat_grad[i]) / denom
            n_checked += 1
            if rel > worst:
                worst, worst_name = rel, f"{p.name}[{i}]"
    for p in params:
        p.zero_grad()
    logger.debug(f"gradient check: {n_checked} entries, max rel err {worst:.3e} at {worst_name}")
    return GradCheckReport(
        max_rel_error=worst,
        worst_param=worst_name,
        n_checked=n_checked,
        tolerance=tol,
        passed=worst <= tol,
    )


def finite_diff_check(
    mlp: Mlp,
    batch: np.ndarray,
    loss_fn: LossFn,
    h: float = 1e-6,
    tol: float = 1e-4,
) -> GradCheckReport:
    """Gradient check of every mlp parameter for loss_fn(mlp(batch))."""

    def loss_and_grads() -> float:
        loss, grad = loss_fn(mlp.forward(batch))
        mlp.backward(grad)
        return loss

    return gradient_check(mlp.parameters(), loss_and_grads, h=h, tol=tol)


# --- checkpoints ---

_HEADER = struct.Struct("<4sII")
_LAYER_HEADER = struct.Struct("<IIB")


def mlp_to_bytes(mlp: Mlp) -> bytes:
    chunks = [_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(mlp.layers))]
    for layer in mlp.layers:
        chunks.append(
            _LAYER_HEADER.pack(layer.in_dim, layer.out_dim, _ACTIVATION_CODES[layer.activation])
        )
        chunks.append(layer.weights.value.astype("<f8").tobytes(order="C"))
        chunks.append(layer.bias.value.astype("<f8").tobytes())
    return b"".join(chunks)


def mlp_from_bytes(data: bytes, name: str = "mlp") -> Mlp:
    """Decode a checkpoint; wrong magic/version or truncation raises FormatError."""
    if len(data) < _HEADER.size:
        raise FormatError("checkpoint shorter than its header", offset=len(data))
    magic, version, n_layers = _HEADER.unpack_from(data, 0)
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}", offset=0)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4)
    offset = _HEADER.size
    layers = []
    for n in range(n_layers):
        if offset + _LAYER_HEADER.size > len(data):
            raise FormatError(f"truncated header of layer {n}", offset=offset)
        in_dim, out_dim, code = _LAYER_HEADER.unpack_from(data, offset)
        offset += _LAYER_HEADER.size
        if code not in _ACTIVATION_BY_CODE:
            raise FormatError(f"unknown activation code {code}", offset=offset - 1)
        n_bytes = 8 * (in_dim * out_dim + out_dim)
        if offset + n_bytes > len(data):
            raise FormatError(f"truncated parameters of layer {n}", offset=offset)
        weights = np.frombuffer(data, dtype="<f8", count=in_dim * out_dim, offset=offset)
        offset += 8 * in_dim * out_dim
        bias = np.frombuffer(data, dtype="<f8", count=out_dim, offset=offset)
        offset += 8 * out_dim
        layers.append(
            DenseLayer(
                weights.reshape(out_dim, in_dim).astype(np.float64),
                bias.astype(np.float64),
                _ACTIVATION_BY_CODE[code],
                name=f"{name}.{n}",
            )
        )
    if offset != len(data):
        raise FormatError("trailing bytes after last layer", offset=offset)
    return Mlp(layers, name=name)


def save_mlp(mlp: Mlp, path: str | Path) -> Path:
    path = Path(path)
    path.write_bytes(mlp_to_bytes(mlp))
    logger.debug(f"saved {mlp.name} checkpoint to {path}")
    return path


def load_mlp(path: str | Path, name: str = "mlp") -> Mlp:
    return mlp_from_bytes(Path(path).read_bytes(), name=name)
