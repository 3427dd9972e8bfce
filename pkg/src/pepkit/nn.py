"""Dense feedforward classifiers over a flat parameter vector.

Layer ``l`` computes ``a_l = act(a_{l-1} @ W_l + b_l)`` with ``W_l`` of shape
``(input_width, output_width)``. The final layer is linear and yields logits;
softmax is applied separately.

Flat layout: layers in ascending order, each layer's weight matrix
(row-major, C order) followed by its bias. Checkpoints depend on this order.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import LayoutError, NumericError, ProbabilityFloorWarning, ShapeError

ACTIVATIONS = ("identity", "relu")

# Used only for probabilities that arrive without logits (ensemble averages).
PROB_FLOOR = 1e-300


@dataclass(frozen=True)
class Layer:
    input_width: int
    output_width: int
    activation: str = "relu"


@dataclass(frozen=True)
class Segment:
    """Location of one weight matrix or bias vector inside the flat vector."""

    layer: int
    kind: str  # "weight" or "bias"
    offset: int
    length: int
    shape: tuple

    @property
    def stop(self) -> int:
        return self.offset + self.length


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple

    def __post_init__(self):
        layers = tuple(Layer(*l) if not isinstance(l, Layer) else l for l in self.layers)
        object.__setattr__(self, "layers", layers)
        if not layers:
            raise ShapeError("network needs at least one layer")
        for i, layer in enumerate(layers):
            if layer.input_width < 1 or layer.output_width < 1:
                raise ShapeError(f"layer {i}: widths must be positive, got {layer}")
            if layer.activation not in ACTIVATIONS:
                raise ShapeError(f"layer {i}: unknown activation {layer.activation!r}")
        for i in range(len(layers) - 1):
            if layers[i].output_width != layers[i + 1].input_width:
                raise ShapeError(
                    f"layer {i + 1}: input width {layers[i + 1].input_width} does not "
                    f"match layer {i} output width {layers[i].output_width}"
                )
        if layers[-1].activation != "identity":
            raise ShapeError(f"layer {len(layers) - 1}: final layer must be identity (logits)")

    @classmethod
    def from_widths(cls, widths: Sequence[int], hidden_activation: str = "relu") -> "NetworkSpec":
        """Build ``widths[0] -> ... -> widths[-1]`` with ReLU hidden layers."""
        if len(widths) < 2:
            raise ShapeError("need at least input and output widths")
        n = len(widths) - 1
        return cls(tuple(
            Layer(widths[i], widths[i + 1], "identity" if i == n - 1 else hidden_activation)
            for i in range(n)
        ))

    @property
    def input_width(self) -> int:
        return self.layers[0].input_width

    @property
    def class_count(self) -> int:
        return self.layers[-1].output_width

    def layout(self) -> tuple:
        segments = []
        offset = 0
        for i, layer in enumerate(self.layers):
            n_w = layer.input_width * layer.output_width
            segments.append(Segment(i, "weight", offset, n_w, (layer.input_width, layer.output_width)))
            offset += n_w
            segments.append(Segment(i, "bias", offset, layer.output_width, (layer.output_width,)))
            offset += layer.output_width
        return tuple(segments)

    @property
    def param_count(self) -> int:
        return sum(l.input_width * l.output_width + l.output_width for l in self.layers)


@dataclass
class ParamVector:
    """Flat float64 parameter vector plus the layout that maps it to layers."""

    values: np.ndarray
    layout: tuple

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise LayoutError("parameter values must be a 1-D vector")
        expected = 0
        for seg in self.layout:
            if seg.offset != expected:
                raise LayoutError(f"segment {seg} leaves a gap or overlaps at offset {expected}")
            expected = seg.stop
        if expected != self.values.size:
            raise LayoutError(f"layout covers {expected} values but vector has {self.values.size}")
        if not np.all(np.isfinite(self.values)):
            raise NumericError("parameter vector contains non-finite values")

    @classmethod
    def zeros(cls, spec: NetworkSpec) -> "ParamVector":
        return cls(np.zeros(spec.param_count), spec.layout())

    def __len__(self) -> int:
        return self.values.size

    def with_values(self, values: np.ndarray) -> "ParamVector":
        return ParamVector(values, self.layout)

    def segment(self, layer: int, kind: str) -> np.ndarray:
        for seg in self.layout:
            if seg.layer == layer and seg.kind == kind:
                return self.values[seg.offset:seg.stop].reshape(seg.shape)
        raise LayoutError(f"no {kind} segment for layer {layer}")


def _check_params(spec: NetworkSpec, params: ParamVector) -> None:
    if tuple(params.layout) != spec.layout():
        raise LayoutError(
            f"parameter layout ({len(params)} values) does not match spec "
            f"({spec.param_count} values)"
        )


def flatten(spec: NetworkSpec, layered: Sequence) -> ParamVector:
    """Pack ``[(W_0, b_0), (W_1, b_1), ...]`` into a ParamVector."""
    if len(layered) != len(spec.layers):
        raise LayoutError(f"expected {len(spec.layers)} layers, got {len(layered)}")
    parts = []
    for i, ((w, b), layer) in enumerate(zip(layered, spec.layers)):
        w = np.asarray(w, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if w.shape != (layer.input_width, layer.output_width):
            raise LayoutError(f"layer {i}: weight shape {w.shape} != "
                              f"{(layer.input_width, layer.output_width)}")
        if b.shape != (layer.output_width,):
            raise LayoutError(f"layer {i}: bias shape {b.shape} != {(layer.output_width,)}")
        parts.append(w.ravel(order="C"))
        parts.append(b)
    return ParamVector(np.concatenate(parts), spec.layout())


def unflatten(spec: NetworkSpec, params: ParamVector) -> list:
    """Inverse of :func:`flatten`; returns copies of each ``(W, b)``."""
    _check_params(spec, params)
    return [
        (params.segment(i, "weight").copy(), params.segment(i, "bias").copy())
        for i in range(len(spec.layers))
    ]


def init_params(spec: NetworkSpec, rng: np.random.Generator) -> ParamVector:
    """He-uniform weights, zero biases."""
    values = np.zeros(spec.param_count)
    for seg in spec.layout():
        if seg.kind == "weight":
            fan_in = seg.shape[0]
            limit = np.sqrt(6.0 / fan_in)
            values[seg.offset:seg.stop] = rng.uniform(-limit, limit, seg.length)
    return ParamVector(values, spec.layout())


def _as_features(spec: NetworkSpec, features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != spec.input_width:
        raise ShapeError(
            f"layer 0: expects input width {spec.input_width}, got features of shape {x.shape}"
        )
    return x


def _forward_cache(spec, params, x):
    """Return per-layer inputs and pre-activations for backprop."""
    inputs, pre = [], []
    a = x
    for i, layer in enumerate(spec.layers):
        w = params.segment(i, "weight")
        b = params.segment(i, "bias")
        z = a @ w + b
        inputs.append(a)
        pre.append(z)
        a = np.maximum(z, 0.0) if layer.activation == "relu" else z
    return inputs, pre, a


def forward(spec: NetworkSpec, params: ParamVector, features) -> np.ndarray:
    """Logits (N x K) for a feature matrix (N x D)."""
    _check_params(spec, params)
    x = _as_features(spec, features)
    _, _, logits = _forward_cache(spec, params, x)
    if not np.all(np.isfinite(logits)):
        raise NumericError("forward pass produced non-finite logits")
    return logits


def log_softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NumericError("softmax input contains non-finite values")
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits) -> np.ndarray:
    """Row-wise softmax with max subtraction."""
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NumericError("softmax input contains non-finite values")
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _check_labels(labels, n, k) -> np.ndarray:
    y = np.asarray(labels)
    if y.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {y.shape}")
    if n and (y.min() < 0 or y.max() >= k):
        raise ShapeError(f"labels must lie in [0, {k})")
    return y.astype(np.int64)


def loglik_from_logits(logits, labels) -> np.ndarray:
    """Per-example ``ln p(y_i | x_i)`` computed by log-sum-exp on logits."""
    z = np.asarray(logits, dtype=np.float64)
    y = _check_labels(labels, z.shape[0], z.shape[1])
    return log_softmax(z)[np.arange(z.shape[0]), y]


def count_floored(probs, labels) -> int:
    p = np.asarray(probs, dtype=np.float64)
    y = _check_labels(labels, p.shape[0], p.shape[1])
    return int(np.count_nonzero(p[np.arange(p.shape[0]), y] < PROB_FLOOR))


def per_example_log_likelihood(probs, labels, floor: float = PROB_FLOOR) -> np.ndarray:
    """Per-example ``ln probs[i, labels[i]]``.

    Probabilities below ``floor`` at the true label are clamped and a
    :class:`ProbabilityFloorWarning` is emitted.
    """
    p = np.asarray(probs, dtype=np.float64)
    y = _check_labels(labels, p.shape[0], p.shape[1])
    picked = p[np.arange(p.shape[0]), y]
    low = picked < floor
    if np.any(low):
        warnings.warn(f"{int(low.sum())} true-label probabilities clamped to {floor:g}",
                      ProbabilityFloorWarning, stacklevel=2)
        picked = np.where(low, floor, picked)
    return np.log(picked)


def _output_delta(logits, y):
    # d ln p(y|x) / d logits = onehot(y) - softmax(logits)
    delta = -softmax(logits)
    delta[np.arange(len(y)), y] += 1.0
    return delta


def _backward(spec, params, inputs, pre, delta):
    """Yield ``(layer, input, delta)`` from the last layer backwards."""
    for i in range(len(spec.layers) - 1, -1, -1):
        yield i, inputs[i], delta
        if i > 0:
            w = params.segment(i, "weight")
            delta = (delta @ w.T) * (pre[i - 1] > 0.0)


def gradient(spec: NetworkSpec, params: ParamVector, features, labels) -> ParamVector:
    """Gradient of the summed log-likelihood over the batch (ascent direction)."""
    _check_params(spec, params)
    x = _as_features(spec, features)
    if x.shape[0] == 0:
        raise ShapeError("gradient needs a non-empty batch")
    y = _check_labels(labels, x.shape[0], spec.class_count)
    inputs, pre, logits = _forward_cache(spec, params, x)
    grad = np.empty(spec.param_count)
    layout = spec.layout()
    for i, a, delta in _backward(spec, params, inputs, pre, _output_delta(logits, y)):
        w_seg, b_seg = layout[2 * i], layout[2 * i + 1]
        grad[w_seg.offset:w_seg.stop] = (a.T @ delta).ravel()
        grad[b_seg.offset:b_seg.stop] = delta.sum(axis=0)
    return ParamVector(grad, layout)


def per_example_grad_sqnorms(spec: NetworkSpec, params: ParamVector, features, labels) -> np.ndarray:
    """``||grad ln L_i||^2`` for every example without forming per-example gradients.

    For a dense layer the per-example weight gradient is ``outer(a_i, delta_i)``,
    whose squared Frobenius norm is ``|a_i|^2 |delta_i|^2``.
    """
    _check_params(spec, params)
    x = _as_features(spec, features)
    y = _check_labels(labels, x.shape[0], spec.class_count)
    inputs, pre, logits = _forward_cache(spec, params, x)
    total = np.zeros(x.shape[0])
    for _, a, delta in _backward(spec, params, inputs, pre, _output_delta(logits, y)):
        d2 = np.einsum("ij,ij->i", delta, delta)
        total += np.einsum("ij,ij->i", a, a) * d2 + d2
    return total


def per_example_gradients(spec: NetworkSpec, params: ParamVector, features, labels) -> np.ndarray:
    """Dense N x P matrix of per-example gradients; small models only."""
    _check_params(spec, params)
    x = _as_features(spec, features)
    y = _check_labels(labels, x.shape[0], spec.class_count)
    inputs, pre, logits = _forward_cache(spec, params, x)
    out = np.empty((x.shape[0], spec.param_count))
    layout = spec.layout()
    for i, a, delta in _backward(spec, params, inputs, pre, _output_delta(logits, y)):
        w_seg, b_seg = layout[2 * i], layout[2 * i + 1]
        out[:, w_seg.offset:w_seg.stop] = np.einsum("ni,nj->nij", a, delta).reshape(len(y), -1)
        out[:, b_seg.offset:b_seg.stop] = delta
    return out
