"""Dense feedforward classifier with explicit forward and backward passes.

Everything runs in float64 numpy. A model is an ordered list of dense layers
with relu or identity activations; the final layer must be identity so that
outputs are raw logits. Backpropagation is provided both towards parameters
(for training) and towards the input vector (for explanation), plus a plain
Adam optimizer and JSON persistence.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "identity")


class ModelFormatError(ValueError):
    """A model file is unreadable or violates the layer-chaining invariant."""


def as_vector(x) -> np.ndarray:
    """Coerce a FeatureVector or array-like to a flat float64 array."""
    values = getattr(x, "values", x)
    return np.asarray(values, dtype=np.float64).ravel()


@dataclass
class FeatureVector:
    """A flat real-valued instance, optionally viewed as an image.

    ``lo``/``hi`` are closed per-feature bounds (scalars broadcast); they are
    reportable via :meth:`within_bounds` but never enforced.
    """

    values: np.ndarray
    image_shape: tuple[int, int] | None = None
    lo: float | np.ndarray = 0.0
    hi: float | np.ndarray = 1.0

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if self.image_shape is not None:
            h, w = self.image_shape
            if int(h) * int(w) != self.values.size:
                raise ValueError(
                    f"image shape {self.image_shape} does not cover {self.values.size} values"
                )
            self.image_shape = (int(h), int(w))

    @property
    def d(self) -> int:
        return self.values.size

    def within_bounds(self) -> np.ndarray:
        return (self.values >= self.lo) & (self.values <= self.hi)


@dataclass
class Layer:
    w: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)
    act: str = "relu"

    def __post_init__(self) -> None:
        self.w = np.asarray(self.w, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64).ravel()
        if self.w.ndim != 2:
            raise ModelFormatError(f"weight matrix must be 2-D, got ndim={self.w.ndim}")
        if self.b.size != self.w.shape[0]:
            raise ModelFormatError(
                f"bias length {self.b.size} does not match weight rows {self.w.shape[0]}"
            )
        if self.act not in ACTIVATIONS:
            raise ModelFormatError(f"unknown activation {self.act!r}")


@dataclass
class NetworkModel:
    """Layered dense classifier. Immutable by convention once trained."""

    layers: list[Layer]
    norm: tuple[np.ndarray, np.ndarray] | None = None  # per-feature (min, max)
    image_shape: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        if not self.layers:
            raise ModelFormatError("model needs at least one layer")
        for i, (prev, nxt) in enumerate(zip(self.layers, self.layers[1:])):
            if nxt.w.shape[1] != prev.w.shape[0]:
                raise ModelFormatError(
                    f"layer {i + 1} expects {nxt.w.shape[1]} inputs, "
                    f"layer {i} emits {prev.w.shape[0]}"
                )
        if self.layers[-1].act != "identity":
            raise ModelFormatError("final layer must use identity so outputs are logits")

    @property
    def input_dim(self) -> int:
        return self.layers[0].w.shape[1]

    @property
    def class_count(self) -> int:
        return self.layers[-1].w.shape[0]


def init_mlp(layer_sizes: list[int], seed: int = 0) -> NetworkModel:
    """He-initialized MLP with relu hidden layers and an identity output layer."""
    if len(layer_sizes) < 2:
        raise ValueError("need at least input and output sizes")
    rng = np.random.default_rng(seed)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(layer_sizes, layer_sizes[1:])):
        w = rng.standard_normal((fan_out, fan_in)) * np.sqrt(2.0 / fan_in)
        act = "identity" if i == len(layer_sizes) - 2 else "relu"
        layers.append(Layer(w=w, b=np.zeros(fan_out), act=act))
    return NetworkModel(layers=layers)


def forward_trace(model: NetworkModel, xs: np.ndarray):
    """Batched forward pass returning (logits, caches) for later backprop.

    ``caches[i]`` holds (layer input, pre-activation) for layer i.
    """
    a = np.asarray(xs, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("forward_trace expects a (n, d) batch")
    if a.shape[1] != model.input_dim:
        raise ValueError(f"input width {a.shape[1]} != model width {model.input_dim}")
    caches = []
    for layer in model.layers:
        z = a @ layer.w.T + layer.b
        caches.append((a, z))
        a = np.maximum(z, 0.0) if layer.act == "relu" else z
    return a, caches


def forward(model: NetworkModel, x) -> np.ndarray:
    """Logits for a single instance (FeatureVector or array)."""
    xv = as_vector(x)
    logits, _ = forward_trace(model, xv[None, :])
    return logits[0]


def forward_batch(model: NetworkModel, xs: np.ndarray) -> np.ndarray:
    logits, _ = forward_trace(model, xs)
    return logits


def softmax_prob(logits) -> np.ndarray:
    """Stable softmax along the last axis (max subtraction before exp)."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def backprop_to_input(model: NetworkModel, caches, cotangent: np.ndarray) -> np.ndarray:
    """Pull a logit-space cotangent (n, K) back to input space (n, d)."""
    delta = np.asarray(cotangent, dtype=np.float64)
    for i in range(len(model.layers) - 1, -1, -1):
        da_prev = delta @ model.layers[i].w
        if i == 0:
            return da_prev
        _, z_prev = caches[i - 1]
        if model.layers[i - 1].act == "relu":
            da_prev = da_prev * (z_prev > 0.0)
        delta = da_prev
    raise AssertionError("unreachable")


def input_gradient(model: NetworkModel, x, target: int, of: str = "probability") -> np.ndarray:
    """Gradient of the target logit or target softmax probability w.r.t. the input."""
    xv = as_vector(x)
    k = model.class_count
    if not 0 <= target < k:
        raise ValueError(f"class index {target} outside [0, {k})")
    logits, caches = forward_trace(model, xv[None, :])
    onehot = np.zeros(k)
    onehot[target] = 1.0
    if of == "logit":
        cot = onehot
    elif of == "probability":
        p = softmax_prob(logits[0])
        cot = p[target] * (onehot - p)
    else:
        raise ValueError(f"of must be 'logit' or 'probability', got {of!r}")
    return backprop_to_input(model, caches, cot[None, :])[0]


def _check_labels(ys: np.ndarray, k: int) -> np.ndarray:
    ys = np.asarray(ys)
    if ys.size and (ys.min() < 0 or ys.max() >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    return ys.astype(np.intp)


def cross_entropy_loss(model: NetworkModel, xs: np.ndarray, ys) -> float:
    """Mean cross-entropy over a batch, computed via log-sum-exp."""
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    ys = _check_labels(ys, model.class_count)
    logits, _ = forward_trace(model, xs)
    zmax = logits.max(axis=1)
    lse = np.log(np.exp(logits - zmax[:, None]).sum(axis=1)) + zmax
    return float(np.mean(lse - logits[np.arange(len(ys)), ys]))


def param_gradients(model: NetworkModel, xs: np.ndarray, ys) -> list[tuple[np.ndarray, np.ndarray]]:
    """Mean cross-entropy gradient over a batch, shaped like the model's (w, b) pairs."""
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    if xs.shape[0] == 0:
        raise ValueError("empty batch")
    ys = _check_labels(ys, model.class_count)
    n = xs.shape[0]
    logits, caches = forward_trace(model, xs)
    probs = softmax_prob(logits)
    delta = probs.copy()
    delta[np.arange(n), ys] -= 1.0
    delta /= n
    grads: list = [None] * len(model.layers)
    for i in range(len(model.layers) - 1, -1, -1):
        a_prev, _ = caches[i]
        grads[i] = (delta.T @ a_prev, delta.sum(axis=0))
        if i > 0:
            da = delta @ model.layers[i].w
            _, z_prev = caches[i - 1]
            if model.layers[i - 1].act == "relu":
                da = da * (z_prev > 0.0)
            delta = da
    return grads


@dataclass
class AdamState:
    """First/second moment accumulators for one optimized array."""

    lr: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None


def adam_step(state: AdamState, variable: np.ndarray, gradient: np.ndarray) -> np.ndarray:
    """One Adam update with bias correction. Mutates ``state``, returns the new variable."""
    var = np.asarray(variable, dtype=np.float64)
    g = np.asarray(gradient, dtype=np.float64)
    if var.shape != g.shape:
        raise ValueError(f"variable shape {var.shape} != gradient shape {g.shape}")
    if state.m is None:
        state.m = np.zeros_like(var)
        state.v = np.zeros_like(var)
    elif state.m.shape != var.shape:
        raise ValueError(f"state shaped {state.m.shape} cannot update variable {var.shape}")
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * g
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    return var - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def predict(model: NetworkModel, xs: np.ndarray) -> np.ndarray:
    return forward_batch(model, np.atleast_2d(xs)).argmax(axis=1)


def accuracy(model: NetworkModel, xs: np.ndarray, ys) -> float:
    ys = np.asarray(ys)
    return float(np.mean(predict(model, xs) == ys))


@dataclass
class TrainReport:
    train_accuracy: float
    test_accuracy: float | None
    epoch_losses: list[float] = field(default_factory=list)


def train(
    model: NetworkModel,
    xs: np.ndarray,
    ys,
    epochs: int,
    batch_size: int = 32,
    seed: int = 0,
    lr: float = 0.01,
    test: tuple[np.ndarray, np.ndarray] | None = None,
) -> TrainReport:
    """Adam mini-batch training on mean cross-entropy. Mutates ``model`` in place.

    Deterministic for a fixed seed; ``epochs=0`` leaves the model untouched.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = _check_labels(ys, model.class_count)
    rng = np.random.default_rng(seed)
    states = [
        (AdamState(lr=lr), AdamState(lr=lr)) for _ in model.layers
    ]
    losses = []
    n = xs.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            grads = param_gradients(model, xs[idx], ys[idx])
            for layer, (sw, sb), (gw, gb) in zip(model.layers, states, grads):
                layer.w = adam_step(sw, layer.w, gw)
                layer.b = adam_step(sb, layer.b, gb)
        losses.append(cross_entropy_loss(model, xs, ys))
    test_acc = accuracy(model, test[0], test[1]) if test is not None else None
    return TrainReport(
        train_accuracy=accuracy(model, xs, ys),
        test_accuracy=test_acc,
        epoch_losses=losses,
    )


def save_model(model: NetworkModel, path) -> None:
    doc = {
        "layers": [
            {"w": layer.w.tolist(), "b": layer.b.tolist(), "act": layer.act}
            for layer in model.layers
        ],
        "k": model.class_count,
        "norm": None
        if model.norm is None
        else {"min": model.norm[0].tolist(), "max": model.norm[1].tolist()},
    }
    if model.image_shape is not None:
        doc["image"] = list(model.image_shape)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_model(path) -> NetworkModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"cannot parse model file {path}: {exc}") from exc
    if not isinstance(doc, dict) or "layers" not in doc:
        raise ModelFormatError(f"model file {path} has no 'layers' field")
    try:
        layers = [Layer(w=item["w"], b=item["b"], act=item.get("act", "relu")) for item in doc["layers"]]
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"malformed layer entry in {path}: {exc}") from exc
    norm = None
    if doc.get("norm") is not None:
        norm = (
            np.asarray(doc["norm"]["min"], dtype=np.float64),
            np.asarray(doc["norm"]["max"], dtype=np.float64),
        )
    image_shape = tuple(doc["image"]) if doc.get("image") else None
    model = NetworkModel(layers=layers, norm=norm, image_shape=image_shape)
    if "k" in doc and doc["k"] != model.class_count:
        raise ModelFormatError(
            f"declared class count {doc['k']} != final layer width {model.class_count}"
        )
    return model
