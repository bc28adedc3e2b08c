"""The congestion classifier network and its on-disk format.

Layer stack (``side`` = input side, default 180)::

    conv1  3x3 same   -> ReLU
    conv2  3x3 valid  -> ReLU -> maxpool 2x2 -> dropout
    conv3  3x3 same   -> ReLU
    conv4  3x3 valid  -> ReLU -> maxpool 2x2 -> dropout
    flatten -> dense1 -> ReLU -> dropout -> dense2 (2 logits) -> softmax

Class index 1 is *congested* (the positive class), 0 is *non_congested*.
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from . import tensor as T
from .errors import FormatError, ShapeError
from .metrics import CONGESTED, LABEL_NAMES, NON_CONGESTED
from .rng import STREAM_INIT, make_rng

MAGIC = b"CCNET1\n"
FORMAT_VERSION = 1

CONV_LAYERS = ("conv1", "conv2", "conv3", "conv4")
CONV_PADDING = {"conv1": "same", "conv2": "valid", "conv3": "same", "conv4": "valid"}
DENSE_LAYERS = ("dense1", "dense2")
LAYER_ORDER = CONV_LAYERS + DENSE_LAYERS


@dataclass(frozen=True)
class ModelConfig:
    input_side: int = 180
    conv_channels: Tuple[int, int] = (32, 64)
    dense_units: int = 512
    num_classes: int = 2
    dropout_p: float = 0.25
    in_channels: int = 3

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        if self.num_classes != 2:
            raise ValueError("num_classes is fixed at 2")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError(f"dropout_p must lie in [0, 1), got {self.dropout_p}")
        if len(self.conv_channels) != 2 or min(self.conv_channels) < 1 or self.dense_units < 1:
            raise ValueError("conv_channels needs two positive entries and dense_units must be positive")
        self.layer_shapes()

    def layer_shapes(self) -> List[Tuple[str, Tuple[int, ...]]]:
        """Output shape after every layer, validated layer by layer."""
        c1, c2 = self.conv_channels
        side = self.input_side
        shapes: List[Tuple[str, Tuple[int, ...]]] = [("input", (side, side, self.in_channels))]

        def need(layer, cond):
            if not cond:
                raise ShapeError(
                    f"input_side={self.input_side} is too small: layer {layer} would have an empty output"
                )

        need("input", side >= 1)
        side = T.conv_output_side(side, 3, "same")
        shapes.append(("conv1", (side, side, c1)))
        need("conv2", side >= 3)
        side = T.conv_output_side(side, 3, "valid")
        shapes.append(("conv2", (side, side, c1)))
        need("pool1", side >= 2)
        side //= 2
        shapes.append(("pool1", (side, side, c1)))
        shapes.append(("dropout1", (side, side, c1)))
        side = T.conv_output_side(side, 3, "same")
        shapes.append(("conv3", (side, side, c2)))
        need("conv4", side >= 3)
        side = T.conv_output_side(side, 3, "valid")
        shapes.append(("conv4", (side, side, c2)))
        need("pool2", side >= 2)
        side //= 2
        shapes.append(("pool2", (side, side, c2)))
        shapes.append(("dropout2", (side, side, c2)))
        shapes.append(("dense1", (self.dense_units,)))
        shapes.append(("dropout3", (self.dense_units,)))
        shapes.append(("dense2", (self.num_classes,)))
        return shapes

    @property
    def flat_size(self) -> int:
        return int(np.prod(dict(self.layer_shapes())["pool2"]))

    def param_shapes(self) -> Dict[str, Tuple[Tuple[int, ...], Tuple[int, ...]]]:
        c1, c2 = self.conv_channels
        return {
            "conv1": ((c1, 3, 3, self.in_channels), (c1,)),
            "conv2": ((c1, 3, 3, c1), (c1,)),
            "conv3": ((c2, 3, 3, c1), (c2,)),
            "conv4": ((c2, 3, 3, c2), (c2,)),
            "dense1": ((self.dense_units, self.flat_size), (self.dense_units,)),
            "dense2": ((self.num_classes, self.dense_units), (self.num_classes,)),
        }

    def param_count(self) -> int:
        return sum(int(np.prod(w)) + int(np.prod(b)) for w, b in self.param_shapes().values())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_channels"] = list(self.conv_channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass(frozen=True)
class ModelState:
    """Parameters keyed ``"<layer>.weight"`` / ``"<layer>.bias"`` in layer order."""

    config: ModelConfig
    params: Dict[str, np.ndarray] = field(repr=False)

    @property
    def dtype(self) -> np.dtype:
        return self.params["conv1.weight"].dtype

    def astype(self, dtype) -> "ModelState":
        dtype = T.dtype_for(dtype)
        if self.dtype == dtype:
            return self
        return ModelState(self.config, {k: v.astype(dtype) for k, v in self.params.items()})

    def conv(self, name: str) -> T.ConvParams:
        return T.ConvParams(self.params[f"{name}.weight"], self.params[f"{name}.bias"], CONV_PADDING[name])

    def dense(self, name: str) -> T.DenseParams:
        return T.DenseParams(self.params[f"{name}.weight"], self.params[f"{name}.bias"])

    def equals(self, other: "ModelState") -> bool:
        """Bit-exact parameter and config comparison."""
        return (
            self.config == other.config
            and list(self.params) == list(other.params)
            and all(
                a.dtype == b.dtype and a.shape == b.shape and a.tobytes() == b.tobytes()
                for a, b in zip(self.params.values(), other.params.values())
            )
        )


def param_names() -> List[str]:
    return [f"{layer}.{kind}" for layer in LAYER_ORDER for kind in ("weight", "bias")]


def build_model(config: ModelConfig = ModelConfig(), seed: int = 42, precision=32) -> ModelState:
    """He-normal weights (std ``sqrt(2/fan_in)``), zero biases."""
    dtype = T.dtype_for(precision)
    rng = make_rng(seed, STREAM_INIT)
    params: Dict[str, np.ndarray] = {}
    for layer, (wshape, bshape) in config.param_shapes().items():
        fan_in = int(np.prod(wshape[1:]))
        std = np.sqrt(2.0 / fan_in)
        w = rng.standard_normal(wshape, dtype=dtype) * dtype.type(std)
        params[f"{layer}.weight"] = w.astype(dtype, copy=False)
        params[f"{layer}.bias"] = np.zeros(bshape, dtype=dtype)
    return ModelState(config, params)


def zero_model(config: ModelConfig, precision=32) -> ModelState:
    dtype = T.dtype_for(precision)
    params = {}
    for layer, (wshape, bshape) in config.param_shapes().items():
        params[f"{layer}.weight"] = np.zeros(wshape, dtype=dtype)
        params[f"{layer}.bias"] = np.zeros(bshape, dtype=dtype)
    return ModelState(config, params)


# --------------------------------------------------------------------------
# Forward / backward
# --------------------------------------------------------------------------


def _check_input(state: ModelState, x: np.ndarray) -> Tuple[np.ndarray, bool]:
    side = state.config.input_side
    expected = (side, side, state.config.in_channels)
    if x.ndim == 3:
        x = x[None]
        single = True
    else:
        single = False
    if x.ndim != 4 or x.shape[1:] != expected:
        raise ShapeError(f"model expects input [{side},{side},{expected[2]}] (optionally batched), got {x.shape}")
    return x.astype(state.dtype, copy=False), single


def forward(state: ModelState, x: np.ndarray, train: bool = False, rng=None, trace: list | None = None):
    """Run the network on ``x`` (``[side,side,3]`` or a batch).

    Returns ``(logits, cache)``.  In train mode dropout masks are drawn from
    ``rng`` in layer order dropout1, dropout2, dropout3.  If ``trace`` is a
    list, ``(layer_name, per_sample_shape)`` pairs are appended to it.
    """
    xb, single = _check_input(state, x)
    mode = "train" if train else "eval"
    p = state.config.dropout_p
    cache: dict = {"input": xb}

    def rec(name, a):
        if trace is not None:
            trace.append((name, tuple(a.shape[1:])))

    rec("input", xb)
    a = xb
    for stage, (ca, cb, pool, drop) in enumerate(
        (("conv1", "conv2", "pool1", "dropout1"), ("conv3", "conv4", "pool2", "dropout2"))
    ):
        cache[f"{ca}.in"] = a
        z = T.conv2d_forward(a, state.conv(ca))
        rec(ca, z)
        cache[f"{ca}.pre"] = z
        a = T.relu(z)
        cache[f"{cb}.in"] = a
        z = T.conv2d_forward(a, state.conv(cb))
        rec(cb, z)
        cache[f"{cb}.pre"] = z
        a = T.relu(z)
        a, idx = T.maxpool2x2_forward(a)
        rec(pool, a)
        cache[f"{pool}.idx"] = idx
        a, mask = T.dropout(a, p, mode, rng)
        rec(drop, a)
        cache[f"{drop}.mask"] = mask

    cache["flat_shape"] = a.shape
    a = a.reshape(a.shape[0], -1)
    cache["dense1.in"] = a
    z = T.dense_forward(a, state.dense("dense1"))
    rec("dense1", z)
    cache["dense1.pre"] = z
    a = T.relu(z)
    a, mask = T.dropout(a, p, mode, rng)
    rec("dropout3", a)
    cache["dropout3.mask"] = mask
    cache["dense2.in"] = a
    logits = T.dense_forward(a, state.dense("dense2"))
    rec("dense2", logits)
    return (logits[0] if single else logits), cache


def backward(state: ModelState, cache: dict, grad_logits: np.ndarray) -> Dict[str, np.ndarray]:
    """Gradients of the loss w.r.t. every parameter, keyed like ``state.params``."""
    g = grad_logits[None] if grad_logits.ndim == 1 else grad_logits
    grads: Dict[str, np.ndarray] = {}
    g, grads["dense2.weight"], grads["dense2.bias"] = T.dense_backward(cache["dense2.in"], state.dense("dense2"), g)
    g = T.dropout_backward(cache["dropout3.mask"], g)
    g = T.relu_backward(cache["dense1.pre"], g)
    g, grads["dense1.weight"], grads["dense1.bias"] = T.dense_backward(cache["dense1.in"], state.dense("dense1"), g)
    g = g.reshape(cache["flat_shape"])
    for ca, cb, pool, drop in (("conv3", "conv4", "pool2", "dropout2"), ("conv1", "conv2", "pool1", "dropout1")):
        g = T.dropout_backward(cache[f"{drop}.mask"], g)
        g = T.maxpool2x2_backward(cache[f"{pool}.idx"], g)
        g = T.relu_backward(cache[f"{cb}.pre"], g)
        g, grads[f"{cb}.weight"], grads[f"{cb}.bias"] = T.conv2d_backward(cache[f"{cb}.in"], state.conv(cb), g)
        g = T.relu_backward(cache[f"{ca}.pre"], g)
        g, grads[f"{ca}.weight"], grads[f"{ca}.bias"] = T.conv2d_backward(cache[f"{ca}.in"], state.conv(ca), g)
    return {name: grads[name] for name in param_names()}


def loss_and_grads(state: ModelState, x: np.ndarray, labels, train: bool = False, rng=None):
    """Mean softmax cross-entropy over the batch and its parameter gradients."""
    logits, cache = forward(state, x, train=train, rng=rng)
    loss, grad_logits = T.softmax_cross_entropy(logits, labels)
    return loss, backward(state, cache, grad_logits)


def activation_pattern(cache: dict) -> bytes:
    """ReLU sign pattern and pool winners; equal patterns mean the same linear region."""
    parts = [np.packbits(cache[f"{name}.pre"] > 0).tobytes() for name in CONV_LAYERS + ("dense1",)]
    parts += [cache[f"{pool}.idx"].argmax.tobytes() for pool in ("pool1", "pool2")]
    return b"".join(parts)


def shape_trace(state: ModelState, x: np.ndarray | None = None) -> List[Tuple[str, Tuple[int, ...]]]:
    if x is None:
        side = state.config.input_side
        x = np.zeros((side, side, state.config.in_channels), dtype=state.dtype)
    trace: list = []
    forward(state, x, trace=trace)
    return trace


# --------------------------------------------------------------------------
# Inference
# --------------------------------------------------------------------------


def label_from_probs(probs: np.ndarray) -> int:
    """Argmax with ties resolved toward congested."""
    return CONGESTED if probs[..., CONGESTED] >= probs[..., NON_CONGESTED] else NON_CONGESTED


def predict_proba(state: ModelState, x: np.ndarray) -> np.ndarray:
    logits, _ = forward(state, x, train=False)
    return T.softmax(logits)


def predict_labels(state: ModelState, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Integer labels for a batch ``[n, side, side, 3]``."""
    out = []
    for start in range(0, x.shape[0], batch_size):
        probs = predict_proba(state, x[start : start + batch_size])
        out.append(np.where(probs[:, CONGESTED] >= probs[:, NON_CONGESTED], CONGESTED, NON_CONGESTED))
    return np.concatenate(out) if out else np.zeros(0, dtype=int)


def predict(state: ModelState, image: np.ndarray) -> Tuple[np.ndarray, str]:
    """Classify one normalized ``[side, side, 3]`` image.

    Returns ``(probabilities, label_name)`` where probabilities are indexed
    ``[non_congested, congested]``.
    """
    if image.ndim != 3:
        raise ShapeError(f"predict expects a single [side,side,3] image, got shape {image.shape}")
    probs = predict_proba(state, image)
    return probs, LABEL_NAMES[label_from_probs(probs)]


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------


def _header(state: ModelState) -> dict:
    return {
        "version": FORMAT_VERSION,
        "config": state.config.to_dict(),
        "layers": [{"name": k, "shape": list(v.shape)} for k, v in state.params.items()],
        "precision": "float32",
        "byte_order": "little",
    }


def dumps_model(state: ModelState) -> bytes:
    header = json.dumps(_header(state), sort_keys=True, separators=(",", ":")).encode("ascii")
    chunks = [MAGIC, header, b"\n"]
    for arr in state.params.values():
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(chunks)


def save_model(state: ModelState, path) -> None:
    """Write ``state``; 64-bit states are stored rounded to 32-bit floats."""
    Path(path).write_bytes(dumps_model(state))


def loads_model(data: bytes) -> ModelState:
    if not data.startswith(MAGIC):
        raise FormatError(f"bad magic: expected {MAGIC!r}, found {data[:len(MAGIC)]!r}")
    end = data.find(b"\n", len(MAGIC))
    if end < 0:
        raise FormatError("model header is not newline-terminated")
    try:
        header = json.loads(data[len(MAGIC) : end].decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"model header is not valid JSON: {exc}") from exc
    if header.get("precision") != "float32" or header.get("byte_order") != "little":
        raise FormatError(
            f"unsupported payload encoding precision={header.get('precision')!r} "
            f"byte_order={header.get('byte_order')!r}"
        )
    try:
        config = ModelConfig.from_dict(header["config"])
        layers = [(entry["name"], tuple(entry["shape"])) for entry in header["layers"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"model header is incomplete or invalid: {exc}") from exc

    expected_layers = [
        (f"{layer}.{kind}", shapes[i]) for layer, shapes in config.param_shapes().items()
        for i, kind in enumerate(("weight", "bias"))
    ]
    if layers != expected_layers:
        raise FormatError("header/config mismatch: layer list does not match the declared config")

    payload = memoryview(data)[end + 1 :]
    expected_bytes = 4 * sum(int(np.prod(shape)) for _, shape in layers)
    if len(payload) < expected_bytes:
        raise FormatError(
            f"truncated payload: expected {expected_bytes} bytes, got {len(payload)}"
        )
    if len(payload) > expected_bytes:
        raise FormatError(
            f"header/payload size mismatch: header declares {expected_bytes} bytes, payload has {len(payload)}"
        )
    params = {}
    offset = 0
    for name, shape in layers:
        count = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        params[name] = arr.astype(np.float32).reshape(shape)
        offset += 4 * count
    return ModelState(config, params)


def load_model(path) -> ModelState:
    return loads_model(Path(path).read_bytes())


def payload_size(config: ModelConfig) -> int:
    return 4 * config.param_count()
