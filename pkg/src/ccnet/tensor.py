"""Layer primitives with analytic backward passes.

Tensors are plain ``numpy.ndarray`` objects.  Image-like activations use
``[height, width, channels]`` layout, optionally with a leading batch axis
``[n, height, width, channels]``; every primitive accepts both forms and
returns the same form it was given.

Precision follows the dtype of the arrays passed in: ``float32`` is the
training default, ``float64`` is used for verification.
"""

from dataclasses import dataclass
from typing import Literal, Tuple

import numpy as np

from .errors import ShapeError

DEFAULT_DTYPE = np.float32

Padding = Literal["same", "valid"]


def dtype_for(precision) -> np.dtype:
    """Map a precision setting (32, 64, "float32", "64-bit", dtype) to a dtype."""
    if isinstance(precision, (int, np.integer)):
        bits = int(precision)
    elif isinstance(precision, str):
        digits = "".join(ch for ch in precision if ch.isdigit())
        bits = int(digits) if digits else 0
    else:
        return np.dtype(precision)
    if bits == 32:
        return np.dtype(np.float32)
    if bits == 64:
        return np.dtype(np.float64)
    raise ValueError(f"unsupported precision {precision!r}; use 32 or 64")


def _check_extents(x: np.ndarray, what: str) -> None:
    if x.ndim == 0 or any(d < 1 for d in x.shape):
        raise ShapeError(f"{what}: all extents must be >= 1, got shape {x.shape}")


def _batched(x: np.ndarray, what: str) -> Tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeError(f"{what}: expected [h,w,c] or [n,h,w,c], got shape {x.shape}")


@dataclass(frozen=True)
class ConvParams:
    kernels: np.ndarray  # [out_channels, kh, kw, in_channels]
    bias: np.ndarray  # [out_channels]
    padding: Padding = "valid"
    stride: int = 1

    def __post_init__(self):
        if self.kernels.ndim != 4:
            raise ShapeError(f"conv kernels must be 4-D [cout,kh,kw,cin], got {self.kernels.shape}")
        if self.bias.shape != (self.kernels.shape[0],):
            raise ShapeError(
                f"conv bias shape {self.bias.shape} does not match {self.kernels.shape[0]} output channels"
            )
        if self.padding not in ("same", "valid"):
            raise ValueError(f"padding must be 'same' or 'valid', got {self.padding!r}")
        if self.stride != 1:
            raise ValueError("only stride 1 is supported")
        kh, kw = self.kernels.shape[1:3]
        if self.padding == "same" and (kh % 2 == 0 or kw % 2 == 0):
            raise ShapeError("same padding requires odd kernel extents")

    @property
    def out_channels(self) -> int:
        return self.kernels.shape[0]

    @property
    def in_channels(self) -> int:
        return self.kernels.shape[3]


@dataclass(frozen=True)
class DenseParams:
    weights: np.ndarray  # [out_units, in_units]
    bias: np.ndarray  # [out_units]

    def __post_init__(self):
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(
                f"dense weights {self.weights.shape} / bias {self.bias.shape} are inconsistent"
            )


# --------------------------------------------------------------------------
# Convolution
# --------------------------------------------------------------------------


def _pad_for(params: ConvParams) -> Tuple[int, int]:
    if params.padding == "same":
        return params.kernels.shape[1] // 2, params.kernels.shape[2] // 2
    return 0, 0


def conv_output_side(side: int, kernel: int, padding: Padding) -> int:
    return side if padding == "same" else side - kernel + 1


def conv2d_forward(x: np.ndarray, params: ConvParams) -> np.ndarray:
    """Cross-correlate ``x`` with ``params.kernels`` and add the bias.

    The loop runs over kernel offsets; each offset is one matrix product
    over all batch items and output positions.
    """
    _check_extents(x, "conv2d_forward input")
    xb, squeeze = _batched(x, "conv2d_forward input")
    n, h, w, cin = xb.shape
    cout, kh, kw, kcin = params.kernels.shape
    if cin != kcin:
        raise ShapeError(f"conv2d_forward: input has {cin} channels, kernels expect {kcin}")
    ph, pw = _pad_for(params)
    if h + 2 * ph < kh or w + 2 * pw < kw:
        raise ShapeError(f"conv2d_forward: input {h}x{w} smaller than kernel {kh}x{kw}")
    if ph or pw:
        xb = np.pad(xb, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    oh = xb.shape[1] - kh + 1
    ow = xb.shape[2] - kw + 1
    out = np.zeros((n, oh, ow, cout), dtype=np.result_type(xb, params.kernels))
    for i in range(kh):
        for j in range(kw):
            out += xb[:, i : i + oh, j : j + ow, :] @ params.kernels[:, i, j, :].T
    out += params.bias
    return out[0] if squeeze else out


def conv2d_backward(x: np.ndarray, params: ConvParams, upstream: np.ndarray):
    """Return ``(grad_input, grad_kernels, grad_bias)`` for :func:`conv2d_forward`."""
    xb, squeeze = _batched(x, "conv2d_backward input")
    ub, _ = _batched(upstream, "conv2d_backward upstream")
    n, h, w, cin = xb.shape
    cout, kh, kw, kcin = params.kernels.shape
    if cin != kcin:
        raise ShapeError(f"conv2d_backward: input has {cin} channels, kernels expect {kcin}")
    ph, pw = _pad_for(params)
    oh = h + 2 * ph - kh + 1
    ow = w + 2 * pw - kw + 1
    if ub.shape != (n, oh, ow, cout):
        raise ShapeError(
            f"conv2d_backward: upstream shape {upstream.shape} != forward output shape "
            f"{(n, oh, ow, cout)[1 if squeeze else 0:]}"
        )
    if ph or pw:
        xb = np.pad(xb, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    dtype = np.result_type(xb, params.kernels, ub)
    grad_xp = np.zeros(xb.shape, dtype=dtype)
    grad_k = np.zeros(params.kernels.shape, dtype=dtype)
    u2 = ub.reshape(-1, cout)
    for i in range(kh):
        for j in range(kw):
            window = xb[:, i : i + oh, j : j + ow, :].reshape(-1, cin)
            grad_k[:, i, j, :] = u2.T @ window
            grad_xp[:, i : i + oh, j : j + ow, :] += ub @ params.kernels[:, i, j, :]
    grad_x = grad_xp[:, ph : ph + h, pw : pw + w, :]
    grad_b = u2.sum(axis=0)
    return (grad_x[0] if squeeze else grad_x), grad_k, grad_b


# --------------------------------------------------------------------------
# Max pooling (2x2, stride 2, floor semantics)
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PoolIndices:
    """Argmax bookkeeping for :func:`maxpool2x2_backward`.

    ``argmax`` holds, for every pooled element, the 0..3 offset of the
    winning position inside its window in row-major order.
    """

    argmax: np.ndarray  # [n, oh, ow, c], int8
    input_shape: Tuple[int, ...]


def maxpool2x2_forward(x: np.ndarray):
    _check_extents(x, "maxpool2x2_forward input")
    xb, squeeze = _batched(x, "maxpool2x2_forward input")
    n, h, w, c = xb.shape
    if h < 2 or w < 2:
        raise ShapeError(f"maxpool2x2_forward: spatial extent {h}x{w} is below 2x2")
    oh, ow = h // 2, w // 2
    win = xb[:, : 2 * oh, : 2 * ow, :].reshape(n, oh, 2, ow, 2, c)
    win = win.transpose(0, 1, 3, 5, 2, 4).reshape(n, oh, ow, c, 4)
    # np.argmax returns the first maximum, i.e. row-major tie-breaking.
    arg = np.argmax(win, axis=-1).astype(np.int8)
    out = np.take_along_axis(win, arg[..., None].astype(np.intp), axis=-1)[..., 0]
    idx = PoolIndices(arg, tuple(x.shape))
    return (out[0] if squeeze else out), idx


def maxpool2x2_backward(indices: PoolIndices, upstream: np.ndarray) -> np.ndarray:
    arg = indices.argmax
    ub, squeeze = _batched(upstream, "maxpool2x2_backward upstream")
    if ub.shape != arg.shape:
        raise ShapeError(
            f"maxpool2x2_backward: upstream shape {upstream.shape} != pooled shape {arg.shape}"
        )
    if arg.size and (arg.min() < 0 or arg.max() > 3):
        raise ShapeError("maxpool2x2_backward: argmax index outside its 2x2 window")
    in_shape = indices.input_shape if len(indices.input_shape) == 4 else (1,) + indices.input_shape
    n, oh, ow, c = arg.shape
    if in_shape[0] != n or in_shape[1] // 2 != oh or in_shape[2] // 2 != ow or in_shape[3] != c:
        raise ShapeError("maxpool2x2_backward: indices do not match recorded input shape")
    onehot = arg[..., None] == np.arange(4, dtype=np.int8)
    scattered = np.where(onehot, ub[..., None], 0).astype(ub.dtype)
    scattered = scattered.reshape(n, oh, ow, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
    grad = np.zeros(in_shape, dtype=ub.dtype)
    grad[:, : 2 * oh, : 2 * ow, :] = scattered.reshape(n, 2 * oh, 2 * ow, c)
    return grad[0] if squeeze else grad


# --------------------------------------------------------------------------
# Elementwise and dense layers
# --------------------------------------------------------------------------


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    if x.shape != upstream.shape:
        raise ShapeError(f"relu_backward: input {x.shape} vs upstream {upstream.shape}")
    return upstream * (x > 0)


def dropout(x: np.ndarray, p: float, mode: str, rng: np.random.Generator | None = None):
    """Inverted dropout.  Returns ``(output, mask)``; ``mask`` is ``None`` in eval mode.

    The mask already carries the ``1/(1-p)`` survivor scale, so the backward
    pass is ``upstream * mask``.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1), got {p}")
    if mode == "eval" or p == 0.0:
        return x, None
    if mode != "train":
        raise ValueError(f"dropout mode must be 'train' or 'eval', got {mode!r}")
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    keep = rng.random(x.shape) >= p
    mask = keep.astype(x.dtype) * x.dtype.type(1.0 / (1.0 - p))
    return x * mask, mask


def dropout_backward(mask: np.ndarray | None, upstream: np.ndarray) -> np.ndarray:
    if mask is None:
        return upstream
    if mask.shape != upstream.shape:
        raise ShapeError(f"dropout_backward: mask {mask.shape} vs upstream {upstream.shape}")
    return upstream * mask


def dense_forward(x: np.ndarray, params: DenseParams) -> np.ndarray:
    """``weights @ x + bias``; ``x`` is ``[in]`` or a batch ``[n, in]``."""
    if x.ndim not in (1, 2) or x.shape[-1] != params.weights.shape[1]:
        raise ShapeError(
            f"dense_forward: input shape {x.shape} incompatible with {params.weights.shape[1]} in_units"
        )
    return x @ params.weights.T + params.bias


def dense_backward(x: np.ndarray, params: DenseParams, upstream: np.ndarray):
    """Return ``(grad_input, grad_weights, grad_bias)``."""
    out_units, in_units = params.weights.shape
    if x.shape[-1] != in_units or upstream.shape != x.shape[:-1] + (out_units,):
        raise ShapeError(
            f"dense_backward: input {x.shape} / upstream {upstream.shape} do not match "
            f"weights {params.weights.shape}"
        )
    x2 = x.reshape(-1, in_units)
    u2 = upstream.reshape(-1, out_units)
    grad_x = upstream @ params.weights
    return grad_x, u2.T @ x2, u2.sum(axis=0)


# --------------------------------------------------------------------------
# Softmax / loss
# --------------------------------------------------------------------------


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, true_class):
    """Cross-entropy of ``softmax(logits)`` against integer class labels.

    For a single ``[k]`` vector returns ``(loss, grad)``.  For a batch
    ``[n, k]`` the loss is the batch mean and the gradient is scaled by
    ``1/n`` accordingly.
    """
    if logits.ndim not in (1, 2) or logits.shape[-1] < 2:
        raise ShapeError(f"softmax_cross_entropy: bad logits shape {logits.shape}")
    single = logits.ndim == 1
    z = logits[None] if single else logits
    labels = np.atleast_1d(np.asarray(true_class))
    if labels.shape != (z.shape[0],):
        raise ShapeError(f"softmax_cross_entropy: {labels.shape[0]} labels for {z.shape[0]} rows")
    if labels.min() < 0 or labels.max() >= z.shape[1]:
        raise ShapeError("softmax_cross_entropy: class index out of range")
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(z.shape[0])
    losses = log_norm - shifted[rows, labels]
    grad = np.exp(shifted - log_norm[:, None])
    grad[rows, labels] -= 1
    n = z.shape[0]
    if single:
        return float(losses[0]), grad[0]
    return float(losses.mean()), grad / n
