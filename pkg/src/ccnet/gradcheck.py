"""Central finite-difference verification of analytic gradients."""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Tuple

import numpy as np

from . import model as M
from . import tensor as T
from .rng import make_rng

REL_FLOOR = 1e-8


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), REL_FLOOR)


@dataclass
class GradSample:
    name: str
    index: Tuple[int, ...]
    analytic: float
    numeric: float

    @property
    def rel_error(self) -> float:
        return relative_error(self.analytic, self.numeric)


@dataclass
class GradReport:
    per_param: Dict[str, float] = field(default_factory=dict)
    samples: List[GradSample] = field(default_factory=list)
    finite: bool = True
    skipped: int = 0

    @property
    def max_rel_error(self) -> float:
        if not self.finite:
            return float("inf")
        return max(self.per_param.values(), default=0.0)

    def passed(self, tol: float = 1e-4) -> bool:
        return self.finite and self.max_rel_error < tol


def gradient_check(
    loss_fn: Callable[[], float],
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    eps: float = 1e-3,
    n_samples: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradReport:
    """Compare ``grads`` with central differences of ``loss_fn``.

    ``loss_fn`` takes no arguments and must read the arrays in ``params``,
    which are perturbed in place (and restored) one element at a time.
    With ``n_samples=None`` every element is checked; otherwise
    ``n_samples`` positions are drawn round-robin across the tensors so
    small ones are not starved.

    ``loss_fn`` may return ``(loss, region)`` where ``region`` identifies the
    piecewise-smooth region (e.g. the ReLU sign pattern).  A position whose
    ``theta +/- eps`` evaluations leave the base region straddles a kink; it is
    skipped, counted in ``report.skipped``, and replaced by another draw.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    for name, arr in params.items():
        if arr.dtype != np.float64:
            raise TypeError(f"gradient_check needs float64 parameters; {name} is {arr.dtype}")
        if grads[name].shape != arr.shape:
            raise ValueError(f"gradient for {name} has shape {grads[name].shape}, expected {arr.shape}")

    def evaluate():
        out = loss_fn()
        return (float(out[0]), out[1]) if isinstance(out, tuple) else (float(out), None)

    _, base_region = evaluate()
    names = list(params)
    report = GradReport(per_param={name: 0.0 for name in names})

    def probe(name: str, flat: int) -> bool:
        arr = params[name]
        idx = np.unravel_index(flat, arr.shape)
        orig = arr[idx]
        arr[idx] = orig + eps
        f_plus, r_plus = evaluate()
        arr[idx] = orig - eps
        f_minus, r_minus = evaluate()
        arr[idx] = orig
        if base_region is not None and (r_plus != base_region or r_minus != base_region):
            report.skipped += 1
            return False
        numeric = (f_plus - f_minus) / (2 * eps)
        analytic = float(grads[name][idx])
        sample = GradSample(name, tuple(int(i) for i in idx), analytic, numeric)
        report.samples.append(sample)
        if not (np.isfinite(numeric) and np.isfinite(analytic)):
            report.finite = False
        else:
            report.per_param[name] = max(report.per_param[name], sample.rel_error)
        return True

    if n_samples is None:
        for name in names:
            for flat in range(params[name].size):
                probe(name, flat)
        return report

    rng = rng if rng is not None else make_rng(0)
    # Round-robin over tensors, one accepted position per visit, until the
    # budget is met or every tensor has run out of candidates.
    pending = {name: iter(rng.permutation(params[name].size)) for name in names}
    accepted = 0
    while pending and accepted < n_samples:
        for name in list(pending):
            if accepted >= n_samples:
                break
            for flat in pending[name]:
                if probe(name, int(flat)):
                    accepted += 1
                    break
            else:
                del pending[name]
    return report


# --------------------------------------------------------------------------
# Per-primitive checks on randomized small instances
# --------------------------------------------------------------------------


def _away_from_zero(rng, shape, margin=0.1):
    x = rng.uniform(margin, 1.0, size=shape)
    return x * rng.choice([-1.0, 1.0], size=shape)


def check_conv(rng, padding="same", eps=1e-3) -> GradReport:
    x = rng.standard_normal((5, 5, 2))
    k = rng.standard_normal((3, 3, 3, 2))
    b = rng.standard_normal(3)
    up = rng.standard_normal((5, 5, 3) if padding == "same" else (3, 3, 3))
    params = {"input": x, "kernels": k, "bias": b}

    def loss():
        return float(np.sum(up * T.conv2d_forward(x, T.ConvParams(k, b, padding))))

    gx, gk, gb = T.conv2d_backward(x, T.ConvParams(k, b, padding), up)
    return gradient_check(loss, params, {"input": gx, "kernels": gk, "bias": gb}, eps)


def check_maxpool(rng, eps=1e-3) -> GradReport:
    # Distinct values spaced well beyond 2*eps so no perturbation flips a window winner.
    x = rng.permutation(6 * 6 * 2).reshape(6, 6, 2).astype(np.float64) * 0.01
    up = rng.standard_normal((3, 3, 2))
    params = {"input": x}

    def loss():
        return float(np.sum(up * T.maxpool2x2_forward(x)[0]))

    _, idx = T.maxpool2x2_forward(x)
    return gradient_check(loss, params, {"input": T.maxpool2x2_backward(idx, up)}, eps)


def check_relu(rng, eps=1e-3) -> GradReport:
    x = _away_from_zero(rng, (4, 4, 3))
    up = rng.standard_normal(x.shape)
    params = {"input": x}

    def loss():
        return float(np.sum(up * T.relu(x)))

    return gradient_check(loss, params, {"input": T.relu_backward(x, up)}, eps)


def check_dense(rng, eps=1e-3) -> GradReport:
    x = rng.standard_normal(8)
    w = rng.standard_normal((4, 8))
    b = rng.standard_normal(4)
    up = rng.standard_normal(4)
    params = {"input": x, "weights": w, "bias": b}

    def loss():
        return float(np.sum(up * T.dense_forward(x, T.DenseParams(w, b))))

    gx, gw, gb = T.dense_backward(x, T.DenseParams(w, b), up)
    return gradient_check(loss, params, {"input": gx, "weights": gw, "bias": gb}, eps)


def check_dropout(rng, eps=1e-3) -> GradReport:
    # A fixed mask makes dropout linear in its input; reuse the drawn mask.
    x = rng.standard_normal((4, 4, 2))
    up = rng.standard_normal(x.shape)
    _, mask = T.dropout(x, 0.25, "train", rng)
    params = {"input": x}

    def loss():
        return float(np.sum(up * x * mask))

    return gradient_check(loss, params, {"input": T.dropout_backward(mask, up)}, eps)


def check_softmax_ce(rng, eps=1e-3) -> GradReport:
    z = rng.standard_normal(2)
    label = int(rng.integers(2))
    params = {"logits": z}

    def loss():
        return T.softmax_cross_entropy(z, label)[0]

    return gradient_check(loss, params, {"logits": T.softmax_cross_entropy(z, label)[1]}, eps)


PRIMITIVE_CHECKS = {
    "conv2d_same": lambda rng, eps: check_conv(rng, "same", eps),
    "conv2d_valid": lambda rng, eps: check_conv(rng, "valid", eps),
    "maxpool2x2": check_maxpool,
    "relu": check_relu,
    "dropout": check_dropout,
    "dense": check_dense,
    "softmax_cross_entropy": check_softmax_ce,
}


def check_primitives(seed: int = 0, eps: float = 1e-3) -> Dict[str, GradReport]:
    rng = make_rng(seed)
    return {name: fn(rng, eps) for name, fn in PRIMITIVE_CHECKS.items()}


# --------------------------------------------------------------------------
# Whole-network check
# --------------------------------------------------------------------------

SCALES = {
    "tiny": M.ModelConfig(input_side=16, conv_channels=(4, 8), dense_units=16),
    "small": M.ModelConfig(input_side=32, dense_units=64),
}


def check_network(
    config: M.ModelConfig = SCALES["small"],
    seed: int = 42,
    n_samples: int = 100,
    eps: float = 1e-3,
    batch: int = 2,
    loss_weight: float = 1.0,
) -> GradReport:
    """Finite-difference check of the full network in float64, eval mode.

    Inputs are uniform random images with random labels; the loss is
    ``loss_weight`` times the mean cross-entropy.  Positions whose stencil
    crosses a ReLU or pooling boundary are replaced (see :func:`gradient_check`).
    """
    state = M.build_model(config, seed, precision=64)
    rng = make_rng(seed, 7)
    side = config.input_side
    x = rng.random((batch, side, side, config.in_channels))
    y = rng.integers(0, 2, size=batch)

    def loss_fn():
        logits, cache = M.forward(state, x)
        loss, _ = T.softmax_cross_entropy(logits, y)
        return loss_weight * loss, M.activation_pattern(cache)

    loss, grads = M.loss_and_grads(state, x, y)
    grads = {k: loss_weight * g for k, g in grads.items()}
    return gradient_check(loss_fn, state.params, grads, eps, n_samples, rng)
