"""A small 3D convolutional network built directly on f64 numpy arrays.

Clips are (T, H, W, C) arrays; a conv layer cross-correlates a
(out_ch, kt, kh, kw, in_ch) kernel over the three leading axes with stride 1
and zero padding, adds a bias, and optionally applies ReLU. Everything is
float64 so analytic gradients can be checked against central finite
differences down to 1e-8; performance at desk scale is not a goal.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

ACTIVATIONS = ("identity", "relu")


class NetError(ValueError):
    """Raised for malformed layer shapes, inputs, or diverging training."""


@dataclass(frozen=True)
class ConvSpec:
    """One conv layer: kernel extents, channels, zero padding, activation."""

    kt: int
    kh: int
    kw: int
    in_ch: int
    out_ch: int
    pad_t: int = 0
    pad_h: int = 0
    pad_w: int = 0
    activation: str = "identity"

    def __post_init__(self) -> None:
        if min(self.kt, self.kh, self.kw, self.in_ch, self.out_ch) < 1:
            raise NetError(f"kernel extents and channels must be >= 1, got {self}")
        if min(self.pad_t, self.pad_h, self.pad_w) < 0:
            raise NetError(f"padding must be >= 0, got {self}")
        if self.activation not in ACTIVATIONS:
            raise NetError(f"unknown activation {self.activation!r}, expected one of {ACTIVATIONS}")

    @property
    def kernel_shape(self) -> tuple[int, int, int, int, int]:
        return (self.out_ch, self.kt, self.kh, self.kw, self.in_ch)

    @property
    def fan_in(self) -> int:
        return self.kt * self.kh * self.kw * self.in_ch


@dataclass
class Network:
    """Ordered conv layers with their parameters."""

    specs: tuple[ConvSpec, ...]
    kernels: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self) -> None:
        self.specs = tuple(self.specs)
        if not self.specs:
            raise NetError("network needs at least one layer")
        for prev, nxt in zip(self.specs, self.specs[1:]):
            if prev.out_ch != nxt.in_ch:
                raise NetError(f"channel mismatch between layers: {prev.out_ch} -> {nxt.in_ch}")
        if len(self.kernels) != len(self.specs) or len(self.biases) != len(self.specs):
            raise NetError("one kernel and bias per layer required")
        for spec, k, b in zip(self.specs, self.kernels, self.biases):
            if k.shape != spec.kernel_shape:
                raise NetError(f"kernel shape {k.shape} does not match spec {spec.kernel_shape}")
            if b.shape != (spec.out_ch,):
                raise NetError(f"bias shape {b.shape} does not match out_ch {spec.out_ch}")

    @property
    def n_params(self) -> int:
        return sum(k.size + b.size for k, b in zip(self.kernels, self.biases))

    def copy(self) -> "Network":
        return Network(
            specs=self.specs,
            kernels=[k.copy() for k in self.kernels],
            biases=[b.copy() for b in self.biases],
        )


def default_specs(in_ch: int = 3) -> tuple[ConvSpec, ...]:
    """Reference architecture: with T_in=4 the temporal length shrinks to 2."""
    return (
        ConvSpec(3, 3, 3, in_ch, 8, pad_t=1, pad_h=1, pad_w=1, activation="relu"),
        ConvSpec(3, 3, 3, 8, 8, pad_t=0, pad_h=1, pad_w=1, activation="relu"),
        ConvSpec(1, 1, 1, 8, 1, activation="identity"),
    )


def init_network(specs: Sequence[ConvSpec], seed: int) -> Network:
    """Seeded uniform init in [-s, s] with s = 1/sqrt(fan_in), per layer."""
    rng = np.random.default_rng(seed)
    kernels, biases = [], []
    for spec in specs:
        s = 1.0 / np.sqrt(spec.fan_in)
        kernels.append(rng.uniform(-s, s, size=spec.kernel_shape))
        biases.append(rng.uniform(-s, s, size=spec.out_ch))
    return Network(specs=tuple(specs), kernels=kernels, biases=biases)


def _check_clip(x: np.ndarray, what: str = "input") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise NetError(f"{what} must be (T, H, W, C), got shape {x.shape}")
    return x


def _pad(x: np.ndarray, pads: tuple[int, int, int]) -> np.ndarray:
    pt, ph, pw = pads
    if pt == ph == pw == 0:
        return x
    return np.pad(x, ((pt, pt), (ph, ph), (pw, pw), (0, 0)))


def _windows(padded: np.ndarray, spec_k: tuple[int, int, int]) -> np.ndarray:
    # (T', H', W', C, kt, kh, kw) view, no copy
    return sliding_window_view(padded, spec_k, axis=(0, 1, 2))


def conv3d_forward(
    x: np.ndarray,
    kernel: np.ndarray,
    bias: np.ndarray,
    padding: tuple[int, int, int] = (0, 0, 0),
) -> np.ndarray:
    """Cross-correlation over (t, h, w); output extent D' = D + 2*pad - k + 1."""
    x = _check_clip(x)
    out_ch, kt, kh, kw, in_ch = kernel.shape
    if x.shape[3] != in_ch:
        raise NetError(f"input has {x.shape[3]} channels, kernel expects {in_ch}")
    padded = _pad(x, padding)
    for axis, k in zip(range(3), (kt, kh, kw)):
        if padded.shape[axis] < k:
            raise NetError(
                f"kernel extent {(kt, kh, kw)} exceeds padded input {padded.shape[:3]} on axis {axis}"
            )
    win = _windows(padded, (kt, kh, kw))
    t, h, w = win.shape[:3]
    cols = np.moveaxis(win, 3, 6).reshape(t * h * w, kt * kh * kw * in_ch)
    kmat = kernel.reshape(out_ch, kt * kh * kw * in_ch)
    out = cols @ kmat.T + bias
    return out.reshape(t, h, w, out_ch)


def conv3d_backward(
    x: np.ndarray,
    kernel: np.ndarray,
    upstream: np.ndarray,
    padding: tuple[int, int, int] = (0, 0, 0),
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact gradients of conv3d_forward wrt input, kernel, and bias."""
    x = _check_clip(x)
    upstream = np.asarray(upstream, dtype=np.float64)
    out_ch, kt, kh, kw, in_ch = kernel.shape
    padded = _pad(x, padding)
    t = padded.shape[0] - kt + 1
    h = padded.shape[1] - kh + 1
    w = padded.shape[2] - kw + 1
    if upstream.shape != (t, h, w, out_ch):
        raise NetError(f"upstream shape {upstream.shape} does not match output {(t, h, w, out_ch)}")

    up_mat = upstream.reshape(t * h * w, out_ch)
    win = _windows(padded, (kt, kh, kw))
    cols = np.moveaxis(win, 3, 6).reshape(t * h * w, kt * kh * kw * in_ch)
    grad_kernel = (up_mat.T @ cols).reshape(kernel.shape)
    grad_bias = up_mat.sum(axis=0)

    grad_padded = np.zeros_like(padded)
    for i in range(kt):
        for j in range(kh):
            for k in range(kw):
                contrib = up_mat @ kernel[:, i, j, k, :]  # (t*h*w, in_ch)
                grad_padded[i : i + t, j : j + h, k : k + w, :] += contrib.reshape(t, h, w, in_ch)
    pt, ph, pw = padding
    grad_x = grad_padded[pt : pt + x.shape[0], ph : ph + x.shape[1], pw : pw + x.shape[2], :]
    return grad_x, grad_kernel, grad_bias


def _layer_forward(x: np.ndarray, spec: ConvSpec, kernel: np.ndarray, bias: np.ndarray):
    z = conv3d_forward(x, kernel, bias, (spec.pad_t, spec.pad_h, spec.pad_w))
    a = np.maximum(z, 0.0) if spec.activation == "relu" else z
    return a, (x, z)


def forward(net: Network, clip: np.ndarray) -> np.ndarray:
    """Apply all layers to a (T, H, W, C) clip."""
    a, _ = forward_cached(net, clip)
    return a


def forward_cached(net: Network, clip: np.ndarray):
    a = _check_clip(clip, "clip")
    if a.shape[3] != net.specs[0].in_ch:
        raise NetError(f"clip has {a.shape[3]} channels, network expects {net.specs[0].in_ch}")
    caches = []
    for spec, kernel, bias in zip(net.specs, net.kernels, net.biases):
        a, cache = _layer_forward(a, spec, kernel, bias)
        caches.append(cache)
    return a, caches


def backward(net: Network, caches, grad_out: np.ndarray):
    """Walk layers in reverse; returns per-layer (grad_kernel, grad_bias)."""
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(net.specs)  # type: ignore[list-item]
    g = np.asarray(grad_out, dtype=np.float64)
    for i in range(len(net.specs) - 1, -1, -1):
        spec = net.specs[i]
        x, z = caches[i]
        if spec.activation == "relu":
            g = g * (z > 0)
        g, gk, gb = conv3d_backward(x, net.kernels[i], g, (spec.pad_t, spec.pad_h, spec.pad_w))
        grads[i] = (gk, gb)
    return grads


def mae_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean absolute error and its subgradient wrt pred (sign(0) = 0)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise NetError(f"pred shape {pred.shape} != target shape {target.shape}")
    diff = pred - target
    loss = float(np.abs(diff).mean())
    grad = np.sign(diff) / diff.size
    return loss, grad


def sgd_fit(
    specs: Sequence[ConvSpec] | Network,
    dataset: Sequence[tuple[np.ndarray, np.ndarray]],
    lr: float,
    epochs: int,
    seed: int = 0,
) -> tuple[Network, list[float]]:
    """In-order minibatch-of-1 SGD from a seeded init; one history entry per epoch.

    Passing a Network trains it in place from its current parameters instead
    of reinitializing (the seed is then unused).
    """
    if lr < 0:
        raise NetError(f"learning rate must be >= 0, got {lr}")
    if not dataset:
        raise NetError("dataset must be non-empty")
    net = specs if isinstance(specs, Network) else init_network(specs, seed)
    history: list[float] = []
    for epoch in range(epochs):
        total = 0.0
        for clip, target in dataset:
            pred, caches = forward_cached(net, clip)
            loss, grad = mae_loss(pred, target)
            if not np.isfinite(loss):
                raise NetError(f"non-finite loss at epoch {epoch}")
            total += loss
            grads = backward(net, caches, grad)
            for (gk, gb), kernel, bias in zip(grads, net.kernels, net.biases):
                kernel -= lr * gk
                bias -= lr * gb
        history.append(total / len(dataset))
    return net, history


def grad_check(net: Network, clip: np.ndarray, target: np.ndarray, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients."""
    pred, caches = forward_cached(net, clip)
    _, grad = mae_loss(pred, target)
    analytic = backward(net, caches, grad)

    def loss_now() -> float:
        out = forward(net, clip)
        return mae_loss(out, target)[0]

    worst = 0.0
    for layer, (gk, gb) in enumerate(analytic):
        for param, grad_arr in ((net.kernels[layer], gk), (net.biases[layer], gb)):
            flat = param.reshape(-1)
            gflat = grad_arr.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                up = loss_now()
                flat[i] = orig - eps
                down = loss_now()
                flat[i] = orig
                numeric = (up - down) / (2.0 * eps)
                a = gflat[i]
                rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-12)
                worst = max(worst, rel)
    return worst


_NET_MAGIC = b"RFN1"
_ACT_CODES = {name: i for i, name in enumerate(ACTIVATIONS)}


def save_network(net: Network, sink: IO[bytes]) -> int:
    """Length-prefixed little-endian parameter blob for train/predict handoff."""
    parts = [_NET_MAGIC, struct.pack("<I", len(net.specs))]
    for spec, kernel, bias in zip(net.specs, net.kernels, net.biases):
        parts.append(
            struct.pack(
                "<8IB",
                spec.kt, spec.kh, spec.kw, spec.in_ch, spec.out_ch,
                spec.pad_t, spec.pad_h, spec.pad_w,
                _ACT_CODES[spec.activation],
            )
        )
        parts.append(kernel.astype("<f8").tobytes())
        parts.append(bias.astype("<f8").tobytes())
    blob = b"".join(parts)
    sink.write(blob)
    return len(blob)


def load_network(source: IO[bytes]) -> Network:
    def need(n: int, what: str) -> bytes:
        data = source.read(n)
        if len(data) != n:
            raise NetError(f"truncated network blob: expected {n} bytes for {what}")
        return data

    if need(4, "magic") != _NET_MAGIC:
        raise NetError("not a network parameter blob")
    (n_layers,) = struct.unpack("<I", need(4, "layer count"))
    specs, kernels, biases = [], [], []
    for _ in range(n_layers):
        kt, kh, kw, in_ch, out_ch, pt, ph, pw, act = struct.unpack("<8IB", need(33, "layer spec"))
        if act >= len(ACTIVATIONS):
            raise NetError(f"unknown activation code {act}")
        spec = ConvSpec(kt, kh, kw, in_ch, out_ch, pt, ph, pw, ACTIVATIONS[act])
        n_k = out_ch * kt * kh * kw * in_ch
        kernel = np.frombuffer(need(8 * n_k, "kernel"), dtype="<f8").reshape(spec.kernel_shape).copy()
        bias = np.frombuffer(need(8 * out_ch, "bias"), dtype="<f8").copy()
        specs.append(spec)
        kernels.append(kernel)
        biases.append(bias)
    return Network(specs=tuple(specs), kernels=kernels, biases=biases)
