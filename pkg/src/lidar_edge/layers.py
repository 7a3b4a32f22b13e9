"""Tensor primitives for the from-scratch networks.

Activations are (channels, height, width) float64 arrays. Convolution
is cross-correlation (no kernel flip) with stride 1 and either same-zero
or valid padding. Every forward has a matching hand-derived backward;
the pair is validated against central finite differences in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError
from .rng import SplitMix64


@dataclass
class ConvParams:
    """One convolution layer: weights (out_ch, in_ch, kh, kw), bias (out_ch,)."""
    weights: np.ndarray
    bias: np.ndarray
    padding: str = "same"  # "same" (zero-padded) or "valid"

    def __post_init__(self):
        if self.weights.ndim != 4 or self.bias.shape != (self.weights.shape[0],):
            raise DimensionError(
                f"conv params inconsistent: W{self.weights.shape} b{self.bias.shape}")
        if self.padding not in ("same", "valid"):
            raise ParameterError(f"unknown padding {self.padding!r}")


def _im2col(x: np.ndarray, kh: int, kw: int, padding: str) -> tuple[np.ndarray, tuple]:
    cin, h, w = x.shape
    if padding == "same":
        if kh % 2 == 0 or kw % 2 == 0:
            raise DimensionError("same padding needs odd kernel dims")
        x = np.pad(x, ((0, 0), (kh // 2, kh // 2), (kw // 2, kw // 2)))
    elif kh > x.shape[1] or kw > x.shape[2]:
        raise DimensionError(f"kernel ({kh},{kw}) larger than input {x.shape} in valid mode")
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
    cin, ho, wo, _, _ = win.shape
    cols = win.transpose(0, 3, 4, 1, 2).reshape(cin * kh * kw, ho * wo)
    return np.ascontiguousarray(cols), (ho, wo)


def conv_forward(x: np.ndarray, p: ConvParams) -> np.ndarray:
    """y[o] = sum_c x[c] (*) W[o,c] + b[o], cross-correlation orientation."""
    cout, cin, kh, kw = p.weights.shape
    if x.ndim != 3 or x.shape[0] != cin:
        raise DimensionError(f"input {x.shape} does not match in_ch={cin}")
    cols, (ho, wo) = _im2col(x, kh, kw, p.padding)
    y = p.weights.reshape(cout, cin * kh * kw) @ cols + p.bias[:, np.newaxis]
    return y.reshape(cout, ho, wo)


def conv_backward(x: np.ndarray, p: ConvParams,
                  d_out: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (dX, dW, db) of a scalar loss given d_out = dL/dy."""
    cout, cin, kh, kw = p.weights.shape
    cols, (ho, wo) = _im2col(x, kh, kw, p.padding)
    d_mat = d_out.reshape(cout, ho * wo)
    d_w = (d_mat @ cols.T).reshape(p.weights.shape)
    d_b = d_mat.sum(axis=1)
    d_cols = (p.weights.reshape(cout, cin * kh * kw).T @ d_mat)
    d_cols = d_cols.reshape(cin, kh, kw, ho, wo)
    if p.padding == "same":
        ph, pw = kh // 2, kw // 2
    else:
        ph = pw = 0
    d_pad = np.zeros((cin, x.shape[1] + 2 * ph, x.shape[2] + 2 * pw))
    for i in range(kh):
        for j in range(kw):
            d_pad[:, i:i + ho, j:j + wo] += d_cols[:, i, j]
    d_x = d_pad[:, ph:ph + x.shape[1], pw:pw + x.shape[2]]
    return d_x, d_w, d_b


def maxpool2x2_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Stride-2 2x2 max pooling.

    Odd spatial dims are padded on the right/bottom by edge replication
    before pooling. Returns (pooled, argmax) where argmax holds the
    row-major index (0..3) of the first maximum inside each window.
    """
    if x.ndim != 3:
        raise DimensionError(f"expected (C,H,W), got {x.shape}")
    c, h, w = x.shape
    if h % 2 or w % 2:
        x = np.pad(x, ((0, 0), (0, h % 2), (0, w % 2)), mode="edge")
        c, h, w = x.shape
    win = x.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4)
    flat = win.reshape(c, h // 2, w // 2, 4)
    arg = flat.argmax(axis=3)  # first max in row-major window order
    pooled = np.take_along_axis(flat, arg[..., np.newaxis], axis=3)[..., 0]
    return pooled, arg


def maxpool2x2_backward(x_shape: tuple, arg: np.ndarray,
                        d_out: np.ndarray) -> np.ndarray:
    """Route each window's gradient to its argmax position.

    x_shape is the ORIGINAL (possibly odd) input shape; gradient flowing
    into replicated pad cells folds back onto the edge source cells.
    """
    c, h, w = x_shape
    hp, wp = h + h % 2, w + w % 2
    flat = np.zeros((c, hp // 2, wp // 2, 4))
    np.put_along_axis(flat, arg[..., np.newaxis], d_out[..., np.newaxis], axis=3)
    d_pad = flat.reshape(c, hp // 2, wp // 2, 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, hp, wp)
    if hp != h:
        d_pad[:, h - 1, :] += d_pad[:, h, :]
    if wp != w:
        d_pad[:, :, w - 1] += d_pad[:, :, w]
    return d_pad[:, :h, :w]


def upsample_nearest(x: np.ndarray, factor: int) -> np.ndarray:
    """Replicate each pixel into a factor x factor block."""
    factor = int(factor)
    if factor < 1:
        raise ParameterError(f"upsample factor must be >= 1, got {factor}")
    if factor == 1:
        return x.copy()
    return np.repeat(np.repeat(x, factor, axis=-2), factor, axis=-1)


def upsample_nearest_backward(d_out: np.ndarray, factor: int) -> np.ndarray:
    """Sum the gradient over each replication block."""
    factor = int(factor)
    if factor == 1:
        return d_out.copy()
    *lead, h, w = d_out.shape
    view = d_out.reshape(*lead, h // factor, factor, w // factor, factor)
    return view.sum(axis=(-3, -1))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, d_out: np.ndarray) -> np.ndarray:
    return d_out * (x > 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(y: np.ndarray, d_out: np.ndarray) -> np.ndarray:
    """Gradient through sigmoid given its OUTPUT y."""
    return d_out * y * (1.0 - y)


@dataclass
class DenseParams:
    """Fully connected layer: weights (out, in), bias (out,)."""
    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise DimensionError(
                f"dense params inconsistent: W{self.weights.shape} b{self.bias.shape}")


def dense_forward(x: np.ndarray, p: DenseParams) -> np.ndarray:
    if x.shape != (p.weights.shape[1],):
        raise DimensionError(f"dense input {x.shape} vs in={p.weights.shape[1]}")
    return p.weights @ x + p.bias


def dense_backward(x: np.ndarray, p: DenseParams,
                   d_out: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return p.weights.T @ d_out, np.outer(d_out, x), d_out.copy()


def dropout_mask(shape: tuple, rate: float, seed: int) -> np.ndarray:
    """Inverted-dropout multiplier: 0 with probability `rate`, else
    1/(1-rate), drawn row-major from the SplitMix64 stream for `seed`."""
    if not (0.0 <= rate < 1.0):
        raise ParameterError(f"dropout rate must lie in [0, 1), got {rate}")
    if rate == 0.0:
        return np.ones(shape)
    rng = SplitMix64(seed)
    keep = rng.floats(int(np.prod(shape))).reshape(shape) >= rate
    return keep / (1.0 - rate)
