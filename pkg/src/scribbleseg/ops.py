"""Shared dense-array primitives: resizing, 3x3 convolution, softmax.

Everything here is plain numpy, operates on channel-last arrays, and comes
with the adjoint/backward passes needed by the training loop. Spatial
resampling is bilinear with corner-aligned sampling throughout.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax along `axis`."""
    z = np.asarray(z)
    m = z.max(axis=axis, keepdims=True)
    e = np.exp(z - m)
    return e / e.sum(axis=axis, keepdims=True)


def _resize_axis_weights(src: int, dst: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Corner-aligned bilinear taps for one axis: (lo index, hi index, hi weight)."""
    if src == 1 or dst == 1:
        # degenerate axes: corner alignment collapses onto the first sample
        pos = np.zeros(dst)
    else:
        pos = np.arange(dst, dtype=np.float64) * (src - 1) / (dst - 1)
    lo = np.floor(pos).astype(np.intp)
    lo = np.minimum(lo, src - 1)
    hi = np.minimum(lo + 1, src - 1)
    w_hi = pos - lo
    return lo, hi, w_hi


def bilinear_resize(arr: np.ndarray, out_shape: tuple[int, int]) -> np.ndarray:
    """Resize (..., H, W, C) to (..., out_h, out_w, C), corners aligned.

    When the output shape equals the input shape the result is bit-identical
    to the input.
    """
    h, w = arr.shape[-3], arr.shape[-2]
    oh, ow = out_shape
    if (oh, ow) == (h, w):
        return arr.copy()
    ylo, yhi, wy = _resize_axis_weights(h, oh)
    xlo, xhi, wx = _resize_axis_weights(w, ow)
    wy = wy.reshape(-1, 1, 1)
    wx = wx.reshape(1, -1, 1)
    top = arr[..., ylo, :, :]
    bot = arr[..., yhi, :, :]
    rows = top * (1.0 - wy) + bot * wy
    out = rows[..., :, xlo, :] * (1.0 - wx) + rows[..., :, xhi, :] * wx
    return out


def bilinear_resize_adjoint(grad: np.ndarray, in_shape: tuple[int, int]) -> np.ndarray:
    """Adjoint of `bilinear_resize`: scatter output gradients back to `in_shape`."""
    h, w = in_shape
    oh, ow = grad.shape[-3], grad.shape[-2]
    if (oh, ow) == (h, w):
        return grad.copy()
    ylo, yhi, wy = _resize_axis_weights(h, oh)
    xlo, xhi, wx = _resize_axis_weights(w, ow)
    lead = grad.shape[:-3]
    c = grad.shape[-1]
    rows = np.zeros(lead + (h, ow, c), dtype=grad.dtype)
    gy_lo = grad * (1.0 - wy.reshape(-1, 1, 1))
    gy_hi = grad * wy.reshape(-1, 1, 1)
    np.add.at(rows, (..., ylo, slice(None), slice(None)), gy_lo)
    np.add.at(rows, (..., yhi, slice(None), slice(None)), gy_hi)
    out = np.zeros(lead + (h, w, c), dtype=grad.dtype)
    gx_lo = rows * (1.0 - wx.reshape(1, -1, 1))
    gx_hi = rows * wx.reshape(1, -1, 1)
    np.add.at(out, (..., slice(None), xlo, slice(None)), gx_lo)
    np.add.at(out, (..., slice(None), xhi, slice(None)), gx_hi)
    return out


def _reflect_pad_1(x: np.ndarray) -> np.ndarray:
    """Pad (B, H, W, C) by one pixel on each spatial side, reflecting interiors."""
    b, h, w, c = x.shape
    mode_y = "reflect" if h > 1 else "edge"
    mode_x = "reflect" if w > 1 else "edge"
    out = np.pad(x, ((0, 0), (1, 1), (0, 0), (0, 0)), mode=mode_y)
    out = np.pad(out, ((0, 0), (0, 0), (1, 1), (0, 0)), mode=mode_x)
    return out


def _fold_reflect_pad_1(gpad: np.ndarray, h: int, w: int) -> np.ndarray:
    """Adjoint of `_reflect_pad_1`: fold border gradients onto their sources."""
    g = gpad.copy()
    if h > 1:
        # np.pad reflect: padded row 0 mirrors source row 1, row h+1 mirrors h-2
        g[:, 2, :, :] += g[:, 0, :, :]
        g[:, h - 1, :, :] += g[:, h + 1, :, :]
    else:
        g[:, 1, :, :] += g[:, 0, :, :] + g[:, 2, :, :]
    g = g[:, 1 : h + 1, :, :]
    if w > 1:
        g[:, :, 2, :] += g[:, :, 0, :]
        g[:, :, w - 1, :] += g[:, :, w + 1, :]
    else:
        g[:, :, 1, :] += g[:, :, 0, :] + g[:, :, 2, :]
    return g[:, :, 1 : w + 1, :]


def _im2col3(xpad: np.ndarray, h: int, w: int) -> np.ndarray:
    """Gather 3x3 neighborhoods of a padded (B, H+2, W+2, C) array.

    Returns (B, H, W, 9*C) with the 9 taps ordered row-major.
    """
    cols = [xpad[:, dy : dy + h, dx : dx + w, :] for dy in range(3) for dx in range(3)]
    return np.concatenate(cols, axis=-1)


def conv3x3_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """Reflect-padded 3x3 convolution.

    Args:
        x: (B, H, W, Cin) input.
        weight: (9*Cin, Cout), taps row-major to match `_im2col3`.
        bias: (Cout,).

    Returns:
        (y, cache) with y of shape (B, H, W, Cout).
    """
    b, h, w, cin = x.shape
    if weight.shape[0] != 9 * cin:
        raise ContractError(
            f"conv weight expects {weight.shape[0] // 9} input channels, got {cin}"
        )
    cols = _im2col3(_reflect_pad_1(x), h, w)
    y = cols.reshape(-1, 9 * cin) @ weight + bias
    y = y.reshape(b, h, w, -1)
    return y, (cols, x.shape, weight)


def conv3x3_backward(grad: np.ndarray, cache):
    """Gradients of `conv3x3_forward` w.r.t. input, weight, and bias."""
    cols, x_shape, weight = cache
    b, h, w, cin = x_shape
    g2 = grad.reshape(-1, grad.shape[-1])
    d_weight = cols.reshape(-1, 9 * cin).T @ g2
    d_bias = g2.sum(axis=0)
    d_cols = (g2 @ weight.T).reshape(b, h, w, 9, cin)
    gpad = np.zeros((b, h + 2, w + 2, cin), dtype=grad.dtype)
    k = 0
    for dy in range(3):
        for dx in range(3):
            gpad[:, dy : dy + h, dx : dx + w, :] += d_cols[:, :, :, k, :]
            k += 1
    d_x = _fold_reflect_pad_1(gpad, h, w)
    return d_x, d_weight, d_bias


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(grad: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.where(x > 0.0, grad, 0.0)
