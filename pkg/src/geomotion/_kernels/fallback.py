"""Pure-NumPy implementations of the hot kernels.

Same signatures and semantics as the compiled extension. Convolutions are
stride 1 with zero "same" padding and odd kernel sizes; bilinear resize uses
half-pixel (align_corners=False) source coordinates clamped to the image.
"""

import numpy as np


def _im2col(x, kh, kw):
    # x: [N, C, H, W] -> [N*H*W, C*kh*kw], zero padded so output keeps H, W
    n, c, h, w = x.shape
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    # win: [N, C, H, W, kh, kw] -> [N, H, W, C, kh, kw]
    col = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c * kh * kw)
    return col


def conv2d_forward(x, w, b=None):
    """x [N,Ci,H,W], w [Co,Ci,kh,kw], b [Co] or None -> y [N,Co,H,W]."""
    n, ci, h, wd = x.shape
    co, _, kh, kw = w.shape
    col = _im2col(x, kh, kw)
    y = col @ w.reshape(co, ci * kh * kw).T
    if b is not None:
        y = y + b
    return np.ascontiguousarray(
        y.reshape(n, h, wd, co).transpose(0, 3, 1, 2), dtype=x.dtype
    )


def conv2d_backward_input(gy, w):
    """gy [N,Co,H,W], w [Co,Ci,kh,kw] -> gx [N,Ci,H,W]."""
    # Correlation with the spatially flipped kernel, channel axes swapped.
    wt = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    return conv2d_forward(gy, wt)


def conv2d_backward_weight(gy, x, kh, kw):
    """gy [N,Co,H,W], x [N,Ci,H,W] -> gw [Co,Ci,kh,kw]."""
    n, co, h, wd = gy.shape
    ci = x.shape[1]
    col = _im2col(x, kh, kw)
    gw = gy.transpose(1, 0, 2, 3).reshape(co, n * h * wd) @ col
    return np.ascontiguousarray(gw.reshape(co, ci, kh, kw), dtype=x.dtype)


def _resize_coords(out_size, in_size, scale):
    src = (np.arange(out_size) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, in_size - 1.0)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, in_size - 1)
    frac = src - i0
    return i0, i1, frac


def bilinear_resize_forward(x, oh, ow):
    """x [N,C,H,W] -> y [N,C,oh,ow]."""
    n, c, h, w = x.shape
    y0, y1, fy = _resize_coords(oh, h, h / oh)
    x0, x1, fx = _resize_coords(ow, w, w / ow)
    fy = fy.astype(x.dtype)[:, None]
    fx = fx.astype(x.dtype)[None, :]
    top = x[:, :, y0][:, :, :, x0] * (1 - fx) + x[:, :, y0][:, :, :, x1] * fx
    bot = x[:, :, y1][:, :, :, x0] * (1 - fx) + x[:, :, y1][:, :, :, x1] * fx
    return np.ascontiguousarray(top * (1 - fy) + bot * fy, dtype=x.dtype)


def bilinear_resize_backward(gy, h, w):
    """gy [N,C,oh,ow] -> gx [N,C,h,w], adjoint of bilinear_resize_forward."""
    n, c, oh, ow = gy.shape
    y0, y1, fy = _resize_coords(oh, h, h / oh)
    x0, x1, fx = _resize_coords(ow, w, w / ow)
    gx = np.zeros((n, c, h, w), dtype=gy.dtype)
    wy0 = (1 - fy)[:, None]
    wy1 = fy[:, None]
    wx0 = (1 - fx)[None, :]
    wx1 = fx[None, :]
    yy0 = np.broadcast_to(y0[:, None], (oh, ow)).ravel()
    yy1 = np.broadcast_to(y1[:, None], (oh, ow)).ravel()
    xx0 = np.broadcast_to(x0[None, :], (oh, ow)).ravel()
    xx1 = np.broadcast_to(x1[None, :], (oh, ow)).ravel()
    g = gy.reshape(n, c, oh * ow)
    for wyy, wxx, iy, ix in (
        (wy0, wx0, yy0, xx0),
        (wy0, wx1, yy0, xx1),
        (wy1, wx0, yy1, xx0),
        (wy1, wx1, yy1, xx1),
    ):
        contrib = g * (wyy * wxx).astype(gy.dtype).ravel()
        np.add.at(gx.reshape(n, c, h * w), (slice(None), slice(None), iy * w + ix), contrib)
    return gx
