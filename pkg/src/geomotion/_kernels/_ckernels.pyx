# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: stride-1 same-padding 2-D convolution and bilinear
resize, forward and backward, for float32/float64 NCHW arrays.

Semantics match geomotion._kernels.fallback exactly up to floating-point
summation order.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()

ctypedef fused floating:
    float
    double


def conv2d_forward(floating[:, :, :, ::1] x, floating[:, :, :, ::1] w, b=None):
    cdef Py_ssize_t n = x.shape[0], ci = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t co = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ph = kh // 2, pw = kw // 2
    cdef Py_ssize_t b_, o, c, i, j, di, dj, ii, jj
    cdef floating acc

    dtype = np.float32 if floating is float else np.float64
    y_arr = np.zeros((n, co, h, wd), dtype=dtype)
    cdef floating[:, :, :, ::1] y = y_arr
    cdef floating[::1] bias
    cdef bint has_bias = b is not None
    if has_bias:
        bias = np.ascontiguousarray(b, dtype=dtype)

    with nogil:
        for b_ in range(n):
            for o in range(co):
                for i in range(h):
                    for j in range(wd):
                        acc = 0
                        for c in range(ci):
                            for di in range(kh):
                                ii = i + di - ph
                                if ii < 0 or ii >= h:
                                    continue
                                for dj in range(kw):
                                    jj = j + dj - pw
                                    if jj < 0 or jj >= wd:
                                        continue
                                    acc += x[b_, c, ii, jj] * w[o, c, di, dj]
                        if has_bias:
                            acc += bias[o]
                        y[b_, o, i, j] = acc
    return y_arr


def conv2d_backward_input(floating[:, :, :, ::1] gy, floating[:, :, :, ::1] w):
    cdef Py_ssize_t n = gy.shape[0], co = gy.shape[1], h = gy.shape[2], wd = gy.shape[3]
    cdef Py_ssize_t ci = w.shape[1], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ph = kh // 2, pw = kw // 2
    cdef Py_ssize_t b_, o, c, i, j, di, dj, ii, jj
    cdef floating g

    dtype = np.float32 if floating is float else np.float64
    gx_arr = np.zeros((n, ci, h, wd), dtype=dtype)
    cdef floating[:, :, :, ::1] gx = gx_arr

    with nogil:
        for b_ in range(n):
            for o in range(co):
                for i in range(h):
                    for j in range(wd):
                        g = gy[b_, o, i, j]
                        for c in range(ci):
                            for di in range(kh):
                                ii = i + di - ph
                                if ii < 0 or ii >= h:
                                    continue
                                for dj in range(kw):
                                    jj = j + dj - pw
                                    if jj < 0 or jj >= wd:
                                        continue
                                    gx[b_, c, ii, jj] += g * w[o, c, di, dj]
    return gx_arr


def conv2d_backward_weight(floating[:, :, :, ::1] gy, floating[:, :, :, ::1] x,
                           Py_ssize_t kh, Py_ssize_t kw):
    cdef Py_ssize_t n = gy.shape[0], co = gy.shape[1], h = gy.shape[2], wd = gy.shape[3]
    cdef Py_ssize_t ci = x.shape[1]
    cdef Py_ssize_t ph = kh // 2, pw = kw // 2
    cdef Py_ssize_t b_, o, c, i, j, di, dj, ii, jj
    cdef floating g

    dtype = np.float32 if floating is float else np.float64
    gw_arr = np.zeros((co, ci, kh, kw), dtype=dtype)
    cdef floating[:, :, :, ::1] gw = gw_arr

    with nogil:
        for b_ in range(n):
            for o in range(co):
                for i in range(h):
                    for j in range(wd):
                        g = gy[b_, o, i, j]
                        for c in range(ci):
                            for di in range(kh):
                                ii = i + di - ph
                                if ii < 0 or ii >= h:
                                    continue
                                for dj in range(kw):
                                    jj = j + dj - pw
                                    if jj < 0 or jj >= wd:
                                        continue
                                    gw[o, c, di, dj] += g * x[b_, c, ii, jj]
    return gw_arr


def bilinear_resize_forward(floating[:, :, :, ::1] x, Py_ssize_t oh, Py_ssize_t ow):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef double sy = (<double> h) / oh, sx = (<double> w) / ow
    cdef Py_ssize_t b_, ch, i, j, y0, y1, x0, x1
    cdef double src, fy, fx

    dtype = np.float32 if floating is float else np.float64
    y_arr = np.empty((n, c, oh, ow), dtype=dtype)
    cdef floating[:, :, :, ::1] y = y_arr

    with nogil:
        for i in range(oh):
            src = (i + 0.5) * sy - 0.5
            if src < 0:
                src = 0
            if src > h - 1:
                src = h - 1
            y0 = <Py_ssize_t> floor(src)
            y1 = y0 + 1 if y0 + 1 < h else h - 1
            fy = src - y0
            for j in range(ow):
                src = (j + 0.5) * sx - 0.5
                if src < 0:
                    src = 0
                if src > w - 1:
                    src = w - 1
                x0 = <Py_ssize_t> floor(src)
                x1 = x0 + 1 if x0 + 1 < w else w - 1
                fx = src - x0
                for b_ in range(n):
                    for ch in range(c):
                        y[b_, ch, i, j] = <floating> (
                            (x[b_, ch, y0, x0] * (1 - fx) + x[b_, ch, y0, x1] * fx) * (1 - fy)
                            + (x[b_, ch, y1, x0] * (1 - fx) + x[b_, ch, y1, x1] * fx) * fy)
    return y_arr


def bilinear_resize_backward(floating[:, :, :, ::1] gy, Py_ssize_t h, Py_ssize_t w):
    cdef Py_ssize_t n = gy.shape[0], c = gy.shape[1], oh = gy.shape[2], ow = gy.shape[3]
    cdef double sy = (<double> h) / oh, sx = (<double> w) / ow
    cdef Py_ssize_t b_, ch, i, j, y0, y1, x0, x1
    cdef double src, fy, fx
    cdef floating g

    dtype = np.float32 if floating is float else np.float64
    gx_arr = np.zeros((n, c, h, w), dtype=dtype)
    cdef floating[:, :, :, ::1] gx = gx_arr

    with nogil:
        for i in range(oh):
            src = (i + 0.5) * sy - 0.5
            if src < 0:
                src = 0
            if src > h - 1:
                src = h - 1
            y0 = <Py_ssize_t> floor(src)
            y1 = y0 + 1 if y0 + 1 < h else h - 1
            fy = src - y0
            for j in range(ow):
                src = (j + 0.5) * sx - 0.5
                if src < 0:
                    src = 0
                if src > w - 1:
                    src = w - 1
                x0 = <Py_ssize_t> floor(src)
                x1 = x0 + 1 if x0 + 1 < w else w - 1
                fx = src - x0
                for b_ in range(n):
                    for ch in range(c):
                        g = gy[b_, ch, i, j]
                        gx[b_, ch, y0, x0] += <floating> (g * (1 - fx) * (1 - fy))
                        gx[b_, ch, y0, x1] += <floating> (g * fx * (1 - fy))
                        gx[b_, ch, y1, x0] += <floating> (g * (1 - fx) * fy)
                        gx[b_, ch, y1, x1] += <floating> (g * fx * fy)
    return gx_arr
