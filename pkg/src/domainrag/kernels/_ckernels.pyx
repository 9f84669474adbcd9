# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels.

Mirrors _pykernels.py. Resize and compose evaluate the identical float64
expressions in the identical association order as the NumPy backend, so
their uint8 outputs are bit-identical; the reductions differ only by
summation order (last-ulp).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor, sqrt

cnp.import_array()


def cosine_scores(const cnp.float64_t[:, ::1] matrix, const cnp.float64_t[::1] query):
    cdef Py_ssize_t n = matrix.shape[0]
    cdef Py_ssize_t d = matrix.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef cnp.float64_t[::1] ov = out
    cdef Py_ssize_t i, j
    cdef double dot, nrm, qnorm = 0.0, s

    for j in range(d):
        qnorm += query[j] * query[j]
    qnorm = sqrt(qnorm)

    for i in range(n):
        dot = 0.0
        nrm = 0.0
        for j in range(d):
            dot += matrix[i, j] * query[j]
            nrm += matrix[i, j] * matrix[i, j]
        s = dot / (sqrt(nrm) * qnorm)
        if s > 1.0:
            s = 1.0
        elif s < -1.0:
            s = -1.0
        ov[i] = s
    return out


def l2_distances(const cnp.float64_t[:, ::1] matrix, const cnp.float64_t[::1] vector):
    cdef Py_ssize_t n = matrix.shape[0]
    cdef Py_ssize_t d = matrix.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef cnp.float64_t[::1] ov = out
    cdef Py_ssize_t i, j
    cdef double acc, diff

    for i in range(n):
        acc = 0.0
        for j in range(d):
            diff = matrix[i, j] - vector[j]
            acc += diff * diff
        ov[i] = sqrt(acc)
    return out


def channel_stats(const cnp.float64_t[:, :, ::1] fmap):
    cdef Py_ssize_t c = fmap.shape[0]
    cdef Py_ssize_t h = fmap.shape[1]
    cdef Py_ssize_t w = fmap.shape[2]
    cdef double area = <double>(h * w)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(2 * c, dtype=np.float64)
    cdef cnp.float64_t[::1] ov = out
    cdef Py_ssize_t k, i, j
    cdef double acc, mean, diff

    for k in range(c):
        acc = 0.0
        for i in range(h):
            for j in range(w):
                acc += fmap[k, i, j]
        mean = acc / area
        ov[k] = mean
        acc = 0.0
        for i in range(h):
            for j in range(w):
                diff = fmap[k, i, j] - mean
                acc += diff * diff
        ov[c + k] = sqrt(acc / area)
    return out


def resize_bilinear(const cnp.uint8_t[:, :, ::1] image, Py_ssize_t out_h, Py_ssize_t out_w,
                    long long num, long long den):
    cdef Py_ssize_t in_h = image.shape[0]
    cdef Py_ssize_t in_w = image.shape[1]
    cdef cnp.ndarray[cnp.uint8_t, ndim=3] out = np.empty((out_h, out_w, 3), dtype=np.uint8)
    cdef cnp.uint8_t[:, :, ::1] ov = out
    cdef Py_ssize_t i, j, ch, y0, x0, y1, x1
    cdef double sy, sx, wy, wx, max_y, max_x
    cdef double p00, p01, p10, p11, top, bot, val
    cdef double num_d = <double>num, den_d = <double>den

    max_y = <double>(in_h - 1)
    max_x = <double>(in_w - 1)
    for i in range(out_h):
        sy = ((<double>i) * den_d) / num_d
        if sy > max_y:
            sy = max_y
        y0 = <Py_ssize_t>floor(sy)
        y1 = y0 + 1
        if y1 > in_h - 1:
            y1 = in_h - 1
        wy = sy - <double>y0
        for j in range(out_w):
            sx = ((<double>j) * den_d) / num_d
            if sx > max_x:
                sx = max_x
            x0 = <Py_ssize_t>floor(sx)
            x1 = x0 + 1
            if x1 > in_w - 1:
                x1 = in_w - 1
            wx = sx - <double>x0
            for ch in range(3):
                p00 = <double>image[y0, x0, ch]
                p01 = <double>image[y0, x1, ch]
                p10 = <double>image[y1, x0, ch]
                p11 = <double>image[y1, x1, ch]
                top = p00 + wx * (p01 - p00)
                bot = p10 + wx * (p11 - p10)
                val = top + wy * (bot - top)
                ov[i, j, ch] = <cnp.uint8_t>floor(val + 0.5)
    return out


def resize_nearest(const cnp.uint8_t[:, ::1] mask, Py_ssize_t out_h, Py_ssize_t out_w,
                   long long num, long long den):
    cdef Py_ssize_t in_h = mask.shape[0]
    cdef Py_ssize_t in_w = mask.shape[1]
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] out = np.empty((out_h, out_w), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] ov = out
    cdef Py_ssize_t i, j, ys, xs

    for i in range(out_h):
        ys = <Py_ssize_t>(((<long long>i) * den) // num)
        if ys > in_h - 1:
            ys = in_h - 1
        for j in range(out_w):
            xs = <Py_ssize_t>(((<long long>j) * den) // num)
            if xs > in_w - 1:
                xs = in_w - 1
            ov[i, j] = mask[ys, xs]
    return out


def compose_pixels(const cnp.uint8_t[:, :, ::1] original, const cnp.uint8_t[:, ::1] mask,
                   const cnp.uint8_t[:, :, ::1] filled):
    cdef Py_ssize_t h = original.shape[0]
    cdef Py_ssize_t w = original.shape[1]
    cdef cnp.ndarray[cnp.uint8_t, ndim=3] out = np.empty((h, w, 3), dtype=np.uint8)
    cdef cnp.uint8_t[:, :, ::1] ov = out
    cdef Py_ssize_t i, j, ch

    for i in range(h):
        for j in range(w):
            if mask[i, j] == 0:
                for ch in range(3):
                    ov[i, j, ch] = original[i, j, ch]
            else:
                for ch in range(3):
                    ov[i, j, ch] = filled[i, j, ch]
    return out
