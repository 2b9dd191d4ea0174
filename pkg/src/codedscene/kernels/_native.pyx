# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled sampling kernels: one fused pass per sample instead of numpy's
many whole-array temporaries. Expression order matches kernels/reference.py
exactly so both backends produce bit-identical output."""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor, isfinite

cnp.import_array()


def bilinear_map(grid, u, v):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] g = np.ascontiguousarray(grid, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef Py_ssize_t n = uu.shape[0]
    cdef Py_ssize_t h = g.shape[0]
    cdef Py_ssize_t w = g.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] val = np.zeros(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] gu = np.zeros(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] gv = np.zeros(n)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] ok = np.zeros(n, dtype=np.uint8)
    cdef Py_ssize_t i, iu, iv
    cdef double a, b, fu, fv, f00, f01, f10, f11
    for i in range(n):
        if not (isfinite(uu[i]) and isfinite(vv[i])):
            continue
        fu = floor(uu[i])
        fv = floor(vv[i])
        if fu < 0 or fu > w - 2 or fv < 0 or fv > h - 2:
            continue
        iu = <Py_ssize_t> fu
        iv = <Py_ssize_t> fv
        a = uu[i] - fu
        b = vv[i] - fv
        f00 = g[iv, iu]
        f01 = g[iv, iu + 1]
        f10 = g[iv + 1, iu]
        f11 = g[iv + 1, iu + 1]
        val[i] = (1.0 - b) * ((1.0 - a) * f00 + a * f01) + b * ((1.0 - a) * f10 + a * f11)
        gu[i] = (1.0 - b) * (f01 - f00) + b * (f11 - f10)
        gv[i] = (1.0 - a) * (f10 - f00) + a * (f11 - f01)
        ok[i] = 1
    return val, gu, gv, ok.view(np.bool_)


def bilinear_volume(vol, u, v):
    cdef cnp.ndarray[cnp.float64_t, ndim=3] g = np.ascontiguousarray(vol, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef Py_ssize_t n = uu.shape[0]
    cdef Py_ssize_t h = g.shape[0]
    cdef Py_ssize_t w = g.shape[1]
    cdef Py_ssize_t k = g.shape[2]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] val = np.zeros((n, k))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] gu = np.zeros((n, k))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] gv = np.zeros((n, k))
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] ok = np.zeros(n, dtype=np.uint8)
    cdef Py_ssize_t i, j, iu, iv
    cdef double a, b, fu, fv, f00, f01, f10, f11
    for i in range(n):
        if not (isfinite(uu[i]) and isfinite(vv[i])):
            continue
        fu = floor(uu[i])
        fv = floor(vv[i])
        if fu < 0 or fu > w - 2 or fv < 0 or fv > h - 2:
            continue
        iu = <Py_ssize_t> fu
        iv = <Py_ssize_t> fv
        a = uu[i] - fu
        b = vv[i] - fv
        for j in range(k):
            f00 = g[iv, iu, j]
            f01 = g[iv, iu + 1, j]
            f10 = g[iv + 1, iu, j]
            f11 = g[iv + 1, iu + 1, j]
            val[i, j] = (1.0 - b) * ((1.0 - a) * f00 + a * f01) + b * ((1.0 - a) * f10 + a * f11)
            gu[i, j] = (1.0 - b) * (f01 - f00) + b * (f11 - f10)
            gv[i, j] = (1.0 - a) * (f10 - f00) + a * (f11 - f01)
        ok[i] = 1
    return val, gu, gv, ok.view(np.bool_)


def bilinear_volume_values(vol, u, v):
    cdef cnp.ndarray[cnp.float64_t, ndim=3] g = np.ascontiguousarray(vol, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef Py_ssize_t n = uu.shape[0]
    cdef Py_ssize_t h = g.shape[0]
    cdef Py_ssize_t w = g.shape[1]
    cdef Py_ssize_t k = g.shape[2]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] val = np.zeros((n, k))
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] ok = np.zeros(n, dtype=np.uint8)
    cdef Py_ssize_t i, j, iu, iv
    cdef double a, b, fu, fv
    for i in range(n):
        if not (isfinite(uu[i]) and isfinite(vv[i])):
            continue
        fu = floor(uu[i])
        fv = floor(vv[i])
        if fu < 0 or fu > w - 2 or fv < 0 or fv > h - 2:
            continue
        iu = <Py_ssize_t> fu
        iv = <Py_ssize_t> fv
        a = uu[i] - fu
        b = vv[i] - fv
        for j in range(k):
            val[i, j] = (1.0 - b) * ((1.0 - a) * g[iv, iu, j] + a * g[iv, iu + 1, j]) \
                + b * ((1.0 - a) * g[iv + 1, iu, j] + a * g[iv + 1, iu + 1, j])
        ok[i] = 1
    return val, ok.view(np.bool_)
