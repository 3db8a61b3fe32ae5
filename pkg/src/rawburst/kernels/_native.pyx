# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled tile search kernels; contract documented in numpy_backend."""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, INFINITY

cnp.import_array()


def distance_maps(double[:, ::1] ref, double[:, ::1] alt,
                  cnp.int64_t[::1] oy, cnp.int64_t[::1] ox,
                  cnp.int64_t[::1] gy, cnp.int64_t[::1] gx,
                  int n, int r, int p):
    if p != 1 and p != 2:
        raise ValueError(f"norm power must be 1 or 2, got {p}")
    cdef Py_ssize_t t_count = oy.shape[0]
    cdef int k = 2 * r + 1
    maps_arr = np.empty((t_count, k, k), dtype=np.float64)
    cdef double[:, :, ::1] maps = maps_arr
    cdef Py_ssize_t t
    cdef int a, b, i, j
    cdef Py_ssize_t ty, tx, wy, wx
    cdef double acc, d

    with nogil:
        for t in range(t_count):
            ty = oy[t]
            tx = ox[t]
            for a in range(k):
                wy = ty + gy[t] + a - r
                for b in range(k):
                    wx = tx + gx[t] + b - r
                    acc = 0.0
                    if p == 1:
                        for i in range(n):
                            for j in range(n):
                                acc += fabs(ref[ty + i, tx + j] - alt[wy + i, wx + j])
                    else:
                        for i in range(n):
                            for j in range(n):
                                d = ref[ty + i, tx + j] - alt[wy + i, wx + j]
                                acc += d * d
                    maps[t, a, b] = acc
    return maps_arr


def wiener_merge(double complex[:, :, :, ::1] spectra, double[::1] sigma2,
                 double c, double spatial_scale, double[:, ::1] freq_norms):
    cdef Py_ssize_t t_count = spectra.shape[0]
    cdef int frames = <int> spectra.shape[1]
    cdef int n = <int> spectra.shape[2]
    cdef int nh = <int> spectra.shape[3]
    out_arr = np.empty((t_count, n, nh), dtype=np.complex128)
    cdef double complex[:, :, ::1] out = out_arr
    cdef Py_ssize_t t
    cdef int i, j, z
    cdef double complex s0, sz, d, acc, m
    cdef double noise, dist, denom, weight, mag2, add

    with nogil:
        for t in range(t_count):
            noise = c * sigma2[t]
            for i in range(n):
                for j in range(nh):
                    s0 = spectra[t, 0, i, j]
                    acc = s0
                    for z in range(1, frames):
                        sz = spectra[t, z, i, j]
                        d = s0 - sz
                        dist = d.real * d.real + d.imag * d.imag
                        denom = dist + noise
                        acc = acc + sz
                        if denom > 0:
                            weight = dist / denom
                            acc = acc + weight * d
                    m = acc / frames
                    if spatial_scale > 0:
                        mag2 = m.real * m.real + m.imag * m.imag
                        add = spatial_scale * freq_norms[i, j] * sigma2[t]
                        denom = mag2 + add
                        if denom > 0:
                            m = m * (mag2 / denom)
                        else:
                            m = 0
                    out[t, i, j] = m
    return out_arr


def l1_candidate_distances(double[:, ::1] ref, double[:, ::1] alt,
                           cnp.int64_t[::1] oy, cnp.int64_t[::1] ox,
                           cnp.int64_t[:, ::1] cy, cnp.int64_t[:, ::1] cx,
                           cnp.uint8_t[:, ::1] valid, int n):
    cdef Py_ssize_t t_count = oy.shape[0]
    cdef Py_ssize_t c_count = cy.shape[1]
    dists_arr = np.full((t_count, c_count), np.inf, dtype=np.float64)
    cdef double[:, ::1] dists = dists_arr
    cdef Py_ssize_t t, c, ty, tx, wy, wx
    cdef int i, j
    cdef double acc

    with nogil:
        for t in range(t_count):
            ty = oy[t]
            tx = ox[t]
            for c in range(c_count):
                if valid[t, c] == 0:
                    continue
                wy = ty + cy[t, c]
                wx = tx + cx[t, c]
                acc = 0.0
                for i in range(n):
                    for j in range(n):
                        acc += fabs(ref[ty + i, tx + j] - alt[wy + i, wx + j])
                dists[t, c] = acc
    return dists_arr
