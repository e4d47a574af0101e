# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Signatures mirror :mod:`besovcap._kernels_py`."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, pow, INFINITY

cnp.import_array()


cdef inline double _powm1(double a, double p, bint square) nogil:
    # a**(p - 1), with the common p = 2 case kept off libm
    if square:
        return a
    return pow(a, p - 1.0)


def ball_mass_matrix(double[:, ::1] D, double[::1] w):
    cdef Py_ssize_t n = D.shape[0], m = D.shape[1]
    cdef Py_ssize_t i, k, j, start
    cdef double acc, dk
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] M = out
    cdef cnp.intp_t[:, ::1] order = np.ascontiguousarray(
        np.argsort(np.asarray(D), axis=1, kind="stable"))
    for i in range(n):
        acc = 0.0
        k = 0
        while k < m:
            # equal distances share one closed-ball mass
            start = k
            dk = D[i, order[i, k]]
            while k < m and D[i, order[i, k]] == dk:
                acc += w[order[i, k]]
                k += 1
            for j in range(start, k):
                M[i, order[i, j]] = acc
    return out


def besov_weights(double[:, ::1] D, double[:, ::1] M, double[::1] w, double s):
    cdef Py_ssize_t n = D.shape[0]
    cdef Py_ssize_t i, j, bi, bj, iend, jend, jstart
    cdef Py_ssize_t blk = 64
    cdef double t
    out = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] W = out
    # row-major pass for K, then a blocked in-place W = K + K^T
    for i in range(n):
        for j in range(n):
            if i == j:
                W[i, j] = 0.0
            else:
                W[i, j] = w[i] * w[j] / (pow(D[i, j], s) * M[i, j])
    for bi in range(0, n, blk):
        iend = min(bi + blk, n)
        for bj in range(bi, n, blk):
            jend = min(bj + blk, n)
            for i in range(bi, iend):
                jstart = max(bj, i + 1)
                for j in range(jstart, jend):
                    t = W[i, j] + W[j, i]
                    W[i, j] = t
                    W[j, i] = t
    return out


def pair_energy(double[:, ::1] W, double[::1] u, double p):
    cdef Py_ssize_t n = W.shape[0]
    cdef Py_ssize_t i, j
    cdef double total = 0.0, diff
    cdef bint square = p == 2.0
    for i in range(n):
        for j in range(i + 1, n):
            diff = fabs(u[i] - u[j])
            if diff != 0.0:
                total += W[i, j] * diff * _powm1(diff, p, square)
    return total


def pair_energy_grad(double[:, ::1] W, double[::1] u, double p):
    cdef Py_ssize_t n = W.shape[0]
    cdef Py_ssize_t i, j
    cdef double total = 0.0, diff, a, t
    cdef bint square = p == 2.0
    grad = np.zeros(n, dtype=np.float64)
    cdef double[::1] g = grad
    for i in range(n):
        for j in range(i + 1, n):
            diff = u[i] - u[j]
            if diff == 0.0:
                continue
            a = fabs(diff)
            t = W[i, j] * _powm1(a, p, square)
            total += t * a
            t *= p
            if diff < 0.0:
                t = -t
            g[i] += t
            g[j] -= t
    return total, grad


def edge_energy_grad(cnp.intp_t[::1] ei, cnp.intp_t[::1] ej, double[::1] c,
                     double[::1] u, double p):
    cdef Py_ssize_t m = ei.shape[0], n = u.shape[0]
    cdef Py_ssize_t e
    cdef double total = 0.0, diff, a, t
    cdef bint square = p == 2.0
    grad = np.zeros(n, dtype=np.float64)
    cdef double[::1] g = grad
    for e in range(m):
        diff = u[ei[e]] - u[ej[e]]
        if diff == 0.0:
            continue
        a = fabs(diff)
        t = c[e] * _powm1(a, p, square)
        total += t * a
        t *= p
        if diff < 0.0:
            t = -t
        g[ei[e]] += t
        g[ej[e]] -= t
    return total, grad


def weak_qs_exhaustive(double[:, ::1] DZ, double[:, ::1] DW, double rho):
    cdef Py_ssize_t n = DZ.shape[0]
    cdef Py_ssize_t x, y, z
    cdef Py_ssize_t bx = -1, by = -1, bz = -1
    cdef double best = -INFINITY, ratio, dxy, dxz
    cdef long long count = 0
    for x in range(n):
        for y in range(n):
            if y == x:
                continue
            dxy = DZ[x, y]
            if dxy > rho:
                continue
            for z in range(n):
                if z == x or z == y:
                    continue
                dxz = DZ[x, z]
                if dxz > dxy:
                    continue
                if DZ[y, z] > rho:
                    continue
                count += 1
                ratio = DW[x, z] / DW[x, y]
                if ratio > best:
                    best = ratio
                    bx = x
                    by = y
                    bz = z
    return best, (bx, by, bz), count


def weak_qs_triples(double[:, ::1] DZ, double[:, ::1] DW,
                    cnp.intp_t[:, ::1] triples, double rho):
    cdef Py_ssize_t m = triples.shape[0]
    cdef Py_ssize_t k, x, y, z
    cdef Py_ssize_t bx = -1, by = -1, bz = -1
    cdef double best = -INFINITY, ratio, dxy, dxz
    cdef long long count = 0
    for k in range(m):
        x = triples[k, 0]
        y = triples[k, 1]
        z = triples[k, 2]
        if x == y or x == z or y == z:
            continue
        dxy = DZ[x, y]
        dxz = DZ[x, z]
        if dxz > dxy:
            continue
        if dxy > rho or DZ[y, z] > rho:
            continue
        count += 1
        ratio = DW[x, z] / DW[x, y]
        if ratio > best:
            best = ratio
            bx = x
            by = y
            bz = z
    return best, (bx, by, bz), count
