# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled cyclic Jacobi eigensolver for Hermitian matrices.

Same rotation sequence as ``_jacobi_py.jacobi_eigh``; see that module for the
algorithm description.
"""

import numpy as np

from libc.math cimport sqrt, fabs

cdef extern from "complex.h" nogil:
    double cabs(double complex)
    double creal(double complex)
    double complex conj(double complex)


def jacobi_eigh(a, int max_sweeps=60):
    cdef double complex[:, ::1] m = np.array(a, dtype=np.complex128, order="C", copy=True)
    cdef Py_ssize_t n = m.shape[0]
    v_arr = np.eye(n, dtype=np.complex128)
    cdef double complex[:, ::1] v = v_arr
    cdef Py_ssize_t p, q, k
    cdef int sweep = 0
    cdef double off, thresh, mag, app, aqq, g, h, theta, t, c, s
    cdef double complex apq, e, se, sec, xp, xq

    if n < 2:
        return np.asarray(m).diagonal().real.copy(), v_arr, 0

    with nogil:
        while sweep < max_sweeps:
            off = 0.0
            for p in range(n - 1):
                for q in range(p + 1, n):
                    off += cabs(m[p, q])
            if off == 0.0:
                break
            sweep += 1
            if sweep < 4:
                thresh = 0.2 * off / (n * n)
            else:
                thresh = 0.0
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = m[p, q]
                    mag = cabs(apq)
                    app = creal(m[p, p])
                    aqq = creal(m[q, q])
                    g = 100.0 * mag
                    if sweep > 4 and fabs(app) + g == fabs(app) and fabs(aqq) + g == fabs(aqq):
                        m[p, q] = 0.0
                        m[q, p] = 0.0
                        continue
                    if mag <= thresh or mag == 0.0:
                        continue
                    h = aqq - app
                    if fabs(h) + g == fabs(h):
                        t = mag / h
                    else:
                        theta = 0.5 * h / mag
                        t = 1.0 / (fabs(theta) + sqrt(1.0 + theta * theta))
                        if theta < 0.0:
                            t = -t
                    c = 1.0 / sqrt(1.0 + t * t)
                    s = t * c
                    e = apq / mag
                    se = s * e
                    sec = s * conj(e)

                    for k in range(n):
                        xp = m[k, p]
                        xq = m[k, q]
                        m[k, p] = c * xp - sec * xq
                        m[k, q] = se * xp + c * xq
                    for k in range(n):
                        xp = m[p, k]
                        xq = m[q, k]
                        m[p, k] = c * xp - se * xq
                        m[q, k] = sec * xp + c * xq
                    m[p, p] = app - t * mag
                    m[q, q] = aqq + t * mag
                    m[p, q] = 0.0
                    m[q, p] = 0.0

                    for k in range(n):
                        xp = v[k, p]
                        xq = v[k, q]
                        v[k, p] = c * xp - sec * xq
                        v[k, q] = se * xp + c * xq

    return np.asarray(m).diagonal().real.copy(), v_arr, sweep
