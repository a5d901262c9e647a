"""Pure-Python cyclic Jacobi eigensolver for Hermitian matrices.

This is the fallback used when the compiled ``_jacobi_ext`` module is not
available. The rotation sequence is identical to the compiled kernel.
"""

import math

import numpy as np


def jacobi_eigh(a, max_sweeps=60):
    """Diagonalize a Hermitian matrix with cyclic complex Jacobi rotations.

    Returns ``(w, v, sweeps)`` with unsorted real eigenvalues ``w``, the
    unitary ``v`` whose columns are eigenvectors, and the number of sweeps.
    """
    a = np.array(a, dtype=np.complex128, copy=True)
    n = a.shape[0]
    v = np.eye(n, dtype=np.complex128)
    if n < 2:
        return a.diagonal().real.copy(), v, 0

    sweep = 0
    while sweep < max_sweeps:
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off += abs(a[p, q])
        if off == 0.0:
            break
        sweep += 1
        thresh = 0.2 * off / (n * n) if sweep < 4 else 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                mag = abs(apq)
                app = a[p, p].real
                aqq = a[q, q].real
                g = 100.0 * mag
                if sweep > 4 and abs(app) + g == abs(app) and abs(aqq) + g == abs(aqq):
                    a[p, q] = 0.0
                    a[q, p] = 0.0
                    continue
                if mag <= thresh or mag == 0.0:
                    continue
                h = aqq - app
                if abs(h) + g == abs(h):
                    t = mag / h
                else:
                    theta = 0.5 * h / mag
                    t = 1.0 / (abs(theta) + math.sqrt(1.0 + theta * theta))
                    if theta < 0.0:
                        t = -t
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                e = apq / mag
                se = s * e
                sec = s * e.conjugate()

                col_p = a[:, p].copy()
                col_q = a[:, q]
                a[:, p] = c * col_p - sec * col_q
                a[:, q] = se * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :]
                a[p, :] = c * row_p - se * row_q
                a[q, :] = sec * row_p + c * row_q
                a[p, p] = app - t * mag
                a[q, q] = aqq + t * mag
                a[p, q] = 0.0
                a[q, p] = 0.0

                vp = v[:, p].copy()
                vq = v[:, q]
                v[:, p] = c * vp - sec * vq
                v[:, q] = se * vp + c * vq
    return a.diagonal().real.copy(), v, sweep
