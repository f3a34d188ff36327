# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled sparse-coding inner loop.

Two equivalent ways of applying lateral inhibition are used, chosen per
step from the size of the active set: scatter the changed coefficients
through the precomputed kernel cross-correlation tensor while the code is
sparse, or rebuild the reconstruction and correlate it with every kernel
once the code is dense. Both evaluate the same dynamics; the switch only
trades arithmetic order, which run-to-run determinism does not depend on.
"""

from libc.math cimport fabs
from libc.string cimport memset

import numpy as np

NAME = "compiled"


cdef inline double _soft(double uv, double lam) nogil:
    if uv > lam:
        return uv - lam
    if uv < -lam:
        return uv + lam
    return 0.0


def lca_iterate(
    object image,
    object kernels,
    object drive,
    object gram,
    double lam,
    double step,
    int n_steps,
    double image_sqnorm,
    bint record_energy,
):
    """Same contract as the NumPy backend's lca_iterate."""
    cdef double[:, :, ::1] b = np.ascontiguousarray(drive, dtype=np.float64)
    cdef double[:, :, ::1] kern = np.ascontiguousarray(kernels, dtype=np.float64)
    cdef double[:, :, :, ::1] g = np.ascontiguousarray(gram, dtype=np.float64)
    cdef Py_ssize_t K = b.shape[0]
    cdef Py_ssize_t Ho = b.shape[1]
    cdef Py_ssize_t Wo = b.shape[2]
    cdef Py_ssize_t s = kern.shape[1]
    cdef Py_ssize_t D = g.shape[2]
    cdef Py_ssize_t s1 = s - 1
    cdef Py_ssize_t H = Ho + s1
    cdef Py_ssize_t W = Wo + s1

    u_arr = np.zeros((K, Ho, Wo), dtype=np.float64)
    a_arr = np.zeros((K, Ho, Wo), dtype=np.float64)
    inhib_arr = np.zeros((K, Ho, Wo), dtype=np.float64)
    recon_arr = np.zeros((H, W), dtype=np.float64)
    cdef double[:, :, ::1] u = u_arr
    cdef double[:, :, ::1] a = a_arr
    cdef double[:, :, ::1] inhib = inhib_arr
    cdef double[:, ::1] recon = recon_arr

    energies_arr = np.empty(n_steps, dtype=np.float64) if record_energy else None
    cdef double[::1] energies = energies_arr if record_energy else np.empty(1, dtype=np.float64)

    cdef Py_ssize_t t, k, i, j, kk, ia, ib, y, x, a_lo, a_hi, b_lo, b_hi
    cdef Py_ssize_t changed_prev = 0, changed
    cdef bint use_scatter
    cdef double uv, anew, dv, acc_l1, acc_ba, acc_ai, val, kv

    for t in range(n_steps):
        # Scatter work grows with the number of changed coefficients; the
        # dense rebuild is two full convolutions regardless.
        use_scatter = changed_prev * K * D * D <= 2 * K * s * s * Ho * Wo
        changed = 0
        if use_scatter:
            for k in range(K):
                for i in range(Ho):
                    for j in range(Wo):
                        anew = _soft(u[k, i, j], lam)
                        dv = anew - a[k, i, j]
                        if dv != 0.0:
                            changed += 1
                            a[k, i, j] = anew
                            a_lo = s1 - i if i < s1 else 0
                            a_hi = Ho - i + s1
                            if a_hi > D:
                                a_hi = D
                            b_lo = s1 - j if j < s1 else 0
                            b_hi = Wo - j + s1
                            if b_hi > D:
                                b_hi = D
                            for kk in range(K):
                                for ia in range(a_lo, a_hi):
                                    y = i + ia - s1
                                    for ib in range(b_lo, b_hi):
                                        inhib[kk, y, j + ib - s1] += dv * g[k, kk, ia, ib]
        else:
            for k in range(K):
                for i in range(Ho):
                    for j in range(Wo):
                        anew = _soft(u[k, i, j], lam)
                        if anew != a[k, i, j]:
                            changed += 1
                            a[k, i, j] = anew
            # recon = superpose(a); inhib = correlate(recon, kernels)
            memset(&recon[0, 0], 0, H * W * sizeof(double))
            for k in range(K):
                for ia in range(s):
                    for ib in range(s):
                        kv = kern[k, ia, ib]
                        if kv == 0.0:
                            continue
                        for i in range(Ho):
                            for j in range(Wo):
                                recon[i + ia, j + ib] += kv * a[k, i, j]
            memset(&inhib[0, 0, 0], 0, K * Ho * Wo * sizeof(double))
            for k in range(K):
                for ia in range(s):
                    for ib in range(s):
                        kv = kern[k, ia, ib]
                        if kv == 0.0:
                            continue
                        for i in range(Ho):
                            for j in range(Wo):
                                inhib[k, i, j] += kv * recon[i + ia, j + ib]
        changed_prev = changed

        if record_energy:
            # 0.5*||x - recon||^2 expanded through the adjoint identities:
            # <x, recon> = sum b*a and ||recon||^2 = sum a*inhib.
            acc_ba = 0.0
            acc_ai = 0.0
            acc_l1 = 0.0
            for k in range(K):
                for i in range(Ho):
                    for j in range(Wo):
                        val = a[k, i, j]
                        if val != 0.0:
                            acc_ba += b[k, i, j] * val
                            acc_ai += val * inhib[k, i, j]
                            acc_l1 += fabs(val)
            energies[t] = 0.5 * image_sqnorm - acc_ba + 0.5 * acc_ai + lam * acc_l1

        for k in range(K):
            for i in range(Ho):
                for j in range(Wo):
                    u[k, i, j] += step * (
                        b[k, i, j] - u[k, i, j] - inhib[k, i, j] + a[k, i, j]
                    )

    final_arr = np.empty((K, Ho, Wo), dtype=np.float64)
    cdef double[:, :, ::1] final = final_arr
    for k in range(K):
        for i in range(Ho):
            for j in range(Wo):
                final[k, i, j] = _soft(u[k, i, j], lam)
    return final_arr, u_arr, energies_arr
