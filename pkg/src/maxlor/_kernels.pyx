# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled mode-loop kernels; see ``_kernels_py`` for the reference semantics."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

IMPLEMENTATION = "cython"


def coupling_pairings(const double[:, :, ::1] rhat,
                      const double complex[::1] px, const double complex[::1] py, const double complex[::1] pz,
                      const double[:, :, ::1] weight,
                      const double[::1] kx, const double[::1] ky, const double[::1] kz,
                      const double complex[:, :, :, ::1] a):
    cdef Py_ssize_t nx = rhat.shape[0], ny = rhat.shape[1], nz = rhat.shape[2]
    cdef Py_ssize_t i, j, l, c
    cdef double complex pxy, u, prod
    cdef double w, im
    cdef double s[3]
    cdef double m[3][3]
    cdef double mx[3]
    cdef double mxy[3]
    for c in range(3):
        s[c] = 0.0
        for l in range(3):
            m[l][c] = 0.0
    for i in range(nx):
        for c in range(3):
            mx[c] = 0.0
        for j in range(ny):
            pxy = px[i] * py[j]
            for c in range(3):
                mxy[c] = 0.0
            for l in range(nz):
                w = weight[i, j, l]
                if w == 0.0:
                    continue
                u = w * rhat[i, j, l] * (pxy * pz[l]).conjugate()
                for c in range(3):
                    prod = u * a[c, i, j, l]
                    s[c] += prod.real
                    im = prod.imag
                    mxy[c] += im
                    m[2][c] += kz[l] * im
            for c in range(3):
                mx[c] += mxy[c]
                m[1][c] += ky[j] * mxy[c]
        for c in range(3):
            m[0][c] += kx[i] * mx[c]
    out_s = np.empty(3)
    out_m = np.empty((3, 3))
    for c in range(3):
        out_s[c] = s[c]
        for l in range(3):
            out_m[l, c] = m[l][c]
    return out_s, out_m


def transverse_source(const double[:, :, ::1] rhat,
                      const double complex[::1] px, const double complex[::1] py, const double complex[::1] pz,
                      const double[::1] kx, const double[::1] ky, const double[::1] kz,
                      const double[:, :, ::1] inv_k2, vec, double scale):
    cdef Py_ssize_t nx = rhat.shape[0], ny = rhat.shape[1], nz = rhat.shape[2]
    cdef Py_ssize_t i, j, l
    cdef double v0 = vec[0], v1 = vec[1], v2 = vec[2]
    cdef double div
    cdef double complex pxy, u
    out = np.empty((3, nx, ny, nz), dtype=np.complex128)
    cdef double complex[:, :, :, ::1] o = out
    for i in range(nx):
        for j in range(ny):
            pxy = scale * px[i] * py[j]
            for l in range(nz):
                u = rhat[i, j, l] * pxy * pz[l]
                div = (kx[i] * v0 + ky[j] * v1 + kz[l] * v2) * inv_k2[i, j, l]
                o[0, i, j, l] = u * (v0 - div * kx[i])
                o[1, i, j, l] = u * (v1 - div * ky[j])
                o[2, i, j, l] = u * (v2 - div * kz[l])
    return out


def lawson_combine(rot1, const double complex[:, :, :, ::1] e, const double complex[:, :, :, ::1] a,
                   double s, k, rot2, double t, g1, g2, double u, h):
    cdef const double[:, :, ::1] c1 = rot1[0]
    cdef const double[:, :, ::1] ks1 = rot1[1]
    cdef const double[:, :, ::1] sk1 = rot1[2]
    cdef const double complex[::1] px1 = rot1[3]
    cdef const double complex[::1] py1 = rot1[4]
    cdef const double complex[::1] pz1 = rot1[5]
    cdef Py_ssize_t nx = c1.shape[0], ny = c1.shape[1], nz = c1.shape[2]
    cdef Py_ssize_t i, j, l, m
    cdef bint has_k = k is not None
    cdef bint has_g = rot2 is not None and (g1 is not None or g2 is not None)
    cdef bint has_g1 = g1 is not None
    cdef bint has_g2 = g2 is not None
    cdef bint has_h = h is not None
    cdef const double complex[:, :, :, ::1] kv = k if has_k else e
    cdef const double complex[:, :, :, ::1] g1v = g1 if has_g1 else e
    cdef const double complex[:, :, :, ::1] g2v = g2 if has_g2 else e
    cdef const double complex[:, :, :, ::1] hv = h if has_h else e
    cdef const double[:, :, ::1] c2 = rot2[0] if has_g else c1
    cdef const double[:, :, ::1] sk2 = rot2[2] if has_g else sk1
    cdef const double complex[::1] px2 = rot2[3] if has_g else px1
    cdef const double complex[::1] py2 = rot2[4] if has_g else py1
    cdef const double complex[::1] pz2 = rot2[5] if has_g else pz1
    cdef double complex ph1, ph2, pxy1, pxy2, ee, aa, gg, oe_val, oa_val
    out_e = np.empty((3, nx, ny, nz), dtype=np.complex128)
    out_a = np.empty((3, nx, ny, nz), dtype=np.complex128)
    cdef double complex[:, :, :, ::1] oe = out_e
    cdef double complex[:, :, :, ::1] oa = out_a
    for m in range(3):
        for i in range(nx):
            for j in range(ny):
                pxy1 = px1[i] * py1[j]
                pxy2 = px2[i] * py2[j]
                for l in range(nz):
                    ph1 = pxy1 * pz1[l]
                    ee = e[m, i, j, l]
                    if has_k:
                        ee = ee + s * kv[m, i, j, l]
                    aa = a[m, i, j, l]
                    oe_val = ph1 * (c1[i, j, l] * ee + ks1[i, j, l] * aa)
                    oa_val = ph1 * (c1[i, j, l] * aa - sk1[i, j, l] * ee)
                    if has_g:
                        gg = 0.0
                        if has_g1:
                            gg = g1v[m, i, j, l]
                        if has_g2:
                            gg = gg + g2v[m, i, j, l]
                        ph2 = t * pxy2 * pz2[l] * gg
                        oe_val = oe_val + c2[i, j, l] * ph2
                        oa_val = oa_val - sk2[i, j, l] * ph2
                    if has_h:
                        oe_val = oe_val + u * hv[m, i, j, l]
                    oe[m, i, j, l] = oe_val
                    oa[m, i, j, l] = oa_val
    return out_e, out_a


def rotate(const double[:, :, ::1] c, const double[:, :, ::1] ks, const double[:, :, ::1] sk,
           const double complex[::1] px, const double complex[::1] py, const double complex[::1] pz,
           const double complex[:, :, :, ::1] e, const double complex[:, :, :, ::1] a):
    cdef Py_ssize_t nx = c.shape[0], ny = c.shape[1], nz = c.shape[2]
    cdef Py_ssize_t i, j, l, m
    cdef double complex pxy, ph, ee, aa
    out_e = np.empty((3, nx, ny, nz), dtype=np.complex128)
    out_a = np.empty((3, nx, ny, nz), dtype=np.complex128)
    cdef double complex[:, :, :, ::1] oe = out_e
    cdef double complex[:, :, :, ::1] oa = out_a
    for m in range(3):
        for i in range(nx):
            for j in range(ny):
                pxy = px[i] * py[j]
                for l in range(nz):
                    ph = pxy * pz[l]
                    ee = e[m, i, j, l]
                    aa = a[m, i, j, l]
                    oe[m, i, j, l] = ph * (c[i, j, l] * ee + ks[i, j, l] * aa)
                    oa[m, i, j, l] = ph * (c[i, j, l] * aa - sk[i, j, l] * ee)
    return out_e, out_a
