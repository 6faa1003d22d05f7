"""Pure numpy versions of the mode-loop kernels.

These define the reference behaviour; the compiled module ``_kernels``
implements the same functions with fused loops and no temporaries.  All
wavevector arguments are the 1-D axis arrays of a grid, and the translation
phases are passed per axis (``px[i] = exp(i kx[i] qx)`` and so on), which is
how both implementations avoid materialising a full phase array.
"""

from __future__ import annotations

import numpy as np

IMPLEMENTATION = "numpy"


def _outer(px, py, pz):
    return px[:, None, None] * py[None, :, None] * pz[None, None, :]


def coupling_pairings(rhat, px, py, pz, weight, kx, ky, kz, a):
    """Pairings of the translated profile u = rhat * exp(i k.q) with a field.

    Returns ``(s, m)`` with s[i] = sum w Re(conj(u) a_i) and
    m[j, i] = sum w k_j Im(conj(u) a_i); the caller applies the k-space
    measure.
    """
    u = np.conj(rhat * _outer(px, py, pz)) * weight
    prod = u[None] * a
    s = prod.real.sum(axis=(1, 2, 3))
    im = prod.imag
    m = np.empty((3, 3))
    m[0] = np.einsum("ixyz,x->i", im, kx)
    m[1] = np.einsum("ixyz,y->i", im, ky)
    m[2] = np.einsum("ixyz,z->i", im, kz)
    return s, m


def transverse_source(rhat, px, py, pz, kx, ky, kz, inv_k2, vec, scale):
    """scale * Pi_s(k) (rhat exp(i k.q) vec) at every stored mode."""
    u = scale * rhat * _outer(px, py, pz)
    k = (kx[:, None, None], ky[None, :, None], kz[None, None, :])
    div = (k[0] * vec[0] + k[1] * vec[1] + k[2] * vec[2]) * inv_k2
    return np.stack([u * (vec[i] - div * k[i]) for i in range(3)])


def rotate(c, ks, sk, px, py, pz, e, a):
    """Per-mode wave rotation followed by the separable phase px*py*pz.

    e' = ph (c e + ks a),  a' = ph (-sk e + c a).
    """
    ph = _outer(px, py, pz)
    ce = c * ph
    return ce * e + (ks * ph) * a, ce * a - (sk * ph) * e


def lawson_combine(rot1, e, a, s, k, rot2, t, g1, g2, u, h):
    """One Lawson stage in a single call.

    ``rot1`` and ``rot2`` are tuples (c, ks, sk, px, py, pz).  The result is
    U1 (e + s k, a) + t U2 (g1 + g2, 0) + u (h, 0), where any of k, g1, g2, h
    and rot2 may be None.  Stage increments never carry an A part because
    the coupling only drives dE/dt.
    """
    c1, ks1, sk1, px1, py1, pz1 = rot1
    ph1 = _outer(px1, py1, pz1)
    ee = e if k is None else e + s * k
    out_e = ph1 * (c1 * ee + ks1 * a)
    out_a = ph1 * (c1 * a - sk1 * ee)
    if rot2 is not None and (g1 is not None or g2 is not None):
        gg = g1 if g2 is None else (g2 if g1 is None else g1 + g2)
        c2, _, sk2, px2, py2, pz2 = rot2
        gg = (t * _outer(px2, py2, pz2)) * gg
        out_e += c2 * gg
        out_a -= sk2 * gg
    if h is not None:
        out_e += u * h
    return out_e, out_a
