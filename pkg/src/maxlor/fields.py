"""Truncated Fourier representation of real solenoidal vector fields.

Coefficients follow the unitary kernel exp(+i k.x):

    f_hat(k) = (2 pi)^(-3/2) \\int exp(i k.x) f(x) d^3x,

so a spatial derivative d/dx_j acts as multiplication by -i k_j and a
translation f(x - b) multiplies the coefficients by exp(i k.b).

The continuum is replaced by the periodic box [-L, L)^3 sampled at n points
per axis.  Only the half spectrum k_z >= 0 is stored (the ``rfftn`` layout);
the other half follows from Hermitian symmetry.  Nyquist modes are dropped so
that symmetry holds exactly, and the k = 0 mode is kept at zero.

Vector fields are arrays of shape ``(3, n, n, n//2 + 1)``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .charge import RadialChargeDensity

__all__ = [
    "FourierGrid",
    "FieldPair",
    "project_solenoidal",
    "transversality_defect",
    "hermitian_defect",
    "norm_weighted",
    "free_wave_group",
    "modified_wave_group",
    "write_snapshot",
    "read_snapshot",
]


class FourierGrid:
    """Wavevectors of the periodic box [-L, L)^3 with ``n`` points per axis."""

    def __init__(self, n: int = 64, L: float = 32.0):
        if n < 4 or n % 2:
            raise ValueError("n must be an even integer >= 4")
        if not L > 0:
            raise ValueError("box half length must be positive")
        self.n = int(n)
        self.L = float(L)
        self.h = 2.0 * self.L / self.n
        self.dk = math.pi / self.L
        self.measure = self.dk**3
        self.shape = (self.n, self.n, self.n // 2 + 1)

        m = np.fft.fftfreq(self.n, 1.0 / self.n).astype(np.int64)
        mz = np.arange(self.n // 2 + 1, dtype=np.int64)
        self._m = (m, m, mz)
        self.k1d = (self.dk * m, self.dk * m, self.dk * mz)
        self.kx = self.k1d[0][:, None, None]
        self.ky = self.k1d[1][None, :, None]
        self.kz = self.k1d[2][None, None, :]
        self.k2 = self.kx**2 + self.ky**2 + self.kz**2
        mask = (
            (np.abs(m)[:, None, None] < self.n // 2)
            & (np.abs(m)[None, :, None] < self.n // 2)
            & (mz[None, None, :] < self.n // 2)
        )
        self.mask = mask.astype(float)
        self.mask[0, 0, 0] = 0.0
        wz = np.where(mz == 0, 1.0, 2.0)[None, None, :]
        # Weight turning a half-spectrum sum of Re(...) into the full sum.
        self.weight = self.mask * wz
        self.inv_k2 = np.divide(1.0, self.k2, out=np.zeros(self.shape), where=self.k2 > 0)
        parity = (m[:, None, None] + m[None, :, None] + mz[None, None, :]) % 2
        self._sign = np.where(parity == 0, 1.0, -1.0)
        self._index2 = (m[:, None, None] ** 2 + m[None, :, None] ** 2 + mz[None, None, :] ** 2)

    # -- wavevector helpers ---------------------------------------------
    @property
    def kvec(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (self.kx, self.ky, self.kz)

    @property
    def kmag(self) -> np.ndarray:
        return np.sqrt(self.k2)

    @property
    def k_max(self) -> float:
        """Largest retained wavenumber along one axis."""
        return self.dk * (self.n // 2 - 1)

    def k_dot(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return self.kx * v[0] + self.ky * v[1] + self.kz * v[2]

    def radial_table(self, rho: RadialChargeDensity) -> np.ndarray:
        """rho_hat at every stored wavevector (masked), evaluated once per |k|."""
        uniq, inverse = np.unique(self._index2, return_inverse=True)
        vals = rho.transform(self.dk * np.sqrt(uniq.astype(float)))
        return vals[inverse].reshape(self.shape) * self.mask

    def phase(self, b) -> np.ndarray:
        """exp(i k.b): the coefficient multiplier of a translation by b."""
        px = np.exp(1j * self.k1d[0] * b[0])[:, None, None]
        py = np.exp(1j * self.k1d[1] * b[1])[None, :, None]
        pz = np.exp(1j * self.k1d[2] * b[2])[None, None, :]
        return px * py * pz

    def zeros(self, components: int = 3) -> np.ndarray:
        return np.zeros((components,) + self.shape, dtype=complex)

    # -- sums -------------------------------------------------------------
    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        """\\int f.g d^3x for real fields given by their coefficients."""
        prod = f * np.conj(g)
        if prod.ndim == 4:
            prod = prod.sum(axis=0)
        return float(np.sum(self.weight * prod.real) * self.measure)

    def norm(self, f: np.ndarray) -> float:
        return math.sqrt(max(self.inner(f, f), 0.0))

    def grad_norm(self, f: np.ndarray) -> float:
        """L2 norm of the gradient, sqrt(\\int |grad f|^2)."""
        prod = np.abs(f) ** 2
        if prod.ndim == 4:
            prod = prod.sum(axis=0)
        return math.sqrt(float(np.sum(self.weight * self.k2 * prod) * self.measure))

    def full_sum(self, func: Callable, *fields: np.ndarray) -> np.ndarray:
        """Sum ``func(k, *field_values)`` over every wavevector of the full spectrum.

        ``func`` receives the wavevector as a tuple of broadcastable arrays and
        the stored coefficients.  The missing half is reconstructed by calling
        ``func`` again with -k and conjugated coefficients.  The result is
        multiplied by the k-space measure and may be complex.
        """
        kk = self.kvec
        upper = np.broadcast_to((self._m[2] > 0)[None, None, :], self.shape) * self.mask
        first = func(kk, *fields)
        second = func(tuple(-c for c in kk), *(np.conj(f) for f in fields))
        axes = (-3, -2, -1)
        total = np.sum(first * self.mask, axis=axes) + np.sum(second * upper, axis=axes)
        return total * self.measure

    # -- transforms -------------------------------------------------------
    def to_physical(self, fhat: np.ndarray) -> np.ndarray:
        """Real samples on the grid x_j = -L + j h from stored coefficients."""
        scale = (2.0 * math.pi) ** -1.5 * self.measure * self.n**3
        g = np.conj(fhat * self._sign)
        return scale * np.fft.irfftn(g, s=(self.n,) * 3, axes=(-3, -2, -1))

    def from_physical(self, f: np.ndarray) -> np.ndarray:
        """Coefficients of real grid samples (Nyquist and k = 0 modes dropped)."""
        scale = (2.0 * math.pi) ** -1.5 * self.h**3
        fhat = scale * self._sign * np.conj(np.fft.rfftn(f, axes=(-3, -2, -1)))
        return fhat * self.mask

    def coordinates(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = -self.L + self.h * np.arange(self.n)
        return x[:, None, None], x[None, :, None], x[None, None, :]

    def radius(self, center=(0.0, 0.0, 0.0)) -> np.ndarray:
        """Distance to ``center`` measured through the periodic box."""
        out = np.zeros((self.n,) * 3)
        for x, c in zip(self.coordinates(), center):
            d = np.mod(x - c + self.L, 2.0 * self.L) - self.L
            out = out + d**2
        return np.sqrt(out)

    def __eq__(self, other):
        return isinstance(other, FourierGrid) and self.n == other.n and self.L == other.L

    def __hash__(self):
        return hash((self.n, self.L))

    def __repr__(self):
        return f"FourierGrid(n={self.n}, L={self.L})"


@dataclass
class FieldPair:
    """Electric field and vector potential on one grid."""

    e: np.ndarray
    a: np.ndarray

    def copy(self) -> "FieldPair":
        return FieldPair(self.e.copy(), self.a.copy())

    def __add__(self, other: "FieldPair") -> "FieldPair":
        return FieldPair(self.e + other.e, self.a + other.a)

    def __sub__(self, other: "FieldPair") -> "FieldPair":
        return FieldPair(self.e - other.e, self.a - other.a)

    def __mul__(self, s: float) -> "FieldPair":
        return FieldPair(self.e * s, self.a * s)

    __rmul__ = __mul__

    def energy_norm(self, grid: FourierGrid) -> float:
        """Norm of the space L2 + homogeneous H1: sqrt(|E|^2 + |grad A|^2)."""
        return math.sqrt(grid.norm(self.e) ** 2 + grid.grad_norm(self.a) ** 2)

    def energy(self, grid: FourierGrid) -> float:
        return 0.5 * (grid.norm(self.e) ** 2 + grid.grad_norm(self.a) ** 2)


# ---------------------------------------------------------------------------


def project_solenoidal(grid: FourierGrid, raw: np.ndarray) -> np.ndarray:
    """Remove the longitudinal part: a - (a.k) k / k^2 mode by mode.

    The k = 0 coefficient is passed through untouched.
    """
    kk = grid.kvec
    div = kk[0] * raw[0] + kk[1] * raw[1] + kk[2] * raw[2]
    t = div * grid.inv_k2
    return np.stack([raw[i] - t * kk[i] for i in range(3)])


def transversality_defect(grid: FourierGrid, f: np.ndarray) -> float:
    """max_k |k.f(k)| / (|k| |f(k)|) over nonzero modes.

    Modes whose size is below 1e-14 of the largest coefficient are measured
    against that floor, so roundoff-level entries do not count as defects.
    """
    kk = grid.kvec
    div = np.abs(kk[0] * f[0] + kk[1] * f[1] + kk[2] * f[2])
    mag = np.sqrt(np.sum(np.abs(f) ** 2, axis=0))
    top = float(mag.max()) if mag.size else 0.0
    ok = (grid.k2 > 0) & (mag > 0)
    if top == 0.0 or not np.any(ok):
        return 0.0
    size = np.sqrt(grid.k2[ok]) * np.maximum(mag[ok], 1e-14 * top)
    return float(np.max(div[ok] / size))


def hermitian_defect(grid: FourierGrid, f: np.ndarray) -> float:
    """Largest violation of f(-k) = conj f(k) inside the self-conjugate plane k_z = 0."""
    plane = f[..., 0]
    flipped = np.roll(plane[..., ::-1, ::-1], 1, axis=(-2, -1))
    return float(np.max(np.abs(plane - np.conj(flipped)))) if plane.size else 0.0


def norm_weighted(grid: FourierGrid, f: np.ndarray, alpha: float, order: int = 0, center=(0.0, 0.0, 0.0)) -> float:
    """||(1+|x|)^alpha f||, plus the same weighted norm of grad f when ``order`` is 1.

    Distances are measured from ``center`` through the periodic box.
    """
    if order not in (0, 1):
        raise ValueError("order must be 0 or 1")
    weight = (1.0 + grid.radius(center)) ** (2.0 * alpha)
    cell = grid.h**3

    def wnorm(fhat):
        phys = grid.to_physical(fhat)
        sq = np.sum(phys**2, axis=0) if phys.ndim == 4 else phys**2
        return math.sqrt(float(np.sum(weight * sq)) * cell)

    total = wnorm(f)
    if order == 1:
        comps = f if f.ndim == 4 else f[None]
        grads = np.concatenate([-1j * kc * comps for kc in grid.kvec], axis=0)
        total += wnorm(grads)
    return total


def _rotation(grid: FourierGrid, t: float):
    k = np.sqrt(grid.k2)
    c = np.cos(k * t)
    s = np.sin(k * t)
    s_over_k = np.where(k > 0, np.divide(s, k, out=np.zeros_like(k), where=k > 0), t)
    return c, k * s, s_over_k


def free_wave_group(grid: FourierGrid, f: FieldPair, t: float) -> FieldPair:
    """Exact free Maxwell evolution of transverse fields (E' = -Lap A, A' = -E)."""
    c, ks, s_over_k = _rotation(grid, t)
    return FieldPair(c * f.e + ks * f.a, -s_over_k * f.e + c * f.a)


def modified_wave_group(grid: FourierGrid, f: FieldPair, v, t: float) -> FieldPair:
    """Exact flow of e' = v.grad e - Lap a, a' = -e + v.grad a.

    With the derivative convention grad -> -i k, each mode picks up the
    factor exp(-i (k.v) t) on top of the free rotation.
    """
    v = np.asarray(v, dtype=float)
    if np.dot(v, v) >= 1.0:
        raise ValueError("|v| must be below 1")
    rot = free_wave_group(grid, f, t)
    ph = np.exp(-1j * grid.k_dot(v) * t)
    return FieldPair(ph * rot.e, ph * rot.a)


# ---------------------------------------------------------------------------
# Snapshots

_MAGIC = b"MLSNAP\x00\x01"
_VERSION = 1
_HEADER = struct.Struct("<8sIIdI")


def write_snapshot(path, grid: FourierGrid, fields: Iterable[np.ndarray]) -> None:
    """Binary snapshot: header {magic, version, n, L, field count} then
    little-endian float64 pairs (re, im) of each vector field's half spectrum."""
    fields = [np.asarray(f, dtype=np.complex128) for f in fields]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, grid.n, grid.L, len(fields)))
        for f in fields:
            if f.shape != (3,) + grid.shape:
                raise ValueError("field does not match grid")
            fh.write(f.astype("<c16").tobytes())


def read_snapshot(path) -> tuple[FourierGrid, list[np.ndarray]]:
    with open(path, "rb") as fh:
        magic, version, n, L, count = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != _MAGIC or version != _VERSION:
            raise ValueError("not a snapshot file")
        grid = FourierGrid(n, L)
        size = 3 * int(np.prod(grid.shape))
        out = []
        for _ in range(count):
            data = np.frombuffer(fh.read(16 * size), dtype="<c16")
            out.append(data.reshape((3,) + grid.shape).astype(complex))
    return grid, out
