r"""Spherically symmetric charge densities and their Fourier transforms.

A density is stored as a polynomial in ``s = (r/R)**2`` on ``[0, R)`` with
rational coefficients and a floating point overall scale.  Keeping the shape
coefficients rational means the radial moments of a profile built to be
neutral are exactly zero, which matters because the small-|k| behaviour of
the transform is decided entirely by those moments.

The transform follows the unitary convention

    rho_hat(k) = (2 pi)^(-3/2) \int exp(i k.x) rho(x) d^3x
               = (2 pi)^(-3/2) 4 pi \int_0^R rho_1(r) r^2 sinc(k r) dr,

which is real and even in |k| for radial densities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

__all__ = [
    "RadialChargeDensity",
    "NeutralityReport",
    "WienerReport",
    "reference_profile",
    "bump_profile",
    "indicator_ball",
    "zero_density",
    "from_spec",
    "rho_hat",
    "check_neutrality",
    "check_wiener",
]

_FOUR_PI_NORM = 4.0 * math.pi * (2.0 * math.pi) ** -1.5
# Below this value of k*R the transform is summed from its moment series.
_SERIES_SWITCH = 4.0
_SERIES_TERMS = 48


def _binomial_cutoff(power: int) -> list[Fraction]:
    """Coefficients of (1 - s)**power in ascending powers of s."""
    return [Fraction((-1) ** i * math.comb(power, i)) for i in range(power + 1)]


def _poly_mul(a: Sequence[Fraction], b: Sequence[Fraction]) -> list[Fraction]:
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += x * y
    return out


def _unit_moment(coeffs: Sequence[Fraction], j: int) -> Fraction:
    """Exact value of \\int_0^1 u^j p(u^2) du for p with the given coefficients."""
    return sum((c / (2 * i + j + 1) for i, c in enumerate(coeffs)), Fraction(0))


@dataclass(frozen=True)
class RadialChargeDensity:
    """rho(x) = rho_1(|x|) with rho_1(r) = scale * sum_i shape[i] (r/R)^(2i) for r < R.

    ``shape`` holds exact rationals; ``scale`` is the floating point factor
    that fixes the normalisation.  ``name`` is informational only.
    """

    shape: tuple[Fraction, ...]
    support_radius: float
    scale: float = 1.0
    name: str = "custom"
    _float_shape: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.support_radius > 0:
            raise ValueError("support radius must be positive")
        object.__setattr__(self, "_float_shape", np.array([float(c) for c in self.shape]))

    # -- profile ---------------------------------------------------------
    def profile(self, r) -> np.ndarray:
        """Evaluate rho_1 at radii ``r`` (zero for r >= R)."""
        r = np.asarray(r, dtype=float)
        s = (r / self.support_radius) ** 2
        vals = self.scale * np.polynomial.polynomial.polyval(s, self._float_shape)
        return np.where(r < self.support_radius, vals, 0.0)

    def __call__(self, x) -> np.ndarray:
        """Evaluate rho at points ``x`` of shape (..., 3)."""
        return self.profile(np.linalg.norm(np.asarray(x, dtype=float), axis=-1))

    def is_zero(self) -> bool:
        return self.scale == 0.0 or all(c == 0 for c in self.shape)

    def radial_moment(self, j: int) -> float:
        """\\int_0^R r^j rho_1(r) dr, evaluated exactly up to the final scaling."""
        unit = _unit_moment(self.shape, j)
        if unit == 0:
            return 0.0
        return self.scale * float(unit) * self.support_radius ** (j + 1)

    def total_charge(self) -> float:
        return 4.0 * math.pi * self.radial_moment(2)

    def l2_norm_squared(self) -> float:
        """\\int |rho|^2 d^3x computed from the exact polynomial square."""
        sq = _poly_mul(self.shape, self.shape)
        return 4.0 * math.pi * self.scale**2 * float(_unit_moment(sq, 2)) * self.support_radius**3

    # -- transform -------------------------------------------------------
    def transform(self, k_mag) -> np.ndarray:
        """rho_hat at wavenumbers ``k_mag`` (array-like, any shape)."""
        k = np.abs(np.asarray(k_mag, dtype=float))
        out = np.empty_like(k)
        flat_k, flat_out = k.reshape(-1), out.reshape(-1)
        kr = flat_k * self.support_radius
        small = kr <= _SERIES_SWITCH
        if np.any(small):
            flat_out[small] = self._series(flat_k[small])
        if np.any(~small):
            flat_out[~small] = self._quadrature(flat_k[~small])
        return out

    def _series(self, k: np.ndarray) -> np.ndarray:
        # sinc(kr) = sum_n (-1)^n (kr)^(2n) / (2n+1)!; moments are exact.
        total = np.zeros_like(k)
        k2 = k * k
        for n in reversed(range(_SERIES_TERMS)):
            coef = (-1) ** n * self.radial_moment(2 * n + 2) / math.factorial(2 * n + 1)
            total = total * k2 + coef
        return _FOUR_PI_NORM * total

    def _quadrature(self, k: np.ndarray) -> np.ndarray:
        R = self.support_radius
        out = np.empty_like(k)
        order = np.argsort(k)
        # Chunks of similar k share one Gauss-Legendre rule sized to the
        # number of oscillations on [0, R].
        for chunk in np.array_split(order, max(1, len(order) // 256)):
            kk = k[chunk]
            nodes = 64 + int(math.ceil(0.75 * kk.max() * R))
            x, w = np.polynomial.legendre.leggauss(nodes)
            r = 0.5 * R * (x + 1.0)
            w = 0.5 * R * w
            vals = self.profile(r) * r
            out[chunk] = (np.sin(np.outer(kk, r)) @ (w * vals)) / kk
        return _FOUR_PI_NORM * out


# ---------------------------------------------------------------------------
# Profile families


def _neutral_shape() -> list[Fraction]:
    """Null vector of the three moment conditions for (c0..c3 s^3)(1-s)^4.

    Three constraints against four coefficients leave a one dimensional
    kernel; its generator is the vector of signed 3x3 minors.
    """
    cutoff = _binomial_cutoff(4)
    basis = [_poly_mul([Fraction(0)] * i + [Fraction(1)], cutoff) for i in range(4)]
    rows = [[_unit_moment(b, j) for b in basis] for j in (2, 4, 6)]

    def det3(m):
        return (
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        )

    null = []
    for col in range(4):
        minor = [[row[c] for c in range(4) if c != col] for row in rows]
        null.append((-1) ** col * det3(minor))
    if null[0] < 0:
        null = [-c for c in null]
    shape = [Fraction(0)] * 8
    for c, b in zip(null, basis):
        for i, bc in enumerate(b):
            shape[i] += c * bc
    return shape


def _normalised(shape: Sequence[Fraction], R: float, name: str) -> RadialChargeDensity:
    rho = RadialChargeDensity(tuple(shape), R, 1.0, name)
    return RadialChargeDensity(tuple(shape), R, 1.0 / math.sqrt(rho.l2_norm_squared()), name)


def reference_profile(support_radius: float = 1.0) -> RadialChargeDensity:
    """The neutral reference profile with unit L2 norm.

    rho_1 = (c0 + c1 s + c2 s^2 + c3 s^3)(1 - s)^4 with s = (r/R)^2 and the
    first three even radial moments r^2, r^4, r^6 vanishing exactly.
    """
    return _normalised(_neutral_shape(), support_radius, "reference")


def bump_profile(support_radius: float = 1.0, charge: float = 1.0) -> RadialChargeDensity:
    """Smooth non-neutral bump (1 - s)^4 carrying the given total charge."""
    shape = tuple(_binomial_cutoff(4))
    unit = RadialChargeDensity(shape, support_radius, 1.0, "bump")
    return RadialChargeDensity(shape, support_radius, charge / unit.total_charge(), "bump")


def indicator_ball(support_radius: float = 1.0, charge: float = 1.0) -> RadialChargeDensity:
    """Uniformly charged ball; its transform has real zeros."""
    volume = 4.0 / 3.0 * math.pi * support_radius**3
    return RadialChargeDensity((Fraction(1),), support_radius, charge / volume, "indicator")


def zero_density(support_radius: float = 1.0) -> RadialChargeDensity:
    return RadialChargeDensity((Fraction(0),), support_radius, 0.0, "zero")


def from_spec(spec: dict) -> RadialChargeDensity:
    """Build a density from a config table such as ``{family: reference, radius: 1}``."""
    family = str(spec.get("family", "reference")).lower()
    radius = float(spec.get("radius", 1.0))
    if family == "reference":
        return reference_profile(radius)
    if family == "bump":
        return bump_profile(radius, float(spec.get("charge", 1.0)))
    if family in ("indicator", "ball"):
        return indicator_ball(radius, float(spec.get("charge", 1.0)))
    if family == "zero":
        return zero_density(radius)
    raise ValueError(f"unknown charge family {family!r}")


# ---------------------------------------------------------------------------
# Operations


def rho_hat(rho: RadialChargeDensity, k_mag):
    """rho_hat(|k|); returns a float for scalar input."""
    out = rho.transform(k_mag)
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class NeutralityReport:
    moment_residuals: tuple[float, float, float]
    small_k_order: float
    passed: bool

    def as_dict(self) -> dict:
        return {
            "moment_residuals": list(self.moment_residuals),
            "small_k_order": self.small_k_order,
            "pass": self.passed,
        }


def check_neutrality(rho: RadialChargeDensity, tol: float = 1e-10) -> NeutralityReport:
    """Radial moments r^2, r^4, r^6 by 64-point Gauss-Legendre, plus the small-k order.

    The order is the least-squares slope of log|rho_hat| against log k on
    [1e-3, 1e-1]; it is NaN when rho_hat vanishes identically there.
    """
    R = rho.support_radius
    x, w = np.polynomial.legendre.leggauss(64)
    r = 0.5 * R * (x + 1.0)
    w = 0.5 * R * w
    prof = rho.profile(r)
    residuals, passed = [], True
    for j in (2, 4, 6):
        m = float(np.sum(w * r**j * prof))
        scale = float(np.sum(w * r**j * np.abs(prof)))
        residuals.append(m)
        if abs(m) >= tol * max(scale, 1e-300) and scale > 0:
            passed = False
    ks = np.logspace(-3, -1, 21)
    vals = np.abs(rho.transform(ks))
    if np.all(vals > 0):
        order = float(np.polyfit(np.log(ks), np.log(vals), 1)[0])
    else:
        order = float("nan")
    return NeutralityReport(tuple(residuals), order, passed)


@dataclass
class WienerReport:
    min_abs: float
    argmin: float
    sign_changes: int
    zeros: list[float]
    degenerate: bool

    def as_dict(self) -> dict:
        return {
            "min_abs": self.min_abs,
            "argmin": self.argmin,
            "sign_changes": self.sign_changes,
            "zeros": self.zeros,
            "degenerate": self.degenerate,
        }


def check_wiener(rho: RadialChargeDensity, k_max: float, n_samples: int = 2000) -> WienerReport:
    """Scan rho_hat on a log grid in (0, k_max] for zeros.

    Every sign change brackets a real zero, so a nonzero count certifies a
    violation.  A clean scan is only evidence, never a proof.
    """
    if not k_max > 0 or n_samples < 2:
        raise ValueError("need k_max > 0 and at least two samples")
    ks = np.logspace(math.log10(k_max) - 4.0, math.log10(k_max), n_samples)
    vals = rho.transform(ks)
    absvals = np.abs(vals)
    i = int(np.argmin(absvals))
    signs = np.sign(vals)
    flips = np.nonzero(signs[1:] * signs[:-1] < 0)[0]
    zeros = [float(0.5 * (ks[j] + ks[j + 1])) for j in flips]
    return WienerReport(float(absvals[i]), float(ks[i]), len(flips), zeros, bool(np.all(vals == 0)))
