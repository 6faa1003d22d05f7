"""Resolvent coefficients of the linearized dynamics in the co-moving frame.

Coordinates are rotated so that the soliton velocity is v = (|v|, 0, 0).  With

    D(lambda, k) = k^2 + (lambda + i k_1 |v|)^2,

every coefficient is an integral of |rho_hat|^2 times a rational function of
k_1 and |k| over k-space.  Because the integrands depend on k only through
k_1 = kappa t and kappa = |k|, the azimuthal integral is done analytically
(k_2^2 and k_3^2 both average to (k^2 - k_1^2) / 2) and the remaining two
integrals are a Gauss-Legendre rule in t = cos(theta) with a composite
Gauss-Legendre rule in kappa.

For Re lambda > 0 the function D has no real zeros, but when lambda
approaches the imaginary axis one zero in kappa approaches the real line.
The radial rule is then built symmetrically around the real part of that
zero, so the near-singular parts of the two sides are paired and the panels
are graded down to the distance of the zero from the real line.  On the
axis itself the paired sum is a principal value; the surface contribution of
the boundary value is a separate integral over the ellipsoid D(i omega, k) = 0.

The grid functions ``phi_psi`` and ``orthogonality_conditions`` work on the
Fourier coefficients of a periodic grid, so they are consistent with the
discretization used by ``symplectic``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import make_interp_spline

from .charge import RadialChargeDensity
from .errors import DenominatorVanishes, QuadratureNoConvergence
from .fields import FourierGrid
from .soliton import b_matrix_inverse, check_velocity, rho_hat_grid
from .state import State

__all__ = [
    "SpectralCoeffs",
    "MMatrix",
    "MblockInverse",
    "TaylorData",
    "OrthogonalityResiduals",
    "coeffs_at",
    "coeffs_on_axis",
    "coefficients",
    "taylor_data",
    "m_matrix",
    "m_inverse_structure",
    "phi_psi",
    "orthogonality_conditions",
    "secular_matrix",
    "cauchy_riemann_residual",
    "surface_positivity",
]

T_NODES = 64
PANEL_ORDER = 16
# Relative agreement demanded between the base and the refined rule.
QUADRATURE_TOL = 1e-9


# ---------------------------------------------------------------------------
# |rho_hat|^2 as a fast radial function


class _RadialTable:
    """rho_hat(kappa) for one density, cheap to evaluate at many points.

    Small kappa R uses the density's own moment series (exact small-k
    behaviour); the rest is a degree-7 interpolating spline of the transform
    on a fine uniform grid.  ``cutoff`` is the wavenumber beyond which
    |rho_hat|^2 stays below 1e-16 of its peak.
    """

    SPLINE_STEP = 0.02
    SPLINE_START = 3.0

    def __init__(self, rho: RadialChargeDensity):
        self.rho = rho
        R = rho.support_radius
        probe = np.linspace(0.0, 400.0 / R, 8001)[1:]
        vals = rho.transform(probe) ** 2
        peak = float(vals.max())
        if peak <= 0.0:
            self.cutoff = 1.0 / R
        else:
            above = np.nonzero(vals >= 1e-16 * peak)[0]
            self.cutoff = float(probe[above[-1]]) + 2.0 / R
        self.peak = peak
        self.peak_k = float(probe[int(np.argmax(vals))])
        self.start = self.SPLINE_START / R
        self.stop = self.cutoff + 10.0 / R
        knots = np.arange(self.start - 8 * self.SPLINE_STEP / R, self.stop + 8 * self.SPLINE_STEP / R,
                          self.SPLINE_STEP / R)
        self._spline = make_interp_spline(knots, rho.transform(knots), k=7)

    def __call__(self, kappa: np.ndarray) -> np.ndarray:
        kappa = np.asarray(kappa, dtype=float)
        out = np.empty_like(kappa)
        mid = (kappa >= self.start) & (kappa <= self.stop)
        out[mid] = self._spline(kappa[mid])
        rest = ~mid
        if np.any(rest):
            out[rest] = self.rho.transform(kappa[rest])
        return out


@lru_cache(maxsize=8)
def _radial_table(rho: RadialChargeDensity) -> _RadialTable:
    return _RadialTable(rho)


# ---------------------------------------------------------------------------
# Quadrature rules


@lru_cache(maxsize=8)
def _legendre(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def _composite(edges, order: int):
    """Composite Gauss-Legendre nodes and weights on consecutive panels."""
    edges = np.asarray(edges, dtype=float)
    x, w = _legendre(order)
    left, right = edges[:-1, None], edges[1:, None]
    half = 0.5 * (right - left)
    nodes = (left + right) * 0.5 + half * x[None, :]
    weights = half * w[None, :]
    return nodes.ravel(), weights.ravel()


def _uniform_edges(a: float, b: float, width: float):
    count = max(1, int(math.ceil((b - a) / width)))
    return np.linspace(a, b, count + 1)


def _graded_edges(start: float, stop: float, scale: float, width: float):
    """Panels on [start, stop] that double in size away from ``scale``.

    Used for the paired offsets u from a near-real zero of D; the paired
    integrand varies on the length ``scale`` near u = 0.  No panel is wider
    than ``width``.
    """
    points = [start]
    if scale > 0.0:
        pos = scale
        while pos < stop:
            if pos > start:
                points.append(pos)
            pos *= 2.0
    points.append(stop)
    edges = [start]
    for b in points[1:]:
        edges.extend(_uniform_edges(edges[-1], b, width)[1:])
    return np.asarray(edges)


def _near_real_zero(t: float, lam: complex, speed: float):
    """The zero of kappa -> D(lambda, kappa, t) closest to the positive real axis."""
    a = 1.0 - (t * speed) ** 2
    b = 2j * lam * t * speed
    c = lam * lam
    disc = cmath.sqrt(b * b - 4.0 * a * c)
    roots = ((-b + disc) / (2.0 * a), (-b - disc) / (2.0 * a))
    return max(roots, key=lambda z: z.real)


@dataclass
class _RadialRule:
    """Nodes and weights of one radial integral split into a plain part and a paired part."""

    nodes: np.ndarray
    weights: np.ndarray
    centre: float = 0.0
    # Paired offsets: nodes centre +- u share the weight.
    offsets: np.ndarray | None = None
    offset_weights: np.ndarray | None = None


def _radial_rule(t: float, lam: complex, speed: float, cutoff: float, width: float, order: int,
                 excision: float | None = None) -> _RadialRule:
    zero = _near_real_zero(t, lam, speed)
    centre, dist = zero.real, abs(zero.imag)
    if centre <= 0.0 or dist >= 0.5 * centre:
        nodes, weights = _composite(_uniform_edges(0.0, cutoff, width), order)
        return _RadialRule(nodes, weights)
    half = 0.5 * centre
    top = max(cutoff, centre + half + width)
    left_n, left_w = _composite(_uniform_edges(0.0, centre - half, width), order)
    right_n, right_w = _composite(_uniform_edges(centre + half, top, width), order)
    start = 0.0 if excision is None else excision * half
    u, wu = _composite(_graded_edges(start, half, dist, width), order)
    return _RadialRule(np.concatenate([left_n, right_n]), np.concatenate([left_w, right_w]), centre, u, wu)


# ---------------------------------------------------------------------------
# Integrands


_NAMES = ("c11", "c12", "f11", "f12", "c22", "f22", "f12_sym")


def _numerators(kappa, t, lam, speed, r2):
    """Numerators N of the coefficient integrands N / D, azimuth already averaged.

    Rows follow ``_NAMES``: c11, c12 (with k_2^2 replaced by its azimuthal
    mean), f11, f12, c22, f22 and the symmetrised form of f12 used as a
    consistency check.
    """
    nu = math.sqrt(1.0 - speed * speed)
    k1 = kappa * t
    s = lam + 1j * k1 * speed
    perp = 1.0 - t * t
    rows = np.empty((len(_NAMES),) + np.shape(kappa), dtype=complex)
    rows[0] = 1j * speed * k1 * s * r2 * perp
    rows[1] = -0.5j * speed * k1 * s * r2 * perp
    rows[2] = nu**3 * s * r2 * (t * t - 1.0)
    rows[3] = nu * s * r2 * (0.5 * perp - 1.0)
    rows[4] = -0.5 * speed**2 * r2 * kappa**2 * perp
    rows[5] = 1j * nu * speed * r2 * k1
    rows[6] = -0.5 * nu * s * r2 * (1.0 + t * t)
    return rows


def _denominator(kappa, t, lam, speed):
    s = lam + 1j * kappa * t * speed
    return kappa * kappa + s * s


def _volume_integrals(rho, speed: float, lam: complex, n_t: int, order: int, excision: float | None = None):
    """\\int N / D dk for every row of ``_numerators`` (a principal value on the axis)."""
    table = _radial_table(rho)
    width = 1.0 / rho.support_radius
    ts, wts = _legendre(n_t)
    total = np.zeros(len(_NAMES), dtype=complex)
    for t, wt in zip(ts, wts):
        rule = _radial_rule(t, lam, speed, table.cutoff, width, order, excision)
        kap = rule.nodes
        vals = _numerators(kap, t, lam, speed, table(kap) ** 2) / _denominator(kap, t, lam, speed)
        acc = vals @ (rule.weights * kap * kap)
        if rule.offsets is not None:
            for sign in (1.0, -1.0):
                kap = rule.centre + sign * rule.offsets
                vals = _numerators(kap, t, lam, speed, table(kap) ** 2) / _denominator(kap, t, lam, speed)
                acc = acc + vals @ (rule.offset_weights * kap * kap)
        total += wt * acc
    return 2.0 * math.pi * total


def _ellipsoid(omega: float, speed: float, n_theta: int):
    """Nodes on T_omega = {k^2 = (omega + k_1 |v|)^2} with weights dS / |grad D|.

    T_omega is an ellipsoid of revolution about the first axis with centre
    omega |v| gamma^2, semi-axis |omega| gamma^2 along k_1 and |omega| gamma
    across.  Returns (kappa, t, weight) for a Gauss-Legendre rule in the polar
    angle of the parametrisation; the azimuthal factor 2 pi is included.
    """
    gamma2 = 1.0 / (1.0 - speed * speed)
    centre = omega * speed * gamma2
    ax1 = abs(omega) * gamma2
    ax2 = abs(omega) * math.sqrt(gamma2)
    x, w = _legendre(n_theta)
    theta = 0.5 * math.pi * (x + 1.0)
    wtheta = 0.5 * math.pi * w
    k1 = centre + ax1 * np.cos(theta)
    kp = ax2 * np.sin(theta)
    kappa = np.hypot(k1, kp)
    arc = np.hypot(ax1 * np.sin(theta), ax2 * np.cos(theta))
    grad = np.hypot(2.0 * k1 - 2.0 * speed * (omega + k1 * speed), 2.0 * kp)
    weight = 2.0 * math.pi * kp * arc * wtheta / grad
    return kappa, k1 / kappa, weight


def _surface_integrals(rho, speed: float, omega: float, n_theta: int):
    """\\int_{T_omega} N(i omega, k) / |grad D| dS for every row of ``_numerators``."""
    table = _radial_table(rho)
    kappa, t, weight = _ellipsoid(omega, speed, n_theta)
    vals = _numerators(kappa, t, 1j * omega, speed, table(kappa) ** 2)
    return vals @ weight


# ---------------------------------------------------------------------------
# Coefficients


@dataclass
class SpectralCoeffs:
    """c1, c, f1, f, g1, g and the scalar determinants d1, d at one lambda.

    ``parts`` keeps the individual integrals (c11, c12, f11, f12, c22, f22)
    and ``checks`` the identity residuals evaluated along the way.
    """

    lam: complex
    speed: float
    c1: complex
    c: complex
    f1: complex
    f: complex
    g1: float
    g: float
    d1: complex
    d: complex
    parts: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    @property
    def nu(self) -> float:
        return math.sqrt(1.0 - self.speed**2)

    def as_dict(self) -> dict:
        out = {"lambda_re": self.lam.real, "lambda_im": self.lam.imag, "speed": self.speed}
        for name in ("c1", "c", "f1", "f", "d1", "d"):
            val = complex(getattr(self, name))
            out[f"{name}_re"], out[f"{name}_im"] = val.real, val.imag
        out["g1"], out["g"] = self.g1, self.g
        return out


def _speed(v) -> float:
    if np.ndim(v) == 0:
        return float(check_velocity((float(v), 0.0, 0.0))[0])
    return float(np.linalg.norm(check_velocity(v)))


def _smooth_integrals(rho, speed: float, n_t: int, order: int):
    """lambda independent integrals: g1, g and the Taylor data at lambda = 0.

    Here D(0, k) = k^2 - (k_1 v)^2 > 0 away from k = 0, so plain panels suffice.
    Returns a dict with g1, g, c1pp, cpp (second lambda-derivatives of c1 and
    c at 0), f1p, fp (first derivatives of f1 and f) and the positivity
    integral of -J(0) + nu I(0).
    """
    table = _radial_table(rho)
    nu = math.sqrt(1.0 - speed * speed)
    v2 = speed * speed
    nodes, weights = _composite(_uniform_edges(0.0, table.cutoff, 1.0 / rho.support_radius), order)
    r2 = table(nodes) ** 2
    ts, wts = _legendre(n_t)
    kap = nodes[None, :]
    k2 = kap * kap
    t = ts[:, None]
    k1sq = k2 * t * t
    kv2 = k1sq * v2
    d0 = k2 - kv2
    perp = k2 - k1sq
    rows = {
        "g1": v2 * perp * k1sq * r2 / (k2 * d0),
        "g": v2 * perp * 0.5 * perp * r2 / (k2 * d0),
        "c1pp": 2.0 * v2 * r2 * k1sq * (perp / k2) * (3.0 * k2 + kv2) / d0**3,
        "cpp": v2 * r2 * perp * (k2 * (k2 + 3.0 * kv2) - k1sq * (3.0 * k2 + kv2)) / (k2 * d0**3),
        "f1p": nu**3 * r2 * (k1sq / k2 - 1.0) * (k2 + kv2) / d0**2,
        "fp": 0.5 * nu * r2 * (3.0 * k2 * kv2 - k1sq * kv2 - k2 * (k2 + k1sq)) / (k2 * d0**2),
        "positivity": 0.5 * nu * r2 * (
            k2**3 * (1.0 + v2) + k2**2 * k1sq * (1.0 + 3.0 * v2 * v2 - 8.0 * v2) + k2 * k1sq**2 * v2 * (3.0 - v2)
        ) / (k2 * d0**3),
    }
    measure = 2.0 * math.pi * wts[:, None] * (weights * nodes * nodes)[None, :]
    return {name: float(np.sum(val * measure)) for name, val in rows.items()}


@lru_cache(maxsize=64)
def _smooth_cached(rho, speed, n_t, order):
    return _smooth_integrals(rho, speed, n_t, order)


def _assemble(lam: complex, speed: float, vol: np.ndarray, smooth: dict, checks: dict) -> SpectralCoeffs:
    parts = dict(zip(_NAMES, (complex(x) for x in vol)))
    nu = math.sqrt(1.0 - speed * speed)
    c1 = -2.0 * parts["c12"]
    c = parts["c12"] + parts["c22"]
    f1 = parts["f11"]
    f = parts["f12"] + parts["f22"]
    g1, g = smooth["g1"], smooth["g"]
    d1 = lam * (lam - f1) + nu**3 * (c1 + g1)
    d = lam * (lam - f) + nu * (c + g)
    scale = max(abs(parts["c11"]), abs(parts["c12"]), 1e-300)
    checks = dict(checks)
    checks["c_row_sum"] = abs(parts["c11"] + 2.0 * parts["c12"]) / scale
    checks["f12_forms"] = abs(parts["f12"] - parts["f12_sym"]) / max(abs(parts["f12"]), 1e-300)
    return SpectralCoeffs(complex(lam), speed, c1, c, f1, f, g1, g, d1, d, parts, checks)


def coeffs_at(rho: RadialChargeDensity, v, lam: complex, n_t: int = T_NODES, order: int = PANEL_ORDER,
              check: bool = True) -> SpectralCoeffs:
    """The coefficient integrals at a point with Re lambda > 0.

    ``v`` is the speed |v| or a velocity vector (only its length matters in
    the rotated frame).  With ``check`` the integrals are recomputed with a
    finer rule and QuadratureNoConvergence is raised when they disagree.
    """
    lam = complex(lam)
    if not lam.real > 0.0:
        raise ValueError("coeffs_at needs Re lambda > 0; use coeffs_on_axis on the imaginary axis")
    speed = _speed(v)
    vol = _volume_integrals(rho, speed, lam, n_t, order)
    checks = {}
    if check:
        fine = _volume_integrals(rho, speed, lam, n_t + n_t // 2, order + 8)
        checks["quadrature"] = _compare(vol, fine)
    return _assemble(lam, speed, vol, _smooth_cached(rho, speed, n_t, order), checks)


def _compare(base: np.ndarray, fine: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(fine))), 1e-300)
    err = float(np.max(np.abs(base - fine))) / scale
    if not err < QUADRATURE_TOL or not np.all(np.isfinite(fine)):
        raise QuadratureNoConvergence(f"coefficient integrals changed by {err:.2e} under refinement")
    return err


def _principal_values(rho, speed, omega, n_t, order, excision):
    """Principal-value integrals by symmetric excision, extrapolated to zero excision.

    The paired integrand is regular at the zero, so the excised part is
    a h + b h^2 + ...; two Richardson steps over h, h/2, h/4 remove both terms.
    """
    lam = 1j * omega
    vals = [_volume_integrals(rho, speed, lam, n_t, order, excision / 2**j) for j in range(3)]
    first = [2.0 * vals[j + 1] - vals[j] for j in range(2)]
    return (4.0 * first[1] - first[0]) / 3.0, vals


def coeffs_on_axis(rho: RadialChargeDensity, v, omega: float, n_t: int = T_NODES, order: int = PANEL_ORDER,
                   n_theta: int = 96, excision: float = 1e-3, check: bool = True) -> SpectralCoeffs:
    """Boundary values at lambda = i omega + 0.

    1 / D(i omega + eps) tends to PV 1/D - i pi sign(omega) delta(D), since the
    imaginary part of D near its zero set is 2 eps (omega + k_1 |v|) and
    omega + k_1 |v| has the sign of omega on T_omega.  The principal value
    comes from paired radial nodes with excision extrapolated away and the
    delta term from the surface rule on the ellipsoid.
    """
    omega = float(omega)
    if omega == 0.0 or not math.isfinite(omega):
        raise ValueError("omega must be a finite non-zero number")
    speed = _speed(v)
    pv, raw = _principal_values(rho, speed, omega, n_t, order, excision)
    surf = _surface_integrals(rho, speed, omega, n_theta)
    vol = pv - 1j * math.pi * math.copysign(1.0, omega) * surf
    checks = {"excision_spread": float(np.max(np.abs(raw[0] - pv)) / max(float(np.max(np.abs(pv))), 1e-300))}
    if check:
        pv_fine, _ = _principal_values(rho, speed, omega, n_t + n_t // 2, order + 8, excision)
        surf_fine = _surface_integrals(rho, speed, omega, n_theta + n_theta // 2)
        fine = pv_fine - 1j * math.pi * math.copysign(1.0, omega) * surf_fine
        checks["quadrature"] = _compare(vol, fine)
    return _assemble(1j * omega, speed, vol, _smooth_cached(rho, speed, n_t, order), checks)


def coefficients(rho: RadialChargeDensity, v, lam: complex, **kw) -> SpectralCoeffs:
    """coeffs_at for Re lambda > 0 and coeffs_on_axis for lambda = i omega."""
    lam = complex(lam)
    if lam.real > 0.0:
        return coeffs_at(rho, v, lam, **kw)
    if lam.real == 0.0 and lam.imag != 0.0:
        return coeffs_on_axis(rho, v, lam.imag, **kw)
    raise ValueError("lambda must satisfy Re lambda > 0 or be non-zero imaginary")


def surface_positivity(rho: RadialChargeDensity, v, omega: float, n_theta: int = 96) -> tuple[float, float]:
    """The surface representation of Im d at lambda = i omega + 0.

    Returns (integral, smallest integrand value) for
    (pi nu / 2) \\int_{T_omega} |rho_hat|^2 ((k_1 (v^2 - 1) + omega |v|)^2 + omega^2) / |grad D| dS;
    the integrand is a square sum and so never negative.
    """
    speed = _speed(v)
    nu = math.sqrt(1.0 - speed * speed)
    table = _radial_table(rho)
    kappa, t, weight = _ellipsoid(float(omega), speed, n_theta)
    k1 = kappa * t
    integrand = table(kappa) ** 2 * ((k1 * (speed * speed - 1.0) + omega * speed) ** 2 + omega**2)
    return 0.5 * math.pi * nu * float(integrand @ weight), float(integrand.min())


# ---------------------------------------------------------------------------
# Taylor data at lambda = 0


@dataclass
class TaylorData:
    """I1(0), I(0), J1(0), J(0) from the closed forms, and the denominators.

    Near lambda = 0: c1 = -g1 + lambda^2 I1, c = -g + lambda^2 I, f1 = lambda J1
    and f = lambda J.
    """

    speed: float
    i1: float
    i: float
    j1: float
    j: float
    positivity: float

    @property
    def nu(self) -> float:
        return math.sqrt(1.0 - self.speed**2)

    @property
    def den1(self) -> float:
        return 1.0 - self.j1 + self.nu**3 * self.i1

    @property
    def den(self) -> float:
        return 1.0 - self.j + self.nu * self.i


def taylor_data(rho: RadialChargeDensity, v, n_t: int = T_NODES, order: int = PANEL_ORDER) -> TaylorData:
    speed = _speed(v)
    s = _smooth_cached(rho, speed, n_t, order)
    return TaylorData(speed, 0.5 * s["c1pp"], 0.5 * s["cpp"], s["f1p"], s["fp"], s["positivity"])


# ---------------------------------------------------------------------------
# The 6x6 matrix M(lambda) and its inverse


@dataclass
class MMatrix:
    matrix: np.ndarray
    det_direct: complex
    det_factored: complex
    coeffs: SpectralCoeffs

    @property
    def det_residual(self) -> float:
        return abs(self.det_direct - self.det_factored) / max(abs(self.det_factored), 1e-300)


def _b_diag(speed: float) -> np.ndarray:
    nu = math.sqrt(1.0 - speed * speed)
    return np.array([nu**3, nu, nu])


def assemble_m(co: SpectralCoeffs) -> np.ndarray:
    """[[lambda E, -B_v], [C + G, lambda E - F]] with diagonal 3x3 blocks."""
    lam = co.lam
    m = np.zeros((6, 6), dtype=complex)
    cg = np.array([co.c1 + co.g1, co.c + co.g, co.c + co.g])
    fd = np.array([co.f1, co.f, co.f])
    idx = np.arange(3)
    m[idx, idx] = lam
    m[idx, idx + 3] = -_b_diag(co.speed)
    m[idx + 3, idx] = cg
    m[idx + 3, idx + 3] = lam - fd
    return m


def m_matrix(rho: RadialChargeDensity, v, lam: complex, **kw) -> MMatrix:
    co = coefficients(rho, v, lam, **kw)
    m = assemble_m(co)
    return MMatrix(m, complex(np.linalg.det(m)), co.d1 * co.d * co.d, co)


@dataclass
class MblockInverse:
    """M(i omega)^{-1} as diagonal blocks and its rescaled form.

    M^{-1} = [[L11, L12], [L21, L22]] and, with the rescaled blocks,
    M^{-1} = [[S11 / omega, S12 / omega^2], [S21, S22 / omega]].  ``s3`` is the
    diagonal block J / (1 - J + nu I) (nu^3 in the first entry), for which
    S11 = i S12 B_v^{-1} + i s3.  Each block is stored as its diagonal.
    """

    omega: float
    l11: np.ndarray
    l12: np.ndarray
    l21: np.ndarray
    l22: np.ndarray
    s11: np.ndarray
    s12: np.ndarray
    s21: np.ndarray
    s22: np.ndarray
    s3: np.ndarray
    taylor: TaylorData
    coeffs: SpectralCoeffs
    inverse_residual: float
    structure_residual: float

    def matrix(self) -> np.ndarray:
        out = np.zeros((6, 6), dtype=complex)
        idx = np.arange(3)
        out[idx, idx] = self.l11
        out[idx, idx + 3] = self.l12
        out[idx + 3, idx] = self.l21
        out[idx + 3, idx + 3] = self.l22
        return out

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix(), 2))


def m_inverse_structure(rho: RadialChargeDensity, v, omega: float, **kw) -> MblockInverse:
    """Block formulas for M(i omega)^{-1} checked against a dense inverse.

    Raises DenominatorVanishes when 1 - J1(0) + nu^3 I1(0) or 1 - J(0) + nu I(0)
    is not positive, i.e. when the non-degeneracy needed at omega = 0 fails.
    """
    omega = float(omega)
    speed = _speed(v)
    taylor = taylor_data(rho, speed)
    for name, val in (("1 - J1 + nu^3 I1", taylor.den1), ("1 - J + nu I", taylor.den)):
        if not val > 1e-12:
            raise DenominatorVanishes(f"{name} = {val:.3e} at omega = 0 for |v| = {speed}")
    co = coeffs_on_axis(rho, speed, omega, **kw)
    nu = co.nu
    bd = _b_diag(speed)
    lam = 1j * omega
    dd = np.array([co.d1, co.d, co.d])
    fd = np.array([co.f1, co.f, co.f])
    cg = np.array([co.c1 + co.g1, co.c + co.g, co.c + co.g])
    if np.any(np.abs(dd) == 0.0):
        raise DenominatorVanishes(f"det M(i omega) vanishes at omega = {omega}")
    l11 = (lam - fd) / dd
    l12 = bd / dd
    l21 = -cg / dd
    l22 = lam / dd
    # Rescaled blocks from J(i omega) = f / (i omega), I(i omega) = -(c + g) / omega^2.
    jj = fd / lam
    ii = -cg / omega**2
    den = 1.0 - jj + bd * ii
    s11 = 1j * (jj - 1.0) / den
    s12 = -bd / den
    s21 = -ii / den
    s22 = -1j / den
    s3 = jj / den
    m = assemble_m(co)
    inv = np.zeros((6, 6), dtype=complex)
    idx = np.arange(3)
    inv[idx, idx], inv[idx, idx + 3], inv[idx + 3, idx], inv[idx + 3, idx + 3] = l11, l12, l21, l22
    inverse_residual = float(np.abs(m @ inv - np.eye(6)).max())
    # Rescaled blocks read off the dense inverse must match the formulas and the identity.
    dense = np.linalg.inv(m)
    from_dense = np.diag(dense[:3, :3]) * omega
    s12_dense = np.diag(dense[:3, 3:]) * omega**2
    structure = np.abs(from_dense - (1j * s12_dense / bd + 1j * s3)).max()
    structure_residual = float(structure / max(np.abs(from_dense).max(), 1e-300))
    return MblockInverse(omega, l11, l12, l21, l22, s11, s12, s21, s22, s3, taylor, co,
                         inverse_residual, structure_residual)


def cauchy_riemann_residual(rho: RadialChargeDensity, v, lam: complex, step: float = 1e-3) -> float:
    """Largest mismatch between the real and imaginary directional derivatives.

    For an analytic F, (F(lam + h) - F(lam - h)) / 2h equals
    (F(lam + ih) - F(lam - ih)) / 2ih; the mismatch is relative to the
    derivative size and is O(h^2) for analytic coefficients.
    """
    lam = complex(lam)
    pts = [coeffs_at(rho, v, lam + z, check=False) for z in (step, -step, 1j * step, -1j * step)]
    worst = 0.0
    for name in ("c1", "c", "f1", "f"):
        vals = [getattr(p, name) for p in pts]
        dx = (vals[0] - vals[1]) / (2.0 * step)
        dy = (vals[2] - vals[3]) / (2j * step)
        worst = max(worst, abs(dx - dy) / max(abs(dx), abs(dy), 1e-300))
    return worst


# ---------------------------------------------------------------------------
# Orthogonality functionals on grid data


def _cross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def phi_psi(rho: RadialChargeDensity, v, lam: complex, e0: np.ndarray, a0: np.ndarray, grid: FourierGrid,
            derivative: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Phi(lambda) and Psi(lambda) of the field data (e0, a0), summed over grid modes.

    Phi = \\int (k^2 a0 + (lambda + i k.v) e0) conj(rho_hat) / D dk and
    Psi = \\int v x (-i k x ((lambda + i k.v) a0 - e0) / D) conj(rho_hat) dk.
    With ``derivative`` the lambda-derivatives are returned instead, from
    differentiating 1 / D under the sum.

    Valid for Re lambda > 0 and for lambda = 0 (D > 0 away from k = 0 there).
    On the rest of the imaginary axis the finite sum has poles at grid modes;
    use the continuum coefficients there.
    """
    v = check_velocity(v)
    lam = complex(lam)
    if lam.real < 0.0 or (lam.real == 0.0 and lam.imag != 0.0):
        raise ValueError("grid sums are defined for Re lambda > 0 and lambda = 0")
    rhat = rho_hat_grid(rho, grid)

    def terms(k, e, a, rh):
        kv = k[0] * v[0] + k[1] * v[1] + k[2] * v[2]
        k2 = k[0] ** 2 + k[1] ** 2 + k[2] ** 2
        s = lam + 1j * kv
        dd = k2 + s * s
        inv = np.divide(1.0, dd, out=np.zeros(np.broadcast(dd, rh).shape, dtype=complex), where=k2 > 0)
        rc = np.conj(rh)
        ik = tuple(-1j * c for c in k)
        if not derivative:
            phi = [(k2 * a[i] + s * e[i]) * rc * inv for i in range(3)]
            inner = _cross(ik, [s * a[i] - e[i] for i in range(3)])
            psi = [c * rc * inv for c in _cross(v, inner)]
        else:
            inv2 = 2.0 * s * inv * inv
            phi = [(e[i] * inv - (k2 * a[i] + s * e[i]) * inv2) * rc for i in range(3)]
            da = _cross(v, _cross(ik, [a[i] for i in range(3)]))
            full = _cross(v, _cross(ik, [s * a[i] - e[i] for i in range(3)]))
            psi = [(da[i] * inv - full[i] * inv2) * rc for i in range(3)]
        return np.stack([np.broadcast_to(x, k2.shape) for x in phi + psi])

    total = grid.full_sum(terms, e0, a0, rhat)
    return total[:3], total[3:]


def secular_matrix(rho: RadialChargeDensity, v, grid: FourierGrid) -> np.ndarray:
    """The 3x3 matrix acting on r0 in the second orthogonality condition.

    It equals B_v^{-1} plus the v-derivative of the field part of the soliton
    momentum; in the frame v = (|v|, 0, 0) it is B_v^{-1} diag(1 - J1, 1 - J, 1 - J),
    i.e. B_v^{-1} + S12(0)^{-1} s3(0) in the notation of MblockInverse.
    """
    v = check_velocity(v)
    rhat = rho_hat_grid(rho, grid)

    def terms(k, rh):
        kv = k[0] * v[0] + k[1] * v[1] + k[2] * v[2]
        k2 = k[0] ** 2 + k[1] ** 2 + k[2] ** 2
        d0 = k2 - kv * kv
        inv = np.divide(1.0, d0, out=np.zeros(np.broadcast(d0, rh).shape), where=k2 > 0)
        ik2 = np.divide(1.0, k2, out=np.zeros(np.broadcast(k2, rh).shape), where=k2 > 0)
        r2 = rh * rh
        out = []
        for j in range(3):
            for l in range(3):
                val = 2.0 * kv * k[j] * v[l] * inv * inv - (k2 + kv * kv) * k[j] * k[l] * ik2 * inv * inv
                if j == l:
                    val = val + inv
                out.append(np.broadcast_to(r2 * val, k2.shape))
        return np.stack(out)

    tensor = grid.full_sum(terms, rhat).real.reshape(3, 3)
    return b_matrix_inverse(v) + tensor


def grid_taylor_j(rho: RadialChargeDensity, v, grid: FourierGrid) -> tuple[float, float]:
    """J1(0) and J(0) from their closed forms, summed over grid modes (v along the first axis)."""
    v = check_velocity(v)
    speed = float(np.linalg.norm(v))
    nu = math.sqrt(1.0 - speed * speed)
    unit = v / speed if speed > 0 else np.array([1.0, 0.0, 0.0])
    rhat = rho_hat_grid(rho, grid)

    def terms(k, rh):
        k1 = k[0] * unit[0] + k[1] * unit[1] + k[2] * unit[2]
        k2 = k[0] ** 2 + k[1] ** 2 + k[2] ** 2
        safe = np.where(k2 > 0, k2, 1.0)
        kv2 = (k1 * speed) ** 2
        d0 = safe - kv2
        r2 = rh * rh
        j1 = nu**3 * r2 * (k1 * k1 / safe - 1.0) * (safe + kv2) / d0**2
        jj = 0.5 * nu * r2 * (3.0 * safe * kv2 - k1 * k1 * kv2 - safe * (safe + k1 * k1)) / (safe * d0**2)
        mask = k2 > 0
        return np.stack([np.where(mask, j1, 0.0), np.where(mask, jj, 0.0)])

    j1, jj = grid.full_sum(terms, rhat).real
    return float(j1), float(jj)


@dataclass
class OrthogonalityResiduals:
    """The two 3-vectors whose vanishing expresses omega(X0, tau_j) = 0 for all j."""

    first: np.ndarray
    second: np.ndarray

    def size(self) -> float:
        return float(max(np.abs(self.first).max(), np.abs(self.second).max()))


def orthogonality_conditions(rho: RadialChargeDensity, v, x0: State, grid: FourierGrid) -> OrthogonalityResiduals:
    """phi0 + Phi(0) + Psi(0) and K r0 + Phi'(0) + Psi'(0), with phi0 = pi0 - <rho, a0>.

    K is ``secular_matrix``.  Both vectors are real for real fields; the
    imaginary parts left by roundoff are dropped.
    """
    v = check_velocity(v)
    rhat = rho_hat_grid(rho, grid)
    rho_a = np.array([grid.inner(x0.a[i], rhat) for i in range(3)])
    phi0 = np.asarray(x0.p, dtype=float) - rho_a
    phi, psi = phi_psi(rho, v, 0.0, x0.e, x0.a, grid)
    dphi, dpsi = phi_psi(rho, v, 0.0, x0.e, x0.a, grid, derivative=True)
    first = phi0 + (phi + psi).real
    second = secular_matrix(rho, v, grid) @ np.asarray(x0.q, dtype=float) + (dphi + dpsi).real
    return OrthogonalityResiduals(first, second)
