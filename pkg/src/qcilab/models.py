"""Model systems: flat tori and surfaces of revolution.

A surface of revolution carries the metric ``dsigma^2 + a(sigma)^2 dtheta^2``
with meridian coordinate ``sigma in [0, L]``.  Its commuting symbols are the
speed ``p1 = sqrt(Sigma^2 + Theta^2 / a^2)`` and the angular momentum
``p2 = Theta``.  Everything here is immutable and safe to share between
threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar
from scipy.special import ellipeinc, ellipe

from .errors import ConfigurationError, DomainError, OutOfBandError

ArrayFn = Callable[[np.ndarray], np.ndarray]

SIMPSON_TOL = 1e-10


# ---------------------------------------------------------------------------
# profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ProfileMetric:
    """Warping profile ``a(sigma)`` with a closure for exact evaluation.

    ``closure`` is ``"analytic"`` for built-ins and ``"cubic"`` for
    user tables.  ``consistency_const`` bounds the centred-difference error
    of ``a`` against ``a_prime`` as ``C*h**2``.
    """

    name: str
    L: float
    a_fn: ArrayFn = field(repr=False)
    a_prime_fn: ArrayFn = field(repr=False)
    grid_size: int = 256
    closure: str = "analytic"
    params: tuple = ()
    consistency_const: float = 1.0

    def __post_init__(self):
        if not (self.L > 0 and np.isfinite(self.L)):
            raise ConfigurationError(f"profile length must be positive, got {self.L}")
        if int(self.grid_size) < 64:
            raise ConfigurationError("profile grid_size must be >= 64")
        s = self.sigma
        a = self.a_samples
        if not np.all(np.isfinite(a)):
            raise ConfigurationError(f"profile {self.name!r} has non-finite samples")
        if np.any(a[1:-1] <= 0):
            bad = s[1:-1][a[1:-1] <= 0][0]
            raise ConfigurationError(
                f"profile {self.name!r} is non-positive in the interior (sigma={bad:.6g})"
            )
        scale = max(float(np.max(a)), 1e-300)
        if abs(a[0]) > 1e-12 * max(1.0, scale) or abs(a[-1]) > 1e-12 * max(1.0, scale):
            raise ConfigurationError(
                f"profile {self.name!r} must vanish at both poles (got {a[0]:.3g}, {a[-1]:.3g})"
            )
        if self.consistency_defect() > self.consistency_const * self.h**2:
            raise ConfigurationError(
                f"profile {self.name!r}: derivative samples inconsistent with a"
            )

    @property
    def h(self) -> float:
        return self.L / self.grid_size

    @cached_property
    def sigma(self) -> np.ndarray:
        return np.linspace(0.0, self.L, int(self.grid_size) + 1)

    @cached_property
    def a_samples(self) -> np.ndarray:
        return np.asarray(self.a_fn(self.sigma), dtype=np.float64)

    @cached_property
    def a_prime_samples(self) -> np.ndarray:
        return np.asarray(self.a_prime_fn(self.sigma), dtype=np.float64)

    def consistency_defect(self) -> float:
        a = self.a_samples
        cd = (a[2:] - a[:-2]) / (2 * self.h)
        return float(np.max(np.abs(self.a_prime_samples[1:-1] - cd)))

    def a(self, sigma) -> np.ndarray:
        return self.a_fn(self._check(sigma))

    def a_prime(self, sigma) -> np.ndarray:
        return self.a_prime_fn(self._check(sigma))

    def _check(self, sigma):
        s = np.asarray(sigma, dtype=np.float64)
        tol = 1e-12 * self.L
        if np.any(s < -tol) or np.any(s > self.L + tol):
            raise DomainError(f"sigma outside [0, {self.L}]")
        return np.clip(s, 0.0, self.L)

    @cached_property
    def a_max(self) -> float:
        """Maximum of a over [0, L], refined around the best sample."""
        s = np.linspace(0.0, self.L, 20 * int(self.grid_size) + 1)
        vals = self.a_fn(s)
        i = int(np.argmax(vals))
        lo, hi = s[max(i - 1, 0)], s[min(i + 1, s.size - 1)]
        res = minimize_scalar(lambda t: -float(self.a_fn(np.array([t]))[0]),
                              bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-13})
        return float(max(vals[i], -res.fun))


def _sphere_profile(grid_size: int) -> ProfileMetric:
    return ProfileMetric("sphere", float(np.pi), np.sin, np.cos, grid_size,
                         "analytic", (), 1.0 / 3.0)


def _bump_profile(amp: float, grid_size: int) -> ProfileMetric:
    if not (-0.5 < amp < 0.5):
        raise ConfigurationError("bump amplitude must lie in (-0.5, 0.5)")

    def a(s):
        s = np.asarray(s, dtype=np.float64)
        sn = np.sin(s)
        return sn * (1.0 + amp * sn * sn)

    def ap(s):
        s = np.asarray(s, dtype=np.float64)
        sn = np.sin(s)
        return np.cos(s) * (1.0 + 3.0 * amp * sn * sn)

    # |a'''| <= 1 + 7.5|amp| since sin^3 = (3 sin - sin 3s)/4
    const = (1.0 + 7.5 * abs(amp)) / 3.0
    return ProfileMetric("bump", float(np.pi), a, ap, grid_size, "analytic",
                         (float(amp),), const)


def _ellipsoid_profile(aspect: float, grid_size: int) -> ProfileMetric:
    """Ellipsoid of revolution with polar semi-axis ``aspect`` and unit
    equatorial radius, parametrised by meridian arclength."""
    if not (aspect > 0 and np.isfinite(aspect)):
        raise ConfigurationError("ellipsoid aspect must be positive")
    m = 1.0 - aspect * aspect
    L = 2.0 * float(ellipe(m))

    def t_of_sigma(s):
        s = np.asarray(s, dtype=np.float64)
        t = s * (np.pi / L)
        if m == 0.0:
            return t
        for _ in range(60):
            speed = np.sqrt(1.0 - m * np.sin(t) ** 2)
            step = (ellipeinc(t, m) - s) / speed
            t = t - step
            if np.max(np.abs(step), initial=0.0) < 1e-15:
                break
        return t

    def a(s):
        return np.sin(t_of_sigma(s))

    def ap(s):
        t = t_of_sigma(s)
        return np.cos(t) / np.sqrt(1.0 - m * np.sin(t) ** 2)

    # third-derivative bound measured from the closure itself
    ss = np.linspace(0.0, L, 4001)
    d1 = ap(ss)
    d3 = np.gradient(np.gradient(d1, ss), ss)
    const = max(float(np.max(np.abs(d3[2:-2]))), 1.0) / 3.0
    return ProfileMetric("ellipsoid", L, a, ap, grid_size, "analytic",
                         (float(aspect),), const)


def builtin_profile(name: str, params=(), grid_size: int = 256) -> ProfileMetric:
    """Built-in profile by name: ``sphere``, ``ellipsoid(aspect)`` or
    ``bump(amplitude)``."""
    params = tuple(float(p) for p in (params or ()))
    if name == "sphere":
        if params:
            raise ConfigurationError("sphere takes no parameters")
        return _sphere_profile(grid_size)
    if name == "ellipsoid":
        if len(params) != 1:
            raise ConfigurationError("ellipsoid takes one parameter (aspect)")
        return _ellipsoid_profile(params[0], grid_size)
    if name == "bump":
        if len(params) != 1:
            raise ConfigurationError("bump takes one parameter (amplitude)")
        return _bump_profile(params[0], grid_size)
    raise ConfigurationError(f"unknown profile {name!r}")


def load_profile_table(path, grid_size: int = 256, name: str | None = None) -> ProfileMetric:
    """Profile from a two-column text table ``sigma a(sigma)``.

    The first sigma must be 0; the last one fixes L.  Values are
    interpolated by a cubic spline.
    """
    try:
        data = np.loadtxt(path, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"cannot read profile table {path}: {exc}") from exc
    if data.shape[1] != 2 or data.shape[0] < 8:
        raise ConfigurationError("profile table needs two columns and at least 8 rows")
    s, a = data[:, 0], data[:, 1]
    if abs(s[0]) > 1e-12 or np.any(np.diff(s) <= 0):
        raise ConfigurationError("profile table sigma must start at 0 and increase")
    spline = CubicSpline(s, a)
    d1 = spline.derivative(1)
    d3 = spline.derivative(3)
    const = max(float(np.max(np.abs(d3(s)))), 1e-3) / 3.0

    def af(x):
        return spline(np.asarray(x, dtype=np.float64))

    def apf(x):
        return d1(np.asarray(x, dtype=np.float64))

    return ProfileMetric(name or str(path), float(s[-1]), af, apf, grid_size,
                         "cubic", (), const)


# ---------------------------------------------------------------------------
# systems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FlatTorus:
    """Standard flat torus ``R^n / (2 pi Z)^n`` with symbols ``p_i = xi_i``."""

    n: int

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or not (1 <= self.n <= 4):
            raise ConfigurationError(f"torus dimension must be in 1..4, got {self.n}")

    kind = "torus"

    @property
    def dim(self) -> int:
        return int(self.n)

    def symbols(self, x, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=np.float64)
        return xi.copy()

    def fiber_jacobian(self, x, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=np.float64)
        return np.broadcast_to(np.eye(self.n), xi.shape[:-1] + (self.n, self.n)).copy()

    def full_gradient(self, x, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=np.float64)
        out = np.zeros(xi.shape[:-1] + (self.n, 2 * self.n))
        out[..., :, self.n:] = np.eye(self.n)
        return out

    def volume_density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return np.ones(x.shape[:-1])

    @property
    def total_volume(self) -> float:
        return (2 * np.pi) ** self.n


@dataclass(frozen=True)
class SurfaceOfRevolution:
    """Surface of revolution with metric ``dsigma^2 + a(sigma)^2 dtheta^2``."""

    profile: ProfileMetric

    kind = "sor"
    dim = 2

    def _a(self, sigma):
        return self.profile.a(sigma)

    def symbols(self, x, xi) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        xi = np.asarray(xi, dtype=np.float64)
        a = self._a(x[..., 0])
        S, T = xi[..., 0], xi[..., 1]
        return np.stack([np.sqrt(S * S + (T / a) ** 2), T], axis=-1)

    def fiber_jacobian(self, x, xi) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        xi = np.asarray(xi, dtype=np.float64)
        a = self._a(x[..., 0])
        S, T = xi[..., 0], xi[..., 1]
        p1 = np.sqrt(S * S + (T / a) ** 2)
        if np.any(p1 == 0):
            raise DomainError("fiber Jacobian undefined at xi = 0")
        J = np.zeros(xi.shape[:-1] + (2, 2))
        J[..., 0, 0] = S / p1
        J[..., 0, 1] = T / (a * a * p1)
        J[..., 1, 1] = 1.0
        return J

    def full_gradient(self, x, xi) -> np.ndarray:
        """Rows dp_i in the order (dsigma, dtheta, dSigma, dTheta)."""
        x = np.asarray(x, dtype=np.float64)
        xi = np.asarray(xi, dtype=np.float64)
        a = self._a(x[..., 0])
        ap = self.profile.a_prime(x[..., 0])
        S, T = xi[..., 0], xi[..., 1]
        p1 = np.sqrt(S * S + (T / a) ** 2)
        if np.any(p1 == 0):
            raise DomainError("gradient undefined at xi = 0")
        G = np.zeros(xi.shape[:-1] + (2, 4))
        G[..., 0, 0] = -(T * T) * ap / (a**3 * p1)
        G[..., 0, 2] = S / p1
        G[..., 0, 3] = T / (a * a * p1)
        G[..., 1, 3] = 1.0
        return G

    def volume_density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return self._a(x[..., 0])


@dataclass(frozen=True)
class LiouvilleTorus:
    """Liouville metric ``(U1(x1) - U2(x2)) (dx1^2 + dx2^2)`` on the unit
    2-torus, with positive periodic potentials and ``U1 > U2``.

    Only symbols and gradients are provided (no spectrum).  With
    ``D = U1 - U2`` the symbols are ``p1 = sqrt((xi1^2 + xi2^2)/D)`` and
    ``p2 = sqrt((U2 xi1^2 + U1 xi2^2)/D)``.
    """

    U1: ArrayFn = field(default=lambda x: 3.0 + np.cos(2 * np.pi * x))
    dU1: ArrayFn = field(default=lambda x: -2 * np.pi * np.sin(2 * np.pi * x))
    U2: ArrayFn = field(default=lambda x: 1.0 + 0.5 * np.cos(2 * np.pi * x))
    dU2: ArrayFn = field(default=lambda x: -np.pi * np.sin(2 * np.pi * x))

    kind = "liouville"
    dim = 2

    def _parts(self, x, xi):
        x = np.asarray(x, dtype=np.float64)
        xi = np.asarray(xi, dtype=np.float64)
        u1, u2 = self.U1(x[..., 0]), self.U2(x[..., 1])
        D = u1 - u2
        if np.any(D <= 0):
            raise ConfigurationError("Liouville potentials must satisfy U1 > U2")
        q = xi[..., 0] ** 2 + xi[..., 1] ** 2
        r = u2 * xi[..., 0] ** 2 + u1 * xi[..., 1] ** 2
        return x, xi, u1, u2, D, q, r

    def symbols(self, x, xi) -> np.ndarray:
        _, _, _, _, D, q, r = self._parts(x, xi)
        return np.stack([np.sqrt(q / D), np.sqrt(r / D)], axis=-1)

    def fiber_jacobian(self, x, xi) -> np.ndarray:
        return self.full_gradient(x, xi)[..., :, 2:]

    def full_gradient(self, x, xi) -> np.ndarray:
        """Rows dp_i in the order (dx1, dx2, dxi1, dxi2)."""
        x, xi, u1, u2, D, q, r = self._parts(x, xi)
        if np.any(q == 0):
            raise DomainError("Liouville gradient undefined at xi = 0")
        p1 = np.sqrt(q / D)
        p2 = np.sqrt(r / D)
        d1, d2 = self.dU1(x[..., 0]), self.dU2(x[..., 1])
        D2 = D * D
        G = np.zeros(xi.shape[:-1] + (2, 4))
        G[..., 0, 0] = -q * d1 / (2 * D2 * p1)
        G[..., 0, 1] = q * d2 / (2 * D2 * p1)
        G[..., 0, 2] = xi[..., 0] / (D * p1)
        G[..., 0, 3] = xi[..., 1] / (D * p1)
        G[..., 1, 0] = -d1 * u2 * q / (2 * D2 * p2)
        G[..., 1, 1] = d2 * u1 * q / (2 * D2 * p2)
        G[..., 1, 2] = u2 * xi[..., 0] / (D * p2)
        G[..., 1, 3] = u1 * xi[..., 1] / (D * p2)
        return G

    def spatial_determinant(self, x, xi) -> np.ndarray:
        """Determinant of the x-gradients of (p1, p2)."""
        G = self.full_gradient(x, xi)
        return G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] * G[..., 1, 0]


ModelSystem = FlatTorus | SurfaceOfRevolution


def make_torus(n: int) -> FlatTorus:
    return FlatTorus(int(n) if isinstance(n, (int, np.integer)) else n)


def make_surface_of_revolution(profile: ProfileMetric) -> SurfaceOfRevolution:
    if not isinstance(profile, ProfileMetric):
        raise ConfigurationError("expected a ProfileMetric")
    a = profile.a_samples
    if np.any(a[1:-1] <= 0):
        raise ConfigurationError("profile must be positive in the interior")
    return SurfaceOfRevolution(profile)


# ---------------------------------------------------------------------------
# admissible band and generating functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdmissibleBand:
    """Meridian band ``[sigma_lo, sigma_hi]`` and angular-momentum ratio
    bound ``c_max`` with ``c_max < min a`` on the band."""

    profile: ProfileMetric
    sigma_lo: float
    sigma_hi: float
    c_max: float

    def __post_init__(self):
        if not (0 < self.sigma_lo < self.sigma_hi < self.profile.L):
            raise ConfigurationError("band must satisfy 0 < sigma_lo < sigma_hi < L")
        if not (0 < self.c_max):
            raise ConfigurationError("band c_max must be positive")
        if self.c_max >= self.a_band:
            raise ConfigurationError(
                f"c_max={self.c_max} must be below the band minimum of a ({self.a_band:.6g})"
            )

    @cached_property
    def a_band(self) -> float:
        s = np.linspace(self.sigma_lo, self.sigma_hi, 2001)
        lo = float(np.min(self.profile.a(s)))
        res = minimize_scalar(lambda t: float(self.profile.a(np.array([t]))[0]),
                              bounds=(self.sigma_lo, self.sigma_hi), method="bounded")
        return min(lo, float(res.fun))

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.sigma_lo + self.sigma_hi)

    def contains_sigma(self, sigma, tol: float = 1e-12) -> np.ndarray:
        s = np.asarray(sigma, dtype=np.float64)
        return (s >= self.sigma_lo - tol) & (s <= self.sigma_hi + tol)

    def contains(self, eta) -> np.ndarray:
        """Sector test ``eta1 > 0`` and ``|eta2| <= c_max * eta1``."""
        eta = np.asarray(eta, dtype=np.float64)
        return (eta[..., 0] > 0) & (np.abs(eta[..., 1]) <= self.c_max * eta[..., 0])


def adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                     tol: float = SIMPSON_TOL, max_depth: int = 40) -> float:
    """Adaptive Simpson quadrature with Richardson correction."""
    if a == b:
        return 0.0
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) * (fa + 4 * fm + fb) / 6.0
    total = 0.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        a0, b0, fa0, fm0, fb0, w0, eps, depth = stack.pop()
        m0 = 0.5 * (a0 + b0)
        lm, rm = 0.5 * (a0 + m0), 0.5 * (m0 + b0)
        flm, frm = f(lm), f(rm)
        left = (m0 - a0) * (fa0 + 4 * flm + fm0) / 6.0
        right = (b0 - m0) * (fm0 + 4 * frm + fb0) / 6.0
        delta = left + right - w0
        if depth >= max_depth or abs(delta) <= 15 * eps:
            total += left + right + delta / 15.0
        else:
            stack.append((m0, b0, fm0, frm, fb0, right, eps / 2, depth + 1))
            stack.append((a0, m0, fa0, flm, fm0, left, eps / 2, depth + 1))
    return total


@dataclass(frozen=True)
class TorusGeneratingFunction:
    owner: FlatTorus

    def S(self, x, eta) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        eta = np.asarray(eta, dtype=np.float64)
        return np.sum(x * eta, axis=-1)

    def grad_x(self, x, eta) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        eta = np.asarray(eta, dtype=np.float64)
        return np.broadcast_to(eta, np.broadcast_shapes(x.shape, eta.shape)).copy()


@dataclass(frozen=True)
class SorGeneratingFunction:
    """``S = eta2*theta + int_{sigma0}^{sigma} sqrt(eta1^2 - eta2^2/a^2) ds``
    on the positive Sigma branch."""

    owner: SurfaceOfRevolution
    basepoint: float
    tol: float = SIMPSON_TOL

    def _radial(self, sigma, e1, e2):
        a = self.owner.profile.a(sigma)
        rad = e1 * e1 - (e2 / a) ** 2
        if np.any(rad <= 0) or np.any(e1 <= 0):
            raise OutOfBandError(
                f"no real phase at sigma={np.ravel(sigma)[0]:.6g}, eta=({e1:.6g}, {e2:.6g})"
            )
        return np.sqrt(rad)

    def S(self, x, eta) -> float:
        x = np.asarray(x, dtype=np.float64)
        e1, e2 = (float(v) for v in np.asarray(eta, dtype=np.float64))
        sigma, theta = float(x[0]), float(x[1])
        # check both endpoints lie in the turning-point-free zone
        self._radial(np.array([sigma]), e1, e2)
        s0, s1 = sorted((self.basepoint, sigma))
        grid = np.linspace(s0, s1, 65)
        if np.any(e1 * e1 * self.owner.profile.a(grid) ** 2 <= e2 * e2):
            raise OutOfBandError("phase integration path crosses a turning point")

        def f(s):
            a = float(self.owner.profile.a(np.array([s]))[0])
            return np.sqrt(max(e1 * e1 - (e2 / a) ** 2, 0.0))

        val = adaptive_simpson(f, self.basepoint, sigma, self.tol)
        return e2 * theta + val

    def grad_x(self, x, eta) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        eta = np.asarray(eta, dtype=np.float64)
        e1, e2 = eta[..., 0], eta[..., 1]
        Sig = self._radial(x[..., 0], e1, e2)
        return np.stack([Sig, np.broadcast_to(e2, Sig.shape)], axis=-1)


GeneratingFunction = TorusGeneratingFunction | SorGeneratingFunction


def generating_function(sys, basepoint: float | None = None):
    """Generating function of ``sys``; the SoR basepoint defaults to pi/2."""
    if isinstance(sys, FlatTorus):
        return TorusGeneratingFunction(sys)
    if isinstance(sys, SurfaceOfRevolution):
        s0 = 0.5 * sys.profile.L if basepoint is None else float(basepoint)
        if not (0 < s0 < sys.profile.L):
            raise DomainError("basepoint must lie strictly inside (0, L)")
        return SorGeneratingFunction(sys, s0)
    raise ConfigurationError(f"no generating function for {type(sys).__name__}")
