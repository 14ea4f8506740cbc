"""Moment-map geometry: fiber-rank scans and phase-space volumes."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad
from scipy.optimize import brentq

from .cutoffs import CutoffSymbol
from .errors import ConfigurationError, DomainError
from .models import (AdmissibleBand, FlatTorus, LiouvilleTorus, ProfileMetric,
                     SurfaceOfRevolution)
from .regions import SpectralRegion

RANK_RTOL = 1e-8
VOLUME_RTOL = 1e-6
MC_SEED = 20240611


def _rank_from_sv(sv: np.ndarray) -> np.ndarray:
    smax = sv[..., 0]
    thr = RANK_RTOL * np.maximum(smax, 1e-12)
    return np.sum(sv > thr[..., None], axis=-1)


def fiber_rank(sys, x, xi) -> int:
    """Numerical rank of the fiber Jacobian ``[dp_i/dxi_j]`` at (x, xi)."""
    xi = np.asarray(xi, dtype=np.float64)
    if not np.any(xi != 0):
        raise DomainError("fiber rank undefined at xi = 0")
    J = sys.fiber_jacobian(x, xi)
    sv = np.linalg.svd(J, compute_uv=False)
    return int(_rank_from_sv(sv))


def critical_meridians(profile: ProfileMetric, lo: float | None = None,
                       hi: float | None = None, samples: int = 20001) -> list[float]:
    """Interior zeros of a'(sigma), located by sign changes and bracketing."""
    L = profile.L
    lo = L * 1e-6 if lo is None else lo
    hi = L * (1 - 1e-6) if hi is None else hi
    s = np.linspace(lo, hi, samples)
    d = profile.a_prime(s)
    roots = []
    for i in np.flatnonzero(np.sign(d[:-1]) * np.sign(d[1:]) <= 0):
        if d[i] == 0:
            roots.append(float(s[i]))
            continue
        if d[i + 1] == 0:
            continue
        roots.append(float(brentq(lambda t: float(profile.a_prime(np.array([t]))[0]),
                                  s[i], s[i + 1], xtol=1e-14)))
    return sorted(set(np.round(roots, 13).tolist()))


# ---------------------------------------------------------------------------
# rank scans
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PhaseGrid:
    """Cosphere slice: base points times unit fiber directions.

    For surfaces of revolution ``points`` are meridian positions; for tori and
    Liouville tori they are points of the chart.  ``n_angles`` directions
    are taken on the unit fiber circle in an orthonormal frame and always
    include the axis directions.
    """

    points: tuple
    n_angles: int = 64

    def angles(self) -> np.ndarray:
        n = 4 * max(1, int(np.ceil(self.n_angles / 4)))
        return np.linspace(-np.pi, np.pi, n + 1)[:-1]


@dataclass
class RankScanReport:
    system_kind: str
    coords: np.ndarray  # (cells, d) base coordinates
    angle: np.ndarray  # (cells,)
    xi: np.ndarray  # (cells, n)
    rank: np.ndarray
    min_sv_fiber: np.ndarray
    min_sv_full: np.ndarray
    full_rank: np.ndarray
    degenerate: np.ndarray
    flags: dict = field(default_factory=dict)
    critical_meridians: list = field(default_factory=list)

    @property
    def nondegenerate(self) -> np.ndarray:
        return ~self.degenerate

    def export(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        flag_names = sorted(self.flags)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(f"# system: {self.system_kind}\n")
            fh.write("# critical_meridians: "
                     + " ".join(f"{s:.17g}" for s in self.critical_meridians) + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{i + 1}" for i in range(self.coords.shape[1])] + ["angle"]
                       + [f"xi{i + 1}" for i in range(self.xi.shape[1])]
                       + ["rank", "min_sv_fiber", "min_sv_full", "degenerate"] + flag_names)
            for c in range(self.rank.size):
                w.writerow([f"{v:.17g}" for v in self.coords[c]] + [f"{self.angle[c]:.17g}"]
                           + [f"{v:.17g}" for v in self.xi[c]]
                           + [int(self.rank[c]), f"{self.min_sv_fiber[c]:.6e}",
                              f"{self.min_sv_full[c]:.6e}", int(self.degenerate[c])]
                           + [int(self.flags[k][c]) for k in flag_names])
        return path


def _scan_cells(sys, X, XI):
    J = sys.fiber_jacobian(X, XI)
    svf = np.linalg.svd(J, compute_uv=False)
    G = sys.full_gradient(X, XI)
    svg = np.linalg.svd(G, compute_uv=False)
    rank = _rank_from_sv(svf)
    degenerate = svg[..., -1] <= RANK_RTOL * np.maximum(svg[..., 0], 1e-12)
    return rank, svf[..., -1], svg[..., -1], degenerate


def scan_regions(sys, grid: PhaseGrid) -> RankScanReport:
    """Fiber rank and nondegeneracy on a cosphere slice.

    The meridian grid of a surface of revolution is refined by inserting the
    critical meridians where a' vanishes, so rank drops on them are hit
    exactly rather than straddled.
    """
    ang = grid.angles()
    n = sys.dim
    crit: list[float] = []
    flags = {}
    if isinstance(sys, SurfaceOfRevolution):
        prof = sys.profile
        sig = np.asarray(grid.points, dtype=np.float64).ravel()
        if np.any(sig <= 0) or np.any(sig >= prof.L):
            raise DomainError("scan meridians must lie strictly inside (0, L)")
        crit = critical_meridians(prof, float(sig.min()), float(sig.max()))
        sig = np.unique(np.concatenate([sig, crit]))
        S, A = np.meshgrid(sig, ang, indexing="ij")
        S, A = S.ravel(), A.ravel()
        a = prof.a(S)
        X = np.column_stack([S, np.zeros_like(S)])
        XI = np.column_stack([np.cos(A), a * np.sin(A)])
        coords = S[:, None]
        rank, svf, svg, deg = _scan_cells(sys, X, XI)
        flags["sigma_zero"] = np.abs(XI[:, 0]) <= 1e-12
        flags["pole"] = a <= 1e-6 * prof.a_max
        flags["critical_meridian"] = np.isin(S, np.asarray(crit)) if crit else np.zeros(S.size, bool)
    elif isinstance(sys, (FlatTorus, LiouvilleTorus)):
        pts = np.asarray(grid.points, dtype=np.float64).reshape(-1, n)
        if n == 1:
            dirs = np.array([[1.0], [-1.0]])
            A = np.array([0.0, np.pi])
        elif n == 2:
            dirs = np.column_stack([np.cos(ang), np.sin(ang)])
            A = ang
        else:
            rng = np.random.default_rng(MC_SEED)
            dirs = rng.normal(size=(grid.n_angles, n))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            A = np.arange(grid.n_angles, dtype=np.float64)
        P = np.repeat(pts, dirs.shape[0], axis=0)
        XI = np.tile(dirs, (pts.shape[0], 1))
        A = np.tile(A, pts.shape[0])
        coords = P
        X = P
        if isinstance(sys, LiouvilleTorus):
            on_axes = (np.abs(XI[:, 0]) <= 1e-12) | (np.abs(XI[:, 1]) <= 1e-12)
            flags["axis_direction"] = on_axes
        rank, svf, svg, deg = _scan_cells(sys, X, XI)
    else:
        raise ConfigurationError(f"cannot scan {type(sys).__name__}")
    return RankScanReport(
        system_kind=sys.kind,
        coords=coords,
        angle=A,
        xi=XI,
        rank=rank,
        min_sv_fiber=svf,
        min_sv_full=svg,
        full_rank=rank == n,
        degenerate=deg,
        flags=flags,
        critical_meridians=crit,
    )


# ---------------------------------------------------------------------------
# moment image
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FourierCone:
    """Working cone of a torus: directions within ``half_angle`` of ``axis``."""

    axis: tuple
    half_angle: float

    def contains(self, eta) -> np.ndarray:
        eta = np.asarray(eta, dtype=np.float64)
        ax = np.asarray(self.axis, dtype=np.float64)
        ax = ax / np.linalg.norm(ax)
        nrm = np.linalg.norm(eta, axis=-1)
        return (nrm > 0) & (eta @ ax >= nrm * np.cos(self.half_angle))


def moment_image_contains(sys, band, eta) -> bool:
    """Whether ``eta`` lies in the image of the working cone."""
    eta = np.asarray(eta, dtype=np.float64)
    if not np.any(eta != 0):
        raise DomainError("moment image test needs eta != 0")
    if isinstance(sys, SurfaceOfRevolution):
        if not isinstance(band, AdmissibleBand):
            raise ConfigurationError("surface of revolution needs an AdmissibleBand")
        return bool(band.contains(eta))
    if not isinstance(band, FourierCone):
        raise ConfigurationError("torus needs a FourierCone")
    return bool(band.contains(eta))


# ---------------------------------------------------------------------------
# Liouville volumes
# ---------------------------------------------------------------------------


def _gl_panels(breaks, n):
    """Composite Gauss-Legendre nodes/weights on consecutive break intervals."""
    x, w = leggauss(n)
    nodes, weights = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b <= a:
            continue
        nodes.append(0.5 * (b - a) * x + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * w)
    return np.concatenate(nodes), np.concatenate(weights)


def _angular_integral(weight_fn, interval_fn, breaks, n=48, rtol=1e-12):
    """Integrate ``weight(phi) * (t_hi^2 - t_lo^2)/2`` over the given
    panels with node doubling until two estimates agree."""
    prev = None
    for _ in range(6):
        phi, w = _gl_panels(breaks, n)
        lo, hi = interval_fn(phi)
        val = float(np.sum(w * weight_fn(phi) * 0.5 * (hi * hi - lo * lo)))
        if prev is not None and abs(val - prev) <= rtol * max(abs(val), 1e-300):
            return val
        prev = val
        n *= 2
    return val


def _sor_fiber_area(a: float, region: SpectralRegion, cutoff: CutoffSymbol | None) -> float:
    """``int 1{p(x, xi) in region} chi0^2 dSigma dTheta`` at a meridian with
    warping value ``a``, in polar fiber coordinates.

    With ``Sigma = t cos(phi)`` and ``Theta = a t sin(phi)`` one has
    ``p = t * (1, a sin(phi))`` and ``dSigma dTheta = a t dt dphi``.  Only
    ``sin(phi)`` enters, so the half-circle ``[-pi/2, pi/2]`` is doubled.
    """
    knots = [s for s in region.ray_slopes()]
    if cutoff is not None and not cutoff.is_identity:
        knots += [k for k in cutoff.knots if np.isfinite(k)]
    brk = [-0.5 * np.pi, 0.5 * np.pi]
    for s in knots:
        if abs(s) < a:
            brk.append(float(np.arcsin(s / a)))
    brk = sorted(set(brk))

    def interval(phi):
        v = np.column_stack([np.ones_like(phi), a * np.sin(phi)])
        return region.ray_interval(v)

    def weight(phi):
        if cutoff is None or cutoff.is_identity:
            return np.ones_like(phi)
        return cutoff.profile(a * np.sin(phi)) ** 2

    return 2.0 * a * _angular_integral(weight, interval, brk)


def _sor_volume(sys: SurfaceOfRevolution, region: SpectralRegion,
                cutoff: CutoffSymbol | None) -> float:
    prof = sys.profile
    slopes = [abs(s) for s in region.ray_slopes()]
    if cutoff is not None and not cutoff.is_identity:
        slopes += [abs(k) for k in cutoff.knots if np.isfinite(k)]
    # meridians where a(sigma) equals a slope threshold are kinks of the fiber area
    pts = set()
    s = np.linspace(0.0, prof.L, 4001)
    av = prof.a(s)
    for thr in set(slopes):
        d = av - thr
        for i in np.flatnonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0):
            pts.add(float(brentq(lambda t: float(prof.a(np.array([t]))[0]) - thr,
                                 s[i], s[i + 1], xtol=1e-14)))
    for c in critical_meridians(prof):
        pts.add(c)
    edges = [0.0] + sorted(p for p in pts if 0 < p < prof.L) + [prof.L]

    def f(sig):
        a = float(prof.a(np.array([sig]))[0])
        if a <= 0:
            return 0.0
        return _sor_fiber_area(a, region, cutoff)

    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, _ = quad(f, lo, hi, epsabs=0.0, epsrel=1e-10, limit=400)
        total += val
    return 2.0 * np.pi * total


def _torus_volume(sys: FlatTorus, region: SpectralRegion,
                  cutoff: CutoffSymbol | None) -> float | None:
    n = sys.n
    vol = (2 * np.pi) ** n
    if cutoff is None or cutoff.is_identity:
        if region.kind == "box":
            return vol * float(np.prod(2 * np.abs(np.array(region.c)) * region.lam))
        if region.kind == "unit_box":
            return vol
        if region.kind == "cone":
            r = region.radius
            if region.half_angle >= np.pi:
                ball = {1: 2 * r, 2: np.pi * r**2, 3: 4 / 3 * np.pi * r**3,
                        4: 0.5 * np.pi**2 * r**4}[n]
                return vol * ball
            if n == 2:
                return vol * min(region.half_angle, np.pi) * r**2
            return None
    if n == 2:
        brk = [-np.pi, np.pi] + region.ray_angles()
        if cutoff is not None and not cutoff.is_identity:
            th = np.arctan2(cutoff.axis[1], cutoff.axis[0])
            for k in cutoff.knots:
                brk += [th + k, th - k]
        brk = sorted(set(float(np.angle(np.exp(1j * b))) for b in brk) | {-np.pi, np.pi})

        def interval(phi):
            return region.ray_interval(np.column_stack([np.cos(phi), np.sin(phi)]))

        def weight(phi):
            if cutoff is None or cutoff.is_identity:
                return np.ones_like(phi)
            return cutoff.symbol(sys, None, np.column_stack([np.cos(phi), np.sin(phi)])) ** 2

        return vol * _angular_integral(weight, interval, brk)
    return None


def monte_carlo_volume(sys, region: SpectralRegion, weight: CutoffSymbol | None = None,
                       samples: int = 1_000_000, seed: int = MC_SEED,
                       chunk: int = 1_000_000) -> tuple[float, float]:
    """Monte Carlo estimate of the weighted volume and its standard error."""
    sor_level = isinstance(sys, SurfaceOfRevolution) and region.kind == "level"
    if sor_level and region.index != 0:
        raise DomainError("a level set in p2 has infinite volume")
    if not (region.bounded or sor_level):
        raise DomainError("volume of an unbounded region")
    rng = np.random.default_rng(seed)
    R = region.radius if sor_level else region.radius_bound()
    acc = acc2 = 0.0
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        if isinstance(sys, FlatTorus):
            lo, hi = region.bounding_box()
            eta = rng.uniform(lo, hi, size=(m, sys.n))
            box = float(np.prod(hi - lo)) * (2 * np.pi) ** sys.n
            g = region.contains(eta, check_ties=False).astype(np.float64)
            if weight is not None:
                g *= weight.weights(eta) ** 2
        elif isinstance(sys, SurfaceOfRevolution):
            prof = sys.profile
            amax = prof.a_max
            sig = rng.uniform(0.0, prof.L, m)
            Sg = rng.uniform(-R, R, m)
            Th = rng.uniform(-amax * R, amax * R, m)
            box = prof.L * 2 * R * 2 * amax * R * 2 * np.pi
            a = prof.a(sig)
            pos = a > 0
            eta = np.zeros((m, 2))
            eta[pos] = sys.symbols(np.column_stack([sig[pos], np.zeros(pos.sum())]),
                                   np.column_stack([Sg[pos], Th[pos]]))
            g = pos & region.contains(eta, check_ties=False)
            g = g.astype(np.float64)
            if weight is not None:
                g *= weight.weights(eta) ** 2
        else:
            raise ConfigurationError("Monte Carlo volume supports tori and surfaces of revolution")
        acc += float(g.sum())
        acc2 += float((g * g).sum())
        done += m
    mean = acc / samples
    var = max(acc2 / samples - mean * mean, 0.0)
    return box * mean, box * np.sqrt(var / samples)


def liouville_volume(sys, region: SpectralRegion, weight: CutoffSymbol | None = None,
                     mc_samples: int = 2_000_000) -> float:
    """Symplectic volume of ``{p(x, xi) in region}`` weighted by ``w^2``."""
    if region.dim != sys.dim:
        raise DomainError("region dimension does not match the system")
    if isinstance(sys, SurfaceOfRevolution):
        if region.kind == "level" and region.index != 0:
            raise DomainError("a level set in p2 has infinite volume")
        return _sor_volume(sys, region, weight)
    if not region.bounded:
        raise DomainError("volume of an unbounded region")
    if isinstance(sys, FlatTorus):
        v = _torus_volume(sys, region, weight)
        if v is not None:
            return float(v)
        return monte_carlo_volume(sys, region, weight, mc_samples)[0]
    raise ConfigurationError(f"no volume for {type(sys).__name__}")
