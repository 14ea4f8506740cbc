"""Leading terms of the joint spectral function and remainder-exponent fits.

Leading terms are fiber integrals over ``{xi : p(x, xi) in I(lam, c)}``
weighted by the squared cutoff symbol, with an oscillating phase off the
diagonal.  On a surface of revolution the fiber over a joint value ``eta``
has two points (the two signs of ``Sigma``) and the phase is homogeneous,
``Phi_pm = eta1 * A_pm(r)`` with ``r = eta2 / eta1``, so the natural fiber
coordinates are ``(eta1, r)``.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import stats

from .cutoffs import CutoffSymbol, identity_cutoff
from .errors import ConfigurationError, DomainError, NumericError, OutOfBandError
from .geometry import liouville_volume
from .models import AdmissibleBand, FlatTorus, SurfaceOfRevolution
from .regions import SpectralRegion

DIAG_RTOL = 1e-7
OFFDIAG_TOL = 1e-10
POINTS_PER_WAVELENGTH = 20
MAX_NODES = 10_000_000
GL_ORDER = 20


# ---------------------------------------------------------------------------
# quadrature helpers
# ---------------------------------------------------------------------------


def _panels(breaks, per_panel: int):
    """GL nodes on each break interval, each split into ``per_panel`` panels."""
    x, w = leggauss(GL_ORDER)
    nodes, weights = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b <= a:
            continue
        edges = np.linspace(a, b, per_panel + 1)
        h = np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        nodes.append((0.5 * h[:, None] * x[None, :] + mid[:, None]).ravel())
        weights.append((0.5 * h[:, None] * w[None, :]).ravel())
    if not nodes:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(nodes), np.concatenate(weights)


def _doubling(estimate, start: int, tol: float, rel: bool = True, limit: int = 4096):
    """Evaluate ``estimate(panels)`` with doubling panel counts until two
    successive values agree to ``tol``."""
    k = start
    prev = estimate(k)
    while True:
        k *= 2
        cur = estimate(k)
        scale = max(abs(cur), 1e-300) if rel else 1.0
        if abs(cur - prev) <= tol * scale:
            return cur
        if k >= limit:
            raise NumericError(f"quadrature did not converge (last change {abs(cur - prev):.3g})")
        prev = cur


def _check_sor_point(sys: SurfaceOfRevolution, cutoff: CutoffSymbol, x, band):
    band = band if band is not None else cutoff.band
    sigma = float(np.ravel(x)[0])
    if band is not None and not bool(band.contains_sigma(sigma)):
        raise OutOfBandError(f"sigma={sigma:.6g} outside band [{band.sigma_lo}, {band.sigma_hi}]")
    if not (0 < sigma < sys.profile.L):
        raise DomainError("point must avoid the poles")
    return sigma, band


def _ratio_support(cutoff: CutoffSymbol, a: float) -> tuple[float, float, list]:
    """Interval of ``r`` where the squared cutoff is nonzero and the knots."""
    if cutoff.is_identity:
        return -a, a, []
    lo, hi = max(cutoff.c_min, -a), min(cutoff.c_max, a)
    return lo, hi, [k for k in cutoff.knots if lo < k < hi]


# ---------------------------------------------------------------------------
# diagonal leading term
# ---------------------------------------------------------------------------


def _sor_diag(sys: SurfaceOfRevolution, cutoff: CutoffSymbol, lam: float, c, sigma: float) -> float:
    """Cartesian Gauss-Legendre in ``(Sigma, u = Theta / a)``.

    The region is ``Sigma^2 + u^2 <= (c1 lam)^2``, ``|a u| <= c2 lam`` and the
    weight is ``chi0(a u / sqrt(Sigma^2 + u^2))^2``.  The substitution's
    factor ``a`` cancels the Riemannian density ``1 / a``.
    """
    a = float(sys.profile.a(np.array([sigma]))[0])
    R = abs(c[0]) * lam
    U = min(R, abs(c[1]) * lam / a)
    knots = [] if cutoff.is_identity else [abs(k) for k in cutoff.knots if k != 0]
    # outer breakpoints: where a knot circle meets the disc edge, plus 0
    ub = {-U, 0.0, U}
    for k in knots:
        if k < a:
            u = k * R / a
            if u < U:
                ub.update({u, -u})
    ubreaks = sorted(ub)

    def inner(u, per):
        # integrate over Sigma in [-smax, smax] for each u (vectorised)
        smax = np.sqrt(np.maximum(R * R - u * u, 0.0))
        cuts = [np.zeros_like(u)]
        for k in knots:
            if k < a:
                with np.errstate(divide="ignore", invalid="ignore"):
                    s = np.abs(u) * np.sqrt(np.maximum(a * a / (k * k) - 1.0, 0.0))
                cuts.append(np.minimum(s, smax))
        cuts.append(smax)
        cuts = np.sort(np.stack(cuts, axis=-1), axis=-1)
        x, w = leggauss(GL_ORDER)
        total = np.zeros_like(u)
        for i in range(cuts.shape[1] - 1):
            for j in range(per):
                lo = cuts[:, i] + (cuts[:, i + 1] - cuts[:, i]) * j / per
                hi = cuts[:, i] + (cuts[:, i + 1] - cuts[:, i]) * (j + 1) / per
                S = 0.5 * (hi - lo)[:, None] * x[None, :] + 0.5 * (hi + lo)[:, None]
                wt = 0.5 * (hi - lo)[:, None] * w[None, :]
                if cutoff.is_identity:
                    f = np.ones_like(S)
                else:
                    with np.errstate(divide="ignore", invalid="ignore"):
                        r = a * u[:, None] / np.sqrt(S * S + u[:, None] ** 2)
                    f = cutoff.profile(np.nan_to_num(r, nan=0.0)) ** 2
                total += np.sum(wt * f, axis=1)
        return 2.0 * total  # Sigma is symmetric

    def estimate(per):
        u, wu = _panels(ubreaks, per)
        return float(np.sum(wu * inner(u, per)))

    return _doubling(estimate, 2, DIAG_RTOL * 0.1) / (2 * np.pi) ** 2


def _torus_polar(sys: FlatTorus, cutoff: CutoffSymbol, lam: float, c, d) -> complex:
    """``(2 pi)^-2 int chi^2 e^{i xi.d} dxi`` over the box in polar coordinates
    with GL in both the angle and the radius."""
    region = SpectralRegion.box(lam, c)
    th = np.arctan2(cutoff.axis[1], cutoff.axis[0]) if cutoff.axis else 0.0
    brk = [-np.pi, np.pi] + region.ray_angles()
    if not cutoff.is_identity:
        brk += [th + k for k in cutoff.knots] + [th - k for k in cutoff.knots]
    brk = sorted({float(np.angle(np.exp(1j * b))) for b in brk} | {-np.pi, np.pi})
    d = np.asarray(d, dtype=np.float64)
    tmax = region.radius_bound()
    nd = float(np.linalg.norm(d))
    waves = tmax * nd / (2 * np.pi)
    per_t = max(1, int(np.ceil(POINTS_PER_WAVELENGTH * waves / GL_ORDER)))
    x, w = leggauss(GL_ORDER)

    def estimate(per):
        phi, wphi = _panels(brk, per)
        if phi.size * per_t * GL_ORDER > MAX_NODES:
            raise NumericError("oscillatory quadrature needs more than 1e7 nodes")
        om = np.column_stack([np.cos(phi), np.sin(phi)])
        _, thi = region.ray_interval(om)
        amp = np.ones_like(phi) if cutoff.is_identity else cutoff.symbol(sys, None, om) ** 2
        A = om @ d
        tot = np.zeros(phi.size, dtype=complex)
        for j in range(per_t):
            lo, hi = thi * j / per_t, thi * (j + 1) / per_t
            t = 0.5 * (hi - lo)[:, None] * x[None, :] + 0.5 * (hi + lo)[:, None]
            wt = 0.5 * (hi - lo)[:, None] * w[None, :]
            tot += np.sum(wt * t * np.exp(1j * t * A[:, None]), axis=1)
        return complex(np.sum(wphi * amp * tot))

    start = max(2, int(np.ceil(POINTS_PER_WAVELENGTH * waves * 2 * np.pi / GL_ORDER / (len(brk) - 1))))
    return _doubling(estimate, start, OFFDIAG_TOL, rel=False) / (2 * np.pi) ** 2


def _torus_separable(lam: float, c, d) -> complex:
    """Product of 1-D GL integrals ``int_{-L}^{L} e^{i t d} dt / (2 pi)``."""
    out = 1.0 + 0j
    x, w = leggauss(GL_ORDER)
    for ck, dk in zip(c, d):
        L = abs(ck) * lam
        waves = 2 * L * abs(dk) / (2 * np.pi)
        per = max(2, int(np.ceil(POINTS_PER_WAVELENGTH * waves / GL_ORDER)) * 2)
        if per * GL_ORDER > MAX_NODES:
            raise NumericError("oscillatory quadrature needs more than 1e7 nodes")
        t, wt = _panels([-L, L], per)
        out *= np.sum(wt * np.exp(1j * t * dk)) / (2 * np.pi)
    return complex(out)


def leading_term_diagonal(sys, cutoff: CutoffSymbol | None, lam: float, c, x,
                          band: AdmissibleBand | None = None) -> float:
    """Predicted diagonal value ``(2 pi)^-n int_{p(x, xi) in I} sigma(Psi)^2 dxi``."""
    cutoff = cutoff or identity_cutoff()
    c = np.asarray(c, dtype=np.float64).ravel()
    SpectralRegion.box(lam, c)  # validates c
    if isinstance(sys, FlatTorus):
        if cutoff.is_identity:
            return float(np.prod(2 * np.abs(c) * lam) / (2 * np.pi) ** sys.n)
        if sys.n != 2:
            raise DomainError("angular torus cutoffs are supported for n = 2 only")
        return _torus_polar(sys, cutoff, lam, c, np.zeros(2)).real
    if isinstance(sys, SurfaceOfRevolution):
        sigma, _ = _check_sor_point(sys, cutoff, x, band)
        return _sor_diag(sys, cutoff, lam, c, sigma)
    raise ConfigurationError(f"no leading term for {type(sys).__name__}")


# ---------------------------------------------------------------------------
# off-diagonal leading term
# ---------------------------------------------------------------------------


class _SorPhase:
    """``A_pm(r) = r dtheta pm B(r)`` with ``B(r) = int_{sy}^{sx} sqrt(1 - r^2/a^2)``
    (full phase) or ``(sx - sy) sqrt(1 - r^2/a(sx)^2)`` (linearized)."""

    def __init__(self, sys: SurfaceOfRevolution, x, y, mode: str):
        self.dtheta = float(x[1] - y[1])
        self.sx, self.sy = float(x[0]), float(y[0])
        self.mode = mode
        prof = sys.profile
        if mode == "full_phase":
            g, w = leggauss(48)
            s = 0.5 * (self.sx - self.sy) * g + 0.5 * (self.sx + self.sy)
            self.inv_a2 = 1.0 / prof.a(s) ** 2 if s.size else np.zeros(0)
            self.w = 0.5 * (self.sx - self.sy) * w
        else:
            self.inv_a2 = np.array([1.0 / float(prof.a(np.array([self.sx]))[0]) ** 2])
            self.w = np.array([self.sx - self.sy])

    def B(self, r):
        r = np.asarray(r, dtype=np.float64)
        rad = 1.0 - r[..., None] ** 2 * self.inv_a2
        if np.any(rad <= 0):
            raise OutOfBandError("phase path meets a turning point")
        return np.sum(self.w * np.sqrt(rad), axis=-1)

    def bound(self, rmax: float) -> tuple[float, float]:
        """Bounds on ``|A|`` and ``|dA/dr|`` for ``|r| <= rmax``."""
        r = np.linspace(-rmax, rmax, 401)
        b = self.B(r)
        A = np.abs(r * self.dtheta) + np.abs(b)
        dA = np.abs(self.dtheta) + np.abs(np.gradient(b, r))
        return float(A.max()), float(dA.max()) * 1.5


def _sor_offdiag(sys: SurfaceOfRevolution, cutoff: CutoffSymbol, lam: float, c,
                 x, y, mode: str) -> complex:
    a_y = float(sys.profile.a(np.array([y[0]]))[0])
    lo, hi, knots = _ratio_support(cutoff, a_y)
    if hi >= a_y or lo <= -a_y:
        raise OutOfBandError("cutoff support reaches the turning ratio at y")
    c1, c2 = abs(c[0]) * lam, abs(c[1]) * lam
    # T(r) = min(c1, c2/|r|) switches formula at |r| = c2/c1
    brk = sorted({lo, hi, *knots} | {v for v in (c2 / c1, -c2 / c1) if lo < v < hi})
    phase = _SorPhase(sys, x, y, mode)
    Amax, dAmax = phase.bound(max(abs(lo), abs(hi)))
    waves_t = c1 * Amax / (2 * np.pi)
    per_t = max(1, int(np.ceil(POINTS_PER_WAVELENGTH * waves_t / GL_ORDER)))
    waves_r = c1 * dAmax * (hi - lo) / (2 * np.pi)
    start = max(2, int(np.ceil(POINTS_PER_WAVELENGTH * waves_r / GL_ORDER / max(len(brk) - 1, 1))))
    xg, wg = leggauss(GL_ORDER)

    def estimate(per):
        r, wr = _panels(brk, per)
        if r.size * per_t * GL_ORDER > MAX_NODES:
            raise NumericError("oscillatory quadrature needs more than 1e7 nodes")
        with np.errstate(divide="ignore"):
            T = np.minimum(c1, np.where(r != 0, c2 / np.abs(r), np.inf))
        amp = np.ones_like(r) if cutoff.is_identity else cutoff.profile(r) ** 2
        jac = 1.0 / (a_y * np.sqrt(1.0 - (r / a_y) ** 2))
        B = phase.B(r)
        tot = np.zeros(r.size, dtype=complex)
        for sign in (1.0, -1.0):
            A = r * phase.dtheta + sign * B
            for j in range(per_t):
                tl, th = T * j / per_t, T * (j + 1) / per_t
                t = 0.5 * (th - tl)[:, None] * xg[None, :] + 0.5 * (th + tl)[:, None]
                wt = 0.5 * (th - tl)[:, None] * wg[None, :]
                tot += np.sum(wt * t * np.exp(1j * t * A[:, None]), axis=1)
        return complex(np.sum(wr * amp * jac * tot))

    return _doubling(estimate, start, OFFDIAG_TOL, rel=False) / (2 * np.pi) ** 2


def leading_term_offdiag(sys, cutoff: CutoffSymbol | None, lam: float, c, x, y,
                         mode: str = "full_phase", band: AdmissibleBand | None = None) -> complex:
    """Predicted kernel ``(2 pi)^-n int e^{i Phi} sigma(Psi)(y, xi)^2 dxi``.

    ``mode`` is ``full_phase`` (difference of generating functions) or
    ``linearized`` (``(x - y) . grad_x S(x; xi)``).  The amplitude is the
    diagonal one in both modes.
    """
    if mode not in ("full_phase", "linearized"):
        raise ConfigurationError(f"unknown phase mode {mode!r}")
    cutoff = cutoff or identity_cutoff()
    c = np.asarray(c, dtype=np.float64).ravel()
    SpectralRegion.box(lam, c)
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if isinstance(sys, FlatTorus):
        d = x - y
        if cutoff.is_identity and sys.n != 2:
            return _torus_separable(lam, c, d)
        if sys.n != 2:
            raise DomainError("angular torus cutoffs are supported for n = 2 only")
        return _torus_polar(sys, cutoff, lam, c, d)
    if isinstance(sys, SurfaceOfRevolution):
        _check_sor_point(sys, cutoff, x, band)
        _check_sor_point(sys, cutoff, y, band)
        return _sor_offdiag(sys, cutoff, lam, c, x, y, mode)
    raise ConfigurationError(f"no leading term for {type(sys).__name__}")


def sine_product(lam: float, c, d) -> float:
    """``prod_k 2 sin(|c_k| lam d_k) / (2 pi d_k)`` with the limit at ``d_k = 0``."""
    out = 1.0
    for ck, dk in zip(np.abs(np.ravel(c)), np.ravel(d)):
        L = ck * lam
        out *= 2 * L / (2 * np.pi) if dk == 0 else 2 * np.sin(L * dk) / (2 * np.pi * dk)
    return float(out)


# ---------------------------------------------------------------------------
# integrated law
# ---------------------------------------------------------------------------


def integrated_prediction(sys, region: SpectralRegion, weight: CutoffSymbol | None = None) -> float:
    """``(2 pi)^-n`` times the Liouville volume of ``p^-1(region)``."""
    return liouville_volume(sys, region, weight) / (2 * np.pi) ** sys.dim


# ---------------------------------------------------------------------------
# exponent fits and reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExponentFit:
    beta: float
    lo: float
    hi: float
    used: int
    intercept: float


def fit_exponent(lams, remainders) -> ExponentFit:
    """OLS of ``log|R|`` on ``log lam`` with a 95% band; zero remainders are
    dropped.  Needs at least 4 points spanning a factor of 4."""
    lams = np.asarray(lams, dtype=np.float64)
    r = np.abs(np.asarray(remainders, dtype=np.float64))
    keep = r > 0
    lams, r = lams[keep], r[keep]
    if lams.size < 4 or lams.max() / lams.min() < 4 - 1e-12:
        raise ConfigurationError("exponent fit needs >= 4 nonzero points spanning a factor >= 4")
    X, Y = np.log(lams), np.log(r)
    res = stats.linregress(X, Y)
    tq = stats.t.ppf(0.975, X.size - 2)
    half = tq * res.stderr
    return ExponentFit(float(res.slope), float(res.slope - half), float(res.slope + half),
                       int(X.size), float(res.intercept))


TABLE_COLUMNS = ("lambda", "actual_re", "actual_im", "predicted_re", "predicted_im",
                 "remainder_abs", "truncation_bound", "point")


@dataclass
class ComparisonReport:
    experiment: str
    target: str
    lambdas: list
    rows: list  # (lam, actual, predicted, remainder_abs, truncation_bound, point)
    fits: list  # ExponentFit of the sup over points
    threshold: float
    exponent_sense: str  # "upper" (beta <= thr), "abs" (|beta| <= thr)
    notes: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    runtime_s: float = 0.0

    @property
    def beta(self) -> float:
        """Worst fitted exponent over points."""
        if self.exponent_sense == "abs":
            return max((f.beta for f in self.fits), key=abs)
        return max(f.beta for f in self.fits)

    @property
    def passed(self) -> bool:
        ok = self.extra.get("checks_ok", True)
        if self.exponent_sense == "abs":
            return ok and all(abs(f.beta) <= self.threshold for f in self.fits)
        return ok and all(f.beta <= self.threshold for f in self.fits)

    def table_text(self) -> str:
        lines = [",".join(TABLE_COLUMNS)]
        for lam, act, pred, rem, tb, pt in self.rows:
            act, pred = complex(act), complex(pred)
            lines.append(",".join([f"{lam:.17g}", f"{act.real:.17g}", f"{act.imag:.17g}",
                                   f"{pred.real:.17g}", f"{pred.imag:.17g}", f"{rem:.17g}",
                                   f"{tb:.17g}", str(pt)]))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "target": self.target,
            "lambdas": list(map(float, self.lambdas)),
            "beta": self.beta,
            "fits": [{"beta": f.beta, "ci95": [f.lo, f.hi], "points_used": f.used}
                     for f in self.fits],
            "threshold": self.threshold,
            "exponent_sense": self.exponent_sense,
            "passed": bool(self.passed),
            "notes": list(self.notes),
            "extra": self.extra,
            "runtime_s": round(self.runtime_s, 3),
        }

    def write(self, outdir) -> tuple[Path, Path]:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        rep = outdir / f"{self.experiment}.report"
        tab = outdir / f"{self.experiment}.csv"
        with open(rep, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True, default=float)
            fh.write("\n")
        with open(tab, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.table_text())
        return rep, tab


def load_report(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def summary_rows(paths) -> list[dict]:
    """One summary row per report file."""
    out = []
    for p in paths:
        d = load_report(p)
        out.append({"experiment": d["experiment"], "target": d["target"],
                    "beta": d["beta"], "threshold": d["threshold"],
                    "passed": d["passed"], "runtime_s": d["runtime_s"]})
    return out


# ---------------------------------------------------------------------------
# experiment driver
# ---------------------------------------------------------------------------


def verify(cfg, spectrum=None) -> ComparisonReport:
    """Run the sweep named by ``cfg.target`` (see :mod:`qcilab.experiments`)."""
    from .experiments import run_experiment

    t0 = time.perf_counter()
    rep = run_experiment(cfg, spectrum)
    rep.runtime_s = time.perf_counter() - t0
    return rep
