"""Joint spectra of the model systems.

Torus spectra are lattice enumerations.  Surface-of-revolution spectra come
from one Sturm-Liouville problem per angular channel ``m``:

    -(1/a) (a f')' + (m^2 / a^2) f = lam^2 f

discretised on the staggered grid ``sigma_i = (i + 1/2) h`` with zero-flux
end conditions.  The weighted problem is symmetrised to a tridiagonal matrix
and solved by bisection plus inverse iteration.  Eigenvalues are
Richardson-extrapolated from grids ``N/2`` and ``N``; eigenfunctions come
from grid ``N``.
"""

from __future__ import annotations

import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError, eigh_tridiagonal

from ._accel import lagrange4_weights
from .errors import (ConfigurationError, DomainError, IncompleteSpectrumError,
                     NumericError)
from .models import (FlatTorus, ProfileMetric, SurfaceOfRevolution, builtin_profile,
                     make_surface_of_revolution, make_torus)
from .regions import SpectralRegion

MAX_LATTICE_POINTS = 10**8
SAMPLE_MEMORY_BUDGET = 256 * 2**20


@dataclass(frozen=True, eq=False)
class JointEigenpair:
    """One joint eigenvalue with its eigenfunction data.

    For surfaces of revolution ``radial_samples`` holds ``f`` on the
    staggered grid of spacing ``L / len(radial_samples)``.
    """

    lam: tuple
    quantum_numbers: tuple
    radial_samples: np.ndarray | None = field(default=None, repr=False)
    norm_cert: float = 0.0
    L: float | None = None


# ---------------------------------------------------------------------------
# torus
# ---------------------------------------------------------------------------


def enumerate_torus(n: int, region: SpectralRegion) -> "JointSpectrum":
    """All lattice points of Z^n inside ``region``."""
    sys = make_torus(n)
    if region.dim != n:
        raise DomainError("region dimension does not match the torus")
    if not region.bounded:
        raise DomainError("torus enumeration needs a bounded region")
    lo, hi = region.bounding_box()
    klo = np.ceil(lo - 1e-9).astype(np.int64)
    khi = np.floor(hi + 1e-9).astype(np.int64)
    count = int(np.prod(np.maximum(khi - klo + 1, 0)))
    if count > MAX_LATTICE_POINTS:
        raise ConfigurationError(f"lattice enumeration of {count} points refused (limit 1e8)")
    axes = [np.arange(a, b + 1) for a, b in zip(klo, khi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    keep = region.contains(grid.astype(np.float64))
    k = grid[keep]
    return JointSpectrum(
        system=sys,
        lam=k.astype(np.float64),
        quantum=k,
        norm_cert=np.zeros(k.shape[0]),
        lam_max=region.radius_bound(),
        coverage={"region": region},
    )


def torus_box_spectrum(n: int, half_width) -> "JointSpectrum":
    """Every lattice point with ``|k_i| <= half_width_i``; complete on that box."""
    hw = np.broadcast_to(np.asarray(half_width, dtype=np.int64), (n,))
    lo, hi = -hw, hw
    count = int(np.prod(hi - lo + 1))
    if count > MAX_LATTICE_POINTS:
        raise ConfigurationError(f"lattice enumeration of {count} points refused (limit 1e8)")
    axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    k = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    return JointSpectrum(
        system=make_torus(n),
        lam=k.astype(np.float64),
        quantum=k,
        norm_cert=np.zeros(k.shape[0]),
        lam_max=float(np.min(hw)),
        coverage={"box": (lo.astype(np.float64), hi.astype(np.float64))},
    )


# ---------------------------------------------------------------------------
# surfaces of revolution
# ---------------------------------------------------------------------------


def _tridiagonal(profile: ProfileMetric, m: int, N: int):
    h = profile.L / N
    s = (np.arange(N) + 0.5) * h
    faces = np.arange(1, N) * h
    ai = profile.a(s)
    af = profile.a(faces)
    d = np.zeros(N)
    d[:-1] += af
    d[1:] += af
    d /= h * h
    d += m * m / ai
    e = -af / (h * h)
    sq = np.sqrt(ai)
    return d / ai, e / (sq[:-1] * sq[1:]), ai, h


def _channel_arrays(profile: ProfileMetric, m: int, lam_max: float, grid_size: int,
                    richardson: bool = True):
    """Eigenvalues (extrapolated) and eigenfunctions of one channel."""
    N = int(grid_size)
    D, E, ai, h = _tridiagonal(profile, m, N)
    hi = (lam_max * (1.0 + 1e-3) + 1.0) ** 2
    try:
        w, g = eigh_tridiagonal(D, E, select="v", select_range=(-1.0, hi),
                                lapack_driver="stebz", check_finite=False)
    except (LinAlgError, ValueError) as exc:
        raise NumericError(f"eigensolve failed in channel m={m}: {exc}") from exc
    if w.size == 0:
        return np.zeros(0), np.zeros((0, N)), np.zeros(0)
    if richardson:
        Dh, Eh, _, _ = _tridiagonal(profile, m, N // 2)
        try:
            wh = eigh_tridiagonal(Dh, Eh, eigvals_only=True, select="i",
                                  select_range=(0, w.size - 1), lapack_driver="stebz",
                                  check_finite=False)
        except (LinAlgError, ValueError) as exc:
            raise NumericError(f"eigensolve failed in channel m={m} (coarse grid): {exc}") from exc
        lam2 = (4.0 * w - wh) / 3.0
    else:
        lam2 = w
    lam = np.sqrt(np.maximum(lam2, 0.0))
    keep = lam <= lam_max
    lam = lam[keep]
    f = (g[:, keep] / np.sqrt(ai * h)[:, None]).T.copy()
    # sign convention: first clearly nonzero sample is positive
    for r in range(f.shape[0]):
        row = f[r]
        j = int(np.argmax(np.abs(row) > 1e-3 * np.max(np.abs(row))))
        if row[j] < 0:
            row *= -1.0
    norm = np.abs(np.sum(f * f * ai[None, :], axis=1) * h - 1.0)
    return lam, f, norm


def _coarse_probe_values(profile: ProfileMetric, m: int, f_fine: np.ndarray, grid_size: int,
                         probes: np.ndarray) -> np.ndarray:
    """Probe values of the same eigenfunctions on the half-resolution grid,
    sign-aligned with the fine-grid rows."""
    n = f_fine.shape[0]
    D, E, ai, _ = _tridiagonal(profile, m, grid_size // 2)
    try:
        _, g = eigh_tridiagonal(D, E, select="i", select_range=(0, n - 1),
                                lapack_driver="stebz", check_finite=False)
    except (LinAlgError, ValueError) as exc:
        raise NumericError(f"eigensolve failed in channel m={m} (coarse grid): {exc}") from exc
    h2 = profile.L / (grid_size // 2)
    fc = (g / np.sqrt(ai * h2)[:, None]).T
    # coarse cell centres are fine-grid faces: compare with the two-cell average
    avg = 0.5 * (f_fine[:, 0::2] + f_fine[:, 1::2])
    sgn = np.sign(np.sum(avg * fc * ai[None, :], axis=1))
    fc *= np.where(sgn == 0, 1.0, sgn)[:, None]
    return np.stack([_interp_rows(fc, m, profile.L, s) for s in probes], axis=1)


def channel_bound(profile: ProfileMetric, lam_max: float, margin: int = 2) -> int:
    """Largest |m| that can carry an eigenvalue <= lam_max, plus a margin."""
    return int(np.ceil(profile.a_max * lam_max)) + int(margin)


def solve_radial_channel(profile: ProfileMetric, m: int, lam_max: float,
                         grid_size: int, richardson: bool = True) -> list[JointEigenpair]:
    """All eigenpairs of channel ``m`` with lam <= lam_max."""
    if int(grid_size) < 256 or int(grid_size) % 2:
        raise ConfigurationError("grid_size must be an even integer >= 256")
    if abs(m) > profile.a_max * lam_max + 2:
        raise ConfigurationError(f"channel m={m} exceeds a_max*lam_max + 2")
    lam, f, norm = _channel_arrays(profile, abs(int(m)), lam_max, grid_size, richardson)
    return [
        JointEigenpair((float(lam[k]), float(m)), (int(m), k), f[k], float(norm[k]), profile.L)
        for k in range(lam.size)
    ]


def _padded(f: np.ndarray, m: int) -> np.ndarray:
    """Staggered samples with two mirrored ghost cells at each pole.

    Regular solutions behave like sigma^|m| times an even function near a
    pole, so the reflection carries parity (-1)^m.
    """
    sgn = -1.0 if (abs(m) % 2) else 1.0
    lead = sgn * f[..., 1::-1]
    tail = sgn * f[..., :-3:-1]
    return np.concatenate([lead, f, tail], axis=-1)


def _interp_rows(f: np.ndarray, m: int, L: float, sigma: float) -> np.ndarray:
    N = f.shape[-1]
    h = L / N
    padded = _padded(f, m)
    # padded[j] sits at (j - 2 + 1/2) h
    i0, w = lagrange4_weights(-1.5 * h, h, N + 4, np.array([sigma]))
    i0 = int(i0[0])
    return padded[..., i0:i0 + 4] @ w[0]


def eval_eigenfunction(pair: JointEigenpair, x) -> complex:
    """Value of the normalised joint eigenfunction at ``x``."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if pair.radial_samples is None:
        k = np.asarray(pair.quantum_numbers, dtype=np.float64)
        if x.size != k.size:
            raise DomainError("point dimension does not match the eigenfunction")
        return complex(np.exp(1j * float(k @ x)) / (2 * np.pi) ** (k.size / 2))
    sigma, theta = float(x[0]), float(x[1])
    L = float(pair.L)
    if sigma < -1e-12 * L or sigma > L * (1 + 1e-12):
        raise DomainError(f"sigma={sigma} outside [0, {L}]")
    m = int(pair.quantum_numbers[0])
    r = float(_interp_rows(pair.radial_samples, m, L, min(max(sigma, 0.0), L)))
    return complex(r * np.exp(1j * m * theta) / np.sqrt(2 * np.pi))


def _default_threads() -> int:
    env = os.environ.get("QCI_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def build_sor_spectrum(profile: ProfileMetric, lam_max: float, grid_size: int, *,
                       probes=None, keep_samples: bool | None = None,
                       m_limit: int | None = None, channel_margin: int = 2,
                       threads: int | None = None,
                       richardson: bool = True) -> "JointSpectrum":
    """Joint spectrum ``{(lam, m)}`` with ``lam <= lam_max``.

    ``probes`` lists meridian positions where eigenfunction values are
    stored (Richardson-extrapolated with the half grid when ``richardson``
    is set); ``keep_samples`` keeps full radial samples (default: only when
    they fit in a 256 MiB budget).  ``m_limit`` restricts the channels to
    ``|m| <= m_limit``; the completeness record then reflects the restriction.
    """
    if int(grid_size) < 256 or int(grid_size) % 2:
        raise ConfigurationError("grid_size must be an even integer >= 256")
    if not lam_max > 0:
        raise ConfigurationError("lam_max must be positive")
    sys = make_surface_of_revolution(profile)
    full = channel_bound(profile, lam_max, channel_margin)
    M = full if m_limit is None else min(int(m_limit), full)
    probes = np.array(sorted(set(float(p) for p in np.ravel(probes if probes is not None else []))),
                      dtype=np.float64)
    if np.any(probes < 0) or np.any(probes > profile.L):
        raise DomainError("probe positions must lie in [0, L]")
    if keep_samples is None:
        est_pairs = 0.5 * lam_max**2 * float(np.mean(profile.a_samples)) * profile.L
        keep_samples = est_pairs * grid_size * 8 < SAMPLE_MEMORY_BUDGET

    def work(m):
        lam, f, norm = _channel_arrays(profile, m, lam_max, grid_size, richardson)
        pv = np.stack([_interp_rows(f, m, profile.L, s) for s in probes], axis=1) \
            if probes.size and lam.size else np.zeros((lam.size, probes.size))
        if richardson and probes.size and lam.size:
            # second-order scheme: extrapolate probe values like the eigenvalues
            pv = (4.0 * pv - _coarse_probe_values(profile, m, f, grid_size, probes)) / 3.0
        return m, lam, (f if keep_samples else None), norm, pv

    nthreads = threads or _default_threads()
    ms = list(range(0, M + 1))
    if nthreads > 1:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            results = list(pool.map(work, ms))
    else:
        results = [work(m) for m in ms]
    by_m = {r[0]: r for r in results}

    lam_rows, q_rows, norms, probe_rows = [], [], [], []
    samples = {}
    for m in range(-M, M + 1):
        _, lam, f, norm, pv = by_m[abs(m)]
        if lam.size == 0:
            continue
        k = np.arange(lam.size)
        lam_rows.append(np.column_stack([lam, np.full(lam.size, float(m))]))
        q_rows.append(np.column_stack([np.full(lam.size, m), k]))
        norms.append(norm)
        probe_rows.append(pv)
        if f is not None:
            samples[m] = f
    lam_arr = np.concatenate(lam_rows) if lam_rows else np.zeros((0, 2))
    q_arr = np.concatenate(q_rows).astype(np.int64) if q_rows else np.zeros((0, 2), np.int64)
    return JointSpectrum(
        system=sys,
        lam=lam_arr,
        quantum=q_arr,
        norm_cert=np.concatenate(norms) if norms else np.zeros(0),
        lam_max=float(lam_max),
        channel_range=(-M, M),
        coverage={"lam_max": float(lam_max), "m_cover": M, "m_full": full},
        grid_size=int(grid_size),
        samples=samples if keep_samples else None,
        probe_sigma=probes,
        probe_values=np.concatenate(probe_rows) if probe_rows else np.zeros((0, probes.size)),
    )


# ---------------------------------------------------------------------------
# spectrum container
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class JointSpectrum:
    """Struct-of-arrays joint spectrum in deterministic order.

    Torus rows are in lexicographic lattice order; SoR rows are sorted by
    ``(m, k)``.
    """

    system: object
    lam: np.ndarray
    quantum: np.ndarray
    norm_cert: np.ndarray
    lam_max: float
    channel_range: tuple | None = None
    coverage: dict = field(default_factory=dict)
    grid_size: int | None = None
    samples: dict | None = field(default=None, repr=False)
    probe_sigma: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    probe_values: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return int(self.lam.shape[0])

    @property
    def dim(self) -> int:
        return int(self.lam.shape[1])

    @property
    def is_torus(self) -> bool:
        return isinstance(self.system, FlatTorus)

    def pair(self, j: int) -> JointEigenpair:
        q = tuple(int(v) for v in self.quantum[j])
        if self.is_torus:
            return JointEigenpair(tuple(self.lam[j]), q, None, float(self.norm_cert[j]))
        if self.samples is None:
            raise DomainError("radial samples were not kept for this spectrum")
        m, k = q
        return JointEigenpair(tuple(self.lam[j]), q, self.samples[m][k],
                              float(self.norm_cert[j]), self.system.profile.L)

    @property
    def pairs(self) -> list[JointEigenpair]:
        return [self.pair(j) for j in range(len(self))]

    def multiplicities(self) -> np.ndarray:
        """Number of rows sharing each row's joint eigenvalue (to 1e-9)."""
        keys = np.round(self.lam / 1e-9).astype(np.int64)
        _, inv, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
        return counts[inv.ravel()]

    # -- eigenfunction values ---------------------------------------------

    def radial_values(self, sigma: float) -> np.ndarray:
        """Radial factors ``f_j(sigma)`` of all rows (SoR only)."""
        L = self.system.profile.L
        if sigma < -1e-12 * L or sigma > L * (1 + 1e-12):
            raise DomainError(f"sigma={sigma} outside [0, {L}]")
        if self.probe_sigma.size:
            hit = np.flatnonzero(np.abs(self.probe_sigma - sigma) <= 1e-14 * max(1.0, L))
            if hit.size:
                return self.probe_values[:, hit[0]]
        if self.samples is None:
            raise DomainError(
                f"no radial data at sigma={sigma}: rebuild with this probe or keep samples"
            )
        out = np.empty(len(self))
        row = 0
        s = min(max(float(sigma), 0.0), L)
        for m in range(self.channel_range[0], self.channel_range[1] + 1):
            f = self.samples.get(m)
            if f is None:
                continue
            out[row:row + f.shape[0]] = _interp_rows(f, m, L, s)
            row += f.shape[0]
        return out

    def values_at(self, x) -> np.ndarray:
        """Values ``phi_j(x)`` of all normalised joint eigenfunctions."""
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.size != self.dim:
            raise DomainError("point dimension does not match the spectrum")
        if self.is_torus:
            phase = self.lam @ x
            return np.exp(1j * phase) / (2 * np.pi) ** (self.dim / 2)
        f = self.radial_values(float(x[0]))
        return f * np.exp(1j * self.quantum[:, 0] * x[1]) / np.sqrt(2 * np.pi)

    # -- completeness -----------------------------------------------------

    def require_complete(self, region: SpectralRegion, ratio_bound: float | None = None):
        """Raise unless every joint eigenvalue in ``region`` is present.

        ``ratio_bound`` restricts attention to ``|lam2| <= ratio_bound*lam1``
        (the support of an angular cutoff).
        """
        if region.dim != self.dim:
            raise DomainError("region dimension does not match the spectrum")
        if self.is_torus:
            if "box" in self.coverage:
                lo, hi = self.coverage["box"]
                rlo, rhi = region.bounding_box()
                if np.any(rlo < lo - 1e-9) or np.any(rhi > hi + 1e-9):
                    raise IncompleteSpectrumError("region exceeds the enumerated lattice box")
                return
            have = self.coverage.get("region")
            if have is not None and have == region:
                return
            raise IncompleteSpectrumError("torus spectrum was enumerated for another region")
        lam1_bound, m_bound = _sor_region_bounds(region, self.system.profile.a_max)
        if lam1_bound > self.lam_max * (1 + 1e-12):
            raise IncompleteSpectrumError(
                f"region reaches lam1={lam1_bound:.6g} beyond lam_max={self.lam_max:.6g}"
            )
        if ratio_bound is not None:
            m_bound = min(m_bound, ratio_bound * lam1_bound)
        if m_bound > self.coverage["m_cover"] + 1e-9:
            raise IncompleteSpectrumError(
                f"region reaches |m|={m_bound:.6g} beyond solved channels |m|<={self.coverage['m_cover']}"
            )

    # -- export / import --------------------------------------------------

    def export(self, path, sidecar: bool = True) -> Path:
        """Write the flat table (and an ``.npz`` of radial samples for SoR)."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        buf = io.StringIO()
        if self.is_torus:
            n = self.dim
            buf.write(f"# system: torus\n# dim: {n}\n# lam_max: {self.lam_max!r}\n")
            cols = [f"lam_{i + 1}" for i in range(n)] + [f"k_{i + 1}" for i in range(n)]
            buf.write(",".join(cols + ["norm_cert"]) + "\n")
            for j in range(len(self)):
                vals = [f"{v:.17g}" for v in self.lam[j]] + [str(int(v)) for v in self.quantum[j]]
                buf.write(",".join(vals + [f"{self.norm_cert[j]:.17g}"]) + "\n")
        else:
            prof = self.system.profile
            params = " ".join(repr(p) for p in prof.params)
            buf.write(f"# system: sor\n# profile: {prof.name}\n# params: {params}\n")
            buf.write(f"# closure: {prof.closure}\n# grid_size: {self.grid_size}\n")
            buf.write(f"# lam_max: {self.lam_max!r}\n")
            buf.write(f"# channel_range: {self.channel_range[0]} {self.channel_range[1]}\n")
            buf.write("lam_1,lam_2,m,k,norm_cert\n")
            for j in range(len(self)):
                m, k = (int(v) for v in self.quantum[j])
                buf.write(f"{self.lam[j, 0]:.17g},{self.lam[j, 1]:.17g},{m},{k},"
                          f"{self.norm_cert[j]:.17g}\n")
            if sidecar and self.samples is not None:
                blobs = {}
                for m, f in self.samples.items():
                    for k in range(f.shape[0]):
                        blobs[f"m{m}_k{k}"] = f[k]
                np.savez_compressed(path.with_suffix(".npz"), **blobs)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(buf.getvalue())
        return path


def _sor_region_bounds(region: SpectralRegion, a_max: float) -> tuple[float, float]:
    if region.kind == "box":
        c = np.abs(np.array(region.c))
        return float(c[0] * region.lam), float(c[1] * region.lam)
    if region.kind == "unit_box":
        mu = np.array(region.mu)
        return float(max(abs(mu[0]), abs(mu[0] + 1))), float(max(abs(mu[1]), abs(mu[1] + 1)))
    if region.kind == "cone":
        # |lam2| <= a_max * lam1 always holds (Rayleigh quotient of channel m)
        r = float(region.radius)
        if region.half_angle >= 0.5 * np.pi:
            return r, a_max * r
        th = np.arctan2(region.axis[1], region.axis[0])
        lo, hi = th - region.half_angle, th + region.half_angle
        s = max(abs(np.sin(lo)), abs(np.sin(hi)))
        if any(lo <= v <= hi for v in (-0.5 * np.pi, 0.5 * np.pi, 1.5 * np.pi, -1.5 * np.pi)):
            s = 1.0
        return r, min(r * s, a_max * r)
    if region.index == 0:
        return float(region.radius), float(a_max * region.radius)
    raise DomainError("a level set in lam2 does not bound lam1")


def _read_header(path: Path) -> tuple[dict, list[str]]:
    meta, lines = {}, []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].partition(":")
                meta[key.strip()] = val.strip()
            else:
                lines.append(line)
    return meta, lines


def import_spectrum(path, profile: ProfileMetric | None = None) -> JointSpectrum:
    """Read a table written by :meth:`JointSpectrum.export`."""
    path = Path(path)
    meta, lines = _read_header(path)
    data = np.loadtxt(io.StringIO("".join(lines[1:])), delimiter=",", ndmin=2)
    if meta.get("system") == "torus":
        n = int(meta["dim"])
        lam = data[:, :n]
        k = data[:, n:2 * n].astype(np.int64)
        return JointSpectrum(make_torus(n), lam, k, data[:, 2 * n], float(meta["lam_max"]),
                             coverage={"imported": True})
    grid_size = int(meta["grid_size"])
    if profile is None:
        params = [float(v) for v in meta.get("params", "").split()]
        profile = builtin_profile(meta["profile"], params, grid_size=256)
    lo, hi = (int(v) for v in meta["channel_range"].split())
    q = data[:, 2:4].astype(np.int64)
    samples = None
    side = path.with_suffix(".npz")
    if side.exists():
        with np.load(side) as z:
            samples = {}
            for m in range(lo, hi + 1):
                rows = [z[f"m{m}_k{kk}"] for kk in q[q[:, 0] == m, 1]]
                if rows:
                    samples[m] = np.stack(rows)
    lam_max = float(meta["lam_max"])
    return JointSpectrum(
        system=SurfaceOfRevolution(profile),
        lam=data[:, 0:2],
        quantum=q,
        norm_cert=data[:, 4],
        lam_max=lam_max,
        channel_range=(lo, hi),
        coverage={"lam_max": lam_max, "m_cover": hi, "m_full": hi},
        grid_size=grid_size,
        samples=samples,
    )
