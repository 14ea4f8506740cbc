"""Angular cutoffs realised as joint-spectral multipliers.

On a surface of revolution the multiplier is ``chi0(lam2 / lam1)`` with
symbol ``chi0(p2 / p1)``; on a torus it is ``chi0(angle(k, axis))``.  The
profile ``chi0`` equals 1 on ``[c_min + w, c_max - w]``, vanishes outside
``[c_min, c_max]`` and uses exponential-type smoothsteps in between.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .models import AdmissibleBand
from .smooth import window


@dataclass(frozen=True)
class CutoffSymbol:
    kind: str  # "identity", "sor" or "torus"
    c_min: float = -np.inf
    c_max: float = np.inf
    width: float = 0.0
    axis: tuple = ()
    band: AdmissibleBand | None = None

    def __post_init__(self):
        if self.kind not in {"identity", "sor", "torus"}:
            raise ConfigurationError(f"unknown cutoff kind {self.kind!r}")
        if self.kind != "identity":
            if not (self.width > 0 and self.c_max - self.c_min >= 2 * self.width):
                raise ConfigurationError("cutoff needs 0 < width <= (c_max - c_min)/2")

    @property
    def is_identity(self) -> bool:
        return self.kind == "identity"

    @property
    def knots(self) -> tuple:
        """Points where the profile stops being constant."""
        if self.is_identity:
            return ()
        return (self.c_min, self.c_min + self.width, self.c_max - self.width, self.c_max)

    @property
    def ratio_bound(self) -> float | None:
        """Bound on |lam2/lam1| over the support (SoR only)."""
        if self.kind != "sor":
            return None
        return float(max(abs(self.c_min), abs(self.c_max)))

    def profile(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        if self.is_identity:
            return np.ones_like(r)
        out = np.zeros_like(r)
        fin = np.isfinite(r)
        out[fin] = window(r[fin], self.c_min, self.c_max, self.width)
        return out

    def ratio(self, eta) -> np.ndarray:
        """The argument of the profile at joint eigenvalues / symbol values."""
        eta = np.asarray(eta, dtype=np.float64)
        if self.kind == "sor":
            e1, e2 = eta[..., 0], eta[..., 1]
            # the m = 0 ground state (lam1 ~ 0) takes the limit ratio 0 of its channel
            with np.errstate(divide="ignore", invalid="ignore"):
                r = np.where(e1 > 0, e2 / np.where(e1 > 0, e1, 1.0),
                             np.where(e2 == 0, 0.0, np.inf))
            return r
        if self.kind == "torus":
            nrm = np.linalg.norm(eta, axis=-1)
            ax = np.asarray(self.axis)
            with np.errstate(divide="ignore", invalid="ignore"):
                cosang = np.clip((eta @ ax) / np.where(nrm > 0, nrm, 1.0), -1.0, 1.0)
            return np.where(nrm > 0, np.arccos(cosang), np.inf)
        return np.zeros(eta.shape[:-1])

    def weights(self, lam) -> np.ndarray:
        """Multiplier values ``w_j`` at joint eigenvalues ``lam`` (rows)."""
        lam = np.asarray(lam, dtype=np.float64)
        if self.is_identity:
            return np.ones(lam.shape[:-1])
        return self.profile(self.ratio(lam))

    def symbol(self, sys, x, xi) -> np.ndarray:
        """Principal symbol ``chi0(p2/p1)`` (or ``psi(xi/|xi|)``) at (x, xi)."""
        if self.is_identity:
            return np.ones(np.asarray(xi).shape[:-1])
        return self.profile(self.ratio(sys.symbols(x, xi)))


def identity_cutoff() -> CutoffSymbol:
    return CutoffSymbol("identity")


def sor_cutoff(band: AdmissibleBand, width: float = 0.1,
               c_min: float | None = None) -> CutoffSymbol:
    """Ratio cutoff supported in ``[c_min, band.c_max]`` (default symmetric)."""
    lo = -band.c_max if c_min is None else float(c_min)
    return CutoffSymbol("sor", lo, float(band.c_max), float(width), band=band)


def torus_cutoff(axis, half_angle: float, width: float = 0.1) -> CutoffSymbol:
    """Direction cutoff around ``axis``: 1 within ``half_angle - width``."""
    ax = np.asarray(axis, dtype=np.float64).ravel()
    ax = ax / np.linalg.norm(ax)
    if not (0 < half_angle < np.pi):
        raise ConfigurationError("torus cutoff half_angle must lie in (0, pi)")
    return CutoffSymbol("torus", -float(half_angle), float(half_angle), float(width),
                        axis=tuple(ax))
