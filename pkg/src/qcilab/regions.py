"""Spectral regions in R^n used for counting and projection.

Four kinds are supported:

* ``box``: ``prod [-|c_i| lam, |c_i| lam]`` for a unit vector ``c`` with
  nonzero entries.  Its boundary must stay clear of spectrum points, so
  membership tests on a box raise :class:`BoundaryTieError` on near-ties.
* ``unit_box``: the closed cube ``prod [mu_k, mu_k + 1]``.
* ``cone``: the closed sector ``{angle(eta, axis) <= half_angle, |eta| <= radius}``
  including the origin; ``half_angle >= pi`` gives the ball.
* ``level``: ``{|eta_index| <= radius}``, a slab used for single-symbol
  counts.  It is unbounded for n > 1.

All kinds except the box are closed sets tested with an inclusive tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoundaryTieError, ConfigurationError, DomainError

TIE_TOL = 1e-9


@dataclass(frozen=True)
class SpectralRegion:
    kind: str
    dim: int
    lam: float = 0.0
    c: tuple = ()
    mu: tuple = ()
    axis: tuple = ()
    half_angle: float = 0.0
    radius: float = 0.0
    index: int = 0

    # -- constructors -------------------------------------------------------

    @classmethod
    def box(cls, lam: float, c) -> "SpectralRegion":
        c = tuple(float(v) for v in np.ravel(c))
        if any(v == 0.0 for v in c):
            raise ConfigurationError("c̄ components must be nonzero")
        if abs(np.linalg.norm(c) - 1.0) > 1e-12:
            raise ConfigurationError(f"c̄ must be a unit vector (norm {np.linalg.norm(c):.15g})")
        if not lam > 0:
            raise ConfigurationError("box scale lam must be positive")
        return cls("box", len(c), lam=float(lam), c=c)

    @classmethod
    def unit_box(cls, mu) -> "SpectralRegion":
        mu = tuple(float(v) for v in np.ravel(mu))
        return cls("unit_box", len(mu), mu=mu)

    @classmethod
    def cone(cls, axis, half_angle: float, radius: float) -> "SpectralRegion":
        ax = np.asarray(axis, dtype=np.float64).ravel()
        nrm = np.linalg.norm(ax)
        if nrm == 0:
            raise ConfigurationError("cone axis must be nonzero")
        if not (half_angle > 0 and radius > 0):
            raise ConfigurationError("cone needs positive half_angle and radius")
        return cls("cone", ax.size, axis=tuple(ax / nrm), half_angle=float(half_angle),
                   radius=float(radius))

    @classmethod
    def ball(cls, radius: float, dim: int) -> "SpectralRegion":
        axis = (1.0,) + (0.0,) * (dim - 1)
        return cls.cone(axis, np.pi, radius)

    @classmethod
    def level(cls, radius: float, dim: int, index: int = 0) -> "SpectralRegion":
        if not (0 <= index < dim):
            raise ConfigurationError("level index out of range")
        return cls("level", int(dim), radius=float(radius), index=int(index))

    # -- geometry -----------------------------------------------------------

    @property
    def bounded(self) -> bool:
        return self.kind != "level" or self.dim == 1

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "box":
            half = np.abs(np.array(self.c)) * self.lam
            return -half, half
        if self.kind == "unit_box":
            mu = np.array(self.mu)
            return mu, mu + 1.0
        if self.kind == "cone":
            r = np.full(self.dim, self.radius)
            return -r, r
        if not self.bounded:
            raise DomainError("level region is unbounded in dimension > 1")
        r = np.array([self.radius])
        return -r, r

    def radius_bound(self) -> float:
        """Largest Euclidean norm of a point in the region."""
        lo, hi = self.bounding_box()
        return float(np.linalg.norm(np.maximum(np.abs(lo), np.abs(hi))))

    def _as_points(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        if pts.shape[-1] != self.dim:
            raise DomainError(f"points have dimension {pts.shape[-1]}, region has {self.dim}")
        return pts

    def boundary_distance(self, pts) -> np.ndarray:
        """Sup-norm distance to the box boundary (box kind only)."""
        if self.kind != "box":
            raise DomainError("boundary distance is defined for boxes only")
        pts = self._as_points(pts)
        half = np.abs(np.array(self.c)) * self.lam
        return np.min(np.abs(np.abs(pts) - half), axis=-1)

    def contains(self, pts, tol: float = TIE_TOL, check_ties: bool = True) -> np.ndarray:
        pts = self._as_points(pts)
        if self.kind == "box":
            half = np.abs(np.array(self.c)) * self.lam
            if check_ties:
                d = np.abs(np.abs(pts) - half)
                if np.any(d <= tol):
                    j = np.argwhere(d <= tol)[0][:-1]
                    raise BoundaryTieError(
                        f"box boundary lam={self.lam:.12g} passes through spectrum point "
                        f"{np.asarray(pts)[tuple(j)]}"
                    )
            return np.all(np.abs(pts) <= half, axis=-1)
        if self.kind == "unit_box":
            mu = np.array(self.mu)
            return np.all((pts >= mu - tol) & (pts <= mu + 1.0 + tol), axis=-1)
        if self.kind == "cone":
            nrm = np.linalg.norm(pts, axis=-1)
            inside = nrm <= self.radius + tol
            if self.half_angle >= np.pi:
                return inside
            cosang = pts @ np.array(self.axis)
            return inside & (cosang >= nrm * np.cos(self.half_angle) - tol)
        return np.abs(pts[..., self.index]) <= self.radius + tol

    def ray_interval(self, v) -> tuple[np.ndarray, np.ndarray]:
        """Parameter interval ``[t_lo, t_hi]`` (t >= 0) of the ray ``t*v``
        inside the region, for a batch of directions ``v`` (rows).

        Empty intersections return ``t_lo = t_hi = 0``.
        """
        v = np.asarray(v, dtype=np.float64)
        shape = v.shape[:-1]
        lo = np.zeros(shape)
        hi = np.full(shape, np.inf)
        if self.kind in ("box", "unit_box"):
            if self.kind == "box":
                half = np.abs(np.array(self.c)) * self.lam
                a, b = -half, half
            else:
                a = np.array(self.mu)
                b = a + 1.0
            for i in range(self.dim):
                vi = v[..., i]
                with np.errstate(divide="ignore", invalid="ignore"):
                    t1 = np.where(vi != 0, a[i] / vi, -np.inf)
                    t2 = np.where(vi != 0, b[i] / vi, np.inf)
                tmin = np.minimum(t1, t2)
                tmax = np.maximum(t1, t2)
                zero = vi == 0
                outside = zero & ~((a[i] <= 0) & (0 <= b[i]))
                tmin = np.where(zero, -np.inf, tmin)
                tmax = np.where(zero, np.where(outside, -np.inf, np.inf), tmax)
                lo = np.maximum(lo, tmin)
                hi = np.minimum(hi, tmax)
        elif self.kind == "cone":
            nrm = np.linalg.norm(v, axis=-1)
            hi = np.where(nrm > 0, self.radius / np.where(nrm > 0, nrm, 1.0), 0.0)
            if self.half_angle < np.pi:
                cosang = (v @ np.array(self.axis)) / np.where(nrm > 0, nrm, 1.0)
                hi = np.where(cosang >= np.cos(self.half_angle), hi, 0.0)
        else:
            vi = np.abs(v[..., self.index])
            if np.any(vi == 0):
                raise DomainError("ray escapes to infinity inside a level region")
            hi = self.radius / vi
        empty = hi <= lo
        return np.where(empty, 0.0, lo), np.where(empty, 0.0, hi)

    def ray_angles(self) -> list[float]:
        """Polar angles (n = 2) where the ray ``t*(cos phi, sin phi)`` meets a
        corner or edge of the region, i.e. where ``ray_interval`` changes
        formula."""
        if self.dim != 2:
            return []
        out = []
        if self.kind in ("box", "unit_box"):
            lo, hi = self.bounding_box()
            for x in (lo[0], hi[0]):
                for y in (lo[1], hi[1]):
                    if x != 0 or y != 0:
                        out.append(np.arctan2(y, x))
        elif self.kind == "cone" and self.half_angle < np.pi:
            th = np.arctan2(self.axis[1], self.axis[0])
            out = [th - self.half_angle, th + self.half_angle]
        return [float(np.angle(np.exp(1j * a))) for a in out]

    def ray_slopes(self) -> list[float]:
        """Slopes ``s`` where the ray ``t*(1, s)`` changes formula (n = 2)."""
        return [float(np.tan(a)) for a in self.ray_angles() if np.cos(a) > 1e-15]

    def scaled(self, t: float) -> "SpectralRegion":
        """Dilate a conic-type region by ``t > 0``."""
        if self.kind == "box":
            return SpectralRegion.box(self.lam * t, self.c)
        if self.kind == "cone":
            return SpectralRegion.cone(self.axis, self.half_angle, self.radius * t)
        if self.kind == "level":
            return SpectralRegion.level(self.radius * t, self.dim, self.index)
        raise DomainError("unit boxes do not scale")

    def nudged(self) -> "SpectralRegion":
        """Box with lam increased by 1e-6 relative, the tie-avoidance step."""
        if self.kind != "box":
            return self
        return SpectralRegion.box(self.lam * (1.0 + 1e-6), self.c)
