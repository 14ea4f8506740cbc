"""Smooth step and bump functions of exponential type."""

from __future__ import annotations

import numpy as np


def _psi(u: np.ndarray) -> np.ndarray:
    out = np.zeros_like(u)
    pos = u > 0
    out[pos] = np.exp(-1.0 / u[pos])
    return out


def smoothstep(u) -> np.ndarray:
    """C-infinity step: 0 for u <= 0, 1 for u >= 1, monotone in between."""
    u = np.clip(np.asarray(u, dtype=np.float64), 0.0, 1.0)
    a = _psi(u)
    b = _psi(1.0 - u)
    return a / (a + b)


def plateau(r, inner: float, outer: float) -> np.ndarray:
    """Even plateau: 1 for |r| <= inner, 0 for |r| >= outer."""
    r = np.abs(np.asarray(r, dtype=np.float64))
    if outer <= inner:
        raise ValueError("plateau needs outer > inner")
    return smoothstep((outer - r) / (outer - inner))


def window(r, lo: float, hi: float, width: float) -> np.ndarray:
    """1 on [lo+width, hi-width], 0 outside [lo, hi], smooth in between."""
    r = np.asarray(r, dtype=np.float64)
    if width <= 0 or hi - lo < 2 * width:
        raise ValueError("window needs 0 < width <= (hi-lo)/2")
    return smoothstep((r - lo) / width) * smoothstep((hi - r) / width)


def bump(u) -> np.ndarray:
    """Standard bump exp(-1/(1-u^2)) on (-1, 1), normalised to 1 at 0."""
    u = np.asarray(u, dtype=np.float64)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - u[inside] ** 2))
    return out
