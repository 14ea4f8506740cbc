"""Hot numerical kernels with a numba backend and a pure-numpy fallback.

The backend is chosen once at import time.  Setting ``QCI_DISABLE_NUMBA=1``
(or ``true``/``yes``) forces the numpy path; the numba path is also skipped
when numba cannot be imported.  The numpy compensated sum is exactly rounded
(``math.fsum``); the numba one uses Neumaier's scheme, so the two agree to a
few units in the last place.
"""

from __future__ import annotations

import math
import os

import numpy as np

_FLAG = os.environ.get("QCI_DISABLE_NUMBA", "").strip().lower()
_WANT_NUMBA = _FLAG not in {"1", "true", "yes", "on"}

try:  # pragma: no cover - import guard
    if not _WANT_NUMBA:
        raise ImportError("numba disabled by QCI_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised with the env flag
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# numpy reference implementations (always available, used by the benchmark)
# ---------------------------------------------------------------------------


def _np_compensated_sum(values: np.ndarray) -> float:
    return math.fsum(np.asarray(values, dtype=np.float64).tolist())


def _np_hermite_eval(table_f, table_df, step, s, parity):
    """Cubic Hermite interpolation of an even/odd table sampled on [0, smax]."""
    s = np.asarray(s, dtype=np.float64)
    a = np.abs(s)
    u = a / step
    i = np.minimum(np.floor(u).astype(np.int64), table_f.size - 2)
    t = u - i
    f0 = table_f[i]
    f1 = table_f[i + 1]
    d0 = table_df[i] * step
    d1 = table_df[i + 1] * step
    t2 = t * t
    t3 = t2 * t
    val = (
        (2 * t3 - 3 * t2 + 1) * f0
        + (t3 - 2 * t2 + t) * d0
        + (-2 * t3 + 3 * t2) * f1
        + (t3 - t2) * d1
    )
    if parity < 0:
        val = np.where(s < 0, -val, val)
    return val


def _np_lagrange4_rows(grid0, step, npts, xq):
    """Stencil start indices and weights for 4-point Lagrange interpolation
    on the uniform grid ``grid0 + step*i`` (i < npts)."""
    xq = np.asarray(xq, dtype=np.float64)
    u = (xq - grid0) / step
    i0 = np.clip(np.floor(u).astype(np.int64) - 1, 0, npts - 4)
    t = u - i0
    w = np.empty(xq.shape + (4,))
    w[..., 0] = -(t - 1) * (t - 2) * (t - 3) / 6.0
    w[..., 1] = t * (t - 2) * (t - 3) / 2.0
    w[..., 2] = -t * (t - 1) * (t - 3) / 2.0
    w[..., 3] = t * (t - 1) * (t - 2) / 6.0
    return i0, w


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _nb_compensated_sum(values):  # pragma: no cover - compiled
        # Neumaier's variant of Kahan summation.
        s = 0.0
        c = 0.0
        for k in range(values.size):
            v = values[k]
            t = s + v
            if abs(s) >= abs(v):
                c += (s - t) + v
            else:
                c += (v - t) + s
            s = t
        return s + c

    @njit(cache=True)
    def _nb_hermite_eval(table_f, table_df, step, s, parity):  # pragma: no cover
        out = np.empty(s.size)
        last = table_f.size - 2
        for k in range(s.size):
            x = s[k]
            a = abs(x)
            u = a / step
            i = int(math.floor(u))
            if i > last:
                i = last
            t = u - i
            t2 = t * t
            t3 = t2 * t
            v = (
                (2 * t3 - 3 * t2 + 1) * table_f[i]
                + (t3 - 2 * t2 + t) * table_df[i] * step
                + (-2 * t3 + 3 * t2) * table_f[i + 1]
                + (t3 - t2) * table_df[i + 1] * step
            )
            if parity < 0 and x < 0:
                v = -v
            out[k] = v
        return out


def compensated_sum(values) -> complex | float:
    """Compensated sum of a real or complex 1-D array in its given order."""
    arr = np.ascontiguousarray(values)
    if arr.size == 0:
        return 0.0
    if np.iscomplexobj(arr):
        re = np.ascontiguousarray(arr.real, dtype=np.float64)
        im = np.ascontiguousarray(arr.imag, dtype=np.float64)
        if HAVE_NUMBA:
            return complex(_nb_compensated_sum(re), _nb_compensated_sum(im))
        return complex(_np_compensated_sum(re), _np_compensated_sum(im))
    arr = np.ascontiguousarray(arr, dtype=np.float64).ravel()
    if HAVE_NUMBA:
        return float(_nb_compensated_sum(arr))
    return _np_compensated_sum(arr)


def hermite_eval(table_f, table_df, step, s, parity=1) -> np.ndarray:
    """Evaluate an even (parity=1) or odd (parity=-1) tabulated function.

    Arguments beyond the table end are clamped to the final interval, so the
    caller is responsible for handling |s| > table range.
    """
    s = np.asarray(s, dtype=np.float64)
    shape = s.shape
    flat = np.ascontiguousarray(s.ravel())
    if HAVE_NUMBA:
        out = _nb_hermite_eval(table_f, table_df, float(step), flat, int(parity))
    else:
        out = _np_hermite_eval(table_f, table_df, float(step), flat, int(parity))
    return out.reshape(shape)


def lagrange4_weights(grid0, step, npts, xq):
    """Start indices and weights of the 4-point Lagrange stencil."""
    return _np_lagrange4_rows(float(grid0), float(step), int(npts), xq)


def reference_backend():
    """The numpy implementations, exposed for benchmarking and cross-checks."""
    return {
        "compensated_sum": _np_compensated_sum,
        "hermite_eval": _np_hermite_eval,
    }


def compiled_backend():
    """The numba implementations, or None when numba is unavailable."""
    if not HAVE_NUMBA:
        return None
    return {
        "compensated_sum": _nb_compensated_sum,
        "hermite_eval": _nb_hermite_eval,
    }
