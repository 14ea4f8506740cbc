"""Spectral-sum kernels over a computed joint spectrum.

Every kernel is a sum ``sum_j g_j w_j^2 phi_j(x) conj(phi_j(y))`` where
``w_j`` is the cutoff multiplier and ``g_j`` is a region indicator, a
product of shifted mollifiers or a product of mollified windows.  Sums run
in the spectrum's deterministic row order with compensated summation.

Smoothed kernels attach an estimated bound on the contribution of joint
eigenvalues missing from the spectrum.  For tori the missing set is the
lattice outside the enumerated box and the bound is exact given the
mollifier envelope.  For surfaces of revolution it is the shell
``lam1 > lam_max``, bounded using the observed local Weyl density of the top
shells.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._accel import compensated_sum
from .cutoffs import CutoffSymbol
from .errors import DomainError, IncompleteSpectrumError
from .mollifiers import Mollifier, covering_centers, fejer_covering, make_fejer
from .regions import SpectralRegion
from .spectrum import JointSpectrum


@dataclass(frozen=True)
class SmoothedValue:
    value: complex
    truncation_bound: float


@dataclass(frozen=True)
class TauberianGap:
    gap: float
    rough: complex
    smoothed: complex
    truncation_bound: float
    h_rows: np.ndarray = field(repr=False)  # row indices of the dominant terms
    h_values: np.ndarray = field(repr=False)
    h_terms: np.ndarray = field(repr=False)  # |h * w^2 * phi(x) conj phi(y)|


def _values(spec: JointSpectrum, x, y):
    vx = spec.values_at(x)
    if np.array_equal(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)):
        return vx, vx, True
    return vx, spec.values_at(y), False


def _sum(coef: np.ndarray, vx: np.ndarray, vy: np.ndarray, diag: bool):
    if diag:
        return compensated_sum(coef * (vx.real ** 2 + vx.imag ** 2))
    return compensated_sum(coef * vx * np.conj(vy))


def projector_kernel(spec: JointSpectrum, region: SpectralRegion, cutoff: CutoffSymbol,
                     x, y) -> complex:
    """Rough projector kernel over ``region`` with cutoff multiplier."""
    spec.require_complete(region, cutoff.ratio_bound)
    mask = region.contains(spec.lam)
    idx = np.flatnonzero(mask)
    w2 = cutoff.weights(spec.lam[idx]) ** 2
    vx, vy, diag = _values(spec, x, y)
    return complex(_sum(w2, vx[idx], vy[idx], diag))


def unit_box_diag(spec: JointSpectrum, mu, cutoff: CutoffSymbol, x) -> float:
    """Diagonal unit-box projector kernel (real and nonnegative)."""
    val = projector_kernel(spec, SpectralRegion.unit_box(mu), cutoff, x, x)
    return float(val.real)


# ---------------------------------------------------------------------------
# truncation estimates
# ---------------------------------------------------------------------------


def _envelope_line_sum(env, mu: float, lo: float, hi: float, far: int = 4000) -> tuple[float, float]:
    """(sum over all integers, sum over integers in [lo, hi]) of env(|k - mu|)."""
    k_all = np.arange(np.floor(mu) - far, np.ceil(mu) + far + 1)
    e_all = env(np.abs(k_all - mu))
    tail = 2.0 * float(env(np.array([far]))[0]) * far  # crude but dominating remainder
    inside = (k_all >= lo) & (k_all <= hi)
    return float(e_all.sum()) + tail, float(e_all[inside].sum())


def _torus_truncation(spec: JointSpectrum, factor_env, w2max: float) -> float:
    """Bound for lattice points outside the enumerated box."""
    if "box" not in spec.coverage:
        raise IncompleteSpectrumError("smoothed torus sums need a box-enumerated spectrum")
    lo, hi = spec.coverage["box"]
    n = spec.dim
    tot_all, tot_in = 1.0, 1.0
    for i in range(n):
        a, b = _envelope_line_sum(factor_env[i], factor_env[i].mu, lo[i], hi[i])
        tot_all *= a
        tot_in *= b
    return max(tot_all - tot_in, 0.0) * w2max / (2 * np.pi) ** n


class _Env:
    def __init__(self, fn, mu):
        self.fn = fn
        self.mu = float(mu)

    def __call__(self, d):
        return self.fn(d)


def _shell_density(spec: JointSpectrum, x, y) -> float:
    """Upper estimate ``K`` with ``sum_{lam1 in [L, L+1)} |phi(x)||phi(y)| <= K (L+1)``
    from the top shells of the computed spectrum (twice the observed max)."""
    vx = np.abs(spec.values_at(x))
    vy = vx if np.array_equal(x, y) else np.abs(spec.values_at(y))
    prod = 0.5 * (vx * vx + vy * vy)
    lam1 = spec.lam[:, 0]
    top = spec.lam_max
    shells = np.arange(max(1.0, np.floor(0.5 * top)), np.floor(top))
    if shells.size == 0:
        return float(prod.sum())
    dens = []
    for L in shells:
        sel = (lam1 >= L) & (lam1 < L + 1)
        dens.append(prod[sel].sum() / (L + 1))
    return 2.0 * float(max(dens))


def _sor_truncation(spec: JointSpectrum, env1, env2_max: float, x, y) -> float:
    """Bound for rows with ``lam1 > lam_max`` via the shell-density estimate."""
    K = _shell_density(spec, x, y)
    L = np.arange(np.floor(spec.lam_max), np.floor(spec.lam_max) + 20000)
    dist = np.maximum(0.0, np.maximum(L - env1.mu, env1.mu - L - 1.0))
    return float(K * env2_max * np.sum(env1(dist) * (L + 2)))


# ---------------------------------------------------------------------------
# smoothed kernels
# ---------------------------------------------------------------------------


def _check_dims(spec, vec, name):
    vec = np.asarray(vec, dtype=np.float64).ravel()
    if vec.size != spec.dim:
        raise DomainError(f"{name} has dimension {vec.size}, spectrum has {spec.dim}")
    return vec


def smoothed_measure_kernel(spec: JointSpectrum, mu, mol: Mollifier, cutoff: CutoffSymbol,
                            x, y, tail_tol: float | None = None) -> SmoothedValue:
    """``sum_j prod_k rho(lam_j^(k) - mu_k) w_j^2 phi_j(x) conj(phi_j(y))``."""
    mu = _check_dims(spec, mu, "mu")
    coef = np.ones(len(spec))
    for k in range(spec.dim):
        coef *= mol.rho(spec.lam[:, k] - mu[k])
    coef *= cutoff.weights(spec.lam) ** 2
    vx, vy, diag = _values(spec, x, y)
    value = complex(_sum(coef, vx, vy, diag))
    rho0 = float(mol.envelope(0.0))
    if spec.is_torus:
        envs = [_Env(mol.envelope, mu[k]) for k in range(spec.dim)]
        bound = _torus_truncation(spec, envs, 1.0)
    else:
        bound = _sor_truncation(spec, _Env(mol.envelope, mu[0]), rho0, x, y)
    if tail_tol is not None and bound > tail_tol:
        raise IncompleteSpectrumError(
            f"truncation bound {bound:.3g} exceeds tolerance {tail_tol:.3g}; raise lam_max"
        )
    return SmoothedValue(value, bound)


def window_weights(lam: np.ndarray, lam_scale: float, c, mol: Mollifier) -> np.ndarray:
    """``prod_k W(lam^(k); |c_k| lam_scale)`` for each row."""
    c = np.abs(np.asarray(c, dtype=np.float64))
    out = np.ones(lam.shape[0])
    for k in range(lam.shape[1]):
        out *= mol.window(lam[:, k], c[k] * lam_scale)
    return out


def smoothed_projector_kernel(spec: JointSpectrum, lam: float, c, mol: Mollifier,
                              cutoff: CutoffSymbol, x, y,
                              tail_tol: float | None = None) -> SmoothedValue:
    """Mollified box projector: rows weighted by products of windows."""
    c = _check_dims(spec, c, "c")
    coef = window_weights(spec.lam, lam, c, mol) * cutoff.weights(spec.lam) ** 2
    vx, vy, diag = _values(spec, x, y)
    value = complex(_sum(coef, vx, vy, diag))
    half = np.abs(c) * lam

    def wenv(k):
        # |W(tau; L)| for |tau| > L is at most the one-sided tail mass at |tau| - L
        return lambda d: np.minimum(mol.tail_mass(np.maximum(np.abs(d) - half[k], 0.0))
                                    + (np.abs(d) <= half[k]) * 2.0, 2.0)

    if spec.is_torus:
        envs = [_Env(wenv(k), 0.0) for k in range(spec.dim)]
        bound = _torus_truncation(spec, envs, 1.0)
    else:
        env1 = _Env(lambda d: mol.tail_mass(np.maximum(np.abs(d) - half[0], 0.0)), 0.0)
        bound = _sor_truncation(spec, env1, 1.0 + 2 * float(mol.tail_mass(0.0)), x, y)
    if tail_tol is not None and bound > tail_tol:
        raise IncompleteSpectrumError(
            f"truncation bound {bound:.3g} exceeds tolerance {tail_tol:.3g}; raise lam_max"
        )
    return SmoothedValue(value, bound)


def h_values(lam_rows: np.ndarray, lam: float, c, mol: Mollifier) -> np.ndarray:
    """``h(lam_j) = prod 1{|lam^(k)| <= |c_k| lam} - prod W(lam^(k); |c_k| lam)``."""
    c = np.abs(np.asarray(c, dtype=np.float64))
    ind = np.all(np.abs(lam_rows) <= c * lam, axis=1).astype(np.float64)
    return ind - window_weights(lam_rows, lam, c, mol)


def h_majorant(lam_rows: np.ndarray, lam: float, c, mol: Mollifier,
               order: int | None = None) -> np.ndarray:
    """Telescoped product bound on ``|h|``.

    ``sum_l |a_1..a_{l-1}| |a_l - a'_l| |a'_{l+1}..a'_n|`` with ``a`` the
    indicators and ``a'`` the windows.  With ``order`` set, the factor
    ``|a_l - a'_l|`` is replaced by the certified window-defect bound of
    that order.
    """
    c = np.abs(np.asarray(c, dtype=np.float64))
    n = lam_rows.shape[1]
    a = np.stack([(np.abs(lam_rows[:, k]) <= c[k] * lam).astype(np.float64)
                  for k in range(n)], axis=1)
    ap = np.stack([mol.window(lam_rows[:, k], c[k] * lam) for k in range(n)], axis=1)
    if order is None:
        diff = np.abs(a - ap)
    else:
        dist = np.abs(np.abs(lam_rows) - c * lam)
        diff = mol.window_defect_bound(dist, order)
    total = np.zeros(lam_rows.shape[0])
    for l in range(n):
        term = diff[:, l].copy()
        for k in range(l):
            term *= np.abs(a[:, k])
        for k in range(l + 1, n):
            term *= np.abs(ap[:, k])
        total += term
    return total


def tauberian_gap(spec: JointSpectrum, lam: float, c, mol: Mollifier, cutoff: CutoffSymbol,
                  x, y, top: int = 100) -> TauberianGap:
    """Difference between the rough and the mollified box projectors."""
    c = _check_dims(spec, c, "c")
    region = SpectralRegion.box(lam, c)
    rough = projector_kernel(spec, region, cutoff, x, y)
    sm = smoothed_projector_kernel(spec, lam, c, mol, cutoff, x, y)
    h = h_values(spec.lam, lam, c, mol)
    vx, vy, _ = _values(spec, x, y)
    terms = np.abs(h * cutoff.weights(spec.lam) ** 2 * vx * np.conj(vy))
    order = np.argsort(-terms, kind="stable")[:top]
    return TauberianGap(abs(rough - sm.value), rough, sm.value, sm.truncation_bound,
                        order, h[order], terms[order])


# ---------------------------------------------------------------------------
# cluster bounds with Fejer weights
# ---------------------------------------------------------------------------


def fejer_factor(beta: Mollifier, n: int) -> Mollifier:
    """Per-factor Fejer mollifier for an n-fold tensor product; the band
    limit of each factor is ``delta / sqrt(n)``."""
    return make_fejer(beta.delta / np.sqrt(n))


def covering_bound(spec: JointSpectrum, mu, beta_factor: Mollifier, cutoff: CutoffSymbol,
                   x) -> tuple[float, float, int]:
    """Return ``(unit_box_diag, 2 * sum_k beta-smoothed(c_k), N)`` for the
    covering of the unit box at ``mu``; the first never exceeds the second."""
    n = spec.dim
    eps0, count = fejer_covering(beta_factor, n)
    centers = covering_centers(mu, eps0, n)
    lhs = unit_box_diag(spec, mu, cutoff, x)
    rhs = 0.0
    for cen in centers:
        rhs += smoothed_measure_kernel(spec, cen, beta_factor, cutoff, x, x).value.real
    return lhs, 2.0 * rhs, count
