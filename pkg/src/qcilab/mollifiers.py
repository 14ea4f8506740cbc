"""Band-limited mollifiers.

Convention: ``rho(s) = (1/2pi) int rho_hat(t) e^{ist} dt``, so that
``int rho = rho_hat(0)``.

``make_mollifier`` builds ``rho_hat`` equal to 1 on ``|t| <= delta0/2``, zero for
``|t| >= delta0`` and exponential-type smoothstep shoulders.  ``make_fejer``
builds ``beta = gamma^2 / gamma(0)^2`` from a bump ``gamma_hat`` on
``[-delta/2, delta/2]``, which is nonnegative with ``supp beta_hat`` in
``[-delta, delta]``.

Both are tabulated (value and derivative) on ``[0, s_table]`` for cubic
Hermite evaluation.  Beyond the table ``rho`` is taken as 0 and ``F`` as
``+-1/2``; the neglected amount is below the recorded tail bounds (about
1e-11 for the default parameters).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import sici

from ._accel import hermite_eval
from .errors import ConfigurationError
from .smooth import bump, smoothstep

TABLE_STEP = 5e-3
CERT_RADIUS = 200.0  # certificate scan out to CERT_RADIUS / delta
TABLE_RADIUS = 400.0
CERT_ORDERS = (2, 4, 8)
# sampled sups miss peaks between table nodes by < 1e-6 relative; pad them
CERT_MARGIN = 1.001


def _panel_rule(a: float, b: float, panels: int, n: int):
    x, w = leggauss(n)
    edges = np.linspace(a, b, panels + 1)
    h = np.diff(edges)
    nodes = (0.5 * h[:, None] * x[None, :] + 0.5 * (edges[:-1] + edges[1:])[:, None]).ravel()
    weights = (0.5 * h[:, None] * w[None, :]).ravel()
    return nodes, weights


@dataclass(frozen=True, eq=False)
class Mollifier:
    """Tabulated even mollifier with tail certificate.

    ``tail_constants[N]`` is ``sup |rho(s)| (1 + |s|)^N`` over the
    certificate range.  ``window_constants[N]`` is the same sup for the
    window defect ``|1_{[-L, L]}(tau) - W(tau; L)|`` as a function of the
    distance ``||tau| - L|``.
    """

    kind: str  # "plateau" or "fejer"
    delta: float
    nonneg: bool
    s_table: float
    step: float
    rho_tab: np.ndarray = field(repr=False)
    drho_tab: np.ndarray = field(repr=False)
    F_tab: np.ndarray = field(repr=False)
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    plateau_end: float = 0.0
    norm: float = 1.0
    tail_constants: dict = field(default_factory=dict)
    window_constants: dict = field(default_factory=dict)
    envelope_tab: np.ndarray = field(default=None, repr=False)
    tail_mass_tab: np.ndarray = field(default=None, repr=False)
    scale: float = 1.0

    # -- direct evaluation from the defining integrals ------------------------

    def _direct(self, s: np.ndarray, which: str) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        out = np.empty_like(s)
        t, w = self.nodes, self.weights
        for lo in range(0, s.size, 4096):
            sl = s.ravel()[lo:lo + 4096][:, None]
            if which == "rho":
                v = (w * np.cos(sl * t)).sum(axis=1)
            elif which == "drho":
                v = -(w * t * np.sin(sl * t)).sum(axis=1)
            else:
                v = (w * np.sin(sl * t) / t).sum(axis=1)
            out.ravel()[lo:lo + 4096] = v
        out = out / np.pi
        if self.kind == "plateau":
            b = self.plateau_end
            x = s * b
            with np.errstate(divide="ignore", invalid="ignore"):
                if which == "rho":
                    out += np.where(s == 0, b / np.pi, np.sin(x) / (np.pi * np.where(s == 0, 1, s)))
                elif which == "drho":
                    small = np.abs(x) < 1e-3
                    big = (x * np.cos(x) - np.sin(x)) / (np.pi * np.where(small, 1, s) ** 2)
                    ser = -(b**3) * s / (3 * np.pi) * (1 - x * x / 10)
                    out += np.where(small, ser, big)
                else:
                    out += sici(x)[0] / np.pi
        return out

    # -- public evaluation --------------------------------------------------

    def _eval(self, s, table, dtable, parity, limit):
        s = np.asarray(s, dtype=np.float64)
        out = hermite_eval(table, dtable, self.step, s, parity)
        far = np.abs(s) > self.s_table
        if np.any(far):
            out = np.array(out, copy=True)
            out[far] = limit * (np.sign(s[far]) if parity < 0 else 1.0)
        return out

    def rho(self, s) -> np.ndarray:
        """The mollifier (``beta`` for the Fejer kind)."""
        if self.kind == "fejer":
            g = self._eval(s, self.rho_tab, self.drho_tab, 1, 0.0)
            return self.scale * g * g / self.norm**2
        return self.scale * self._eval(s, self.rho_tab, self.drho_tab, 1, 0.0)

    def antiderivative(self, s) -> np.ndarray:
        """``F(s) = int_0^s rho`` (plateau kind)."""
        if self.kind == "fejer":
            raise ConfigurationError("antiderivative is provided for the plateau kind only")
        return self.scale * self._eval(s, self.F_tab, self.rho_tab, -1, 0.5)

    def window(self, tau, half_width) -> np.ndarray:
        """``W(tau; L) = int_{tau-L}^{tau+L} rho``."""
        tau = np.asarray(tau, dtype=np.float64)
        return self.antiderivative(tau + half_width) - self.antiderivative(tau - half_width)

    def rho_hat(self, t) -> np.ndarray:
        t = np.abs(np.asarray(t, dtype=np.float64))
        if self.kind == "plateau":
            b = self.plateau_end
            return self.scale * smoothstep((self.delta - t) / (self.delta - b))
        # beta_hat(t) = (1/(2pi g0^2)) int gamma_hat(u) gamma_hat(t-u) du
        half = 0.5 * self.delta
        x, w = leggauss(200)
        out = np.zeros_like(t)
        for i, ti in enumerate(t.ravel()):
            lo, hi = max(-half, ti - half), min(half, ti + half)
            if hi <= lo:
                continue
            u = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
            val = np.sum(0.5 * (hi - lo) * w * bump(u / half) * bump((ti - u) / half))
            out.ravel()[i] = val
        return self.scale * out / (2 * np.pi * self.norm**2)

    def envelope(self, d) -> np.ndarray:
        """Nonincreasing majorant of ``|rho|`` on ``|s| >= d``."""
        d = np.abs(np.asarray(d, dtype=np.float64))
        idx = np.minimum((d / self.step).astype(np.int64), self.envelope_tab.size - 1)
        inside = d <= self.s_table
        far = self.scale * min(self.tail_constants[8] * (1 + self.s_table) ** -8, 1.0)
        far_bound = np.minimum(self.tail_bound(d, 8), self.scale * abs(self.rho(0.0)))
        return np.where(inside, np.maximum(self.envelope_tab[idx], far), far_bound)

    def tail_mass(self, d) -> np.ndarray:
        """Bound on ``int_{|s| >= d} |rho|`` (one side)."""
        d = np.abs(np.asarray(d, dtype=np.float64))
        idx = np.minimum((d / self.step).astype(np.int64), self.tail_mass_tab.size - 1)
        C = self.tail_constants[8]
        far = self.scale * C * (1 + np.maximum(d, self.s_table)) ** -7 / 7
        return np.where(d <= self.s_table, self.tail_mass_tab[idx] + far, far)

    def tail_bound(self, s, N: int = 8) -> np.ndarray:
        s = np.abs(np.asarray(s, dtype=np.float64))
        return self.scale * self.tail_constants[N] * (1 + s) ** (-float(N))

    def window_defect_bound(self, dist, N: int = 8) -> np.ndarray:
        """Bound on ``|1_{|tau| <= L} - W(tau; L)|`` at ``||tau| - L| = dist``."""
        dist = np.abs(np.asarray(dist, dtype=np.float64))
        return self.scale * self.window_constants[N] * (1 + dist) ** (-float(N))

    def scaled(self, c: float) -> "Mollifier":
        """The same mollifier multiplied by ``c``."""
        return replace(self, scale=self.scale * float(c))


def _tabulate(kind: str, delta: float, table_radius: float):
    if kind == "plateau":
        b = 0.5 * delta
        # shoulder only; the plateau part has closed forms
        nodes, wq = _panel_rule(b, delta, 12, 20)
        wq = wq * smoothstep((delta - nodes) / (delta - b))
        plateau_end = b
    else:
        half = 0.5 * delta
        nodes, wq = _panel_rule(0.0, half, 12, 20)
        wq = wq * bump(nodes / half)
        plateau_end = 0.0
    probe = Mollifier(kind, delta, kind == "fejer", 0.0, TABLE_STEP, np.zeros(2), np.zeros(2),
                      np.zeros(2), nodes, wq, plateau_end)
    s = np.arange(0.0, table_radius + 2 * TABLE_STEP, TABLE_STEP)
    return probe, s, probe._direct(s, "rho"), probe._direct(s, "drho"), probe._direct(s, "F")


def _certify(s, absval, cert_radius):
    sel = s <= cert_radius
    return {N: CERT_MARGIN * float(np.max(absval[sel] * (1 + s[sel]) ** N)) for N in CERT_ORDERS}


def _reverse_cummax(v):
    return CERT_MARGIN * np.maximum.accumulate(v[::-1])[::-1]


@lru_cache(maxsize=8)
def make_mollifier(delta0: float = 0.75) -> Mollifier:
    """Plateau mollifier with ``rho_hat = 1`` on ``|t| <= delta0/2``."""
    delta0 = float(delta0)
    if not delta0 > 0:
        raise ConfigurationError("delta0 must be positive")
    probe, s, r, dr, F = _tabulate("plateau", delta0, TABLE_RADIUS / delta0)
    stab = float(s[-1])
    absr = np.abs(r)
    tail = _certify(s, absr, CERT_RADIUS / delta0)
    # window defect as a function of the distance to the window edge
    G = _reverse_cummax(np.abs(0.5 - F))
    wdef = 2.0 * G
    wconst = _certify(s, wdef, CERT_RADIUS / delta0)
    env = _reverse_cummax(absr)
    # one-sided tail mass int_d^stab |rho| by reversed trapezoid sums
    seg = 0.5 * (absr[1:] + absr[:-1]) * TABLE_STEP
    mass = CERT_MARGIN * np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    return Mollifier("plateau", delta0, False, stab, TABLE_STEP, r, dr, F, probe.nodes,
                     probe.weights, probe.plateau_end, 1.0, tail, wconst, env, mass)


@lru_cache(maxsize=8)
def make_fejer(delta: float = 0.75) -> Mollifier:
    """Nonnegative ``beta = |gamma|^2 / gamma(0)^2`` with band limit ``delta``."""
    delta = float(delta)
    if not delta > 0:
        raise ConfigurationError("delta must be positive")
    probe, s, g, dg, _ = _tabulate("fejer", delta, TABLE_RADIUS / delta)
    g0 = float(g[0])
    beta = (g / g0) ** 2
    tail = _certify(s, beta, CERT_RADIUS / delta)
    env = _reverse_cummax(beta)
    seg = 0.5 * (beta[1:] + beta[:-1]) * TABLE_STEP
    mass = CERT_MARGIN * np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    return Mollifier("fejer", delta, True, float(s[-1]), TABLE_STEP, g, dg, np.zeros_like(g),
                     probe.nodes, probe.weights, 0.0, g0, tail, {}, env, mass)


def fejer_covering(beta: Mollifier, n: int) -> tuple[float, int]:
    """Half-side ``eps0`` and count ``N`` of the unit-box covering.

    ``eps0`` is the largest radius with ``prod_i beta(s_i) >= 1/2`` on the
    cube ``|s_i| <= eps0``; cubes of side ``2 eps0`` then cover a unit box
    with ``N = ceil(1/(2 eps0))^n`` pieces, and each indicator is bounded by
    twice the shifted ``beta`` product.
    """
    target = 0.5 ** (1.0 / n)
    s = np.arange(0.0, 40.0 / beta.delta, 1e-4)
    b = beta.rho(s)
    below = np.flatnonzero(b < target)
    eps0 = float(s[below[0] - 1]) if below.size else float(s[-1])
    count = int(np.ceil(1.0 / (2.0 * eps0))) ** n
    return eps0, count


def covering_centers(mu, eps0: float, n: int) -> np.ndarray:
    """Centres of the covering cubes of ``prod [mu_k, mu_k + 1]``."""
    k = int(np.ceil(1.0 / (2.0 * eps0)))
    offs = (np.arange(k) + 0.5) / k
    grids = np.meshgrid(*([offs] * n), indexing="ij")
    return np.asarray(mu, dtype=np.float64) + np.stack([g.ravel() for g in grids], axis=-1)
