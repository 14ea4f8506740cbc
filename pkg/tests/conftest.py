"""Shared fixtures and the acceptance summary printed at the end of a run."""

from __future__ import annotations

import time

import numpy as np
import pytest
from scipy.integrate import quad

from qcilab.models import AdmissibleBand, builtin_profile, make_surface_of_revolution
from qcilab.mollifiers import make_mollifier
from qcilab.spectrum import build_sor_spectrum, torus_box_spectrum

_SESSION_START = time.perf_counter()
ACCEPTANCE_LINES: list[str] = []
FAILED_TESTS: list[str] = []

# Shared by every SoR acceptance sweep so the experiment cache reuses one
# spectrum per profile.
SOR_BASE = """schema_version: 1
system: {{kind: sor, profile: {profile}{params}, grid_size: 4096, lam_max: 200}}
band: {{sigma_lo: 1.0, sigma_hi: 2.1}}
cutoff: {{kind: sor, c_max: 0.5, width: 0.1}}
cbar: [0.8, 0.6]
points: {{kind: band, count: 5, theta: 0.3}}
"""

TORUS_BASE = """schema_version: 1
system: {kind: torus, dim: 2}
cbar: [0.6, 0.8]
"""


def sor_config_text(profile: str, body: str, name: str) -> str:
    params = ", params: [0.2]" if profile == "bump" else ""
    return SOR_BASE.format(profile=profile, params=params) + body + f"name: {name}\n"


def record_acceptance(number: int, passed: bool, detail: str):
    ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
    print(ACCEPTANCE_LINES[-1])


def session_elapsed() -> float:
    return time.perf_counter() - _SESSION_START


def polar_oracle(cut, a: float, lam: float, c) -> float:
    """Leading diagonal term on a surface of revolution at a point with
    profile value ``a``, by 1-D quadrature in the ratio ``r = p2 / p1``."""
    def f(r):
        w = float(cut.profile(np.array([r]))[0]) ** 2
        reach = c[0] * lam if r == 0 else min(c[0] * lam, c[1] * lam / abs(r))
        return w * reach**2 / np.sqrt(a * a - r * r)
    lo, hi = max(-a, cut.c_min), min(a, cut.c_max)
    pts = sorted({k for k in cut.knots if lo < k < hi} | {0.0})
    val = quad(f, lo, hi, points=pts, epsabs=0, epsrel=1e-12, limit=400)[0]
    return val / (2 * np.pi) ** 2


def pytest_collection_modifyitems(config, items):
    last = [it for it in items if it.get_closest_marker("run_last")]
    items[:] = [it for it in items if not it.get_closest_marker("run_last")] + last


def pytest_runtest_logreport(report):
    if report.failed:
        FAILED_TESTS.append(report.nodeid)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
    terminalreporter.write_line(f"total session wall time: {session_elapsed():.1f} s")


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def sphere_profile():
    return builtin_profile("sphere", grid_size=512)


@pytest.fixture(scope="session")
def sphere_system(sphere_profile):
    return make_surface_of_revolution(sphere_profile)


@pytest.fixture(scope="session")
def bump_system():
    return make_surface_of_revolution(builtin_profile("bump", (0.2,), grid_size=512))


@pytest.fixture(scope="session")
def sphere_band(sphere_profile):
    return AdmissibleBand(sphere_profile, 1.0, 2.1, 0.5)


@pytest.fixture(scope="session")
def small_sphere_spectrum(sphere_profile):
    """Sphere spectrum up to lam 8 with full radial samples."""
    return build_sor_spectrum(sphere_profile, 8.0, 512, keep_samples=True)


@pytest.fixture(scope="session")
def torus_spectrum():
    return torus_box_spectrum(2, (60, 60))


@pytest.fixture(scope="session")
def mollifier():
    return make_mollifier(0.75)
