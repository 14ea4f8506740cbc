"""Acceptance criteria, one test each, with a PASS/FAIL line per criterion.

SoR sweeps share one spectrum per profile through the experiment cache, so
the first SoR test pays for the eigensolve.
"""

import time

import numpy as np
import pytest

from conftest import (FAILED_TESTS, TORUS_BASE, polar_oracle, record_acceptance,
                      session_elapsed, sor_config_text)
from qcilab import kernels
from qcilab.config import parse_config
from qcilab.cutoffs import identity_cutoff
from qcilab.experiments import build_setup, get_spectrum, tie_free_box
from qcilab.models import builtin_profile, make_surface_of_revolution
from qcilab.mollifiers import make_mollifier
from qcilab.regions import SpectralRegion
from qcilab.spectrum import (build_sor_spectrum, enumerate_torus, solve_radial_channel,
                             torus_box_spectrum)
from qcilab.weyl import verify

PROFILES = ("sphere", "bump")
SOR_CONE = "cone: {axis: [1, 0], half_angle: 0.4636476090008061}\n"  # |lam2| <= lam1 / 2


def torus_cfg(body, name):
    return parse_config(TORUS_BASE + body + f"name: {name}\n")


def sor_cfg(profile, body, name):
    return parse_config(sor_config_text(profile, body, name))


def _fmt(reports):
    return ", ".join(f"{k} beta={r.beta:.3f}" for k, r in reports.items())


# -- 1 ------------------------------------------------------------------------


def test_criterion_1_torus_pointwise_diagonal():
    t0 = time.perf_counter()
    rep = verify(torus_cfg("target: pointwise_diag\nlambdas: [25, 50, 100, 200, 400]\n"
                           "points: {kind: random, count: 3}\n", "acc1"))
    dt = time.perf_counter() - t0
    ok = rep.beta <= 1.2 and rep.passed and dt < 60
    record_acceptance(1, ok, f"beta={rep.beta:.4f} (<= 1.2), runtime {dt:.1f} s (< 60 s)")
    assert ok


# -- 2 ------------------------------------------------------------------------


def test_criterion_2_torus_offdiagonal():
    rep = verify(torus_cfg("target: pointwise_offdiag\nlambdas: [25, 50, 100, 200, 400]\n"
                           "points: {kind: random, count: 10}\npair_separation: 0.4\n", "acc2"))
    n_pairs = len(rep.extra["point_betas"])
    sine, dirichlet = rep.extra["sine_product_max_err"], rep.extra["dirichlet_max_err"]
    ok = rep.beta <= 1.2 and n_pairs == 10 and sine <= 1e-8 and dirichlet <= 1e-10
    record_acceptance(2, ok, f"beta={rep.beta:.4f} over {n_pairs} pairs; full phase vs sine product "
                             f"{sine:.2e} (<= 1e-8); kernel vs Dirichlet product {dirichlet:.2e}")
    assert ok


# -- 3 ------------------------------------------------------------------------


def test_criterion_3_sphere_eigensolver():
    t0 = time.perf_counter()
    prof = builtin_profile("sphere", grid_size=4096)
    spec = build_sor_spectrum(prof, 12.0, 4096)
    dt = time.perf_counter() - t0
    oracle = sorted(np.sqrt(l * (l + 1)) for l in range(13) if l * (l + 1) <= 144
                    for _ in range(2 * l + 1))
    expected = sum(2 * l + 1 for l in range(13) if l * (l + 1) <= 144)
    got = np.sort(spec.lam[:, 0])
    count_ok = len(got) == expected == len(oracle)
    rel = np.abs(got[1:] - oracle[1:]) / np.asarray(oracle[1:]) if count_ok else np.array([np.inf])
    # the ground state is zero; compare it on the lam^2 scale
    ground = solve_radial_channel(prof, 0, 1.0, 4096)[0].lam[0] ** 2
    ok = count_ok and rel.max() <= 1e-5 and abs(ground) <= 1e-5 and dt < 300
    record_acceptance(3, ok, f"count {len(got)} (expected {expected}), max rel err {rel.max():.2e} "
                             f"(<= 1e-5), ground lam^2 {ground:.1e}, runtime {dt:.1f} s (< 300 s)")
    assert ok


# -- 4 ------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_4_sor_microlocal_diagonal():
    reports, oracle_err = {}, 0.0
    for prof in PROFILES:
        cfg = sor_cfg(prof, "target: pointwise_diag\nlambdas: [25, 50, 100, 200]\n", f"acc4_{prof}")
        rep = verify(cfg)
        reports[prof] = rep
        setup = build_setup(cfg)
        a_of = setup.system.profile.a
        for lam, _, pred, _, _, p in rep.rows:
            a = float(a_of(np.array([setup.points[p][0]]))[0])
            ref = polar_oracle(setup.cutoff, a, lam, cfg.cbar)
            oracle_err = max(oracle_err, abs(pred - ref) / abs(ref))
    npts = {k: len(r.extra["point_betas"]) for k, r in reports.items()}
    ok = all(r.beta <= 1.2 and r.passed for r in reports.values()) and oracle_err <= 1e-6 \
        and all(v == 5 for v in npts.values())
    record_acceptance(4, ok, f"{_fmt(reports)} (<= 1.2, sup over 5 band points); "
                             f"polar oracle max rel err {oracle_err:.1e} (<= 1e-6)")
    assert ok


# -- 5 ------------------------------------------------------------------------


def gauss_circle_brute(radius):
    k = np.arange(-int(radius), int(radius) + 1)
    return int(np.count_nonzero(k[:, None] ** 2 + k[None, :] ** 2 <= radius * radius))


@pytest.mark.slow
def test_criterion_5_integrated_law():
    reports = {"torus": verify(torus_cfg("target: integrated\nlambdas: [25, 50, 100, 200]\n"
                                         "cone: {axis: [0.6, 0.8], half_angle: 0.5}\n", "acc5_torus"))}
    for prof in PROFILES:
        reports[prof] = verify(sor_cfg(prof, "target: integrated\nlambdas: [25, 50, 100, 200]\n"
                                       + SOR_CONE, f"acc5_{prof}"))
    exact = all(len(enumerate_torus(2, SpectralRegion.ball(R, 2))) == gauss_circle_brute(R)
                for R in (10, 20, 40, 80, 160))
    ok = all(r.beta <= 1.2 and r.passed for r in reports.values()) and exact
    record_acceptance(5, ok, f"{_fmt(reports)} (<= 1.2); torus ball counts equal "
                             f"Gauss-circle brute force: {exact}")
    assert ok


# -- 6 ------------------------------------------------------------------------


def _certificate(spec, x, mu, cutoff, mol):
    """Sum of |phi_j(x)|^2 w_j^2 prod_k C8 (1 + |lam_jk - mu_k|)^-8 over the retained rows."""
    env = np.ones(len(spec))
    for k in range(spec.dim):
        env *= np.minimum(mol.tail_bound(spec.lam[:, k] - mu[k], 8), mol.envelope(0.0))
    return float(np.sum(np.abs(spec.values_at(x)) ** 2 * cutoff.weights(spec.lam) ** 2 * env))


@pytest.mark.slow
def test_criterion_6_smoothed_measure():
    torus_body = "lambdas: [25, 50, 100, 200]\ncutoff: {kind: torus, half_angle: 0.4}\n"
    sor_body = "lambdas: [20, 40, 80, 160]\n"
    mol = make_mollifier(0.75)
    inside, reflected, cert_ok = {}, {}, True
    for model in ("torus",) + PROFILES:
        for refl in (False, True):
            body = "target: smoothed_measure\n" + ("reflected: true\n" if refl else "")
            name = f"acc6_{model}{'_refl' if refl else ''}"
            cfg = (torus_cfg(body + torus_body, name) if model == "torus"
                   else sor_cfg(model, body + sor_body, name))
            rep = verify(cfg)
            (reflected if refl else inside)[model] = rep
            if refl:
                setup = build_setup(cfg)
                spec = get_spectrum(setup)
                ray = np.asarray(rep.extra["ray"])
                for R, val, _, _, _, p in rep.rows:
                    cert = _certificate(spec, setup.points[p], R * ray, setup.cutoff, mol)
                    cert_ok &= abs(val) <= cert
    ok = all(abs(r.beta) <= 0.1 for r in inside.values()) \
        and all(r.beta <= -4 for r in reflected.values()) and cert_ok
    record_acceptance(6, ok, f"inside cone {_fmt(inside)} (|beta| <= 0.1); reflected "
                             f"{_fmt(reflected)} (<= -4); values under the C8 certificate: {cert_ok}")
    assert ok


# -- 7 ------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_7_cluster_bounds():
    reports = {"torus": verify(torus_cfg("target: cluster\nlambdas: [25, 50, 100, 200]\n"
                                         "cutoff: {kind: torus, half_angle: 0.4}\n", "acc7_torus"))}
    for prof in PROFILES:
        reports[prof] = verify(sor_cfg(prof, "target: cluster\nlambdas: [20, 40, 80, 160]\n",
                                       f"acc7_{prof}"))
    boxes = {r.extra["boxes"] for r in reports.values()}
    ok = all(abs(r.beta) <= 0.15 and r.passed for r in reports.values()) and boxes == {40}
    record_acceptance(7, ok, f"{_fmt(reports)} (|beta| <= 0.15, sup over 40 unit boxes, "
                             f"Fejer covering checked)")
    assert ok


# -- 8 ------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_8_tauberian_gap():
    reports = {"torus": verify(torus_cfg("target: tauberian\nlambdas: [25, 50, 100, 200]\n"
                                         "points: {kind: random, count: 2}\n", "acc8_torus"))}
    for prof in PROFILES:
        reports[prof] = verify(sor_cfg(prof, "target: tauberian\nlambdas: [25, 50, 100, 200]\n",
                                       f"acc8_{prof}"))
    ok = all(r.beta <= 1.2 and r.passed for r in reports.values())
    record_acceptance(8, ok, f"{_fmt(reports)} (<= n - 1 + 0.2 = 1.2)")
    assert ok


# -- 9 ------------------------------------------------------------------------


def _invariants(rng) -> dict:
    out = {}
    sphere = builtin_profile("sphere", grid_size=512)
    sspec = build_sor_spectrum(sphere, 10.0, 512, keep_samples=True)
    lev = SpectralRegion.level(9.0, 2, 0)
    cut = identity_cutoff()
    herm = nonneg = 0.0
    for _ in range(20):
        x = np.array([rng.uniform(0.3, 2.8), rng.uniform(0, 2 * np.pi)])
        y = np.array([rng.uniform(0.3, 2.8), rng.uniform(0, 2 * np.pi)])
        kxy = kernels.projector_kernel(sspec, lev, cut, x, y)
        kyx = kernels.projector_kernel(sspec, lev, cut, y, x)
        herm = max(herm, abs(kxy - np.conj(kyx)))
        nonneg = min(nonneg, kernels.projector_kernel(sspec, lev, cut, x, x).real)
    out["hermitian"] = herm <= 1e-12
    out["diagonal_nonnegative"] = nonneg >= 0.0

    S = make_surface_of_revolution(builtin_profile("bump", (0.2,), grid_size=512))
    hom = 0.0
    for _ in range(50):
        x = np.array([rng.uniform(0.1, 3.0), 0.0])
        xi, t = rng.normal(size=2), rng.uniform(0.1, 10)
        hom = max(hom, np.max(np.abs(S.symbols(x, t * xi) - t * S.symbols(x, xi)))
                  / max(1.0, t * np.max(np.abs(S.symbols(x, xi)))))
    out["homogeneity"] = hom <= 1e-10

    tspec = enumerate_torus(2, SpectralRegion.box(30.5, (0.6, 0.8)))
    full = torus_box_spectrum(2, (30, 30))
    dirichlet = 0.0
    for _ in range(20):
        x, y = rng.uniform(0, 2 * np.pi, 2), rng.uniform(0, 2 * np.pi, 2)
        region = tie_free_box(full, 30.5, (0.6, 0.8))
        k = kernels.projector_kernel(full, region, cut, x, y)
        K = np.floor(np.array([0.6, 0.8]) * region.lam)
        d = x - y
        ref = np.prod([np.sin((kk + 0.5) * dd) / (2 * np.pi * np.sin(0.5 * dd)) for kk, dd in zip(K, d)])
        dirichlet = max(dirichlet, abs(k - ref))
    out["dirichlet_oracle"] = dirichlet <= 1e-10 and len(tspec) == int(np.prod(2 * K + 1))

    prof = builtin_profile("bump", (0.2,), grid_size=1024)
    pairs = solve_radial_channel(prof, 2, 30.0, 1024)
    h = prof.L / 1024
    w = prof.a((np.arange(1024) + 0.5) * h) * h
    F = np.stack([p.radial_samples for p in pairs])
    gram = (F * w) @ F.T
    out["orthonormality"] = np.max(np.abs(gram - np.eye(len(pairs)))) <= 1e-6

    Ns = [256, 512, 1024, 2048]
    lams = [np.array([p.lam[0] for p in solve_radial_channel(
        builtin_profile("sphere", grid_size=N), 1, 6.0, N, richardson=False)]) for N in Ns]
    k = min(len(v) for v in lams)
    drift = [np.max(np.abs(lams[i + 1][:k] - lams[i][:k])) for i in range(len(Ns) - 1)]
    order = -np.polyfit(np.log(Ns[:-1]), np.log(drift), 1)[0]
    out[f"grid_order={order:.2f}"] = 1.8 <= order <= 2.2
    return out


@pytest.mark.run_last
def test_criterion_9_invariant_suites(rng):
    checks = _invariants(rng)
    others = [n for n in FAILED_TESTS if "criterion_9" not in n]
    elapsed = session_elapsed()
    ok = all(checks.values()) and not others and elapsed < 900
    failed = [k for k, v in checks.items() if not v]
    record_acceptance(9, ok, f"direct checks {sorted(checks)} failed={failed}; "
                             f"{len(others)} failing tests in session; "
                             f"session wall time {elapsed:.0f} s (< 900 s)")
    assert ok
