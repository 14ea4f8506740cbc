import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import special_ortho_group

from qcilab.cutoffs import sor_cutoff
from qcilab.errors import DomainError
from qcilab.geometry import (FourierCone, PhaseGrid, fiber_rank, liouville_volume,
                             moment_image_contains, monte_carlo_volume, scan_regions)
from qcilab.models import (AdmissibleBand, LiouvilleTorus, builtin_profile,
                           make_surface_of_revolution, make_torus)
from qcilab.regions import SpectralRegion
from qcilab.spectrum import build_sor_spectrum


def test_fiber_rank_examples(sphere_system):
    assert fiber_rank(make_torus(2), [0.1, 0.2], [1.0, -3.0]) == 2
    assert fiber_rank(sphere_system, [1.0, 0.0], [0.0, 2.0]) == 1
    assert fiber_rank(sphere_system, [np.pi / 2, 0.0], [4.0, 3.0]) == 2
    with pytest.raises(DomainError):
        fiber_rank(sphere_system, [1.0, 0.0], [0.0, 0.0])


def test_sor_fiber_determinant(sphere_system):
    # det of d(p1, p2)/d(Sigma, Theta) is Sigma / p1 (Theta row is (0, 1))
    J = sphere_system.fiber_jacobian(np.array([np.pi / 2, 0.0]), np.array([4.0, 3.0]))
    assert np.linalg.det(J) == pytest.approx(4.0 / 5.0, rel=1e-14)


@settings(max_examples=50, deadline=None)
@given(sigma=st.floats(0.2, 2.9), Sig=st.floats(-5, 5), Th=st.floats(-5, 5), seed=st.integers(0, 2**31))
def test_fiber_rank_basis_invariant(bump_system, sigma, Sig, Th, seed):
    if abs(Sig) + abs(Th) < 1e-3:
        return
    R = special_ortho_group.rvs(2, random_state=seed)
    x, xi = np.array([sigma, 0.0]), np.array([Sig, Th])
    J = bump_system.fiber_jacobian(x, xi)
    sv = np.linalg.svd(J @ R, compute_uv=False)
    rotated = int(np.sum(sv > 1e-8 * max(sv[0], 1e-12)))
    assert rotated == fiber_rank(bump_system, x, xi)


def test_scan_bump_degenerate_set(bump_system):
    rep = scan_regions(bump_system, PhaseGrid(tuple(np.linspace(0.2, 2.9, 28)), 16))
    assert len(rep.critical_meridians) == 1
    sig_star = rep.critical_meridians[0]
    assert sig_star == pytest.approx(np.pi / 2, abs=1e-9)
    # dp1 ^ dp2 = 0 needs Sigma = 0 and a'(sigma) = 0; fiber rank drops on all of Sigma = 0
    assert rep.degenerate.sum() >= 2
    assert np.all(np.isclose(rep.coords[rep.degenerate, 0], sig_star))
    assert np.all(rep.flags["sigma_zero"][rep.degenerate])
    assert np.array_equal(rep.rank < 2, rep.flags["sigma_zero"])
    assert set(np.unique(rep.rank)) <= {0, 1, 2}
    assert not np.any(rep.full_rank & rep.degenerate)


def test_scan_torus_has_no_degenerate_cells(rng):
    rep = scan_regions(make_torus(2), PhaseGrid(tuple(map(tuple, rng.uniform(0, 6, (5, 2)))), 32))
    assert not rep.degenerate.any() and rep.full_rank.all()


def test_scan_liouville_full_rank_off_axes(rng):
    rep = scan_regions(LiouvilleTorus(), PhaseGrid(tuple(map(tuple, rng.uniform(0, 1, (6, 2)))), 36))
    off = ~rep.flags["axis_direction"]
    assert rep.full_rank[off].all()


def test_scan_export(tmp_path, bump_system):
    rep = scan_regions(bump_system, PhaseGrid((1.0, 2.0), 8))
    text = rep.export(tmp_path / "g.csv").read_text(encoding="utf-8")
    line = text.splitlines()[1]
    assert line.startswith("# critical_meridians:")
    assert float(line.split(":")[1]) == pytest.approx(np.pi / 2, abs=1e-12)
    assert text.count("\n") == 2 + 1 + rep.rank.size


def test_moment_image(sphere_system, sphere_band):
    assert moment_image_contains(sphere_system, sphere_band, [2.0, 0.6])
    assert not moment_image_contains(sphere_system, sphere_band, [2.0, 1.5])
    assert not moment_image_contains(sphere_system, sphere_band, [-1.0, 0.0])
    cone = FourierCone((1 / np.sqrt(2), 1 / np.sqrt(2)), 0.3)
    assert moment_image_contains(make_torus(2), cone, [5.0, 5.0])
    assert not moment_image_contains(make_torus(2), cone, [5.0, -5.0])
    with pytest.raises(DomainError):
        moment_image_contains(sphere_system, sphere_band, [0.0, 0.0])


def test_torus_volumes():
    T = make_torus(2)
    c = (0.6, 0.8)
    lam = 7.5
    assert liouville_volume(T, SpectralRegion.box(lam, c)) == pytest.approx(
        (2 * np.pi) ** 2 * 4 * 0.48 * lam**2, rel=1e-14)
    assert liouville_volume(T, SpectralRegion.cone((1, 1), 0.3, 10)) == pytest.approx(
        (2 * np.pi) ** 2 * 0.3 * 100, rel=1e-10)


def test_sor_volume_against_monte_carlo(sphere_system):
    R = SpectralRegion.box(10, (0.8, 0.6))
    V = liouville_volume(sphere_system, R)
    mc, err = monte_carlo_volume(sphere_system, R, samples=10_000_000)
    assert abs(V - mc) <= 0.003 * V
    assert err < 0.001 * V


def test_weighted_sor_volume_against_monte_carlo(bump_system):
    band = AdmissibleBand(bump_system.profile, 1.0, 2.1, 0.5)
    R = SpectralRegion.box(10, (0.8, 0.6))
    w = sor_cutoff(band, 0.1)
    V = liouville_volume(bump_system, R, w)
    mc, err = monte_carlo_volume(bump_system, R, w, samples=4_000_000)
    assert abs(V - mc) <= 4 * err + 1e-3 * V


def test_sphere_level_volume():
    # unit cosphere bundle of the round sphere: |T*S^2 ball| = 4 pi * pi r^2
    S = make_surface_of_revolution(builtin_profile("sphere"))
    V = liouville_volume(S, SpectralRegion.level(10, 2, 0))
    assert V == pytest.approx(4 * np.pi * np.pi * 100, rel=1e-6)


@pytest.mark.parametrize("sys_name", ["torus", "bump"])
def test_volume_scaling(sys_name, bump_system):
    sys = make_torus(2) if sys_name == "torus" else bump_system
    c = (0.8, 0.6)
    v1 = liouville_volume(sys, SpectralRegion.box(1, c))
    v7 = liouville_volume(sys, SpectralRegion.box(7, c))
    assert v7 == pytest.approx(49 * v1, rel=1e-6)


def test_unbounded_volume_is_an_error():
    with pytest.raises(DomainError):
        liouville_volume(make_torus(2), SpectralRegion.level(3, 2, 0))


def test_counts_stabilise_in_cone_outside_image():
    prof = builtin_profile("bump", (0.2,), grid_size=512)
    spec = build_sor_spectrum(prof, 40.0, 512)
    # |lam2| / lam1 >= tan(0.95) = 1.40 > a_max = 1.2: disjoint from the image sector
    axis = (np.cos(1.2), np.sin(1.2))
    counts = [int(SpectralRegion.cone(axis, 0.25, R).contains(spec.lam).sum()) for R in (10, 20, 40)]
    assert counts[0] == counts[1] == counts[2]
