import itertools

import numpy as np
import pytest

from qcilab.errors import BoundaryTieError, ConfigurationError, DomainError
from qcilab.models import builtin_profile
from qcilab.regions import SpectralRegion
from qcilab.spectrum import (build_sor_spectrum, enumerate_torus, eval_eigenfunction,
                             import_spectrum, solve_radial_channel, torus_box_spectrum)


def sphere_oracle(lam_max):
    """Brute-force (l, m) enumeration with l(l+1) <= lam_max^2."""
    return [(np.sqrt(l * (l + 1)), m) for l in range(int(lam_max) + 2)
            for m in range(-l, l + 1) if l * (l + 1) <= lam_max**2]


# -- torus -------------------------------------------------------------------


def test_torus_box_count():
    assert len(enumerate_torus(2, SpectralRegion.box(2, (0.6, 0.8)))) == 9


def test_torus_ball_count_matches_brute_force():
    brute = sum(1 for k in itertools.product(range(-10, 11), repeat=2) if k[0]**2 + k[1]**2 <= 100)
    assert brute == 317
    assert len(enumerate_torus(2, SpectralRegion.ball(10, 2))) == brute


def test_torus_box_boundary_tie():
    with pytest.raises(BoundaryTieError):
        enumerate_torus(2, SpectralRegion.box(5, (0.6, 0.8)))


def test_torus_enumeration_guard():
    with pytest.raises(ConfigurationError):
        torus_box_spectrum(4, 60)


def test_torus_eigenfunctions():
    spec = torus_box_spectrum(2, 1)
    j = int(np.flatnonzero((spec.quantum == 0).all(axis=1))[0])
    assert eval_eigenfunction(spec.pair(j), [0.3, 2.0]) == pytest.approx(1 / (2 * np.pi))
    vals = spec.values_at([0.7, -1.2])
    np.testing.assert_allclose(np.abs(vals), 1 / (2 * np.pi), rtol=1e-15)


# -- surfaces of revolution ----------------------------------------------------


@pytest.fixture(scope="module")
def sphere4096():
    return builtin_profile("sphere", grid_size=4096)


def test_sphere_channel_zero(sphere4096):
    lam2 = [p.lam[0] ** 2 for p in solve_radial_channel(sphere4096, 0, 3.5, 4096)]
    np.testing.assert_allclose(lam2[1:4], [2.0, 6.0, 12.0], rtol=1e-5)
    assert abs(lam2[0]) < 1e-5


def test_sphere_channel_two(sphere4096):
    pairs = solve_radial_channel(sphere4096, 2, 3.0, 4096)
    assert pairs[0].lam[0] ** 2 == pytest.approx(6.0, rel=1e-5)
    assert all(p.lam[1] == 2.0 for p in pairs)


def test_channel_sign_symmetry():
    prof = builtin_profile("bump", (0.2,), grid_size=512)
    for m in (1, 3):
        a = [p.lam[0] for p in solve_radial_channel(prof, m, 12.0, 512)]
        b = [p.lam[0] for p in solve_radial_channel(prof, -m, 12.0, 512)]
        assert a == b


def test_channel_rejects_bad_input(sphere_profile):
    with pytest.raises(ConfigurationError):
        solve_radial_channel(sphere_profile, 0, 5.0, 128)
    with pytest.raises(ConfigurationError):
        solve_radial_channel(sphere_profile, 40, 5.0, 512)
    assert solve_radial_channel(sphere_profile, 6, 5.0, 512) == []


def test_sphere_spectrum_lam5(sphere_profile):
    oracle = sphere_oracle(5.0)
    assert len(oracle) == 25
    spec = build_sor_spectrum(sphere_profile, 5.0, 512)
    assert len(spec) == 25
    assert np.all(spec.lam[:, 0] <= 5.0)
    ms = spec.lam[:, 1]
    for m in range(1, 5):
        assert np.sum(ms == m) == np.sum(ms == -m)
    assert len({tuple(q) for q in spec.quantum}) == len(spec)
    assert np.all(spec.norm_cert <= 1e-8)


def test_sphere_cumulative_counts(small_sphere_spectrum):
    lam = small_sphere_spectrum.lam[:, 0]
    for L in range(0, 7):
        assert np.sum(lam <= np.sqrt(L * (L + 1)) + 1e-3) == (L + 1) ** 2


def test_completeness_margin(sphere_profile):
    a = build_sor_spectrum(sphere_profile, 6.0, 512)
    b = build_sor_spectrum(sphere_profile, 6.0, 512, channel_margin=4)
    assert len(a) == len(b)
    assert b.channel_range[1] == a.channel_range[1] + 2


def test_eigenfunction_node_and_shape(sphere4096):
    pair = solve_radial_channel(sphere4096, 0, 1.5, 4096)[1]  # l = 1
    assert abs(eval_eigenfunction(pair, [np.pi / 2, 0.0])) <= 1e-6
    # normalised l=1, m=0 harmonic: sqrt(3/(4 pi)) cos(sigma)
    for s in (0.3, 1.0, 2.5):
        val = eval_eigenfunction(pair, [s, 0.0]).real
        assert abs(val) == pytest.approx(np.sqrt(3 / (4 * np.pi)) * abs(np.cos(s)), rel=1e-5)


def test_eigenfunction_modulus_independent_of_theta(small_sphere_spectrum):
    pair = small_sphere_spectrum.pair(5)
    mods = [abs(eval_eigenfunction(pair, [1.1, t])) for t in np.linspace(0, 6, 7)]
    np.testing.assert_allclose(mods, mods[0], rtol=1e-14)


def test_eigenfunction_domain(small_sphere_spectrum):
    with pytest.raises(DomainError):
        eval_eigenfunction(small_sphere_spectrum.pair(0), [4.0, 0.0])


def test_orthonormality(rng):
    prof = builtin_profile("bump", (0.2,), grid_size=1024)
    pairs = solve_radial_channel(prof, 3, 40.0, 1024)
    h = prof.L / 1024
    s = (np.arange(1024) + 0.5) * h
    w = prof.a(s) * h
    F = np.stack([p.radial_samples for p in pairs])
    idx = rng.choice(len(pairs), size=(50, 2))
    for i, j in idx:
        assert np.sum(F[i] * F[j] * w) == pytest.approx(float(i == j), abs=1e-6)


def test_grid_convergence_order():
    """Eigenvalue drift between N and 2N decays like N^-2."""
    Ns = [256, 512, 1024, 2048, 4096]
    lams = [np.array([p.lam[0] for p in solve_radial_channel(
        builtin_profile("sphere", grid_size=N), 1, 6.0, N, richardson=False)]) for N in Ns]
    k = min(len(v) for v in lams)
    drift = [np.max(np.abs(lams[i + 1][:k] - lams[i][:k])) for i in range(len(Ns) - 1)]
    order = -np.polyfit(np.log(Ns[:-1]), np.log(drift), 1)[0]
    assert 1.8 <= order <= 2.2


def test_export_import_round_trip(tmp_path, small_sphere_spectrum):
    path = small_sphere_spectrum.export(tmp_path / "s.csv")
    text = path.read_bytes()
    assert b"\r\n" not in text and text.splitlines()[0].startswith(b"# system: sor")
    back = import_spectrum(path)
    np.testing.assert_array_equal(back.lam, small_sphere_spectrum.lam)
    np.testing.assert_array_equal(back.quantum, small_sphere_spectrum.quantum)
    assert back.samples is not None
    np.testing.assert_array_equal(back.pair(7).radial_samples,
                                  small_sphere_spectrum.pair(7).radial_samples)


def test_torus_export_import(tmp_path):
    spec = torus_box_spectrum(2, 3)
    back = import_spectrum(spec.export(tmp_path / "t.csv"))
    np.testing.assert_array_equal(back.quantum, spec.quantum)
