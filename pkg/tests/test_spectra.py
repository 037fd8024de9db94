import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from adiabatic_lab.errors import InvalidInputError
from adiabatic_lab.family import (
    conjugate_family,
    constant_family,
    lambda_d,
    linear_family,
    plane_rotation,
    shift_block,
)
from adiabatic_lab.gallery import get_example
from adiabatic_lab.linop import eigvals
from adiabatic_lab.spectra import SpectralWindow, gap_profile, hausdorff, split_spectrum, stability_probe

from conftest import skew_hermitian


def test_constant_family_uniform_gap():
    prof = gap_profile(constant_family(np.diag([0.0, -1.0])), SpectralWindow.disk(0, 0.5), 33)
    np.testing.assert_allclose(prof.gaps, 1.0)
    assert prof.uniform and prof.crossings == [] and not prof.accumulating
    n_in, n_out = prof.counts
    assert set(n_in) == {1} and set(n_out) == {1}


def test_finitely_many_crossings():
    ex = get_example("bsp-5.6")
    prof = gap_profile(ex.family, ex.window, 257)
    assert not prof.uniform
    assert prof.min_gap == 0.0
    np.testing.assert_allclose(prof.crossings, ex.params["crossings"], atol=1e-7)
    assert not prof.accumulating
    # gap really vanishes at the crossing times
    for tc in ex.params["crossings"]:
        assert split_spectrum(ex.family(tc), ex.window, tc).gap < 1e-6


def test_accumulating_crossings():
    prof = gap_profile(get_example("bsp-6.2").family, get_example("bsp-6.2").window, 257)
    assert prof.accumulating
    assert len(prof.crossings) >= 5
    # they pile up towards t = 0
    assert min(prof.crossings) < 0.05


def test_gap_profile_csv():
    prof = gap_profile(constant_family(np.diag([0.0, -1.0])), SpectralWindow.disk(0, 0.5), 3)
    lines = prof.to_csv().splitlines()
    assert lines[0] == "t,gap,n_in,n_out"
    assert lines[1] == "0.0,1.0,1,1"


def test_gap_profile_rejects_bad_grid():
    with pytest.raises(InvalidInputError):
        gap_profile(constant_family(np.eye(2)), SpectralWindow.disk(1, 0.5), [0.5, 0.2])


def test_windows():
    assert SpectralWindow.disk(0, 1).contains(0.5j)
    assert not SpectralWindow.halfplane(-0.5).contains(-1.0)
    assert SpectralWindow.halfplane(0.0, math.pi / 2).contains(1j)
    tl = SpectralWindow.target_list([1, 2j], 0.1)
    assert tl.contains(2.05j) and not tl.contains(1.5)
    with pytest.raises(InvalidInputError):
        SpectralWindow.disk(0, 0)
    with pytest.raises(InvalidInputError):
        SpectralWindow.guide(lambda t: 0).contains(0)
    for w in (SpectralWindow.disk(1j, 2), SpectralWindow.halfplane(1.0), tl, SpectralWindow.guide(abs, 3)):
        assert w.describe()["kind"] == w.kind


def test_guide_window_nearest():
    # guide at -1: the two nearest are -1 and one of the tied {0, -2}
    mask = SpectralWindow.guide(lambda t: -t, 2).split(np.array([0, -1, -2.5, 5]), 1.0)
    assert mask.tolist() == [True, True, False, False]


@given(st.floats(0.0, 1.0))
def test_gap_similarity_invariance(t):
    base = linear_family(np.array([[0, 1, 0], [0, -1, 0], [0, 0, -2.0]]), np.diag([0, 0, 0.5]))
    R = plane_rotation(3, 0, 2, lambda s: 2 * math.pi * s, 2 * math.pi)
    fam = conjugate_family(base, R)
    w = SpectralWindow.disk(0, 0.5)
    assert abs(split_spectrum(fam(t), w, t).gap - split_spectrum(base(t), w, t).gap) < 1e-10


def test_hausdorff_values():
    assert hausdorff([1, 2j], [2j, 1]) == 0.0
    assert hausdorff([0], [3]) == 3.0
    assert hausdorff([0, 1], [0.5]) == 0.5
    with pytest.raises(InvalidInputError):
        hausdorff([], [1])


def test_spectrum_continuity():
    # Lipschitz proxy: spectral motion shrinks with the time step
    A1 = np.array([[0.3, 1, 0], [0, -0.2, 1], [0.5, 0, 1j]])
    fam = linear_family(np.diag([0.0, -1.0, -2.0]), A1)
    lip = np.linalg.norm(A1, 2)
    t = 0.4
    for h in (1e-2, 1e-3, 1e-4):
        d = hausdorff(eigvals(fam(t)), eigvals(fam(t + h)))
        # simple eigenvalues move at most cond * ||A'|| * h to first order
        assert 0 < d <= 3 * lip * h


def test_stability_skew():
    rng = np.random.default_rng(1)
    H0, H1 = skew_hermitian(rng, 3), skew_hermitian(rng, 3)
    rep = stability_probe(linear_family(H0, H1), 32, seed=2)
    assert abs(rep.omega_prime) < 1e-10
    assert abs(rep.M_hat - 1) < 1e-8
    assert rep.worst_norm <= 1 + 1e-8


def test_stability_critical_shift():
    R = plane_rotation(2, 0, 1, lambda t: 2 * math.pi * t, 2 * math.pi)
    fam = conjugate_family(constant_family(shift_block(lambda_d(2), 2)), R)
    rep = stability_probe(fam, 32, seed=0)
    assert abs(rep.omega_prime) < 1e-9
    assert rep.worst_norm <= 1 + 1e-8


def test_stability_growth_example():
    rep = stability_probe(get_example("bsp-5.7", lam=1.0).family, 16, seed=0)
    assert abs(rep.omega_prime - 1.0) < 1e-9
    assert rep.omega_hat <= rep.omega_prime + 1e-12


def test_stability_reproducible():
    fam = get_example("bsp-5.3").family
    assert stability_probe(fam, 8, seed=4).to_dict() == stability_probe(fam, 8, seed=4).to_dict()
    with pytest.raises(InvalidInputError):
        stability_probe(fam, 0)
