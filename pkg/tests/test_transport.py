import numpy as np
import pytest

from adiabatic_lab.errors import ConfigError, InvalidInputError
from adiabatic_lab.riesz import contour_for_split, riesz_projection
from adiabatic_lab.transport import (
    CrossSectionSchedule,
    LeadingProjection,
    discretize_slab,
    leading_eigenpair,
    leading_eigenvalue,
    positive_count,
    transport_adiabatic_sweep,
    transport_family,
)


@pytest.fixture(scope="module")
def disc():
    return discretize_slab(1.0, 16, 6)


def test_scattering_is_an_orthogonal_projection(disc):
    B = disc.B
    assert np.abs(B @ B - B).max() <= 1e-12
    assert np.abs(B - B.T).max() == 0.0
    flat = np.repeat(np.sqrt(disc.w), disc.n_x) * np.tile(np.linspace(1, 2, disc.n_x), disc.n_mu)
    assert np.allclose(B @ flat, flat, atol=1e-13)


def test_streaming_is_dissipative_and_not_normal(disc):
    A0 = disc.A0
    assert np.linalg.eigvalsh(0.5 * (A0 + A0.T)).max() <= 1e-9
    assert np.linalg.norm(A0.T @ A0 - A0 @ A0.T) > 1e-3 * np.linalg.norm(A0, 2) ** 2


def test_reflection_symmetry(disc):
    Pm = np.eye(disc.dim)[disc.perm]
    for M in (disc.A0, disc.B):
        assert np.abs(Pm @ M @ Pm.T - M).max() <= 1e-12
    Q = disc.even_basis
    assert np.allclose(Q.T @ Q, np.eye(Q.shape[1]))


def test_leading_eigenvalue_monotone_and_dominated(disc):
    betas = [leading_eigenvalue(disc, c) for c in (0.5, 1.0, 1.5)]
    assert betas[0] < betas[1] < betas[2]
    for c, b in zip((0.5, 1.0, 1.5), betas):
        assert b <= c + 1e-9


def test_leading_eigenvalue_is_simple(disc):
    A = disc.A0 + 0.8 * disc.B
    vals = np.linalg.eigvals(A)
    k = int(np.argmax(vals.real))
    C = contour_for_split(vals[[k]], np.delete(vals, k))
    P = riesz_projection(A, C)
    assert round(float(np.trace(P).real)) == 1
    assert np.linalg.matrix_rank(P, tol=1e-8) == 1


def test_leading_eigenvector_is_positive(disc):
    le = leading_eigenpair(disc, 0.8)
    v = np.real_if_close(le.vector)
    assert np.all(np.real(v) > 1e-9) and np.abs(np.imag(le.vector)).max() <= 1e-9
    assert le.gap > 0


def test_subcritical_schedule_has_nonpositive_leading_eigenvalue(disc):
    sched = CrossSectionSchedule.from_expr("0.6 + 0.3*t**2", "1.0")
    fam = transport_family(disc, sched)
    for t in np.linspace(0, 1, 9):
        assert leading_eigenvalue(disc, sched.c(t)) - sched.s(t) <= 0
        assert np.linalg.eigvals(fam(t)).real.max() <= 1e-12


def test_positive_count_grows_with_c(disc):
    counts = [positive_count(disc, c) for c in (0.05, 0.5, 1.0, 2.0, 5.0)]
    assert counts[0] == 0 and counts[1] == 1
    assert all(a <= b for a, b in zip(counts, counts[1:]))


def test_schedule_validation():
    with pytest.raises(ConfigError):
        CrossSectionSchedule.from_expr("1.2", "1.0").check()
    with pytest.raises(ConfigError):
        CrossSectionSchedule.from_expr("-0.1 + t", "1.0").check()
    with pytest.raises(InvalidInputError):
        discretize_slab(1.0, 16, 5)
    with pytest.raises(InvalidInputError):
        discretize_slab(0.0, 16, 6)


def test_projection_interpolant(disc):
    lp = LeadingProjection(disc, 0.6, 0.9)
    P, dP = lp(0.75, 1.0)
    assert np.abs(P @ P - P).max() <= 1e-9
    h = 1e-5
    fd = (lp(0.75 + h)[0] - lp(0.75 - h)[0]) / (2 * h)
    assert np.abs(fd - dP).max() <= 1e-6
    M = lp.A0e + 0.75 * lp.Be
    assert np.abs(M @ P - P @ M).max() <= 1e-8


def test_constant_schedule_has_no_defect(disc):
    sched = CrossSectionSchedule.from_expr("0.7", "1.0")
    sw = transport_adiabatic_sweep(disc, sched, [16, 32, 64, 128])
    assert np.all(sw.table.values <= 1e-10)
    assert sw.fit is None


def test_magnus_agrees_with_adaptive_sweep():
    small = discretize_slab(1.0, 8, 4)
    sched = CrossSectionSchedule.from_expr("0.6 + 0.3*t**2", "1.0")
    a = transport_adiabatic_sweep(small, sched, [16, 32], step=0.05, fit=False)
    b = transport_adiabatic_sweep(small, sched, [16, 32], method="rk", fit=False)
    assert np.allclose(a.table.values, b.table.values, rtol=2e-2)


def test_unknown_method(disc):
    with pytest.raises(InvalidInputError):
        transport_adiabatic_sweep(disc, CrossSectionSchedule.from_expr("0.7", "1.0"), [16], method="euler")
