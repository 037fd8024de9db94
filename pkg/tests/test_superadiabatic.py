import numpy as np
import pytest

from adiabatic_lab.adiabatic import defect_sweep, rate_fit
from adiabatic_lab.errors import InvalidInputError, NeumannConditionError
from adiabatic_lab.evolution import DEFAULT_TOL, integrate
from adiabatic_lab.family import OperatorFamily, constant_family
from adiabatic_lab.gallery import get_example
from adiabatic_lab.riesz import analytic_projection_family, constant_projection_family
from adiabatic_lab.spectra import SpectralWindow
from adiabatic_lab.superadiabatic import (
    build_E_chain,
    eps0_prime,
    grid_derivative,
    neumann_margin,
    superadiabatic_comparison_generator,
    superadiabatic_defects,
    superadiabatic_projection,
)
from conftest import late_rotation

EPS = [2.0 ** -k for k in range(3, 9)]


@pytest.fixture(scope="module")
def chain71():
    ex = get_example("bsp-7.1")
    pf = analytic_projection_family(ex.projection, 257)
    return ex, build_E_chain(ex.family, pf, 3, window=ex.window)


def _constant_setup():
    A = np.array([[0.0, 0, 0], [0, -1, 0.5], [0, 0, -2]])
    P = np.diag([1.0, 0.0, 0.0])
    fam = constant_family(A)
    return fam, build_E_chain(fam, constant_projection_family(P), 3, grid=33, window=SpectralWindow.disk(0.0, 0.25))


def test_grid_derivative_is_fourth_order():
    for n in (33, 65):
        g = np.linspace(0, 1, n)
        F = np.sin(3 * g)[:, None, None] * np.ones((1, 2, 2))
        err = np.abs(grid_derivative(F, g)[:, 0, 0] - 3 * np.cos(3 * g)).max()
        assert err < 2e-4 if n == 33 else err < 2e-5
    with pytest.raises(InvalidInputError):
        grid_derivative(np.zeros((6, 1, 1)), np.array([0, 0.1, 0.2, 0.4, 0.5, 1.0]))


def test_constant_projection_chain_vanishes():
    _, chain = _constant_setup()
    assert np.abs(chain.E[1:]).max() == 0.0


def test_chain_vanishes_off_the_support_of_P_prime():
    fam, pf = late_rotation(0.5)
    chain = build_E_chain(fam, pf, 3, window=SpectralWindow.disk(0.0, 0.25))
    off = chain.grid < 0.48
    assert np.abs(chain.E[1:, off]).max() == 0.0
    sp = superadiabatic_projection(chain, 0.1)
    assert np.abs(sp.P[off] - chain.P[off]).max() <= 1e-9


def test_chain_identities(chain71):
    ex, chain = chain71
    assert np.all(chain.algebra_residuals() <= 1e-7)
    c2 = chain.truncated(2)
    scale = np.maximum(1.0, c2.sup_norms()[1:])
    assert np.all(c2.derivative_residuals() <= 1e-5 * scale)
    assert np.allclose(chain.E[0], chain.P)


def test_needs_a_window():
    ex = get_example("bsp-7.1")
    with pytest.raises(InvalidInputError):
        build_E_chain(ex.family, analytic_projection_family(ex.projection, 33), 2, grid=33)


def test_order_one_gives_P(chain71):
    _, chain = chain71
    sp = superadiabatic_projection(chain.truncated(1), 0.2)
    assert np.array_equal(sp.P, chain.P)
    assert neumann_margin(chain.truncated(1), 0.2) == 0.0


def test_projection_deviation_is_first_order(chain71):
    _, chain = chain71
    c2 = chain.truncated(2)
    ratios = [np.abs(superadiabatic_projection(c2, e).P - c2.P).max() / e for e in EPS]
    assert max(ratios) <= 3 * min(ratios)
    assert superadiabatic_projection(c2, EPS[-1]).idempotency_defect() <= 1e-10


def test_admissibility_checks(chain71):
    _, chain = chain71
    c2 = chain.truncated(2)
    e0 = eps0_prime(c2)
    assert 0 < e0 < 1
    assert neumann_margin(c2, 0.99 * e0) <= 0.5
    with pytest.raises(NeumannConditionError):
        superadiabatic_projection(c2, 1.5 * e0, check="neumann")
    with pytest.raises(InvalidInputError):
        superadiabatic_projection(c2, 0.1, check="bogus")
    with pytest.raises(InvalidInputError):
        superadiabatic_projection(c2, 0.0)


def test_similarity_covariance(chain71):
    ex, chain = chain71
    S = np.array([[1.0, 0.3, 0.0], [0.0, 1.0, -0.2], [0.1, 0.0, 1.0]])
    Si = np.linalg.inv(S)
    fam = OperatorFamily(3, lambda t: Si @ ex.family(t) @ S)

    def proj(t):
        P, dP = ex.projection(t)
        return Si @ P @ S, Si @ dP @ S

    other = build_E_chain(fam, analytic_projection_family(proj, 257), 2, window=ex.window)
    c2 = chain.truncated(2)
    assert np.abs(Si @ c2.E @ S - other.E).max() <= 1e-8
    a = superadiabatic_projection(c2, 2 ** -4).P
    b = superadiabatic_projection(other, 2 ** -4).P
    assert np.abs(Si @ a @ S - b).max() <= 1e-8


def test_constant_projection_defects_vanish():
    fam, chain = _constant_setup()
    for tb in superadiabatic_defects(fam, chain, [0.25, 0.1, 0.05]):
        assert np.all(tb.values <= 50 * DEFAULT_TOL)


def test_comparison_evolution_intertwines(chain71):
    _, chain = chain71
    gen, proj = superadiabatic_comparison_generator(chain.truncated(2), 2 ** -5)
    ts = np.linspace(0, 1, 9)
    V = integrate(gen, 1.0, 0.0, ts, np.eye(3))
    P0 = proj(0.0)[0]
    assert max(np.linalg.norm(proj(t)[0] @ W - W @ P0, 2) for t, W in zip(ts, V)) <= 100 * DEFAULT_TOL


def test_third_order_never_worse_at_small_eps(chain71):
    ex, chain = chain71
    eps = [2.0 ** -k for k in range(5, 9)]
    m2, = superadiabatic_defects(ex.family, chain.truncated(2), eps, metrics=("super-proj",))
    m3, = superadiabatic_defects(ex.family, chain, eps, metrics=("super-proj",))
    assert np.all(m3.values <= m2.values)


def test_analytic_family_beats_cubic_order():
    ex = get_example("bsp-5.1")
    pf = analytic_projection_family(ex.projection, 257)
    chain = build_E_chain(ex.family, pf, 4, window=ex.window, analytic=True)
    eps = 2.0 ** -7
    for tb in superadiabatic_defects(ex.family, chain, [eps], metrics=("super-proj", "super-reverse", "super-evolution")):
        assert tb.values[0] < eps ** 3


def test_unknown_metric(chain71):
    ex, chain = chain71
    with pytest.raises(InvalidInputError):
        superadiabatic_defects(ex.family, chain, [0.1], metrics=("proj",))


def test_second_order_evolution_defect_matches_gap_rate(chain71):
    # Second-order comparison evolution against the first-order adiabatic one, both as rates in T = 1/eps.
    ex, chain = chain71
    eps = [2.0 ** -k for k in range(5, 9)]
    pf = analytic_projection_family(ex.projection, 257)
    first, = defect_sweep(ex.family, pf, [1 / e for e in eps], metrics=("evolution",))
    second, = superadiabatic_defects(ex.family, chain.truncated(2), eps, metrics=("super-evolution",))
    s1 = rate_fit(first).slope
    s2 = -rate_fit(second).slope
    assert abs(s1 + 1) <= 0.2
    assert abs(s2 + 1) <= 0.2
