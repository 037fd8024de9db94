import math
import warnings

import numpy as np
import pytest

from adiabatic_lab.adiabatic import (
    DefectTable,
    SpectralRay,
    adiabatic_generator,
    defect_sweep,
    extended_criterion,
    intertwining_defect,
    nogap_comparison_generator,
    pointwise_defect,
    rate_fit,
    resolvent_ray_profile,
    sector_constants,
)
from adiabatic_lab.errors import InsufficientDataError, InvalidInputError, InvalidRayError
from adiabatic_lab.evolution import integrate
from adiabatic_lab.family import ScalarFamily, constant_family
from adiabatic_lab.gallery import get_example
from adiabatic_lab.riesz import analytic_projection_family, constant_projection_family
from conftest import late_rotation

TS = [2.0 ** k for k in range(4, 11)]


def _projfam(eid):
    ex = get_example(eid)
    return ex, analytic_projection_family(ex.projection, 257)


# ------------------------------------------------------------- rate fits


def test_rate_fit_exact_power_laws():
    fit = rate_fit([(T, 7 / T) for T in TS])
    assert abs(fit.slope + 1) < 1e-12
    assert fit.n == 7 and fit.param_range == (16.0, 1024.0)
    assert abs(rate_fit([(T, 3 / T ** 2) for T in TS]).slope + 2) < 1e-12


def test_rate_fit_wobbly_power_law():
    fit = rate_fit([(T, (1 / T) * (1 + 0.1 * math.sin(math.log(T)))) for T in TS])
    assert abs(fit.slope + 1) <= 0.05


def test_rate_fit_drops_bad_rows():
    rows = [(T, 1 / T) for T in TS[:5]] + [(TS[5], 0.0), (TS[6], math.nan)]
    with pytest.warns(RuntimeWarning):
        fit = rate_fit(rows)
    assert fit.n == 5 and fit.excluded == (TS[5], TS[6])


def test_rate_fit_needs_four_rows():
    with pytest.raises(InsufficientDataError):
        rate_fit([(16, 1.0), (32, 0.5), (64, 0.25)])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(InsufficientDataError):
            rate_fit([(16, 1.0), (32, 0.5), (64, 0.25), (128, -1.0)])


# ------------------------------------------------------ comparison dynamics


def test_constant_projection_gives_zero_defect():
    A = np.diag([0.0, -1.0, -2.0]) + np.diag([1.0, 0.5], 1)
    fam = constant_family(A)
    P = np.diag([1.0, 0, 0])
    tables = defect_sweep(fam, constant_projection_family(P), [4, 8, 16, 32], timegrid=9, metrics=("proj", "evolution"))
    for tb in tables:
        assert np.all(tb.values <= 50 * 1e-10)


@pytest.mark.parametrize("T", [16.0, 64.0])
def test_adiabatic_evolution_intertwines(T):
    ex, pf = _projfam("bsp-5.1")
    gen = adiabatic_generator(ex.family, pf, T)
    pairs = [(s, t) for s in (0.0, 0.25, 0.6) for t in np.linspace(s, 1, 5)]
    assert intertwining_defect(gen, pf, pairs) <= 1e-7


def test_adiabatic_generator_checks_inputs():
    ex, pf = _projfam("bsp-5.1")
    with pytest.raises(InvalidInputError):
        adiabatic_generator(get_example("bsp-5.7").family, pf, 4.0)


def test_failure_example_lower_bound():
    ex, pf = _projfam("bsp-5.7")
    e1 = np.array([1.0, 0.0])
    for T in (8.0, 32.0):
        assert pointwise_defect(ex.family, pf, T, 0.25, e1) >= 1 + T / 8 - 1e-6


def test_nogap_comparison_trivial_case():
    P = np.diag([1.0, 0.0])
    V = integrate(nogap_comparison_generator(ScalarFamily(lambda t: 0.0), constant_projection_family(P), 50.0), 1.0, 0.0, [0.5, 1.0], np.eye(2))
    assert np.allclose(V, np.eye(2), atol=1e-14)


def test_nogap_comparison_norm_bound():
    ex, pf = _projfam("bsp-5.1")
    grid = np.linspace(0, 1, 33)
    c = max(np.linalg.norm(dP @ P - P @ dP, 2) for P, dP in map(pf.at, grid))
    lam = ScalarFamily(lambda t: -0.2 + 0.3j * t)
    gen = nogap_comparison_generator(lam, pf, 40.0)
    Vs = integrate(gen, 1.0, 0.0, grid, np.eye(3))
    for t, V in zip(grid, Vs):
        assert np.linalg.norm(V, 2) <= math.exp(c * t) * (1 + 1e-9)
        P = pf.at(t)[0]
        assert np.linalg.norm(P @ V - V @ pf.at(0.0)[0], 2) <= 50 * 1e-10


def test_nogap_defect_decreases_without_gap():
    ex, pf = _projfam("bsp-6.2")
    tb, = defect_sweep(ex.family, pf, [16, 64, 256, 1024], metrics=("nogap",), lam=ex.eigencurve)
    assert np.all(np.diff(tb.values) < 0)


def test_nogap_needs_curve():
    ex, pf = _projfam("bsp-6.2")
    with pytest.raises(InvalidInputError):
        defect_sweep(ex.family, pf, [16], metrics=("nogap",))


def test_unknown_metric_and_bad_grid():
    ex, pf = _projfam("bsp-5.1")
    with pytest.raises(InvalidInputError):
        defect_sweep(ex.family, pf, [16], metrics=("bogus",))
    with pytest.raises(InvalidInputError):
        defect_sweep(ex.family, pf, [32, 16])


def test_evolution_defect_dominates_projection_defect():
    ex, pf = _projfam("bsp-5.1")
    proj, evol = defect_sweep(ex.family, pf, [16, 64, 256], metrics=("proj", "evolution"))
    grid = np.linspace(0, 1, 65)
    scale = max(np.linalg.norm(np.eye(3) - pf.at(t)[0], 2) for t in grid) * np.linalg.norm(pf.at(0.0)[0], 2)
    assert np.all(evol.values >= proj.values / scale - 1e-9)


def test_sweep_is_deterministic_and_serialises():
    ex, pf = _projfam("bsp-5.1")
    a = defect_sweep(ex.family, pf, [16, 32], metrics=("proj",))[0]
    b = defect_sweep(ex.family, pf, [16, 32], metrics=("proj",), jobs=2)[0]
    assert a.to_csv() == b.to_csv()
    assert a.to_csv().splitlines()[0] == "metric,T,value,t_argmax,status"
    assert isinstance(a, DefectTable) and a.to_dict()["rows"][0]["status"] == "ok"


# ---------------------------------------------- shifted families (decay)


def test_shifted_family_decays_at_least_like_one_over_T():
    fam, pf = late_rotation(0.0, -1.0)
    tb, = defect_sweep(fam, pf, [4, 8, 16, 32, 64], metrics=("evolution",))
    assert rate_fit(tb).slope <= -1.0


def test_shifted_family_with_late_motion_decays_exponentially():
    r0, omega = 0.5, -1.0
    fam, pf = late_rotation(r0, omega)
    tb, = defect_sweep(fam, pf, [4, 8, 12, 16, 24], metrics=("evolution",))
    rate = np.polyfit(tb.params, np.log(tb.values), 1)[0]
    assert rate <= -0.9 * r0 * abs(omega)


# ------------------------------------------------------------- ray profile


def test_sector_constants():
    eps0p, M0 = sector_constants(0.2, math.pi / 2)
    assert eps0p == pytest.approx(0.1) and M0 == pytest.approx(1.0)
    with pytest.raises(InvalidInputError):
        sector_constants(0.2, 0.0)


def test_unweighted_profile_of_skew_family_is_at_most_one():
    ex = get_example("bsp-6.5")
    ray = SpectralRay(ex.theta0, (1e-1, 1e-2, 1e-3), ex.eigencurve)
    prof = resolvent_ray_profile(ex.family, ray, grid=129)
    assert np.all(prof.values <= 1 + 1e-12)
    assert prof.to_csv().startswith("eps,sup_value,t_argmax,mean_value\n")


def test_weighted_profile_mean_decreases():
    ex, pf = _projfam("bsp-6.2")
    ray = SpectralRay(ex.theta0, (1e-1, 1e-2, 1e-3, 1e-4), ex.eigencurve)
    prof = resolvent_ray_profile(ex.family, ray, pf, weighted=True)
    assert np.all(np.diff(prof.mean_values) < 0)


def test_weighted_profile_reaches_one_percent():
    # Sup over t of the weighted profile at eps = 1e-4, taken literally.
    ex, pf = _projfam("bsp-6.2")
    ray = SpectralRay(ex.theta0, (1e-1, 1e-2, 1e-3, 1e-4), ex.eigencurve)
    prof = resolvent_ray_profile(ex.family, ray, pf, weighted=True)
    assert np.all(np.diff(prof.values) <= 0)
    assert prof.values[-1] <= 0.01


def test_ray_validation():
    ex = get_example("bsp-6.5")
    with pytest.raises(InvalidInputError):
        SpectralRay(0.0, (1e-3, 1e-2), ex.eigencurve)
    with pytest.raises(InvalidInputError):
        resolvent_ray_profile(ex.family, SpectralRay(0.0, (1e-2,), ex.eigencurve), weighted=True)
    lam = ScalarFamily(lambda t: 0.0)
    with pytest.raises(InvalidRayError):
        # theta0 = pi/2 walks along the imaginary axis into the other eigenvalue
        resolvent_ray_profile(constant_family(np.diag([0.0, 1j * 1e-2])), SpectralRay(math.pi / 2, (1e-2,), lam))


# ------------------------------------------------------ extended criterion


def test_extended_criterion_vanishes_in_kernel_case():
    ex, pf = _projfam("bsp-6.2")
    tb = extended_criterion(ex.family, ex.eigencurve, pf, [16, 64, 256])
    assert np.all(tb.values <= 1e-9)


def test_extended_criterion_bound_consistency():
    ex, pf = _projfam("bsp-6.6")
    tb = extended_criterion(ex.family, ex.eigencurve, pf, [16, 64])
    bound, resid = np.array(tb.extra["bound"]), np.array(tb.extra["identity_residual"])
    assert np.all(resid <= 1e-6)
    assert np.all(tb.values <= bound + 1e-6)
