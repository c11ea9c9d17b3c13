import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liabil.biprobit import ModelSpec, fit
from liabil.polygenic import _grads, components_to_correlations, heritability, polygenic_estimate
from liabil.simulate import design, run_replication_study, simulate_cohort, true_values


def log_var(props):
    """Log-variances relative to E for proportions ending with E."""
    *rest, e = props
    return [math.log(p / e) for p in rest]


def test_equal_thirds():
    rmz, rdz, p = components_to_correlations(log_var([1 / 3, 1 / 3, 1 / 3]), "AC")
    assert round(rmz, 3) == 0.667 and round(rdz, 3) == 0.500
    assert p["D"] == 0.0 and sum(p.values()) == pytest.approx(1.0)


def test_high_additive():
    rmz, rdz, _ = components_to_correlations(log_var([0.6, 0.2, 0.2]), "AC")
    assert rmz == pytest.approx(0.8) and rdz == pytest.approx(0.5)


def test_ade_with_zero_dominance_is_ae():
    a = components_to_correlations({"A": 0.3, "D": -40.0}, "AD")
    b = components_to_correlations({"A": 0.3}, "A")
    assert a[0] == pytest.approx(b[0], abs=1e-15) and a[1] == pytest.approx(b[1], abs=1e-15)


def test_wrong_length_rejected():
    with pytest.raises(ValueError):
        components_to_correlations([0.0], "AC")


@given(st.lists(st.floats(-8, 8), min_size=2, max_size=2), st.sampled_from(["AC", "AD"]))
@settings(max_examples=200, deadline=None)
def test_mz_correlation_dominates(lv, comps):
    rmz, rdz, p = components_to_correlations(lv, comps)
    assert rmz >= rdz - 1e-15
    assert 0 <= rdz <= rmz <= 1
    assert sum(p.values()) == pytest.approx(1.0)


def test_proportion_gradients_match_differences(rng):
    th = rng.normal(size=2)
    p, dp, pe, dpe = _grads(th)
    h = 1e-6
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fd = (_grads(th + e)[0] - _grads(th - e)[0]) / (2 * h)
        assert np.allclose(dp[:, k], fd, atol=1e-9)
        assert dpe[k] == pytest.approx((_grads(th + e)[2] - _grads(th - e)[2]) / (2 * h), abs=1e-9)


def _fake_fit(comps, props):
    data = simulate_cohort(design("baseline-equal", n_mz=200, n_dz=200, seed=4, censoring="none"))
    f = fit(ModelSpec.polygenic(comps, math.inf), data)
    idx = [f.names.index(f"log_var_{c}") for c in comps.replace("E", "")]
    f.theta[idx] = log_var(props)
    return f


def test_heritability_examples():
    f = _fake_fit("ACE", [0.5, 0.25, 0.25])
    assert heritability(f).value == pytest.approx(0.5)
    est = polygenic_estimate(f)
    assert est.proportions["E"].value == pytest.approx(0.25)
    assert est.rho_MZ.value == pytest.approx(0.75)
    e_only = fit(ModelSpec.polygenic("E", math.inf), simulate_cohort(design("baseline-equal", n_mz=100, n_dz=100, seed=4)))
    pe = polygenic_estimate(e_only)
    assert pe.H2.value == 0.0 and pe.proportions["E"].value == 1.0


def test_intervals_respect_unit_interval():
    f = _fake_fit("ACE", [0.02, 0.01, 0.97])
    for q, _, e in polygenic_estimate(f).rows():
        lo = -1.0 if q == "rho" else 0.0
        assert lo <= e.lower <= e.value <= e.upper <= 1.0


def test_needs_polygenic_fit(small_cohort):
    with pytest.raises(ValueError):
        polygenic_estimate(fit(ModelSpec.biprobit(90.0), small_cohort))


def test_flexible_fit_recovers_mapped_correlations():
    cfg = design("baseline-equal", n_mz=4000, n_dz=4000, var_a=0.5, var_c=0.25, censoring="none", seed=21)
    f = fit(ModelSpec.biprobit(math.inf), simulate_cohort(cfg))
    rmz, rdz, _ = components_to_correlations(log_var([0.5, 0.25, 0.25]), "AC")
    se = f.se
    assert abs(math.tanh(f.theta[1]) - rmz) < 3 * se[1] * (1 - rmz**2)
    assert abs(math.tanh(f.theta[2]) - rdz) < 3 * se[2] * (1 - rdz**2)


def test_interval_width_scales_with_root_n():
    widths = []
    for n in (1000, 4000, 16000):
        cfg = design("baseline-equal", n_mz=n, n_dz=n, seed=8)
        from liabil.censoring import fit_weibull_ph
        d = simulate_cohort(cfg)
        pe = polygenic_estimate(fit(ModelSpec.polygenic("ACE", math.inf), d, fit_weibull_ph(d)))
        widths.append(pe.H2.upper - pe.H2.lower)
    for a, b in zip(widths, widths[1:]):
        assert a / b == pytest.approx(2.0, rel=0.25)


def test_ade_heritability_recovered_over_replications():
    cfg = design("registry", censoring="none", seed=3)
    s = run_replication_study(cfg, ["naive"], n_reps=20)
    row = s.get("naive", "H2")
    vals_sd = math.sqrt(row.mse100 / 100)
    assert row.n_failed == 0
    assert abs(row.mean - true_values(cfg)["H2"]) < 3 * vals_sd / math.sqrt(row.n_ok) + 1e-12
