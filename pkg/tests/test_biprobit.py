import math

import numpy as np
import pytest

from liabil.biprobit import (Design, FitError, IdentifiabilityError, ModelSpec, aic_ipcw, expected_information, fit,
                             loglik_and_score, make_design, pair_loglik_terms, variance_if2, variance_if3, wald_test)
from liabil.biprobit import test_genetic_effect as genetic_wald
from liabil.biprobit import test_marginal_homogeneity as homogeneity_wald
from liabil.censoring import WeibullCensoring, fit_km, fit_weibull_ph
from liabil.data import classify
from liabil.normal import Phi_inv
from liabil.simulate import design, simulate_cohort

from oracles import five_point, saturated_counts, saturated_loglik, saturated_mle, saturated_vcov

SPECS = [
    ModelSpec.biprobit(90.0),
    ModelSpec.biprobit(90.0, marginals="zygosity"),
    ModelSpec.biprobit(90.0, rho="common"),
    ModelSpec.biprobit(90.0, rho="additive"),
    ModelSpec.polygenic("ACE", 90.0),
    ModelSpec.polygenic("ADE", 90.0),
    ModelSpec.polygenic("AE", 90.0),
]


def one_pair(y, mu=(0.0, 0.0), rho=0.0):
    X = np.ones((1, 1))
    return Design(X, X, np.array([True]), np.array([y]), np.ones(1)), np.array([mu[0], math.atanh(rho)])


def test_trivial_loglik():
    spec = ModelSpec.biprobit(1.0, rho="common")
    model = spec.build(())
    des, theta = one_pair((0, 0))
    ll, U, H = loglik_and_score(model, theta, des)
    assert ll == pytest.approx(math.log(0.25), abs=1e-15)


def test_cell_probabilities_sum_to_one(rng):
    model = ModelSpec.biprobit(1.0, marginals="zygosity").build(("x",))
    n = 200
    X1 = np.column_stack([np.ones(n), rng.normal(size=n)])
    X2 = np.column_stack([np.ones(n), rng.normal(size=n)])
    mz = rng.random(n) < 0.5
    theta = rng.normal(size=model.n_params)
    total = np.zeros(n)
    for y in [(0, 0), (0, 1), (1, 0), (1, 1)]:
        des = Design(X1, X2, mz, np.tile(y, (n, 1)), np.ones(n))
        total += np.exp(pair_loglik_terms(model, theta, des, second=False)[0])
    assert np.max(np.abs(total - 1)) < 1e-12


def _weighted_design(data, spec):
    cls = classify(data, spec.tau, fit_km(data))
    return make_design(data, cls, spec.covariates)[0]


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.label)
def test_score_and_hessian_match_differences(spec, small_cohort, rng):
    des = _weighted_design(small_cohort, spec)
    model = spec.build(())
    for _ in range(5):
        theta = rng.normal(scale=0.5, size=model.n_params)
        theta[0] = rng.uniform(-2.5, -0.5)
        ll, U, H = loglik_and_score(model, theta, des)
        fd = five_point(lambda t: loglik_and_score(model, t, des, second=False)[0], theta, 1e-3)
        assert np.all(np.abs(U - fd) <= 1e-6 * np.maximum(1.0, np.abs(fd)))
        fdH = np.array([five_point(lambda t: loglik_and_score(model, t, des, second=False)[1][k], theta, 1e-3)
                        for k in range(model.n_params)])
        assert np.allclose(H, fdH, rtol=1e-6, atol=1e-6 * np.abs(H).max())


def test_covariate_model_derivatives(covariate_cohort, rng):
    data = covariate_cohort.subset(np.arange(len(covariate_cohort)) % 8 == 0)
    for spec in (ModelSpec.biprobit(95.0, ("X",), "zygosity"), ModelSpec.polygenic("ACE", 95.0, ("X",))):
        des = _weighted_design(data, spec)
        model = spec.build(spec.covariates)
        theta = rng.normal(scale=0.4, size=model.n_params)
        theta[0] = -1.5
        U = loglik_and_score(model, theta, des)[1]
        fd = five_point(lambda t: loglik_and_score(model, t, des, second=False)[0], theta, 1e-3)
        assert np.all(np.abs(U - fd) <= 1e-6 * np.maximum(1.0, np.abs(fd)))


def test_expected_information_is_average_observed(small_cohort):
    spec = ModelSpec.polygenic("ACE", 90.0)
    des = _weighted_design(small_cohort, spec)
    model = spec.build(())
    theta = np.array([-2.0, math.log(0.4), math.log(0.3)])
    n = len(des.w)
    expected = np.zeros((3, 3))
    for y in [(0, 0), (0, 1), (1, 0), (1, 1)]:
        d = Design(des.X1, des.X2, des.mz, np.tile(y, (n, 1)), des.w)
        ll, _, H, _ = pair_loglik_terms(model, theta, d)
        expected -= np.einsum("n,n,npq->pq", des.w, np.exp(ll), H)
    assert np.allclose(expected_information(model, theta, des), expected, rtol=1e-9)


def test_uncensored_fit_equals_closed_form_mle(uncensored):
    tau = 100.0
    cnt = saturated_counts(uncensored, tau)
    mle = saturated_mle(cnt)
    f = fit(ModelSpec.biprobit(tau, marginals="zygosity"), uncensored, None)
    assert f.converged and f.n_used == len(uncensored)
    ref = np.array([mle["MZ"][0], mle["DZ"][0], mle["MZ"][1], mle["DZ"][1]])
    assert np.max(np.abs(f.theta - ref)) < 1e-8
    V = saturated_vcov(cnt, mle)
    assert np.max(np.abs(f.vcov_if2[np.ix_([0, 2], [0, 2])] - V["MZ"])) < 1e-8
    assert np.max(np.abs(f.vcov_if2[np.ix_([1, 3], [1, 3])] - V["DZ"])) < 1e-8
    assert abs(f.vcov_if2[0, 1]) < 1e-12
    ll = saturated_loglik(cnt, mle)
    assert abs(f.aic - (-2 * ll + 2 * 4)) < 1e-8
    assert aic_ipcw(f) == f.aic


def test_newton_history_nondecreasing(cohort):
    cens = fit_weibull_ph(cohort)
    for spec in (ModelSpec.polygenic("ACE", 90.0), ModelSpec.biprobit(90.0, marginals="zygosity")):
        f = fit(spec, cohort, cens, theta0=np.r_[0.5, np.zeros(spec.build(()).n_params - 1)])
        h = np.array(f.history)
        assert f.converged and len(h) > 2
        assert np.all(np.diff(h) >= -1e-12 * np.abs(h[:-1]))


def test_fit_result_invariants(cohort):
    cens = fit_weibull_ph(cohort)
    f = fit(ModelSpec.polygenic("ACE", 90.0), cohort, cens)
    for V in (f.vcov_model, f.vcov_if2, f.vcov_if3):
        assert np.allclose(V, V.T)
        assert np.all(np.diag(V) > 0)
        assert np.min(np.linalg.eigvalsh(V)) > -1e-12
    assert np.abs(f.if_rows.mean(0)).max() < 1e-6
    assert f.if_rows.shape == (len(cohort), 3)
    assert np.allclose(f.if_rows.T @ f.if_rows / len(cohort) ** 2, f.vcov_if3)
    d = f.to_dict()
    assert d["names"] == f.names and d["converged"] and len(d["vcov_if3"]) == 3


def test_score_unbiased_at_truth():
    cfg = design("baseline-equal", n_mz=10000, n_dz=10000, seed=77)
    data = simulate_cohort(cfg)
    cens = WeibullCensoring(np.array([cfg.log_lambda, cfg.log_nu]))
    spec = ModelSpec.biprobit(math.inf)
    model = spec.build(())
    des = make_design(data, classify(data, spec.tau, cens), ())[0]
    theta = np.array([float(Phi_inv(cfg.p1)), math.atanh(2 / 3), math.atanh(0.5)])
    _, U, _, _ = pair_loglik_terms(model, theta, des, second=False)
    wU = des.w[:, None] * U
    total = wU.sum(0)
    se = np.sqrt((wU**2).sum(0))
    assert np.all(np.abs(total) < 3 * se)


def test_if3_close_to_if2_at_baseline(cohort):
    f = fit(ModelSpec.polygenic("ACE", math.inf), cohort, fit_weibull_ph(cohort))
    rel = np.abs(np.diag(f.vcov_if3) / np.diag(f.vcov_if2) - 1)
    assert np.all(rel < 0.10)


def test_if3_requires_parametric_censoring(cohort):
    km = fit_km(cohort)
    f = fit(ModelSpec.biprobit(90.0), cohort, km)
    assert f.vcov_if3 is None and f.vcov is f.vcov_if2
    with pytest.raises(NotImplementedError, match="parametric"):
        variance_if3(f, cohort, km)


def test_if3_correction_matters_with_covariate_censoring(covariate_cohort):
    cens = fit_weibull_ph(covariate_cohort, ("X",))
    f = fit(ModelSpec.biprobit(math.inf), covariate_cohort, cens)
    assert np.abs(f.if_rows.mean(0)).max() < 1e-6
    assert np.allclose(variance_if2(f), f.vcov_if2)


def test_variance_if3_handles_numeric_oracle(cohort):
    # D = mean over pairs of U_i (d log w_i / d gamma)': compare with differentiating the
    # weighted score in gamma numerically
    from liabil.biprobit import _eval_times

    cens = fit_weibull_ph(cohort)
    spec = ModelSpec.biprobit(90.0)
    f = fit(spec, cohort, cens)
    cls = classify(cohort, 90.0, cens)
    te = _eval_times(cohort, cls)
    dlogw = cens.log_weight_grad(te[:, 0], te[:, 1], data=cohort)
    dlogw[~cls.usable] = 0
    D = f.score_rows.T @ dlogw

    def weighted_score(gam):
        c = WeibullCensoring(gam)
        des = make_design(cohort, classify(cohort, 90.0, c), ())[0]
        return loglik_and_score(f.model, f.theta, des, second=False)[1]

    h = 1e-6
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fd = (weighted_score(cens.gamma + e) - weighted_score(cens.gamma - e)) / (2 * h)
        assert np.allclose(D[:, k], fd, rtol=1e-5, atol=1e-5 * np.abs(D).max())


def test_polygenic_ae_equals_additive_flexible(cohort):
    km = fit_km(cohort)
    a = fit(ModelSpec.polygenic("AE", 90.0), cohort, km)
    b = fit(ModelSpec.biprobit(90.0, rho="additive"), cohort, km)
    assert a.loglik == pytest.approx(b.loglik, abs=1e-6)


def test_nested_models_loglik_dominance(cohort):
    km = fit_km(cohort)
    full = fit(ModelSpec.biprobit(90.0, marginals="zygosity"), cohort, km)
    mid = fit(ModelSpec.biprobit(90.0), cohort, km)
    common = fit(ModelSpec.biprobit(90.0, rho="common"), cohort, km)
    assert full.loglik >= mid.loglik - 1e-10
    assert mid.loglik >= common.loglik - 1e-10
    ace = fit(ModelSpec.polygenic("ACE", 90.0), cohort, km)
    ae = fit(ModelSpec.polygenic("AE", 90.0), cohort, km)
    assert mid.loglik >= ace.loglik - 1e-10 and ace.loglik >= ae.loglik - 1e-10


def test_wald_tests(cohort):
    f = fit(ModelSpec.biprobit(90.0, marginals="zygosity"), cohort, fit_weibull_ph(cohort))
    with pytest.raises(ValueError):
        wald_test(f, np.zeros((0, f.n_params)))
    with pytest.raises(ValueError):
        wald_test(f, np.ones((2, f.n_params)))
    t = homogeneity_wald(f)
    assert t.df == 1 and 0 <= t.p_value <= 1
    R = np.zeros(f.n_params)
    R[f.names.index("atanh_rho_MZ")] = 1
    R[f.names.index("atanh_rho_DZ")] = -1
    manual = wald_test(f, R)
    d = f.theta[2] - f.theta[3]
    v = f.vcov_if3[2, 2] + f.vcov_if3[3, 3] - 2 * f.vcov_if3[2, 3]
    assert manual.statistic == pytest.approx(d * d / v, rel=1e-12)
    assert genetic_wald(f).statistic == pytest.approx(manual.statistic)
    with pytest.raises(ValueError):
        homogeneity_wald(fit(ModelSpec.biprobit(90.0), cohort))


def test_spec_validation():
    with pytest.raises(IdentifiabilityError):
        ModelSpec.polygenic("ACDE")
    with pytest.raises(IdentifiabilityError):
        ModelSpec.polygenic("ACD")
    with pytest.raises(ValueError):
        ModelSpec.polygenic("AXE")
    with pytest.raises(ValueError):
        ModelSpec(kind="other")
    with pytest.raises(ValueError):
        ModelSpec.biprobit(tau=-1)
    assert ModelSpec.polygenic("ade").label == "ADE"
    assert ModelSpec.polygenic("E").variance_components == ()


def test_e_only_model_gives_zero_correlation(small_cohort):
    f = fit(ModelSpec.polygenic("E", 90.0), small_cohort)
    assert f.converged and f.n_params == 1


def test_boundary_flag_on_degenerate_cells():
    data = simulate_cohort(design("baseline-equal", n_mz=300, n_dz=300, var_a=0.0, var_c=0.0, seed=2, censoring="none"))
    f = fit(ModelSpec.polygenic("ACE", 70.0), data)
    assert f.converged or f.boundary
    assert any(n.startswith("log_var") for n in f.boundary)


def test_no_usable_pairs_is_an_error():
    data = simulate_cohort(design("baseline-equal", n_mz=20, n_dz=20, seed=2))
    data.status[:] = 0
    data.time[:] = 1.0
    with pytest.raises(FitError):
        fit(ModelSpec.biprobit(90.0), data, fit_km(data.subset(np.ones(len(data), bool))), mode="strict")


def test_wald_size_under_null():
    """Rejection rate of rho_MZ = rho_DZ at the 5% level when the null holds."""
    rej = []
    for r in range(100):
        cfg = design("baseline-equal", n_mz=1000, n_dz=1000, var_a=0.0, var_c=0.5, censoring="none", seed=1000 + r)
        f = fit(ModelSpec.biprobit(math.inf), simulate_cohort(cfg))
        rej.append(genetic_wald(f).p_value < 0.05)
    # binomial(100, 0.05): P(X > 12) < 0.002
    assert np.mean(rej) <= 0.12
