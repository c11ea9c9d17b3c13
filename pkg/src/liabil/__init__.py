"""Liability-threshold twin models for right-censored competing-risks data."""

from .biprobit import FitResult, ModelSpec, aic_ipcw, fit, loglik_and_score, variance_if2, variance_if3, wald_test
from .censoring import KaplanMeierCensoring, NoCensoring, WeibullCensoring, fit_km, fit_weibull_ph
from .data import PairRecord, Schema, TwinData, classify, classify_at_tau, load_dataset
from .measures import MeasureSet, measures_from_fit, timegrid
from .normal import Phi, Phi_inv, bvn_cdf, bvn_cdf_grad, bvn_pdf, phi
from .polygenic import PolygenicEstimate, components_to_correlations, heritability, polygenic_estimate
from .simulate import SimConfig, design, run_replication_study, simulate_cohort, true_values

__version__ = "0.1.0"

__all__ = [
    "FitResult", "ModelSpec", "aic_ipcw", "fit", "loglik_and_score", "variance_if2", "variance_if3", "wald_test",
    "KaplanMeierCensoring", "NoCensoring", "WeibullCensoring", "fit_km", "fit_weibull_ph",
    "PairRecord", "Schema", "TwinData", "classify", "classify_at_tau", "load_dataset",
    "MeasureSet", "measures_from_fit", "timegrid",
    "Phi", "Phi_inv", "bvn_cdf", "bvn_cdf_grad", "bvn_pdf", "phi",
    "PolygenicEstimate", "components_to_correlations", "heritability", "polygenic_estimate",
    "SimConfig", "design", "run_replication_study", "simulate_cohort", "true_values",
]
