"""Data transforming augmentation for heteroscedastic hierarchical models."""

from .betabin import (ApproxPosterior, LogPoly, PriorHyper, build_approx_posterior,
                      exact_grid_posterior, logpdf_approx_joint, rising_factorial_logpoly,
                      run_gibbs_betabin)
from .data import (BinData, ChainOutput, DataError, EmConfig, EmTrace, GibbsConfig, MultiData,
                   UniData, load_dataset, write_dataset)
from .diagnostics import acf, aug_info_uni, ess, expected_info_gap, fisher_obs_uni, matrix_rate
from .estimators import BetaBinomialDTA, HeteroscedasticLMM, MultivariateLMM
from .lmm_multi import MultiParams, run_em_multi, run_gibbs_multi
from .lmm_uni import UniParams, grid_oracle_A, run_em_uni, run_gibbs_uni
from .stats import NumericalAbort

__version__ = "0.1.0"

__all__ = [
    "acf",
    "ApproxPosterior",
    "aug_info_uni",
    "BetaBinomialDTA",
    "BinData",
    "build_approx_posterior",
    "ChainOutput",
    "DataError",
    "EmConfig",
    "EmTrace",
    "ess",
    "exact_grid_posterior",
    "expected_info_gap",
    "fisher_obs_uni",
    "GibbsConfig",
    "grid_oracle_A",
    "HeteroscedasticLMM",
    "load_dataset",
    "logpdf_approx_joint",
    "LogPoly",
    "matrix_rate",
    "MultiData",
    "MultiParams",
    "MultivariateLMM",
    "NumericalAbort",
    "PriorHyper",
    "rising_factorial_logpoly",
    "run_em_multi",
    "run_em_uni",
    "run_gibbs_betabin",
    "run_gibbs_multi",
    "run_gibbs_uni",
    "UniData",
    "UniParams",
    "write_dataset",
]
