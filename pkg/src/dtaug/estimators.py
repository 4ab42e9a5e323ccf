"""scikit-learn style wrappers over the functional samplers and EM routines."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import betabin, lmm_multi, lmm_uni
from .data import BinData, EmConfig, GibbsConfig, MultiData, UniData


def _check_algorithm(algorithm: str) -> str:
    if algorithm not in ("em", "gibbs"):
        raise ValueError(f"algorithm must be 'em' or 'gibbs', got {algorithm!r}")
    return algorithm


class HeteroscedasticLMM(BaseEstimator):
    """Univariate Gaussian mixed model with known per-group variances.

    Parameters
    ----------
    scheme : {"dta", "da"}
        Augmentation used by EM or the Gibbs sampler.
    algorithm : {"em", "gibbs"}
        ``"em"`` stores the posterior mode; ``"gibbs"`` stores posterior means
        and keeps the chain in ``chain_``.
    """

    def __init__(self, scheme="dta", algorithm="em", tol=1e-10, max_iter=100_000,
                 criterion="loglik", n_iter=5100, burn_in=100, random_state=0):
        self.scheme = scheme
        self.algorithm = algorithm
        self.tol = tol
        self.max_iter = max_iter
        self.criterion = criterion
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.random_state = random_state

    def fit(self, X, y, V):
        X = check_array(X, ensure_min_samples=3)
        y = check_array(y, ensure_2d=False)
        data = UniData(y, check_array(V, ensure_2d=False), X)
        if _check_algorithm(self.algorithm) == "em":
            trace = lmm_uni.run_em_uni(data, self.scheme, EmConfig(self.tol, self.max_iter, criterion=self.criterion))
            self.coef_ = trace.final.beta
            self.A_ = trace.final.A
            self.n_iter_ = trace.n_iter
            self.converged_ = trace.converged
            self.trace_ = trace
        else:
            chain = lmm_uni.run_gibbs_uni(data, self.scheme,
                                          GibbsConfig(self.n_iter, self.burn_in, self.random_state))
            means = chain.draws.mean(axis=0)
            self.coef_ = means[:-1]
            self.A_ = float(means[-1])
            self.chain_ = chain
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return check_array(X) @ self.coef_

    def shrink(self, X, y, V):
        """Conditional means of the random effects at the fitted ``(beta, A)``."""
        check_is_fitted(self, "coef_")
        data = UniData(y, V, check_array(X))
        mu, _ = lmm_uni.da_moments(data, lmm_uni.UniParams(self.coef_, self.A_))
        return mu


class MultivariateLMM(BaseEstimator):
    """p-variate mixed model ``y_i ~ N_p(X_i beta, A + V_i)`` with known ``V_i``.

    ``coef_`` has shape ``(p, m)``: row ``j`` holds the coefficients of
    response ``j``.
    """

    def __init__(self, scheme="dta", algorithm="em", safe_mode=False, tol=1e-10,
                 max_iter=100_000, criterion="loglik", n_iter=5100, burn_in=100, random_state=0):
        self.scheme = scheme
        self.algorithm = algorithm
        self.safe_mode = safe_mode
        self.tol = tol
        self.max_iter = max_iter
        self.criterion = criterion
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.random_state = random_state

    def fit(self, X, Y, V):
        X = check_array(X)
        Y = check_array(Y)
        data = MultiData(Y, np.asarray(V, dtype=float), X)
        p, m = data.p, data.m
        if _check_algorithm(self.algorithm) == "em":
            trace = lmm_multi.run_em_multi(data, self.scheme,
                                           EmConfig(self.tol, self.max_iter, criterion=self.criterion),
                                           safe_mode=self.safe_mode)
            beta, A = trace.final.beta, trace.final.A
            self.n_iter_ = trace.n_iter
            self.converged_ = trace.converged
            self.trace_ = trace
        else:
            chain = lmm_multi.run_gibbs_multi(data, self.scheme,
                                              GibbsConfig(self.n_iter, self.burn_in, self.random_state),
                                              safe_mode=self.safe_mode)
            means = chain.draws.mean(axis=0)
            beta = means[: p * m]
            A = np.zeros((p, p))
            A[np.triu_indices(p)] = means[p * m:]
            A = A + np.triu(A, 1).T
            self.chain_ = chain
        self.coef_ = beta.reshape(p, m)
        self.A_ = A
        self.n_features_in_ = m
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return check_array(X) @ self.coef_.T


class BetaBinomialDTA(BaseEstimator):
    """Beta-Binomial hierarchy fitted by the DTA Gibbs sampler.

    ``fit(y, n)`` stores the chain, posterior medians of ``alpha`` and
    ``beta``, and ``theta_``, the posterior means of the group success
    probabilities.
    """

    def __init__(self, c=3.0, gamma=0.0, m1=30, m2=30, n_iter=5100, burn_in=100, random_state=0):
        self.c = c
        self.gamma = gamma
        self.m1 = m1
        self.m2 = m2
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.random_state = random_state

    def fit(self, y, n):
        data = BinData(np.asarray(y), np.asarray(n))
        chain = betabin.run_gibbs_betabin(data, betabin.PriorHyper(self.c, self.gamma), self.m1, self.m2,
                                          GibbsConfig(self.n_iter, self.burn_in, self.random_state))
        a, b = chain["alpha"], chain["beta"]
        self.chain_ = chain
        self.alpha_ = float(np.median(a))
        self.beta_ = float(np.median(b))
        self.theta_ = np.mean((data.y[None, :] + a[:, None]) / (data.n[None, :] + (a + b)[:, None]), axis=0)
        return self
