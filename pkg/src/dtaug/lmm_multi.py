"""Multivariate heteroscedastic linear mixed model.

    y_i | theta_i ~ N_p(theta_i, V_i),   theta_i | A, beta ~ N_p(X_i beta, A)

with ``X_i = I_p kron x_i^T`` and the flat prior on ``beta`` and positive
definite ``A``. The DTA scheme uses

    y_aug_i = (I - W_i) y_i + W_i y_mis_i,   W_i = I - V_min^1/2 V_i^-1 V_min^1/2

where ``V_min = lambda_min I_p`` and ``lambda_min`` is the smallest eigenvalue
over all ``V_i``; then every ``y_aug_i`` has error covariance ``V_min``.

``beta`` is stored as a length-``mp`` vector of p consecutive blocks of m
coefficients, so that ``X_i beta`` has j-th entry ``x_i^T beta_(j)``.
Internally it is handled as the (p, m) matrix ``beta.reshape(p, m)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ChainOutput, EmConfig, EmTrace, GibbsConfig, MultiData, has_converged
from .stats import (
    check_spd,
    is_spd,
    make_rng,
    sample_gaussian_psd,
    sample_inverse_wishart_shifted,
    sym_sqrt,
    symmetrize,
)

SCHEMES = ("dta", "da")
SAFE_SCALE = 0.999

_LOG2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class MultiParams:
    beta: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        A = symmetrize(np.atleast_2d(np.asarray(self.A, dtype=float)))
        beta = np.asarray(self.beta, dtype=float).ravel()
        if not np.all(np.isfinite(beta)):
            raise ValueError("beta must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "beta", beta)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.beta, self.A.ravel()])


@dataclass(frozen=True)
class ShrinkSet:
    vmin: np.ndarray
    vmin_sqrt: np.ndarray
    W: np.ndarray
    lambda_min: float
    singular: np.ndarray


def shrink_matrices(V, safe_mode: bool = False) -> ShrinkSet:
    """Build ``V_min`` and the DTA weight matrices ``W_i`` for a stack of covariances.

    With ``safe_mode`` the floor is ``0.999 * lambda_min`` so every ``W_i`` is
    non-singular; otherwise groups attaining ``lambda_min`` get singular
    ``W_i`` (reported in ``singular``).
    """
    V = np.asarray(V, dtype=float)
    if V.ndim == 2:
        V = V[None]
    for i, Vi in enumerate(V):
        check_spd(Vi, name=f"V[{i + 1}]")
    k, p, _ = V.shape
    lam = np.linalg.eigvalsh(V)
    lambda_min = float(lam.min())
    level = SAFE_SCALE * lambda_min if safe_mode else lambda_min
    vmin = level * np.eye(p)
    vmin_sqrt = sym_sqrt(vmin)
    W = np.eye(p) - vmin_sqrt @ np.linalg.inv(V) @ vmin_sqrt
    W = symmetrize(W)
    # eigenvalues of W_i are 1 - level / lambda_ji
    wlam = 1.0 - level / lam
    singular = np.any(wlam <= 1e-12, axis=1)
    return ShrinkSet(vmin, vmin_sqrt, W, lambda_min, singular)


def missing_cov_multi(shrink: ShrinkSet) -> np.ndarray:
    """Covariances ``V_min W_i^-1`` of ``y_mis_i`` around ``theta_i``.

    Needs non-singular ``W_i`` (use ``safe_mode``); then
    ``y_aug_i | theta_i ~ N_p(theta_i, V_min)``.
    """
    if np.any(shrink.singular):
        raise ValueError("missing-data covariance needs non-singular W_i; build with safe_mode=True")
    return symmetrize(shrink.vmin @ np.linalg.inv(shrink.W))


def augment_multi(y_obs, y_mis, shrink: ShrinkSet) -> np.ndarray:
    """The DTA transform ``(I - W_i) y_obs_i + W_i y_mis_i``.

    Inputs are (..., k, p) arrays; leading axes index replicates.
    """
    W = shrink.W
    y_obs = np.asarray(y_obs, dtype=float)
    diff = np.asarray(y_mis, dtype=float) - y_obs
    return y_obs + np.einsum("kij,...kj->...ki", W, diff)


def fitted_values(x: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """All ``X_i beta`` stacked as a (k, p) array."""
    m = x.shape[1]
    return x @ beta.reshape(-1, m).T


def _shrinkage(V: np.ndarray, A: np.ndarray) -> np.ndarray:
    # B_i = V_i (V_i + A)^-1
    return V @ np.linalg.inv(V + A)


def dta_aug_moments_multi(data: MultiData, shrink: ShrinkSet, params: MultiParams):
    """Mean (k, p) and covariance (k, p, p) of ``y_aug_i`` given ``y_i`` and ``(A, beta)``."""
    return _dta_moments(data.y, data.V, fitted_values(data.x, params.beta), params.A, shrink)


def _dta_moments(y, V, fitted, A, shrink: ShrinkSet):
    W = shrink.W
    B = _shrinkage(V, A)
    WB = W @ B
    mu = y - np.einsum("kij,kj->ki", WB, y - fitted)
    IminusB_V = V - B @ V
    cov = shrink.vmin @ np.swapaxes(W, -1, -2) + W @ IminusB_V @ np.swapaxes(W, -1, -2)
    return mu, symmetrize(cov)


def da_moments_multi(data: MultiData, params: MultiParams):
    """Mean and covariance of ``theta_i`` given ``y_i`` and ``(A, beta)``."""
    return _da_moments(data.y, data.V, fitted_values(data.x, params.beta), params.A)


def _da_moments(y, V, fitted, A):
    B = _shrinkage(V, A)
    mu = y - np.einsum("kij,kj->ki", B, y - fitted)
    return mu, symmetrize(V - B @ V)


def loglik_obs_multi(data: MultiData, params: MultiParams) -> float:
    """Sum over groups of ``log N_p(y_i; X_i beta, A + V_i)``."""
    S = data.V + params.A
    sign, logdet = np.linalg.slogdet(S)
    if np.any(sign <= 0):
        raise ValueError("A + V_i is not positive definite")
    r = data.y - fitted_values(data.x, params.beta)
    quad = np.einsum("ki,ki->k", r, np.linalg.solve(S, r[..., None])[..., 0])
    return float(-0.5 * np.sum(data.p * _LOG2PI + logdet + quad))


def param_names(p: int, m: int) -> list[str]:
    names = [f"beta{j + 1}" for j in range(p * m)]
    names += [f"A{a + 1}{b + 1}" for a in range(p) for b in range(a, p)]
    return names


def _check_scheme(scheme: str) -> str:
    scheme = scheme.lower()
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    return scheme


# --------------------------------------------------------------------------
# Gibbs
# --------------------------------------------------------------------------

def run_gibbs_multi(data: MultiData, scheme: str, cfg: GibbsConfig, safe_mode: bool = False,
                    rng: np.random.Generator | None = None) -> ChainOutput:
    """Gibbs sampler for ``p(beta, A | y)`` under DTA or DA.

    DTA sweep: ``y_aug ~ N_p(mu*, Cov*)``; ``K ~ IW(k-m-p-1, S)`` redrawn until
    ``K - V_min`` is positive definite, ``A = K - V_min``; then
    ``beta ~ N(beta_hat, (A + V_min) kron (sum x_i x_i^T)^-1)``.
    DA uses ``theta`` in place of ``y_aug``, an untruncated IW and ``A``.
    """
    scheme = _check_scheme(scheme)
    rng = make_rng(cfg.seed) if rng is None else rng
    y, V, x = data.y, data.V, data.x
    k, p, m = data.k, data.p, data.m
    shrink = shrink_matrices(V, safe_mode)
    xtx_inv = np.linalg.inv(x.T @ x)
    H = xtx_inv @ x.T                     # (m, k); beta_hat rows = (H @ Y).T
    L_x = np.linalg.cholesky(xtx_inv)
    df = k - m - p - 1
    zero = np.zeros((p, p))
    shift = shrink.vmin if scheme == "dta" else zero
    tri = np.triu_indices(p)

    init = cfg.init or {}
    beta = init.get("beta")
    beta = rng.standard_normal((p, m)) if beta is None else np.asarray(beta, dtype=float).reshape(p, m)
    A = init.get("A")
    A = V[rng.integers(k)].copy() if A is None else np.asarray(A, dtype=float)

    n_keep = cfg.n_iter - cfg.burn_in
    out = np.empty((n_keep, p * m + len(tri[0])))
    rejections = 0

    for t in range(cfg.n_iter):
        fitted = x @ beta.T
        if scheme == "dta":
            mu, cov = _dta_moments(y, V, fitted, A, shrink)
        else:
            mu, cov = _da_moments(y, V, fitted, A)
        aug = sample_gaussian_psd(mu, cov, rng)
        bhat = (H @ aug).T                # (p, m)
        resid = aug - x @ bhat.T
        S = resid.T @ resid
        A, rej = sample_inverse_wishart_shifted(df, S, shift, rng)
        rejections += rej
        total = A + shift
        L_a = np.linalg.cholesky(total)
        beta = bhat + L_a @ rng.standard_normal((p, m)) @ L_x.T
        if t >= cfg.burn_in:
            row = out[t - cfg.burn_in]
            row[: p * m] = beta.ravel()
            row[p * m:] = A[tri]

    return ChainOutput(out, param_names(p, m), cfg.seed, cfg.burn_in, scheme,
                       {"shifted_iw": rejections})


# --------------------------------------------------------------------------
# EM
# --------------------------------------------------------------------------

def em_step_multi(data: MultiData, params: MultiParams, scheme: str,
                  shrink: ShrinkSet | None = None) -> MultiParams:
    """One E+M update. Under DTA a non-positive-definite update of ``A`` is reset to 0."""
    x = data.x
    fitted = fitted_values(x, params.beta)
    if scheme == "dta":
        shrink = shrink or shrink_matrices(data.V)
        mu, cov = _dta_moments(data.y, data.V, fitted, params.A, shrink)
    else:
        mu, cov = _da_moments(data.y, data.V, fitted, params.A)
    bhat = np.linalg.solve(x.T @ x, x.T @ mu).T         # (p, m)
    resid = mu - x @ bhat.T
    A = (resid.T @ resid + cov.sum(axis=0)) / data.k
    if scheme == "dta":
        A = A - shrink.vmin
        if not is_spd(A):
            A = np.zeros_like(A)
    return MultiParams(bhat.reshape(-1), symmetrize(A))


def run_em_multi(data: MultiData, scheme: str, cfg: EmConfig | None = None,
                 safe_mode: bool = False) -> EmTrace:
    """EM for the posterior mode; default start ``beta = 0``, ``A = I_p``.

    Stopping follows ``cfg.criterion``; see :class:`~dtaug.data.EmConfig`.
    """
    scheme = _check_scheme(scheme)
    cfg = cfg or EmConfig()
    init = cfg.init or {}
    p, m = data.p, data.m
    params = MultiParams(init.get("beta", np.zeros(p * m)), init.get("A", np.eye(p)))
    shrink = shrink_matrices(data.V, safe_mode) if scheme == "dta" else None
    iterates = [params]
    loglik = [loglik_obs_multi(data, params)]
    converged = False
    n = 0
    while n < cfg.max_iter:
        new = em_step_multi(data, params, scheme, shrink)
        n += 1
        iterates.append(new)
        loglik.append(loglik_obs_multi(data, new))
        done = has_converged(cfg, params, new, loglik[-2], loglik[-1])
        params = new
        if done:
            converged = True
            break
    return EmTrace(iterates, loglik, converged, n, scheme)
