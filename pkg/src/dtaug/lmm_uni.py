"""Univariate heteroscedastic linear mixed model.

    y_i | theta_i ~ N(theta_i, V_i),   theta_i | A, beta ~ N(x_i^T beta, A)

with known ``V_i`` and the flat prior ``p(A, beta) ∝ 1{A > 0}``. Two
augmentation schemes are implemented for both the Gibbs sampler and EM:

``"da"``
    The random effects ``theta`` are the missing data.
``"dta"``
    ``y_aug_i = (1 - w_i) y_i + w_i y_mis_i`` with ``w_i = 1 - V_min / V_i``,
    which makes every augmented observation have error variance ``V_min``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ChainOutput, EmConfig, EmTrace, GibbsConfig, UniData, has_converged
from .stats import make_rng, sample_truncated_inverse_gamma

SCHEMES = ("dta", "da")

_LOG2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class UniParams:
    beta: np.ndarray
    A: float

    def __post_init__(self):
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=float)))
        if not self.A >= 0:
            raise ValueError(f"A must be non-negative, got {self.A}")
        object.__setattr__(self, "A", float(self.A))

    def as_vector(self) -> np.ndarray:
        return np.append(self.beta, self.A)


@dataclass(frozen=True)
class DtaWeights:
    vmin: float
    w: np.ndarray


def _check_scheme(scheme: str) -> str:
    scheme = scheme.lower()
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    return scheme


def dta_weights(V) -> DtaWeights:
    """``V_min = min V`` and convex weights ``w_i = 1 - V_min / V_i``."""
    V = np.asarray(V, dtype=float).ravel()
    if V.size == 0:
        raise ValueError("V is empty")
    if np.any(~(V > 0)):
        raise ValueError("all V_i must be positive")
    vmin = float(V.min())
    w = 1.0 - vmin / V
    w[V == vmin] = 0.0
    return DtaWeights(vmin, w)


def missing_variance(weights: DtaWeights) -> np.ndarray:
    """Variance ``V_min / w_i`` of ``y_mis_i`` around ``theta_i`` (infinite where ``w_i = 0``).

    With this choice ``y_aug_i | theta_i ~ N(theta_i, V_min)`` for every group.
    """
    with np.errstate(divide="ignore"):
        return np.where(weights.w > 0, weights.vmin / weights.w, np.inf)


def augment_uni(y_obs, y_mis, weights: DtaWeights) -> np.ndarray:
    """The DTA transform ``(1 - w) y_obs + w y_mis`` (``y_obs`` kept where ``w = 0``)."""
    y_mis = np.where(weights.w > 0, y_mis, 0.0)
    return (1.0 - weights.w) * np.asarray(y_obs, dtype=float) + weights.w * y_mis


def dta_aug_moments(data: UniData, params: UniParams, weights: DtaWeights | None = None):
    """Mean and variance of ``y_aug_i`` given ``y_obs_i`` and ``(A, beta)``."""
    weights = weights or dta_weights(data.V)
    w, V = weights.w, data.V
    B = V / (V + params.A)
    fitted = data.X @ params.beta
    mu = (1.0 - w * B) * data.y + w * B * fitted
    var = w * weights.vmin + w**2 * V * (1.0 - B)
    return mu, var


def da_moments(data: UniData, params: UniParams):
    """Mean and variance of ``theta_i`` given ``y_obs_i`` and ``(A, beta)``."""
    B = data.V / (data.V + params.A)
    mu = (1.0 - B) * data.y + B * (data.X @ params.beta)
    return mu, data.V * (1.0 - B)


def loglik_obs_uni(data: UniData, params: UniParams) -> float:
    """Observed-data log-likelihood, ``y_i ~ N(x_i^T beta, A + V_i)``."""
    s = params.A + data.V
    r = data.y - data.X @ params.beta
    return float(-0.5 * np.sum(_LOG2PI + np.log(s) + r**2 / s))


# --------------------------------------------------------------------------
# Gibbs
# --------------------------------------------------------------------------

def _initial_state(data: UniData, init: dict | None, rng: np.random.Generator):
    init = init or {}
    beta = init.get("beta")
    beta = rng.standard_normal(data.m) if beta is None else np.atleast_1d(np.asarray(beta, dtype=float))
    A = init.get("A")
    A = float(data.V[rng.integers(data.k)]) if A is None else float(A)
    return beta, A


def param_names(m: int) -> list[str]:
    return [f"beta{j + 1}" for j in range(m)] + ["A"]


def run_gibbs_uni(data: UniData, scheme: str, cfg: GibbsConfig,
                  rng: np.random.Generator | None = None) -> ChainOutput:
    """Gibbs sampler for ``p(beta, A | y)`` under the DTA or DA scheme.

    DTA sweep: draw ``y_aug`` from :func:`dta_aug_moments`; draw
    ``T = A + V_min`` from IG((k-m-2)/2, RSS/2) truncated to ``T > V_min``;
    draw ``beta ~ N(beta_hat, T (X^T X)^-1)``. DA replaces ``y_aug`` with
    ``theta`` and draws ``A`` from the untruncated inverse-Gamma.
    """
    scheme = _check_scheme(scheme)
    rng = make_rng(cfg.seed) if rng is None else rng
    X, y, V = data.X, data.y, data.V
    k, m = data.k, data.m
    XtX_inv = np.linalg.inv(X.T @ X)
    H = XtX_inv @ X.T
    L = np.linalg.cholesky(XtX_inv)
    shape = (k - m - 2) / 2.0
    weights = dta_weights(V)
    w, vmin = weights.w, weights.vmin

    beta, A = _initial_state(data, cfg.init, rng)
    n_keep = cfg.n_iter - cfg.burn_in
    out = np.empty((n_keep, m + 1))
    rejections = 0

    for t in range(cfg.n_iter):
        B = V / (V + A)
        fitted = X @ beta
        if scheme == "dta":
            wB = w * B
            mu = y - wB * (y - fitted)
            sd = np.sqrt(w * vmin + w * w * V * (1.0 - B))
            aug = mu + sd * rng.standard_normal(k)
            bhat = H @ aug
            resid = aug - X @ bhat
            T, rej = sample_truncated_inverse_gamma(shape, 0.5 * resid @ resid, vmin, rng)
            rejections += rej
            A = T - vmin
            beta = bhat + np.sqrt(T) * (L @ rng.standard_normal(m))
        else:
            mu = y - B * (y - fitted)
            theta = mu + np.sqrt(V * (1.0 - B)) * rng.standard_normal(k)
            bhat = H @ theta
            resid = theta - X @ bhat
            A = 0.5 * (resid @ resid) / rng.gamma(shape)
            beta = bhat + np.sqrt(A) * (L @ rng.standard_normal(m))
        if t >= cfg.burn_in:
            row = out[t - cfg.burn_in]
            row[:m] = beta
            row[m] = A

    return ChainOutput(out, param_names(m), cfg.seed, cfg.burn_in, scheme,
                       {"truncated_ig": rejections})


# --------------------------------------------------------------------------
# EM
# --------------------------------------------------------------------------

def em_step_uni(data: UniData, params: UniParams, scheme: str,
                weights: DtaWeights | None = None) -> UniParams:
    """One E+M update of ``(beta, A)``."""
    X = data.X
    if scheme == "dta":
        weights = weights or dta_weights(data.V)
        mu, var = dta_aug_moments(data, params, weights)
        beta = np.linalg.solve(X.T @ X, X.T @ mu)
        A = max(np.mean((mu - X @ beta) ** 2 + var) - weights.vmin, 0.0)
    else:
        mu, var = da_moments(data, params)
        beta = np.linalg.solve(X.T @ X, X.T @ mu)
        A = np.mean((mu - X @ beta) ** 2 + var)
    return UniParams(beta, A)


def run_em_uni(data: UniData, scheme: str, cfg: EmConfig | None = None) -> EmTrace:
    """EM for the posterior mode of ``(beta, A)``.

    The stopping rule is ``cfg.criterion`` (relative log-likelihood change by
    default). Default start is ``beta = 0, A = 1``. Hitting ``max_iter``
    returns a trace with ``converged=False``.
    """
    scheme = _check_scheme(scheme)
    cfg = cfg or EmConfig()
    init = cfg.init or {}
    params = UniParams(init.get("beta", np.zeros(data.m)), init.get("A", 1.0))
    weights = dta_weights(data.V)
    iterates = [params]
    loglik = [loglik_obs_uni(data, params)]
    converged = False
    n = 0
    while n < cfg.max_iter:
        new = em_step_uni(data, params, scheme, weights)
        n += 1
        iterates.append(new)
        loglik.append(loglik_obs_uni(data, new))
        done = has_converged(cfg, params, new, loglik[-2], loglik[-1])
        params = new
        if done:
            converged = True
            break
    return EmTrace(iterates, loglik, converged, n, scheme)


# --------------------------------------------------------------------------
# grid oracle
# --------------------------------------------------------------------------

def log_marginal_A(data: UniData, grid) -> np.ndarray:
    """Unnormalized ``log p(A | y)`` with ``beta`` integrated out analytically."""
    A = np.asarray(grid, dtype=float)
    X, y = data.X, data.y
    S = A[:, None] + data.V[None, :]                  # (g, k)
    Winv = 1.0 / S
    XtWX = np.einsum("gk,ka,kb->gab", Winv, X, X)
    XtWy = np.einsum("gk,ka,k->ga", Winv, X, y)
    bhat = np.linalg.solve(XtWX, XtWy[..., None])[..., 0]
    r = y[None, :] - bhat @ X.T
    _, logdet = np.linalg.slogdet(XtWX)
    return -0.5 * (np.sum(np.log(S), axis=1) + np.sum(r * r * Winv, axis=1) + logdet)


def profile_loglik_A(data: UniData, grid) -> np.ndarray:
    """Observed log-likelihood maximized over ``beta`` at each ``A`` (joint-mode profile)."""
    A = np.asarray(grid, dtype=float)
    X, y = data.X, data.y
    S = A[:, None] + data.V[None, :]
    Winv = 1.0 / S
    XtWX = np.einsum("gk,ka,kb->gab", Winv, X, X)
    XtWy = np.einsum("gk,ka,k->ga", Winv, X, y)
    bhat = np.linalg.solve(XtWX, XtWy[..., None])[..., 0]
    r = y[None, :] - bhat @ X.T
    return -0.5 * np.sum(_LOG2PI + np.log(S) + r * r * Winv, axis=1)


def grid_oracle_A(data: UniData, grid, tail: float = 1e-8) -> np.ndarray:
    """Marginal posterior density of ``A`` on ``grid``, trapezoid-normalized.

    A grid starting at 0 treats 0 as the support boundary; every other
    endpoint must carry density below ``tail`` times the peak.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 3 or np.any(np.diff(grid) <= 0) or grid[0] < 0:
        raise ValueError("grid must be an increasing non-negative vector of length >= 3")
    logp = log_marginal_A(data, grid)
    dens = np.exp(logp - logp.max())
    if dens[-1] > tail or (grid[0] > 0 and dens[0] > tail):
        raise ValueError("grid too narrow: endpoint density exceeds tail threshold")
    return dens / np.trapezoid(dens, grid)


def grid_cdf(grid, density) -> np.ndarray:
    """Cumulative trapezoid integral of a normalized grid density."""
    grid = np.asarray(grid, dtype=float)
    density = np.asarray(density, dtype=float)
    inc = 0.5 * (density[1:] + density[:-1]) * np.diff(grid)
    return np.concatenate([[0.0], np.cumsum(inc)])


def default_A_grid(data: UniData, n: int = 4001) -> np.ndarray:
    """Log-spaced grid from 0 wide enough for the 1e-8 tail condition."""
    hi = 10.0 * (np.var(data.y) + data.V.max()) + 1.0
    for _ in range(60):
        g = np.concatenate([[0.0], np.geomspace(1e-6 * data.V.min(), hi, n - 1)])
        logp = log_marginal_A(data, g)
        if logp[-1] - logp.max() < np.log(1e-9):
            return g
        hi *= 2.0
    raise ValueError("could not bracket the posterior of A")
