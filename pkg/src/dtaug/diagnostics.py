"""Chain diagnostics and EM information matrices for the univariate model.

The information-matrix functions order parameters as ``(beta_1..beta_m, A)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import UniData
from .lmm_uni import UniParams, da_moments, dta_aug_moments, dta_weights


@dataclass(frozen=True)
class AcfResult:
    lags: np.ndarray
    rho: np.ndarray


@dataclass(frozen=True)
class InfoMatrices:
    i_obs: np.ndarray
    i_aug: np.ndarray
    rate: np.ndarray
    spectral_radius: float


def _centered(chain) -> np.ndarray:
    x = np.asarray(chain, dtype=float).ravel()
    x = x - x.mean()
    if not np.any(x):
        raise ValueError("chain is constant; autocorrelation undefined")
    return x


def _autocov(x: np.ndarray) -> np.ndarray:
    n = x.size
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    return np.fft.irfft(f * np.conj(f), nfft)[:n]


def acf(chain, max_lag: int) -> AcfResult:
    """Sample autocorrelations normalized by the lag-0 sum of squares."""
    x = _centered(chain)
    if not 1 <= max_lag < x.size:
        raise ValueError("need 1 <= max_lag < len(chain)")
    c = _autocov(x)[: max_lag + 1]
    rho = c / c[0]
    rho[0] = 1.0
    return AcfResult(np.arange(max_lag + 1), rho)


def ess(chain) -> float:
    """Effective sample size ``N / (1 + 2 sum rho_t)``.

    The sum runs over lags before the first non-positive autocorrelation and
    the result is clamped to ``(0, N]``.
    """
    x = _centered(chain)
    n = x.size
    if n < 100:
        raise ValueError("ess needs at least 100 draws")
    c = _autocov(x)
    rho = c / c[0]
    nonpos = np.flatnonzero(rho[1:] <= 0)
    stop = nonpos[0] + 1 if nonpos.size else n
    tau = 1.0 + 2.0 * np.sum(rho[1:stop])
    return float(min(n, max(n / tau, np.finfo(float).tiny)))


def mcse_mean(chain) -> float:
    """Monte Carlo standard error of the chain mean."""
    x = np.asarray(chain, dtype=float)
    return float(np.std(x, ddof=1) / np.sqrt(ess(x)))


def mcse_quantile(chain, q: float) -> float:
    """Monte Carlo standard error of the ``q`` quantile.

    The binomial standard error of the indicator ``1{x <= x_q}`` (using its
    own ESS) is mapped back through the empirical quantile function.
    """
    x = np.asarray(chain, dtype=float)
    xq = np.quantile(x, q)
    ind = (x <= xq).astype(float)
    se_p = np.sqrt(q * (1.0 - q) / ess(ind))
    lo, hi = np.quantile(x, [max(q - se_p, 0.0), min(q + se_p, 1.0)])
    return float(0.5 * (hi - lo))


# --------------------------------------------------------------------------
# information matrices
# --------------------------------------------------------------------------

def _block(xx: np.ndarray, cross: np.ndarray, aa: float) -> np.ndarray:
    m = xx.shape[0]
    out = np.empty((m + 1, m + 1))
    out[:m, :m] = xx
    out[:m, m] = cross
    out[m, :m] = cross
    out[m, m] = aa
    return out


def fisher_obs_uni(data: UniData, params: UniParams) -> np.ndarray:
    """Observed information, the negative Hessian of the observed log-likelihood."""
    X = data.X
    s = params.A + data.V
    r = data.y - X @ params.beta
    xx = (X / s[:, None]).T @ X
    cross = X.T @ (r / s**2)
    aa = -0.5 * np.sum(1.0 / s**2) + np.sum(r**2 / s**3)
    return _block(xx, cross, aa)


def aug_info_uni(data: UniData, params: UniParams, scheme: str) -> np.ndarray:
    """Expected augmented-data information under ``"dta"`` or ``"da"``.

    DTA: complete data ``y_aug ~ N(x^T beta, A + V_min)`` averaged over
    ``y_aug | y, beta, A``. DA: complete data ``theta ~ N(x^T beta, A)``
    averaged over ``theta | y, beta, A`` (requires ``A > 0``).
    """
    X = data.X
    k = data.k
    if scheme == "dta":
        weights = dta_weights(data.V)
        mu, var = dta_aug_moments(data, params, weights)
        s = params.A + weights.vmin
    elif scheme == "da":
        if params.A <= 0:
            raise ValueError("DA augmented information needs A > 0")
        mu, var = da_moments(data, params)
        s = params.A
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    r = mu - X @ params.beta
    xx = X.T @ X / s
    cross = X.T @ r / s**2
    aa = -0.5 * k / s**2 + np.sum(r**2 + var) / s**3
    return _block(xx, cross, aa)


def matrix_rate(i_obs, i_aug) -> InfoMatrices:
    """EM matrix rate ``I - i_obs i_aug^-1`` and its spectral radius."""
    i_obs = np.asarray(i_obs, dtype=float)
    i_aug = np.asarray(i_aug, dtype=float)
    try:
        inv = np.linalg.inv(i_aug)
    except np.linalg.LinAlgError:
        raise ValueError("augmented information is singular") from None
    rate = np.eye(i_obs.shape[0]) - i_obs @ inv
    radius = float(np.max(np.abs(np.linalg.eigvals(rate))))
    return InfoMatrices(i_obs, i_aug, rate, radius)


def expected_info_gap(data: UniData, params: UniParams) -> np.ndarray:
    """Average over ``y_obs`` of ``I_aug(DA) - I_aug(DTA)`` at ``(beta, A)``."""
    if params.A <= 0:
        raise ValueError("expected_info_gap needs A > 0")
    vmin = dta_weights(data.V).vmin
    A = params.A
    X = data.X
    xx = X.T @ X * (1.0 / A - 1.0 / (A + vmin))
    aa = 0.5 * data.k * (1.0 / A**2 - 1.0 / (A + vmin) ** 2)
    return _block(xx, np.zeros(data.m), aa)
