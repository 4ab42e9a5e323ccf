"""Beta-Binomial model with a trial-count homogenizing augmentation.

    y_i | theta_i ~ Binomial(n_i, theta_i),   theta_i | alpha, beta ~ Beta(alpha, beta)
    p(alpha, beta) ∝ (alpha + beta + gamma)^-c

The DTA scheme tops every group up to ``n = max n_i`` trials with
``y_mis_i ~ Binomial(n - n_i, theta_i)``. For homogeneous counts the
likelihood is a ratio of rising factorials,

    prod_i alpha^(y_i) beta^(n - y_i) / (alpha + beta)^(n)

and expanding the denominator and the prior in powers of
``1 / u = 1 / (alpha + beta + n)`` gives the approximate posterior

    p*(alpha, beta) ∝ sum_{i,j,l} a_i b_j c_l alpha^i beta^j u^-g(l),
    g(l) = n k + c + l,

whose components integrate in closed form to Beta-type mixtures. All
coefficient tables are held as natural logarithms.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from .data import BinData, ChainOutput, GibbsConfig
from .stats import NumericalAbort, categorical_from_log_weights, make_rng

_CHUNK = 1 << 15


@dataclass(frozen=True)
class PriorHyper:
    """Prior ``(alpha + beta + gamma)^-c``; ``c > 2`` and ``gamma >= 0``."""

    c: float = 3.0
    gamma: float = 0.0

    def __post_init__(self):
        if not self.c > 2:
            raise ValueError(f"c must exceed 2, got {self.c}")
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")


# --------------------------------------------------------------------------
# log-space polynomials
# --------------------------------------------------------------------------

def log_convolve(la, lb) -> np.ndarray:
    """Logs of the coefficients of the product of two polynomials given in log space.

    Each output entry is an exact log-sum-exp over its anti-diagonal, so tiny
    coefficients survive next to huge ones.
    """
    la = np.asarray(la, dtype=float)
    lb = np.asarray(lb, dtype=float)
    if la.size == 0 or lb.size == 0:
        raise ValueError("cannot convolve an empty polynomial")
    size = la.size + lb.size - 1
    vals = (la[:, None] + lb[None, :]).ravel()
    idx = (np.arange(la.size)[:, None] + np.arange(lb.size)[None, :]).ravel()
    top = np.full(size, -np.inf)
    np.maximum.at(top, idx, vals)
    safe = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(invalid="ignore"):
        scaled = np.exp(vals - safe[idx])
    scaled[~np.isfinite(vals)] = 0.0
    sums = np.bincount(idx, weights=scaled, minlength=size)
    with np.errstate(divide="ignore"):
        return np.where(np.isfinite(top), safe + np.log(sums), -np.inf)


@dataclass(frozen=True)
class LogPoly:
    """Polynomial ``sum_d exp(log_coeffs[d - min_degree]) x^d`` with nonnegative coefficients."""

    min_degree: int
    log_coeffs: np.ndarray

    def __post_init__(self):
        lc = np.array(self.log_coeffs, dtype=float).ravel()
        if lc.size == 0:
            raise ValueError("LogPoly needs at least one coefficient")
        if np.any(np.isnan(lc)) or np.any(lc == np.inf):
            raise ValueError("log coefficients must be finite or -inf")
        if self.min_degree < 0:
            raise ValueError("min_degree must be non-negative")
        lc.setflags(write=False)
        object.__setattr__(self, "log_coeffs", lc)
        object.__setattr__(self, "min_degree", int(self.min_degree))

    @classmethod
    def one(cls) -> LogPoly:
        return cls(0, [0.0])

    @property
    def max_degree(self) -> int:
        return self.min_degree + self.log_coeffs.size - 1

    @property
    def degrees(self) -> np.ndarray:
        return np.arange(self.min_degree, self.max_degree + 1)

    def coeffs(self) -> np.ndarray:
        """Linear-space coefficients (may overflow for large polynomials)."""
        return np.exp(self.log_coeffs)

    def __mul__(self, other: LogPoly) -> LogPoly:
        return LogPoly(self.min_degree + other.min_degree,
                       log_convolve(self.log_coeffs, other.log_coeffs))

    def truncate(self, max_degree: int) -> LogPoly:
        if max_degree < self.min_degree:
            raise ValueError("truncation would remove every term")
        return LogPoly(self.min_degree, self.log_coeffs[: max_degree - self.min_degree + 1])

    def log_eval(self, log_x) -> np.ndarray:
        """``log p(x)`` for an array of ``log x`` values."""
        log_x = np.asarray(log_x, dtype=float)
        flat = log_x.ravel()
        out = np.empty(flat.size)
        deg = self.degrees.astype(float)
        for start in range(0, flat.size, max(1, _CHUNK // deg.size)):
            chunk = flat[start:start + max(1, _CHUNK // deg.size)]
            terms = self.log_coeffs[None, :] + chunk[:, None] * deg[None, :]
            out[start:start + chunk.size] = special.logsumexp(terms, axis=1)
        return out.reshape(log_x.shape)


def log_poly_product(polys) -> LogPoly:
    out = LogPoly.one()
    for p in polys:
        out = out * p
    return out


_RISING_CACHE: list[LogPoly] = [LogPoly.one()]


def rising_factorial_logpoly(count: int) -> LogPoly:
    """Coefficients of ``x (x+1) ... (x+count-1)`` (unsigned Stirling numbers of the first kind)."""
    if count < 0 or int(count) != count:
        raise ValueError("count must be a non-negative integer")
    count = int(count)
    while len(_RISING_CACHE) <= count:
        r = len(_RISING_CACHE) - 1
        # multiply by (x + r); log 0 = -inf for r = 0
        factor = LogPoly(0, [np.log(r) if r > 0 else -np.inf, 0.0])
        prod = _RISING_CACHE[-1] * factor
        if r == 0:
            prod = LogPoly(1, prod.log_coeffs[1:])
        _RISING_CACHE.append(prod)
    return _RISING_CACHE[count]


def _geometric(s: float, order: int) -> np.ndarray:
    return np.arange(order + 1) * np.log(s)


@lru_cache(maxsize=64)
def group_series(n: int, m1: int) -> LogPoly:
    """Series in ``1/u`` for ``u^n / prod_{s=1}^{n} (u - s)``, truncated at order ``m1``."""
    out = LogPoly.one()
    for s in range(1, n + 1):
        out = (out * LogPoly(0, _geometric(s, m1))).truncate(m1)
    return out


@lru_cache(maxsize=64)
def prior_series(n: int, c: float, gamma: float, m2: int) -> LogPoly:
    """Series in ``1/u`` for ``u^c (u - (n - gamma))^-c``, truncated at order ``m2``."""
    t = np.arange(m2 + 1)
    shift = n - gamma
    logbinom = special.gammaln(c + t) - special.gammaln(c) - special.gammaln(t + 1)
    if shift > 0:
        return LogPoly(0, logbinom + t * np.log(shift))
    return LogPoly(0, np.where(t == 0, 0.0, -np.inf))


@lru_cache(maxsize=64)
def cstar_series(n: int, k: int, c: float, gamma: float, m1: int, m2: int) -> LogPoly:
    """Full product of ``k`` group series and the prior series (degree ``k m1 + m2``)."""
    group = group_series(n, m1)
    out = LogPoly.one()
    for _ in range(k):
        out = out * group
    return out * prior_series(n, c, gamma, m2)


# --------------------------------------------------------------------------
# approximate posterior
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ApproxPosterior:
    a: LogPoly
    b: LogPoly
    cstar: LogPoly
    n: int
    k: int
    c: float
    gamma: float
    m1: int
    m2: int

    @property
    def g0(self) -> float:
        return self.n * self.k + self.c

    @property
    def g(self) -> np.ndarray:
        """``g(l)`` for every ``l`` in the support of ``cstar``."""
        return self.g0 + self.cstar.degrees


def build_approx_posterior(y_aug, n: int, prior: PriorHyper, m1: int, m2: int) -> ApproxPosterior:
    """Coefficient tables of the approximate posterior for homogeneous counts ``n``."""
    y = np.asarray(y_aug)
    if y.ndim != 1 or y.size == 0 or np.any(np.mod(y, 1) != 0):
        raise ValueError("y_aug must be a non-empty integer vector")
    y = y.astype(np.int64)
    n = int(n)
    if n < 1 or np.any(y < 0) or np.any(y > n):
        raise ValueError("need 0 <= y_aug <= n with n >= 1")
    if m1 < 0 or m2 < 0 or int(m1) != m1 or int(m2) != m2:
        raise ValueError("m1 and m2 must be non-negative integers")
    if prior.gamma > n:
        raise ValueError(f"gamma={prior.gamma} exceeds n={n}; series coefficients would change sign")
    k = y.size
    a = log_poly_product(rising_factorial_logpoly(v) for v in y if v >= 1)
    b = log_poly_product(rising_factorial_logpoly(n - v) for v in y if v <= n - 1)
    cstar = cstar_series(n, k, float(prior.c), float(prior.gamma), int(m1), int(m2))
    # integrability needs i + j < g(l) - 2 for every live triple
    if a.max_degree + b.max_degree >= n * k + prior.c - 2:
        raise ValueError("approximate posterior cannot be normalized: need i + j < g(l) - 2")
    return ApproxPosterior(a, b, cstar, n, k, float(prior.c), float(prior.gamma), int(m1), int(m2))


def logpdf_approx_joint(ap: ApproxPosterior, alpha, beta) -> np.ndarray:
    """Unnormalized ``log p*(alpha, beta)``; broadcasts over array inputs."""
    alpha, beta = np.broadcast_arrays(np.asarray(alpha, dtype=float), np.asarray(beta, dtype=float))
    if np.any(alpha <= 0) or np.any(beta <= 0):
        raise ValueError("alpha and beta must be positive")
    log_u = np.log(alpha + beta + ap.n)
    # the sum factorizes: a(alpha) b(beta) sum_l c_l u^-g(l)
    out = ap.a.log_eval(np.log(alpha)) + ap.b.log_eval(np.log(beta))
    out = out - ap.g0 * log_u + ap.cstar.log_eval(-log_u)
    return out[()] if out.ndim == 0 else out


def beta_marginal_log_weights(ap: ApproxPosterior):
    """Brute-force mixture weights over all ``(i, j, l)`` for the marginal of beta.

    Returns ``(i, j, l, logw)`` as flat arrays. Used as a reference for the
    collapsed tables in :func:`sample_beta_marginal`.
    """
    i = ap.a.degrees[:, None, None]
    j = ap.b.degrees[None, :, None]
    l_idx = ap.cstar.degrees[None, None, :]
    g = ap.g0 + l_idx
    logw = (ap.a.log_coeffs[:, None, None] + ap.b.log_coeffs[None, :, None]
            + ap.cstar.log_coeffs[None, None, :]
            + special.betaln(g - i - 1, i + 1) + special.betaln(j + 1, g - i - j - 2)
            - (g - i - j - 2) * np.log(ap.n))
    i, j, l_idx = np.broadcast_arrays(i, j, l_idx)
    return i.ravel(), j.ravel(), l_idx.ravel(), logw.ravel()


def _collapsed_tables(ap: ApproxPosterior):
    # the weight depends on (i, j) only through a_i i!, b_j j! and s = i + j
    la = ap.a.log_coeffs + special.gammaln(ap.a.degrees + 1.0)
    lb = ap.b.log_coeffs + special.gammaln(ap.b.degrees + 1.0)
    s = ap.a.min_degree + ap.b.min_degree + np.arange(la.size + lb.size - 1)
    d = log_convolve(la, lb)
    g = ap.g[None, :]
    rest = g - s[:, None] - 2.0
    table = (d[:, None] + ap.cstar.log_coeffs[None, :]
             + special.gammaln(rest) - special.gammaln(g) - rest * np.log(ap.n))
    return la, lb, s, table


def sample_beta_marginal(ap: ApproxPosterior, rng: np.random.Generator) -> float:
    """Draw beta from the marginal of ``p*`` (alpha integrated out)."""
    la, lb, s_vals, table = _collapsed_tables(ap)
    flat = categorical_from_log_weights(table.ravel(), rng)
    si, li = divmod(int(flat), table.shape[1])
    s = int(s_vals[si])
    g = float(ap.g[li])
    # split s = i + j
    i = np.arange(max(ap.a.min_degree, s - ap.b.max_degree), min(ap.a.max_degree, s - ap.b.min_degree) + 1)
    w = la[i - ap.a.min_degree] + lb[s - i - ap.b.min_degree]
    i_pick = int(i[categorical_from_log_weights(w, rng)])
    j = s - i_pick
    shape2 = g - s - 2.0
    if not (shape2 > 0):
        raise NumericalAbort(f"non-positive Beta parameter {shape2}")
    # B ~ Beta(j+1, shape2); beta = n B / (1 - B) is a scaled Beta-prime ratio
    return float(ap.n * rng.gamma(j + 1.0) / rng.gamma(shape2))


def alpha_conditional_log_weights(ap: ApproxPosterior, beta: float):
    """Mixture weights over ``(i, l)`` for ``alpha | beta``; returns ``(i, l, logw)`` grids."""
    i = ap.a.degrees[:, None].astype(float)
    g = ap.g[None, :]
    l_idx = ap.cstar.degrees[None, :]
    logw = (ap.a.log_coeffs[:, None] + ap.cstar.log_coeffs[None, :]
            + special.betaln(i + 1.0, g - i - 1.0) - (l_idx - i - 1.0) * np.log(beta + ap.n))
    return np.broadcast_to(i, logw.shape), np.broadcast_to(l_idx, logw.shape), logw


def sample_alpha_given_beta(ap: ApproxPosterior, beta: float, rng: np.random.Generator) -> float:
    """Draw alpha from ``p*(alpha | beta)``."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    i, l_idx, logw = alpha_conditional_log_weights(ap, beta)
    flat = categorical_from_log_weights(logw.ravel(), rng)
    ii = float(i.ravel()[flat])
    g = ap.g0 + float(l_idx.ravel()[flat])
    shape2 = g - ii - 1.0
    if not (shape2 > 0):
        raise NumericalAbort(f"non-positive Beta parameter {shape2}")
    # A ~ Beta(i+1, g-i-1); alpha = (n + beta) A / (1 - A)
    return float((ap.n + beta) * rng.gamma(ii + 1.0) / rng.gamma(shape2))


# --------------------------------------------------------------------------
# Gibbs
# --------------------------------------------------------------------------

def augment_counts(data: BinData, alpha: float, beta: float, rng: np.random.Generator) -> np.ndarray:
    """Draw ``theta`` and the missing successes; return ``y_aug`` out of ``n_max`` trials."""
    theta = rng.beta(data.y + alpha, data.n - data.y + beta)
    return data.y + rng.binomial(data.n_max - data.n, theta)


def run_gibbs_betabin(data: BinData, prior: PriorHyper, m1: int, m2: int, cfg: GibbsConfig,
                      rng: np.random.Generator | None = None) -> ChainOutput:
    """DTA Gibbs sampler over ``(alpha, beta)`` with the approximate posterior step.

    Each sweep augments every group to ``n_max`` trials, rebuilds the
    coefficient tables for the new ``y_aug``, then draws beta from its
    marginal and alpha given beta. Unless ``cfg.init`` supplies them, the
    starting values are Gamma(10, 1) draws.
    """
    rng = make_rng(cfg.seed) if rng is None else rng
    if prior.gamma > data.n_max:
        raise ValueError(f"gamma={prior.gamma} exceeds n_max={data.n_max}")
    init = cfg.init or {}
    alpha = float(init["alpha"]) if "alpha" in init else float(rng.gamma(10.0))
    beta = float(init["beta"]) if "beta" in init else float(rng.gamma(10.0))

    out = np.empty((cfg.n_iter - cfg.burn_in, 2))
    for t in range(cfg.n_iter):
        y_aug = augment_counts(data, alpha, beta, rng)
        try:
            ap = build_approx_posterior(y_aug, data.n_max, prior, m1, m2)
        except ValueError as exc:
            raise NumericalAbort(f"sweep {t}: y_aug={y_aug.tolist()}: {exc}") from None
        beta = sample_beta_marginal(ap, rng)
        alpha = sample_alpha_given_beta(ap, beta, rng)
        if not (np.isfinite(alpha) and np.isfinite(beta) and alpha > 0 and beta > 0):
            raise NumericalAbort(f"sweep {t}: invalid draw alpha={alpha}, beta={beta}")
        if t >= cfg.burn_in:
            out[t - cfg.burn_in] = alpha, beta
    return ChainOutput(out, ["alpha", "beta"], cfg.seed, cfg.burn_in, "dta", {})


# --------------------------------------------------------------------------
# grid oracle
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GridDensity:
    """Density over ``(log alpha, log beta)`` with ``density[i, j]`` at ``(log_alpha[i], log_beta[j])``."""

    log_alpha: np.ndarray
    log_beta: np.ndarray
    density: np.ndarray

    def cell_weights(self) -> np.ndarray:
        return np.outer(_trapezoid_weights(self.log_alpha), _trapezoid_weights(self.log_beta))


def _trapezoid_weights(x: np.ndarray) -> np.ndarray:
    d = np.diff(x)
    w = np.zeros_like(x)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def _check_axis(x, name):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 3 or np.any(np.diff(x) <= 0):
        raise ValueError(f"{name} must be an increasing vector of length >= 3")
    return x


def log_exact_density(data: BinData, prior: PriorHyper, alpha, beta) -> np.ndarray:
    """Unnormalized exact log posterior of ``(log alpha, log beta)`` (includes the Jacobian)."""
    alpha, beta = np.broadcast_arrays(np.asarray(alpha, dtype=float), np.asarray(beta, dtype=float))
    a = alpha[..., None]
    b = beta[..., None]
    y, n = data.y, data.n
    loglik = np.sum(special.betaln(y + a, n - y + b) - special.betaln(a, b), axis=-1)
    loglik = loglik + np.sum(special.gammaln(n + 1.0) - special.gammaln(y + 1.0) - special.gammaln(n - y + 1.0))
    return loglik - prior.c * np.log(alpha + beta + prior.gamma) + np.log(alpha) + np.log(beta)


def _normalize_grid(log_alpha, log_beta, logp, tail) -> GridDensity:
    dens = np.exp(logp - logp.max())
    if tail is not None:
        edge = max(dens[0].max(), dens[-1].max(), dens[:, 0].max(), dens[:, -1].max())
        if edge > tail:
            raise ValueError(f"grid too narrow: edge density {edge:.3g} of peak exceeds {tail:g}")
    grid = GridDensity(log_alpha, log_beta, dens)
    return GridDensity(log_alpha, log_beta, dens / np.sum(dens * grid.cell_weights()))


def exact_grid_posterior(data: BinData, prior: PriorHyper, log_alpha, log_beta,
                         tail: float | None = 1e-8) -> GridDensity:
    """Exact posterior of ``(log alpha, log beta)`` normalized on the grid by the trapezoid rule."""
    la = _check_axis(log_alpha, "log_alpha")
    lb = _check_axis(log_beta, "log_beta")
    logp = log_exact_density(data, prior, np.exp(la)[:, None], np.exp(lb)[None, :])
    return _normalize_grid(la, lb, logp, tail)


def approx_grid_posterior(ap: ApproxPosterior, log_alpha, log_beta,
                          tail: float | None = None) -> GridDensity:
    """``p*`` on the ``(log alpha, log beta)`` scale, normalized on the grid."""
    la = _check_axis(log_alpha, "log_alpha")
    lb = _check_axis(log_beta, "log_beta")
    A, B = np.exp(la)[:, None], np.exp(lb)[None, :]
    logp = logpdf_approx_joint(ap, A, B) + la[:, None] + lb[None, :]
    return _normalize_grid(la, lb, logp, tail)


def total_variation(p: GridDensity, q: GridDensity) -> float:
    """Half the trapezoid integral of ``|p - q|`` on a shared grid."""
    if p.density.shape != q.density.shape or not (
            np.array_equal(p.log_alpha, q.log_alpha) and np.array_equal(p.log_beta, q.log_beta)):
        raise ValueError("densities live on different grids")
    return float(0.5 * np.sum(np.abs(p.density - q.density) * p.cell_weights()))


def hpd_level(grid: GridDensity, mass: float) -> float:
    """Density level whose super-level set holds ``mass`` of the grid probability."""
    if not 0 < mass < 1:
        raise ValueError("mass must lie in (0, 1)")
    d = grid.density.ravel()
    w = (grid.density * grid.cell_weights()).ravel()
    order = np.argsort(d)[::-1]
    cum = np.cumsum(w[order])
    cut = np.searchsorted(cum, mass * cum[-1])
    return float(d[order[min(cut, d.size - 1)]])


def default_grid(data: BinData, prior: PriorHyper, size: int = 401, tail: float = 1e-8):
    """Square ``(log alpha, log beta)`` grid whose edges satisfy the tail condition."""
    lo, hi = -4.0, 12.0
    for _ in range(40):
        ax = np.linspace(lo, hi, size)
        logp = log_exact_density(data, prior, np.exp(ax)[:, None], np.exp(ax)[None, :])
        dens = np.exp(logp - logp.max())
        low_edge = max(dens[0].max(), dens[:, 0].max())
        high_edge = max(dens[-1].max(), dens[:, -1].max())
        if low_edge <= tail and high_edge <= tail:
            return ax, ax.copy()
        if low_edge > tail:
            lo -= 2.0
        if high_edge > tail:
            hi += 4.0
    raise ValueError("could not bracket the posterior of (log alpha, log beta)")


def write_grid_csv(grid: GridDensity, path) -> None:
    """Long-format CSV ``log_alpha,log_beta,density`` for contour plotting."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["log_alpha", "log_beta", "density"])
        for i, la in enumerate(grid.log_alpha):
            for j, lb in enumerate(grid.log_beta):
                w.writerow([repr(float(la)), repr(float(lb)), repr(float(grid.density[i, j]))])
