"""Random variates, special functions and SPD matrix helpers shared by the models.

Every sampler takes an explicit :class:`numpy.random.Generator`; build one with
:func:`make_rng` so that a (seed, chain) pair always maps to the same stream.
"""

from __future__ import annotations

import numpy as np
from scipy import special, stats

SPD_RTOL = 1e-10


class NumericalAbort(RuntimeError):
    """A sampler gave up instead of looping on a vanishing acceptance region."""


def make_rng(seed: int, chain: int | None = None) -> np.random.Generator:
    """Return a PCG64 generator for ``seed`` (and optionally a chain index).

    Chains derived from the same seed use distinct ``SeedSequence`` entropy
    so their streams do not overlap.
    """
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    entropy = seed if chain is None else [seed, chain]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def chain_seed(seed: int, chain: int) -> int:
    """Deterministic 63-bit integer seed for chain ``chain`` of a run."""
    return int(np.random.SeedSequence([seed, chain]).generate_state(2, np.uint64)[0] >> np.uint64(1))


# --------------------------------------------------------------------------
# symmetric positive definite matrices
# --------------------------------------------------------------------------

def symmetrize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def check_spd(M: np.ndarray, name: str = "matrix", semidefinite: bool = False) -> np.ndarray:
    """Validate a symmetric (semi-)definite matrix and return it as float array."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    scale = max(np.max(np.abs(M)), 1e-300)
    if np.max(np.abs(M - M.T)) > 1e-12 * scale:
        raise ValueError(f"{name} is not symmetric")
    eig = np.linalg.eigvalsh(M)
    floor = -SPD_RTOL * max(abs(eig[-1]), 1e-300)
    if semidefinite:
        if eig[0] < floor:
            raise ValueError(f"{name} is not positive semi-definite (min eigenvalue {eig[0]:.3g})")
    elif eig[0] <= max(-floor, 0.0):
        raise ValueError(f"{name} is not positive definite (min eigenvalue {eig[0]:.3g})")
    return M


def is_spd(M: np.ndarray) -> bool:
    """Cholesky test for strict positive definiteness."""
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return False
    return True


def sym_sqrt(M: np.ndarray) -> np.ndarray:
    """Symmetric square root ``S`` with ``S @ S == M`` via ``M = Q diag(lam) Q^T``.

    Eigenvalues down to ``-1e-10 * max(lam)`` are treated as round-off and
    clipped to zero; anything more negative is an error.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("sym_sqrt expects a square matrix")
    scale = max(np.max(np.abs(M)), 1e-300)
    if np.max(np.abs(M - M.T)) > 1e-12 * scale:
        raise ValueError("sym_sqrt expects a symmetric matrix")
    lam, Q = np.linalg.eigh(symmetrize(M))
    if lam[0] < -SPD_RTOL * max(abs(lam[-1]), 1e-300):
        raise ValueError(f"matrix has a negative eigenvalue {lam[0]:.3g}")
    root = (Q * np.sqrt(np.clip(lam, 0.0, None))) @ Q.T
    return symmetrize(root)


def sample_gaussian_psd(mean: np.ndarray, cov: np.ndarray, rng: np.random.Generator,
                        rtol: float = 1e-12) -> np.ndarray:
    """Draw from N(mean, cov) for a stack of possibly singular covariances.

    ``mean`` has shape (..., p) and ``cov`` (..., p, p). Directions whose
    eigenvalue falls below ``rtol * trace`` are held at the mean, which covers
    groups pinned to their observed values.
    """
    lam, Q = np.linalg.eigh(symmetrize(cov))
    tr = np.sum(np.abs(lam), axis=-1, keepdims=True)
    lam = np.where(lam > rtol * tr, lam, 0.0)
    z = rng.standard_normal(mean.shape)
    return mean + np.einsum("...ij,...j->...i", Q, np.sqrt(lam) * z)


# --------------------------------------------------------------------------
# special functions
# --------------------------------------------------------------------------

def log_beta_fn(a, b):
    """log B(a, b) = lgamma(a) + lgamma(b) - lgamma(a + b)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("log_beta_fn requires positive arguments")
    out = special.betaln(a, b)
    return float(out) if out.ndim == 0 else out


def log_sum_exp(values) -> float:
    """log(sum(exp(values))) with max-subtraction; ``-inf`` entries are allowed."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("log_sum_exp of an empty sequence")
    vmax = np.max(v)
    if not np.isfinite(vmax):
        return float(vmax)
    return float(vmax + np.log(np.sum(np.exp(v - vmax))))


def normalize_log_weights(logw) -> np.ndarray:
    """Probabilities proportional to ``exp(logw)``; raises if all weights vanish."""
    logw = np.asarray(logw, dtype=float)
    if logw.size == 0 or not np.any(np.isfinite(logw)):
        raise ValueError("need at least one finite log-weight")
    p = np.exp(logw - log_sum_exp(logw))
    return p / p.sum()


def categorical_from_log_weights(logw, rng: np.random.Generator) -> int:
    """Index ``i`` drawn with probability ``exp(logw[i]) / sum(exp(logw))``."""
    p = normalize_log_weights(logw).ravel()
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(p), u * p.sum(), side="right"))
    idx = min(idx, p.size - 1)
    # never land on a zero-probability cell through round-off
    while p[idx] == 0.0:
        idx -= 1
    return idx


# --------------------------------------------------------------------------
# inverse-Gamma / inverse-Wishart
# --------------------------------------------------------------------------

def sample_truncated_inverse_gamma(shape: float, scale: float, lower: float,
                                   rng: np.random.Generator, batch: int = 16,
                                   max_tries: int = 10**7) -> tuple[float, int]:
    """Draw from IG(shape, scale) restricted to ``(lower, inf)`` by rejection.

    IG(a, b) has density proportional to ``x**-(a+1) * exp(-b/x)``. Returns the
    accepted draw and the number of rejected proposals.

    Raises
    ------
    NumericalAbort
        If the truncated region has probability below 1e-12.
    """
    if shape <= 0 or scale <= 0:
        raise ValueError("shape and scale must be positive")
    if lower < 0:
        raise ValueError("lower bound must be non-negative")
    rejected = 0
    checked = lower == 0
    while rejected < max_tries:
        draws = scale / rng.gamma(shape, 1.0, size=batch)
        ok = np.flatnonzero(draws > lower)
        if ok.size:
            rejected += int(ok[0])
            return float(draws[ok[0]]), rejected
        rejected += batch
        if not checked:
            mass = stats.invgamma.sf(lower, shape, scale=scale)
            if mass < 1e-12:
                raise NumericalAbort(
                    f"IG({shape:.4g}, {scale:.4g}) has mass {mass:.3g} above {lower:.4g}; "
                    "refusing to reject-sample")
            checked = True
        batch = min(batch * 2, 1 << 16)
    raise NumericalAbort("truncated inverse-gamma rejection exceeded max_tries")


def sample_inverse_wishart(df: float, scale: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """IW(df, S) draw with density proportional to |K|^-(df+p+1)/2 exp(-tr(S K^-1)/2).

    Bartlett construction of a Wishart(df, S^-1) matrix followed by inversion.
    """
    p = scale.shape[0]
    if df <= p - 1:
        raise ValueError(f"inverse-Wishart needs df > p - 1, got df={df}, p={p}")
    L = np.linalg.cholesky(np.linalg.inv(scale))
    T = np.zeros((p, p))
    T[np.diag_indices(p)] = np.sqrt(rng.chisquare(df - np.arange(p)))
    lower = np.tril_indices(p, -1)
    T[lower] = rng.standard_normal(len(lower[0]))
    LT = L @ T
    # K = (LT LT^T)^-1 computed through the triangular factor
    inv_LT = np.linalg.inv(LT)
    return symmetrize(inv_LT.T @ inv_LT)


def sample_inverse_wishart_shifted(df: float, scale: np.ndarray, shift: np.ndarray,
                                   rng: np.random.Generator, probe: int = 10**6) -> tuple[np.ndarray, int]:
    """Draw ``K ~ IW(df, scale)`` until ``K - shift`` is positive definite.

    Returns ``(K - shift, rejections)``. Aborts when no acceptance occurred in
    ``probe`` proposals, i.e. the acceptance rate is below ``1 / probe``.
    """
    rejected = 0
    while rejected < probe:
        K = sample_inverse_wishart(df, scale, rng)
        A = symmetrize(K - shift)
        if is_spd(A):
            return A, rejected
        rejected += 1
    raise NumericalAbort(f"shifted inverse-Wishart acceptance below 1/{probe}")
