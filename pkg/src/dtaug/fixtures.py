"""Built-in datasets and the univariate simulation design."""

from __future__ import annotations

import numpy as np

from .data import BinData, MultiData, UniData
from .stats import make_rng

# hospital profiling data: (y1, y2, severity, n_patients) for 27 hospitals
HOSPITAL_TABLE = np.array([
    [10.18, 15.06, 0.75, 24],
    [11.55, 17.97, 0.62, 32],
    [16.21, 12.50, 0.66, 32],
    [12.31, 14.88, 0.26, 43],
    [12.88, 15.21, 0.96, 44],
    [11.84, 17.69, 0.44, 45],
    [14.82, 16.91, 0.44, 48],
    [13.05, 15.07, 0.55, 49],
    [12.43, 12.01, 0.33, 51],
    [8.35, 9.43, 0.47, 53],
    [17.97, 26.82, 0.48, 56],
    [11.84, 15.64, 0.34, 58],
    [12.43, 13.94, 0.28, 58],
    [14.73, 15.40, 0.63, 60],
    [15.80, 11.50, 0.26, 61],
    [14.81, 20.56, 0.56, 62],
    [11.14, 13.02, 0.02, 62],
    [17.12, 14.60, 0.41, 66],
    [16.93, 16.28, 0.56, 68],
    [11.02, 13.52, 0.34, 68],
    [14.69, 16.49, 0.56, 72],
    [10.48, 14.24, 0.79, 77],
    [15.82, 15.13, 0.47, 87],
    [12.66, 14.99, 0.71, 122],
    [10.41, 17.25, 0.45, 124],
    [10.32, 10.13, 0.05, 149],
    [13.72, 18.18, 0.77, 198],
])

HOSPITAL_V0 = np.array([[148.87, 140.43],
                        [140.43, 490.60]])

# New York Yankees, 2019 division series: at-bats and hits
BASEBALL_PLAYERS = ("Torres", "Gregorius", "Judge", "Maybin", "Encarnacion",
                    "LeMahieu", "Gardner", "Urshela", "Stanton", "Sanchez")
BASEBALL_N = np.array([12, 10, 9, 3, 13, 14, 12, 12, 6, 8])
BASEBALL_Y = np.array([5, 4, 3, 1, 4, 4, 3, 3, 1, 1])


def hospital() -> MultiData:
    """Bivariate hospital data with ``V_i = V0 / n_i`` and covariates ``(1, severity)``."""
    t = HOSPITAL_TABLE
    V = HOSPITAL_V0[None, :, :] / t[:, 3][:, None, None]
    x = np.column_stack([np.ones(len(t)), t[:, 2]])
    return MultiData(t[:, :2], V, x)


def baseball() -> BinData:
    return BinData(BASEBALL_Y, BASEBALL_N)


FIXTURES = {"hospital": hospital, "baseball": baseball}


def simulate_uni(k: int = 50, beta=0.0, A: float = 5.0, v_mean: float = 10.0,
                 v_sd: float = 2.0, seed: int = 0, X=None) -> UniData:
    """Draw a dataset from the univariate model.

    ``V_i ~ N(v_mean, v_sd^2)`` (non-positive draws are redrawn),
    ``theta_i ~ N(x_i^T beta, A)``, ``y_i ~ N(theta_i, V_i)``. The default
    design is intercept-only.
    """
    if A < 0 or v_mean <= 0 or v_sd <= 0:
        raise ValueError("need A >= 0 and positive v_mean, v_sd")
    rng = make_rng(seed)
    X = np.ones((k, 1)) if X is None else np.asarray(X, dtype=float).reshape(k, -1)
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    V = rng.normal(v_mean, v_sd, k)
    bad = V <= 0
    while np.any(bad):
        V[bad] = rng.normal(v_mean, v_sd, int(bad.sum()))
        bad = V <= 0
    theta = rng.normal(X @ beta, np.sqrt(A))
    y = rng.normal(theta, np.sqrt(V))
    return UniData(y, V, X)
