"""Observed datasets, run configurations and sampler/EM outputs."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .stats import check_spd


class DataError(ValueError):
    """Input data violate a model precondition."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def _check_full_rank(X: np.ndarray, name: str) -> None:
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise DataError(f"{name} does not have full column rank")


@dataclass(frozen=True)
class UniData:
    """Responses ``y``, known error variances ``V`` and a k-by-m design ``X``."""

    y: np.ndarray
    V: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        V = np.asarray(self.V, dtype=float).ravel()
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        k, m = X.shape
        if y.size != k or V.size != k:
            raise DataError(f"y, V and X disagree on the number of groups ({y.size}, {V.size}, {k})")
        bad = np.flatnonzero(~(V > 0))
        if bad.size:
            raise DataError(f"V must be positive; row {bad[0] + 1} has V={V[bad[0]]}")
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(X)):
            raise DataError("y and X must be finite")
        if k < m + 3:
            raise DataError(f"posterior is improper unless k >= m + 3 (k={k}, m={m})")
        _check_full_rank(X, "X")
        object.__setattr__(self, "y", _readonly(y))
        object.__setattr__(self, "V", _readonly(V))
        object.__setattr__(self, "X", _readonly(X))

    @property
    def k(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class MultiData:
    """p-variate responses with per-group error covariances.

    ``y`` is (k, p), ``V`` is (k, p, p) and ``x`` is the (k, m) covariate
    matrix; the per-group design is ``I_p kron x_i^T``.
    """

    y: np.ndarray
    V: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        k, p = y.shape
        V = np.asarray(self.V, dtype=float).reshape(k, p, p)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[0] != k:
            raise DataError("x and y disagree on the number of groups")
        m = x.shape[1]
        for i in range(k):
            try:
                check_spd(V[i], name=f"V[{i + 1}]")
            except ValueError as exc:
                raise DataError(f"row {i + 1}: {exc}") from None
        if k < m + p + 2:
            raise DataError(f"posterior is improper unless k >= m + p + 2 (k={k}, m={m}, p={p})")
        _check_full_rank(x, "x")
        object.__setattr__(self, "y", _readonly(y))
        object.__setattr__(self, "V", _readonly(V))
        object.__setattr__(self, "x", _readonly(x))

    @property
    def k(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.y.shape[1]

    @property
    def m(self) -> int:
        return self.x.shape[1]

    def design(self, i: int) -> np.ndarray:
        """The p-by-mp matrix ``I_p kron x_i^T`` for group ``i``."""
        return np.kron(np.eye(self.p), self.x[i][None, :])


@dataclass(frozen=True)
class BinData:
    """Success counts ``y`` out of ``n`` trials per group."""

    y: np.ndarray
    n: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y)
        n = np.asarray(self.n)
        if y.shape != n.shape or y.ndim != 1:
            raise DataError("y and n must be 1-d arrays of equal length")
        if not (np.all(np.equal(np.mod(y, 1), 0)) and np.all(np.equal(np.mod(n, 1), 0))):
            raise DataError("y and n must be integers")
        y = y.astype(np.int64)
        n = n.astype(np.int64)
        for i in range(y.size):
            if n[i] < 1:
                raise DataError(f"row {i + 1}: n must be positive")
            if not 0 <= y[i] <= n[i]:
                raise DataError(f"row {i + 1}: need 0 <= y <= n, got y={y[i]}, n={n[i]}")
        if np.count_nonzero((y > 0) & (y < n)) < 2:
            raise DataError("posterior is improper unless at least two groups have 0 < y < n")
        y.setflags(write=False)
        n.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "n", n)

    @property
    def k(self) -> int:
        return self.y.size

    @property
    def n_max(self) -> int:
        return int(self.n.max())


@dataclass(frozen=True)
class GibbsConfig:
    n_iter: int = 5100
    burn_in: int = 100
    seed: int = 0
    init: dict | None = None

    def __post_init__(self):
        if not self.n_iter > self.burn_in >= 0:
            raise ValueError("need n_iter > burn_in >= 0")


@dataclass(frozen=True)
class EmConfig:
    """EM stopping rule and starting point.

    ``criterion="loglik"`` stops when ``|l_new - l_old| / |l_new| < tol``;
    ``criterion="param"`` stops when the largest absolute change over all
    parameter entries is below ``tol``.
    """

    tol: float = 1e-10
    max_iter: int = 100_000
    init: dict | None = None
    criterion: str = "loglik"

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.criterion not in ("loglik", "param"):
            raise ValueError("criterion must be 'loglik' or 'param'")


def has_converged(cfg: EmConfig, old, new, ll_old: float, ll_new: float) -> bool:
    if cfg.criterion == "param":
        return bool(np.max(np.abs(new.as_vector() - old.as_vector())) < cfg.tol)
    return abs(ll_new - ll_old) <= cfg.tol * abs(ll_new)


@dataclass
class ChainOutput:
    """Post-burn-in draws, one row per retained iteration."""

    draws: np.ndarray
    names: list[str]
    seed: int
    burn_in: int
    scheme: str = ""
    rejection_counts: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.draws[:, self.names.index(name)]

    def __len__(self) -> int:
        return self.draws.shape[0]


@dataclass
class EmTrace:
    """EM iterates (row 0 is the starting point) and observed log-likelihoods."""

    iterates: list
    loglik: list[float]
    converged: bool
    n_iter: int
    scheme: str = ""

    @property
    def final(self):
        return self.iterates[-1]


# --------------------------------------------------------------------------
# CSV ingestion
# --------------------------------------------------------------------------

def _read_rows(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: line {lineno} has {len(row)} fields, expected {len(header)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise DataError(f"{path}: line {lineno} is not numeric") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    return header, np.array(rows)


def _columns(header, prefix):
    cols = [h for h in header if h.startswith(prefix) and h[len(prefix):].isdigit()]
    return sorted(cols, key=lambda h: int(h[len(prefix):]))


def load_dataset(path, kind: str):
    """Load a ``uni``, ``multi`` or ``bin`` dataset from a headed CSV.

    Column layouts:

    - uni: ``y,V,x1..xm``
    - multi: ``y1..yp``, upper-triangle covariance ``v11,v12,..,vpp``, ``x1..xm``
    - bin: ``y,n``
    """
    header, rows = _read_rows(path)
    idx = {h: j for j, h in enumerate(header)}
    try:
        if kind == "uni":
            xs = _columns(header, "x")
            if not xs:
                raise DataError("uni data need at least one x column")
            return UniData(rows[:, idx["y"]], rows[:, idx["V"]], rows[:, [idx[c] for c in xs]])
        if kind == "bin":
            return BinData(rows[:, idx["y"]], rows[:, idx["n"]])
        if kind == "multi":
            ys = _columns(header, "y")
            xs = _columns(header, "x")
            p = len(ys)
            if p == 0 or not xs:
                raise DataError("multi data need y1..yp and x1..xm columns")
            k = rows.shape[0]
            V = np.empty((k, p, p))
            for a in range(p):
                for b in range(a, p):
                    col = rows[:, idx[f"v{a + 1}{b + 1}"]]
                    V[:, a, b] = col
                    V[:, b, a] = col
            return MultiData(rows[:, [idx[c] for c in ys]], V, rows[:, [idx[c] for c in xs]])
    except KeyError as exc:
        raise DataError(f"{path}: missing column {exc.args[0]}") from None
    raise ValueError(f"unknown dataset kind {kind!r}")


def write_dataset(data, path) -> None:
    """Inverse of :func:`load_dataset` (full float precision)."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if isinstance(data, BinData):
            w.writerow(["y", "n"])
            w.writerows(zip(data.y.tolist(), data.n.tolist()))
        elif isinstance(data, UniData):
            w.writerow(["y", "V"] + [f"x{j + 1}" for j in range(data.m)])
            for i in range(data.k):
                w.writerow([repr(float(data.y[i])), repr(float(data.V[i]))] + [repr(float(v)) for v in data.X[i]])
        elif isinstance(data, MultiData):
            p, m = data.p, data.m
            tri = [(a, b) for a in range(p) for b in range(a, p)]
            w.writerow([f"y{j + 1}" for j in range(p)] + [f"v{a + 1}{b + 1}" for a, b in tri]
                       + [f"x{j + 1}" for j in range(m)])
            for i in range(data.k):
                w.writerow([repr(float(v)) for v in data.y[i]]
                           + [repr(float(data.V[i, a, b])) for a, b in tri]
                           + [repr(float(v)) for v in data.x[i]])
        else:
            raise TypeError(f"cannot write {type(data).__name__}")
