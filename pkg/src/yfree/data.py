"""Datasets, label encodings, standardization, samplers and metrics.

All randomness goes through :func:`make_rng`, which wraps numpy's PCG64
bit generator.  Seeds are plain 64-bit integers, so every sampler here is
reproducible across platforms for a fixed numpy major version.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

#: name of the bit generator used by every sampler, recorded in run manifests
GENERATOR = "numpy.random.PCG64"


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


@dataclass(frozen=True)
class Dataset:
    """Covariates plus an optional target.

    ``response`` holds a real regression target, ``labels`` integer class
    labels in ``1..n_classes``.  At most one of them is set.
    """

    X: np.ndarray
    response: np.ndarray | None = None
    labels: np.ndarray | None = None
    n_classes: int | None = None

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError("X must have at least one row and one column")
        object.__setattr__(self, "X", X)
        if self.response is not None and self.labels is not None:
            raise ValueError("a dataset carries either a response or labels, not both")
        if self.response is not None:
            y = np.asarray(self.response, dtype=float).ravel()
            if y.shape[0] != X.shape[0]:
                raise ValueError("response length does not match X")
            if not np.all(np.isfinite(y)):
                raise ValueError("response contains non-finite values")
            object.__setattr__(self, "response", y)
        if self.labels is not None:
            lab = np.asarray(self.labels).ravel().astype(int)
            if lab.shape[0] != X.shape[0]:
                raise ValueError("labels length does not match X")
            c = self.n_classes if self.n_classes is not None else int(lab.max())
            if c < 2 or lab.min() < 1 or lab.max() > c:
                raise ValueError(f"labels must lie in 1..{c} with at least two classes")
            object.__setattr__(self, "labels", lab)
            object.__setattr__(self, "n_classes", c)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def is_classification(self) -> bool:
        return self.labels is not None

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            self.X[idx],
            None if self.response is None else self.response[idx],
            None if self.labels is None else self.labels[idx],
            self.n_classes,
        )


@dataclass(frozen=True)
class StandardizationStats:
    mean: np.ndarray
    scale: np.ndarray

    def apply(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.mean.shape[0]:
            raise ValueError(f"expected {self.mean.shape[0]} columns, got {X.shape[1]}")
        return (X - self.mean) / self.scale


def fit_standardization(X_fit) -> StandardizationStats:
    """Column means and population standard deviations (ddof=0).

    Zero-variance columns get scale 1, so they standardize to all zeros.
    """
    X_fit = np.atleast_2d(np.asarray(X_fit, dtype=float))
    if X_fit.shape[0] == 0:
        raise ValueError("cannot standardize with an empty fitting matrix")
    mean = X_fit.mean(axis=0)
    scale = X_fit.std(axis=0)
    # relative threshold: a column that is constant up to rounding is degenerate
    degenerate = scale <= 1e-14 * np.maximum(1.0, np.abs(mean))
    scale = np.where(degenerate, 1.0, scale)
    return StandardizationStats(mean, scale)


def standardize(X_fit, X_apply) -> tuple[np.ndarray, StandardizationStats]:
    """Standardize ``X_apply`` with the mean and scale of ``X_fit``.

    To reproduce the convention of standardizing training and test rows
    together, pass the stacked matrix as ``X_fit``.
    """
    stats = fit_standardization(X_fit)
    return stats.apply(X_apply), stats


def one_hot_compact(labels, c: int) -> np.ndarray:
    """Encode labels in ``1..c`` as an ``n x (c-1)`` 0/1 matrix.

    Class ``j < c`` maps to the unit vector ``e_j``; class ``c`` maps to the
    zero row.  For ``c == 2`` this is the usual 0/1 binary coding.
    """
    if c < 2:
        raise ValueError("need at least two classes")
    labels = np.asarray(labels).ravel()
    if not np.all(labels == np.round(labels)):
        raise ValueError("labels must be integers")
    labels = labels.astype(int)
    if labels.size and (labels.min() < 1 or labels.max() > c):
        bad = labels[(labels < 1) | (labels > c)][0]
        raise ValueError(f"label {bad} outside 1..{c}")
    Y = np.zeros((labels.shape[0], c - 1))
    rows = np.flatnonzero(labels < c)
    Y[rows, labels[rows] - 1] = 1.0
    return Y


def class_scores(F_hat, c: int) -> np.ndarray:
    """Append the implied last-class score ``1 - sum_j f_j`` to each row."""
    F_hat = np.asarray(F_hat, dtype=float)
    if F_hat.ndim == 1:
        F_hat = F_hat.reshape(-1, c - 1)
    if F_hat.shape[1] != c - 1:
        raise ValueError(f"expected {c - 1} columns, got {F_hat.shape[1]}")
    if not np.all(np.isfinite(F_hat)):
        raise ValueError("non-finite predictions")
    return np.hstack([F_hat, 1.0 - F_hat.sum(axis=1, keepdims=True)])


def decode_labels(F_hat, c: int) -> np.ndarray:
    """Labels in ``1..c`` from compact one-hot scores; lowest index wins ties."""
    if c < 2:
        raise ValueError("need at least two classes")
    # np.argmax returns the first maximum, which is the tie rule we want
    return np.argmax(class_scores(F_hat, c), axis=1) + 1


def r_squared(y, f_hat) -> float:
    y = np.asarray(y, dtype=float).ravel()
    f_hat = np.asarray(f_hat, dtype=float).ravel()
    if y.shape != f_hat.shape:
        raise ValueError("y and f_hat must have equal length")
    ss_tot = np.sum((y - y.mean()) ** 2)
    if ss_tot == 0:
        raise ValueError("R^2 undefined for constant y")
    return float(1.0 - np.sum((y - f_hat) ** 2) / ss_tot)


def accuracy(labels, predicted) -> float:
    labels = np.asarray(labels).ravel()
    predicted = np.asarray(predicted).ravel()
    if labels.size == 0:
        raise ValueError("empty input")
    if labels.shape != predicted.shape:
        raise ValueError("length mismatch")
    return float(np.mean(labels == predicted))


def validation_jitter(cov: np.ndarray) -> float:
    d = cov.shape[0]
    return 1e-8 * float(np.trace(cov)) / d


def sample_validation_covariates(X, n_v: int, seed: int) -> np.ndarray:
    """Draw ``n_v`` rows from a normal fitted to the rows of ``X``.

    The covariance gets a jitter of ``1e-8 * trace / d`` on the diagonal
    (or ``1e-8`` when the trace is zero) so the factorization exists even for
    duplicated rows or ``n <= d``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    if n < 2:
        raise ValueError("need at least two rows to estimate a covariance")
    if n_v < 1:
        raise ValueError("n_v must be positive")
    mu = X.mean(axis=0)
    cov = np.atleast_2d(np.cov(X, rowvar=False))
    eps = validation_jitter(cov)
    if eps == 0.0:
        eps = 1e-8
    L = np.linalg.cholesky(cov + eps * np.eye(d))
    z = make_rng(seed).standard_normal((n_v, d))
    return mu + z @ L.T


def synth_sin(n: int = 10, noise_sd: float = 0.3, seed: int = 0, n_grid: int = 1000):
    """The ``sin(2 pi x)`` toy problem.

    Returns ``(dataset, x_grid, f_grid)`` with ``x ~ U(-1, 1)`` training
    abscissae and an equispaced grid on ``[-1, 1]`` with the true function.
    """
    if n < 1:
        raise ValueError("n must be positive")
    rng = make_rng(seed)
    x = rng.uniform(-1.0, 1.0, size=n)
    y = np.sin(2 * np.pi * x) + noise_sd * rng.standard_normal(n)
    x_grid = np.linspace(-1.0, 1.0, n_grid)
    return Dataset(x[:, None], response=y), x_grid, np.sin(2 * np.pi * x_grid)


def random_response(n: int, kind: str = "gaussian", seed: int = 0, c: int | None = None):
    """Non-informative build targets.

    ``kind="gaussian"`` gives ``N(0, I_n)``; ``kind="categorical"`` draws
    labels uniformly from ``1..c`` and returns their compact one-hot matrix.
    ``kind="zero"`` returns the zero vector.
    """
    if n < 1:
        raise ValueError("n must be positive")
    rng = make_rng(seed)
    if kind == "gaussian":
        return rng.standard_normal(n)
    if kind == "zero":
        return np.zeros(n)
    if kind == "categorical":
        if c is None or c < 2:
            raise ValueError("categorical responses need c >= 2")
        return one_hot_compact(rng.integers(1, c + 1, size=n), c)
    raise ValueError(f"unknown response kind {kind!r}")


def synth_linear(n: int, d: int, snr: float, seed: int, sigma2: float = 1.0):
    """Isotropic Gaussian design with ``||beta||^2 / sigma2 = snr``."""
    rng = make_rng(seed)
    beta = rng.standard_normal(d)
    beta *= np.sqrt(snr * sigma2) / np.linalg.norm(beta)
    X = rng.standard_normal((n, d))
    y = X @ beta + np.sqrt(sigma2) * rng.standard_normal(n)
    return Dataset(X, response=y), beta


def read_csv(path, target: str | None = None, classification: bool = False) -> Dataset:
    """Load a numeric CSV with a header row.

    Missing or non-numeric cells are rejected with their row and column.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            vals = []
            for col, cell in zip(header, row):
                cell = cell.strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: column {col!r}: not a number: {cell!r}") from None
                if not np.isfinite(v):
                    raise ValueError(f"{path}:{lineno}: column {col!r}: missing or non-finite value")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    A = np.array(rows)
    if target is None:
        return Dataset(A)
    if target not in header:
        raise ValueError(f"{path}: target column {target!r} not in header {header}")
    j = header.index(target)
    X = np.delete(A, j, axis=1)
    t = A[:, j]
    if classification:
        # labels are remapped to 1..c in sorted order of the raw codes
        codes, lab = np.unique(t, return_inverse=True)
        return Dataset(X, labels=lab + 1, n_classes=len(codes))
    return Dataset(X, response=t)
