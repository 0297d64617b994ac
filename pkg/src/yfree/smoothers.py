"""Smoother matrices for closed-form model families.

Every constructor here reads covariates and hyperparameters only.  The one
exception is :func:`fit_forest`, whose split search needs *some* response;
callers pass a random or zero build target there, never the real outputs.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg
from scipy.interpolate import BSpline
from scipy.spatial.distance import cdist

SVD_CUTOFF = 1e-12


@dataclass
class SmootherSet:
    """In-sample block ``S`` plus optional validation and test blocks.

    Every block has ``n`` columns, one per training observation.
    """

    S: np.ndarray
    S_v: np.ndarray | None = None
    S_star: np.ndarray | None = None

    def __post_init__(self):
        n = self.S.shape[1]
        for name in ("S", "S_v", "S_star"):
            block = getattr(self, name)
            if block is None:
                continue
            if block.ndim != 2 or block.shape[1] != n:
                raise ValueError(f"{name} must have {n} columns, got shape {block.shape}")
            if not np.all(np.isfinite(block)):
                raise FloatingPointError(f"{name} has non-finite entries")

    @property
    def n(self) -> int:
        return self.S.shape[1]


def _as2d(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X[:, None] if X.ndim == 1 else X


def _stack(X, X_q, X_star):
    X = _as2d(X)
    blocks = [X]
    sizes = []
    for B in (X_q, X_star):
        if B is None:
            sizes.append(0)
            continue
        B = _as2d(B)
        if B.shape[1] != X.shape[1]:
            raise ValueError(f"query has {B.shape[1]} columns, training data has {X.shape[1]}")
        blocks.append(B)
        sizes.append(B.shape[0])
    return X, np.vstack(blocks), sizes


def _assemble(full: np.ndarray, n: int, sizes) -> SmootherSet:
    n_v, n_s = sizes
    S = full[:n]
    S_v = full[n:n + n_v] if n_v else None
    S_star = full[n + n_v:n + n_v + n_s] if n_s else None
    return SmootherSet(S, S_v, S_star)


def _svd(Phi: np.ndarray):
    U, s, Vt = np.linalg.svd(Phi, full_matrices=False)
    keep = s > SVD_CUTOFF * (s[0] if s.size else 0.0)
    return U[:, keep], s[keep], Vt[keep]


# ---------------------------------------------------------------- ridge ---

def lrr_smoother(X, X_q=None, lam: float = 0.0, scaling: str = "n", X_star=None) -> SmootherSet:
    """Linear ridge regression smoother rows ``x^T (X^T X + c I)^{-1} X^T``.

    ``scaling="n"`` uses ``c = n * lam``; ``scaling="none"`` uses ``c = lam``.
    At ``lam == 0`` the pseudo-inverse is taken through the SVD of ``X`` with
    relative singular-value cutoff 1e-12.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    X, Z, sizes = _stack(X, X_q, X_star)
    n, p = X.shape
    if scaling == "n":
        c = n * lam
    elif scaling == "none":
        c = lam
    else:
        raise ValueError(f"unknown scaling {scaling!r}")
    if c == 0.0:
        U, s, Vt = _svd(X)
        full = (Z @ Vt.T / s) @ U.T
    elif p <= n:
        A = X.T @ X + c * np.eye(p)
        full = Z @ linalg.solve(A, X.T, assume_a="pos")
    else:
        A = X @ X.T + c * np.eye(n)
        full = linalg.solve(A, X @ Z.T, assume_a="pos").T
    return _assemble(full, n, sizes)


def gaussian_kernel(A, B, sigma: float) -> np.ndarray:
    if sigma <= 0:
        raise ValueError("bandwidth must be positive")
    return np.exp(-cdist(_as2d(A), _as2d(B), "sqeuclidean") / (2.0 * sigma**2))


def krr_smoother(X, X_q=None, lam: float = 0.0, sigma: float = 1.0, X_star=None) -> SmootherSet:
    """Gaussian kernel ridge smoother ``K_q (K + lam I)^{-1}``."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    X, Z, sizes = _stack(X, X_q, X_star)
    n = X.shape[0]
    K = gaussian_kernel(X, X, sigma)
    Kz = gaussian_kernel(Z, X, sigma)
    try:
        full = linalg.solve(K + lam * np.eye(n), Kz.T, assume_a="sym").T
    except linalg.LinAlgError as exc:
        raise linalg.LinAlgError(f"K + lambda I is singular (lambda={lam}, sigma={sigma})") from exc
    if not np.all(np.isfinite(full)):
        raise FloatingPointError("kernel system produced non-finite weights")
    full[:n] = 0.5 * (full[:n] + full[:n].T)
    return _assemble(full, n, sizes)


# --------------------------------------------------------------- spline ---

@dataclass
class CubicSplineBasis:
    """Cubic B-spline basis with one interior knot per training abscissa.

    With ``m`` distinct abscissae this gives ``m + 4`` basis functions.  The
    two boundary knots sit strictly outside the data so they never coincide
    with an interior knot.
    """

    knots: np.ndarray
    lo: float
    hi: float
    degree: int = 3
    _factor: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_abscissae(cls, x, bounds: tuple[float, float] | None = None) -> "CubicSplineBasis":
        xs = np.unique(np.asarray(x, dtype=float))
        if xs.size < 4:
            raise ValueError("need at least 4 distinct abscissae for a cubic smoothing spline")
        span = xs[-1] - xs[0]
        pad = 1e-6 * span
        lo, hi = (xs[0] - 0.01 * span, xs[-1] + 0.01 * span) if bounds is None else bounds
        lo = min(lo, xs[0] - pad)
        hi = max(hi, xs[-1] + pad)
        t = np.concatenate([[lo] * 4, xs, [hi] * 4])
        return cls(t, lo, hi)

    @property
    def size(self) -> int:
        return self.knots.size - self.degree - 1

    def design(self, x, nu: int = 0) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        eye = np.eye(self.size)
        spl = BSpline(self.knots, eye, self.degree, extrapolate=True)
        return spl(x, nu=nu)

    def penalty_factor(self) -> np.ndarray:
        """``R`` with ``R^T R = Omega``: weighted second derivatives at the quadrature nodes.

        Second derivatives are piecewise linear, so a 2-point Gauss-Legendre
        rule on each knot interval integrates their products exactly.
        """
        if self._factor is None:
            nodes, weights = np.polynomial.legendre.leggauss(2)
            br = np.unique(self.knots)
            a, b = br[:-1], br[1:]
            half = 0.5 * (b - a)
            mid = 0.5 * (a + b)
            xq = (mid[:, None] + half[:, None] * nodes).ravel()
            wq = (half[:, None] * weights).ravel()
            self._factor = np.sqrt(wq)[:, None] * self.design(xq, nu=2)
        return self._factor

    def penalty(self) -> np.ndarray:
        """Gram matrix of second derivatives over ``[lo, hi]``."""
        R = self.penalty_factor()
        return R.T @ R


def spline_smoother(x, x_q=None, lam: float = 0.0, x_star=None, bounds=None) -> SmootherSet:
    """Cubic smoothing-spline smoother ``B_q (B^T B + lam Omega)^{-1} B^T``.

    At ``lam == 0`` the basis has more columns than rows and the
    minimum-norm (pseudo-inverse) solution is used, which interpolates.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    basis = CubicSplineBasis.from_abscissae(x, bounds)
    B = basis.design(x)
    parts = [x]
    sizes = []
    for q in (x_q, x_star):
        q = None if q is None else np.asarray(q, dtype=float).ravel()
        sizes.append(0 if q is None else q.size)
        if q is not None:
            parts.append(q)
    Bz = basis.design(np.concatenate(parts))
    if lam == 0.0:
        U, s, Vt = _svd(B)
        full = (Bz @ Vt.T / s) @ U.T
    else:
        # least squares on [B; sqrt(lam) R] with R^T R = Omega: same normal
        # equations, square-root conditioning
        R = basis.penalty_factor()
        M = np.vstack([B, np.sqrt(lam) * R])
        rhs = np.vstack([np.eye(n), np.zeros((R.shape[0], n))])
        coef = np.linalg.lstsq(M, rhs, rcond=None)[0]
        full = Bz @ coef
    full[:n] = 0.5 * (full[:n] + full[:n].T)
    return _assemble(full, n, sizes)


# --------------------------------------------------------- gradient flow ---

def gradient_flow_smoother(Phi, Phi_q=None, t: float = 0.0, Phi_star=None) -> SmootherSet:
    """Gradient-flow smoother ``phi^T Phi^T (Phi Phi^T)^{-1} (I - exp(-t Phi Phi^T))``.

    Evaluated on the thin SVD ``Phi = U diag(s) V^T`` as
    ``phi^T V diag((1 - exp(-t s^2)) / s) U^T``; directions with
    ``s <= 1e-12 s_max`` contribute nothing.
    """
    if t < 0:
        raise ValueError("training time must be nonnegative")
    Phi, Z, sizes = _stack(Phi, Phi_q, Phi_star)
    if not (np.all(np.isfinite(Phi)) and np.all(np.isfinite(Z))):
        raise ValueError("non-finite features")
    U, s, Vt = _svd(Phi)
    w = -np.expm1(-t * s**2) / s
    full = (Z @ Vt.T * w) @ U.T
    return _assemble(full, Phi.shape[0], sizes)


def expected_outer_lrr(Phi, lam: float) -> np.ndarray:
    """``E[s* s*^T]`` for ridge in feature space with ``E[phi phi^T] = I``.

    Equals ``(G + lam I)^{-1} G (G + lam I)^{-1}`` with ``G = Phi Phi^T``.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    U, s, _ = _svd(_as2d(Phi))
    mu = s**2
    return (U * (mu / (mu + lam) ** 2)) @ U.T


def expected_outer_gf(Phi, t: float) -> np.ndarray:
    """``E[s* s*^T]`` for gradient flow: ``(I - exp(-t G))^2 G^{-1}`` on range(G)."""
    if t < 0:
        raise ValueError("training time must be nonnegative")
    U, s, _ = _svd(_as2d(Phi))
    mu = s**2
    return (U * (np.expm1(-t * mu) ** 2 / mu)) @ U.T


# ------------------------------------------------------------------ kNN ---

def knn_smoother(X, X_q=None, k: int = 1, X_star=None) -> SmootherSet:
    """Uniform k-nearest-neighbour weights; distance ties go to the lower index."""
    X, Z, sizes = _stack(X, X_q, X_star)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in 1..{n}")
    D = cdist(Z, X, "sqeuclidean")
    idx = np.argsort(D, axis=1, kind="stable")[:, :k]
    full = np.zeros_like(D)
    np.put_along_axis(full, idx, 1.0 / k, axis=1)
    return _assemble(full, n, sizes)


# -------------------------------------------------------- random forest ---

@dataclass
class Forest:
    """A fitted forest plus, per tree, the bootstrap multiplicity of each row."""

    estimators: list
    counts: np.ndarray  # (n_T, n) in-bag multiplicities
    classification: bool
    n_classes: int | None = None

    @property
    def n_trees(self) -> int:
        return len(self.estimators)


def fit_forest(X, y_build, n_trees: int = 100, seed: int = 0, classification: bool = False,
               **tree_params) -> Forest:
    """Grow a bootstrap forest on a build target.

    Split search is delegated to scikit-learn's CART implementation with its
    default settings (unlimited depth, all features per split for regression,
    ``sqrt(d)`` for classification, bootstrap on).  ``y_build`` must not be
    the real response; pass a random or zero vector, or labels drawn at random.
    """
    from sklearn.ensemble import RandomForestClassifier, RandomForestRegressor

    if n_trees < 1:
        raise ValueError("need at least one tree")
    X = _as2d(X)
    y_build = np.asarray(y_build).ravel()
    cls = RandomForestClassifier if classification else RandomForestRegressor
    params = {"n_estimators": n_trees, "random_state": int(seed) % 2**32, "bootstrap": True, "n_jobs": 1}
    params.update(tree_params)
    model = cls(**params).fit(X, y_build)
    n = X.shape[0]
    counts = np.array([np.bincount(idx, minlength=n) for idx in model.estimators_samples_], dtype=float)
    n_classes = int(np.max(y_build)) if classification else None
    return Forest(list(model.estimators_), counts, classification, n_classes)


def tree_smoother(tree, counts: np.ndarray, X, Z) -> np.ndarray:
    """Weights ``count_i / |R(x*)|`` on rows sharing ``x*``'s leaf."""
    leaf_train = tree.apply(X)
    leaf_q = tree.apply(Z)
    same = leaf_q[:, None] == leaf_train[None, :]
    W = same * counts[None, :]
    size = W.sum(axis=1, keepdims=True)
    if np.any(size == 0):
        raise RuntimeError("query fell into a leaf without in-bag training rows")
    return W / size


def rf_smoother(forest: Forest, X, X_q=None, X_star=None) -> SmootherSet:
    """Average of the per-tree leaf smoothers; every row sums to one."""
    X, Z, sizes = _stack(X, X_q, X_star)
    full = np.zeros((Z.shape[0], X.shape[0]))
    for tree, cnt in zip(forest.estimators, forest.counts):
        full += tree_smoother(tree, cnt, X, Z)
    full /= forest.n_trees
    return _assemble(full, X.shape[0], sizes)


def rf_classify(forest: Forest, X, X_q, labels, c: int, rule: str = "vote") -> np.ndarray:
    """Class predictions from the forest smoothers.

    ``rule="vote"``: each tree predicts the most common label among the
    in-bag rows of the leaf (with multiplicity), then the forest takes the
    majority over trees.  ``rule="pooled"``: argmax of the averaged smoother
    applied to the one-hot labels.  Ties go to the lowest label in both.
    """
    X = _as2d(X)
    Z = _as2d(X_q)
    labels = np.asarray(labels).ravel().astype(int)
    onehot = np.eye(c)[labels - 1]
    if rule == "pooled":
        return np.argmax(rf_smoother(forest, X, Z).S_v @ onehot, axis=1) + 1
    if rule != "vote":
        raise ValueError(f"unknown rule {rule!r}")
    votes = np.zeros((Z.shape[0], c))
    rows = np.arange(Z.shape[0])
    for tree, cnt in zip(forest.estimators, forest.counts):
        per_tree = np.argmax(tree_smoother(tree, cnt, X, Z) @ onehot, axis=1)
        votes[rows, per_tree] += 1
    return np.argmax(votes, axis=1) + 1


# ------------------------------------------------------------- predict ---

def predict(S_block, y, f0=None, f0_train=None) -> np.ndarray:
    """``S_block (y - f0_train) + f0``; offsets default to zero.

    ``y`` may be a vector or a matrix with one column per output.
    """
    S_block = np.asarray(S_block, dtype=float)
    y = np.asarray(y, dtype=float)
    if S_block.shape[1] != y.shape[0]:
        raise ValueError(f"smoother has {S_block.shape[1]} columns but y has {y.shape[0]} rows")
    r = y if f0_train is None else y - np.asarray(f0_train, dtype=float)
    out = S_block @ r
    if f0 is not None:
        f0 = np.asarray(f0, dtype=float)
        if f0.shape != out.shape:
            raise ValueError("offset shape does not match prediction shape")
        out = out + f0
    return out


def write_smoother_csv(path, smoothers: SmootherSet) -> None:
    """Row-major dump: ``block,row,w_0,...,w_{n-1}``."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["block", "row"] + [f"w{j}" for j in range(smoothers.n)])
        for name in ("S", "S_v", "S_star"):
            block = getattr(smoothers, name)
            if block is None:
                continue
            for i, row in enumerate(block):
                w.writerow([name, i] + [repr(float(v)) for v in row])
