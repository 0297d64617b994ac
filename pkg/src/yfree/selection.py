"""Grid-search model selection over smoother families.

The y-free path (:func:`grid_select` with a y-free criterion) builds every
candidate smoother from covariates alone and never sees the response.  The
y-based baselines are :func:`grid_select` with ``msv``/``gcv``/``loocv`` and
:func:`kfold_cv_select`.

Tie rule: candidates whose criterion values agree to a relative ``1e-12``
are tied, and the most regularized one wins (larger ``lam``, ``sigma`` or
``k``; smaller ``t`` or ``epochs``).  The reduction depends on values only,
never on evaluation order, so grid order and worker count do not matter.
"""
from __future__ import annotations

import csv
import itertools
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import linalg

from . import criteria, smoothers
from .criteria import CriterionSpec
from .data import decode_labels, make_rng, one_hot_compact

logger = logging.getLogger(__name__)

TIE_RTOL = 1e-12
WORKERS_ENV = "YFREE_WORKERS"


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        logger.warning("ignoring non-integer %s", WORKERS_ENV)
        return 1


@dataclass(frozen=True)
class HyperGrid:
    """Named axes of candidate values, each finite, nonempty and ascending."""

    axes: dict

    def __post_init__(self):
        clean = {}
        for name, vals in self.axes.items():
            v = np.asarray(vals, dtype=float).ravel()
            if v.size == 0:
                raise ValueError(f"axis {name!r} is empty")
            if not np.all(np.isfinite(v)):
                raise ValueError(f"axis {name!r} has non-finite values")
            if np.any(np.diff(v) < 0):
                raise ValueError(f"axis {name!r} must be sorted ascending")
            clean[name] = tuple(v.tolist())
        object.__setattr__(self, "axes", clean)

    @property
    def names(self) -> tuple:
        return tuple(self.axes)

    def points(self) -> list[dict]:
        return [dict(zip(self.names, combo)) for combo in itertools.product(*self.axes.values())]

    def __len__(self) -> int:
        return int(np.prod([len(v) for v in self.axes.values()]))


@dataclass(frozen=True)
class Family:
    """A smoother family: its hyperparameter axes and regularization direction.

    ``direction[axis] = +1`` means larger values regularize more.
    """

    name: str
    axes: tuple
    direction: dict
    build: Callable
    expected: Callable | None = None

    def smoother(self, X, X_q=None, X_star=None, **params) -> smoothers.SmootherSet:
        return self.build(X, X_q, X_star, **params)


def _lrr(X, X_q, X_star, lam, scaling="n"):
    return smoothers.lrr_smoother(X, X_q, lam, scaling, X_star)


def _lrr_expected(X, lam, scaling="n"):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return smoothers.expected_outer_lrr(X, lam * X.shape[0] if scaling == "n" else lam)


def _krr(X, X_q, X_star, lam, sigma):
    return smoothers.krr_smoother(X, X_q, lam, sigma, X_star)


def _spline(X, X_q, X_star, lam):
    x = np.asarray(X, dtype=float).reshape(-1)
    xq = None if X_q is None else np.asarray(X_q, dtype=float).reshape(-1)
    xs = None if X_star is None else np.asarray(X_star, dtype=float).reshape(-1)
    # one knot basis for all query blocks, so the support covers every row
    pts = [x] + [b for b in (xq, xs) if b is not None]
    allx = np.concatenate(pts)
    return smoothers.spline_smoother(x, xq, lam, xs, bounds=(allx.min(), allx.max()))


def _knn(X, X_q, X_star, k):
    return smoothers.knn_smoother(X, X_q, int(round(k)), X_star)


def _gf(X, X_q, X_star, t):
    return smoothers.gradient_flow_smoother(X, X_q, t, X_star)


FAMILIES = {
    "lrr": Family("lrr", ("lam",), {"lam": 1}, _lrr, _lrr_expected),
    "krr": Family("krr", ("lam", "sigma"), {"lam": 1, "sigma": 1}, _krr),
    "spline": Family("spline", ("lam",), {"lam": 1}, _spline),
    "knn": Family("knn", ("k",), {"k": 1}, _knn),
    "gf": Family("gf", ("t",), {"t": -1}, _gf, lambda X, t: smoothers.expected_outer_gf(X, t)),
}


def get_family(name: str) -> Family:
    try:
        return FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown family {name!r}; choose from {sorted(FAMILIES)}") from None


def log_axis(lo: float = 1e-4, hi: float = 20.0, num: int = 200, extra=(1e6,)) -> np.ndarray:
    return np.unique(np.concatenate([np.logspace(np.log10(lo), np.log10(hi), num), np.asarray(extra, float)]))


def default_grid(family: str, n: int) -> HyperGrid:
    """Benchmark grids: 200 log-spaced values in ``[1e-4, 20]`` plus ``1e6``; ``k`` in 2..30 plus ``n``."""
    if family in ("lrr", "spline"):
        return HyperGrid({"lam": log_axis()})
    if family == "krr":
        return HyperGrid({"lam": log_axis(), "sigma": log_axis()})
    if family == "knn":
        ks = sorted({k for k in range(2, 31) if k <= n} | {n})
        return HyperGrid({"k": ks})
    if family == "gf":
        return HyperGrid({"t": np.concatenate([[0.0], np.logspace(-4, 6, 200)])})
    raise ValueError(f"unknown family {family!r}")


def sin_grid(family: str, n: int) -> HyperGrid:
    """Grids of the small synthetic demo: 100 log-spaced values in ``[1e-4, 1]``; ``k`` in 1..10."""
    ax = np.logspace(-4, 0, 100)
    if family in ("lrr", "spline"):
        return HyperGrid({"lam": ax})
    if family == "krr":
        return HyperGrid({"lam": ax, "sigma": ax})
    if family == "knn":
        return HyperGrid({"k": list(range(1, min(10, n) + 1))})
    if family == "gf":
        return HyperGrid({"t": np.concatenate([[0.0], np.logspace(-4, 6, 100)])})
    raise ValueError(f"unknown family {family!r}")


@dataclass
class SelectionResult:
    family: str
    criterion: str
    axes: tuple
    chosen: dict
    value: float
    trace: list = field(default_factory=list)  # (point, value) in grid order
    ties: list = field(default_factory=list)

    def summary(self) -> dict:
        out = {"family": self.family, "criterion": self.criterion}
        out.update({k: self.chosen[k] for k in self.axes})
        out.update({"value": self.value, "n_points": len(self.trace), "n_tied": len(self.ties)})
        return out

    def write_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(list(self.axes) + ["criterion", "value"])
            for point, val in self.trace:
                w.writerow([repr(point[a]) for a in self.axes] + [self.criterion, repr(val)])

    def write_summary(self, path) -> None:
        s = self.summary()
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(list(s))
            w.writerow([repr(v) if isinstance(v, float) else v for v in s.values()])


def reduce_trace(trace, axes, direction) -> tuple[dict, float, list]:
    """Argmin of a ``(point, value)`` trace under the tie rule."""
    vals = np.array([v for _, v in trace], dtype=float)
    finite = np.isfinite(vals)
    if not finite.any():
        raise ValueError("criterion undefined at every grid point")
    vmin = vals[finite].min()
    tol = TIE_RTOL * abs(vmin)
    tied = [trace[i][0] for i in np.flatnonzero(finite & (vals <= vmin + tol))]
    key = lambda p: tuple(direction[a] * p[a] for a in axes)  # noqa: E731
    chosen = max(tied, key=key)
    return chosen, float(vmin), tied


def _evaluate_point(family, point, criterion, X, X_v, y, n_obs):
    needs_v = criterion.kind in ("msv", "msv_tr", "msv_norm")
    try:
        if criterion.kind == "msv_expected":
            if family.expected is None:
                raise ValueError(f"{family.name} has no closed-form expected outer product")
            E = family.expected(X, **point)
            return criteria.msv_expected(E, criterion.norm, n_obs, criterion.a).value
        sm = family.smoother(X, X_v if needs_v else None, None, **point)
        return criteria.evaluate(criterion, S=sm.S, S_v=sm.S_v, y=y, n_obs=n_obs).value
    except (criteria.UndefinedCriterion, linalg.LinAlgError, FloatingPointError) as exc:
        logger.debug("%s at %s: %s", criterion.label, point, exc)
        return np.inf


def grid_select(family, grid: HyperGrid, criterion: CriterionSpec, X, X_v=None, y=None,
                n_obs: int | None = None, workers: int | None = None) -> SelectionResult:
    """Evaluate ``criterion`` at every grid point and return the argmin.

    y-free criteria refuse a response.  Out-of-sample criteria need ``X_v``.
    Points where the criterion is undefined score ``inf``.
    """
    family = get_family(family) if isinstance(family, str) else family
    if criterion.kind == "kfold_cv":
        raise ValueError("use kfold_cv_select for k-fold cross-validation")
    if criterion.y_free and y is not None:
        raise TypeError(f"{criterion.label} is y-free and must not receive the response")
    if not criterion.y_free and y is None:
        raise ValueError(f"{criterion.label} needs the response")
    if set(grid.names) != set(family.axes):
        raise ValueError(f"{family.name} expects axes {family.axes}, grid has {grid.names}")
    if criterion.kind in ("msv", "msv_tr", "msv_norm") and X_v is None:
        raise ValueError(f"{criterion.label} needs validation covariates")
    points = grid.points()
    workers = default_workers() if workers is None else workers
    run = lambda p: _evaluate_point(family, p, criterion, X, X_v, y, n_obs)  # noqa: E731
    if workers > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(run, points))
    else:
        values = [run(p) for p in points]
    trace = list(zip(points, [float(v) for v in values]))
    chosen, vmin, tied = reduce_trace(trace, family.axes, family.direction)
    return SelectionResult(family.name, criterion.label, family.axes, chosen, vmin, trace, tied)


def knn_k_select(criterion: CriterionSpec, X, X_v=None, k_range=None, y=None) -> SelectionResult:
    X = np.asarray(X, dtype=float)
    X = X[:, None] if X.ndim == 1 else X
    n = X.shape[0]
    k_range = range(1, n + 1) if k_range is None else k_range
    ks = sorted({int(k) for k in k_range})
    if ks[0] < 1 or ks[-1] > n:
        raise ValueError(f"k must lie in 1..{n}")
    return grid_select("knn", HyperGrid({"k": ks}), criterion, X, X_v, y)


def fold_indices(n: int, folds: int, seed: int) -> list[np.ndarray]:
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if n < folds:
        raise ValueError(f"{n} rows cannot fill {folds} folds")
    perm = make_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, folds)]


def kfold_cv_select(family, grid: HyperGrid, folds: int, X, y=None, labels=None, n_classes: int | None = None,
                    seed: int = 0, workers: int | None = None) -> SelectionResult:
    """k-fold cross-validation: mean squared error, or misclassification rate with ``labels``.

    Points that cannot be fitted on some fold (e.g. ``k`` above the fold's
    training size) score ``inf``.
    """
    family = get_family(family) if isinstance(family, str) else family
    if (y is None) == (labels is None):
        raise ValueError("pass exactly one of y (regression) or labels (classification)")
    X = np.asarray(X, dtype=float)
    X2 = X[:, None] if X.ndim == 1 else X
    n = X2.shape[0]
    split = fold_indices(n, folds, seed)
    if labels is not None:
        labels = np.asarray(labels).astype(int).ravel()
        c = int(labels.max()) if n_classes is None else n_classes
        target = one_hot_compact(labels, c)
    else:
        target = np.asarray(y, dtype=float)

    def run(point):
        errs = []
        for hold in split:
            fit = np.setdiff1d(np.arange(n), hold)
            try:
                sm = family.smoother(X2[fit], X2[hold], None, **point)
            except (ValueError, linalg.LinAlgError, FloatingPointError):
                return np.inf
            pred = sm.S_v @ target[fit]
            if labels is not None:
                errs.append(np.mean(decode_labels(pred, c) != labels[hold]))
            else:
                errs.append(np.mean((target[hold] - pred) ** 2))
        return float(np.mean(errs))

    points = grid.points()
    workers = default_workers() if workers is None else workers
    if workers > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(run, points))
    else:
        values = [run(p) for p in points]
    trace = list(zip(points, values))
    chosen, vmin, tied = reduce_trace(trace, family.axes, family.direction)
    return SelectionResult(family.name, f"kfold_cv[{folds}]", family.axes, chosen, vmin, trace, tied)


def epoch_select(train_result) -> SelectionResult:
    """Turn a monitored training trace into a selection over ``epochs``."""
    trace = [({"epochs": float(ep)}, float(val)) for ep, _, val in train_result.trace if not np.isnan(val)]
    if not trace:
        raise ValueError("training ran without a monitor")
    chosen, vmin, tied = reduce_trace(trace, ("epochs",), {"epochs": -1})
    return SelectionResult("nn", "monitor", ("epochs",), chosen, vmin, trace, tied)
