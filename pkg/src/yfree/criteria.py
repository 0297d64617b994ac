"""Model-selection criteria for linear smoothers.

The y-based criteria (``msv``, ``gcv``, ``loocv``) take the response
explicitly.  The y-free family replaces the quadratic form ``y^T A y`` by a
(semi)norm of ``A``; none of those functions has a ``y`` parameter.

Multi-output smoothers in the vectorized layout (``n * d_out`` columns) are
handled by passing the number of observations ``n`` explicitly, so that the
``I / n`` term still divides by the sample count.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

NORMS = ("trace", "nuclear", "frobenius", "spectral")
Y_FREE_KINDS = frozenset({"msv_tr", "msv_norm", "msv_expected", "gcv_yfree", "in_sample_msv_yfree"})
Y_BASED_KINDS = frozenset({"msv", "gcv", "loocv", "kfold_cv"})
NEEDS_NORM = frozenset({"msv_norm", "gcv_yfree", "in_sample_msv_yfree"})


class UndefinedCriterion(ValueError):
    """The criterion has no value at this smoother (e.g. ``Tr(S) == n`` for GCV)."""


@dataclass(frozen=True)
class CriterionSpec:
    kind: str
    norm: str | None = None
    folds: int = 10
    mode: str = "StS"
    a: float = 1.0

    def __post_init__(self):
        if self.kind not in Y_FREE_KINDS | Y_BASED_KINDS:
            raise ValueError(f"unknown criterion {self.kind!r}")
        if self.kind in NEEDS_NORM:
            if self.norm not in NORMS:
                raise ValueError(f"{self.kind} needs a norm from {NORMS}")
        elif self.kind == "msv_expected":
            if self.norm is not None and self.norm not in NORMS:
                raise ValueError(f"unknown norm {self.norm!r}")
        elif self.norm is not None:
            raise ValueError(f"{self.kind} takes no norm")
        if self.kind == "kfold_cv" and self.folds < 2:
            raise ValueError("k-fold CV needs at least 2 folds")
        if self.mode not in ("StS", "S"):
            raise ValueError("mode must be 'StS' or 'S'")

    @property
    def y_free(self) -> bool:
        return self.kind in Y_FREE_KINDS

    @property
    def label(self) -> str:
        return self.kind if self.norm is None else f"{self.kind}[{self.norm}]"


@dataclass(frozen=True)
class CriterionValue:
    value: float
    components: dict = field(default_factory=dict)

    def __float__(self) -> float:
        return self.value


def matrix_norm(A, norm: str) -> float:
    """Trace seminorm ``|Tr A|`` or the nuclear, Frobenius or spectral norm."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if norm == "trace":
        return float(abs(np.trace(A)))
    if norm == "frobenius":
        return float(np.linalg.norm(A, "fro"))
    if norm not in ("nuclear", "spectral"):
        raise ValueError(f"unknown norm {norm!r}")
    if A.shape[0] == A.shape[1] and np.allclose(A, A.T, rtol=0, atol=1e-14 * max(1.0, np.abs(A).max())):
        sv = np.abs(np.linalg.eigvalsh(0.5 * (A + A.T)))
    else:
        sv = np.linalg.svd(A, compute_uv=False)
    return float(sv.sum() if norm == "nuclear" else sv.max())


def _obs(n_cols: int, n_obs: int | None) -> int:
    return n_cols if n_obs is None else n_obs


def _check_centered(y: np.ndarray) -> None:
    sd = y.std()
    if np.any(np.abs(y.mean(axis=0)) > 1e-8 * max(sd, np.finfo(float).tiny)):
        logger.warning("msv: response is not centered; the first-moment match is not exact")


def msv(y, S_v, n_obs: int | None = None, a: float = 1.0) -> CriterionValue:
    """``|y^T (a I / n - S_v^T S_v / n_v) y|`` (trace of that form for matrix ``y``)."""
    S_v = np.atleast_2d(np.asarray(S_v, dtype=float))
    y = np.asarray(y, dtype=float)
    if y.shape[0] != S_v.shape[1]:
        raise ValueError(f"y has {y.shape[0]} rows, smoother has {S_v.shape[1]} columns")
    n = _obs(S_v.shape[1], n_obs)
    n_v = S_v.shape[0] if n_obs is None else S_v.shape[0] * n // S_v.shape[1]
    _check_centered(y)
    second_y = float(np.sum(y**2)) / n
    second_f = float(np.sum((S_v @ y) ** 2)) / n_v
    return CriterionValue(abs(a * second_y - second_f), {"second_moment_y": second_y, "second_moment_f": second_f})


def _moment_matrix(S_v, n_obs, a):
    S_v = np.atleast_2d(np.asarray(S_v, dtype=float))
    m = S_v.shape[1]
    n = _obs(m, n_obs)
    n_v = S_v.shape[0] if n_obs is None else S_v.shape[0] * n // m
    return a * np.eye(m) / n - S_v.T @ S_v / n_v, n, n_v


def msv_tr(S_v, n_obs: int | None = None, a: float = 1.0) -> CriterionValue:
    """``|Tr(a I / n - S_v^T S_v / n_v)|``, i.e. ``|a - Tr(S_v^T S_v) / n_v|`` for one output."""
    S_v = np.atleast_2d(np.asarray(S_v, dtype=float))
    m = S_v.shape[1]
    n = _obs(m, n_obs)
    n_v = S_v.shape[0] if n_obs is None else S_v.shape[0] * n // m
    tr = float(np.sum(S_v**2))
    return CriterionValue(abs(a * m / n - tr / n_v), {"trace_StS": tr, "n_v": n_v})


def msv_norm(S_v, norm: str, n_obs: int | None = None, a: float = 1.0) -> CriterionValue:
    """``||a I / n - S_v^T S_v / n_v||`` under the chosen (semi)norm."""
    if norm == "trace":
        return msv_tr(S_v, n_obs, a)
    A, _, _ = _moment_matrix(S_v, n_obs, a)
    return CriterionValue(matrix_norm(A, norm))


def msv_expected(E_outer, norm: str | None = None, n_obs: int | None = None, a: float = 1.0) -> CriterionValue:
    """``||a I / n - E[s* s*^T]||``; the default trace seminorm gives ``|a - Tr E|``."""
    E = np.atleast_2d(np.asarray(E_outer, dtype=float))
    if E.shape[0] != E.shape[1]:
        raise ValueError("expected outer product must be square")
    if np.max(np.abs(E - E.T), initial=0.0) > 1e-8 * max(1.0, np.abs(E).max()):
        raise ValueError("expected outer product is not symmetric")
    n = _obs(E.shape[0], n_obs)
    A = a * np.eye(E.shape[0]) / n - E
    return CriterionValue(matrix_norm(A, norm or "trace"), {"trace_E": float(np.trace(E))})


def _resid_trace(S) -> tuple[np.ndarray, float]:
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape[0] != S.shape[1]:
        raise ValueError("in-sample smoother must be square")
    R = np.eye(S.shape[0]) - S
    tr = float(np.trace(R))
    if abs(tr) <= 1e-12 * S.shape[0]:
        raise UndefinedCriterion(f"Tr(I - S) = {tr:g}: GCV undefined (smoother interpolates)")
    return R, tr


def gcv(y, S) -> CriterionValue:
    """``n ||(I - S) y||^2 / Tr(I - S)^2``."""
    R, tr = _resid_trace(S)
    y = np.asarray(y, dtype=float)
    n = R.shape[0]
    rss = float(np.sum((R @ y) ** 2))
    return CriterionValue(n * rss / tr**2, {"rss": rss, "trace_S": n - tr})


def gcv_pointwise(y, S) -> float:
    """The same criterion written as ``mean(((y - f) / (1 - Tr(S)/n))^2)``."""
    S = np.asarray(S, dtype=float)
    y = np.asarray(y, dtype=float)
    n = S.shape[0]
    denom = 1.0 - np.trace(S) / n
    if abs(denom) <= 1e-12:
        raise UndefinedCriterion("Tr(S) = n")
    return float(np.sum(((y - S @ y) / denom) ** 2) / n)


def gcv_yfree(S, norm: str) -> CriterionValue:
    """``||(I - S)^T (I - S)|| / Tr(I - S)^2``."""
    R, tr = _resid_trace(S)
    return CriterionValue(matrix_norm(R.T @ R, norm) / tr**2, {"trace_S": R.shape[0] - tr})


def in_sample_msv_yfree(S, mode: str = "StS", norm: str = "frobenius", n_obs: int | None = None) -> CriterionValue:
    """``||I/n - S^T S / n||`` (``mode="StS"``) or ``||I/n - S/n||`` (``mode="S"``)."""
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape[0] != S.shape[1]:
        raise ValueError("in-sample smoother must be square")
    n = _obs(S.shape[0], n_obs)
    if mode not in ("StS", "S"):
        raise ValueError("mode must be 'StS' or 'S'")
    M = S.T @ S if mode == "StS" else S
    return CriterionValue(matrix_norm((np.eye(S.shape[0]) - M) / n, norm))


def loocv(y, S) -> CriterionValue:
    """Closed-form leave-one-out error ``mean(((y - f) / (1 - S_ii))^2)``."""
    S = np.atleast_2d(np.asarray(S, dtype=float))
    y = np.asarray(y, dtype=float)
    lev = np.diag(S)
    if np.any(np.abs(1.0 - lev) <= 1e-12):
        raise UndefinedCriterion("a diagonal smoother entry equals 1; LOOCV undefined")
    r = (y - S @ y)
    r = r / (1.0 - lev) if y.ndim == 1 else r / (1.0 - lev)[:, None]
    return CriterionValue(float(np.sum(r**2) / S.shape[0]))


def edof(S) -> float:
    """Effective number of parameters, ``Tr(S)``."""
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape[0] != S.shape[1]:
        raise ValueError("in-sample smoother must be square")
    return float(np.trace(S))


def evaluate(spec: CriterionSpec, S=None, S_v=None, y=None, E_outer=None, n_obs: int | None = None) -> CriterionValue:
    """Dispatch on ``spec.kind``.  ``y`` is rejected for y-free kinds."""
    if spec.y_free and y is not None:
        raise TypeError(f"{spec.label} is y-free and must not receive the response")
    kind = spec.kind
    if kind == "msv":
        return msv(y, S_v, n_obs, spec.a)
    if kind == "msv_tr":
        return msv_tr(S_v, n_obs, spec.a)
    if kind == "msv_norm":
        return msv_norm(S_v, spec.norm, n_obs, spec.a)
    if kind == "msv_expected":
        if E_outer is None:
            raise ValueError("msv_expected needs the closed-form expected outer product")
        return msv_expected(E_outer, spec.norm, n_obs, spec.a)
    if kind == "gcv":
        return gcv(y, S)
    if kind == "gcv_yfree":
        return gcv_yfree(S, spec.norm)
    if kind == "in_sample_msv_yfree":
        return in_sample_msv_yfree(S, spec.mode, spec.norm, n_obs)
    if kind == "loocv":
        return loocv(y, S)
    raise ValueError(f"{kind} is evaluated by the selection driver, not pointwise")
