"""One-hidden-layer networks trained as y-free smoothers.

The smoother recursion runs in lockstep with gradient descent with momentum
on a *build* target (random labels, a Gaussian draw or zeros).  The true
response only enters afterwards through :func:`yfree.smoothers.predict`.

Multi-output quantities use the row-major vectorization: observation ``i``,
output ``o`` sits at index ``i * d_out + o``.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import criteria
from .data import make_rng
from .smoothers import SmootherSet

logger = logging.getLogger(__name__)

PROB_CLAMP = 1e-9


@dataclass
class Network:
    """``x -> head(act(x W1 + b1) W2 + b2)``; ``width=0`` is a plain linear model.

    ``head="softmax"`` maps the ``d_out`` logits to compact class
    probabilities ``exp(g_j) / (1 + sum_k exp(g_k))``.
    """

    d_in: int
    width: int
    d_out: int
    theta: np.ndarray
    activation: str = "tanh"
    head: str = "identity"
    bias: bool = True

    def __post_init__(self):
        if self.activation not in ("tanh", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.head not in ("identity", "softmax"):
            raise ValueError(f"unknown head {self.head!r}")
        self.theta = np.asarray(self.theta, dtype=float).copy()
        if self.theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {self.theta.shape}")
        if not np.all(np.isfinite(self.theta)):
            raise ValueError("non-finite parameters")

    @property
    def n_params(self) -> int:
        d, h, o, b = self.d_in, self.width, self.d_out, int(self.bias)
        if h == 0:
            return d * o + b * o
        return d * h + b * h + h * o + b * o

    def unpack(self, theta=None):
        th = self.theta if theta is None else theta
        d, h, o = self.d_in, self.width, self.d_out
        if h == 0:
            W = th[:d * o].reshape(d, o)
            b = th[d * o:] if self.bias else np.zeros(o)
            return W, b
        k = 0
        W1 = th[k:k + d * h].reshape(d, h); k += d * h
        if self.bias:
            b1 = th[k:k + h]; k += h
        else:
            b1 = np.zeros(h)
        W2 = th[k:k + h * o].reshape(h, o); k += h * o
        b2 = th[k:k + o] if self.bias else np.zeros(o)
        return W1, b1, W2, b2


def init_network(d_in: int, width: int = 20, d_out: int = 1, seed: int = 0, activation: str = "tanh",
                 head: str = "identity", bias: bool = True) -> Network:
    """Hidden weights ``N(0, 1/d_in)``, output weights ``N(0, 1/width)``, zero biases."""
    rng = make_rng(seed)
    if width == 0:
        parts = [rng.normal(0.0, 1.0 / np.sqrt(d_in), d_in * d_out)]
        if bias:
            parts.append(np.zeros(d_out))
    else:
        parts = [rng.normal(0.0, 1.0 / np.sqrt(d_in), d_in * width)]
        if bias:
            parts.append(np.zeros(width))
        parts.append(rng.normal(0.0, 1.0 / np.sqrt(width), width * d_out))
        if bias:
            parts.append(np.zeros(d_out))
    return Network(d_in, width, d_out, np.concatenate(parts), activation, head, bias)


def _check_X(net: Network, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] != net.d_in:
        raise ValueError(f"network expects {net.d_in} input columns, got {X.shape[1]}")
    return X


def _hidden(net, X, W1, b1):
    Z = X @ W1 + b1
    if net.activation == "tanh":
        A = np.tanh(Z)
        return A, 1.0 - A**2
    return Z, np.ones_like(Z)


def logits(net: Network, X, theta=None) -> np.ndarray:
    X = _check_X(net, X)
    if net.width == 0:
        W, b = net.unpack(theta)
        return X @ W + b
    W1, b1, W2, b2 = net.unpack(theta)
    A, _ = _hidden(net, X, W1, b1)
    return A @ W2 + b2


def compact_softmax(G: np.ndarray) -> np.ndarray:
    top = np.maximum(G.max(axis=1, keepdims=True), 0.0)
    E = np.exp(G - top)
    return E / (np.exp(-top) + E.sum(axis=1, keepdims=True))


def forward(net: Network, X, theta=None) -> np.ndarray:
    """Network outputs, shape ``(rows, d_out)``."""
    G = logits(net, X, theta)
    return compact_softmax(G) if net.head == "softmax" else G


def _logit_jacobian(net: Network, X, theta) -> np.ndarray:
    r = X.shape[0]
    o = net.d_out
    eye_o = np.eye(o)
    if net.width == 0:
        JW = np.einsum("ri,oq->roiq", X, eye_o).reshape(r, o, -1)
        parts = [JW]
        if net.bias:
            parts.append(np.broadcast_to(eye_o, (r, o, o)))
        return np.concatenate(parts, axis=2)
    W1, b1, W2, _ = net.unpack(theta)
    A, D = _hidden(net, X, W1, b1)
    back = np.einsum("rj,jo->roj", D, W2)  # d g_o / d z_j
    parts = [np.einsum("ri,roj->roij", X, back).reshape(r, o, -1)]
    if net.bias:
        parts.append(back)
    parts.append(np.einsum("rj,oq->rojq", A, eye_o).reshape(r, o, -1))
    if net.bias:
        parts.append(np.broadcast_to(eye_o, (r, o, o)))
    return np.concatenate(parts, axis=2)


def jacobian(net: Network, X, theta=None) -> np.ndarray:
    """``d vec(outputs) / d theta``, shape ``(rows * d_out, n_params)``."""
    X = _check_X(net, X)
    th = net.theta if theta is None else theta
    J = _logit_jacobian(net, X, th)
    if net.head == "softmax":
        P = compact_softmax(logits(net, X, th))
        dP = np.einsum("ro,oq->roq", P, np.eye(net.d_out)) - P[:, :, None] * P[:, None, :]
        J = np.einsum("roq,rqp->rop", dP, J)
    return J.reshape(X.shape[0] * net.d_out, -1)


def ntk_kernel(net: Network, X_all, X_train, theta=None) -> np.ndarray:
    """Empirical NTK ``J(X_all) J(X_train)^T`` in the vectorized layout."""
    return jacobian(net, X_all, theta) @ jacobian(net, X_train, theta).T


# ------------------------------------------------------- cross-entropy ---

def clamp_probabilities(F) -> np.ndarray:
    """Clip to ``[1e-9, 1 - 1e-9]`` and rescale rows whose sum reaches ``1 - 1e-9``."""
    F = np.clip(np.atleast_2d(np.asarray(F, dtype=float)), PROB_CLAMP, 1.0 - PROB_CLAMP)
    tot = F.sum(axis=1, keepdims=True)
    over = tot >= 1.0 - PROB_CLAMP
    return np.where(over, F * (1.0 - 2 * PROB_CLAMP) / np.where(over, tot, 1.0), F)


def ce_loss(F, Y) -> float:
    """Compact-one-hot cross-entropy summed over rows."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    last_y = 1.0 - Y.sum(axis=1)
    last_f = 1.0 - F.sum(axis=1)
    return float(-(np.sum(Y * np.log(F)) + np.sum(last_y * np.log(last_f))))


def ce_gradient(F, Y) -> np.ndarray:
    """Direct derivative of :func:`ce_loss` w.r.t. ``F``."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    ratio = (1.0 - Y.sum(axis=1, keepdims=True)) / (1.0 - F.sum(axis=1, keepdims=True))
    return ratio - Y / F


def ce_weight_matrix(f_row) -> np.ndarray:
    """``diag(1/f) + 11^T / (1 - sum f)``: the gradient is this times ``(f - y)``."""
    f = clamp_probabilities(np.asarray(f_row, dtype=float).reshape(1, -1))[0]
    k = f.size
    return np.diag(1.0 / f) + np.ones((k, k)) / (1.0 - f.sum())


def ce_weight_blocks(F) -> np.ndarray:
    """Stack of per-row weight matrices, shape ``(n, c-1, c-1)``."""
    F = clamp_probabilities(F)
    n, k = F.shape
    W = np.ones((n, k, k)) / (1.0 - F.sum(axis=1))[:, None, None]
    W[:, np.arange(k), np.arange(k)] += 1.0 / F
    return W


def _block_right_multiply(M: np.ndarray, blocks: np.ndarray) -> np.ndarray:
    """``M @ blockdiag(blocks)`` without forming the block-diagonal matrix."""
    n, k, _ = blocks.shape
    Mr = M.reshape(M.shape[0], n, k)
    return np.einsum("anj,njl->anl", Mr, blocks).reshape(M.shape[0], n * k)


def _block_apply(blocks: np.ndarray, v: np.ndarray) -> np.ndarray:
    n, k, _ = blocks.shape
    return np.einsum("njl,nl->nj", blocks, v.reshape(n, k)).ravel()


# ------------------------------------------------------------- training ---

@dataclass
class TrainerState:
    theta: np.ndarray
    theta_prev: np.ndarray
    S: np.ndarray
    S_prev: np.ndarray
    f0: np.ndarray  # vectorized outputs at theta_0 on [X_train; X_extra]
    step: int = 0


@dataclass
class TrainResult:
    best: SmootherSet
    best_epoch: int
    trace: list = field(default_factory=list)  # (epoch, build loss, monitor value)
    state: TrainerState | None = None
    f0: np.ndarray | None = None
    max_discrepancy: float | None = None
    discrepancies: list = field(default_factory=list)

    def offsets(self, n_train_rows: int):
        """``(f0_train, f0_extra)`` split of the initial outputs (vectorized)."""
        return self.f0[:n_train_rows], self.f0[n_train_rows:]


def _blocks(S_full, nd, n_val_rows):
    S = S_full[:nd]
    extra = S_full[nd:]
    S_v = extra[:n_val_rows] if n_val_rows else None
    S_star = extra[n_val_rows:] if extra.shape[0] > n_val_rows else None
    return SmootherSet(S.copy(), None if S_v is None else S_v.copy(), None if S_star is None else S_star.copy())


def _build_loss(loss, f, y, d_out):
    if loss == "squared":
        return 0.5 * float(np.sum((y - f) ** 2))
    return ce_loss(clamp_probabilities(f.reshape(-1, d_out)), y.reshape(-1, d_out))


def train_smoother(net: Network, X_train, X_extra, y_build, loss: str = "squared", eta: float = 0.01,
                   momentum: float = 0.95, epochs: int = 100, monitor: criteria.CriterionSpec | None = None,
                   n_val: int | None = None, monitor_every: int = 1, track_error: bool = False) -> TrainResult:
    """Gradient descent with momentum on ``y_build`` plus the smoother recursion.

    ``X_extra`` holds every query row whose smoother row is wanted; its first
    ``n_val`` rows (default: all) form the validation block seen by the
    monitor.  The smoother at the epoch minimizing the monitor is returned;
    values within a relative 1e-12 of the running best count as ties and
    the earliest epoch wins.  ``net`` is not modified.
    """
    if loss not in ("squared", "cross_entropy"):
        raise ValueError(f"unknown loss {loss!r}")
    if not 0.0 <= momentum < 1.0:
        raise ValueError("momentum must lie in [0, 1)")
    if loss == "cross_entropy" and net.head != "softmax":
        raise ValueError("cross-entropy training needs a softmax head")
    X_train = _check_X(net, X_train)
    X_extra = np.empty((0, net.d_in)) if X_extra is None else _check_X(net, X_extra)
    n, m, o = X_train.shape[0], X_extra.shape[0], net.d_out
    n_val = m if n_val is None else n_val
    y = np.asarray(y_build, dtype=float).reshape(n, -1)
    if y.shape[1] != o:
        raise ValueError(f"build target has {y.shape[1]} columns, network has {o} outputs")
    y = y.ravel()
    nd = n * o
    X_all = np.vstack([X_train, X_extra])

    theta = net.theta.copy()
    f_all = forward(net, X_all, theta).ravel()
    state = TrainerState(theta, theta.copy(), np.zeros(((n + m) * o, nd)), np.zeros(((n + m) * o, nd)),
                         f_all.copy())
    eye = np.eye(nd)
    result = TrainResult(_blocks(state.S, nd, n_val * o), 0, state=state, f0=state.f0)

    def monitor_value(S_full):
        if monitor is None:
            return np.nan
        sm = _blocks(S_full, nd, n_val * o)
        try:
            return criteria.evaluate(monitor, S=sm.S, S_v=sm.S_v, n_obs=n).value
        except criteria.UndefinedCriterion:
            return np.inf

    best_val = monitor_value(state.S)
    result.trace.append((0, _build_loss(loss, f_all[:nd], y, o), best_val))
    if track_error:
        result.discrepancies.append(0.0)

    for k in range(epochs):
        J_all = jacobian(net, X_all, state.theta)
        J_tr = J_all[:nd]
        resid = y - f_all[:nd]
        if loss == "cross_entropy":
            W = ce_weight_blocks(f_all[:nd].reshape(n, o))
            K = _block_right_multiply(J_all @ J_tr.T, W)
            g = J_tr.T @ _block_apply(W, resid)
        else:
            K = J_all @ J_tr.T
            g = J_tr.T @ resid
        S_new = state.S + momentum * (state.S - state.S_prev) + eta * K @ (eye - state.S[:nd])
        th_new = state.theta + momentum * (state.theta - state.theta_prev) + eta * g
        if not (np.all(np.isfinite(th_new)) and np.all(np.isfinite(S_new))):
            raise FloatingPointError(f"training diverged at step {k + 1}")
        state.S_prev, state.S = state.S, S_new
        state.theta_prev, state.theta = state.theta, th_new
        state.step = k + 1
        f_all = forward(net, X_all, state.theta).ravel()
        with np.errstate(over="ignore"):
            build_loss = _build_loss(loss, f_all[:nd], y, o)
        if not (np.all(np.isfinite(f_all)) and np.isfinite(build_loss)):
            raise FloatingPointError(f"training diverged at step {k + 1}")
        if track_error:
            approx = state.S @ (y - state.f0[:nd]) + state.f0
            result.discrepancies.append(float(np.max(np.abs(f_all - approx))))
        if monitor is not None and (state.step % monitor_every == 0 or state.step == epochs):
            val = monitor_value(state.S)
            result.trace.append((state.step, build_loss, val))
            if val < best_val - 1e-12 * abs(best_val):
                best_val = val
                result.best = _blocks(state.S, nd, n_val * o)
                result.best_epoch = state.step
        elif monitor is None:
            result.trace.append((state.step, build_loss, np.nan))
    if monitor is None:
        result.best = _blocks(state.S, nd, n_val * o)
        result.best_epoch = state.step
    if track_error:
        result.max_discrepancy = max(result.discrepancies)
    return result


def smoother_error(net: Network, X_train, X_extra, y_build, eta: float, steps: int, momentum: float = 0.0,
                   loss: str = "squared") -> tuple[float, float]:
    """Largest sup-norm gap between network and smoother predictions.

    Runs once at ``eta`` for ``steps`` steps and once at ``eta / 2`` for
    ``2 * steps`` steps (same training time), from the same initialization.
    """
    a = train_smoother(net, X_train, X_extra, y_build, loss, eta, momentum, steps, track_error=True)
    b = train_smoother(net, X_train, X_extra, y_build, loss, eta / 2, momentum, 2 * steps, track_error=True)
    return a.max_discrepancy, b.max_discrepancy


def train_supervised(net: Network, X, y, loss: str = "squared", eta: float = 0.01, momentum: float = 0.95,
                     epochs: int = 100, holdout: float = 0.2, seed: int = 0):
    """The usual y-based baseline: train on ``1 - holdout`` of the rows and
    keep the parameters with the lowest held-out loss.

    Returns ``(theta_best, best_epoch, losses)``.
    """
    X = _check_X(net, X)
    y = np.asarray(y, dtype=float).reshape(X.shape[0], -1)
    perm = make_rng(seed).permutation(X.shape[0])
    n_hold = max(1, int(round(holdout * X.shape[0])))
    hold, fit = perm[:n_hold], perm[n_hold:]
    theta = net.theta.copy()
    theta_prev = theta.copy()

    def held_loss(th):
        f = forward(net, X[hold], th).ravel()
        return _build_loss(loss, f, y[hold].ravel(), net.d_out)

    best, best_epoch, best_theta = held_loss(theta), 0, theta.copy()
    losses = [best]
    for k in range(epochs):
        f = forward(net, X[fit], theta).ravel()
        J = jacobian(net, X[fit], theta)
        resid = y[fit].ravel() - f
        if loss == "cross_entropy":
            resid = _block_apply(ce_weight_blocks(f.reshape(-1, net.d_out)), resid)
        th_new = theta + momentum * (theta - theta_prev) + eta * J.T @ resid
        if not np.all(np.isfinite(th_new)):
            raise FloatingPointError(f"training diverged at step {k + 1}")
        theta_prev, theta = theta, th_new
        val = held_loss(theta)
        losses.append(val)
        if val < best:
            best, best_epoch, best_theta = val, k + 1, theta.copy()
    return best_theta, best_epoch, losses


def write_training_log(path, trace) -> None:
    """One row per recorded epoch: ``epoch,loss,monitor``."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss", "monitor"])
        for epoch, loss, val in trace:
            w.writerow([epoch, repr(float(loss)), repr(float(val))])


def write_checkpoint(path, smoother: SmootherSet, epoch: int, value: float) -> None:
    """Smoother blocks plus the epoch and monitor value they were taken at."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", epoch])
        w.writerow(["monitor", repr(float(value))])
        w.writerow(["block", "row"] + [f"w{j}" for j in range(smoother.n)])
        for name in ("S", "S_v", "S_star"):
            block = getattr(smoother, name)
            if block is None:
                continue
            for i, row in enumerate(block):
                w.writerow([name, i] + [repr(float(v)) for v in row])
