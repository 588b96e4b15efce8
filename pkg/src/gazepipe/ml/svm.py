"""Soft-margin kernel SVM trained by sequential minimal optimization.

Binary machines solve the dual

    min_a  1/2 a^T Q a - sum(a)   s.t.  0 <= a_i <= C,  y^T a = 0,
    Q_ij = y_i y_j K(x_i, x_j),

two coordinates at a time, picking the maximal-violating pair with
second-order working-set selection. Multiclass problems use one-vs-one
machines and majority voting.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np

from ..errors import TrainingError, ValidationError
from .model import InputSpec, SvmConfig, TrainedModel

logger = logging.getLogger(__name__)

TAU = 1e-12


def kernel_matrix(A: np.ndarray, B: np.ndarray, kernel: str, gamma: float) -> np.ndarray:
    if kernel == "linear":
        return A @ B.T
    sq = (
        np.sum(A * A, axis=1)[:, None]
        + np.sum(B * B, axis=1)[None, :]
        - 2.0 * (A @ B.T)
    )
    return np.exp(-gamma * np.maximum(sq, 0.0))


@dataclass
class BinarySolution:
    alpha: np.ndarray
    bias: float
    iterations: int
    converged: bool
    gap: float


def smo_binary(K: np.ndarray, y: np.ndarray, C: float, tol: float, max_iter: int) -> BinarySolution:
    """Solve one binary dual on a precomputed kernel matrix.

    ``y`` holds +1/-1 labels. Stops once the maximal KKT violation
    ``m(a) - M(a)`` drops to ``tol`` or after ``max_iter`` pair updates.
    """
    n = y.size
    y = y.astype(np.float64)
    alpha = np.zeros(n)
    grad = -np.ones(n)
    diag = np.diag(K).copy()
    pos = y > 0
    it = 0
    gap = np.inf
    while it < max_iter:
        yg = -y * grad
        up = np.where(pos, alpha < C, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < C)
        if not up.any() or not low.any():
            gap = 0.0
            break
        yg_up = np.where(up, yg, -np.inf)
        i = int(np.argmax(yg_up))
        m_val = yg_up[i]
        M_val = np.min(np.where(low, yg, np.inf))
        gap = m_val - M_val
        if gap <= tol:
            break
        b = m_val - yg
        cand = low & (b > 0)
        a = diag[i] + diag - 2.0 * K[i]
        a = np.where(a > 0, a, TAU)
        score = np.where(cand, -(b * b) / a, np.inf)
        j = int(np.argmin(score))

        step = b[j] / a[j]
        lim_i = C - alpha[i] if y[i] > 0 else alpha[i]
        lim_j = alpha[j] if y[j] > 0 else C - alpha[j]
        lam = min(step, lim_i, lim_j)

        alpha[i] = min(max(alpha[i] + y[i] * lam, 0.0), C)
        alpha[j] = min(max(alpha[j] - y[j] * lam, 0.0), C)
        grad += lam * y * (K[:, i] - K[:, j])
        it += 1
    converged = gap <= tol
    if not converged:
        logger.warning("SMO stopped after %d iterations with KKT gap %.3g", it, gap)

    yg = y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = float(np.mean(yg[free]))
    else:
        # no free vectors: midpoint of the feasible interval for rho
        at_ub = alpha >= C
        at_lb = ~at_ub
        ub_mask = (at_ub & (y < 0)) | (at_lb & (y > 0))
        lb_mask = (at_ub & (y > 0)) | (at_lb & (y < 0))
        ub = np.min(yg[ub_mask]) if ub_mask.any() else np.inf
        lb = np.max(yg[lb_mask]) if lb_mask.any() else -np.inf
        rho = 0.0 if not np.isfinite(ub + lb) else float((ub + lb) / 2.0)
    return BinarySolution(alpha, -rho, it, converged, float(gap))


def _pair_key(a: int, b: int) -> str:
    return f"m{a}_{b}"


def smo_train(X, y, cfg: SvmConfig = SvmConfig(), n_classes=None, modalities=()) -> TrainedModel:
    """Fit a one-vs-one SVM.

    Parameters
    ----------
    X : array, shape (n, d)
        Feature rows.
    y : array of int, shape (n,)
        Class indices.
    cfg : SvmConfig
    n_classes : int, optional
        Size of the label set; defaults to ``max(y) + 1``.

    Returns
    -------
    TrainedModel
        ``params`` holds, per class pair ``(a, b)``, the support vectors,
        their dual coefficients and labels, and the bias. Class ``a`` is the
        positive side.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(int)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValidationError(f"X must be (n, d) matching y, got {X.shape} and {y.shape}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("features contain non-finite values")
    classes = np.unique(y)
    if classes.size < 2:
        raise TrainingError("SVM training needs at least two classes")
    if n_classes is None:
        n_classes = int(classes.max()) + 1

    if cfg.kernel == "rbf":
        gamma = cfg.gamma
        if gamma is None:
            var = float(X.var())
            gamma = 1.0 / (X.shape[1] * var) if var > 0 else 1.0
    else:
        gamma = 0.0

    params = {"gamma": np.array([gamma]), "kernel": np.array([1.0 if cfg.kernel == "rbf" else 0.0])}
    info = {"machines": {}}
    for a, b in itertools.combinations(classes.tolist(), 2):
        rows = (y == a) | (y == b)
        Xp = X[rows]
        yp = np.where(y[rows] == a, 1.0, -1.0)
        K = kernel_matrix(Xp, Xp, cfg.kernel, gamma)
        sol = smo_binary(K, yp, cfg.C, cfg.tol, cfg.max_passes * Xp.shape[0])
        sv = sol.alpha > 0
        key = _pair_key(a, b)
        params[f"{key}.sv"] = Xp[sv]
        params[f"{key}.alpha"] = sol.alpha[sv]
        params[f"{key}.y"] = yp[sv]
        params[f"{key}.bias"] = np.array([sol.bias])
        info["machines"][key] = {
            "iterations": sol.iterations,
            "converged": sol.converged,
            "kkt_gap": sol.gap,
            "n_rows": int(Xp.shape[0]),
        }
    spec = InputSpec((X.shape[1],), tuple(modalities), int(n_classes))
    return TrainedModel("SVM", params, spec, cfg, (), info)


def machine_pairs(model: TrainedModel) -> list:
    pairs = []
    for k in model.params:
        if k.endswith(".bias"):
            a, b = k[1:-5].split("_")
            pairs.append((int(a), int(b)))
    return sorted(pairs)


def decision_function(model: TrainedModel, X) -> tuple:
    """Pairwise decision values, shape (n, n_pairs), and the pair list."""
    X = model.input_spec.check(X)
    kernel = "rbf" if model.params["kernel"][0] == 1.0 else "linear"
    gamma = float(model.params["gamma"][0])
    pairs = machine_pairs(model)
    out = np.zeros((X.shape[0], len(pairs)))
    for col, (a, b) in enumerate(pairs):
        key = _pair_key(a, b)
        sv = model.params[f"{key}.sv"]
        coef = model.params[f"{key}.alpha"] * model.params[f"{key}.y"]
        bias = model.params[f"{key}.bias"][0]
        if sv.shape[0]:
            out[:, col] = kernel_matrix(X, sv, kernel, gamma) @ coef + bias
        else:
            out[:, col] = bias
    return out, pairs


def vote(decisions: np.ndarray, pairs, n_classes: int) -> np.ndarray:
    """Majority vote; ties resolve to the lowest class index."""
    votes = np.zeros((decisions.shape[0], n_classes), dtype=int)
    rows = np.arange(decisions.shape[0])
    for col, (a, b) in enumerate(pairs):
        winner = np.where(decisions[:, col] >= 0, a, b)
        np.add.at(votes, (rows, winner), 1)
    return np.argmax(votes, axis=1)


def svm_predict(model: TrainedModel, X) -> np.ndarray:
    dec, pairs = decision_function(model, X)
    return vote(dec, pairs, model.n_classes)
