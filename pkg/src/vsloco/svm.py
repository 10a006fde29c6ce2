"""Soft-margin RBF-kernel SVM trained by sequential minimal optimization,
with Platt sigmoid calibration of decision scores.

Used to fit the push-recovery boundary: features are the Cartesian push
force components, labels are recovery success. Small, dense, and fully
deterministic; the tests pin it against an exhaustive dual grid search and
a projected-gradient solve.
"""

from dataclasses import dataclass, field

import numpy as np


def rbf_kernel(a, b, width):
    """exp(-|a - b|^2 / (2 width^2)) for row sets a (n,d), b (m,d)."""
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)
    return np.exp(-d2 / (2.0 * width**2))


def median_pairwise_width(x):
    """Median of the nonzero pairwise distances (duplicates contribute zero
    distances, which would otherwise shrink the heuristic)."""
    d2 = ((x[:, None, :] - x[None, :, :]) ** 2).sum(-1)
    d = np.sqrt(d2[np.triu_indices(len(x), k=1)])
    d = d[d > 0]
    if d.size == 0:
        return 1.0
    return float(np.median(d))


@dataclass
class SVMModel:
    """Fitted dual state plus feature standardization and calibration."""

    support_vectors: np.ndarray  # standardized features (n, d)
    dual_coefs: np.ndarray  # alpha_i * y_i, all training points
    bias: float
    kernel_width: float
    feature_mean: np.ndarray
    feature_std: np.ndarray
    calibration: tuple = (1.0, 0.0)  # sigmoid (A, B): P = 1/(1+exp(A f + B))
    alphas: np.ndarray = None
    labels: np.ndarray = None
    C: float = 10.0

    def _standardize(self, x):
        return (np.atleast_2d(x) - self.feature_mean) / self.feature_std

    def decision_function(self, x):
        k = rbf_kernel(self._standardize(x), self.support_vectors, self.kernel_width)
        return k @ self.dual_coefs + self.bias

    def predict(self, x):
        return np.where(self.decision_function(x) >= 0.0, 1, -1)

    def probability(self, x):
        a, b = self.calibration
        return 1.0 / (1.0 + np.exp(a * self.decision_function(x) + b))


def _smo(K, y, C, tol, max_iter=500_000):
    """Platt's SMO on the dual of the soft-margin SVM.

    Deterministic: the second-choice heuristic (max |E_i - E_j|) falls back
    to scanning the free points, then all points, in index order.
    """
    n = len(y)
    alpha = np.zeros(n)
    state = {"b": 0.0, "E": K @ (alpha * y) - y, "steps": 0}

    def take_step(i, j):
        if i == j:
            return False
        E, b = state["E"], state["b"]
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if eta <= 1e-14:
            return False
        a_i_old, a_j_old = alpha[i], alpha[j]
        if y[i] != y[j]:
            lo = max(0.0, a_j_old - a_i_old)
            hi = min(C, C + a_j_old - a_i_old)
        else:
            lo = max(0.0, a_i_old + a_j_old - C)
            hi = min(C, a_i_old + a_j_old)
        if lo >= hi:
            return False
        a_j = min(max(a_j_old + y[j] * (E[i] - E[j]) / eta, lo), hi)
        if abs(a_j - a_j_old) < 1e-13 * (a_j + a_j_old + 1e-13):
            return False
        a_i = a_i_old + y[i] * y[j] * (a_j_old - a_j)
        alpha[i], alpha[j] = a_i, a_j
        b1 = b - E[i] - y[i] * (a_i - a_i_old) * K[i, i] - y[j] * (a_j - a_j_old) * K[i, j]
        b2 = b - E[j] - y[i] * (a_i - a_i_old) * K[i, j] - y[j] * (a_j - a_j_old) * K[j, j]
        if 0.0 < a_i < C:
            b_new = b1
        elif 0.0 < a_j < C:
            b_new = b2
        else:
            b_new = 0.5 * (b1 + b2)
        state["E"] = E + (
            y[i] * (a_i - a_i_old) * K[:, i]
            + y[j] * (a_j - a_j_old) * K[:, j]
            + (b_new - b)
        )
        state["b"] = b_new
        state["steps"] += 1
        return True

    def examine(i):
        E = state["E"]
        r = E[i] * y[i]
        if not ((r < -tol and alpha[i] < C) or (r > tol and alpha[i] > 0)):
            return False
        j = int(np.argmax(np.abs(E - E[i])))
        if take_step(i, j):
            return True
        free = np.flatnonzero((alpha > 0) & (alpha < C))
        for j in free:
            if take_step(i, int(j)):
                return True
        for j in range(n):
            if take_step(i, j):
                return True
        return False

    examine_all = True
    while state["steps"] < max_iter:
        changed = 0
        if examine_all:
            for i in range(n):
                changed += examine(i)
        else:
            for i in np.flatnonzero((alpha > 0) & (alpha < C)):
                changed += examine(int(i))
        if examine_all:
            if changed == 0:
                break
            examine_all = False
        elif changed == 0:
            examine_all = True
    return alpha, state["b"]


def platt_calibration(scores, labels, max_iter=200):
    """Sigmoid fit P(y=1 | f) = 1 / (1 + exp(A f + B)) by Newton descent on
    the regularized log-loss (Lin-Weng-Platt targets)."""
    scores = np.asarray(scores, dtype=float)
    pos = labels > 0
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    t = np.where(pos, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))
    A, B = 0.0, np.log((n_neg + 1.0) / (n_pos + 1.0))
    for _ in range(max_iter):
        z = A * scores + B
        p = 1.0 / (1.0 + np.exp(z))
        # gradient of sum(-t log p - (1-t) log(1-p)) w.r.t. (A, B)
        d = p - t  # note: dp/dz = -p(1-p); d loss/dz = (p - t) * ... sign folded below
        g_a = np.sum(-(d) * scores)
        g_b = np.sum(-(d))
        w = p * (1.0 - p)
        h_aa = np.sum(w * scores * scores) + 1e-12
        h_ab = np.sum(w * scores)
        h_bb = np.sum(w) + 1e-12
        det = h_aa * h_bb - h_ab * h_ab
        if abs(det) < 1e-18:
            break
        dA = (h_bb * g_a - h_ab * g_b) / det
        dB = (h_aa * g_b - h_ab * g_a) / det
        A -= dA
        B -= dB
        if abs(dA) < 1e-12 and abs(dB) < 1e-12:
            break
    return float(A), float(B)


def fit_svm(features, labels, C=10.0, kernel_width=None, tol=1e-8) -> SVMModel:
    """Standardize, run SMO, calibrate. labels are +-1 (or booleans)."""
    x = np.asarray(features, dtype=float)
    y = np.where(np.asarray(labels) > 0, 1.0, -1.0)
    if np.all(y > 0) or np.all(y < 0):
        raise ValueError("SVM training needs both outcome classes present")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    xs = (x - mean) / std
    width = float(kernel_width) if kernel_width is not None else median_pairwise_width(xs)
    K = rbf_kernel(xs, xs, width)
    alpha, b = _smo(K, y, C, tol)
    scores = K @ (alpha * y) + b
    A, B = platt_calibration(scores, y)
    return SVMModel(
        support_vectors=xs,
        dual_coefs=alpha * y,
        bias=float(b),
        kernel_width=width,
        feature_mean=mean,
        feature_std=std,
        calibration=(A, B),
        alphas=alpha,
        labels=y,
        C=C,
    )


def dual_objective(K, y, alpha):
    return float(alpha.sum() - 0.5 * (alpha * y) @ K @ (alpha * y))


def kkt_residuals(model: SVMModel):
    """Max violation of the dual KKT system: box constraints, the equality
    constraint, and the complementary-slackness margins."""
    alpha, y, C = model.alphas, model.labels, model.C
    K = rbf_kernel(model.support_vectors, model.support_vectors, model.kernel_width)
    margins = y * (K @ model.dual_coefs + model.bias)
    box = max(float(np.max(-alpha, initial=0.0)), float(np.max(alpha - C, initial=0.0)))
    equality = abs(float(alpha @ y))
    free = (alpha > 1e-9 * C) & (alpha < C * (1 - 1e-9))
    viol = 0.0
    if np.any(alpha <= 1e-9 * C):
        viol = max(viol, float(np.max(1.0 - margins[alpha <= 1e-9 * C], initial=0.0)))
    if np.any(free):
        viol = max(viol, float(np.max(np.abs(margins[free] - 1.0), initial=0.0)))
    if np.any(alpha >= C * (1 - 1e-9)):
        viol = max(viol, float(np.max(margins[alpha >= C * (1 - 1e-9)] - 1.0, initial=0.0)))
    return {"box": box, "equality": equality, "stationarity": viol}
