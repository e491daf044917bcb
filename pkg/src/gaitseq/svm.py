"""
RBF soft-margin SVM solved by sequential minimal optimization.

The dual ``min 1/2 a'Qa - e'a`` subject to ``0 <= a <= C`` and ``y'a = 0``
(``Q_ij = y_i y_j k(x_i, x_j)``) is optimized two coordinates at a time. The
working pair is the maximal violating pair under first-order selection, so
``m(a) - M(a) < tol`` is the stopping rule and ties pick the lowest index.
Anomalous cycles carry the label +1 internally.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from .exceptions import ConvergenceFailure
from .signal import ANOMALOUS, NORMAL
from .validation import check_binary_labels

logger = logging.getLogger(__name__)

TAU = 1e-12


def rbf_kernel(u, v, gamma: float):
    """``exp(-gamma * |u - v|^2)``; 2-D inputs give the full Gram block."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if u.ndim == 1 and v.ndim == 1:
        d = u - v
        return float(np.exp(-gamma * np.dot(d, d)))
    d2 = cdist(np.atleast_2d(u), np.atleast_2d(v), "sqeuclidean")
    return np.exp(-gamma * d2)


def default_gamma(X) -> float:
    """``1 / (n_features * var(X))`` over all entries."""
    X = np.asarray(X, dtype=float)
    var = X.var()
    return 1.0 / (X.shape[1] * var) if var > 0 else 1.0


def to_signed(y):
    """0/1 labels to -1/+1 (anomalous positive)."""
    return np.where(np.asarray(y) == ANOMALOUS, 1.0, -1.0)


def smo(K, y, C: float = 1.0, tol: float = 1e-3, max_iter: int | None = None):
    """Solve the dual for a precomputed kernel matrix.

    Parameters
    ----------
    K : ndarray of shape (n, n)
    y : ndarray of shape (n,)
        Labels in {-1, +1}.

    Returns
    -------
    alpha : ndarray of shape (n,)
    b : float
        Bias of ``f(x) = sum_i alpha_i y_i k(x_i, x) + b``.
    n_iter : int
    """
    n = y.size
    if max_iter is None:
        max_iter = max(10_000_000, 100 * n)
    alpha = np.zeros(n)
    G = -np.ones(n)
    diag = np.diag(K).copy()
    for it in range(max_iter):
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
        score = -y * G
        s_up = np.where(up, score, -np.inf)
        s_low = np.where(low, score, np.inf)
        i = int(np.argmax(s_up))
        j = int(np.argmin(s_low))
        if s_up[i] - s_low[j] < tol:
            break
        Ki = K[i]
        Kj = K[j]
        Qij = y[i] * y[j] * Ki[j]
        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = max(diag[i] + diag[j] + 2 * Qij, TAU)
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            ni, nj = ai + delta, aj + delta
            if diff > 0:
                if nj < 0:
                    nj, ni = 0.0, diff
            elif ni < 0:
                ni, nj = 0.0, -diff
            if diff > 0:
                if ni > C:
                    ni, nj = C, C - diff
            elif nj > C:
                nj, ni = C, C + diff
        else:
            quad = max(diag[i] + diag[j] - 2 * Qij, TAU)
            delta = (G[i] - G[j]) / quad
            total = ai + aj
            ni, nj = ai - delta, aj + delta
            if total > C:
                if ni > C:
                    ni, nj = C, total - C
            elif nj < 0:
                nj, ni = 0.0, total
            if total > C:
                if nj > C:
                    nj, ni = C, total - C
            elif ni < 0:
                ni, nj = 0.0, total
        # Q_ti = y_t y_i K_ti
        G += y * (y[i] * (ni - ai) * Ki + y[j] * (nj - aj) * Kj)
        alpha[i], alpha[j] = ni, nj
    else:
        raise ConvergenceFailure(f"SMO did not reach tol={tol} in {max_iter} iterations")
    return alpha, _bias(alpha, y, G, C), it


def _bias(alpha, y, G, C) -> float:
    yG = y * G
    free = (alpha > 0) & (alpha < C)
    if np.any(free):
        rho = float(np.mean(yG[free]))
    else:
        # midpoint of the feasible interval
        at_upper = alpha >= C
        at_lower = alpha <= 0
        ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
        lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
        ub = yG[ub_mask].min() if np.any(ub_mask) else np.inf
        lb = yG[lb_mask].max() if np.any(lb_mask) else -np.inf
        rho = float((ub + lb) / 2)
    return -rho


def kkt_violation(alpha, y, K, b, C) -> float:
    """Largest violation of the soft-margin KKT conditions in units of margin.

    ``y_i f(x_i) >= 1`` at ``alpha = 0``, ``= 1`` for free vectors and
    ``<= 1`` at ``alpha = C``.
    """
    m = y * ((alpha * y) @ K + b)
    viol = np.zeros_like(m)
    zero = alpha <= 0
    full = alpha >= C
    free = ~zero & ~full
    viol[zero] = np.maximum(0.0, 1.0 - m[zero])
    viol[full] = np.maximum(0.0, m[full] - 1.0)
    viol[free] = np.abs(m[free] - 1.0)
    return float(viol.max()) if viol.size else 0.0


class SMOClassifier(ClassifierMixin, BaseEstimator):
    """RBF-kernel SVM on flattened cycles.

    Parameters
    ----------
    C : float, default=1.0
    gamma : float or None
        ``None`` selects ``1 / (n_features * var(X))`` at fit time.
    tol : float, default=1e-3
        Stopping tolerance on the maximal violating pair.
    max_iter : int or None

    Attributes
    ----------
    support_vectors_ : ndarray
    dual_coef_ : ndarray
        ``alpha_i * y_i`` of the support vectors.
    alpha_ : ndarray
        Full dual vector over the training set.
    intercept_ : float
    gamma_ : float
    """

    def __init__(self, C=1.0, gamma=None, tol=1e-3, max_iter=None):
        self.C = C
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        X = check_array(np.asarray(X, dtype=float).reshape(len(X), -1), ensure_all_finite=True)
        y = check_binary_labels(y, X.shape[0])
        if not self.C > 0:
            raise ValueError("C must be positive")
        self.gamma_ = float(self.gamma) if self.gamma is not None else default_gamma(X)
        ys = to_signed(y)
        K = rbf_kernel(X, X, self.gamma_)
        alpha, b, n_iter = smo(K, ys, float(self.C), self.tol, self.max_iter)
        self.alpha_ = alpha
        self.n_iter_ = n_iter
        self.intercept_ = b
        self.train_y_ = ys
        sv = np.flatnonzero(alpha > 0)
        self.support_ = sv
        self.support_vectors_ = X[sv]
        self.dual_coef_ = alpha[sv] * ys[sv]
        self.classes_ = np.array([NORMAL, ANOMALOUS])
        self.n_features_in_ = X.shape[1]
        self.kkt_violation_ = kkt_violation(alpha, ys, K, b, float(self.C))
        logger.info("SMO converged in %d iterations, %d support vectors", n_iter, sv.size)
        return self

    def decision_function(self, X):
        check_is_fitted(self)
        X = check_array(np.asarray(X, dtype=float).reshape(len(X), -1), ensure_all_finite=True)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        if self.support_vectors_.shape[0] == 0:
            return np.full(X.shape[0], self.intercept_)
        return rbf_kernel(X, self.support_vectors_, self.gamma_) @ self.dual_coef_ + self.intercept_

    def predict(self, X):
        """Anomalous where ``f(x) >= 0``."""
        return np.where(self.decision_function(X) >= 0, ANOMALOUS, NORMAL)

    def dual_feasibility(self):
        """``(min alpha, max alpha, |sum alpha_i y_i|)``."""
        check_is_fitted(self)
        if hasattr(self, "alpha_"):
            return float(self.alpha_.min()), float(self.alpha_.max()), abs(float(self.alpha_ @ self.train_y_))
        # reloaded models keep only the support vectors
        a = np.abs(self.dual_coef_)
        lo = float(a.min()) if a.size else 0.0
        hi = float(a.max()) if a.size else 0.0
        return min(lo, 0.0), hi, abs(float(self.dual_coef_.sum()))

    def to_dict(self) -> dict:
        check_is_fitted(self)
        return {
            "hyperparameters": self.get_params(),
            "gamma": self.gamma_,
            "intercept": self.intercept_,
            "support_vectors": self.support_vectors_.tolist(),
            "dual_coef": self.dual_coef_.tolist(),
            "n_features": int(self.n_features_in_),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SMOClassifier":
        est = cls(**d["hyperparameters"])
        est.gamma_ = float(d["gamma"])
        est.intercept_ = float(d["intercept"])
        est.n_features_in_ = int(d["n_features"])
        est.support_vectors_ = np.asarray(d["support_vectors"], dtype=float).reshape(-1, est.n_features_in_)
        est.dual_coef_ = np.asarray(d["dual_coef"], dtype=float)
        est.classes_ = np.array([NORMAL, ANOMALOUS])
        return est
