"""Linear L1-loss SVM trained by dual coordinate descent.

The solver handles the slightly more general problem

    min_w  rho/2 ||w - v||^2 + C * sum_i max(0, 1 - y_i w.x_i)

whose dual variables live in [0, C] and give ``w = v + (1/rho) sum_i a_i y_i x_i``.
Plain training is rho = 1, v = 0; the consensus trainer uses the shifted
form for its per-shard proximal subproblems. A bias is an extra weight on a
constant feature of value 1 (regularized like any other weight) and is never
materialized as a column, so memory-mapped feature containers stream as-is.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_is_fitted

logger = logging.getLogger(__name__)


@njit(cache=True, nogil=True)
def _row_sqnorms(X, bias):
    n, d = X.shape
    out = np.empty(n)
    for i in range(n):
        s = bias * bias
        for j in range(d):
            s += X[i, j] * X[i, j]
        out[i] = s
    return out


@njit(cache=True, nogil=True)
def _decision(X, w, bias):
    n, d = X.shape
    out = np.empty(n)
    for i in range(n):
        s = 0.0
        for j in range(d):
            s += w[j] * X[i, j]
        if bias != 0.0:
            s += w[d] * bias
        out[i] = s
    return out


@njit(cache=True, nogil=True)
def _accumulate(X, coef, bias, out):
    # out[:d] = sum_i coef_i x_i, out[d] = bias * sum_i coef_i; fixed summation order
    n, d = X.shape
    out[:] = 0.0
    for i in range(n):
        c = coef[i]
        if c == 0.0:
            continue
        for j in range(d):
            out[j] += c * X[i, j]
        if bias != 0.0:
            out[d] += c * bias


@njit(cache=True, nogil=True)
def _epoch(X, y, alpha, w, order, qii, C, inv_rho, bias):
    d = X.shape[1]
    max_viol = 0.0
    for t in range(order.shape[0]):
        i = order[t]
        if qii[i] <= 0.0:
            continue
        s = 0.0
        for j in range(d):
            s += w[j] * X[i, j]
        if bias != 0.0:
            s += w[d] * bias
        G = y[i] * s - 1.0
        a = alpha[i]
        if a <= 0.0:
            pg = min(G, 0.0)
        elif a >= C:
            pg = max(G, 0.0)
        else:
            pg = G
        if abs(pg) > max_viol:
            max_viol = abs(pg)
        if pg == 0.0:
            continue
        a_new = min(max(a - G / (qii[i] * inv_rho), 0.0), C)
        delta = (a_new - a) * y[i] * inv_rho
        if delta != 0.0:
            alpha[i] = a_new
            for j in range(d):
                w[j] += delta * X[i, j]
            if bias != 0.0:
                w[d] += delta * bias
    return max_viol


@dataclass
class SvmModel:
    """Trained linear SVM; when `bias` is set the last weight multiplies a constant 1."""

    w: np.ndarray
    C: float
    tol: float
    bias: bool = True
    iterations_run: int = 0
    objective: float = float("nan")
    alpha: np.ndarray | None = None
    history: list = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return self.w.size - (1 if self.bias else 0)

    def decision_function(self, X) -> np.ndarray:
        return predict(self, X)


def _as_matrix(X) -> np.ndarray:
    if isinstance(X, np.memmap):
        X = np.asarray(X)
    if not (isinstance(X, np.ndarray) and X.dtype == np.float64 and X.ndim == 2 and X.flags.c_contiguous):
        X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D feature matrix, got shape {X.shape}")
    return X


def _check_labels(y, n) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size != n:
        raise ValueError(f"{y.size} labels for {n} examples")
    if not np.all((y == 1.0) | (y == -1.0)):
        raise ValueError("labels must be -1 or +1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ValueError("training data must contain both classes")
    return y


def _check_finite(X, chunk=4096):
    for start in range(0, X.shape[0], chunk):
        if not np.all(np.isfinite(X[start:start + chunk])):
            raise ValueError("features contain non-finite values")


def primal_objective(w, X, y, C, bias=True) -> float:
    X = _as_matrix(X)
    margins = np.asarray(y, dtype=np.float64) * _decision(X, np.asarray(w, dtype=np.float64), 1.0 if bias else 0.0)
    return 0.5 * float(np.dot(w, w)) + C * float(np.maximum(0.0, 1.0 - margins).sum())


def dual_objective(alpha, X, y, bias=True) -> float:
    X = _as_matrix(X)
    d = X.shape[1] + (1 if bias else 0)
    u = np.empty(d)
    _accumulate(X, np.asarray(alpha) * np.asarray(y, dtype=np.float64), 1.0 if bias else 0.0, u)
    return float(np.sum(alpha)) - 0.5 * float(np.dot(u, u))


def _solve(X, y, C, tol, max_epochs, rng, alpha, center, rho, bias_value, on_epoch=None):
    """Run epochs until the largest projected-gradient violation drops below tol."""
    n, d = X.shape
    qii = _row_sqnorms(X, bias_value)
    inv_rho = 1.0 / rho
    w = np.empty(center.size)
    u = np.empty(center.size)

    def rebuild():
        _accumulate(X, alpha * y, bias_value, u)
        np.add(center, inv_rho * u, out=w)

    rebuild()
    epochs = 0
    viol = np.inf
    while epochs < max_epochs:
        order = rng.permutation(n)
        viol = _epoch(X, y, alpha, w, order, qii, C, inv_rho, bias_value)
        epochs += 1
        rebuild()
        if on_epoch is not None:
            on_epoch(epochs, alpha, w)
        if viol < tol:
            break
    return w, epochs, viol


def dcd_train(X, y, C: float = 1.0, tol: float = 1e-3, max_epochs: int = 1000, seed: int = 0,
              bias: bool = True, on_epoch=None) -> SvmModel:
    """Train a linear L1-loss SVM by dual coordinate descent.

    `X` may be any C-ordered float64 matrix, including a memory map over a
    feature container; rows are visited in a fresh seed-determined shuffle each
    epoch. ``on_epoch(epoch, alpha, w)`` is called after every epoch.
    """
    if not C > 0:
        raise ValueError("C must be positive")
    if not tol > 0:
        raise ValueError("tol must be positive")
    X = _as_matrix(X)
    y = _check_labels(y, X.shape[0])
    _check_finite(X)
    bias_value = 1.0 if bias else 0.0
    d = X.shape[1] + (1 if bias else 0)
    alpha = np.zeros(X.shape[0])
    rng = np.random.default_rng(seed)
    w, epochs, viol = _solve(X, y, float(C), float(tol), int(max_epochs), rng, alpha,
                             np.zeros(d), 1.0, bias_value, on_epoch)
    if viol >= tol:
        logger.warning("dcd_train stopped at max_epochs=%d with violation %.3g", max_epochs, viol)
    return SvmModel(w=w, C=float(C), tol=float(tol), bias=bias, iterations_run=epochs,
                    objective=primal_objective(w, X, y, C, bias), alpha=alpha)


def predict(model: SvmModel, X) -> np.ndarray:
    """Decision values w.x (+ bias weight) per row."""
    X = _as_matrix(X)
    if X.shape[1] != model.n_features:
        raise ValueError(f"model expects {model.n_features} features, got {X.shape[1]}")
    return _decision(X, model.w, 1.0 if model.bias else 0.0)


# -- consensus ----------------------------------------------------------------

@dataclass
class ShardPlan:
    shard_count: int
    assignment: np.ndarray
    rho: float = 1.0
    max_rounds: int = 1000

    @classmethod
    def interleaved(cls, n: int, shard_count: int, **kw) -> "ShardPlan":
        """Example i goes to shard i mod shard_count."""
        return cls(shard_count, np.arange(n) % shard_count, **kw)

    @classmethod
    def random(cls, n: int, shard_count: int, seed: int = 0, **kw) -> "ShardPlan":
        perm = np.random.default_rng(seed).permutation(n)
        assignment = np.empty(n, dtype=np.int64)
        assignment[perm] = np.arange(n) % shard_count
        return cls(shard_count, assignment, **kw)

    def validate(self, n: int) -> None:
        if self.shard_count < 1:
            raise ValueError("shard_count must be >= 1")
        a = np.asarray(self.assignment)
        if a.shape != (n,):
            raise ValueError(f"assignment covers {a.size} examples, data has {n}")
        if a.min() < 0 or a.max() >= self.shard_count:
            raise ValueError("assignment refers to a shard outside [0, shard_count)")
        counts = np.bincount(a, minlength=self.shard_count)
        if np.any(counts == 0):
            raise ValueError(f"shards {np.flatnonzero(counts == 0).tolist()} are empty")
        if not self.rho > 0:
            raise ValueError("rho must be positive")


def consensus_train(X, y, plan: ShardPlan, C: float = 1.0, tol: float = 1e-3,
                    max_epochs: int = 1000, seed: int = 0, bias: bool = True,
                    workers: int = 1, relaxation: float = 1.6) -> SvmModel:
    """Global-consensus ADMM over shards, each subproblem solved by dual CD.

    The regularizer is shared out: shard k minimizes
    ``C * hinge_k(w) + ||w||^2 / (2K) + rho/2 ||w - z + u_k||^2``, which is
    again a shifted SVM problem; then ``z = mean_k(w_k + u_k)`` and
    ``u_k += w_k - z``, with each w_k over-relaxed by `relaxation` before
    both updates. Stops once the primal and dual residual norms are
    both below `tol`. Residuals per round are kept in ``model.history`` as
    (primal, dual) pairs. Shard duals warm-start from the previous round.
    """
    if not C > 0:
        raise ValueError("C must be positive")
    X = _as_matrix(X)
    y = _check_labels(y, X.shape[0])
    _check_finite(X)
    n = X.shape[0]
    plan.validate(n)
    K, rho = plan.shard_count, float(plan.rho)
    bias_value = 1.0 if bias else 0.0
    d = X.shape[1] + (1 if bias else 0)
    # 1/(2K)||w||^2 + rho/2||w - v||^2 == (rho + 1/K)/2 ||w - rho v / (rho + 1/K)||^2 + const
    curvature = rho + 1.0 / K

    idx = [np.flatnonzero(plan.assignment == k) for k in range(K)]
    Xs = [np.ascontiguousarray(X[i]) for i in idx]
    ys = [y[i] for i in idx]
    alphas = [np.zeros(i.size) for i in idx]
    rngs = [np.random.default_rng([seed, k]) for k in range(K)]
    z = np.zeros(d)
    us = [np.zeros(d) for _ in range(K)]
    history = []

    def local(k):
        center = (rho / curvature) * (z - us[k])
        w, _, _ = _solve(Xs[k], ys[k], float(C), float(tol), int(max_epochs), rngs[k], alphas[k],
                         center, curvature, bias_value)
        return w

    rounds = 0
    with ThreadPoolExecutor(max_workers=max(1, min(workers, K))) as pool:
        for rounds in range(1, plan.max_rounds + 1):
            ws = list(pool.map(local, range(K)))
            z_old = z
            hats = [relaxation * w + (1.0 - relaxation) * z_old for w in ws]
            z = np.mean([h + u for h, u in zip(hats, us)], axis=0)
            for k in range(K):
                us[k] = us[k] + hats[k] - z
            r = float(np.sqrt(sum(np.dot(w - z, w - z) for w in ws)))
            s = float(rho * np.sqrt(K) * np.linalg.norm(z - z_old))
            history.append((r, s))
            if r < tol and s < tol:
                break
    return SvmModel(w=z, C=float(C), tol=float(tol), bias=bias, iterations_run=rounds,
                    objective=primal_objective(z, X, y, C, bias), history=history)


# -- margin reweighting ---------------------------------------------------------

def kernel_dcd(K, y, C: float, tol: float = 1e-10, max_epochs: int = 100000, seed: int = 0):
    """Dual coordinate descent on a precomputed Gram matrix (no bias). Returns alpha."""
    K = np.asarray(K, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    alpha = np.zeros(n)
    f = np.zeros(n)  # f_j = sum_i alpha_i y_i K_ij
    rng = np.random.default_rng(seed)
    for _ in range(max_epochs):
        viol = 0.0
        for i in rng.permutation(n):
            if K[i, i] <= 0:
                continue
            G = y[i] * f[i] - 1.0
            pg = min(G, 0.0) if alpha[i] <= 0 else max(G, 0.0) if alpha[i] >= C else G
            viol = max(viol, abs(pg))
            if pg != 0.0:
                a_new = min(max(alpha[i] - G / K[i, i], 0.0), C)
                f += (a_new - alpha[i]) * y[i] * K[i]
                alpha[i] = a_new
        f = K @ (alpha * y)
        if viol < tol:
            break
    return alpha


@dataclass
class MarginReport:
    """Outcome of the margin-absorption check.

    `identity_deviation` compares ``(L.T v).kron(x, x)`` with ``v.L kron(x, x)``;
    `kernel_deviation` (identity L only) compares the explicit kron-feature
    machine with a unary quadratic kernel machine.
    """

    identity_deviation: float
    kernel_deviation: float | None
    decision_values: np.ndarray
    inverse_formed: bool = False
    note: str = ""


def margin_reweighting_check(L, images, y, C: float = 1.0, tol: float = 1e-10,
                             max_epochs: int = 100000) -> MarginReport:
    """Check that a weighting L folds into the SVM weights as ``w = L.T v``.

    Never inverts ``L.T L``; the comparison is on decision values only.
    """
    from .hog import ProjectionMatrix, quadratic_apply
    import scipy.sparse as sp

    M = L.matrix if isinstance(L, ProjectionMatrix) else sp.csr_matrix(L)
    imgs = np.asarray(images, dtype=np.float64)
    X = imgs.reshape(imgs.shape[0], -1)
    D = X.shape[1]
    if M.shape[1] != D * D:
        raise ValueError(f"weighting has {M.shape[1]} columns, images give D**2 = {D * D}")
    Phi = np.array([quadratic_apply(M, x) for x in X])
    model = dcd_train(Phi, y, C=C, tol=tol, max_epochs=max_epochs, bias=False)
    v = model.w
    w = M.T @ v
    kron = np.einsum("ni,nj->nij", X, X).reshape(X.shape[0], D * D)
    dec_w = kron @ w
    dec_v = Phi @ v
    scale = max(1.0, float(np.abs(dec_v).max()))
    identity_dev = float(np.abs(dec_w - dec_v).max()) / scale

    kernel_dev = None
    note = "decision values compared directly; (L^T L)^-1 never formed"
    is_identity = M.shape[0] == M.shape[1] and (M - sp.identity(M.shape[0], format="csr")).count_nonzero() == 0
    if is_identity:
        gram = (X @ X.T) ** 2
        a = kernel_dcd(gram, y, C, tol=tol, max_epochs=max_epochs)
        dec_k = gram @ (a * np.asarray(y, dtype=np.float64))
        kernel_dev = float(np.abs(dec_k - dec_v).max())
        note += "; identity weighting compared against k(a, b) = (a.b)^2"
    return MarginReport(identity_dev, kernel_dev, dec_v, False, note)


# -- estimator -------------------------------------------------------------------

class DualCDClassifier(ClassifierMixin, BaseEstimator):
    """Linear SVM (L1 hinge) fit by dual coordinate descent.

    Binary problems train one machine; more classes train one-vs-rest.
    With ``n_shards > 1`` training goes through consensus ADMM instead.
    """

    def __init__(self, C=1.0, tol=1e-3, max_epochs=1000, fit_intercept=True, random_state=0,
                 n_shards=1, rho=1.0, max_rounds=1000, n_jobs=1):
        self.C = C
        self.tol = tol
        self.max_epochs = max_epochs
        self.fit_intercept = fit_intercept
        self.random_state = random_state
        self.n_shards = n_shards
        self.rho = rho
        self.max_rounds = max_rounds
        self.n_jobs = n_jobs

    def _train_binary(self, X, yb):
        if self.n_shards > 1:
            plan = ShardPlan.random(X.shape[0], self.n_shards, seed=self.random_state,
                                    rho=self.rho, max_rounds=self.max_rounds)
            return consensus_train(X, yb, plan, C=self.C, tol=self.tol, max_epochs=self.max_epochs,
                                   seed=self.random_state, bias=self.fit_intercept, workers=self.n_jobs)
        return dcd_train(X, yb, C=self.C, tol=self.tol, max_epochs=self.max_epochs,
                         seed=self.random_state, bias=self.fit_intercept)

    def fit(self, X, y):
        X = _as_matrix(X)
        self.classes_ = unique_labels(y)
        y = np.asarray(y)
        if self.classes_.size < 2:
            raise ValueError("training data must contain at least two classes")
        if self.classes_.size == 2:
            targets = [np.where(y == self.classes_[1], 1.0, -1.0)]
        else:
            targets = [np.where(y == c, 1.0, -1.0) for c in self.classes_]
        self.models_ = [self._train_binary(X, t) for t in targets]
        W = np.array([m.w for m in self.models_])
        if self.fit_intercept:
            self.coef_, self.intercept_ = W[:, :-1], W[:, -1]
        else:
            self.coef_, self.intercept_ = W, np.zeros(W.shape[0])
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "models_")
        X = _as_matrix(X)
        scores = np.column_stack([predict(m, X) for m in self.models_])
        return scores[:, 0] if scores.shape[1] == 1 else scores

    def predict(self, X):
        scores = self.decision_function(X)
        if scores.ndim == 1:
            return self.classes_[(scores > 0).astype(int)]
        return self.classes_[np.argmax(scores, axis=1)]

    @property
    def objective_(self) -> float:
        check_is_fitted(self, "models_")
        return float(sum(m.objective for m in self.models_))
