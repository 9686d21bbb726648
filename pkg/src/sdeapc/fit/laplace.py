"""Penalised Newton iterations, Laplace evidence, hyperparameter search and the fitted-model type."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg, sparse
from scipy.special import expit

from ..basis import bspline_basis
from ..errors import ConfigError, NumericalError
from .structure import LinearStructure, Rows

MAX_ITER = 200
GRAD_TOL = 1e-8
STALL_TOL = 1e-5     # decrement below which a round-off-level stall counts as converged
SCALE_DEGREE = 3


class DenseFactor:
    """Cholesky factor of a symmetric positive definite matrix."""

    def __init__(self, H, what="penalised Hessian"):
        self.p = H.shape[0]
        try:
            self.c = linalg.cho_factor(H, lower=True, check_finite=True)
        except (linalg.LinAlgError, ValueError) as exc:
            raise NumericalError(f"{what} is not positive definite", _eig_diag(H)) from exc

    def solve(self, v):
        return linalg.cho_solve(self.c, v)

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.c[0]))))

    def inverse(self) -> np.ndarray:
        S = self.solve(np.eye(self.p))
        return (S + S.T) / 2


class ArrowFactor:
    """Factor of ``[[A, B], [B', diag(d)]]`` through the Schur complement of the diagonal block."""

    def __init__(self, A, B, d, what="penalised Hessian"):
        if np.any(~(d > 0)):
            raise NumericalError(f"{what} is not positive definite",
                                 {"min_diagonal": float(np.min(d))})
        self.B, self.d = B, d
        self.S = DenseFactor(A - (B / d) @ B.T, what)
        self.p = A.shape[0] + len(d)

    def solve(self, v):
        q = self.S.p
        v1, v2 = v[:q], v[q:]
        x1 = self.S.solve(v1 - self.B @ (v2 / self.d))
        x2 = (v2 - self.B.T @ x1) / self.d
        return np.concatenate([x1, x2])

    def logdet(self) -> float:
        return self.S.logdet() + float(np.sum(np.log(self.d)))

    def inverse(self) -> np.ndarray:
        Si = self.S.inverse()
        C = self.B / self.d                   # q x m
        top_right = -Si @ C
        bottom = np.diag(1.0 / self.d) + C.T @ Si @ C
        out = np.block([[Si, top_right], [top_right.T, bottom]])
        return (out + out.T) / 2


def _eig_diag(H):
    try:
        ev = np.linalg.eigvalsh((H + H.T) / 2)
        return {"min_eigenvalue": float(ev[0]), "max_eigenvalue": float(ev[-1])}
    except (np.linalg.LinAlgError, ValueError):
        return {}


def weighted_gram(X, w) -> np.ndarray:
    """``X' diag(w) X`` as a dense array for sparse or dense ``X``."""
    if sparse.issparse(X):
        return np.asarray((X.T @ X.multiply(w[:, None]).tocsr()).todense())
    return (X * w[:, None]).T @ X


class Gram:
    """Weighted Gram matrix ``X' diag(w) X``, ready to factor with a penalty added.

    With ``n_dense`` the columns after the first ``n_dense`` are
    indicators of disjoint row groups, so their block is diagonal and an
    arrowhead factorisation replaces the dense one.
    """

    def __init__(self, X, w, n_dense=None, T=None):
        self.n_dense = n_dense
        if n_dense is None:
            self.G = weighted_gram(X, w)
            if T is not None:
                self.G = T.T @ self.G @ T
            return
        X1, X2 = X[:, :n_dense], X[:, n_dense:]
        self.A = weighted_gram(X1, w)
        if sparse.issparse(X):
            self.B = np.asarray((X1.T @ X2.multiply(w[:, None]).tocsr()).todense())
            self.d = np.asarray(X2.multiply(X2).T @ w).ravel()
        else:
            self.B = (X1 * w[:, None]).T @ X2
            self.d = (X2 ** 2).T @ w

    def factor(self, K):
        if self.n_dense is None:
            return DenseFactor(self.G + K)
        q = self.n_dense
        return ArrowFactor(self.A + K[:q, :q], self.B, self.d + np.diag(K)[q:])

    def matvec(self, v) -> np.ndarray:
        if self.n_dense is None:
            return self.G @ v
        q = self.n_dense
        return np.concatenate([self.A @ v[:q] + self.B @ v[q:], self.B.T @ v[:q] + self.d * v[q:]])


def binomial_loglik(eta, n, k) -> float:
    return float(np.sum(k * eta - n * np.logaddexp(0.0, eta)))


@dataclass
class NewtonResult:
    theta: np.ndarray
    factor: DenseFactor | ArrowFactor
    objective: float
    loglik: float
    iterations: int
    gradient_norm: float
    stalled: bool = False


def binomial_mode(X, n, k, K, theta0=None, n_dense=None, max_iter=MAX_ITER,
                  tol=GRAD_TOL) -> NewtonResult:
    """Maximise ``sum(k*eta - n*log(1+e^eta)) - theta'K theta / 2`` with ``eta = X theta``.

    Converged when the largest score component or the Newton decrement
    falls below ``tol``. Step halving keeps the objective monotone. On
    nearly singular problems the iterates can stall at round-off level
    before reaching ``tol``; a step that gains nothing measurable with a
    decrement under ``STALL_TOL`` is then accepted as the mode and the
    result is marked ``stalled``.
    """
    p = X.shape[1]
    theta = np.zeros(p) if theta0 is None else np.array(theta0, dtype=float)

    def objective(th):
        ll = binomial_loglik(X @ th, n, k)
        return ll - 0.5 * th @ K @ th, ll

    obj, ll = objective(theta)
    gnorm = decrement = np.inf
    for it in range(1, max_iter + 1):
        mu = expit(X @ theta)
        g = X.T @ (k - n * mu) - K @ theta
        f = Gram(X, n * mu * (1.0 - mu), n_dense).factor(K)
        step = f.solve(g)
        decrement = float(g @ step)
        gnorm = float(np.max(np.abs(g))) if p else 0.0
        if gnorm < tol or decrement < tol:
            return NewtonResult(theta, f, obj, ll, it, gnorm)
        t = 1.0
        for _ in range(60):
            cand = theta + t * step
            new_obj, new_ll = objective(cand)
            if new_obj >= obj - 1e-12 * abs(obj):
                break
            t *= 0.5
        else:
            raise NumericalError("step halving failed", {"iteration": it, "gradient": gnorm})
        if new_obj - obj <= 1e-12 * abs(obj) and decrement < STALL_TOL:
            return NewtonResult(theta, f, obj, ll, it, gnorm, stalled=True)
        theta, obj, ll = cand, new_obj, new_ll
    raise NumericalError(f"Newton iterations did not converge in {max_iter} steps",
                         {"gradient": gnorm, "decrement": decrement})


def golden_section(f, a, b, tol=0.01, max_iter=100):
    """Maximise a unimodal ``f`` on ``[a, b]``; returns ``(x, f(x))``."""
    r = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - r * (b - a), a + r * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) < tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - r * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + r * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def maximize_hyper(f: Callable, grids: list[np.ndarray], max_cycles=3, refine=True):
    """Grid search then golden-section refinement of ``f`` over log10 hyperparameters.

    One dimension is scanned exhaustively. With several dimensions the
    search is coordinate-wise on the grid: each coordinate is scanned over
    its full grid with the others held, cycling until the arg-max stops
    moving. Each coordinate is then refined by golden section inside the
    bracket formed by its grid neighbours.
    """
    if not grids:
        return np.array([]), f(np.array([]))
    cache = {}

    def at(ix):
        key = tuple(ix)
        if key not in cache:
            cache[key] = f(np.array([g[i] for g, i in zip(grids, ix)]))
        return cache[key]

    idx = [len(g) // 2 for g in grids]
    for _ in range(max_cycles):
        moved = False
        for d, g in enumerate(grids):
            scores = []
            for j in range(len(g)):
                trial = list(idx)
                trial[d] = j
                scores.append(at(trial))
            best = int(np.argmax(scores))
            if best != idx[d]:
                idx[d] = best
                moved = True
        if not moved or len(grids) == 1:
            break
    x = np.array([g[i] for g, i in zip(grids, idx)], dtype=float)
    best_val = at(idx)
    if refine:
        for d, g in enumerate(grids):
            i = idx[d]
            if 0 < i < len(g) - 1:
                def f1(v, d=d):
                    trial = x.copy()
                    trial[d] = v
                    return f(trial)
                v, fv = golden_section(f1, g[i - 1], g[i + 1])
                if fv > best_val:
                    x[d], best_val = v, fv
    return x, best_val


@dataclass
class FittedModel:
    """Posterior mode, Laplace covariance and the mapping to linear predictors.

    ``theta`` holds the free coefficients of the mean structure, followed
    for Gaussian models by the coefficients of the log-scale spline.
    ``log_posterior`` evaluates the unnormalised log posterior that the
    Laplace approximation targets; the Metropolis validator samples it.
    """

    kind: str
    family: str
    structure: LinearStructure
    theta: np.ndarray
    cov: np.ndarray
    log_hyper: np.ndarray = field(default_factory=lambda: np.array([]))
    log_posterior: Callable | None = field(default=None, repr=False)
    info: dict = field(default_factory=dict)
    scale_knots: np.ndarray | None = None
    training_rows: Rows | None = field(default=None, repr=False)
    spec: object = None

    def __post_init__(self):
        self._T = self.structure.transform()
        self.n_mean = self.structure.n_free

    @property
    def hyper(self) -> dict:
        return self.structure.hyper_values(self.log_hyper)

    def coef(self, name: str) -> np.ndarray:
        return self.theta[self.structure.slices()[name]]

    def mean_matrix(self, rows: Rows) -> np.ndarray:
        """Dense map from free mean coefficients to the linear predictor of ``rows``."""
        self.structure.check_rows(rows)
        X = self.structure.design(rows)
        if self.structure.is_identity:
            return X.toarray()
        return np.asarray(X @ self._T)

    def linear_predictor(self, rows: Rows, theta=None) -> np.ndarray:
        """Linear predictor at the mode, or for each row of a draw matrix."""
        self.structure.check_rows(rows)
        X = self.structure.design(rows)
        th = self.theta if theta is None else np.asarray(theta)
        beta = th[..., :self.n_mean]
        full = beta @ self._T.T
        return np.asarray(X @ full.T).T if full.ndim == 2 else np.asarray(X @ full)

    def lp_variance(self, rows: Rows) -> np.ndarray:
        A = self.mean_matrix(rows)
        S = self.cov[:self.n_mean, :self.n_mean]
        return np.einsum("ij,jk,ik->i", A, S, A)

    def contrast(self, rows_a: Rows, rows_b: Rows, theta=None) -> np.ndarray:
        """Linear-predictor difference between two row sets of equal length.

        The design matrices are differenced before multiplying, so columns
        that agree in both row sets drop out exactly.
        """
        self.structure.check_rows(rows_a)
        self.structure.check_rows(rows_b)
        D = self.structure.design(rows_a) - self.structure.design(rows_b)
        th = self.theta if theta is None else np.asarray(theta)
        full = th[..., :self.n_mean] @ self._T.T
        return np.asarray(D @ full.T).T if full.ndim == 2 else np.asarray(D @ full)

    def log_sigma(self, y_prev, theta=None) -> np.ndarray:
        """Log residual scale at ``y_prev`` (Gaussian models only)."""
        if self.scale_knots is None:
            raise ConfigError("model has no scale component")
        H = bspline_basis(np.asarray(y_prev, dtype=float), self.scale_knots, SCALE_DEGREE)
        th = self.theta if theta is None else np.asarray(theta)
        g = th[..., self.n_mean:]
        return H @ g.T if g.ndim == 2 else H @ g

    def draws(self, n_draws: int, seed) -> np.ndarray:
        return posterior_draws(self, n_draws, seed)


def posterior_draws(m: FittedModel, n_draws: int, seed) -> np.ndarray:
    """Draws from ``N(theta, cov)``, shape ``(n_draws, len(theta))``."""
    p = len(m.theta)
    if n_draws <= 0:
        return np.empty((0, p))
    rng = np.random.default_rng(seed)
    try:
        L = np.linalg.cholesky(m.cov)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh((m.cov + m.cov.T) / 2)
        L = V * np.sqrt(np.clip(w, 0.0, None))
    z = rng.standard_normal((n_draws, p))
    return m.theta + z @ L.T
