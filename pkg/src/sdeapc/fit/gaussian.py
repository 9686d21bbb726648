"""Heteroskedastic Gaussian models for first differences in mental health.

The mean is ``alpha + beta1 * y_prev [+ beta2 * M] + smooth`` and the
log residual scale is an unpenalised cubic B-spline in ``y_prev``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..basis import SmoothSpec, bspline_basis, uniform_knots
from ..errors import ConfigError, DataError, NumericalError
from ..grid import DomainGrid
from ..panel import Diffs
from .laplace import SCALE_DEGREE, DenseFactor, FittedModel, Gram, maximize_hyper
from .structure import CellEffects, Fixed, LinearStructure, Rows, TensorSmooth

FORMS = ("baseline", "has_main", "has_modified")
FLAVORS = ("complete", "partial", "tensor")
MH_RANGE = (0.0, 100.0)
MAX_OUTER = 200
TOL = 1e-8


@dataclass(frozen=True)
class MhModelSpec:
    """Form of the mean model, pooling flavour of its smooth terms and scale-spline size.

    ``baseline``: ``alpha + beta1*y_prev + s1(a, t)``.
    ``has_main``: adds ``beta2 * M``.
    ``has_modified``: ``alpha + beta1*y_prev + (1-M) s1 + beta2*M + M s2*``
    with ``s1`` and ``s2*`` each centred over the rows where they apply.
    """

    form: str = "has_main"
    flavor: str = "tensor"
    smooth: SmoothSpec = field(default_factory=SmoothSpec)
    scale_df: int = 5

    def __post_init__(self):
        if self.form not in FORMS:
            raise ConfigError(f"unknown model form {self.form!r}")
        if self.flavor not in FLAVORS:
            raise ConfigError(f"unknown pooling flavour {self.flavor!r}")
        if self.form == "has_modified" and self.flavor == "complete":
            raise ConfigError("effect modification needs a partial or tensor flavour")
        if self.scale_df < SCALE_DEGREE + 1:
            raise ConfigError(f"scale spline needs at least {SCALE_DEGREE + 1} basis functions")

    @property
    def has_exposure(self) -> bool:
        return self.form != "baseline"

    @property
    def adjustment_set(self) -> tuple[str, ...]:
        return ("age", "calendar_year", "previous_mh")

    @property
    def name(self) -> str:
        return f"{self.flavor}_{self.form}"


def diff_rows(d: Diffs) -> Rows:
    return Rows(d.age, d.year, d.y_prev, d.m)


def scale_knots(df: int = 5) -> np.ndarray:
    return uniform_knots(*MH_RANGE, df - SCALE_DEGREE - 1, SCALE_DEGREE)


def mh_structure(spec: MhModelSpec, grid: DomainGrid, rows: Rows) -> LinearStructure:
    """Mean structure with constraints centred over ``rows``."""
    cols = ("intercept", "y_prev") + (("m",) if spec.has_exposure else ())
    terms = [Fixed(cols)]
    if spec.flavor == "partial":
        terms.append(CellEffects(grid, by_exposure=spec.form == "has_modified"))
    elif spec.flavor == "tensor":
        sm = spec.smooth
        ranges = ((grid.age_min, grid.age_max), (grid.year_min, grid.year_max))
        gates = (0, 1) if spec.form == "has_modified" else (None,)
        for g in gates:
            term = TensorSmooth(*ranges, sm.n_knots, sm.degree, sm.penalty_order,
                                gate=g, lam=sm.lam)
            if g is not None and not np.any(rows.m == g):
                raise DataError(f"no training rows with exposure {g}")
            terms.append(term.constrain(rows))
    return LinearStructure(terms)


class _Problem:
    """Sufficient pieces of the weighted mean problem at fixed scale weights."""

    def __init__(self, X, T, y, w, n_dense):
        self.gram = Gram(X, w, n_dense, T)
        b = X.T @ (w * y)
        self.b = b if T is None else T.T @ b
        self.yWy = float(np.sum(w * y * y))

    def gradient(self, beta, K):
        return self.b - self.gram.matvec(beta) - K @ beta

    def solve(self, K):
        f = self.gram.factor(K)
        return f.solve(self.b), f

    def evidence(self, K, logdet_K):
        beta, f = self.solve(K)
        quad = self.yWy - float(self.b @ beta)
        return -0.5 * quad + 0.5 * logdet_K - 0.5 * f.logdet()


def _scale_newton(Hs, r2, gamma, max_iter=MAX_OUTER):
    """Maximise ``sum(-H gamma - r2 exp(-2 H gamma) / 2)`` over ``gamma``.

    Returns the maximiser and the Newton decrement at the starting point.
    """

    def obj(g):
        ls = Hs @ g
        return float(np.sum(-ls - 0.5 * r2 * np.exp(-2.0 * ls)))

    cur = obj(gamma)
    first = None
    for _ in range(max_iter):
        z = r2 * np.exp(-2.0 * (Hs @ gamma))
        grad = Hs.T @ (z - 1.0)
        H = 2.0 * (Hs * z[:, None]).T @ Hs
        f = DenseFactor(H, "scale Hessian")
        step = f.solve(grad)
        dec = float(grad @ step)
        first = dec if first is None else first
        if np.max(np.abs(grad)) < TOL or dec < TOL:
            return gamma, first
        t = 1.0
        while t > 1e-12:
            cand = gamma + t * step
            new = obj(cand)
            if new >= cur - 1e-12 * abs(cur):
                break
            t *= 0.5
        gamma, cur = cand, new
    raise NumericalError("scale-spline Newton iterations did not converge", {"decrement": dec})


def fit_mh(diffs: Diffs, spec: MhModelSpec | None = None, grid: DomainGrid | None = None,
           log_hyper=None) -> FittedModel:
    """Fit a mental-health difference model by blockwise Newton with a joint Laplace posterior.

    Smoothing parameters (``lambda`` per margin, or the random-effect
    ``sigma``) maximise the Laplace marginal likelihood of the mean block
    at the current scale weights. They are re-selected on each outer
    iteration until they stop moving, then held fixed while the mean and
    scale blocks are alternated to convergence.
    """
    spec = spec or MhModelSpec()
    grid = grid or DomainGrid()
    if len(diffs) == 0:
        raise DataError("no difference records")
    if spec.has_exposure and len(np.unique(diffs.m)) < 2 and spec.form == "has_modified":
        raise DataError("effect modification needs both exposure levels")
    rows = diff_rows(diffs)
    structure = mh_structure(spec, grid, rows)
    X = structure.design(rows)
    T = None if structure.is_identity else structure.transform()
    n_dense = structure.arrow_split()
    y = np.asarray(diffs.dy, dtype=float)
    knots = scale_knots(spec.scale_df)
    Hs = bspline_basis(diffs.y_prev, knots, SCALE_DEGREE)
    p = structure.n_free

    def fitted(beta):
        full = beta if T is None else T @ beta
        return X @ full

    gamma = np.full(Hs.shape[1], np.log(np.std(y) + 1e-12))
    free = log_hyper is None and structure.n_hyper > 0
    h = np.asarray([] if log_hyper is None else log_hyper, dtype=float)
    if free:
        h = np.array([g[len(g) // 2] for g in structure.hyper_grids])
    settled = not free
    beta = np.zeros(p)
    for outer in range(1, MAX_OUTER + 1):
        w = np.exp(-2.0 * (Hs @ gamma))
        prob = _Problem(X, T, y, w, n_dense)
        if not settled:
            h_new, _ = maximize_hyper(
                lambda v: prob.evidence(structure.penalty(v), structure.logdet_penalty(v)),
                structure.hyper_grids)
            settled = outer > 1 and np.max(np.abs(h_new - h)) < 0.02 or outer >= 8
            h = h_new
        K = structure.penalty(h)
        beta_new, fac = prob.solve(K)
        r = y - fitted(beta_new)
        # mean-block decrement at the previous beta, under the current weights
        g_beta = prob.gradient(beta, K)
        dec_beta = float(g_beta @ fac.solve(g_beta))
        beta = beta_new
        gamma, dec_gamma = _scale_newton(Hs, r * r, gamma)
        if settled and dec_beta < TOL and dec_gamma < TOL:
            break
    else:
        raise NumericalError("blockwise iterations did not converge",
                             {"beta_decrement": dec_beta, "gamma_decrement": dec_gamma})

    # joint Laplace covariance of (beta, gamma)
    w = np.exp(-2.0 * (Hs @ gamma))
    prob = _Problem(X, T, y, w, n_dense)
    fac = prob.gram.factor(K)
    r = y - fitted(beta)
    Q = 2.0 * (Hs * (r * r * w)[:, None]).T @ Hs
    C = X.T @ (Hs * (r * w)[:, None]) * 2.0
    C = np.asarray(C if T is None else T.T @ C)
    cov = _block_inverse(fac, C, Q)
    theta = np.concatenate([beta, gamma])

    def log_post(th):
        th = np.asarray(th, dtype=float)
        b, g = th[:p], th[p:]
        ls = Hs @ g
        res = y - fitted(b)
        return float(np.sum(-ls - 0.5 * res * res * np.exp(-2.0 * ls)) - 0.5 * b @ K @ b)

    info = {"iterations": outer, "beta_decrement": dec_beta, "gamma_decrement": dec_gamma,
            "n": len(y)}
    return FittedModel(spec.name, "gaussian", structure, theta, cov, np.asarray(h), log_post,
                       info, scale_knots=knots, training_rows=rows, spec=spec)


def _block_inverse(fac, C, Q):
    """Inverse of ``[[P, C], [C', Q]]`` given a factor of ``P``."""
    Pinv = fac.inverse()
    PC = Pinv @ C
    S = DenseFactor(Q - C.T @ PC, "joint Hessian")
    Sinv = S.inverse()
    top = Pinv + PC @ Sinv @ PC.T
    off = -PC @ Sinv
    out = np.block([[top, off], [off.T, Sinv]])
    return (out + out.T) / 2


def standardized_residuals(m: FittedModel, diffs: Diffs) -> np.ndarray:
    rows = diff_rows(diffs)
    mu = m.linear_predictor(rows)
    return (diffs.dy - mu) / np.exp(m.log_sigma(diffs.y_prev))
