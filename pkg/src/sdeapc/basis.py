"""B-spline bases, tensor products, difference penalties and sum constraints."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .errors import ConfigError, DataError, OutOfRangeError

CONSTRAINTS = ("none", "zero_mean", "mean_one")


@dataclass(frozen=True)
class SmoothSpec:
    """Layout of a (tensor) P-spline smooth.

    ``n_knots`` is the number of interior knots per margin, so each margin
    carries ``n_knots + degree + 1`` basis functions. ``lam`` holds the
    per-margin penalty weights; ``None`` means they are selected by
    marginal likelihood when the smooth is fitted.
    """

    dimension: int = 2
    n_knots: int = 8
    degree: int = 3
    penalty_order: int = 2
    constraint: str = "none"
    lam: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ConfigError("dimension must be 1 or 2")
        if self.degree < 0 or self.n_knots < 0:
            raise ConfigError("degree and n_knots must be non-negative")
        if self.n_basis <= self.penalty_order:
            raise ConfigError(
                f"{self.n_basis} basis functions per margin cannot carry an "
                f"order-{self.penalty_order} difference penalty")
        if self.constraint not in CONSTRAINTS:
            raise ConfigError(f"unknown constraint {self.constraint!r}")
        if self.lam is not None:
            if len(self.lam) != self.dimension:
                raise ConfigError("need one penalty weight per margin")
            if any(l < 0 for l in self.lam):
                raise ConfigError("penalty weights must be non-negative")

    @property
    def n_basis(self) -> int:
        return self.n_knots + self.degree + 1

    def knots(self, lo: float, hi: float) -> np.ndarray:
        return uniform_knots(lo, hi, self.n_knots, self.degree)

    def basis(self, x, lo=None, hi=None) -> np.ndarray:
        """Evaluate the margin basis, placing knots over ``[lo, hi]``.

        The range defaults to the span of ``x``.
        """
        x = np.asarray(x, dtype=float)
        lo = x.min() if lo is None else lo
        hi = x.max() if hi is None else hi
        return bspline_basis(x, self.knots(lo, hi), self.degree)


def uniform_knots(lo: float, hi: float, n_interior: int, degree: int) -> np.ndarray:
    """Equally spaced knots over ``[lo, hi]`` padded by ``degree`` exterior knots per side."""
    if not hi > lo:
        raise ConfigError(f"empty knot range [{lo}, {hi}]")
    h = (hi - lo) / (n_interior + 1)
    k = np.arange(-degree, n_interior + 2 + degree, dtype=float)
    knots = lo + h * k
    # pin the boundary knots so the valid range is exactly [lo, hi]
    knots[degree] = lo
    knots[degree + n_interior + 1] = hi
    return knots


def bspline_basis(x, knots, degree: int = 3) -> np.ndarray:
    """Dense B-spline design matrix by the Cox-de Boor recursion.

    Rows sum to one on ``[knots[degree], knots[-degree - 1]]``; points
    outside that range raise :class:`OutOfRangeError`. The right boundary
    belongs to the last interval.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t = np.asarray(knots, dtype=float)
    p = int(degree)
    n_basis = len(t) - p - 1
    if n_basis < 1:
        raise ConfigError("too few knots for the requested degree")
    lo, hi = t[p], t[n_basis]
    tol = 1e-9 * (hi - lo)
    if np.any(x < lo - tol) or np.any(x > hi + tol) or np.any(~np.isfinite(x)):
        bad = x[(x < lo - tol) | (x > hi + tol) | ~np.isfinite(x)]
        raise OutOfRangeError(
            f"{bad.size} point(s) outside basis range [{lo:g}, {hi:g}], e.g. {bad[0]:g}")
    x = np.clip(x, lo, hi)

    # span index i with t[i] <= x < t[i+1], restricted to the valid spans
    span = np.searchsorted(t, x, side="right") - 1
    span = np.clip(span, p, n_basis - 1)

    n = x.size
    N = np.zeros((n, p + 1))
    N[:, 0] = 1.0
    left = np.zeros((n, p + 1))
    right = np.zeros((n, p + 1))
    for j in range(1, p + 1):
        left[:, j] = x - t[span + 1 - j]
        right[:, j] = t[span + j] - x
        saved = np.zeros(n)
        for r in range(j):
            temp = N[:, r] / (right[:, r + 1] + left[:, j - r])
            N[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        N[:, j] = saved

    B = np.zeros((n, n_basis))
    rows = np.repeat(np.arange(n), p + 1)
    cols = (span[:, None] - p + np.arange(p + 1)[None, :]).ravel()
    B[rows, cols] = N.ravel()
    return B


def tensor_basis(b_age, b_year):
    """Row-wise Kronecker product; column ``i * n_year + j`` pairs age ``i`` with year ``j``."""
    if b_age.shape[0] != b_year.shape[0]:
        raise DataError(
            f"row-count mismatch: {b_age.shape[0]} vs {b_year.shape[0]}")
    b_age = np.asarray(b_age)
    b_year = np.asarray(b_year)
    n = b_age.shape[0]
    return (b_age[:, :, None] * b_year[:, None, :]).reshape(n, -1)


def difference_matrix(n_basis: int, order: int) -> np.ndarray:
    if n_basis <= order:
        raise ConfigError(f"n_basis={n_basis} must exceed penalty order {order}")
    return np.diff(np.eye(n_basis), order, axis=0)


def difference_penalty(n_basis: int, order: int = 2, lam=1.0, tensor_dims=None) -> np.ndarray:
    """Difference penalty ``K`` with ``theta' K theta = lam * sum((diff^order theta)^2)``.

    With ``tensor_dims=(n_age, n_year)`` the result is
    ``lam[0] * kron(Da'Da, I) + lam[1] * kron(I, Dt'Dt)`` for coefficients
    laid out age-major.
    """
    if tensor_dims is None:
        D = difference_matrix(n_basis, order)
        return float(lam) * (D.T @ D)
    na, nt = tensor_dims
    if na * nt != n_basis:
        raise ConfigError("tensor_dims do not multiply to n_basis")
    lam_a, lam_t = lam
    Pa = difference_penalty(na, order)
    Pt = difference_penalty(nt, order)
    return lam_a * np.kron(Pa, np.eye(nt)) + lam_t * np.kron(np.eye(na), Pt)


@dataclass(frozen=True)
class Reparam:
    """Map from constrained coefficients back to the full basis.

    The smooth evaluates as ``offset + B @ (Z @ beta)``.
    """

    Z: np.ndarray
    offset: float = 0.0
    kind: str = "none"

    def full(self, beta) -> np.ndarray:
        return self.Z @ np.asarray(beta)

    def smooth(self, B, beta) -> np.ndarray:
        return self.offset + B @ self.full(beta)


def sum_to_zero_transform(col_sums) -> np.ndarray:
    """Orthonormal basis of the complement of ``col_sums``.

    Coefficients ``Z @ beta`` give a smooth whose sum over the rows that
    produced ``col_sums`` is zero.
    """
    c = np.asarray(col_sums, dtype=float).reshape(-1, 1)
    q, _ = np.linalg.qr(c, mode="complete")
    return q[:, 1:]


def apply_constraint(B, kind: str = "zero_mean"):
    """Reparameterise basis ``B`` so the smooth satisfies a mean constraint over its rows.

    Returns ``(B @ Z, Reparam)``. ``mean_one`` shares the zero-mean
    reparameterisation and adds a unit offset, so zero free coefficients
    give the smooth ``1`` everywhere.
    """
    if kind not in CONSTRAINTS:
        raise ConfigError(f"unknown constraint {kind!r}")
    if B.shape[0] == 0:
        raise DataError("cannot constrain an empty basis")
    p = B.shape[1]
    if kind == "none":
        return B, Reparam(np.eye(p), 0.0, kind)
    col_sums = np.asarray(B.sum(axis=0)).ravel()
    Z = sum_to_zero_transform(col_sums)
    offset = 1.0 if kind == "mean_one" else 0.0
    return B @ Z, Reparam(Z, offset, kind)


def _wiggle_1d(f, h, axis):
    d2 = np.diff(f, 2, axis=axis) / h**2
    return trapezoid(np.abs(d2), dx=h, axis=axis)


def wiggle(f_values, spacing=1.0):
    """Integrated absolute second derivative, from second differences.

    1-d input returns a float. 2-d input returns ``(axis0, axis1)``: the
    integral over the whole surface of ``|d2f/dx_k^2|`` for each axis.
    """
    f = np.asarray(f_values, dtype=float)
    if f.ndim == 1:
        if f.size < 3:
            raise DataError("wiggle needs at least 3 points")
        return float(_wiggle_1d(f, float(spacing), 0))
    if f.ndim != 2:
        raise DataError("wiggle supports 1-d or 2-d grids")
    if min(f.shape) < 3:
        raise DataError("wiggle needs at least 3 points per axis")
    h0, h1 = (spacing, spacing) if np.isscalar(spacing) else spacing
    w0 = trapezoid(_wiggle_1d(f, h0, 0), dx=h1)
    w1 = trapezoid(_wiggle_1d(f, h1, 1), dx=h0)
    return float(w0), float(w1)
