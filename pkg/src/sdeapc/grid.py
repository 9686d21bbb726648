"""Age x calendar-year domain lattice and cohort algebra."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import ConfigError, OutOfRangeError


@dataclass(frozen=True)
class DomainCell:
    age: int
    year: int

    @property
    def cohort(self) -> int:
        """Birth year implied by the cell."""
        return self.year - self.age


@dataclass(frozen=True)
class DomainGrid:
    """Rectangular lattice of one-year age groups by calendar years.

    Cells are enumerated row-major: age is the outer index and year the
    inner one, so ``index(age, year) = (age - age_min) * n_years +
    (year - year_min)``. Matrices shaped ``(n_ages, n_years)`` use the same
    layout.
    """

    age_min: int = 25
    age_max: int = 64
    year_min: int = 2001
    year_max: int = 2016

    def __post_init__(self):
        if self.age_min > self.age_max:
            raise ConfigError(f"age_min {self.age_min} > age_max {self.age_max}")
        if self.year_min > self.year_max:
            raise ConfigError(f"year_min {self.year_min} > year_max {self.year_max}")

    @property
    def n_ages(self) -> int:
        return self.age_max - self.age_min + 1

    @property
    def n_years(self) -> int:
        return self.year_max - self.year_min + 1

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_ages, self.n_years)

    @property
    def n_cells(self) -> int:
        return self.n_ages * self.n_years

    @property
    def ages(self) -> np.ndarray:
        return np.arange(self.age_min, self.age_max + 1)

    @property
    def years(self) -> np.ndarray:
        return np.arange(self.year_min, self.year_max + 1)

    def cells(self) -> list[DomainCell]:
        return list(self)

    def __iter__(self) -> Iterator[DomainCell]:
        for a in range(self.age_min, self.age_max + 1):
            for t in range(self.year_min, self.year_max + 1):
                yield DomainCell(a, t)

    def __len__(self) -> int:
        return self.n_cells

    def cell_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened (ages, years) of every cell in enumeration order."""
        a, t = np.meshgrid(self.ages, self.years, indexing="ij")
        return a.ravel(), t.ravel()

    def contains(self, ages, years) -> np.ndarray:
        ages = np.asarray(ages)
        years = np.asarray(years)
        return ((ages >= self.age_min) & (ages <= self.age_max)
                & (years >= self.year_min) & (years <= self.year_max))

    def index(self, ages, years) -> np.ndarray:
        """Row-major cell index; raises for points off the lattice."""
        ages = np.asarray(ages, dtype=np.int64)
        years = np.asarray(years, dtype=np.int64)
        if not np.all(self.contains(ages, years)):
            raise OutOfRangeError("cell outside the domain grid")
        return (ages - self.age_min) * self.n_years + (years - self.year_min)

    def extend_years(self, horizon: int) -> "DomainGrid":
        return DomainGrid(self.age_min, self.age_max, self.year_min, self.year_max + horizon)


@dataclass(frozen=True)
class QuadraticApcCoeffs:
    """Coefficients of a model quadratic and additive in age, period, cohort."""

    alpha: float = 0.0
    beta1: float = 0.0
    beta2: float = 0.0
    gamma1: float = 0.0
    gamma2: float = 0.0
    delta1: float = 0.0
    delta2: float = 0.0

    def evaluate(self, age, period):
        age = np.asarray(age, dtype=float)
        period = np.asarray(period, dtype=float)
        cohort = period - age
        return (self.alpha + self.beta1 * age + self.beta2 * age**2
                + self.gamma1 * period + self.gamma2 * period**2
                + self.delta1 * cohort + self.delta2 * cohort**2)


@dataclass(frozen=True)
class QuadraticApCoeffs:
    """Same polynomial with cohort substituted out: terms in A, P, A^2, P^2, AP."""

    const: float
    age: float
    period: float
    age2: float
    period2: float
    age_period: float

    def evaluate(self, age, period):
        age = np.asarray(age, dtype=float)
        period = np.asarray(period, dtype=float)
        return (self.const + self.age * age + self.period * period
                + self.age2 * age**2 + self.period2 * period**2
                + self.age_period * age * period)


def apc_reparameterize(c: QuadraticApcCoeffs) -> QuadraticApCoeffs:
    """Rewrite an additive quadratic APC model in age and period only.

    Substituting ``C = P - A`` moves the cohort terms into the age and
    period coefficients and creates an ``A * P`` interaction of
    ``-2 * delta2``.
    """
    return QuadraticApCoeffs(
        const=c.alpha,
        age=c.beta1 - c.delta1,
        period=c.gamma1 + c.delta1,
        age2=c.beta2 + c.delta2,
        period2=c.gamma2 + c.delta2,
        age_period=-2.0 * c.delta2,
    )
