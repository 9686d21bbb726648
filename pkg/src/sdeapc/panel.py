"""Person-year panel ingestion, HAS derivation, transition and first-difference records."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
import pandas as pd

from .errors import DataError
from .grid import DomainCell, DomainGrid

PANEL_COLUMNS = ["person_id", "year", "age", "income", "housing_cost", "has", "mh"]
COST_SHARE = 0.30


@dataclass(frozen=True)
class PersonYear:
    person_id: str
    year: int
    age: int
    has: int | None = None
    income: float | None = None
    housing_cost: float | None = None
    mh: float | None = None


@dataclass(frozen=True)
class TransitionRecord:
    cell: DomainCell
    prev_state: int
    next_state: int


@dataclass(frozen=True)
class DiffRecord:
    cell: DomainCell
    y_prev: float
    dy: float
    has_prev: int


def _opt(v):
    return None if pd.isna(v) else v


@dataclass
class Panel:
    """Column store of person-year records.

    Missing values are NaN in the float columns. ``person`` holds integer
    codes for the original identifiers in ``person_ids``.
    """

    person: np.ndarray
    year: np.ndarray
    age: np.ndarray
    has: np.ndarray
    mh: np.ndarray
    income: np.ndarray = None
    housing_cost: np.ndarray = None
    person_ids: np.ndarray = None

    def __post_init__(self):
        n = len(self.person)
        nan = np.full(n, np.nan)
        self.person = np.asarray(self.person, dtype=np.int64)
        self.year = np.asarray(self.year, dtype=np.int64)
        self.age = np.asarray(self.age, dtype=np.int64)
        self.has = np.asarray(self.has, dtype=float)
        self.mh = np.asarray(self.mh, dtype=float)
        self.income = nan.copy() if self.income is None else np.asarray(self.income, dtype=float)
        self.housing_cost = (nan.copy() if self.housing_cost is None
                             else np.asarray(self.housing_cost, dtype=float))
        if self.person_ids is None:
            top = int(self.person.max()) + 1 if n else 0
            self.person_ids = np.array([str(p) for p in range(top)], dtype=object)
        keys = np.stack([self.person, self.year], axis=1)
        if n and len(np.unique(keys, axis=0)) != n:
            raise DataError("more than one record for a (person_id, year) pair")
        present = ~np.isnan(self.mh)
        if np.any((self.mh[present] < 0) | (self.mh[present] > 100)):
            raise DataError("mh scores must lie in [0, 100]")
        h = self.has[~np.isnan(self.has)]
        if np.any((h != 0) & (h != 1)):
            raise DataError("has must be 0 or 1")

    def __len__(self) -> int:
        return len(self.person)

    def records(self) -> Iterator[PersonYear]:
        for i in range(len(self)):
            yield PersonYear(
                person_id=str(self.person_ids[self.person[i]]),
                year=int(self.year[i]), age=int(self.age[i]),
                has=None if np.isnan(self.has[i]) else int(self.has[i]),
                income=_opt(self.income[i]), housing_cost=_opt(self.housing_cost[i]),
                mh=_opt(self.mh[i]))

    @classmethod
    def from_frame(cls, df: pd.DataFrame) -> "Panel":
        missing = {"person_id", "year", "age"} - set(df.columns)
        if missing:
            raise DataError(f"panel is missing columns: {sorted(missing)}")
        codes, uniques = pd.factorize(df["person_id"].astype(str), sort=True)
        col = lambda name: (pd.to_numeric(df[name], errors="coerce").to_numpy(float)
                            if name in df else None)
        if df[["year", "age"]].isna().any().any():
            raise DataError("year and age are required on every record")
        return cls(person=codes, year=df["year"].to_numpy(np.int64),
                   age=df["age"].to_numpy(np.int64),
                   has=col("has") if "has" in df else np.full(len(df), np.nan),
                   mh=col("mh") if "mh" in df else np.full(len(df), np.nan),
                   income=col("income"), housing_cost=col("housing_cost"),
                   person_ids=np.asarray(uniques, dtype=object))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "person_id": self.person_ids[self.person],
            "year": self.year, "age": self.age,
            "income": self.income, "housing_cost": self.housing_cost,
            "has": pd.array(np.where(np.isnan(self.has), pd.NA, self.has), dtype="Int64"),
            "mh": self.mh,
        })[PANEL_COLUMNS]

    def _consecutive_pairs(self):
        """Index pairs (i, j) of the same person in years t-1 and t."""
        order = np.lexsort((self.year, self.person))
        i, j = order[:-1], order[1:]
        keep = (self.person[i] == self.person[j]) & (self.year[j] - self.year[i] == 1)
        return i[keep], j[keep]


def derive_has(income, housing_cost, income_p40):
    """HAS by the 30/40 rule.

    In HAS when housing costs are at least 30% of income and income is at
    or below the year's 40th-percentile threshold. Records with missing or
    non-positive income, or missing costs, get no status: ``None`` for
    scalars and NaN in arrays.
    """
    scalar = np.isscalar(income) or income is None
    inc = np.asarray(np.nan if income is None else income, dtype=float)
    cost = np.asarray(np.nan if housing_cost is None else housing_cost, dtype=float)
    p40 = np.asarray(income_p40, dtype=float)
    invalid = np.isnan(inc) | np.isnan(cost) | (inc <= 0) | (cost < 0) | np.isnan(p40)
    with np.errstate(invalid="ignore"):
        status = ((cost >= COST_SHARE * inc) & (inc <= p40)).astype(float)
    status = np.where(invalid, np.nan, status)
    if scalar:
        return None if np.isnan(status) else int(status)
    return status


@dataclass
class IngestReport:
    counts: Counter = field(default_factory=Counter)

    def add(self, key: str, n: int = 1):
        self.counts[key] += int(n)

    def to_frame(self) -> pd.DataFrame:
        items = sorted(self.counts.items())
        return pd.DataFrame(items, columns=["item", "count"])


def read_thresholds(path) -> dict[int, float]:
    df = pd.read_csv(path)
    if not {"year", "income_p40"} <= set(df.columns):
        raise DataError("thresholds file needs columns year,income_p40")
    return dict(zip(df["year"].astype(int), df["income_p40"].astype(float)))


def read_panel(path, thresholds=None, report: IngestReport | None = None) -> Panel:
    """Load a panel CSV, deriving HAS from income and costs when the column is absent.

    ``thresholds`` maps year to the 40th-percentile income, or is a path
    to a ``year,income_p40`` CSV.
    """
    report = report if report is not None else IngestReport()
    try:
        df = pd.read_csv(path, dtype={"person_id": str})
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot read panel {path}: {exc}") from exc
    report.add("records_read", len(df))
    need_derive = "has" not in df or df["has"].isna().all()
    if need_derive:
        if thresholds is None:
            raise DataError("panel has no 'has' column; a thresholds table is required")
        if isinstance(thresholds, (str, Path)):
            thresholds = read_thresholds(thresholds)
        for col in ("income", "housing_cost"):
            if col not in df:
                raise DataError(f"deriving HAS needs column {col!r}")
        years = df["year"].astype(int)
        unknown = sorted(set(years) - set(thresholds))
        if unknown:
            raise DataError(f"no income threshold for years {unknown[:5]}")
        p40 = years.map(thresholds).to_numpy(float)
        df["has"] = derive_has(pd.to_numeric(df["income"], errors="coerce").to_numpy(float),
                               pd.to_numeric(df["housing_cost"], errors="coerce").to_numpy(float),
                               p40)
        report.add("excluded_missing_income_or_cost", int(np.isnan(df["has"]).sum()))
    else:
        report.add("missing_has", int(df["has"].isna().sum()))
    report.add("missing_mh", int(df["mh"].isna().sum()) if "mh" in df else len(df))
    return Panel.from_frame(df)


@dataclass
class Transitions:
    """First-order transition records for one direction.

    ``event`` is the Bernoulli outcome scored by the models: leaving HAS
    for exit records, entering it for entry records. Age and year refer to
    the later of the two waves.
    """

    direction: str
    age: np.ndarray
    year: np.ndarray
    prev: np.ndarray
    next: np.ndarray
    person: np.ndarray
    skipped: dict = field(default_factory=dict)

    @property
    def event(self) -> np.ndarray:
        return (self.next == 0).astype(np.int64) if self.direction == "exit" \
            else (self.next == 1).astype(np.int64)

    def __len__(self) -> int:
        return len(self.age)

    def subset(self, mask) -> "Transitions":
        return Transitions(self.direction, self.age[mask], self.year[mask],
                           self.prev[mask], self.next[mask], self.person[mask])

    def records(self) -> Iterator[TransitionRecord]:
        for a, t, p, q in zip(self.age, self.year, self.prev, self.next):
            yield TransitionRecord(DomainCell(int(a), int(t)), int(p), int(q))


def extract_transitions(panel: Panel, direction: str, grid: DomainGrid) -> Transitions:
    """Consecutive-year HAS pairs at risk of the given transition.

    Exit records start in HAS, entry records start outside it. Pairs with
    a gap year, a missing status, or a later-wave cell off the grid are
    skipped and tallied in ``skipped``.
    """
    if direction not in ("entry", "exit"):
        raise DataError(f"direction must be 'entry' or 'exit', not {direction!r}")
    i, j = panel._consecutive_pairs()
    prev, nxt = panel.has[i], panel.has[j]
    known = ~np.isnan(prev) & ~np.isnan(nxt)
    in_grid = grid.contains(panel.age[j], panel.year[j])
    at_risk = prev == (1.0 if direction == "exit" else 0.0)
    keep = known & in_grid & at_risk
    skipped = {
        "missing_status": int((~known).sum()),
        "outside_grid": int((known & ~in_grid).sum()),
    }
    i, j = i[keep], j[keep]
    return Transitions(direction, panel.age[j], panel.year[j],
                       panel.has[i].astype(np.int64), panel.has[j].astype(np.int64),
                       panel.person[j], skipped)


@dataclass
class CellCounts:
    """At-risk (``n``) and event (``k``) counts per cell, shaped like the grid."""

    grid: DomainGrid
    n: np.ndarray
    k: np.ndarray

    def __post_init__(self):
        if self.n.shape != self.grid.shape or self.k.shape != self.grid.shape:
            raise DataError("count arrays must match the grid shape")
        if np.any(self.k < 0) or np.any(self.k > self.n):
            raise DataError("need 0 <= k <= n in every cell")

    @property
    def total_n(self) -> int:
        return int(self.n.sum())

    @property
    def total_k(self) -> int:
        return int(self.k.sum())

    @property
    def populated(self) -> np.ndarray:
        return self.n > 0

    def flat(self):
        """(ages, years, n, k) for every cell in enumeration order."""
        a, t = self.grid.cell_arrays()
        return a, t, self.n.ravel(), self.k.ravel()


def aggregate(records: Transitions, grid: DomainGrid) -> CellCounts:
    n = np.zeros(grid.n_cells, dtype=np.int64)
    k = np.zeros(grid.n_cells, dtype=np.int64)
    if len(records):
        inside = grid.contains(records.age, records.year)
        idx = grid.index(records.age[inside], records.year[inside])
        n = np.bincount(idx, minlength=grid.n_cells)
        k = np.bincount(idx, weights=records.event[inside], minlength=grid.n_cells).astype(np.int64)
    return CellCounts(grid, n.reshape(grid.shape), k.reshape(grid.shape))


@dataclass
class Diffs:
    """First-difference mental-health records.

    ``m`` is the HAS status in the earlier wave; age and year are the
    later wave's.
    """

    age: np.ndarray
    year: np.ndarray
    y_prev: np.ndarray
    dy: np.ndarray
    m: np.ndarray
    person: np.ndarray
    skipped: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.age)

    def subset(self, mask) -> "Diffs":
        return Diffs(self.age[mask], self.year[mask], self.y_prev[mask],
                     self.dy[mask], self.m[mask], self.person[mask])

    def records(self) -> Iterator[DiffRecord]:
        for a, t, y, d, m in zip(self.age, self.year, self.y_prev, self.dy, self.m):
            yield DiffRecord(DomainCell(int(a), int(t)), float(y), float(d), int(m))


def extract_diffs(panel: Panel, grid: DomainGrid) -> Diffs:
    i, j = panel._consecutive_pairs()
    known = ~np.isnan(panel.mh[i]) & ~np.isnan(panel.mh[j]) & ~np.isnan(panel.has[i])
    in_grid = grid.contains(panel.age[j], panel.year[j])
    keep = known & in_grid
    skipped = {"missing_mh_or_status": int((~known).sum()),
               "outside_grid": int((known & ~in_grid).sum())}
    i, j = i[keep], j[keep]
    return Diffs(panel.age[j], panel.year[j], panel.mh[i], panel.mh[j] - panel.mh[i],
                 panel.has[i].astype(np.int64), panel.person[j], skipped)
