"""Synthetic person-year panels with known transition and mental-health surfaces."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.special import expit, logit

from .errors import ConfigError
from .grid import DomainGrid
from .panel import PANEL_COLUMNS, Panel

PRESETS = ("homogeneous", "white_noise", "smooth_gradient", "has_effect_modified")

# RNG stream ids within a year
_DROPOUT, _HAS, _MH, _INIT_AGE, _INIT_STATE = range(5)


def _default_sigma(y):
    return 4.0 + 0.08 * (100.0 - np.asarray(y, dtype=float))


@dataclass(frozen=True, eq=False)
class MhTruth:
    """Data-generating values for first differences of the mental-health score.

    ``s1`` and ``s2`` are grid-shaped surfaces (``None`` means 0 and 1
    respectively). The exposed mean shift is ``beta2 * s2(a, t)``.
    """

    alpha: float = 24.75
    beta1: float = -0.33
    beta2: float = -2.39
    s1: np.ndarray | None = None
    s2: np.ndarray | None = None
    sigma: object = _default_sigma

    def surfaces(self, grid: DomainGrid):
        s1 = np.zeros(grid.shape) if self.s1 is None else np.asarray(self.s1, dtype=float)
        s2 = np.ones(grid.shape) if self.s2 is None else np.asarray(self.s2, dtype=float)
        return s1, s2


@dataclass(frozen=True, eq=False)
class ScenarioSpec:
    """A synthetic panel design with its ground truth.

    ``p_entry`` and ``p_exit`` are grid-shaped probabilities. Ages at the
    first wave are uniform on ``[age_min - n_years, age_max]`` so
    every cell keeps a similar population as the cohort ages; people are
    simulated throughout but only recorded from one year below the grid's
    youngest age up to its oldest, so transitions into every cell are seen.
    ``dropout_has_ratio`` multiplies the dropout hazard of people in HAS
    (1 means non-informative dropout).
    """

    p_entry: np.ndarray
    p_exit: np.ndarray
    grid: DomainGrid = field(default_factory=DomainGrid)
    n_individuals: int = 19914
    n_topup: int = 5451
    topup_year: int | None = 2012
    dropout: float = 0.05
    dropout_has_ratio: float = 1.0
    mh: MhTruth = field(default_factory=MhTruth)
    mh_deficit_shape: float = 2.0
    mh_deficit_scale: float = 12.5
    seed: int = 0
    name: str = "custom"

    def __post_init__(self):
        g = self.grid
        for nm in ("p_entry", "p_exit"):
            v = np.asarray(getattr(self, nm), dtype=float)
            if v.shape != g.shape:
                raise ConfigError(f"{nm} must have the grid shape {g.shape}")
            if np.any((v < 0) | (v > 1)) or np.any(np.isnan(v)):
                raise ConfigError(f"{nm} must lie in [0, 1]")
            object.__setattr__(self, nm, v)
        if self.n_individuals < 0 or self.n_topup < 0:
            raise ConfigError("population sizes must be non-negative")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout hazard must lie in [0, 1)")
        if self.dropout * self.dropout_has_ratio >= 1 or self.dropout_has_ratio < 0:
            raise ConfigError("dropout hazard in HAS must lie in [0, 1)")
        s1, s2 = self.mh.surfaces(g)
        if s1.shape != g.shape or s2.shape != g.shape:
            raise ConfigError("mental-health surfaces must have the grid shape")
        if abs(s1.mean()) > 1e-9:
            raise ConfigError("s1 must have mean zero over the grid")
        if abs(s2.mean() - 1.0) > 1e-9:
            raise ConfigError("s2 must have mean one over the grid")
        ys = np.linspace(0.0, 100.0, 101)
        if np.any(~(np.asarray(self.mh.sigma(ys)) > 0)):
            raise ConfigError("sigma(y) must be positive on [0, 100]")
        if self.topup_year is not None and self.n_topup and not (
                g.year_min < self.topup_year <= g.year_max):
            raise ConfigError("top-up year must fall after the first wave and inside the grid")

    @property
    def effect(self) -> np.ndarray:
        _, s2 = self.mh.surfaces(self.grid)
        return self.mh.beta2 * s2


@dataclass
class Simulation:
    spec: ScenarioSpec
    panel: Panel
    truth_transitions: pd.DataFrame
    truth_effects: pd.DataFrame


def _scaled(grid: DomainGrid):
    a, t = np.meshgrid(grid.ages, grid.years, indexing="ij")
    za = (a - (grid.age_min + grid.age_max) / 2) / max((grid.age_max - grid.age_min) / 2, 1)
    zt = (t - (grid.year_min + grid.year_max) / 2) / max((grid.year_max - grid.year_min) / 2, 1)
    return za, zt


def preset(name: str, seed: int = 0, grid: DomainGrid | None = None, **overrides) -> ScenarioSpec:
    """Named scenarios.

    ``homogeneous``: constant exit 0.46 and entry 0.06.
    ``white_noise``: logits ``logit(0.46) + N(0, 0.3)`` per cell, drawn from ``seed``.
    ``smooth_gradient``: exit falls with age and calendar year.
    ``has_effect_modified``: smooth gradient transitions plus an exposure
    effect surface spanning ``[-3.8, -1.1]``.
    """
    grid = grid or DomainGrid()
    za, zt = _scaled(grid)
    entry = np.full(grid.shape, 0.06)
    mh = MhTruth()
    if name == "homogeneous":
        exit_ = np.full(grid.shape, 0.46)
    elif name == "white_noise":
        rng = np.random.default_rng([seed, 9901])
        exit_ = expit(logit(0.46) + rng.normal(0.0, 0.3, grid.shape))
    elif name in ("smooth_gradient", "has_effect_modified"):
        exit_ = expit(logit(0.46) - 0.25 * za - 0.15 * zt + 0.1 * (za**2 - 1 / 3))
        entry = expit(logit(0.06) + 0.15 * za + 0.1 * zt)
        if name == "has_effect_modified":
            raw = 0.6 * za + 0.4 * zt - 0.3 * za * zt + 0.2 * za**2
            eff = -3.8 + 2.7 * (raw - raw.min()) / (raw.max() - raw.min())
            beta2 = float(eff.mean())
            s1 = 1.5 * np.sin(np.pi * za / 2) + 0.5 * zt
            mh = MhTruth(beta2=beta2, s1=s1 - s1.mean(), s2=eff / beta2)
    else:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    base = dict(p_entry=entry, p_exit=exit_, grid=grid, mh=mh, seed=seed, name=name)
    return ScenarioSpec(**{**base, **overrides})


def _rng(seed, year_idx, stream):
    return np.random.default_rng([int(seed), int(year_idx), int(stream)])


def generate(spec: ScenarioSpec) -> Simulation:
    """Simulate the panel year by year.

    Each wave: dropout, then HAS moves by the first-order Markov truth at
    the person's current age and year, then mental health moves by
    ``alpha + beta1*y_prev + s1 + beta2*M_prev*s2`` plus noise of scale
    ``sigma(y_prev)``, clipped to ``[0, 100]``. Truth surfaces are read at
    the nearest grid cell for people outside the recorded age range.
    """
    g = spec.grid
    mh = spec.mh
    s1, s2 = mh.surfaces(g)
    span = g.n_years - 1
    pi = spec.p_entry / np.clip(spec.p_entry + spec.p_exit, 1e-12, None)

    def lookup(surface, age, yi):
        ai = np.clip(age - g.age_min, 0, g.n_ages - 1)
        return surface[ai, yi]

    def recruit(n, yi):
        r = _rng(spec.seed, yi, _INIT_AGE)
        lo = g.age_min - 1 - (g.year_max - g.year_min - yi)
        age = r.integers(lo, g.age_max + 1, n)
        r = _rng(spec.seed, yi, _INIT_STATE)
        has = (r.uniform(size=n) < lookup(pi, age, yi)).astype(np.int8)
        deficit = r.gamma(spec.mh_deficit_shape, spec.mh_deficit_scale, n)
        y = np.clip(100.0 - deficit, 0.0, 100.0)
        return age - yi, has, y

    age0, has, y = recruit(spec.n_individuals, 0)
    active = np.ones(len(age0), dtype=bool)
    recs = []
    for yi, year in enumerate(g.years):
        if yi > 0:
            hz = np.where(has == 1, spec.dropout * spec.dropout_has_ratio, spec.dropout)
            active &= _rng(spec.seed, yi, _DROPOUT).uniform(size=len(age0)) >= hz
            age = age0 + yi
            m_prev = has.copy()
            p = np.where(m_prev == 1, 1.0 - lookup(spec.p_exit, age, yi),
                         lookup(spec.p_entry, age, yi))
            has = (_rng(spec.seed, yi, _HAS).uniform(size=len(age0)) < p).astype(np.int8)
            mu = mh.alpha + mh.beta1 * y + lookup(s1, age, yi) \
                + mh.beta2 * m_prev * lookup(s2, age, yi)
            eps = _rng(spec.seed, yi, _MH).standard_normal(len(age0))
            y = np.clip(y + mu + mh.sigma(y) * eps, 0.0, 100.0)
        if spec.topup_year is not None and year == spec.topup_year and spec.n_topup:
            a_new, h_new, y_new = recruit(spec.n_topup, yi)
            age0 = np.concatenate([age0, a_new])
            has = np.concatenate([has, h_new])
            y = np.concatenate([y, y_new])
            active = np.concatenate([active, np.ones(spec.n_topup, dtype=bool)])
        age = age0 + yi
        # one age below the grid so transitions into the youngest cells are observed
        keep = active & (age >= g.age_min - 1) & (age <= g.age_max)
        idx = np.nonzero(keep)[0]
        recs.append((idx, np.full(idx.size, year), age[idx], has[idx], np.round(y[idx], 4)))

    person = np.concatenate([r[0] for r in recs])
    order = np.lexsort((np.concatenate([r[1] for r in recs]), person))
    cols = [np.concatenate([r[i] for r in recs])[order] for i in range(5)]
    n_people = len(age0)
    ids = np.array([f"P{i:06d}" for i in range(n_people)], dtype=object)
    panel = Panel(person=cols[0], year=cols[1], age=cols[2], has=cols[3].astype(float),
                  mh=cols[4], person_ids=ids)
    a, t = g.cell_arrays()
    tt = pd.DataFrame({"age": a, "year": t, "p_entry": spec.p_entry.ravel(),
                       "p_exit": spec.p_exit.ravel()})
    te = pd.DataFrame({"age": a, "year": t, "s1": s1.ravel(), "s2": s2.ravel(),
                       "effect": (mh.beta2 * s2).ravel()})
    return Simulation(spec, panel, tt, te)


FLOAT_FORMAT = "%.10g"


def write_panel(panel: Panel, path):
    panel.to_frame().to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def write_simulation(sim: Simulation, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"panel": out / "panel.csv", "truth_transitions": out / "truth_transitions.csv",
             "truth_effects": out / "truth_effects.csv"}
    write_panel(sim.panel, paths["panel"])
    for key in ("truth_transitions", "truth_effects"):
        getattr(sim, key).to_csv(paths[key], index=False, float_format=FLOAT_FORMAT,
                                 lineterminator="\n")
    return paths


__all__ = ["PRESETS", "MhTruth", "ScenarioSpec", "Simulation", "preset", "generate",
           "write_panel", "write_simulation", "PANEL_COLUMNS"]
