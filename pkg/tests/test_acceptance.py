"""Acceptance criteria, one test each, at their stated tolerances.

Every test records a one-line PASS/FAIL verdict that is printed in the
terminal summary.
"""

import time
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest
from scipy import integrate, stats
from scipy.special import expit, logit

from sdeapc import CellCounts, DomainGrid, QuadraticApcCoeffs, aggregate, apc_reparameterize, \
    extract_diffs, extract_transitions
from sdeapc.cli import main
from sdeapc.cv import compare, cross_validate, make_folds
from sdeapc.fit import MhModelSpec, fit_complete, fit_direct, fit_mh, fit_partial, fit_saturated, \
    mh_sampler
from sdeapc.gcomp import CounterfactualQuery, YPrevPolicy, effect_surface, equilibrium_shift
from sdeapc.simulate import generate, preset

from conftest import record_acceptance

GRID = DomainGrid()
SEEDS = range(10)
N_DRAWS = 1000


def hilda_transitions(name, seed):
    sim = generate(preset(name, seed, GRID))
    return extract_transitions(sim.panel, "exit", GRID)


def test_c01_saturated_equals_direct():
    g = DomainGrid(30, 39, 2001, 2010)
    rng = np.random.default_rng(1)
    n = rng.integers(1, 40, g.shape)
    k = rng.binomial(n, rng.uniform(0.05, 0.95, g.shape))
    c = CellCounts(g, n, k)
    t0 = time.perf_counter()
    gap = float(np.max(np.abs(fit_saturated(c).p_hat - fit_direct(c).p_hat)))
    dt = time.perf_counter() - t0
    ok = gap < 1e-8 and dt < 5
    record_acceptance(1, ok, f"max |p_spline - p_direct| = {gap:.2e}, {dt:.2f}s")
    assert ok


def _beta_posterior(n, k):
    # flat prior on the logit gives Beta(k, n - k) on the probability scale
    return stats.beta(k, n - k)


def _laplace_summaries(m):
    mode, sd = m.theta[0], np.sqrt(m.cov[0, 0])
    mean = integrate.quad(lambda e: expit(e) * stats.norm.pdf(e, mode, sd),
                          mode - 12 * sd, mode + 12 * sd)[0]
    return mean, expit(mode + sd * np.array([-1.959964, 1.959964]))


def test_c02_closed_form_oracles():
    g = DomainGrid(30, 30, 2001, 2001)
    t0 = time.perf_counter()
    worst_lap = worst_mh = 0.0
    details = []
    for n in (20, 200, 2000):
        k = int(0.4 * n)
        m = fit_complete(CellCounts(g, np.array([[n]]), np.array([[k]]))).model
        exact = _beta_posterior(n, k)
        mean, bounds = _laplace_summaries(m)
        err = max(abs(mean - exact.mean()), *np.abs(bounds - exact.ppf([0.025, 0.975])))
        draws = mh_sampler(m, 20_000, n).draws[:, 0]
        err_mh = abs(expit(draws).mean() - exact.mean())
        worst_lap, worst_mh = max(worst_lap, err), max(worst_mh, err_mh)
        details.append(f"n={n}: laplace {err:.4f}, sampler {err_mh:.4f}")
    dt = time.perf_counter() - t0
    ok = worst_lap < 0.01 and worst_mh < 0.01 and dt < 30
    record_acceptance(2, ok, "; ".join(details) + f"; {dt:.1f}s")
    assert ok


@pytest.mark.slow
def test_c03_shrinkage_ordering():
    inside = total = 0
    for seed in range(20):
        tr = hilda_transitions("smooth_gradient", seed)
        c = aggregate(tr, GRID)
        n, k = c.n.ravel(), c.k.ravel()
        pop = n > 0
        stab = logit((k + 0.5) / (n + 1.0))[pop]
        pooled = logit(c.total_k / c.total_n)
        x = fit_partial(c).logit_mean()[pop]
        lo, hi = np.minimum(stab, pooled), np.maximum(stab, pooled)
        inside += int(np.sum((x >= lo - 1e-6) & (x <= hi + 1e-6)))
        total += int(pop.sum())
    ok = inside == total
    record_acceptance(3, ok, f"{inside}/{total} populated cells between stabilised direct "
                             f"and pooled logits ({100 * inside / total:.2f}%)")
    assert ok


ESTIMATORS = ["direct", "complete", "partial", "tensor"]


@pytest.mark.slow
def test_c04_table1_pattern():
    t0 = time.perf_counter()
    cv_ok = ve_ok = within_ok = 0
    for seed in SEEDS:
        tr = hilda_transitions("smooth_gradient", seed)
        plan = make_folds(tr, "stratified_by_cell", 5, seed)
        r = cross_validate(tr, GRID, ESTIMATORS, plan, N_DRAWS, seed)
        cv = {k: v.total for k, v in r.items()}
        ve = {k: v.V_of_E for k, v in r.items()}
        wi = {k: v.total_within for k, v in r.items()}
        cv_ok += (cv["tensor"] > cv["partial"] > cv["complete"]
                  and cv["direct"] < min(cv["tensor"], cv["partial"], cv["complete"]))
        ve_ok += ve["direct"] > ve["tensor"] > ve["partial"] > ve["complete"] == 0
        within_ok += all(wi["direct"] >= wi[k] for k in ESTIMATORS)
    dt = time.perf_counter() - t0
    ok = cv_ok >= 8 and ve_ok >= 8 and within_ok == 10 and dt < 600
    record_acceptance(4, ok, f"CV ordering {cv_ok}/10, V_of_E ordering {ve_ok}/10, "
                             f"direct best within-sample {within_ok}/10, {dt:.0f}s")
    assert ok


@pytest.mark.slow
def test_c05_table2_pattern():
    t0 = time.perf_counter()
    tied = better = 0
    for seed in SEEDS:
        tr = hilda_transitions("smooth_gradient", seed)
        plan = make_folds(tr, "leave_year_out", 5, seed)
        r = cross_validate(tr, GRID, ["complete", "partial", "tensor"], plan, N_DRAWS, seed,
                           within=False)
        d = {x.model: x for x in compare(r, "complete")}
        tied += abs(d["partial"].delta) <= 2 * d["partial"].se
        better += d["tensor"].delta > 2 * d["tensor"].se
    dt = time.perf_counter() - t0
    ok = tied >= 8 and better >= 8 and dt < 600
    record_acceptance(5, ok, f"partial tied with complete {tied}/10, tensor beats complete "
                             f"by > 2 SE {better}/10, {dt:.0f}s")
    assert ok


@pytest.mark.slow
def test_c06_homogeneous_sanity():
    hits = 0
    for seed in SEEDS:
        tr = hilda_transitions("homogeneous", seed)
        plan = make_folds(tr, "stratified_by_cell", 5, seed)
        r = cross_validate(tr, GRID, ESTIMATORS, plan, N_DRAWS, seed, within=False)
        d = {x.model: x for x in compare(r)}
        hits += d["complete"].delta == 0 or abs(d["complete"].delta) <= 2 * d["complete"].se
    ok = hits >= 8
    record_acceptance(6, ok, f"complete pooling best or within 2 SE of the top in {hits}/10 seeds")
    assert ok


@pytest.mark.slow
def test_c07_equilibrium_and_effect_recovery():
    shift = equilibrium_shift(-0.33, -2.39)
    exact = round(shift, 2) == -7.24 and round(shift, 3) == -7.242
    hits = 0
    worst_avg = worst_rmse = 0.0
    for seed in SEEDS:
        spec = preset("has_effect_modified", seed, GRID)
        d = extract_diffs(generate(spec).panel, GRID)
        m = fit_mh(d, MhModelSpec("has_modified", "tensor"), GRID)
        es = effect_surface(CounterfactualQuery(m, YPrevPolicy.fixed(75), N_DRAWS, seed, GRID))
        planted = spec.effect.ravel()
        avg_err = abs(es.average - planted.mean())
        rmse = float(np.sqrt(np.mean((es.mean - planted) ** 2)))
        worst_avg, worst_rmse = max(worst_avg, avg_err), max(worst_rmse, rmse)
        hits += avg_err < 0.5 and rmse < 0.5
    ok = exact and hits >= 8
    record_acceptance(7, ok, f"shift {shift:.4f}; recovery {hits}/10 seeds (worst average "
                             f"error {worst_avg:.3f}, worst RMSE {worst_rmse:.3f})")
    assert ok


def test_c08_constancy_and_additivity():
    g = DomainGrid(25, 44, 2001, 2010)
    sim = generate(preset("has_effect_modified", 4, g, n_individuals=8000, n_topup=0))
    d = extract_diffs(sim.panel, g)
    main_fit = fit_mh(d, MhModelSpec("has_main", "tensor"), g)
    q = lambda m, y: CounterfactualQuery(m, YPrevPolicy.fixed(y), 500, 9, g)
    es = effect_surface(q(main_fit, 75))
    spread = float(es.mean.max() - es.mean.min())
    same = True
    for m in (main_fit, fit_mh(d, MhModelSpec("has_modified", "tensor"), g)):
        a, b = effect_surface(q(m, 75)), effect_surface(q(m, 50))
        same &= np.array_equal(a.mean, b.mean) and np.array_equal(a.q025, b.q025) \
            and np.array_equal(a.average_draws, b.average_draws)
    ok = spread < 1e-8 and same
    record_acceptance(8, ok, f"has_main surface spread {spread:.1e}; fixed(75) vs fixed(50) "
                             f"bit-identical: {same}")
    assert ok


def test_c09_apc_identity():
    rng = np.random.default_rng(9)
    coef = rng.normal(size=(10_000, 7))
    # scaled age and period
    a, p = rng.uniform(-1, 1, 10_000), rng.uniform(-1, 1, 10_000)
    ages, years = rng.uniform(25, 64, 10_000), rng.uniform(2001, 2016, 10_000)
    worst = worst_rel = 0.0
    for c, ai, pi, A, P in zip(coef, a, p, ages, years):
        orig = QuadraticApcCoeffs(*c)
        rep = apc_reparameterize(orig)
        worst = max(worst, abs(rep.evaluate(ai, pi) - orig.evaluate(ai, pi)))
        v = orig.evaluate(A, P)
        worst_rel = max(worst_rel, abs(rep.evaluate(A, P) - v) / max(1.0, abs(v)))
    ok = worst < 1e-10 and worst_rel < 1e-10
    record_acceptance(9, ok, f"max abs error {worst:.1e} on scaled points, max relative error "
                             f"{worst_rel:.1e} on raw age and year")
    assert ok


def _run_all(root: Path, panel: Path):
    base = ["--seed", "5"]
    cmds = {
        "simulate": ["simulate", "--preset", "has_effect_modified", "--n-individuals", "3000",
                     "--n-topup", "800"],
        "ingest": ["ingest", "--input", str(panel)],
        "fit": ["fit", "--input", str(panel), "--draws", "300",
                "--estimators", "direct,complete,weighted,kernel,partial,tensor"],
        "cv": ["cv", "--input", str(panel), "--draws", "200",
               "--estimators", "direct,complete,partial,tensor"],
        "gcomp": ["gcomp", "--input", str(panel), "--draws", "300"],
        "forecast": ["forecast", "--input", str(panel), "--draws", "300", "--estimators",
                     "tensor", "--horizon", "3"],
    }
    codes = {}
    for name, argv in cmds.items():
        codes[name] = main(argv + base + ["--out-dir", str(root / name)])
    return codes


def test_c10_cli_determinism(tmp_path):
    seed_panel = tmp_path / "seed"
    assert main(["simulate", "--seed", "5", "--preset", "has_effect_modified",
                 "--n-individuals", "3000", "--n-topup", "800", "--out-dir", str(seed_panel)]) == 0
    panel = seed_panel / "panel.csv"
    c1 = _run_all(tmp_path / "a", panel)
    c2 = _run_all(tmp_path / "b", panel)
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*")
                   if p.suffix in (".csv", ".svg"))
    diff = [str(f) for f in files
            if (tmp_path / "a" / f).read_bytes() != (tmp_path / "b" / f).read_bytes()]
    commands = {f.parts[0] for f in files}
    ok = all(v == 0 for v in {**c1, **c2}.values()) and not diff and len(commands) == 6
    record_acceptance(10, ok, f"{len(files)} CSV/SVG files from {len(commands)} commands, "
                              f"{len(diff)} differ")
    assert ok


def test_c11_fold_law():
    six = make_folds(SimpleNamespace(age=np.full(6, 30), year=np.full(6, 2005)), n_folds=5, seed=0)
    sizes = sorted(six.sizes().tolist(), reverse=True)
    rng = np.random.default_rng(11)
    n_strata = 10_000
    size = rng.integers(1, 30, n_strata)
    stratum = np.repeat(np.arange(n_strata), size)
    recs = SimpleNamespace(age=25 + stratum % 40, year=2001 + stratum // 40)
    plan = make_folds(recs, n_folds=5, seed=3)
    per = np.zeros((n_strata, 5), dtype=int)
    np.add.at(per, (stratum, plan.assignment), 1)
    spread = per.max(axis=1) - per.min(axis=1)
    ok = sizes == [2, 1, 1, 1, 1] and int(spread.max()) <= 1
    record_acceptance(11, ok, f"6-record stratum sizes {sizes}; max fold imbalance over "
                              f"{n_strata} strata {int(spread.max())}")
    assert ok
