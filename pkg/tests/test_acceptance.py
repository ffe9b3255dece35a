"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s`. Tolerances are stated
inline next to each check; nothing is deferred to later calibration.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest
import yaml

import panelift as pl
from panelift import tables
from panelift.cli import main
from panelift.dgp import DgpSpec, UnitParams
from panelift.learner import LabeledExample
from panelift.links import LinkFunctions

from .oracles import (
    auc_pairwise,
    isotonic_by_enumeration,
    kendall_tau_pairwise,
    slope_by_grid_search,
)

pytestmark = pytest.mark.acceptance


def _report(num, name, ok, detail):
    print(f"\n[acceptance {num}] {'PASS' if ok else 'FAIL'} {name}: {detail}")
    assert ok, f"criterion {num} ({name}): {detail}"


# ---------------------------------------------------------------------------
# shared expensive fixtures


def _train_on_regime(spec_fn, seed):
    spec = spec_fn(n_units=50_000, seed=seed)
    units = pl.sample_units(spec)
    panel = pl.simulate_panel(units, spec)
    estimates, _ = pl.fit_all(panel)
    cfg = pl.TrainConfig(seed=seed)
    examples = pl.make_examples(estimates, panel.unit_ids, panel.covariates, cfg.quantile)
    return pl.train(examples, cfg)


@pytest.fixture(scope="module")
def preserving_model_50k():
    return _train_on_regime(pl.rank_preserving_spec, seed=210)


@pytest.fixture(scope="module")
def constant_model_50k():
    return _train_on_regime(pl.constant_effect_spec, seed=310)


# ---------------------------------------------------------------------------
# 1. bias law


def test_criterion_1_bias_law():
    t0 = time.time()
    r = np.random.default_rng(1001)
    n_units, T, reps = 200, 10_000, 200
    units = [
        UnitParams(
            unit_id=i,
            affinity=0.0,
            theta=r.uniform(-1.0, 1.0),
            mu=r.uniform(-1.0, 1.0),
            beta=r.uniform(-2.0, 2.0),
            psi=r.uniform(0.3, 2.0),
            gamma=r.uniform(-2.0, 2.0),
        )
        for i in range(n_units)
    ]
    base = DgpSpec(n_units=n_units, links=LinkFunctions.constant(), t_periods=T, seed=0)
    target = np.array([u.beta + pl.theoretical_bias(u, base) for u in units])

    sums = np.zeros(n_units)
    sums_sq = np.zeros(n_units)
    for rep in range(reps):
        spec = DgpSpec(
            n_units=n_units, links=LinkFunctions.constant(), t_periods=T, seed=50_000 + rep
        )
        panel = pl.simulate_panel(units, spec)
        estimates, skips = pl.fit_all(panel, min_obs=3)
        assert not skips
        beta_hat = np.fromiter((e.beta_hat for e in estimates), dtype=float, count=n_units)
        sums += beta_hat
        sums_sq += beta_hat * beta_hat

    mean = sums / reps
    var = (sums_sq - reps * mean * mean) / (reps - 1)
    se_mean = np.sqrt(np.maximum(var, 0.0) / reps)
    within = np.abs(mean - target) <= 3.0 * se_mean
    frac = float(np.mean(within))
    elapsed = time.time() - t0
    _report(
        1,
        "bias law",
        frac >= 0.95 and elapsed <= 60.0,
        f"{frac:.1%} of units within 3 SE (>=95% required), {elapsed:.1f}s (<=60s)",
    )


# ---------------------------------------------------------------------------
# 2. rank preservation vs violation


def test_criterion_2_rank_preservation():
    spec = pl.rank_preserving_spec(n_units=500, t_periods=20_000, seed=77)
    units = pl.sample_units(spec)
    panel = pl.simulate_panel(units, spec)
    estimates, _ = pl.fit_all(panel, min_obs=3)
    tau_good = pl.kendall_tau(
        [u.beta for u in units], [e.beta_hat for e in estimates]
    )

    vspec = pl.rank_inverting_spec(n_units=500, t_periods=20_000, seed=78)
    vunits = pl.sample_units(vspec)
    vpanel = pl.simulate_panel(vunits, vspec)
    vestimates, _ = pl.fit_all(vpanel, min_obs=3)
    tau_bad = pl.kendall_tau(
        [u.beta for u in vunits], [e.beta_hat for e in vestimates]
    )
    # the violating regime's bias slope is <= -1 on every adjacent pair
    assert pl.necessary_condition_check(vunits, vspec) == len(vunits) - 1
    _report(
        2,
        "rank preservation",
        tau_good >= 0.95 and tau_bad <= 0.5,
        f"preserving tau={tau_good:.4f} (>=0.95), inverting tau={tau_bad:.4f} (<=0.5)",
    )


# ---------------------------------------------------------------------------
# 3. stratified-effect shape on the full pipeline


def test_criterion_3_stratified_shape(tmp_path):
    t0 = time.time()
    doc = {
        "seed": 3003,
        "out_dir": str(tmp_path / "full"),
        "dgp": {"preset": "rank_preserving", "n_units": 100_000, "t_periods": 60},
        "experiment": {"treated_fraction": 0.5, "window": 7},
        "analysis": {"n_strata": 10, "budget_k": 1000},
    }
    cfg_path = tmp_path / "full.yaml"
    cfg_path.write_text(yaml.safe_dump(doc))
    rc = main(["pipeline", "--config", str(cfg_path)])
    assert rc == 0
    strata = tables.read_strata(Path(doc["out_dir"]) / "strata.csv")
    assert len(strata) == 10 and all(s.has_both_arms for s in strata)
    ates = np.array([s.ate for s in strata])
    rho = pl.spearman_rho(np.arange(10, dtype=float), ates)
    top, bottom = strata[-1], strata[0]
    gap = top.ate - bottom.ate
    combined_se = math.sqrt(top.stderr**2 + bottom.stderr**2)
    elapsed = time.time() - t0
    _report(
        3,
        "stratified shape",
        rho >= 0.8 and gap >= 3.0 * combined_se and elapsed <= 300.0,
        f"spearman={rho:.3f} (>=0.8), top-bottom={gap:.5f} vs 3*se={3 * combined_se:.5f}, "
        f"{elapsed:.0f}s (<=300s)",
    )


# ---------------------------------------------------------------------------
# 4. interaction significance: power and size


def _interaction_pvalues(model, spec_fn, seeds):
    out = []
    for seed in seeds:
        spec = spec_fn(n_units=50_000, seed=seed)
        units = pl.sample_units(spec)
        exp = pl.simulate_experiment(units, spec, treated_fraction=0.05)
        scores = dict(
            zip(exp.unit_ids.tolist(), pl.predict_score(model, exp.covariates))
        )
        fit = pl.interaction_regression(exp, scores)
        term = fit["treatment_x_score"]
        out.append((term.p_value, term.estimate))
    return out

def test_criterion_4_interaction_power_and_size(preserving_model_50k, constant_model_50k):
    model, _log = preserving_model_50k
    power_runs = _interaction_pvalues(model, pl.rank_preserving_spec, range(4000, 4020))
    n_power = sum(1 for p, est in power_runs if p < 0.01 and est > 0)

    null_model, _nlog = constant_model_50k
    size_runs = _interaction_pvalues(null_model, pl.constant_effect_spec, range(5000, 5020))
    n_size = sum(1 for p, _ in size_runs if p < 0.01)
    _report(
        4,
        "interaction significance",
        n_power >= 18 and n_size <= 1,
        f"power {n_power}/20 positive with p<.01 (>=18), size {n_size}/20 at p<.01 (<=1)",
    )


# ---------------------------------------------------------------------------
# 5. learner quality


def test_criterion_5_learner_quality(preserving_model_50k):
    _model, log = preserving_model_50k
    holdout = log.holdout_auc

    rng = np.random.default_rng(55)
    X = rng.standard_normal((400, 3))
    # separable with a margin: no mass near the decision boundary, so the
    # learned midpoint threshold separates held-out points too
    X[:, 0] = np.where(rng.random(400) < 0.5, 1.0, -1.0) * rng.uniform(0.5, 1.5, 400)
    y = (X[:, 0] > 0.0).astype(int)
    cfg = pl.TrainConfig(n_trees=1, max_depth=1, min_leaf=1, seed=5)
    model, sep_log = pl.train(
        [LabeledExample(i, X[i], int(y[i])) for i in range(len(y))], cfg
    )
    sep_auc = pl.auc(pl.predict_score(model, X), y)
    _report(
        5,
        "learner quality",
        holdout > 0.65 and sep_auc == 1.0 and sep_log.train_auc == 1.0,
        f"holdout AUC={holdout:.3f} (>0.65), separable fixture AUC={sep_auc} (==1.0)",
    )


# ---------------------------------------------------------------------------
# 6. regression oracle equivalence


def test_criterion_6_ols_oracle():
    rng = np.random.default_rng(66)
    worst_gap = 0.0
    worst_orth = 0.0
    for _ in range(100):
        n = int(rng.integers(5, 51))
        x = rng.uniform(0.2, 4.0) * rng.standard_normal(n) + rng.uniform(-3, 3)
        y = rng.uniform(-3, 3) * x + rng.uniform(0.1, 2.0) * rng.standard_normal(n)
        est = pl.fit_unit(x, y)
        oracle = slope_by_grid_search(x, y, resolution=1e-6)
        worst_gap = max(worst_gap, abs(est.beta_hat - oracle))
        resid = y - est.intercept - est.beta_hat * x
        scale = max(float(np.abs(y).sum()), 1.0)
        worst_orth = max(
            worst_orth,
            abs(float(resid @ x)) / scale,
            abs(float(resid.sum())) / scale,
        )
    _report(
        6,
        "regression oracle",
        worst_gap <= 1e-6 and worst_orth <= 1e-9,
        f"max |slope - grid argmin|={worst_gap:.2e} (<=1e-6), "
        f"max relative orthogonality residual={worst_orth:.2e} (<=1e-9)",
    )


# ---------------------------------------------------------------------------
# 7. exact small-instance oracles


def test_criterion_7_exact_small_oracles():
    rng = np.random.default_rng(777)
    tau_exact = auc_exact = pav_exact = True

    for n in (2, 5, 20, 100, 200):
        a = rng.integers(0, max(2, n // 3), n).astype(float)
        b = rng.integers(0, max(2, n // 3), n).astype(float)
        if len(np.unique(a)) < 2 or len(np.unique(b)) < 2:
            continue
        tau_exact &= pl.kendall_tau(a, b) == kendall_tau_pairwise(a, b)
        c, d = rng.standard_normal(n), rng.standard_normal(n)
        tau_exact &= pl.kendall_tau(c, d) == kendall_tau_pairwise(c, d)

    for n in (2, 10, 50, 500):
        scores = rng.integers(0, max(2, n // 4), n).astype(float)
        labels = rng.integers(0, 2, n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        auc_exact &= pl.auc(scores, labels) == auc_pairwise(scores, labels)

    from panelift.expanalysis import pav

    for n in (1, 2, 4, 8):
        for _ in range(5):
            vals = rng.integers(-5, 6, n).astype(float)
            got = pav(vals, np.ones(n))
            want = isotonic_by_enumeration(vals, np.ones(n))
            pav_exact &= bool(np.array_equal(got, want))
            wvals = rng.standard_normal(n)
            weights = rng.uniform(0.25, 4.0, n)
            got_w = pav(wvals, weights)
            want_w = isotonic_by_enumeration(wvals, weights)
            pav_exact &= bool(np.allclose(got_w, want_w, rtol=1e-12, atol=1e-12))

    _report(
        7,
        "exact small oracles",
        tau_exact and auc_exact and pav_exact,
        f"tau exact={tau_exact}, auc exact={auc_exact}, pav exact={pav_exact}",
    )


# ---------------------------------------------------------------------------
# 8. pipeline determinism


def test_criterion_8_pipeline_determinism(tmp_path):
    doc = {
        "seed": 808,
        "out_dir": str(tmp_path / "det"),
        "dgp": {"preset": "rank_preserving", "n_units": 1000, "t_periods": 60},
        "experiment": {"treated_fraction": 0.5, "window": 7},
        "analysis": {"n_strata": 10, "budget_k": 100},
    }
    cfg_path = tmp_path / "det.yaml"
    cfg_path.write_text(yaml.safe_dump(doc))
    out = Path(doc["out_dir"])

    def run(threads):
        rc = main(["pipeline", "--config", str(cfg_path), "--threads", str(threads)])
        assert rc == 0
        return {p.name: p.read_bytes() for p in sorted(out.iterdir())}

    first = run(1)
    second = run(1)
    threaded = run(8)
    same_rerun = first == second
    same_threads = first == threaded
    _report(
        8,
        "pipeline determinism",
        same_rerun and same_threads,
        f"rerun identical={same_rerun}, threads 1 vs 8 identical={same_threads} "
        f"({len(first)} artifacts)",
    )


# ---------------------------------------------------------------------------
# 9. invariance suite


def test_criterion_9_invariance_suite(rng):
    ok = True
    details = []

    # labels invariant under strictly increasing transforms
    from panelift.panel import UnitEffectEstimate

    vals = rng.standard_normal(200)
    ests = [
        UnitEffectEstimate(i, float(v), 0.0, 0.1, 10, 0.5) for i, v in enumerate(vals)
    ]
    base_labels = pl.make_labels(ests, 0.2)
    for f in (lambda v: 3.0 * v + 1.0, np.arctan, lambda v: v**3):
        moved = [
            UnitEffectEstimate(i, float(f(v)), 0.0, 0.1, 10, 0.5)
            for i, v in enumerate(vals)
        ]
        ok &= bool(np.array_equal(base_labels, pl.make_labels(moved, 0.2)))
    details.append(f"labels invariant={ok}")

    # AUC invariant under strictly increasing transforms
    scores = rng.standard_normal(300)
    labels = rng.integers(0, 2, 300)
    labels[0], labels[1] = 0, 1
    base_auc = pl.auc(scores, labels)
    auc_ok = all(
        pl.auc(f(scores), labels) == pytest.approx(base_auc, abs=1e-12)
        for f in (lambda v: 2.0 * v - 5.0, np.tanh)
    )
    ok &= auc_ok
    details.append(f"auc invariant={auc_ok}")

    # select_targets invariant under strictly increasing transforms
    score_map = {int(i): float(v) for i, v in enumerate(rng.standard_normal(100))}
    base_sel = pl.select_targets(score_map, 17)
    sel_ok = all(
        pl.select_targets({i: f(v) for i, v in score_map.items()}, 17) == base_sel
        for f in (lambda v: 0.5 * v + 2.0, math.atan)
    )
    ok &= sel_ok
    details.append(f"targets invariant={sel_ok}")

    # interaction t-statistic invariant under affine-positive transforms
    n = 400
    treated = rng.random(n) < 0.3
    sc = rng.uniform(0, 1, n)
    y_pre = rng.uniform(10, 30, n)
    y_post = np.maximum(y_pre + treated * (1 + sc) + rng.standard_normal(n), 0)
    exp = pl.ExperimentDataset(
        unit_ids=np.arange(n),
        treated=treated,
        y_pre=y_pre,
        y_post=y_post,
    )
    base_t = pl.interaction_regression(exp, dict(zip(range(n), sc.tolist())))[
        "treatment_x_score"
    ].t_stat
    t_ok = True
    for a, b in ((2.0, 0.0), (0.25, 3.0), (10.0, -1.0)):
        moved_t = pl.interaction_regression(
            exp, dict(zip(range(n), (a * sc + b).tolist()))
        )["treatment_x_score"].t_stat
        t_ok &= moved_t == pytest.approx(base_t, rel=1e-8)
    ok &= t_ok
    details.append(f"interaction t invariant={t_ok}")

    _report(9, "invariance suite", bool(ok), "; ".join(details))
