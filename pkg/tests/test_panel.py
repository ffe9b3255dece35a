import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from panelift.dgp import DgpSpec, PanelDataset, sample_units, simulate_panel
from panelift.errors import (
    CollinearityError,
    DegenerateRegressorError,
    InsufficientDataError,
    ValidationError,
)
from panelift.links import Affine, FixedGridAffinity, LinkFunctions
from panelift.panel import fit_all, fit_unit, residualize

from .oracles import slope_by_grid_search


def _panel_from_arrays(unit_rows):
    """unit_rows: list of (unit_id, x array, y array [, v matrix])."""
    ids = np.asarray([r[0] for r in unit_rows])
    row_unit, t, xs, ys, vs = [], [], [], [], []
    has_v = any(len(r) > 3 for r in unit_rows)
    for g, row in enumerate(unit_rows):
        x = np.asarray(row[1], dtype=float)
        row_unit.extend([g] * len(x))
        t.extend(range(len(x)))
        xs.extend(x)
        ys.extend(np.asarray(row[2], dtype=float))
        if has_v:
            v = np.asarray(row[3], dtype=float) if len(row) > 3 else np.zeros((len(x), 1))
            vs.extend(v)
    return PanelDataset(
        unit_ids=ids,
        row_unit=np.asarray(row_unit),
        t=np.asarray(t),
        x=np.asarray(xs),
        y=np.asarray(ys),
        v=np.asarray(vs) if has_v else None,
    )


# ---------------------------------------------------------------------------
# residualize


def test_residualize_demeaning():
    x_res, y_res = residualize([1.0, 2.0, 3.0], [4.0, 5.0, 9.0])
    assert np.allclose(x_res, [-1.0, 0.0, 1.0])
    assert np.allclose(y_res, [-2.0, -1.0, 3.0])


def test_residualize_on_x_itself_zeroes_x(rng):
    x = rng.standard_normal(20)
    y = rng.standard_normal(20)
    x_res, _ = residualize(x, y, v=x[:, None])
    assert np.max(np.abs(x_res)) < 1e-10
    with pytest.raises(DegenerateRegressorError):
        fit_unit(x, y, v=x[:, None])


def test_residualize_orthogonality(rng):
    x = rng.standard_normal(20)
    y = rng.standard_normal(20)
    v = rng.standard_normal((20, 2))
    x_res, y_res = residualize(x, y, v)
    for col in range(2):
        assert abs(x_res @ v[:, col]) <= 1e-9 * np.abs(x_res).sum() * np.abs(v[:, col]).max()
        assert abs(y_res @ v[:, col]) <= 1e-9 * np.abs(y_res).sum() * np.abs(v[:, col]).max()
    assert abs(x_res.sum()) <= 1e-9 * np.abs(x_res).sum() + 1e-12
    assert abs(y_res.sum()) <= 1e-9 * np.abs(y_res).sum() + 1e-12


def test_residualize_collinear_columns_reported(rng):
    x = rng.standard_normal(15)
    y = rng.standard_normal(15)
    base = rng.standard_normal(15)
    v = np.column_stack([base, 2.0 * base])
    with pytest.raises(CollinearityError) as exc_info:
        residualize(x, y, v)
    assert len(exc_info.value.columns) >= 1


def test_residualize_needs_enough_rows(rng):
    with pytest.raises(InsufficientDataError):
        residualize(np.ones(3), np.ones(3), rng.standard_normal((3, 2)))


# ---------------------------------------------------------------------------
# fit_unit


def test_fit_unit_exact_line():
    est = fit_unit([0.0, 1.0, 2.0], [1.0, 3.0, 5.0], unit_id=7)
    assert est.beta_hat == pytest.approx(2.0, abs=1e-12)
    assert est.intercept == pytest.approx(1.0, abs=1e-12)
    assert est.r_squared == pytest.approx(1.0, abs=1e-12)
    assert est.stderr_beta == pytest.approx(0.0, abs=1e-12)
    assert est.n_obs == 3 and est.unit_id == 7


def test_fit_unit_constant_x_degenerate():
    with pytest.raises(DegenerateRegressorError):
        fit_unit([2.0, 2.0, 2.0, 2.0], [1.0, 2.0, 3.0, 4.0])


def test_fit_unit_insufficient_data():
    with pytest.raises(InsufficientDataError):
        fit_unit([0.0, 1.0], [0.0, 1.0])


def test_fit_unit_hand_checked_example():
    # normal equations by hand: Sxy=1.0, Sxx=5.0 -> slope 0.2, intercept 0.2
    est = fit_unit([0.0, 1.0, 2.0, 3.0], [0.0, 1.0, 0.0, 1.0])
    assert est.beta_hat == pytest.approx(0.2, abs=1e-12)
    assert est.intercept == pytest.approx(0.2, abs=1e-12)


def test_fit_unit_matches_grid_search_oracle(rng):
    for _ in range(10):
        n = int(rng.integers(5, 51))
        x = rng.standard_normal(n) * rng.uniform(0.5, 3.0)
        y = rng.standard_normal(n) + rng.uniform(-2, 2) * x
        est = fit_unit(x, y)
        oracle = slope_by_grid_search(x, y, resolution=1e-6)
        assert abs(est.beta_hat - oracle) <= 1e-6


def test_fit_unit_residual_orthogonality(rng):
    x = rng.standard_normal(40)
    y = 1.5 * x + rng.standard_normal(40)
    est = fit_unit(x, y)
    resid = y - est.intercept - est.beta_hat * x
    scale = float(np.abs(y) @ np.abs(y))
    assert abs(float(resid @ x)) <= 1e-9 * max(scale, 1.0)
    assert abs(float(resid.sum())) <= 1e-9 * max(scale, 1.0)


@settings(max_examples=50, deadline=None, derandomize=True)
@given(
    shift=st.floats(-1e3, 1e3, allow_nan=False),
    seed=st.integers(0, 2**16),
)
def test_fit_unit_shift_invariance(shift, seed):
    r = np.random.default_rng(seed)
    x = r.standard_normal(12)
    y = r.standard_normal(12)
    base = fit_unit(x, y)
    shifted_x = fit_unit(x + shift, y)
    shifted_y = fit_unit(x, y + shift)
    assert shifted_x.beta_hat == pytest.approx(base.beta_hat, rel=1e-9, abs=1e-9)
    assert shifted_y.beta_hat == pytest.approx(base.beta_hat, rel=1e-9, abs=1e-9)


@settings(max_examples=50, deadline=None, derandomize=True)
@given(
    k=st.floats(0.01, 100.0, allow_nan=False),
    seed=st.integers(0, 2**16),
)
def test_fit_unit_scale_equivariance(k, seed):
    r = np.random.default_rng(seed)
    x = r.standard_normal(12)
    y = r.standard_normal(12)
    base = fit_unit(x, y)
    assert fit_unit(x, k * y).beta_hat == pytest.approx(k * base.beta_hat, rel=1e-9)
    assert fit_unit(k * x, y).beta_hat == pytest.approx(base.beta_hat / k, rel=1e-9)


# ---------------------------------------------------------------------------
# fit_all


def test_fit_all_pass_through_counts(rng):
    rows = [(i, rng.standard_normal(8), rng.standard_normal(8)) for i in range(3)]
    estimates, skips = fit_all(_panel_from_arrays(rows), min_obs=3)
    assert len(estimates) == 3 and len(skips) == 0
    assert [e.unit_id for e in estimates] == [0, 1, 2]


def test_fit_all_routes_constant_x_to_skips(rng):
    rows = [
        (0, rng.standard_normal(8), rng.standard_normal(8)),
        (1, np.full(8, 3.0), rng.standard_normal(8)),
        (2, rng.standard_normal(8), rng.standard_normal(8)),
    ]
    estimates, skips = fit_all(_panel_from_arrays(rows), min_obs=3)
    assert [e.unit_id for e in estimates] == [0, 2]
    assert len(skips) == 1 and skips[0].unit_id == 1
    assert "degenerate_regressor" in skips[0].reason


def test_fit_all_min_obs_routing(rng):
    rows = [
        (0, rng.standard_normal(4), rng.standard_normal(4)),
        (1, rng.standard_normal(10), rng.standard_normal(10)),
    ]
    estimates, skips = fit_all(_panel_from_arrays(rows), min_obs=5)
    assert [e.unit_id for e in estimates] == [1]
    assert skips[0].unit_id == 0 and "insufficient_obs" in skips[0].reason


def test_fit_all_recovers_noiseless_betas_exactly():
    links = LinkFunctions(
        baseline_supply=Affine(1.0, 0.0),
        baseline_demand=Affine(0.5, 0.0),
        effect=Affine(0.0, 1.0),
        supply_load=Affine(1.0, 0.0),
        demand_load=Affine(0.0, 0.0),
    )
    spec = DgpSpec(
        n_units=3,
        links=links,
        affinity_dist=FixedGridAffinity((0.5, 1.0, 2.0)),
        t_periods=6,
        var_eps=0.0,
        var_eta=0.0,
        var_u=1.0,  # x varies through the shared shock only
        seed=5,
    )
    panel = simulate_panel(sample_units(spec), spec)
    estimates, skips = fit_all(panel, min_obs=3)
    assert not skips
    assert [e.beta_hat for e in estimates] == pytest.approx([0.5, 1.0, 2.0], abs=1e-10)
    assert [e.r_squared for e in estimates] == pytest.approx([1.0, 1.0, 1.0], abs=1e-12)


def test_fit_all_threads_bit_identical(rng):
    rows = [(i, rng.standard_normal(30), rng.standard_normal(30)) for i in range(40)]
    panel = _panel_from_arrays(rows)
    e1, s1 = fit_all(panel, min_obs=3, threads=1)
    e4, s4 = fit_all(panel, min_obs=3, threads=4)
    assert e1 == e4 and s1 == s4


def test_fit_all_with_observed_covariates_threads_identical(rng):
    rows = []
    for i in range(12):
        x = rng.standard_normal(25)
        v = rng.standard_normal((25, 2))
        y = 2.0 * x + v @ np.array([1.0, -0.5]) + rng.standard_normal(25)
        rows.append((i, x, y, v))
    panel = _panel_from_arrays(rows)
    e1, _ = fit_all(panel, min_obs=3, threads=1)
    e4, _ = fit_all(panel, min_obs=3, threads=4)
    assert e1 == e4
    # residualization removes the covariate channel: slope close to 2
    assert np.allclose([e.beta_hat for e in e1], 2.0, atol=1.5)


def test_fit_all_collinear_covariates_skip(rng):
    x = rng.standard_normal(20)
    base = rng.standard_normal(20)
    rows = [
        (0, x, rng.standard_normal(20), rng.standard_normal((20, 2))),
        (1, x, rng.standard_normal(20), np.column_stack([base, base])),
    ]
    estimates, skips = fit_all(_panel_from_arrays(rows), min_obs=3)
    assert [e.unit_id for e in estimates] == [0]
    assert skips[0].unit_id == 1 and "collinear" in skips[0].reason


def test_fit_all_empty_dataset_rejected():
    with pytest.raises(ValidationError):
        PanelDataset(
            unit_ids=np.array([], dtype=np.int64),
            row_unit=np.array([], dtype=np.int64),
            t=np.array([], dtype=np.int64),
            x=np.array([]),
            y=np.array([]),
        )


def test_panel_dataset_rejects_nonincreasing_periods():
    with pytest.raises(ValidationError, match="strictly increasing"):
        PanelDataset(
            unit_ids=np.array([0]),
            row_unit=np.array([0, 0, 0]),
            t=np.array([0, 2, 2]),
            x=np.array([1.0, 2.0, 3.0]),
            y=np.array([1.0, 2.0, 3.0]),
        )
