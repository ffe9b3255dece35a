"""Per-unit time-series regressions at scale.

Each unit gets its own simple regression of y on x (with intercept),
optionally after residualizing both on observed covariates. The slope is
the unit's observationally estimated effect. Fits use two-pass centered
moments (compensated summation in the compiled backend); residualization
uses a QR factorization.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dgp import PanelDataset
from .errors import (
    CollinearityError,
    DegenerateRegressorError,
    InsufficientDataError,
    ValidationError,
)

#: Var(x) at or below VAR_TOL * (1 + mean(x)^2) counts as degenerate.
VAR_TOL = 1e-12

DEFAULT_MIN_OBS = 30


@dataclass(frozen=True)
class UnitEffectEstimate:
    """One unit's estimated effect with fit diagnostics."""

    unit_id: object
    beta_hat: float
    intercept: float
    stderr_beta: float
    n_obs: int
    r_squared: float

    def __post_init__(self):
        if self.n_obs < 3:
            raise ValidationError(f"unit {self.unit_id}: n_obs must be >= 3")
        if not (math.isfinite(self.beta_hat) and math.isfinite(self.stderr_beta)):
            raise ValidationError(f"unit {self.unit_id}: non-finite estimate")


@dataclass(frozen=True)
class SkipRecord:
    """Why a unit was left out of the estimates."""

    unit_id: object
    reason: str


def residualize(x, y, v=None):
    """Residuals of x and y from least-squares fits on (intercept, v).

    With no covariates this is plain demeaning. Raises CollinearityError
    when the covariate design is rank deficient, naming the dependent
    columns rather than silently dropping them.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("x and y must be 1-d arrays of equal length")
    n = len(x)
    if v is not None:
        v = np.asarray(v, dtype=np.float64)
        if v.ndim == 1:
            v = v[:, None]
    if v is None or v.shape[1] == 0:
        return x - x.mean(), y - y.mean()
    if v.shape[0] != n:
        raise ValidationError("v must have one row per observation")
    d = v.shape[1]
    if n < d + 2:
        raise InsufficientDataError(f"need at least {d + 2} rows to residualize on {d} columns")

    design = np.column_stack([np.ones(n), v])
    q, r = np.linalg.qr(design)
    diag = np.abs(np.diag(r))
    scale = np.max(diag) if diag.size else 0.0
    bad = np.flatnonzero(diag <= max(scale, 1.0) * n * np.finfo(np.float64).eps * 16)
    if bad.size:
        cols = [int(j) - 1 for j in bad if j > 0]  # report v columns, not the constant
        raise CollinearityError(
            f"covariate design is rank deficient in columns {cols}", columns=cols
        )
    x_res = x - q @ (q.T @ x)
    y_res = y - q @ (q.T @ y)
    return x_res, y_res


def _estimate_from_moments(unit_id, n, mean_x, mean_y, sxx, sxy, syy):
    """Slope, intercept and diagnostics from centered moments.

    Shared by fit_unit and fit_all so single and batch fits agree exactly.
    """
    if n < 3:
        raise InsufficientDataError(f"unit {unit_id}: need >= 3 observations, got {n}")
    var_x = sxx / (n - 1)
    if var_x <= VAR_TOL * (1.0 + mean_x * mean_x):
        raise DegenerateRegressorError(
            f"unit {unit_id}: x is numerically constant (sample variance {var_x:.3e})"
        )
    beta = sxy / sxx
    intercept = mean_y - beta * mean_x
    ssr = syy - beta * sxy
    ssr = max(ssr, 0.0)  # guard tiny negative round-off
    stderr = math.sqrt(ssr / (n - 2) / sxx)
    r2 = 0.0 if syy <= 0.0 else max(0.0, min(1.0, 1.0 - ssr / syy))
    return UnitEffectEstimate(
        unit_id=unit_id,
        beta_hat=float(beta),
        intercept=float(intercept),
        stderr_beta=float(stderr),
        n_obs=int(n),
        r_squared=float(r2),
    )


def fit_unit(x, y, unit_id=None, v=None):
    """Simple regression of y on x for one unit.

    Residualizes on ``v`` first when given. Raises
    DegenerateRegressorError when x has (numerically) zero variance and
    InsufficientDataError below 3 usable rows.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("x and y must be 1-d arrays of equal length")
    if len(x) < 3:
        raise InsufficientDataError(f"unit {unit_id}: need >= 3 observations, got {len(x)}")
    if v is not None:
        x, y = residualize(x, y, v)
    offsets = np.array([0, len(x)], dtype=np.int64)
    cnt, mx, my, sxx, sxy, syy = kernels.ols_moments(offsets, x, y)
    return _estimate_from_moments(unit_id, int(cnt[0]), mx[0], my[0], sxx[0], sxy[0], syy[0])


def _fit_block(dataset, offsets, lo, hi, min_obs):
    """Fit units [lo, hi); returns (position, estimate-or-None, reason-or-None)."""
    out = []
    has_v = dataset.v is not None
    for g in range(lo, hi):
        uid = dataset.unit_ids[g]
        st, en = offsets[g], offsets[g + 1]
        n = en - st
        need = max(min_obs, 3)
        if has_v:
            need = max(need, dataset.v.shape[1] + 2)
        if n < need:
            out.append((g, None, f"insufficient_obs: {n} < {need}"))
            continue
        x = dataset.x[st:en]
        y = dataset.y[st:en]
        try:
            if has_v:
                x, y = residualize(x, y, dataset.v[st:en])
            seg = np.array([0, n], dtype=np.int64)
            cnt, mx, my, sxx, sxy, syy = kernels.ols_moments(seg, x, y)
            est = _estimate_from_moments(uid, int(cnt[0]), mx[0], my[0], sxx[0], sxy[0], syy[0])
            out.append((g, est, None))
        except DegenerateRegressorError:
            out.append((g, None, "degenerate_regressor: x numerically constant"))
        except CollinearityError as exc:
            out.append((g, None, f"collinear_covariates: columns {list(exc.columns)}"))
    return out


def fit_all(dataset: PanelDataset, min_obs: int = DEFAULT_MIN_OBS, threads: int = 1):
    """Fit every unit in the panel.

    Returns ``(estimates, skips)``: one UnitEffectEstimate per unit that
    passes the preconditions, in dataset unit order, plus a SkipRecord per
    excluded unit. Output is identical for any thread count.
    """
    if dataset.n_rows == 0:
        raise ValidationError("dataset is empty")
    offsets = dataset.unit_slices()
    n_units = dataset.n_units

    if dataset.v is None and threads <= 1:
        # vectorized fast path over all units at once
        counts, mx, my, sxx, sxy, syy = kernels.ols_moments(offsets, dataset.x, dataset.y)
        estimates, skips = [], []
        for g in range(n_units):
            uid = dataset.unit_ids[g]
            n = int(counts[g])
            need = max(min_obs, 3)
            if n < need:
                skips.append(SkipRecord(uid, f"insufficient_obs: {n} < {need}"))
                continue
            try:
                estimates.append(
                    _estimate_from_moments(uid, n, mx[g], my[g], sxx[g], sxy[g], syy[g])
                )
            except DegenerateRegressorError:
                skips.append(SkipRecord(uid, "degenerate_regressor: x numerically constant"))
        return estimates, skips

    blocks = _split_blocks(n_units, threads)
    if threads <= 1:
        results = [_fit_block(dataset, offsets, lo, hi, min_obs) for lo, hi in blocks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(_fit_block, dataset, offsets, lo, hi, min_obs) for lo, hi in blocks
            ]
            results = [f.result() for f in futures]

    estimates, skips = [], []
    for block in results:
        for g, est, reason in block:
            if est is not None:
                estimates.append(est)
            else:
                skips.append(SkipRecord(dataset.unit_ids[g], reason))
    return estimates, skips


def _split_blocks(n: int, threads: int):
    k = max(1, min(threads, n))
    bounds = np.linspace(0, n, k + 1).astype(int)
    return [(int(bounds[i]), int(bounds[i + 1])) for i in range(k) if bounds[i + 1] > bounds[i]]
