"""Validating and calibrating observational scores against an experiment.

Outcomes are log-transformed and pre-period-differenced for power; the
experimental population is stratified by score quantile to expose the
effect gradient; an interaction regression tests it formally; weighted
isotonic regression of stratum effects yields the monotone map from
scores to calibrated effects; and budget-constrained targeting picks the
top-scored units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc, erfc

from .dgp import ExperimentDataset
from .errors import (
    CollinearityError,
    IdMismatchError,
    InsufficientStrataError,
    ValidationError,
)

#: above this many residual degrees of freedom, a normal approximation
#: replaces the exact t-distribution p-value
T_DIST_DOF_LIMIT = 200

REGRESSION_TERMS = ("intercept", "treatment", "score", "treatment_x_score", "y_pre")


def preprocess_outcome(y_post, y_pre):
    """log(1 + y_post) - log(1 + y_pre), elementwise.

    The +1 keeps the transform total at zero (activity-style outcomes
    include zeros); callers with strictly positive outcomes can shift by
    -1 to obtain a plain log ratio.
    """
    y_post = np.asarray(y_post, dtype=np.float64)
    y_pre = np.asarray(y_pre, dtype=np.float64)
    if np.any(y_post < 0) or np.any(y_pre < 0):
        raise ValidationError("outcomes must be nonnegative")
    return np.log1p(y_post) - np.log1p(y_pre)


@dataclass(frozen=True)
class StratumReport:
    """Treated-vs-control contrast within one score stratum."""

    stratum_index: int
    score_low: float
    score_high: float
    n_treated: int
    n_control: int
    ate: float
    stderr: float

    @property
    def has_both_arms(self) -> bool:
        return self.n_treated >= 1 and self.n_control >= 1

    def to_dict(self) -> dict:
        return {
            "stratum_index": self.stratum_index,
            "score_low": self.score_low,
            "score_high": self.score_high,
            "n_treated": self.n_treated,
            "n_control": self.n_control,
            "ate": self.ate,
            "stderr": self.stderr,
        }


@dataclass(frozen=True)
class CoefficientEstimate:
    name: str
    estimate: float
    stderr: float
    t_stat: float
    p_value: float

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "t_stat": self.t_stat,
            "p_value": self.p_value,
        }


@dataclass(frozen=True)
class RegressionFit:
    """OLS fit of the five-term interaction regression."""

    coefficients: tuple[CoefficientEstimate, ...]
    n: int
    dof: int

    def __getitem__(self, name: str) -> CoefficientEstimate:
        for c in self.coefficients:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "coefficients": [c.to_dict() for c in self.coefficients],
            "n": self.n,
            "dof": self.dof,
        }


@dataclass(frozen=True)
class MonotoneMap:
    """Nondecreasing step map from score to calibrated effect."""

    breakpoints: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)
        if len(bp) != len(vals) or not bp:
            raise ValidationError("breakpoints and values must be nonempty and aligned")
        if any(b2 <= b1 for b1, b2 in zip(bp, bp[1:])):
            raise ValidationError("breakpoints must be strictly ascending")
        if any(v2 < v1 for v1, v2 in zip(vals, vals[1:])):
            raise ValidationError("values must be nondecreasing")

    def __call__(self, score, interpolate: bool = False):
        """Evaluate at score(s): piecewise-constant steps at the
        breakpoints, or linear interpolation between them; constant
        beyond the ends either way."""
        s = np.asarray(score, dtype=np.float64)
        bp = np.asarray(self.breakpoints)
        vals = np.asarray(self.values)
        if interpolate:
            out = np.interp(s, bp, vals)
        else:
            idx = np.clip(np.searchsorted(bp, s, side="right") - 1, 0, len(bp) - 1)
            out = vals[idx]
        return float(out) if np.isscalar(score) else out

    def to_dict(self) -> dict:
        return {"breakpoints": list(self.breakpoints), "values": list(self.values)}


def _score_vector(exp: ExperimentDataset, scores) -> np.ndarray:
    ids = exp.unit_ids.tolist()
    missing = [uid for uid in ids if uid not in scores]
    if missing:
        raise IdMismatchError(
            f"{len(missing)} experimental units have no score (first: {missing[:5]})",
            missing_ids=missing,
        )
    return np.asarray([scores[uid] for uid in ids], dtype=np.float64)


def stratified_effects(exp: ExperimentDataset, scores, n_strata: int) -> list[StratumReport]:
    """Per-stratum treated-vs-control contrasts on preprocessed outcomes.

    Units are ranked by (score, unit id) and cut into n_strata
    quantile bins with sizes within one of each other (lower strata get
    the extra units). Strata missing an arm are reported with NaN
    ate/stderr rather than dropped. ``scores`` maps unit id -> score.
    """
    if n_strata < 2:
        raise ValidationError("n_strata must be >= 2")
    n = exp.n_units
    if n_strata > n:
        raise ValidationError(f"n_strata ({n_strata}) exceeds number of units ({n})")
    s = _score_vector(exp, scores)
    dy = preprocess_outcome(exp.y_post, exp.y_pre)

    order = np.lexsort((exp.unit_ids, s))
    base, extra = divmod(n, n_strata)
    bounds = [g * base + min(g, extra) for g in range(n_strata + 1)]
    reports = []
    for g in range(n_strata):
        rows = order[bounds[g] : bounds[g + 1]]
        treated = exp.treated[rows]
        n_t = int(treated.sum())
        n_c = len(rows) - n_t
        if n_t >= 1 and n_c >= 1:
            d_t, d_c = dy[rows][treated], dy[rows][~treated]
            ate = float(d_t.mean() - d_c.mean())
            stderr = _pooled_stderr(d_t, d_c)
        else:
            ate, stderr = float("nan"), float("nan")
        reports.append(
            StratumReport(
                stratum_index=g,
                score_low=float(s[rows].min()),
                score_high=float(s[rows].max()),
                n_treated=n_t,
                n_control=n_c,
                ate=ate,
                stderr=stderr,
            )
        )
    return reports


def _pooled_stderr(d_t: np.ndarray, d_c: np.ndarray) -> float:
    n_t, n_c = len(d_t), len(d_c)
    if n_t + n_c <= 2:
        return float("nan")
    ss = float(((d_t - d_t.mean()) ** 2).sum() + ((d_c - d_c.mean()) ** 2).sum())
    pooled_var = ss / (n_t + n_c - 2)
    return math.sqrt(pooled_var * (1.0 / n_t + 1.0 / n_c))


def t_sf(t: float, dof: int) -> float:
    """P(T > t) for Student's t; exact incomplete-beta form up to
    T_DIST_DOF_LIMIT dof, normal approximation above."""
    if dof <= 0:
        raise ValidationError("dof must be positive")
    if dof > T_DIST_DOF_LIMIT:
        return 0.5 * float(erfc(t / math.sqrt(2.0)))
    x = dof / (dof + t * t)
    tail = 0.5 * float(betainc(dof / 2.0, 0.5, x))
    return tail if t >= 0 else 1.0 - tail


def _ols(design: np.ndarray, outcome: np.ndarray, term_names) -> tuple:
    n, k = design.shape
    q, r = np.linalg.qr(design)
    diag = np.abs(np.diag(r))
    scale = float(diag.max()) if diag.size else 0.0
    bad = np.flatnonzero(diag <= max(scale, 1.0) * n * np.finfo(np.float64).eps * 16)
    if bad.size:
        names = [term_names[int(j)] for j in bad]
        raise CollinearityError(
            f"design is rank deficient in terms {names}", columns=names
        )
    coef = np.linalg.solve(r, q.T @ outcome)
    resid = outcome - design @ coef
    dof = n - k
    sigma2 = float(resid @ resid) / dof
    rinv = np.linalg.solve(r, np.eye(k))
    cov = sigma2 * (rinv @ rinv.T)
    stderr = np.sqrt(np.diag(cov))
    return coef, stderr, resid, dof


def interaction_regression(exp: ExperimentDataset, scores) -> RegressionFit:
    """OLS of log(1 + y_post) on intercept, treatment, score,
    treatment x score, and log(1 + y_pre).

    The pre-period term is a variance reducer; the treatment x score
    coefficient carries the heterogeneity evidence. Classical standard
    errors; two-sided p-values from the t distribution with n - 5 dof.
    """
    n = exp.n_units
    if n < 10:
        raise ValidationError(f"need at least 10 experimental units, got {n}")
    s = _score_vector(exp, scores)
    treated = exp.treated.astype(np.float64)
    outcome = np.log1p(exp.y_post)
    design = np.column_stack(
        [np.ones(n), treated, s, treated * s, np.log1p(exp.y_pre)]
    )
    coef, stderr, _resid, dof = _ols(design, outcome, REGRESSION_TERMS)

    coefficients = []
    for name, est, se in zip(REGRESSION_TERMS, coef, stderr):
        if se > 0:
            t_stat = float(est / se)
            p = 2.0 * t_sf(abs(t_stat), dof)
        elif est == 0.0:  # exactly-null coefficient in a perfect fit
            t_stat, p = 0.0, 1.0
        else:
            t_stat, p = math.copysign(math.inf, est), 0.0
        coefficients.append(
            CoefficientEstimate(
                name=name,
                estimate=float(est),
                stderr=float(se),
                t_stat=t_stat,
                p_value=min(1.0, p),
            )
        )
    return RegressionFit(coefficients=tuple(coefficients), n=n, dof=dof)


def pav(values, weights) -> np.ndarray:
    """Weighted isotonic (nondecreasing) least squares via pool-adjacent-violators."""
    values = np.asarray(values, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if values.shape != weights.shape or values.ndim != 1:
        raise ValidationError("values and weights must be 1-d arrays of equal length")
    if np.any(weights <= 0):
        raise ValidationError("weights must be positive")
    # blocks of (weighted mean, weight, length), merged while out of order
    means, wsum, count = [], [], []
    for v, w in zip(values, weights):
        means.append(float(v))
        wsum.append(float(w))
        count.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, w2, c2 = means.pop(), wsum.pop(), count.pop()
            m1, w1, c1 = means.pop(), wsum.pop(), count.pop()
            w = w1 + w2
            means.append((m1 * w1 + m2 * w2) / w)
            wsum.append(w)
            count.append(c1 + c2)
    out = np.empty(len(values))
    pos = 0
    for m, c in zip(means, count):
        out[pos : pos + c] = m
        pos += c
    return out


def fit_monotone_map(strata: list[StratumReport]) -> MonotoneMap:
    """Isotonic regression of stratum effects on stratum score midpoints.

    Strata missing an arm are excluded; the rest are weighted by inverse
    squared standard error (zero standard errors are floored so exact
    strata get equal, very large weights).
    """
    usable = [s for s in strata if s.has_both_arms and math.isfinite(s.ate)]
    if len(usable) < 2:
        raise InsufficientStrataError(
            f"need >= 2 strata with both arms, got {len(usable)}"
        )
    mids = np.asarray([0.5 * (s.score_low + s.score_high) for s in usable])
    ates = np.asarray([s.ate for s in usable])
    ses = np.asarray([max(s.stderr, 1e-12) if math.isfinite(s.stderr) else 1e-12 for s in usable])
    order = np.argsort(mids, kind="stable")
    mids, ates, ses = mids[order], ates[order], ses[order]
    if np.any(np.diff(mids) <= 0):
        # merge strata with equal midpoints (duplicate scores at the boundary)
        keep_mids, keep_ates, keep_ws = [], [], []
        for m, a, w in zip(mids, ates, 1.0 / ses**2):
            if keep_mids and m == keep_mids[-1]:
                tot = keep_ws[-1] + w
                keep_ates[-1] = (keep_ates[-1] * keep_ws[-1] + a * w) / tot
                keep_ws[-1] = tot
            else:
                keep_mids.append(m)
                keep_ates.append(a)
                keep_ws.append(w)
        mids = np.asarray(keep_mids)
        ates = np.asarray(keep_ates)
        weights = np.asarray(keep_ws)
    else:
        weights = 1.0 / ses**2
    fitted = pav(ates, weights)
    return MonotoneMap(breakpoints=tuple(mids), values=tuple(fitted))


def select_targets(scores, budget_k: int) -> list:
    """Unit ids of the min(budget_k, n) highest scores.

    Ties break by ascending unit id; output is ordered by descending
    score. Invariant under any strictly increasing transform of scores.
    """
    if budget_k < 0:
        raise ValidationError("budget_k must be >= 0")
    if budget_k == 0 or not scores:
        return []
    ids = np.asarray(list(scores.keys()))
    vals = np.asarray([scores[u] for u in ids.tolist()], dtype=np.float64)
    order = np.lexsort((ids, -vals))
    k = min(budget_k, len(ids))
    return ids[order[:k]].tolist()
