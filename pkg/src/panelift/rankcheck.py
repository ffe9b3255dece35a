"""Diagnostics for when effect rankings survive the estimation bias.

The observational slope for a unit equals its true effect plus a bias
term. If, for every pair, the larger true effect also carries the larger
(or equal) bias, the slope ordering matches the effect ordering exactly;
a weaker necessary condition bounds how fast bias may fall as the effect
rises. This module checks both conditions on ground-truth parameters and
measures realized rank agreement on estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dgp import DgpSpec, UnitParams, theoretical_bias
from .errors import IdMismatchError, UndefinedMetricError, ValidationError
from .streams import substream

#: All pairs are checked exactly up to this many units; beyond it a seeded
#: random subsample of PAIR_SAMPLE pairs is used.
EXACT_PAIR_LIMIT = 2000
PAIR_SAMPLE = 1_000_000


@dataclass(frozen=True)
class RankReport:
    """Rank agreement between true and estimated effects."""

    kendall_tau: float
    spearman_rho: float
    n_pairs_checked: int
    sufficient_condition_fraction: float
    necessary_condition_violations: int

    def __post_init__(self):
        if not -1.0 <= self.kendall_tau <= 1.0:
            raise ValidationError("kendall_tau outside [-1, 1]")
        if not -1.0 <= self.spearman_rho <= 1.0:
            raise ValidationError("spearman_rho outside [-1, 1]")
        if not 0.0 <= self.sufficient_condition_fraction <= 1.0:
            raise ValidationError("sufficient_condition_fraction outside [0, 1]")

    def to_dict(self) -> dict:
        return {
            "kendall_tau": self.kendall_tau,
            "spearman_rho": self.spearman_rho,
            "n_pairs_checked": self.n_pairs_checked,
            "sufficient_condition_fraction": self.sufficient_condition_fraction,
            "necessary_condition_violations": self.necessary_condition_violations,
        }


def sufficient_condition_holds(i: UnitParams, j: UnitParams, spec: DgpSpec) -> bool:
    """True when this pair's slope ordering is guaranteed to match its effect ordering.

    With the pair ordered so the first unit has the larger true effect,
    the guarantee holds iff that unit's bias is at least the other's.
    Equal effects are trivially order-safe.
    """
    if i.beta == j.beta:
        return True
    hi, lo = (i, j) if i.beta > j.beta else (j, i)
    return theoretical_bias(hi, spec) >= theoretical_bias(lo, spec)


def necessary_condition_check(units: list[UnitParams], spec: DgpSpec) -> int:
    """Count adjacent-pair inversions of the population slope ordering.

    Units are sorted by true effect; for each adjacent pair with strictly
    increasing effect, the pair violates the necessary condition when
    (bias_hi - bias_lo) / (beta_hi - beta_lo) <= -1, i.e. the population
    slopes invert. Returns the number of violating adjacent pairs.
    """
    if len(units) < 2:
        raise ValidationError("need at least 2 units")
    ordered = sorted(units, key=lambda u: u.beta)
    violations = 0
    for lo, hi in zip(ordered, ordered[1:]):
        dbeta = hi.beta - lo.beta
        if dbeta <= 0:
            continue
        dbias = theoretical_bias(hi, spec) - theoretical_bias(lo, spec)
        if dbias / dbeta <= -1.0:
            violations += 1
    return violations


def _tie_pair_count(sorted_vals: np.ndarray) -> int:
    """Sum over tie groups of t*(t-1)/2 for an already-sorted array."""
    if len(sorted_vals) < 2:
        return 0
    change = np.flatnonzero(sorted_vals[1:] != sorted_vals[:-1])
    bounds = np.concatenate([[0], change + 1, [len(sorted_vals)]])
    runs = np.diff(bounds)
    return int(np.sum(runs * (runs - 1)) // 2)


def kendall_tau(a, b) -> float:
    """Tie-adjusted rank correlation (tau-b) in O(n log n).

    Concordant/discordant pairs are counted by sorting on a (ties broken
    by b) and merge-counting strict inversions of b; tie corrections give
    the tau-b normalization.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError("inputs must be 1-d arrays of equal length")
    n = len(a)
    if n < 2:
        raise ValidationError("need at least 2 observations")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValidationError("inputs must be finite")

    order = np.lexsort((b, a))
    a_s = a[order]
    b_s = b[order]

    n0 = n * (n - 1) // 2
    ties_a = _tie_pair_count(a_s)
    ties_b = _tie_pair_count(np.sort(b, kind="stable"))
    # joint ties: runs of equal (a, b)
    joint_change = np.flatnonzero((a_s[1:] != a_s[:-1]) | (b_s[1:] != b_s[:-1]))
    bounds = np.concatenate([[0], joint_change + 1, [n]])
    runs = np.diff(bounds)
    ties_ab = int(np.sum(runs * (runs - 1)) // 2)

    denom = math.sqrt(float(n0 - ties_a)) * math.sqrt(float(n0 - ties_b))
    if denom == 0.0:
        raise UndefinedMetricError("kendall tau undefined: an input is entirely tied")

    discordant = int(kernels.count_inversions(b_s))
    concordant_minus_discordant = n0 - ties_a - ties_b + ties_ab - 2 * discordant
    # guard rounding overshoot just outside [-1, 1]
    return float(min(1.0, max(-1.0, concordant_minus_discordant / denom)))


def average_ranks(values) -> np.ndarray:
    """Ranks 1..n with ties sharing their average rank."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="stable")
    sorted_v = v[order]
    change = np.flatnonzero(sorted_v[1:] != sorted_v[:-1])
    bounds = np.concatenate([[0], change + 1, [len(v)]])
    group_rank = 0.5 * (bounds[:-1] + 1 + bounds[1:])
    ranks = np.empty(len(v))
    ranks[order] = np.repeat(group_rank, np.diff(bounds))
    return ranks


def spearman_rho(a, b) -> float:
    """Pearson correlation of average ranks."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError("inputs must be 1-d arrays of equal length")
    if len(a) < 2:
        raise ValidationError("need at least 2 observations")
    ra = average_ranks(a)
    rb = average_ranks(b)
    ra -= ra.mean()
    rb -= rb.mean()
    denom = math.sqrt(float(ra @ ra)) * math.sqrt(float(rb @ rb))
    if denom == 0.0:
        raise UndefinedMetricError("spearman rho undefined: an input is entirely tied")
    return float(min(1.0, max(-1.0, (ra @ rb) / denom)))


def rank_preservation_report(
    truth: list[UnitParams],
    estimates,
    spec: DgpSpec,
    max_exact_pairs: int = EXACT_PAIR_LIMIT,
    pair_sample: int = PAIR_SAMPLE,
) -> RankReport:
    """Full rank diagnostic for a cohort and its estimates.

    Estimates are matched to truth by unit id (an id mismatch raises,
    listing the missing ids). The pairwise sufficient-condition fraction
    is exact up to ``max_exact_pairs`` units and a seeded random
    subsample of ``pair_sample`` pairs beyond that.
    """
    by_id = {u.unit_id: u for u in truth}
    missing = [e.unit_id for e in estimates if e.unit_id not in by_id]
    if missing:
        raise IdMismatchError(
            f"{len(missing)} estimate ids missing from truth (first: {missing[:5]})",
            missing_ids=missing,
        )
    if len(estimates) < 2:
        raise ValidationError("need at least 2 matched estimates")

    matched = [by_id[e.unit_id] for e in estimates]
    beta = np.array([u.beta for u in matched])
    beta_hat = np.array([e.beta_hat for e in estimates])
    bias = np.array([theoretical_bias(u, spec) for u in matched])

    n = len(matched)
    if n <= max_exact_pairs:
        ii, jj = np.triu_indices(n, k=1)
    else:
        rng = substream(spec.seed, "rankcheck.pairs")
        ii = rng.integers(0, n, size=pair_sample)
        jj = rng.integers(0, n, size=pair_sample)
        keep = ii != jj
        ii, jj = ii[keep], jj[keep]
    lo_beta = np.minimum(beta[ii], beta[jj])
    hi_beta = np.maximum(beta[ii], beta[jj])
    # bias of the higher-beta unit must be >= bias of the lower-beta unit
    swap = beta[jj] > beta[ii]
    hi_bias = np.where(swap, bias[jj], bias[ii])
    lo_bias = np.where(swap, bias[ii], bias[jj])
    ok = (hi_beta == lo_beta) | (hi_bias >= lo_bias)
    frac = float(np.mean(ok)) if len(ok) else 1.0

    return RankReport(
        kendall_tau=kendall_tau(beta, beta_hat),
        spearman_rho=spearman_rho(beta, beta_hat),
        n_pairs_checked=int(len(ok)),
        sufficient_condition_fraction=frac,
        necessary_condition_violations=necessary_condition_check(matched, spec),
    )
