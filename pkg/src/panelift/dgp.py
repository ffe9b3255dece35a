"""Synthetic observational panels and randomized experiments.

Units carry a latent affinity ``a``; link functions map it to the unit's
structural parameters. Each period t the generator draws a shock ``u_t``
(shared by every unit within the period, or per unit when
``shock_mode="independent"``) plus idiosyncratic noise, and emits

    x[i, t] = theta_i + eps[i, t] + u[t] * psi_i
    y[i, t] = mu_i + x[i, t] * beta_i + u[t] * gamma_i + eta[i, t]

so ``beta_i`` is the true unit-level effect of raising x by one. Ground
truth is retained for oracle checks, and every draw comes from a named
substream of the master seed, so output is reproducible bit for bit and
independent of any parallelism in downstream consumers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateVarianceError, ResampleError, ValidationError
from .links import (
    AffinityDistribution,
    Affine,
    LinkFunctions,
    UniformAffinity,
    affinity_from_dict,
)
from .streams import substream

_SHOCK_MODES = ("shared", "independent")


@dataclass(frozen=True)
class CovariateSpec:
    """How learner covariates are derived from affinity.

    Signal columns are fixed transforms of ``a`` plus independent Gaussian
    noise; distractor columns are pure noise. This gives the learner a
    recoverable but non-trivial signal.
    """

    transforms: tuple[str, ...] = ("identity", "square", "exp")
    noise_sd: float = 0.25
    n_distractors: int = 5

    _TRANSFORMS = {
        "identity": lambda a: a,
        "square": lambda a: a * a,
        "exp": np.exp,
        "sin": np.sin,
    }

    def __post_init__(self):
        object.__setattr__(self, "transforms", tuple(self.transforms))
        unknown = [t for t in self.transforms if t not in self._TRANSFORMS]
        if unknown:
            raise ValidationError(f"unknown covariate transforms: {unknown}")
        if self.noise_sd < 0:
            raise ValidationError("covariate noise_sd must be >= 0")
        if self.n_distractors < 0:
            raise ValidationError("n_distractors must be >= 0")

    @property
    def n_features(self) -> int:
        return len(self.transforms) + self.n_distractors

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f"c{j + 1}" for j in range(self.n_features))

    def signal_matrix(self, affinity: np.ndarray) -> np.ndarray:
        cols = [self._TRANSFORMS[t](affinity) for t in self.transforms]
        return np.column_stack(cols) if cols else np.empty((len(affinity), 0))

    def to_dict(self) -> dict:
        return {
            "transforms": list(self.transforms),
            "noise_sd": self.noise_sd,
            "n_distractors": self.n_distractors,
        }


@dataclass(frozen=True)
class DgpSpec:
    """Ground-truth configuration for one synthetic cohort."""

    n_units: int
    links: LinkFunctions
    t_periods: int = 60
    var_eps: float = 1.0
    var_eta: float = 1.0
    var_u: float = 1.0
    affinity_dist: AffinityDistribution = field(default_factory=UniformAffinity)
    covariates: CovariateSpec = field(default_factory=CovariateSpec)
    shock_mode: str = "shared"
    seed: int = 0

    def __post_init__(self):
        if self.n_units < 1:
            raise ValidationError("n_units must be >= 1")
        if self.t_periods < 3:
            raise ValidationError("t_periods must be >= 3")
        for name in ("var_eps", "var_eta", "var_u"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValidationError(f"{name} must be finite and >= 0")
        if self.shock_mode not in _SHOCK_MODES:
            raise ValidationError(f"shock_mode must be one of {_SHOCK_MODES}")

    def to_dict(self) -> dict:
        return {
            "n_units": self.n_units,
            "t_periods": self.t_periods,
            "var_eps": self.var_eps,
            "var_eta": self.var_eta,
            "var_u": self.var_u,
            "affinity_dist": self.affinity_dist.to_dict(),
            "links": self.links.to_dict(),
            "covariates": self.covariates.to_dict(),
            "shock_mode": self.shock_mode,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DgpSpec":
        return cls(
            n_units=int(d["n_units"]),
            links=LinkFunctions.from_dict(d["links"]),
            t_periods=int(d.get("t_periods", 60)),
            var_eps=float(d.get("var_eps", 1.0)),
            var_eta=float(d.get("var_eta", 1.0)),
            var_u=float(d.get("var_u", 1.0)),
            affinity_dist=affinity_from_dict(d["affinity_dist"])
            if "affinity_dist" in d
            else UniformAffinity(),
            covariates=CovariateSpec(**d["covariates"])
            if "covariates" in d
            else CovariateSpec(),
            shock_mode=d.get("shock_mode", "shared"),
            seed=int(d.get("seed", 0)),
        )


@dataclass(frozen=True)
class UnitParams:
    """Structural parameters of one unit."""

    unit_id: int
    affinity: float
    theta: float
    mu: float
    beta: float
    psi: float
    gamma: float

    def __post_init__(self):
        vals = (self.affinity, self.theta, self.mu, self.beta, self.psi, self.gamma)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError(f"unit {self.unit_id}: non-finite structural parameter")


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class PanelDataset:
    """Columnar per-unit time series, plus the per-unit covariate table.

    Rows are grouped by unit in ``unit_ids`` order; ``row_unit`` maps each
    row to its unit's index. ``v`` holds optional per-row observed
    covariates to residualize on; ``covariates`` holds the per-unit feature
    vectors consumed by the learner. All arrays are immutable.
    """

    unit_ids: np.ndarray
    row_unit: np.ndarray
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    v: np.ndarray | None = None
    covariates: np.ndarray | None = None
    covariate_names: tuple[str, ...] | None = None

    def __post_init__(self):
        for name in ("unit_ids", "row_unit", "t", "x", "y"):
            object.__setattr__(self, name, _readonly(np.asarray(getattr(self, name))))
        if self.v is not None:
            object.__setattr__(self, "v", _readonly(np.asarray(self.v, dtype=np.float64)))
        if self.covariates is not None:
            object.__setattr__(
                self, "covariates", _readonly(np.asarray(self.covariates, dtype=np.float64))
            )
        n_rows = len(self.row_unit)
        if not (len(self.t) == len(self.x) == len(self.y) == n_rows):
            raise ValidationError("panel row arrays must have equal length")
        if n_rows == 0:
            raise ValidationError("panel has no rows")
        if len(np.unique(self.unit_ids)) != len(self.unit_ids):
            raise ValidationError("unit_ids must be unique")
        if self.row_unit.min() < 0 or self.row_unit.max() >= len(self.unit_ids):
            raise ValidationError("row_unit indexes outside unit_ids")
        if self.v is not None and self.v.shape[0] != n_rows:
            raise ValidationError("v must have one row per panel row")
        if self.covariates is not None:
            if self.covariates.shape[0] != len(self.unit_ids):
                raise ValidationError("covariates must have one row per unit")
            if self.covariate_names is not None and len(self.covariate_names) != self.covariates.shape[1]:
                raise ValidationError("covariate_names length mismatch")
        # within-unit period indices must be strictly increasing
        same_unit = self.row_unit[1:] == self.row_unit[:-1]
        if np.any(same_unit & (np.diff(self.t) <= 0)):
            raise ValidationError("period indices must be strictly increasing within units")

    @property
    def n_units(self) -> int:
        return len(self.unit_ids)

    @property
    def n_rows(self) -> int:
        return len(self.x)

    def unit_slices(self) -> np.ndarray:
        """Row offsets of each unit's block: shape (n_units + 1,)."""
        starts = np.flatnonzero(np.diff(self.row_unit, prepend=-1))
        return np.append(starts, self.n_rows)


@dataclass(frozen=True)
class ExperimentDataset:
    """One randomized trial: assignment plus pre/post outcomes."""

    unit_ids: np.ndarray
    treated: np.ndarray
    y_pre: np.ndarray
    y_post: np.ndarray
    covariates: np.ndarray | None = None
    covariate_names: tuple[str, ...] | None = None
    n_floored: int = 0

    def __post_init__(self):
        object.__setattr__(self, "unit_ids", _readonly(np.asarray(self.unit_ids)))
        object.__setattr__(self, "treated", _readonly(np.asarray(self.treated, dtype=bool)))
        object.__setattr__(self, "y_pre", _readonly(np.asarray(self.y_pre, dtype=np.float64)))
        object.__setattr__(self, "y_post", _readonly(np.asarray(self.y_post, dtype=np.float64)))
        if self.covariates is not None:
            object.__setattr__(
                self, "covariates", _readonly(np.asarray(self.covariates, dtype=np.float64))
            )
        n = len(self.unit_ids)
        if not (len(self.treated) == len(self.y_pre) == len(self.y_post) == n):
            raise ValidationError("experiment arrays must have equal length")
        if len(np.unique(self.unit_ids)) != n:
            raise ValidationError("unit_ids must be unique")
        if not (self.treated.any() and (~self.treated).any()):
            raise ValidationError("experiment needs at least one treated and one control unit")
        if np.any(self.y_pre < 0) or np.any(self.y_post < 0):
            raise ValidationError("outcomes must be nonnegative")

    @property
    def n_units(self) -> int:
        return len(self.unit_ids)


def sample_units(spec: DgpSpec) -> list[UnitParams]:
    """Draw a cohort's affinities and apply the links.

    Deterministic given ``spec.seed``; unit ids are 0..n_units-1.
    """
    rng = substream(spec.seed, "dgp.affinity")
    a = spec.affinity_dist.sample(rng, spec.n_units)
    theta = np.asarray(spec.links.baseline_supply(a), dtype=np.float64)
    mu = np.asarray(spec.links.baseline_demand(a), dtype=np.float64)
    beta = np.asarray(spec.links.effect(a), dtype=np.float64)
    psi = np.asarray(spec.links.supply_load(a), dtype=np.float64)
    gamma = np.asarray(spec.links.demand_load(a), dtype=np.float64)
    return [
        UnitParams(i, a[i], theta[i], mu[i], beta[i], psi[i], gamma[i])
        for i in range(spec.n_units)
    ]


def _param_arrays(units: list[UnitParams]):
    n = len(units)
    out = {k: np.empty(n) for k in ("affinity", "theta", "mu", "beta", "psi", "gamma")}
    ids = np.empty(n, dtype=np.int64)
    for i, u in enumerate(units):
        ids[i] = u.unit_id
        out["affinity"][i] = u.affinity
        out["theta"][i] = u.theta
        out["mu"][i] = u.mu
        out["beta"][i] = u.beta
        out["psi"][i] = u.psi
        out["gamma"][i] = u.gamma
    return ids, out


def covariate_matrix(units: list[UnitParams], spec: DgpSpec) -> np.ndarray:
    """Per-unit learner features: noisy transforms of affinity + distractors.

    A pure function of (units, spec): the panel and experiment simulators
    both attach the same table for the same cohort.
    """
    _, p = _param_arrays(units)
    cov = spec.covariates
    signal = cov.signal_matrix(p["affinity"])
    n = len(units)
    rng = substream(spec.seed, "dgp.covariates")
    noise = rng.standard_normal((n, cov.n_features))
    out = np.empty((n, cov.n_features))
    k = signal.shape[1]
    out[:, :k] = signal + cov.noise_sd * noise[:, :k]
    out[:, k:] = noise[:, k:]
    return out


def _unit_noise(spec: DgpSpec, unit_id: int, tag: str, size: int) -> np.ndarray:
    return substream(spec.seed, tag, unit_id).standard_normal(size)


def simulate_panel(units: list[UnitParams], spec: DgpSpec) -> PanelDataset:
    """Emit the observational panel for a cohort.

    Per-period shocks come from the ``panel.shocks`` substream (one value
    per period, shared by all units, unless ``shock_mode="independent"``);
    each unit's idiosyncratic noise comes from its own
    ``(seed, "panel.noise", unit_id)`` substream. Output is identical no
    matter how callers parallelize around this function.
    """
    if not units:
        raise ValidationError("units must be nonempty")
    n, T = len(units), spec.t_periods
    ids, p = _param_arrays(units)

    sd_eps = math.sqrt(spec.var_eps)
    sd_eta = math.sqrt(spec.var_eta)
    sd_u = math.sqrt(spec.var_u)

    if spec.shock_mode == "shared":
        u = sd_u * substream(spec.seed, "panel.shocks").standard_normal(T)
        u_rows = np.broadcast_to(u, (n, T))
    else:
        u_rows = np.empty((n, T))
        for i, uid in enumerate(ids):
            u_rows[i] = sd_u * _unit_noise(spec, int(uid), "panel.unit_shocks", T)

    x = np.empty((n, T))
    y = np.empty((n, T))
    for i, uid in enumerate(ids):
        z = _unit_noise(spec, int(uid), "panel.noise", 2 * T)
        eps, eta = sd_eps * z[:T], sd_eta * z[T:]
        x[i] = p["theta"][i] + eps + u_rows[i] * p["psi"][i]
        y[i] = p["mu"][i] + x[i] * p["beta"][i] + u_rows[i] * p["gamma"][i] + eta

    return PanelDataset(
        unit_ids=ids,
        row_unit=np.repeat(np.arange(n, dtype=np.int64), T),
        t=np.tile(np.arange(T, dtype=np.int64), n),
        x=x.reshape(-1),
        y=y.reshape(-1),
        covariates=covariate_matrix(units, spec),
        covariate_names=spec.covariates.names,
    )


def simulate_experiment(
    units: list[UnitParams],
    spec: DgpSpec,
    treated_fraction: float,
    window: int = 7,
) -> ExperimentDataset:
    """Run one synthetic randomized trial on a cohort.

    Assignment is Bernoulli(treated_fraction) per unit. ``y_pre`` and
    ``y_post`` are daily averages of the structural outcome over a
    ``window``-day pre and post period; in the post window x is raised by
    exactly one for treated units every day, so each unit's causal effect
    on ``y_post`` is exactly its beta regardless of window length.
    Averages are floored at zero to satisfy the nonnegative-outcome
    contract; the floor is inactive for the bundled presets (baselines
    sit far above zero) and the flooring count is recorded on the dataset.
    """
    if not units:
        raise ValidationError("units must be nonempty")
    if not 0.0 < treated_fraction < 1.0:
        raise ValidationError("treated_fraction must be in (0, 1)")
    if window < 1:
        raise ValidationError("window must be >= 1")
    n = len(units)
    ids, p = _param_arrays(units)

    treated = substream(spec.seed, "experiment.assign").random(n) < treated_fraction
    if treated.all() or not treated.any():
        raise ResampleError(
            "degenerate assignment (all units in one arm); change the seed or increase n_units"
        )

    sd_eps = math.sqrt(spec.var_eps)
    sd_eta = math.sqrt(spec.var_eta)
    sd_u = math.sqrt(spec.var_u)
    w = window

    if spec.shock_mode == "shared":
        u = sd_u * substream(spec.seed, "experiment.shocks").standard_normal(2 * w)
        u_days = np.broadcast_to(u, (n, 2 * w))
    else:
        u_days = sd_u * substream(spec.seed, "experiment.shocks").standard_normal((n, 2 * w))

    z = substream(spec.seed, "experiment.noise").standard_normal((n, 4 * w))
    eps = sd_eps * z[:, : 2 * w]
    eta = sd_eta * z[:, 2 * w :]

    dose = np.zeros((n, 2 * w))
    dose[treated, w:] = 1.0
    x_days = p["theta"][:, None] + eps + u_days * p["psi"][:, None] + dose
    y_days = (
        p["mu"][:, None]
        + x_days * p["beta"][:, None]
        + u_days * p["gamma"][:, None]
        + eta
    )
    y_pre = y_days[:, :w].mean(axis=1)
    y_post = y_days[:, w:].mean(axis=1)

    n_floored = int(np.count_nonzero(y_pre < 0) + np.count_nonzero(y_post < 0))
    return ExperimentDataset(
        unit_ids=ids,
        treated=treated,
        y_pre=np.maximum(y_pre, 0.0),
        y_post=np.maximum(y_post, 0.0),
        covariates=covariate_matrix(units, spec),
        covariate_names=spec.covariates.names,
        n_floored=n_floored,
    )


def theoretical_bias(unit: UnitParams, spec: DgpSpec) -> float:
    """Population gap between the unit's regression slope and its true effect.

    Omitting the shock channel u from the per-unit regression of y on x
    shifts the population slope by

        gamma * Cov(x, u) / Var(x)
          = gamma * psi * var_u / (psi**2 * var_u + var_eps).
    """
    denom = unit.psi**2 * spec.var_u + spec.var_eps
    if denom <= 0:
        raise DegenerateVarianceError(
            f"unit {unit.unit_id}: total x-variance is zero (psi^2*var_u + var_eps == 0)"
        )
    return unit.gamma * unit.psi * spec.var_u / denom


# ---------------------------------------------------------------------------
# Bundled regimes


def rank_preserving_links() -> LinkFunctions:
    """Links whose slope bias grows with the true effect.

    effect, supply_load and demand_load are strictly increasing and
    demand_load outpaces supply_load, so larger true effects come with
    larger (not smaller) bias and the estimated slopes preserve the
    effect ranking. Baselines keep outcomes comfortably positive.
    """
    return LinkFunctions(
        baseline_supply=Affine(10.0, 5.0),
        baseline_demand=Affine(20.0, 5.0),
        effect=Affine(0.5, 4.5),
        supply_load=Affine(0.5, 0.5),
        demand_load=Affine(1.0, 4.0),
    )


def rank_inverting_links() -> LinkFunctions:
    """Links that break the ranking: bias falls faster than the effect rises.

    d(bias)/d(beta) = -1.5 everywhere, so the population slope ordering is
    the reverse of the true-effect ordering.
    """
    return LinkFunctions(
        baseline_supply=Affine(10.0, 0.0),
        baseline_demand=Affine(20.0, 0.0),
        effect=Affine(1.0, 1.0),
        supply_load=Affine(1.0, 0.0),
        demand_load=Affine(4.0, -3.0),
    )


def constant_effect_links() -> LinkFunctions:
    """All-constant links: no heterogeneity in effects, loadings or baselines."""
    return LinkFunctions(
        baseline_supply=Affine(10.0, 0.0),
        baseline_demand=Affine(22.0, 0.0),
        effect=Affine(2.0, 0.0),
        supply_load=Affine(0.7, 0.0),
        demand_load=Affine(2.0, 0.0),
    )


def rank_preserving_spec(n_units: int, t_periods: int = 60, seed: int = 0, **overrides) -> DgpSpec:
    """Default cohort spec under the rank-preserving regime."""
    return DgpSpec(
        n_units=n_units, links=rank_preserving_links(), t_periods=t_periods, seed=seed, **overrides
    )


def rank_inverting_spec(n_units: int, t_periods: int = 60, seed: int = 0, **overrides) -> DgpSpec:
    """Cohort spec under the rank-inverting regime."""
    return DgpSpec(
        n_units=n_units, links=rank_inverting_links(), t_periods=t_periods, seed=seed, **overrides
    )


def constant_effect_spec(n_units: int, t_periods: int = 60, seed: int = 0, **overrides) -> DgpSpec:
    """Cohort spec with a homogeneous treatment effect."""
    return DgpSpec(
        n_units=n_units, links=constant_effect_links(), t_periods=t_periods, seed=seed, **overrides
    )


PRESETS = {
    "rank_preserving": rank_preserving_links,
    "rank_inverting": rank_inverting_links,
    "constant_effect": constant_effect_links,
}


def spec_with_preset(preset: str, n_units: int, t_periods: int = 60, seed: int = 0, **overrides) -> DgpSpec:
    if preset not in PRESETS:
        raise ValidationError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
    return DgpSpec(
        n_units=n_units, links=PRESETS[preset](), t_periods=t_periods, seed=seed, **overrides
    )
