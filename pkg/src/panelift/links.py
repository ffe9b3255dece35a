"""Function and distribution descriptors used by the data generator.

Link functions map a unit's latent affinity to its structural parameters.
They are restricted to affine and monotone piecewise-linear forms so that
every configuration is exactly analyzable and serializes to plain dicts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class Affine:
    """f(a) = intercept + slope * a, total on the real line."""

    intercept: float
    slope: float

    def __post_init__(self):
        if not (np.isfinite(self.intercept) and np.isfinite(self.slope)):
            raise ValidationError("Affine link requires finite intercept and slope")

    def __call__(self, a):
        a = np.asarray(a, dtype=np.float64)
        return self.intercept + self.slope * a

    @property
    def strictly_increasing(self) -> bool:
        return self.slope > 0

    def to_dict(self) -> dict:
        return {"kind": "affine", "intercept": self.intercept, "slope": self.slope}


@dataclass(frozen=True)
class PiecewiseLinear:
    """Piecewise-linear interpolant through (knots, values).

    Total only on [knots[0], knots[-1]]; evaluating outside that span is an
    error rather than silent extrapolation.
    """

    knots: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        knots = tuple(float(k) for k in self.knots)
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)
        if len(knots) < 2 or len(knots) != len(values):
            raise ValidationError("piecewise link needs >= 2 knots and matching values")
        if not all(np.isfinite(knots)) or not all(np.isfinite(values)):
            raise ValidationError("piecewise link requires finite knots and values")
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise ValidationError("piecewise link knots must be strictly increasing")

    def __call__(self, a):
        a = np.asarray(a, dtype=np.float64)
        lo, hi = self.knots[0], self.knots[-1]
        if np.any(a < lo) or np.any(a > hi):
            raise ValidationError(
                f"piecewise link evaluated outside its support [{lo}, {hi}]"
            )
        return np.interp(a, self.knots, self.values)

    @property
    def strictly_increasing(self) -> bool:
        return all(b > a for a, b in zip(self.values, self.values[1:]))

    def to_dict(self) -> dict:
        return {"kind": "pwl", "knots": list(self.knots), "values": list(self.values)}


LinkFunction = Union[Affine, PiecewiseLinear]


def link_from_dict(d: dict) -> LinkFunction:
    kind = d.get("kind")
    if kind == "affine":
        return Affine(float(d["intercept"]), float(d["slope"]))
    if kind == "pwl":
        return PiecewiseLinear(tuple(d["knots"]), tuple(d["values"]))
    raise ValidationError(f"unknown link kind: {kind!r}")


@dataclass(frozen=True)
class LinkFunctions:
    """The five affinity links of the structural model.

    baseline_supply -> theta, baseline_demand -> mu, effect -> beta,
    supply_load -> psi, demand_load -> gamma.
    """

    baseline_supply: LinkFunction
    baseline_demand: LinkFunction
    effect: LinkFunction
    supply_load: LinkFunction
    demand_load: LinkFunction

    @classmethod
    def constant(cls, theta=0.0, mu=0.0, beta=1.0, psi=0.0, gamma=0.0) -> "LinkFunctions":
        """All-constant links; handy for controlled tests."""
        return cls(
            baseline_supply=Affine(theta, 0.0),
            baseline_demand=Affine(mu, 0.0),
            effect=Affine(beta, 0.0),
            supply_load=Affine(psi, 0.0),
            demand_load=Affine(gamma, 0.0),
        )

    def to_dict(self) -> dict:
        return {
            "baseline_supply": self.baseline_supply.to_dict(),
            "baseline_demand": self.baseline_demand.to_dict(),
            "effect": self.effect.to_dict(),
            "supply_load": self.supply_load.to_dict(),
            "demand_load": self.demand_load.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinkFunctions":
        return cls(**{name: link_from_dict(d[name]) for name in (
            "baseline_supply", "baseline_demand", "effect", "supply_load", "demand_load")})


@dataclass(frozen=True)
class UniformAffinity:
    """Affinity drawn uniformly from [low, high]."""

    low: float = 0.0
    high: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.low) and np.isfinite(self.high)) or self.high <= self.low:
            raise ValidationError("uniform affinity needs finite low < high")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.low, self.high, size=n)

    @property
    def support(self) -> tuple[float, float]:
        return (self.low, self.high)

    def to_dict(self) -> dict:
        return {"kind": "uniform", "low": self.low, "high": self.high}


@dataclass(frozen=True)
class FixedGridAffinity:
    """Deterministic affinity grid, tiled cyclically over units."""

    values: tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", values)
        if not values or not all(np.isfinite(values)):
            raise ValidationError("fixed affinity grid needs >= 1 finite value")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        reps = -(-n // len(self.values))
        return np.tile(np.asarray(self.values, dtype=np.float64), reps)[:n]

    @property
    def support(self) -> tuple[float, float]:
        return (min(self.values), max(self.values))

    def to_dict(self) -> dict:
        return {"kind": "fixed", "values": list(self.values)}


AffinityDistribution = Union[UniformAffinity, FixedGridAffinity]


def affinity_from_dict(d: dict) -> AffinityDistribution:
    kind = d.get("kind")
    if kind == "uniform":
        return UniformAffinity(float(d.get("low", 0.0)), float(d.get("high", 1.0)))
    if kind == "fixed":
        return FixedGridAffinity(tuple(d["values"]))
    raise ValidationError(f"unknown affinity distribution kind: {kind!r}")
