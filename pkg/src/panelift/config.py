"""Declarative pipeline configuration.

One YAML file (nested sections) describes a full run; command-line
flags override environment variables, which override the file, which
overrides built-in defaults. Every artifact-producing subcommand embeds
the resolved config in its JSON outputs so a run is reproducible from
any one of them.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .dgp import CovariateSpec, DgpSpec, spec_with_preset
from .errors import InputFileError, ValidationError
from .learner import TrainConfig
from .links import LinkFunctions, affinity_from_dict

ENV_PREFIX = "PANELIFT_"

ARTIFACT_NAMES = {
    "run_config": "run_config.json",
    "panel": "panel.csv",
    "covariates": "covariates.csv",
    "experiment": "experiment.csv",
    "truth": "truth.csv",
    "effects": "effects.csv",
    "skips": "skips.csv",
    "labels": "labels.csv",
    "model": "model.json",
    "scores": "scores.csv",
    "strata": "strata.csv",
    "regression": "regression.json",
    "monotone_map": "monotone_map.json",
    "rank_report": "rank_report.json",
    "figure3": "figure3.csv",
    "targets": "targets.csv",
    "report": "report.txt",
}


@dataclass(frozen=True)
class PipelineConfig:
    """Resolved settings for one run."""

    out_dir: str = "panelift_out"
    seed: int = 0
    threads: int = 1
    dgp_preset: str = "rank_preserving"
    n_units: int = 1000
    t_periods: int = 60
    dgp_overrides: dict = field(default_factory=dict)
    treated_fraction: float = 0.5
    experiment_window: int = 7
    min_obs: int = 30
    train: TrainConfig = field(default_factory=TrainConfig)
    n_strata: int = 10
    budget_k: int = 100
    path_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.threads < 1:
            raise ValidationError("threads must be >= 1")
        if self.min_obs < 3:
            raise ValidationError("min_obs must be >= 3")
        if self.n_strata < 2:
            raise ValidationError("n_strata must be >= 2")
        if self.budget_k < 0:
            raise ValidationError("budget_k must be >= 0")
        if not 0.0 < self.treated_fraction < 1.0:
            raise ValidationError("treated_fraction must be in (0, 1)")
        unknown = set(self.path_overrides) - set(ARTIFACT_NAMES)
        if unknown:
            raise ValidationError(f"unknown artifact names in paths: {sorted(unknown)}")

    def path(self, artifact: str) -> Path:
        if artifact not in ARTIFACT_NAMES:
            raise ValidationError(f"unknown artifact {artifact!r}")
        if artifact in self.path_overrides:
            return Path(self.path_overrides[artifact])
        return Path(self.out_dir) / ARTIFACT_NAMES[artifact]

    def dgp_spec(self) -> DgpSpec:
        """The DgpSpec for simulate mode, seeded by the master seed."""
        overrides = dict(self.dgp_overrides)
        try:
            if "affinity_dist" in overrides:
                overrides["affinity_dist"] = affinity_from_dict(overrides["affinity_dist"])
            if "covariates" in overrides:
                overrides["covariates"] = CovariateSpec(**overrides["covariates"])
            if "links" in overrides:
                links = LinkFunctions.from_dict(overrides.pop("links"))
                return DgpSpec(
                    n_units=self.n_units,
                    t_periods=self.t_periods,
                    seed=self.seed,
                    links=links,
                    **overrides,
                )
            return spec_with_preset(
                self.dgp_preset,
                n_units=self.n_units,
                t_periods=self.t_periods,
                seed=self.seed,
                **overrides,
            )
        except TypeError as exc:
            raise ValidationError(f"invalid dgp config: {exc}") from exc

    def train_config(self) -> TrainConfig:
        return replace(self.train, seed=self.seed, threads=self.threads)

    def to_dict(self) -> dict:
        return {
            "out_dir": self.out_dir,
            "seed": self.seed,
            "threads": self.threads,
            "dgp": {
                "preset": self.dgp_preset,
                "n_units": self.n_units,
                "t_periods": self.t_periods,
                **self.dgp_overrides,
            },
            "experiment": {
                "treated_fraction": self.treated_fraction,
                "window": self.experiment_window,
            },
            "panel": {"min_obs": self.min_obs},
            "learner": self.train.to_dict(),
            "analysis": {"n_strata": self.n_strata, "budget_k": self.budget_k},
            "paths": dict(self.path_overrides),
        }

    def echo_dict(self) -> dict:
        """Config as embedded in artifacts: drops the worker-count knob,
        which never affects results (outputs are thread-count invariant)."""
        d = self.to_dict()
        d.pop("threads", None)
        d["learner"].pop("threads", None)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d or {})
        dgp = dict(d.get("dgp", {}))
        experiment = dict(d.get("experiment", {}))
        panel = dict(d.get("panel", {}))
        learner = dict(d.get("learner", {}))
        analysis = dict(d.get("analysis", {}))
        known = {"out_dir", "seed", "threads", "dgp", "experiment", "panel", "learner", "analysis", "paths"}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown config sections/keys: {sorted(unknown)}")
        preset = dgp.pop("preset", "rank_preserving")
        try:
            train = TrainConfig(**learner)
        except TypeError as exc:
            raise ValidationError(f"invalid learner config: {exc}") from exc
        try:
            return cls(
                out_dir=str(d.get("out_dir", "panelift_out")),
                seed=int(d.get("seed", 0)),
                threads=int(d.get("threads", 1)),
                dgp_preset=preset,
                n_units=int(dgp.pop("n_units", 1000)),
                t_periods=int(dgp.pop("t_periods", 60)),
                dgp_overrides=dgp,
                treated_fraction=float(experiment.get("treated_fraction", 0.5)),
                experiment_window=int(experiment.get("window", 7)),
                min_obs=int(panel.get("min_obs", 30)),
                train=train,
                n_strata=int(analysis.get("n_strata", 10)),
                budget_k=int(analysis.get("budget_k", 100)),
                path_overrides=dict(d.get("paths", {})),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"invalid config value: {exc}") from exc

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise InputFileError(f"config file not found: {path}", path=path)
        try:
            with open(path, encoding="utf-8") as fh:
                data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise InputFileError(
                f"{path}: invalid YAML: {exc}",
                path=path,
                line=(mark.line + 1) if mark else None,
            ) from exc
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise InputFileError(f"{path}: config root must be a mapping", path=path)
        return cls.from_dict(data)


_ENV_FIELDS = {
    "SEED": ("seed", int),
    "THREADS": ("threads", int),
    "OUT": ("out_dir", str),
    "QUANTILE": ("quantile", float),
    "STRATA": ("n_strata", int),
    "MIN_OBS": ("min_obs", int),
    "BUDGET": ("budget_k", int),
}


def apply_env_overrides(cfg: PipelineConfig, environ=None) -> PipelineConfig:
    """Overlay PANELIFT_* environment variables (flags still win)."""
    environ = os.environ if environ is None else environ
    updates = {}
    for key, (field_name, cast) in _ENV_FIELDS.items():
        raw = environ.get(ENV_PREFIX + key)
        if raw is None or raw == "":
            continue
        try:
            value = cast(raw)
        except ValueError as exc:
            raise ValidationError(f"{ENV_PREFIX}{key}={raw!r}: expected {cast.__name__}") from exc
        if field_name == "quantile":
            updates["train"] = replace(cfg.train, quantile=value)
        else:
            updates[field_name] = value
    return replace(cfg, **updates) if updates else cfg


def apply_flag_overrides(cfg: PipelineConfig, args) -> PipelineConfig:
    """Overlay parsed argparse flags (highest precedence)."""
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        updates["threads"] = args.threads
    if getattr(args, "out", None) is not None:
        updates["out_dir"] = args.out
    if getattr(args, "strata", None) is not None:
        updates["n_strata"] = args.strata
    if getattr(args, "min_obs", None) is not None:
        updates["min_obs"] = args.min_obs
    if getattr(args, "budget", None) is not None:
        updates["budget_k"] = args.budget
    if getattr(args, "quantile", None) is not None:
        updates["train"] = replace(cfg.train, quantile=args.quantile)
    return replace(cfg, **updates) if updates else cfg
