"""Command-line pipeline.

Subcommands mirror the pipeline stages; ``pipeline`` runs them all in
order, passing data in memory while still writing every artifact.
Standalone subcommands consume previously written artifacts from the
output directory. Identical config + seed gives byte-identical outputs,
for any ``--threads`` value.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__, tables
from .config import PipelineConfig, apply_env_overrides, apply_flag_overrides
from .dgp import sample_units, simulate_experiment, simulate_panel
from .errors import IdMismatchError, InputFileError, PaneliftError
from .expanalysis import (
    fit_monotone_map,
    interaction_regression,
    select_targets,
    stratified_effects,
)
from .kernels import get_backend
from .learner import make_labels, predict_score, train_arrays
from .panel import fit_all
from .rankcheck import rank_preservation_report


def emit_figure_data(strata, path) -> None:
    """Write per-stratum plot data: midpoint, effect, 95% interval.

    Strata missing a treatment arm are excluded, each noted on a comment
    line so the exclusion is visible to downstream tooling.
    """
    if not strata:
        raise PaneliftError("no strata to emit")
    with tables.atomic_write(path) as fh:
        fh.write(",".join(tables.FIGURE_COLUMNS) + "\n")
        for s in strata:
            if not s.has_both_arms:
                fh.write(f"# stratum {s.stratum_index} excluded: missing treatment arm\n")
                continue
            mid = 0.5 * (s.score_low + s.score_high)
            lo = s.ate - 1.96 * s.stderr
            hi = s.ate + 1.96 * s.stderr
            fh.write(
                f"{s.stratum_index},{mid!r},{s.ate!r},{lo!r},{hi!r}\n"
            )


def _stage_simulate(cfg: PipelineConfig):
    spec = cfg.dgp_spec()
    units = sample_units(spec)
    panel = simulate_panel(units, spec)
    experiment = simulate_experiment(
        units, spec, cfg.treated_fraction, window=cfg.experiment_window
    )
    tables.write_panel(panel, cfg.path("panel"))
    tables.write_covariates(
        panel.unit_ids, panel.covariates, panel.covariate_names, cfg.path("covariates")
    )
    tables.write_experiment(experiment, cfg.path("experiment"))
    tables.write_truth(units, cfg.path("truth"))
    return units, panel, experiment


def _stage_fit(cfg: PipelineConfig, panel=None):
    if panel is None:
        panel = tables.read_panel(cfg.path("panel"))
    estimates, skips = fit_all(panel, min_obs=cfg.min_obs, threads=cfg.threads)
    tables.write_effects(estimates, cfg.path("effects"))
    tables.write_skips(skips, cfg.path("skips"))
    return estimates, skips


def _stage_label(cfg: PipelineConfig, estimates=None):
    if estimates is None:
        estimates = tables.read_effects(cfg.path("effects"))
    labels = make_labels(estimates, cfg.train.quantile)
    ids = [e.unit_id for e in estimates]
    tables.write_labels(ids, labels, cfg.path("labels"))
    return ids, labels


def _stage_train(cfg: PipelineConfig, label_ids=None, labels=None):
    cov_ids, cov, names = tables.read_covariates(cfg.path("covariates"))
    if labels is None:
        label_ids, labels = tables.read_labels(cfg.path("labels"))
    index = {uid: i for i, uid in enumerate(cov_ids.tolist())}
    missing = [uid for uid in label_ids if uid not in index]
    if missing:
        raise IdMismatchError(
            f"{len(missing)} labeled units have no covariates (first: {missing[:5]})",
            missing_ids=missing,
        )
    rows = np.asarray([index[uid] for uid in label_ids])
    model, log = train_arrays(
        cov[rows], labels, cfg.train_config(), feature_names=names
    )
    tables.write_model(
        model,
        cfg.path("model"),
        config=cfg.echo_dict(),
        seed=cfg.seed,
        training=log.to_dict(),
    )
    return model, log


def _stage_score(cfg: PipelineConfig, model=None):
    if model is None:
        model = tables.read_model(cfg.path("model"))
    cov_ids, cov, _names = tables.read_covariates(cfg.path("covariates"))
    scores = predict_score(model, cov)
    tables.write_scores(cov_ids, scores, cfg.path("scores"))
    return dict(zip(cov_ids.tolist(), scores.tolist()))


def _stage_analyze(cfg: PipelineConfig, experiment=None, scores=None):
    if experiment is None:
        experiment = tables.read_experiment(cfg.path("experiment"))
    if scores is None:
        scores = tables.read_scores(cfg.path("scores"))

    strata = stratified_effects(experiment, scores, cfg.n_strata)
    tables.write_strata(strata, cfg.path("strata"))
    emit_figure_data(strata, cfg.path("figure3"))

    regression = interaction_regression(experiment, scores)
    tables.write_json(
        cfg.path("regression"), regression.to_dict(), config=cfg.echo_dict(), seed=cfg.seed
    )

    monotone = fit_monotone_map(strata)
    tables.write_json(
        cfg.path("monotone_map"), monotone.to_dict(), config=cfg.echo_dict(), seed=cfg.seed
    )

    # rank diagnostics need ground truth; only available for simulated runs
    truth_path, effects_path = cfg.path("truth"), cfg.path("effects")
    if truth_path.exists() and effects_path.exists():
        truth = tables.read_truth(truth_path)
        estimates = tables.read_effects(effects_path)
        report = rank_preservation_report(truth, estimates, cfg.dgp_spec())
        tables.write_json(
            cfg.path("rank_report"), report.to_dict(), config=cfg.echo_dict(), seed=cfg.seed
        )
    return strata, regression, monotone


def _stage_target(cfg: PipelineConfig, scores=None):
    if scores is None:
        scores = tables.read_scores(cfg.path("scores"))
    chosen = select_targets(scores, cfg.budget_k)
    tables.write_targets(
        ((uid, scores[uid], rank + 1) for rank, uid in enumerate(chosen)),
        cfg.path("targets"),
    )
    return chosen


def _stage_report(cfg: PipelineConfig):
    lines = [f"panelift {__version__} run report (backend: {get_backend()})", ""]
    rr_path = cfg.path("rank_report")
    if rr_path.exists():
        rr = tables.read_json(rr_path)
        lines.append(
            "rank agreement: kendall_tau=%.4f spearman_rho=%.4f "
            "sufficient_fraction=%.4f necessary_violations=%d"
            % (
                rr["kendall_tau"],
                rr["spearman_rho"],
                rr["sufficient_condition_fraction"],
                rr["necessary_condition_violations"],
            )
        )
    strata_path = cfg.path("strata")
    if strata_path.exists():
        strata = tables.read_strata(strata_path)
        lines.append("")
        lines.append("stratum  n_treated  n_control        ate     stderr")
        for s in strata:
            lines.append(
                f"{s.stratum_index:7d}  {s.n_treated:9d}  {s.n_control:9d}  "
                f"{s.ate:9.5f}  {s.stderr:9.5f}"
            )
    reg_path = cfg.path("regression")
    if reg_path.exists():
        reg = tables.read_json(reg_path)
        lines.append("")
        lines.append("interaction regression (n=%d, dof=%d):" % (reg["n"], reg["dof"]))
        for c in reg["coefficients"]:
            lines.append(
                f"  {c['name']:<18s} est={c['estimate']: .6f} "
                f"se={c['stderr']:.6f} t={c['t_stat']: .3f} p={c['p_value']:.3e}"
            )
    targets_path = cfg.path("targets")
    if targets_path.exists():
        n_targets = max(0, sum(1 for _ in open(targets_path, encoding="utf-8")) - 1)
        lines.append("")
        lines.append(f"targets selected: {n_targets} (budget {cfg.budget_k})")
    text = "\n".join(lines) + "\n"
    with tables.atomic_write(cfg.path("report")) as fh:
        fh.write(text)
    return text


def _run_pipeline(cfg: PipelineConfig):
    tables.write_json(cfg.path("run_config"), {}, config=cfg.echo_dict(), seed=cfg.seed)
    _units, panel, experiment = _stage_simulate(cfg)
    estimates, _skips = _stage_fit(cfg, panel)
    label_ids, labels = _stage_label(cfg, estimates)
    _model, _log = _stage_train(cfg, label_ids, labels)
    scores = _stage_score(cfg, _model)
    _stage_analyze(cfg, experiment, scores)
    _stage_target(cfg, scores)


SUBCOMMANDS = (
    "simulate",
    "fit",
    "label",
    "train",
    "score",
    "analyze",
    "target",
    "pipeline",
    "report",
)


def run_subcommand(name: str, cfg: PipelineConfig) -> int:
    if name == "simulate":
        _stage_simulate(cfg)
    elif name == "fit":
        _stage_fit(cfg)
    elif name == "label":
        _stage_label(cfg)
    elif name == "train":
        _stage_train(cfg)
    elif name == "score":
        _stage_score(cfg)
    elif name == "analyze":
        _stage_analyze(cfg)
    elif name == "target":
        _stage_target(cfg)
    elif name == "pipeline":
        _run_pipeline(cfg)
    elif name == "report":
        print(_stage_report(cfg), end="")
    else:
        raise PaneliftError(f"unknown subcommand {name!r}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="panelift",
        description="Panel-data uplift scoring with experimental calibration.",
    )
    parser.add_argument("--version", action="version", version=f"panelift {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "generate a synthetic cohort: panel, covariates, experiment, truth",
        "fit": "fit per-unit regressions from panel.csv -> effects.csv, skips.csv",
        "label": "top-quantile labels from effects.csv -> labels.csv",
        "train": "train the score model from covariates.csv + labels.csv -> model.json",
        "score": "score all units -> scores.csv",
        "analyze": "stratified effects, interaction regression, monotone map, rank report",
        "target": "select the top-scored units under the budget -> targets.csv",
        "pipeline": "run all stages in order",
        "report": "print and write a plain-text run summary",
    }
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", metavar="PATH", help="YAML config file")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--threads", type=int, help="worker cap; results identical for any value")
        p.add_argument("--quantile", type=float, help="top-quantile label fraction")
        p.add_argument("--strata", type=int, help="number of score strata")
        p.add_argument("--min-obs", dest="min_obs", type=int, help="minimum rows per unit fit")
        p.add_argument("--budget", type=int, help="targeting budget k")
        p.add_argument("--out", metavar="DIR", help="output directory")
    return parser


def _resolve_config(args) -> PipelineConfig:
    if args.config:
        cfg = PipelineConfig.from_file(args.config)
    else:
        cfg = PipelineConfig()
    cfg = apply_env_overrides(cfg)
    return apply_flag_overrides(cfg, args)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _resolve_config(args)
        return run_subcommand(args.command, cfg)
    except PaneliftError as exc:
        record = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        if isinstance(exc, InputFileError):
            record["error"]["path"] = exc.path
            record["error"]["line"] = exc.line
            if getattr(exc, "column", None) is not None:
                record["error"]["column"] = exc.column
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
