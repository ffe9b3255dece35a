"""CSV and JSON artifact IO.

Fixed column schemas, UTF-8, '.' decimal separator, shortest round-trip
formatting for reals (repr), atomic writes (temp file + rename in the
same directory). Reads go through pandas for speed; malformed input is
re-scanned line by line to report the first offending line.
"""

from __future__ import annotations

import json
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pandas as pd

from .dgp import ExperimentDataset, PanelDataset
from .errors import InputFileError, SchemaError, ValidationError
from .expanalysis import StratumReport
from .learner import GbdtModel
from .panel import SkipRecord, UnitEffectEstimate

PANEL_COLUMNS = ("unit_id", "t", "x", "y")  # + v1..vk
EXPERIMENT_COLUMNS = ("unit_id", "treated", "y_pre", "y_post")
TRUTH_COLUMNS = ("unit_id", "a", "theta", "mu", "beta", "psi", "gamma")
EFFECTS_COLUMNS = ("unit_id", "beta_hat", "intercept", "stderr_beta", "n_obs", "r_squared")
SKIPS_COLUMNS = ("unit_id", "reason")
LABELS_COLUMNS = ("unit_id", "label")
SCORES_COLUMNS = ("unit_id", "score")
STRATA_COLUMNS = (
    "stratum_index",
    "score_low",
    "score_high",
    "n_treated",
    "n_control",
    "ate",
    "stderr",
)
TARGETS_COLUMNS = ("unit_id", "score", "rank")
FIGURE_COLUMNS = ("stratum_index", "score_mid", "ate", "ci_low", "ci_high")

JSON_FORMAT_VERSION = 1


@contextmanager
def atomic_write(path, mode="w"):
    """Write to a temp file in the target directory, then rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, encoding="utf-8", newline="") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    s = str(value)
    if any(ch in s for ch in ",\n\r\""):
        raise ValidationError(f"value {s!r} cannot be written to CSV (delimiter/newline)")
    return s


def write_csv(path, header, rows) -> None:
    """Write rows (iterable of tuples) under a fixed header, atomically."""
    with atomic_write(path) as fh:
        fh.write(",".join(header) + "\n")
        fh.writelines(",".join(_fmt(v) for v in row) + "\n" for row in rows)


def write_json(path, payload: dict, config: dict | None = None, seed=None) -> None:
    """Write a JSON artifact embedding the producing config and seed."""
    doc = {"format_version": JSON_FORMAT_VERSION}
    if config is not None:
        doc["config"] = config
    if seed is not None:
        doc["seed"] = seed
    doc.update(payload)
    with atomic_write(path) as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def read_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise InputFileError(f"input file not found: {path}", path=path)
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputFileError(
            f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}", path=path, line=exc.lineno
        ) from exc


def _find_bad_line(path, numeric_cols) -> tuple[int, str]:
    """Scan for the first offending line of a malformed CSV (slow path)."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        for lineno, line in enumerate(fh, start=2):
            fields = line.rstrip("\n").split(",")
            if len(fields) != len(header):
                return lineno, f"expected {len(header)} fields, found {len(fields)}"
            for col in numeric_cols:
                if col in header:
                    raw = fields[header.index(col)]
                    try:
                        float(raw)
                    except ValueError:
                        return lineno, f"column {col!r}: non-numeric value {raw!r}"
    return 0, "unknown parse failure"


def _read_table(path, required, numeric_cols) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise InputFileError(f"input file not found: {path}", path=path)
    try:
        df = pd.read_csv(path, comment="#", float_precision="round_trip")
    except Exception as exc:
        lineno, detail = _find_bad_line(path, numeric_cols)
        raise InputFileError(
            f"{path}: line {lineno}: {detail}", path=path, line=lineno
        ) from exc
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise SchemaError(
            f"{path}: missing required columns {missing} (found {list(df.columns)})",
            path=path,
            column=missing[0],
        )
    for col in numeric_cols:
        if col in df.columns and not np.issubdtype(df[col].dtype, np.number):
            lineno, detail = _find_bad_line(path, numeric_cols)
            raise SchemaError(
                f"{path}: column {col!r} is not numeric (line {lineno}: {detail})",
                path=path,
                column=col,
            )
        if col in df.columns and df[col].isna().any():
            lineno = int(df.index[df[col].isna()][0]) + 2
            raise SchemaError(
                f"{path}: column {col!r} has a missing value at line {lineno}",
                path=path,
                column=col,
                line=lineno,
            )
    return df


def _unit_id_array(series: pd.Series) -> np.ndarray:
    if np.issubdtype(series.dtype, np.integer):
        return series.to_numpy(dtype=np.int64)
    if np.issubdtype(series.dtype, np.floating):
        vals = series.to_numpy()
        if np.all(vals == np.round(vals)):
            return vals.astype(np.int64)
    return series.astype(str).to_numpy()


# ---------------------------------------------------------------------------
# panel


def write_panel(dataset: PanelDataset, path) -> None:
    k = dataset.v.shape[1] if dataset.v is not None else 0
    header = list(PANEL_COLUMNS) + [f"v{j + 1}" for j in range(k)]
    ids = dataset.unit_ids
    uid = ids[dataset.row_unit]

    def rows():
        for i in range(dataset.n_rows):
            row = (uid[i], dataset.t[i], dataset.x[i], dataset.y[i])
            if k:
                row = row + tuple(dataset.v[i])
            yield row

    write_csv(path, header, rows())


def read_panel(path) -> PanelDataset:
    try:
        v_probe = pd.read_csv(path, nrows=0, comment="#")
        v_cols = [c for c in v_probe.columns if c.startswith("v") and c[1:].isdigit()]
    except Exception:
        v_cols = []
    df = _read_table(path, PANEL_COLUMNS, ("t", "x", "y", *v_cols))
    ids = _unit_id_array(df["unit_id"])
    unit_ids, row_unit = np.unique(ids, return_inverse=True)
    # preserve first-appearance order of units
    first_pos = np.full(len(unit_ids), len(ids), dtype=np.int64)
    np.minimum.at(first_pos, row_unit, np.arange(len(ids)))
    rank = np.argsort(np.argsort(first_pos, kind="stable"), kind="stable")
    unit_ids = unit_ids[np.argsort(first_pos, kind="stable")]
    row_unit = rank[row_unit]
    order = np.argsort(row_unit, kind="stable")
    v = df[v_cols].to_numpy(dtype=np.float64)[order] if v_cols else None
    return PanelDataset(
        unit_ids=unit_ids,
        row_unit=row_unit[order],
        t=df["t"].to_numpy(dtype=np.int64)[order],
        x=df["x"].to_numpy(dtype=np.float64)[order],
        y=df["y"].to_numpy(dtype=np.float64)[order],
        v=v,
    )


# ---------------------------------------------------------------------------
# covariates


def write_covariates(unit_ids, matrix, names, path) -> None:
    matrix = np.asarray(matrix)
    header = ["unit_id"] + list(names)
    write_csv(
        path,
        header,
        ((uid, *matrix[i]) for i, uid in enumerate(np.asarray(unit_ids).tolist())),
    )


def read_covariates(path):
    df = _read_table(path, ("unit_id",), ())
    names = [c for c in df.columns if c != "unit_id"]
    if not names:
        raise SchemaError(f"{path}: no covariate columns found", path=path, column=None)
    for col in names:
        if not np.issubdtype(df[col].dtype, np.number):
            raise SchemaError(f"{path}: column {col!r} is not numeric", path=path, column=col)
    ids = _unit_id_array(df["unit_id"])
    return ids, df[names].to_numpy(dtype=np.float64), tuple(names)


# ---------------------------------------------------------------------------
# experiment


def write_experiment(exp: ExperimentDataset, path) -> None:
    write_csv(
        path,
        EXPERIMENT_COLUMNS,
        (
            (uid, exp.treated[i], exp.y_pre[i], exp.y_post[i])
            for i, uid in enumerate(exp.unit_ids.tolist())
        ),
    )


def read_experiment(path) -> ExperimentDataset:
    df = _read_table(path, EXPERIMENT_COLUMNS, ("treated", "y_pre", "y_post"))
    return ExperimentDataset(
        unit_ids=_unit_id_array(df["unit_id"]),
        treated=df["treated"].to_numpy() != 0,
        y_pre=df["y_pre"].to_numpy(dtype=np.float64),
        y_post=df["y_post"].to_numpy(dtype=np.float64),
    )


# ---------------------------------------------------------------------------
# truth


def write_truth(units, path) -> None:
    write_csv(
        path,
        TRUTH_COLUMNS,
        ((u.unit_id, u.affinity, u.theta, u.mu, u.beta, u.psi, u.gamma) for u in units),
    )


def read_truth(path):
    from .dgp import UnitParams

    df = _read_table(path, TRUTH_COLUMNS, TRUTH_COLUMNS[1:])
    ids = _unit_id_array(df["unit_id"])
    return [
        UnitParams(
            unit_id=ids[i],
            affinity=float(df["a"].iloc[i]),
            theta=float(df["theta"].iloc[i]),
            mu=float(df["mu"].iloc[i]),
            beta=float(df["beta"].iloc[i]),
            psi=float(df["psi"].iloc[i]),
            gamma=float(df["gamma"].iloc[i]),
        )
        for i in range(len(df))
    ]


# ---------------------------------------------------------------------------
# effects / skips / labels / scores


def write_effects(estimates, path) -> None:
    write_csv(
        path,
        EFFECTS_COLUMNS,
        (
            (e.unit_id, e.beta_hat, e.intercept, e.stderr_beta, e.n_obs, e.r_squared)
            for e in estimates
        ),
    )


def read_effects(path) -> list[UnitEffectEstimate]:
    df = _read_table(path, EFFECTS_COLUMNS, EFFECTS_COLUMNS[1:])
    ids = _unit_id_array(df["unit_id"])
    return [
        UnitEffectEstimate(
            unit_id=ids[i],
            beta_hat=float(df["beta_hat"].iloc[i]),
            intercept=float(df["intercept"].iloc[i]),
            stderr_beta=float(df["stderr_beta"].iloc[i]),
            n_obs=int(df["n_obs"].iloc[i]),
            r_squared=float(df["r_squared"].iloc[i]),
        )
        for i in range(len(df))
    ]


def write_skips(skips, path) -> None:
    write_csv(path, SKIPS_COLUMNS, ((s.unit_id, s.reason) for s in skips))


def read_skips(path) -> list[SkipRecord]:
    df = _read_table(path, SKIPS_COLUMNS, ())
    ids = _unit_id_array(df["unit_id"])
    return [SkipRecord(ids[i], str(df["reason"].iloc[i])) for i in range(len(df))]


def write_labels(unit_ids, labels, path) -> None:
    write_csv(
        path,
        LABELS_COLUMNS,
        ((uid, int(labels[i])) for i, uid in enumerate(np.asarray(unit_ids).tolist())),
    )


def read_labels(path):
    df = _read_table(path, LABELS_COLUMNS, ("label",))
    labels = df["label"].to_numpy(dtype=np.int64)
    if not np.isin(labels, (0, 1)).all():
        raise SchemaError(f"{path}: labels must be 0/1", path=path, column="label")
    return _unit_id_array(df["unit_id"]), labels


def write_scores(unit_ids, scores, path) -> None:
    write_csv(
        path,
        SCORES_COLUMNS,
        ((uid, float(scores[i])) for i, uid in enumerate(np.asarray(unit_ids).tolist())),
    )


def read_scores(path) -> dict:
    df = _read_table(path, SCORES_COLUMNS, ("score",))
    ids = _unit_id_array(df["unit_id"])
    return dict(zip(ids.tolist(), df["score"].to_numpy(dtype=np.float64).tolist()))


# ---------------------------------------------------------------------------
# analysis artifacts


def write_strata(strata, path) -> None:
    write_csv(
        path,
        STRATA_COLUMNS,
        (
            (
                s.stratum_index,
                s.score_low,
                s.score_high,
                s.n_treated,
                s.n_control,
                s.ate,
                s.stderr,
            )
            for s in strata
        ),
    )


def read_strata(path) -> list[StratumReport]:
    df = _read_table(path, STRATA_COLUMNS, ())
    return [
        StratumReport(
            stratum_index=int(df["stratum_index"].iloc[i]),
            score_low=float(df["score_low"].iloc[i]),
            score_high=float(df["score_high"].iloc[i]),
            n_treated=int(df["n_treated"].iloc[i]),
            n_control=int(df["n_control"].iloc[i]),
            ate=float(df["ate"].iloc[i]),
            stderr=float(df["stderr"].iloc[i]),
        )
        for i in range(len(df))
    ]


def write_targets(rows, path) -> None:
    """rows: iterable of (unit_id, score, rank)."""
    write_csv(path, TARGETS_COLUMNS, rows)


def write_model(model: GbdtModel, path, config: dict | None = None, seed=None, training: dict | None = None) -> None:
    payload = model.to_dict()
    if training is not None:
        payload["training"] = training
    write_json(path, payload, config=config, seed=seed)


def read_model(path) -> GbdtModel:
    return GbdtModel.from_dict(read_json(path))
