"""Dataset ingestion, normalization, windowing, and partitioning.

CSV tables (optional auto-detected header) are split into features and a
target column, partitioned into train/test, and min-max normalized to [0, 1]
using statistics computed from the training split only. Scalar time series
are turned into supervised rows by a sliding-window (Takens) embedding before
splitting. Four benchmark datasets are resolvable by name through a registry;
files missing from the package are searched in ``BAYESMC_DATA_DIR`` so
externally obtained copies can be dropped in.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataError, DimensionError, InvalidParameterError

EMBED_MODES = ("horizon", "stride")

# Search locations for benchmark files, in priority order: an explicit
# directory, the BAYESMC_DATA_DIR environment variable, then package data.
DATA_DIR_ENV = "BAYESMC_DATA_DIR"

FLOAT_FORMAT = "%.17g"  # round-trips float64 exactly


@dataclass(frozen=True)
class EmbeddingConfig:
    """Sliding-window reconstruction settings: window size D, lag T."""

    d: int = 4
    t: int = 2
    mode: str = "horizon"

    def __post_init__(self):
        if self.d < 1 or self.t < 1:
            raise InvalidParameterError("embedding requires D >= 1 and T >= 1")
        if self.mode not in EMBED_MODES:
            raise InvalidParameterError(
                f"embedding mode must be one of {EMBED_MODES}")


@dataclass
class Dataset:
    """Normalized train/test partition with its normalization metadata.

    Features (and the regression target) are scaled to [0, 1] by train-split
    min/max; classification targets are class indices in [0, K).
    """

    name: str
    task: str
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    feature_mins: np.ndarray
    feature_maxs: np.ndarray
    target_min: "float | None" = None
    target_max: "float | None" = None
    label_names: "list[str] | None" = None
    train_indices: np.ndarray = field(default_factory=lambda: np.array([], int))
    test_indices: np.ndarray = field(default_factory=lambda: np.array([], int))

    @property
    def input_num(self) -> int:
        return self.x_train.shape[1]

    @property
    def n_classes(self) -> int:
        if self.task != "classification":
            raise InvalidParameterError("n_classes applies to classification")
        return int(max(self.y_train.max(), self.y_test.max())) + 1

    @property
    def output_num(self) -> int:
        return self.n_classes if self.task == "classification" else 1


def _is_number(cell: str) -> bool:
    try:
        float(cell)
        return True
    except (TypeError, ValueError):
        return False


def load_table(path) -> pd.DataFrame:
    """Read a comma-delimited file as strings, auto-detecting a header row.

    The first row is treated as a header when some column starts with a
    non-numeric cell there but holds a numeric value in the second row.
    Headerless files get positional column names c0, c1, ...
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such data file: {path}")
    try:
        df = pd.read_csv(path, header=None, dtype=str,
                         skipinitialspace=True, keep_default_na=False)
    except Exception as exc:
        raise DataError(f"cannot parse {path}: {exc}") from exc
    if df.empty:
        raise DataError(f"{path} contains no rows")
    has_header = len(df) > 1 and any(
        not _is_number(df.iloc[0, j]) and _is_number(df.iloc[1, j])
        for j in range(df.shape[1]))
    if has_header:
        df.columns = [str(v).strip() for v in df.iloc[0]]
        df = df.iloc[1:].reset_index(drop=True)
    else:
        df.columns = [f"c{j}" for j in range(df.shape[1])]
    return df


load_csv = load_table


def _numeric_column(series: pd.Series, path, colname) -> np.ndarray:
    values = pd.to_numeric(series, errors="coerce").to_numpy(dtype=float)
    bad = np.flatnonzero(np.isnan(values))
    if bad.size:
        row = int(bad[0])
        cell = str(series.iloc[row])
        what = ("missing value" if cell.strip() in ("", "nan", "NaN", "NA")
                else f"non-numeric value {cell!r}")
        raise DataError(
            f"{path}: {what} at data row {row}, column {colname!r}")
    return values


def _resolve_target(df: pd.DataFrame, target_column) -> str:
    if target_column is None:
        return df.columns[-1]
    if isinstance(target_column, int):
        if not -df.shape[1] <= target_column < df.shape[1]:
            raise DataError(f"target column index {target_column} out of range")
        return df.columns[target_column]
    if target_column not in df.columns:
        raise DataError(f"no column named {target_column!r}; "
                        f"columns are {list(df.columns)}")
    return target_column


def split_xy(df: pd.DataFrame, task: str, target_column=None, path="<table>",
             label_map: "dict | None" = None):
    """Separate the target column from the features.

    Returns ``(x, y, label_names)``. Classification targets may be integers
    (remapped to 0..K-1 by sorted value) or category strings (mapped in file
    order of first appearance, unless an explicit ``label_map`` is given).
    """
    target = _resolve_target(df, target_column)
    feature_cols = [c for c in df.columns if c != target]
    if not feature_cols:
        raise DataError("table has no feature columns besides the target")
    x = np.column_stack([
        _numeric_column(df[c], path, c) for c in feature_cols])
    raw = df[target]

    if task == "regression":
        return x, _numeric_column(raw, path, target), None

    if label_map is not None:
        unknown = sorted(set(raw) - set(label_map))
        if unknown:
            raise DataError(f"{path}: unmapped class labels {unknown}")
        names = [k for k, _ in sorted(label_map.items(), key=lambda kv: kv[1])]
        return x, raw.map(label_map).to_numpy(dtype=int), names

    if all(_is_number(v) for v in raw):
        values = _numeric_column(raw, path, target)
        if not np.all(values == np.round(values)):
            raise DataError(f"{path}: classification targets must be "
                            "integers or category strings")
        levels = np.unique(values.astype(int))
        remap = {v: i for i, v in enumerate(levels.tolist())}
        y = np.array([remap[v] for v in values.astype(int)], dtype=int)
        return x, y, [str(v) for v in levels.tolist()]

    names: "list[str]" = []
    seen: dict = {}
    for v in raw:
        if v not in seen:
            seen[v] = len(names)
            names.append(v)
    return x, raw.map(seen).to_numpy(dtype=int), names


def minmax_normalize(x, mins=None, maxs=None):
    """Scale columns to [0, 1]: x' = (x - min)/(max - min).

    Statistics are computed from ``x`` itself unless given (pass the training
    split's to transform test data). Constant columns map to 0.
    """
    x = np.asarray(x, dtype=float)
    if mins is None:
        mins = x.min(axis=0)
        maxs = x.max(axis=0)
    mins = np.asarray(mins, dtype=float)
    maxs = np.asarray(maxs, dtype=float)
    if np.any(maxs < mins):
        raise InvalidParameterError("each column requires max >= min")
    span = maxs - mins
    safe = np.where(span == 0, 1.0, span)
    out = (x - mins) / safe
    out = np.where(span == 0, 0.0, out)
    return out, mins, maxs


def denormalize_target(y, target_min, target_max):
    """Invert min-max scaling of a regression target."""
    return np.asarray(y, dtype=float) * (target_max - target_min) + target_min


def takens_embed(series, config: EmbeddingConfig = EmbeddingConfig()):
    """Supervised rows from a scalar series by sliding-window reconstruction.

    horizon mode (default): row i = [s(i), ..., s(i+D-1)] with target
    s(i+D-1+T), the value T steps after the window end — one row per valid i,
    giving len - D - T + 1 rows.

    stride mode: windows advance by T (row starts 0, T, 2T, ...) and the
    target is the next value s(start+D) after each window.
    """
    s = np.asarray(series, dtype=float).ravel()
    d, t = config.d, config.t
    if config.mode == "horizon":
        count = s.size - d - t + 1
        if count < 1:
            raise DataError(
                f"series of length {s.size} too short for D={d}, T={t}")
        x = np.lib.stride_tricks.sliding_window_view(s, d)[:count].copy()
        y = s[d - 1 + t:].copy()
    else:
        starts = np.arange(0, s.size - d, t)
        if starts.size < 1:
            raise DataError(
                f"series of length {s.size} too short for D={d}, T={t}")
        x = np.stack([s[i:i + d] for i in starts])
        y = s[starts + d]
    return x, y


def train_test_split(n_rows: int, fraction: float, shuffle: bool, seed: int):
    """Deterministic index partition: first ``int(n*fraction)`` (optionally
    seeded-shuffled) indices are train, the rest test."""
    if not 0.0 < fraction < 1.0:
        raise InvalidParameterError("train fraction must lie in (0, 1)")
    if n_rows < 1:
        raise DataError("cannot split an empty dataset")
    n_train = int(n_rows * fraction)
    if n_train < 1 or n_train >= n_rows:
        raise DataError(
            f"fraction {fraction} leaves an empty partition for {n_rows} rows")
    indices = np.arange(n_rows)
    if shuffle:
        indices = np.random.default_rng(seed).permutation(n_rows)
    return indices[:n_train], indices[n_train:]


def build_dataset(x, y, task: str, name: str = "data", train_fraction: float = 0.6,
                  shuffle: bool = True, seed: int = 1,
                  label_names=None) -> Dataset:
    """Split, then normalize by train statistics, yielding a Dataset.

    Features are always min-max scaled; the target is scaled only for
    regression. Classification targets must already be indices in [0, K).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise DimensionError("x must be a 2-D feature matrix")
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != x.shape[0]:
        raise DimensionError("y must be a vector with one entry per row of x")
    train_idx, test_idx = train_test_split(
        x.shape[0], train_fraction, shuffle, seed)
    x_train, f_mins, f_maxs = minmax_normalize(x[train_idx])
    x_test, _, _ = minmax_normalize(x[test_idx], f_mins, f_maxs)
    if task == "regression":
        y = y.astype(float)
        y_train, t_min, t_max = minmax_normalize(y[train_idx].reshape(-1, 1))
        y_test, _, _ = minmax_normalize(y[test_idx].reshape(-1, 1), t_min, t_max)
        return Dataset(
            name=name, task=task,
            x_train=x_train, y_train=y_train[:, 0],
            x_test=x_test, y_test=y_test[:, 0],
            feature_mins=f_mins, feature_maxs=f_maxs,
            target_min=float(t_min[0]), target_max=float(t_max[0]),
            train_indices=train_idx, test_indices=test_idx)
    if task != "classification":
        raise InvalidParameterError(f"unknown task {task!r}")
    y = y.astype(int)
    if y.min() < 0:
        raise DataError("classification targets must be indices in [0, K)")
    return Dataset(
        name=name, task=task,
        x_train=x_train, y_train=y[train_idx],
        x_test=x_test, y_test=y[test_idx],
        feature_mins=f_mins, feature_maxs=f_maxs,
        label_names=list(label_names) if label_names is not None else None,
        train_indices=train_idx, test_indices=test_idx)


def save_dataset(ds: Dataset, out_dir, stem: str = "dataset"):
    """Persist a normalized dataset as CSV plus a JSON metadata sidecar.

    The CSV holds train rows then test rows (columns x0.., y); the sidecar
    records the split boundaries, original row indices, normalization bounds,
    and label names, which is everything needed to reload or denormalize.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    x = np.vstack([ds.x_train, ds.x_test])
    y = np.concatenate([ds.y_train, ds.y_test])
    frame = pd.DataFrame(x, columns=[f"x{j}" for j in range(x.shape[1])])
    frame["y"] = y
    csv_path = out_dir / f"{stem}.csv"
    frame.to_csv(csv_path, index=False, float_format=FLOAT_FORMAT)
    meta = {
        "name": ds.name,
        "task": ds.task,
        "n_train": int(ds.x_train.shape[0]),
        "n_test": int(ds.x_test.shape[0]),
        "feature_mins": ds.feature_mins.tolist(),
        "feature_maxs": ds.feature_maxs.tolist(),
        "target_min": ds.target_min,
        "target_max": ds.target_max,
        "label_names": ds.label_names,
        "train_indices": ds.train_indices.tolist(),
        "test_indices": ds.test_indices.tolist(),
    }
    meta_path = out_dir / f"{stem}_meta.json"
    meta_path.write_text(json.dumps(meta, indent=2))
    return csv_path, meta_path


def load_dataset(csv_path, meta_path) -> Dataset:
    """Reload a dataset persisted by :func:`save_dataset`."""
    csv_path, meta_path = Path(csv_path), Path(meta_path)
    if not csv_path.is_file() or not meta_path.is_file():
        raise DataError(f"missing dataset files {csv_path} / {meta_path}")
    meta = json.loads(meta_path.read_text())
    frame = pd.read_csv(csv_path)
    x = frame[[c for c in frame.columns if c != "y"]].to_numpy(dtype=float)
    y = frame["y"].to_numpy()
    n_train = meta["n_train"]
    if meta["task"] == "classification":
        y = y.astype(int)
    return Dataset(
        name=meta["name"], task=meta["task"],
        x_train=x[:n_train], y_train=y[:n_train],
        x_test=x[n_train:], y_test=y[n_train:],
        feature_mins=np.asarray(meta["feature_mins"], dtype=float),
        feature_maxs=np.asarray(meta["feature_maxs"], dtype=float),
        target_min=meta["target_min"], target_max=meta["target_max"],
        label_names=meta["label_names"],
        train_indices=np.asarray(meta["train_indices"], dtype=int),
        test_indices=np.asarray(meta["test_indices"], dtype=int))


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


# --- benchmark registry ----------------------------------------------------

BENCHMARK_NOTES = {
    "sunspot": "vendored: yearly mean sunspot numbers 1700-2008 (SIDC)",
    "iris": "vendored: the canonical 150-flower measurement set",
    "abalone": (
        "not vendored: place the canonical UCI file (abalone.data or "
        "abalone.csv, 4177 rows: sex + 7 morphometrics + rings) in the "
        "directory named by BAYESMC_DATA_DIR or passed as data_dir"),
    "ionosphere": (
        "not vendored: place the canonical UCI file (ionosphere.data or "
        "ionosphere.csv, 351 rows: 34 radar features + g/b label) in the "
        "directory named by BAYESMC_DATA_DIR or passed as data_dir"),
}

BENCHMARKS = {
    "sunspot": {"task": "regression", "kind": "series",
                "files": ("sunspot.csv",), "column": "sunspots",
                "shuffle": False},
    "abalone": {"task": "regression", "kind": "tabular",
                "files": ("abalone.csv", "abalone.data"), "shuffle": True},
    "iris": {"task": "classification", "kind": "tabular",
             "files": ("iris.csv",), "target": "species", "shuffle": True},
    "ionosphere": {"task": "classification", "kind": "tabular",
                   "files": ("ionosphere.csv", "ionosphere.data"),
                   "label_map": {"g": 1, "b": 0}, "shuffle": True},
}

ABALONE_COLUMNS = ["sex", "length", "diameter", "height", "whole_weight",
                   "shucked_weight", "viscera_weight", "shell_weight", "rings"]


def _find_benchmark_file(name: str, data_dir=None) -> Path:
    entry = BENCHMARKS[name]
    candidates = []
    for base in (data_dir, os.environ.get(DATA_DIR_ENV)):
        if base:
            candidates += [Path(base) / f for f in entry["files"]]
    packaged = resources.files("bayesmc") / "datasets"
    candidates += [Path(str(packaged / f)) for f in entry["files"]]
    for c in candidates:
        if c.is_file():
            return c
    raise DataError(
        f"dataset {name!r} not found (searched {[str(c) for c in candidates]}). "
        + BENCHMARK_NOTES[name])


def load_benchmark(name: str, data_dir=None, train_fraction: float = 0.6,
                   seed: int = 1, embedding: "EmbeddingConfig | None" = None,
                   abalone_sex: str = "drop",
                   shuffle: "bool | None" = None) -> Dataset:
    """Load one of the named benchmark datasets as a normalized Dataset.

    Time-series benchmarks are embedded (default D=4, T=2) and split
    chronologically; tabular benchmarks are shuffled with the given seed.
    ``abalone_sex`` chooses "drop" (default) or "onehot" for the categorical
    sex column.
    """
    if name not in BENCHMARKS:
        raise DataError(
            f"unknown dataset {name!r}; known: {sorted(BENCHMARKS)}")
    entry = BENCHMARKS[name]
    path = _find_benchmark_file(name, data_dir)
    df = load_table(path)
    if shuffle is None:
        shuffle = entry["shuffle"]

    if entry["kind"] == "series":
        series = _numeric_column(df[entry["column"]], path, entry["column"])
        x, y = takens_embed(series, embedding or EmbeddingConfig())
        return build_dataset(x, y, "regression", name=name,
                             train_fraction=train_fraction, shuffle=shuffle,
                             seed=seed)

    if name == "abalone":
        if df.shape[1] != len(ABALONE_COLUMNS):
            raise DataError(
                f"{path}: expected {len(ABALONE_COLUMNS)} columns "
                f"(sex + 7 morphometrics + rings), found {df.shape[1]}")
        df = df.set_axis(ABALONE_COLUMNS, axis=1)
        numeric = np.column_stack([
            _numeric_column(df[c], path, c) for c in ABALONE_COLUMNS[1:-1]])
        if abalone_sex == "drop":
            x = numeric
        elif abalone_sex == "onehot":
            levels = sorted(set(df["sex"]))
            hot = np.column_stack([
                (df["sex"] == lv).to_numpy(dtype=float) for lv in levels])
            x = np.hstack([hot, numeric])
        else:
            raise InvalidParameterError(
                "abalone_sex must be 'drop' or 'onehot'")
        y = _numeric_column(df["rings"], path, "rings")
        return build_dataset(x, y, "regression", name=name,
                             train_fraction=train_fraction, shuffle=shuffle,
                             seed=seed)

    x, y, labels = split_xy(df, "classification",
                            target_column=entry.get("target"),
                            path=path, label_map=entry.get("label_map"))
    return build_dataset(x, y, "classification", name=name,
                         train_fraction=train_fraction, shuffle=shuffle,
                         seed=seed, label_names=labels)
