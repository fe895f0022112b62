"""Service layer: request/response schemas, run orchestration, FastAPI app.

Every workflow (demo, sample, predict, diagnose, window) is a handler
function taking a pydantic request model and returning a pydantic response
model. The CLI calls these handlers in-process; ``create_app`` exposes the
same handlers as POST endpoints so the toolkit can run as a service.

A ``sample`` run persists everything needed to reproduce and analyze it:
per-chain posterior and trace CSVs, the normalized dataset plus metadata
sidecar, per-parameter summaries, and a :class:`RunManifest` JSON from which
the exact run can be replayed bit-identically. File paths inside the manifest
are relative to the manifest's own directory.
"""

from __future__ import annotations

import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
import pandas as pd
from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, field_validator

from . import __version__
from .data import (
    EmbeddingConfig,
    FLOAT_FORMAT,
    build_dataset,
    Dataset,
    denormalize_target,
    file_sha256,
    load_benchmark,
    load_dataset,
    load_table,
    save_dataset,
    split_xy,
    takens_embed,
    _numeric_column,
    _resolve_target,
)
from .diagnostics import model_draws, posterior_summary
from .errors import BayesmcError, DataError, DimensionError, InvalidParameterError
from .models import DEFAULT_HIDDEN_NUM, ModelSpec, param_names
from .sampling import (
    Chain,
    ChainSet,
    FAMILY_DEFAULTS,
    SamplerConfig,
    run_multi_chain,
    sample_binomial_demo,
)


class _Request(BaseModel):
    """Base for request models: unknown keys are validation errors."""

    model_config = ConfigDict(extra="forbid")


def _coerce_column(v):
    if isinstance(v, str):
        stripped = v.lstrip("-")
        if stripped.isdigit():
            return int(v)
    return v


# --- demo -------------------------------------------------------------------

class DemoRequest(_Request):
    k: int = 50
    n: int = 100
    n_samples: int = 10000
    burn_in_fraction: float = 0.25
    seed: int = 1
    out_dir: str = "runs/demo"


class DemoResponse(BaseModel):
    mean: float
    std: float
    ci_lo: float
    ci_hi: float
    n_kept: int
    posterior_path: str
    summary_path: str


def handle_demo(req: DemoRequest) -> DemoResponse:
    posterior = sample_binomial_demo(
        req.k, req.n, req.n_samples, req.burn_in_fraction, seed=req.seed)
    out_dir = Path(req.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    posterior_path = out_dir / "posterior.csv"
    pd.DataFrame({"p": posterior}).to_csv(
        posterior_path, index=False, float_format=FLOAT_FORMAT)
    ci_lo, ci_hi = np.percentile(posterior, [2.5, 97.5])
    summary = {
        "k": req.k, "n": req.n, "n_samples": req.n_samples,
        "burn_in_fraction": req.burn_in_fraction, "seed": req.seed,
        "n_kept": int(posterior.size),
        "mean": float(posterior.mean()), "std": float(posterior.std()),
        "ci_lo": float(ci_lo), "ci_hi": float(ci_hi),
    }
    summary_path = out_dir / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2))
    return DemoResponse(
        mean=summary["mean"], std=summary["std"],
        ci_lo=summary["ci_lo"], ci_hi=summary["ci_hi"],
        n_kept=summary["n_kept"],
        posterior_path=str(posterior_path), summary_path=str(summary_path))


# --- sample ------------------------------------------------------------------

class EmbedModel(BaseModel):
    d: int = 4
    t: int = 2
    mode: str = "horizon"


class DatasetSourceModel(BaseModel):
    """Where a dataset came from and how it was prepared (replayable)."""

    kind: Literal["registry", "csv"]
    name: str
    task: Literal["regression", "classification"]
    file: str
    sha256: str
    target_column: Union[int, str, None] = None
    embed: Optional[EmbedModel] = None
    train_fraction: float = 0.6
    shuffle: bool = True
    seed: int = 1
    abalone_sex: str = "drop"


class ModelSpecModel(BaseModel):
    family: Literal["linear", "mlp"]
    task: Literal["regression", "classification"]
    input_num: int
    hidden_num: int
    output_num: int
    learning_rate: float

    def to_spec(self) -> ModelSpec:
        return ModelSpec(family=self.family, task=self.task,
                         input_num=self.input_num, output_num=self.output_num,
                         hidden_num=self.hidden_num,
                         learning_rate=self.learning_rate)


class SamplerConfigModel(BaseModel):
    n_samples: int
    burn_in_fraction: float
    step_theta: float
    step_eta: float
    sigma2_prior: float
    nu1: float
    nu2: float
    use_langevin: bool
    l_prob: float
    sgd_depth: int
    tau2_fixed: Optional[float] = None

    def to_config(self, seed: int) -> SamplerConfig:
        return SamplerConfig(seed=seed, **self.model_dump())


class MetricSummaryModel(BaseModel):
    name: Literal["rmse", "accuracy"]
    train_mean: float
    train_std: float
    test_mean: float
    test_std: float


class RunManifest(BaseModel):
    """Complete record of a sample run; sufficient for bit-identical replay."""

    version: str
    created_at: str
    dataset: DatasetSourceModel
    model: ModelSpecModel
    sampler: SamplerConfigModel
    n_chains: int
    jobs: int
    base_seed: int
    chain_seeds: list
    outputs: dict
    acceptance_rates: list
    langevin_counts: list
    nan_counts: list
    chain_failures: list
    metric: MetricSummaryModel


class SampleRequest(_Request):
    dataset: Optional[str] = None
    csv_path: Optional[str] = None
    target_column: Union[int, str, None] = None
    task: Optional[Literal["regression", "classification"]] = None
    model: Literal["linear", "mlp"] = "linear"
    hidden_num: Optional[int] = None
    n_chains: int = 5
    n_samples: int = 5000
    burn_in_fraction: float = 0.5
    step_theta: Optional[float] = None
    step_eta: Optional[float] = None
    sigma2_prior: Optional[float] = None
    nu1: Optional[float] = None
    nu2: Optional[float] = None
    use_langevin: Optional[bool] = None
    l_prob: float = 0.5
    sgd_depth: int = 1
    learning_rate: Optional[float] = None
    tau2_fixed: Optional[float] = None
    train_fraction: float = 0.6
    shuffle: Optional[bool] = None
    embed_d: int = 4
    embed_t: int = 2
    embed_mode: str = "horizon"
    abalone_sex: str = "drop"
    data_dir: Optional[str] = None
    manifest_path: Optional[str] = None
    seed: int = 1
    jobs: int = 1
    out_dir: str = "runs/sample"

    @field_validator("target_column", mode="before")
    @classmethod
    def _column_index(cls, v):
        return _coerce_column(v)


class SampleResponse(BaseModel):
    manifest_path: str
    metric_name: str
    train_metric_mean: float
    train_metric_std: float
    test_metric_mean: float
    test_metric_std: float
    acceptance_rates: list
    n_kept_total: int
    posterior_paths: list
    trace_paths: list
    chain_failures: list
    manifest: RunManifest


def _resolve_dataset(req: SampleRequest):
    """Build the Dataset plus its replayable source description."""
    if (req.dataset is None) == (req.csv_path is None):
        raise InvalidParameterError(
            "exactly one of 'dataset' (registry name) or 'csv_path' is required")
    if req.dataset is not None:
        from .data import _find_benchmark_file, BENCHMARKS
        if req.dataset not in BENCHMARKS:
            raise DataError(f"unknown dataset {req.dataset!r}; "
                            f"known: {sorted(BENCHMARKS)}")
        entry = BENCHMARKS[req.dataset]
        path = _find_benchmark_file(req.dataset, req.data_dir).resolve()
        embed = (EmbedModel(d=req.embed_d, t=req.embed_t, mode=req.embed_mode)
                 if entry["kind"] == "series" else None)
        source = DatasetSourceModel(
            kind="registry", name=req.dataset, task=entry["task"],
            file=str(path), sha256=file_sha256(path),
            embed=embed, train_fraction=req.train_fraction,
            shuffle=entry["shuffle"] if req.shuffle is None else req.shuffle,
            seed=req.seed, abalone_sex=req.abalone_sex)
    else:
        if req.task is None:
            raise InvalidParameterError("'task' is required with csv_path")
        path = Path(req.csv_path).resolve()
        if not path.is_file():
            raise DataError(f"no such data file: {path}")
        source = DatasetSourceModel(
            kind="csv", name=path.stem, task=req.task,
            file=str(path), sha256=file_sha256(path),
            target_column=req.target_column,
            train_fraction=req.train_fraction,
            shuffle=True if req.shuffle is None else req.shuffle,
            seed=req.seed)
    return _load_from_source(source)


def _load_from_source(source: DatasetSourceModel):
    """Load a dataset from its manifest description, verifying the file."""
    path = Path(source.file)
    if not path.is_file():
        raise DataError(f"dataset file {path} is missing")
    digest = file_sha256(path)
    if digest != source.sha256:
        raise DataError(
            f"dataset file {path} changed since the manifest was written "
            f"(sha256 {digest} != {source.sha256})")
    if source.kind == "registry":
        embedding = (EmbeddingConfig(source.embed.d, source.embed.t,
                                     source.embed.mode)
                     if source.embed else None)
        data = load_benchmark(
            source.name, data_dir=str(path.parent),
            train_fraction=source.train_fraction, seed=source.seed,
            embedding=embedding, abalone_sex=source.abalone_sex,
            shuffle=source.shuffle)
    else:
        df = load_table(path)
        x, y, labels = split_xy(df, source.task, source.target_column,
                                path=str(path))
        data = build_dataset(
            x, y, source.task, name=source.name,
            train_fraction=source.train_fraction,
            shuffle=source.shuffle, seed=source.seed, label_names=labels)
    return data, source


def _check_classification_conflicts(req: SampleRequest, task: str) -> None:
    if task != "classification":
        return
    conflicts = [name for name in ("step_eta", "nu1", "nu2", "tau2_fixed")
                 if getattr(req, name) is not None]
    if conflicts:
        raise InvalidParameterError(
            f"{', '.join(conflicts)}: regression noise options cannot be "
            "set for a classification task")


def _build_spec_config(req: SampleRequest, data: Dataset):
    family = req.model
    _check_classification_conflicts(req, data.task)
    if family == "linear":
        if req.hidden_num not in (None, 0):
            raise InvalidParameterError("hidden_num applies to the mlp family")
        hidden = 0
    else:
        hidden = req.hidden_num if req.hidden_num is not None \
            else DEFAULT_HIDDEN_NUM
    defaults = FAMILY_DEFAULTS[family]

    def pick(name):
        value = getattr(req, name)
        return defaults[name] if value is None else value

    spec = ModelSpec(
        family=family, task=data.task, input_num=data.input_num,
        output_num=data.output_num, hidden_num=hidden,
        learning_rate=pick("learning_rate"))
    config = SamplerConfig(
        n_samples=req.n_samples, burn_in_fraction=req.burn_in_fraction,
        step_theta=pick("step_theta"), step_eta=pick("step_eta"),
        sigma2_prior=pick("sigma2_prior"),
        nu1=req.nu1 if req.nu1 is not None else 0.0,
        nu2=req.nu2 if req.nu2 is not None else 0.0,
        use_langevin=pick("use_langevin"), l_prob=req.l_prob,
        sgd_depth=req.sgd_depth, seed=req.seed, tau2_fixed=req.tau2_fixed)
    return spec, config


def _write_chain_files(chain: Chain, index: int, out_dir: Path):
    names = param_names(chain.spec)
    metric = "rmse" if chain.spec.task == "regression" else "accuracy"
    columns = {name: chain.pos_theta[:, j]
               for j, name in enumerate(names[:chain.spec.n_params])}
    if chain.pos_tau is not None:
        columns["tau"] = chain.pos_tau
    columns[metric] = chain.train_metric
    posterior_path = out_dir / f"chain_{index}_posterior.csv"
    pd.DataFrame(columns).to_csv(
        posterior_path, index=False, float_format=FLOAT_FORMAT)

    first_kept = chain.n_samples - chain.n_kept
    trace = pd.DataFrame({
        "sample": np.arange(first_kept, chain.n_samples),
        f"train_{metric}": chain.train_metric,
        f"test_{metric}": chain.test_metric,
    })
    trace_path = out_dir / f"chain_{index}_trace.csv"
    trace.to_csv(trace_path, index=False, float_format=FLOAT_FORMAT)
    return posterior_path, trace_path


def _write_summary(chainset: ChainSet, out_dir: Path):
    rows = [s.as_row() for s in posterior_summary(chainset)]
    csv_path = out_dir / "summary.csv"
    pd.DataFrame(rows).to_csv(csv_path, index=False,
                              float_format=FLOAT_FORMAT)
    json_path = out_dir / "summary.json"
    json_path.write_text(json.dumps(rows, indent=2))
    return csv_path, json_path


def _run_and_persist(source: DatasetSourceModel, data: Dataset,
                     spec: ModelSpec, config: SamplerConfig, n_chains: int,
                     jobs: int, out_dir: Path) -> SampleResponse:
    chainset = run_multi_chain(spec, data, config, n_chains, jobs=jobs)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset_csv, dataset_meta = save_dataset(data, out_dir)

    posterior_paths, trace_paths = [], []
    for chain in chainset.chains:
        index = chain.config.seed - config.seed
        posterior_path, trace_path = _write_chain_files(chain, index, out_dir)
        posterior_paths.append(posterior_path)
        trace_paths.append(trace_path)
    summary_csv, summary_json = _write_summary(chainset, out_dir)

    metric = "rmse" if spec.task == "regression" else "accuracy"
    train_pool = np.concatenate([c.train_metric for c in chainset.chains])
    test_pool = np.concatenate([c.test_metric for c in chainset.chains])
    metric_summary = MetricSummaryModel(
        name=metric,
        train_mean=float(train_pool.mean()), train_std=float(train_pool.std()),
        test_mean=float(test_pool.mean()), test_std=float(test_pool.std()))

    manifest = RunManifest(
        version=__version__,
        created_at=datetime.now(timezone.utc).isoformat(),
        dataset=source,
        model=ModelSpecModel(
            family=spec.family, task=spec.task, input_num=spec.input_num,
            hidden_num=spec.hidden_num, output_num=spec.output_num,
            learning_rate=spec.learning_rate),
        sampler=SamplerConfigModel(
            n_samples=config.n_samples,
            burn_in_fraction=config.burn_in_fraction,
            step_theta=config.step_theta, step_eta=config.step_eta,
            sigma2_prior=config.sigma2_prior, nu1=config.nu1, nu2=config.nu2,
            use_langevin=config.use_langevin, l_prob=config.l_prob,
            sgd_depth=config.sgd_depth, tau2_fixed=config.tau2_fixed),
        n_chains=n_chains, jobs=jobs, base_seed=config.seed,
        chain_seeds=[config.seed + i for i in range(n_chains)],
        outputs={
            "posterior": [p.name for p in posterior_paths],
            "trace": [p.name for p in trace_paths],
            "dataset_csv": dataset_csv.name,
            "dataset_meta": dataset_meta.name,
            "summary_csv": summary_csv.name,
            "summary_json": summary_json.name,
        },
        acceptance_rates=[c.accept_rate for c in chainset.chains],
        langevin_counts=[c.langevin_count for c in chainset.chains],
        nan_counts=[c.nan_count for c in chainset.chains],
        chain_failures=[list(f) for f in chainset.failures],
        metric=metric_summary)
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(manifest.model_dump_json(indent=2))

    return SampleResponse(
        manifest_path=str(manifest_path),
        metric_name=metric,
        train_metric_mean=metric_summary.train_mean,
        train_metric_std=metric_summary.train_std,
        test_metric_mean=metric_summary.test_mean,
        test_metric_std=metric_summary.test_std,
        acceptance_rates=manifest.acceptance_rates,
        n_kept_total=sum(c.n_kept for c in chainset.chains),
        posterior_paths=[str(p) for p in posterior_paths],
        trace_paths=[str(p) for p in trace_paths],
        chain_failures=manifest.chain_failures,
        manifest=manifest)


def load_manifest(path) -> RunManifest:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such manifest: {path}")
    return RunManifest.model_validate_json(path.read_text())


def handle_sample(req: SampleRequest) -> SampleResponse:
    if req.manifest_path is not None:
        manifest = load_manifest(req.manifest_path)
        data, source = _load_from_source(manifest.dataset)
        spec = manifest.model.to_spec()
        config = manifest.sampler.to_config(seed=manifest.base_seed)
        n_chains, jobs = manifest.n_chains, manifest.jobs
    else:
        data, source = _resolve_dataset(req)
        spec, config = _build_spec_config(req, data)
        n_chains, jobs = req.n_chains, req.jobs
    return _run_and_persist(source, data, spec, config, n_chains, jobs,
                            Path(req.out_dir))


# --- predict ------------------------------------------------------------------

class PredictRequest(_Request):
    manifest_path: str
    split: Literal["train", "test"] = "test"
    num_draws: int = 100
    mode: str = "gaussian-approx"
    sequential: bool = False
    seed: int = 1
    out_path: Optional[str] = None


class PredictResponse(BaseModel):
    path: str
    n_rows: int
    num_draws: int
    mode: str
    coverage: float


def _load_posterior_pool(manifest: RunManifest, manifest_dir: Path,
                         spec: ModelSpec) -> np.ndarray:
    expected = param_names(spec)[:spec.n_params]
    pools = []
    for name in manifest.outputs["posterior"]:
        path = manifest_dir / name
        if not path.is_file():
            raise DataError(f"posterior file {path} is missing")
        frame = pd.read_csv(path)
        if list(frame.columns[:spec.n_params]) != expected:
            raise InvalidParameterError(
                f"{path} does not match the model spec: expected leading "
                f"columns {expected}, found {list(frame.columns[:spec.n_params])}")
        pools.append(frame[expected].to_numpy(dtype=float))
    return np.vstack(pools)


def handle_predict(req: PredictRequest) -> PredictResponse:
    manifest = load_manifest(req.manifest_path)
    manifest_dir = Path(req.manifest_path).resolve().parent
    spec = manifest.model.to_spec()
    data = load_dataset(manifest_dir / manifest.outputs["dataset_csv"],
                        manifest_dir / manifest.outputs["dataset_meta"])
    pool = _load_posterior_pool(manifest, manifest_dir, spec)
    x = data.x_train if req.split == "train" else data.x_test
    observed = data.y_train if req.split == "train" else data.y_test

    band = model_draws(pool, spec, x, req.num_draws, mode=req.mode,
                       seed=req.seed, sequential=req.sequential)
    mean, lo, hi = band.mean, band.lo, band.hi
    observed = np.asarray(observed, dtype=float)
    if spec.task == "regression":
        mean = denormalize_target(mean, data.target_min, data.target_max)
        lo = denormalize_target(lo, data.target_min, data.target_max)
        hi = denormalize_target(hi, data.target_min, data.target_max)
        observed = denormalize_target(observed, data.target_min,
                                      data.target_max)
    coverage = float(np.mean((observed >= lo) & (observed <= hi)))

    out_path = Path(req.out_path) if req.out_path \
        else manifest_dir / f"predictions_{req.split}.csv"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame({
        "instance": np.arange(x.shape[0]),
        "observed": observed,
        "mean": mean,
        "lo95": lo,
        "hi95": hi,
    }).to_csv(out_path, index=False, float_format=FLOAT_FORMAT)
    return PredictResponse(path=str(out_path), n_rows=int(x.shape[0]),
                           num_draws=req.num_draws, mode=req.mode,
                           coverage=coverage)


# --- diagnose -----------------------------------------------------------------

class DiagnoseRequest(_Request):
    chain_csvs: list
    thin: int = 1
    out_dir: Optional[str] = None


class DiagnoseResponse(BaseModel):
    rows: list
    summary_csv: str
    summary_json: str


def handle_diagnose(req: DiagnoseRequest) -> DiagnoseResponse:
    if len(req.chain_csvs) < 2:
        raise InvalidParameterError(
            "diagnosis requires at least two chain files")
    if req.thin < 1:
        raise InvalidParameterError("thin factor must be >= 1")
    frames = []
    for name in req.chain_csvs:
        path = Path(name)
        if not path.is_file():
            raise DataError(f"no such chain file: {path}")
        frames.append(pd.read_csv(path))
    columns = list(frames[0].columns)
    for path, frame in zip(req.chain_csvs[1:], frames[1:]):
        if list(frame.columns) != columns:
            raise DimensionError(
                f"chain files disagree on columns: {columns} vs "
                f"{list(frame.columns)} in {path}")
    lengths = {len(f) for f in frames}
    if len(lengths) != 1:
        raise DimensionError(
            f"chain files disagree on sample counts: {sorted(lengths)}")
    arrays = [f.to_numpy(dtype=float)[::req.thin] for f in frames]
    summaries = posterior_summary(arrays, names=columns)
    rows = [s.as_row() for s in summaries]

    out_dir = Path(req.out_dir) if req.out_dir \
        else Path(req.chain_csvs[0]).resolve().parent
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "diagnosis.csv"
    pd.DataFrame(rows).to_csv(csv_path, index=False,
                              float_format=FLOAT_FORMAT)
    json_path = out_dir / "diagnosis.json"
    json_path.write_text(json.dumps(rows, indent=2))
    return DiagnoseResponse(rows=rows, summary_csv=str(csv_path),
                            summary_json=str(json_path))


# --- window -------------------------------------------------------------------

class WindowRequest(_Request):
    csv_path: str
    column: Union[int, str, None] = None
    d: int = 4
    t: int = 2
    mode: str = "horizon"
    out_path: str = "runs/window/windowed.csv"

    @field_validator("column", mode="before")
    @classmethod
    def _column_index(cls, v):
        return _coerce_column(v)


class WindowResponse(BaseModel):
    path: str
    n_rows: int
    d: int
    t: int
    mode: str


def handle_window(req: WindowRequest) -> WindowResponse:
    df = load_table(req.csv_path)
    column = _resolve_target(df, req.column)
    series = _numeric_column(df[column], req.csv_path, column)
    x, y = takens_embed(series, EmbeddingConfig(req.d, req.t, req.mode))
    out_path = Path(req.out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(x, columns=[f"x{j}" for j in range(req.d)])
    frame["y"] = y
    frame.to_csv(out_path, index=False, float_format=FLOAT_FORMAT)
    return WindowResponse(path=str(out_path), n_rows=int(x.shape[0]),
                          d=req.d, t=req.t, mode=req.mode)


# --- app ----------------------------------------------------------------------

def create_app() -> FastAPI:
    app = FastAPI(title="bayesmc", version=__version__)

    @app.exception_handler(BayesmcError)
    async def _bayesmc_error(request, exc: BayesmcError):
        return JSONResponse(
            status_code=400,
            content={"error": type(exc).__name__, "message": str(exc),
                     "exit_code": exc.exit_code})

    @app.get("/health")
    async def health():
        return {"status": "ok", "version": __version__}

    @app.post("/demo", response_model=DemoResponse)
    async def demo(req: DemoRequest):
        return handle_demo(req)

    @app.post("/sample", response_model=SampleResponse)
    async def sample(req: SampleRequest):
        return handle_sample(req)

    @app.post("/predict", response_model=PredictResponse)
    async def predict(req: PredictRequest):
        return handle_predict(req)

    @app.post("/diagnose", response_model=DiagnoseResponse)
    async def diagnose(req: DiagnoseRequest):
        return handle_diagnose(req)

    @app.post("/window", response_model=WindowResponse)
    async def window(req: WindowRequest):
        return handle_window(req)

    return app
