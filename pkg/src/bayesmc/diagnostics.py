"""Convergence diagnostics, posterior summaries, metrics, and posterior draws.

The headline convergence statistic is the rank-normalized split R-hat: each
chain is split in half, the pooled samples are transformed to normal scores
through their average ranks, and the classic Gelman-Rubin statistic is taken
over the transformed split chains; the reported value is the maximum of that
statistic and its "folded" variant computed on absolute deviations from the
pooled median. The unmodified Gelman-Rubin statistic stays available as
``rhat_classic`` for cross-checking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri
from scipy.stats import rankdata

from .errors import (
    DataError,
    DimensionError,
    InvalidParameterError,
    UndefinedDiagnosticError,
)
from .models import ModelSpec, build_model, param_names

PREDICT_MODES = ("gaussian-approx", "empirical")


def rmse(predictions, observations) -> float:
    """Root mean squared error sqrt(mean((p - o)^2))."""
    p = np.asarray(predictions, dtype=float)
    o = np.asarray(observations, dtype=float)
    if p.shape != o.shape:
        raise DimensionError(f"shape mismatch: {p.shape} vs {o.shape}")
    if p.size == 0:
        raise DimensionError("rmse of empty vectors is undefined")
    return float(np.sqrt(np.mean((p - o) ** 2)))


def accuracy(predicted_labels, true_labels) -> float:
    """Percentage of matching labels, 100 * matches / total."""
    p = np.asarray(predicted_labels)
    t = np.asarray(true_labels)
    if p.shape != t.shape:
        raise DimensionError(f"shape mismatch: {p.shape} vs {t.shape}")
    if p.size == 0:
        raise DimensionError("accuracy of empty vectors is undefined")
    return float(100.0 * np.mean(p == t))


def thin(samples, factor: int):
    """Keep rows at indices 0, factor, 2*factor, ... along the first axis."""
    if int(factor) != factor or factor < 1:
        raise InvalidParameterError("thinning factor must be an integer >= 1")
    return np.asarray(samples)[::int(factor)]


def rank_normalize(chains) -> np.ndarray:
    """Map pooled samples to normal scores via average fractional ranks.

    Ranks are taken over the pooled values (ties averaged) and transformed as
    z = ndtri((rank - 3/8) / (S + 1/4)); the result keeps the input shape.
    """
    x = np.asarray(chains, dtype=float)
    ranks = rankdata(x.ravel(), method="average")
    z = ndtri((ranks - 0.375) / (x.size + 0.25))
    return z.reshape(x.shape)


def _split_halves(chains: np.ndarray) -> np.ndarray:
    m, n = chains.shape
    half = n // 2
    if half < 2:
        raise InvalidParameterError(
            "each chain needs at least 4 kept samples to split")
    # With odd n the middle sample is dropped from both halves.
    return np.vstack([chains[:, :half], chains[:, n - half:]])


def rhat_classic(chains) -> float:
    """Classic Gelman-Rubin statistic sqrt(((n-1)/n * W + B/n) / W).

    ``chains`` is an (m, n) matrix of m chains; W is the mean within-chain
    variance and B is n times the variance of the chain means (both with
    ddof=1). Chains identical everywhere have no variance to compare and
    raise an undefined-diagnostic error; a zero W with nonzero B returns +inf.
    """
    x = np.asarray(chains, dtype=float)
    if x.ndim != 2:
        raise DimensionError("chains must form a 2-D (m, n) matrix")
    m, n = x.shape
    if m < 2 or n < 2:
        raise InvalidParameterError("need >= 2 chains of >= 2 samples")
    w = float(np.mean(np.var(x, axis=1, ddof=1)))
    b = float(n * np.var(np.mean(x, axis=1), ddof=1))
    if w == 0.0:
        if b == 0.0:
            raise UndefinedDiagnosticError(
                "all samples identical; R-hat undefined")
        return float("inf")
    return float(np.sqrt(((n - 1) / n * w + b / n) / w))


def split_rhat(chains, parameter_index: "int | None" = None) -> float:
    """Rank-normalized split R-hat, max of the bulk and folded variants.

    Accepts either an (m, n) sample matrix or a ChainSet plus the index of
    the theta coordinate to diagnose. Zero pooled variance raises an
    undefined-diagnostic error.
    """
    if hasattr(chains, "param_matrix"):
        if parameter_index is None:
            raise InvalidParameterError(
                "parameter_index is required with a ChainSet")
        x = chains.param_matrix(parameter_index)
    else:
        x = np.asarray(chains, dtype=float)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.ndim != 2:
        raise DimensionError("chains must form a 2-D (m, n) matrix")
    if np.all(x == x.ravel()[0]):
        raise UndefinedDiagnosticError(
            "zero pooled variance; R-hat undefined")
    halves = _split_halves(x)
    bulk = rhat_classic(rank_normalize(halves))
    folded = np.abs(halves - np.median(halves))
    try:
        folded_rhat = rhat_classic(rank_normalize(folded))
    except UndefinedDiagnosticError:
        # Degenerate symmetry can collapse all absolute deviations to one
        # value; the bulk statistic is still informative on its own.
        folded_rhat = bulk
    return float(max(bulk, folded_rhat))


def mcse_batch_means(samples, n_batches: int = 50) -> float:
    """Monte-Carlo standard error of the mean by the batch-means method.

    Splits the (autocorrelated) sample sequence into ``n_batches`` contiguous
    batches and returns std(batch means, ddof=1)/sqrt(n_batches). Any leading
    remainder that does not fill a whole batch is dropped.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if n_batches < 2:
        raise InvalidParameterError("n_batches must be >= 2")
    batch_size = x.size // n_batches
    if batch_size < 1:
        raise InvalidParameterError(
            f"need at least {n_batches} samples, got {x.size}")
    trimmed = x[x.size - n_batches * batch_size:]
    means = trimmed.reshape(n_batches, batch_size).mean(axis=1)
    return float(np.std(means, ddof=1) / np.sqrt(n_batches))


@dataclass(frozen=True)
class ParamSummary:
    """Posterior summary of one parameter across pooled chains."""

    name: str
    mean: float
    std: float
    q05: float
    q50: float
    q95: float
    ci_lo: float
    ci_hi: float
    rhat: float

    def as_row(self) -> dict:
        return {"name": self.name, "mean": self.mean, "std": self.std,
                "q05": self.q05, "q50": self.q50, "q95": self.q95,
                "rhat": self.rhat}


def _summarize_one(name: str, chain_matrix: np.ndarray) -> ParamSummary:
    pooled = chain_matrix.ravel()
    q05, q25, q50, q975, q95 = np.percentile(pooled, [5, 2.5, 50, 97.5, 95])
    try:
        rhat = split_rhat(chain_matrix)
    except (UndefinedDiagnosticError, InvalidParameterError):
        rhat = float("nan")
    return ParamSummary(
        name=name,
        mean=float(np.mean(pooled)),
        std=float(np.std(pooled)),
        q05=float(q05),
        q50=float(q50),
        q95=float(q95),
        ci_lo=float(q25),
        ci_hi=float(q975),
        rhat=float(rhat),
    )


def posterior_summary(chains, names: "list[str] | None" = None):
    """Per-parameter pooled summaries with split R-hat attached.

    ``chains`` is either a ChainSet (parameters = theta coordinates plus tau
    for regression) or a list of (n, K) per-chain sample matrices with one
    column per parameter; ``names`` labels the columns in the latter case.
    Returns a list of :class:`ParamSummary`.
    """
    if hasattr(chains, "param_matrix"):
        chainset = chains
        labels = param_names(chainset.spec)
        matrices = [chainset.param_matrix(j)
                    for j in range(chainset.spec.n_params)]
        if chainset.chains[0].pos_tau is not None:
            matrices.append(np.stack([c.pos_tau for c in chainset.chains]))
        return [_summarize_one(lbl, mat) for lbl, mat in zip(labels, matrices)]

    arrays = [np.atleast_2d(np.asarray(a, dtype=float)) for a in chains]
    if not arrays:
        raise DataError("no chains to summarize")
    k = arrays[0].shape[1]
    n = arrays[0].shape[0]
    if any(a.shape != (n, k) for a in arrays):
        raise DimensionError("chains must share one (n, K) shape")
    if names is None:
        names = [f"p{j}" for j in range(k)]
    if len(names) != k:
        raise DimensionError(f"{len(names)} names for {k} columns")
    return [_summarize_one(names[j], np.stack([a[:, j] for a in arrays]))
            for j in range(k)]


@dataclass(frozen=True)
class PredictionBand:
    """Per-instance predictions over posterior draws.

    ``draws`` has one row per posterior draw. For regression ``mean`` is the
    per-instance draw mean with an equal-tailed 95% band in ``lo``/``hi``;
    for classification ``mean`` holds the modal label and the band holds
    label percentiles.
    """

    draws: np.ndarray
    mean: np.ndarray
    lo: np.ndarray
    hi: np.ndarray


def model_draws(chains, spec: ModelSpec, x, num_draws: int,
                mode: str = "gaussian-approx", seed: int = 1, rng=None,
                sequential: bool = False) -> PredictionBand:
    """Evaluate the model over posterior parameter draws.

    Mode "gaussian-approx" treats each parameter's posterior as Gaussian and
    draws theta ~ N(pooled mean, pooled std) elementwise; mode "empirical"
    resamples stored posterior rows uniformly (or in storage order when
    ``sequential`` is set, which with num_draws = n_kept reproduces the
    stored per-sample predictions exactly).
    """
    if num_draws < 1:
        raise InvalidParameterError("num_draws must be >= 1")
    if mode not in PREDICT_MODES:
        raise InvalidParameterError(
            f"mode must be one of {PREDICT_MODES}, got {mode!r}")
    pool = chains.pooled_theta() if hasattr(chains, "pooled_theta") \
        else np.asarray(chains, dtype=float)
    if pool.ndim != 2 or pool.shape[1] != spec.n_params:
        raise DimensionError(
            f"posterior pool must be (n, {spec.n_params}), got {pool.shape}")
    if rng is None:
        rng = np.random.default_rng(seed)
    model = build_model(spec)
    x = np.asarray(x, dtype=float)

    if mode == "gaussian-approx":
        mu = pool.mean(axis=0)
        sd = pool.std(axis=0)
        thetas = rng.normal(mu, sd, size=(num_draws, spec.n_params))
    else:
        if sequential:
            idx = np.arange(num_draws) % pool.shape[0]
        else:
            idx = rng.integers(0, pool.shape[0], size=num_draws)
        thetas = pool[idx]

    classification = spec.task == "classification"
    draws = np.empty((num_draws, x.shape[0]),
                     dtype=int if classification else float)
    for s in range(num_draws):
        outputs = model.evaluate(x, thetas[s])
        draws[s] = np.argmax(outputs, axis=1) if classification \
            else outputs[:, 0]

    if classification:
        k = spec.output_num
        center = np.array([np.bincount(col, minlength=k).argmax()
                           for col in draws.T], dtype=int)
        lo, hi = np.percentile(draws, [2.5, 97.5], axis=0)
    else:
        center = draws.mean(axis=0)
        lo, hi = np.percentile(draws, [2.5, 97.5], axis=0)
    return PredictionBand(draws=draws, mean=center, lo=lo, hi=hi)
