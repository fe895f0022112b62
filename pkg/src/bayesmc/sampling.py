"""Metropolis-Hastings samplers.

Likelihoods, priors, proposal generators (random-walk and Langevin-gradient),
log-space MH acceptance, the binomial demo sampler, and the single- and
multi-chain loops for linear/neural models on regression and classification
tasks.

The acceptance comparison is done entirely in log space — accept iff
``ln u < delta_log_likelihood + delta_log_prior + log_qratio`` — which is
identical in exact arithmetic to comparing u against the exponentiated ratio
but cannot overflow. Regression chains carry a noise variance tau2 sampled
through a Gaussian random walk on eta = ln(tau2); classification chains carry
no noise state.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from joblib import Parallel, delayed
from scipy.special import log_softmax

from .diagnostics import accuracy, rmse
from .distributions import (
    binomial_logpmf,
    gaussian_logpdf,
    invgamma_unnorm_logpdf,
    isotropic_gaussian_logratio_core,
)
from .errors import DataError, DimensionError, InvalidParameterError
from .models import ModelSpec, build_model

# Benchmark hyperparameters by model family: learning rate r, proposal step
# sizes, and prior variance sigma2. burn_in_fraction 0.5, l_prob 0.5,
# sgd_depth 1, and nu1 = nu2 = 0 are shared by both families.
FAMILY_DEFAULTS = {
    "linear": {
        "learning_rate": 0.1,
        "step_theta": 0.02,
        "step_eta": 0.01,
        "sigma2_prior": 5.0,
        "use_langevin": False,
    },
    "mlp": {
        "learning_rate": 0.01,
        "step_theta": 0.025,
        "step_eta": 0.2,
        "sigma2_prior": 25.0,
        "use_langevin": True,
    },
}

# Floor for the initial residual variance so eta = ln(var) stays finite.
MIN_INITIAL_VARIANCE = 1e-12


@dataclass(frozen=True)
class SamplerConfig:
    """Sampler hyperparameters for one chain.

    ``seed`` is the chain's own stream seed; multi-chain runs derive chain i's
    seed as ``seed + i``. ``tau2_fixed`` freezes the regression noise variance
    instead of sampling eta = ln(tau2) (used by conjugate-oracle checks).
    """

    n_samples: int = 5000
    burn_in_fraction: float = 0.5
    step_theta: float = 0.025
    step_eta: float = 0.2
    sigma2_prior: float = 25.0
    nu1: float = 0.0
    nu2: float = 0.0
    use_langevin: bool = False
    l_prob: float = 0.5
    sgd_depth: int = 1
    seed: int = 1
    tau2_fixed: "float | None" = None

    def __post_init__(self):
        if self.n_samples < 2:
            raise InvalidParameterError("n_samples must be >= 2")
        if not 0.0 <= self.burn_in_fraction < 1.0:
            raise InvalidParameterError("burn_in_fraction must lie in [0, 1)")
        if self.step_theta <= 0 or self.step_eta <= 0:
            raise InvalidParameterError("step sizes must be positive")
        if self.sigma2_prior <= 0:
            raise InvalidParameterError("sigma2_prior must be positive")
        if self.nu1 < 0 or self.nu2 < 0:
            raise InvalidParameterError("nu1 and nu2 must be non-negative")
        if not 0.0 <= self.l_prob <= 1.0:
            raise InvalidParameterError("l_prob must lie in [0, 1]")
        if self.sgd_depth < 0:
            raise InvalidParameterError("sgd_depth must be >= 0")
        if self.tau2_fixed is not None and self.tau2_fixed <= 0:
            raise InvalidParameterError("tau2_fixed must be positive")

    @property
    def n_burnin(self) -> int:
        return int(np.floor(self.burn_in_fraction * self.n_samples))

    @property
    def n_kept(self) -> int:
        return self.n_samples - self.n_burnin


@dataclass(frozen=True)
class LogPosteriorParts:
    """Additive log-posterior pieces for one side of an MH comparison.

    ``log_qratio`` on the proposed side holds the full detailed-balance
    correction ln q(theta|theta') - ln q(theta'|theta); it is 0 for symmetric
    proposals and ignored on the current side.
    """

    log_likelihood: float
    log_prior: float
    log_qratio: float = 0.0


@dataclass(frozen=True)
class MhDecision:
    accepted: bool
    log_alpha: float
    nan_flagged: bool


def one_hot(labels, n_classes: int) -> np.ndarray:
    """Indicator matrix z with z[t, labels[t]] = 1."""
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise DimensionError("labels must be a vector")
    if not np.issubdtype(labels.dtype, np.integer):
        if not np.all(labels == labels.astype(int)):
            raise DataError("class labels must be integers")
        labels = labels.astype(int)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise DataError(
            f"class labels must lie in [0, {n_classes}); "
            f"found range [{labels.min()}, {labels.max()}]")
    z = np.zeros((labels.size, n_classes))
    z[np.arange(labels.size), labels] = 1.0
    return z


def gaussian_log_likelihood(model, theta, tau2, x, y):
    """Gaussian log-likelihood of targets y under predictions f(x; theta).

    Returns ``(log_likelihood, predictions, rmse)``. Equals the sum of
    per-row Gaussian log-densities with variance tau2.
    """
    if tau2 <= 0:
        raise InvalidParameterError("tau2 must be positive")
    y = np.asarray(y, dtype=float)
    pred = model.evaluate(x, theta)[:, 0]
    ll = float(np.sum(gaussian_logpdf(y, pred, tau2)))
    return ll, pred, rmse(pred, y)


def multinomial_log_likelihood(model, theta, x, y):
    """Multinomial log-likelihood sum_t ln softmax(f(x_t; theta))[y_t].

    Returns ``(log_likelihood, argmax labels, accuracy percentage)``. The
    log-probabilities come from a log-softmax, so near-certain wrong classes
    stay finite instead of collapsing to ln(0).
    """
    outputs = model.evaluate(x, theta)
    z = one_hot(y, model.spec.output_num)
    log_probs = log_softmax(outputs, axis=1)
    ll = float(np.sum(z * log_probs))
    labels = np.argmax(outputs, axis=1)
    return ll, labels, accuracy(labels, np.asarray(y).astype(int))


def regression_log_prior(sigma2, nu1, nu2, theta, tau2):
    """Gaussian prior over theta plus inverse-gamma prior over tau2:
    -(M/2) ln(sigma2) - sum(theta^2)/(2 sigma2) - (1+nu1) ln(tau2) - nu2/tau2
    (the 2*pi constant is dropped; it cancels in MH ratios)."""
    if sigma2 <= 0:
        raise InvalidParameterError("sigma2 must be positive")
    theta = np.asarray(theta, dtype=float)
    return float(
        -0.5 * theta.size * np.log(sigma2)
        - np.sum(theta * theta) / (2.0 * sigma2)
        + invgamma_unnorm_logpdf(tau2, nu1, nu2))


def classification_log_prior(sigma2, theta):
    """Gaussian prior over theta only: -(M/2) ln(sigma2) - sum(theta^2)/(2 sigma2)."""
    if sigma2 <= 0:
        raise InvalidParameterError("sigma2 must be positive")
    theta = np.asarray(theta, dtype=float)
    return float(
        -0.5 * theta.size * np.log(sigma2)
        - np.sum(theta * theta) / (2.0 * sigma2))


def rw_propose(theta, step_theta, rng) -> np.ndarray:
    """Symmetric Gaussian random walk theta' = theta + N(0, step_theta^2)
    drawn elementwise (step_theta is the noise standard deviation)."""
    if step_theta <= 0:
        raise InvalidParameterError("step_theta must be positive")
    theta = np.asarray(theta, dtype=float)
    return theta + rng.normal(0.0, step_theta, size=theta.shape)


def eta_propose(eta, step_eta, rng):
    """Random walk on eta = ln(tau2); returns (eta', tau2' = exp(eta'))."""
    if step_eta <= 0:
        raise InvalidParameterError("step_eta must be positive")
    eta_p = float(eta + rng.normal(0.0, step_eta))
    return eta_p, float(np.exp(eta_p))


def langevin_propose(model, x, y, theta, config: SamplerConfig, rng):
    """Langevin-gradient proposal.

    theta_bar = gradient map of theta; theta' ~ N(theta_bar, step_theta^2 I);
    the returned log q-ratio is the detailed-balance correction
    ln q(theta | theta') - ln q(theta' | theta) evaluated with the true
    proposal variance step_theta^2 via the reverse gradient map of theta'.
    Returns ``(theta', log_qratio)``.
    """
    theta = np.asarray(theta, dtype=float)
    theta_bar = model.langevin_gradient(x, y, theta, config.sgd_depth)
    theta_p = theta_bar + rng.normal(0.0, config.step_theta, size=theta.shape)
    theta_p_bar = model.langevin_gradient(x, y, theta_p, config.sgd_depth)
    sigma2 = config.step_theta * config.step_theta
    log_qratio = (
        isotropic_gaussian_logratio_core(theta - theta_p_bar, sigma2)
        - isotropic_gaussian_logratio_core(theta_p - theta_bar, sigma2))
    return theta_p, log_qratio


def mh_accept(proposed: LogPosteriorParts, current: LogPosteriorParts,
              rng) -> MhDecision:
    """Log-space MH test: accept iff ln(u) < delta_ll + delta_prior + qratio.

    A NaN anywhere in the ratio rejects the proposal and flags it so the
    chain can count the event; +-inf ratios resolve naturally (never/always
    accept).
    """
    log_alpha = (proposed.log_likelihood - current.log_likelihood
                 + proposed.log_prior - current.log_prior
                 + proposed.log_qratio)
    if np.isnan(log_alpha):
        return MhDecision(accepted=False, log_alpha=float("nan"),
                          nan_flagged=True)
    u = rng.uniform()
    log_u = np.log(u) if u > 0.0 else -np.inf
    return MhDecision(accepted=bool(log_u < log_alpha),
                      log_alpha=float(log_alpha), nan_flagged=False)


def sample_binomial_demo(k: int, n: int, n_samples: int = 10000,
                         burn_in_fraction: float = 0.25, seed: int = 1,
                         rng=None) -> np.ndarray:
    """MH sampler for a binomial success probability with a uniform prior.

    Proposals are independent U(0,1) draws, so the q-ratio and prior ratio
    are both 1 and acceptance reduces to the binomial likelihood ratio.
    Returns the post-burn-in samples of p.
    """
    if n_samples < 2:
        raise InvalidParameterError("n_samples must be >= 2")
    if not 0.0 <= burn_in_fraction < 1.0:
        raise InvalidParameterError("burn_in_fraction must lie in [0, 1)")
    if rng is None:
        rng = np.random.default_rng(seed)
    p = rng.uniform()
    cur_ll = binomial_logpmf(k, n, p)
    chain = np.empty(n_samples)
    chain[0] = p
    for i in range(1, n_samples):
        p_new = rng.uniform()
        new_ll = binomial_logpmf(k, n, p_new)
        u = rng.uniform()
        log_u = np.log(u) if u > 0.0 else -np.inf
        if log_u < new_ll - cur_ll:
            p, cur_ll = p_new, new_ll
        chain[i] = p
    n_burnin = int(np.floor(burn_in_fraction * n_samples))
    return chain[n_burnin:]


@dataclass
class Chain:
    """Post-burn-in record of one MCMC run.

    All per-sample arrays are aligned: row i of ``pos_theta``/``pos_tau``
    produced row i of the prediction and metric arrays. Rejected iterations
    copy the previous row bit-exactly. ``accept_count`` counts accepted
    proposals; the rate divides by all n_samples iterations.
    """

    spec: ModelSpec
    config: SamplerConfig
    n_samples: int
    pos_theta: np.ndarray
    pos_tau: "np.ndarray | None"
    train_metric: np.ndarray
    test_metric: np.ndarray
    pred_train: np.ndarray
    pred_test: np.ndarray
    accept_count: int
    langevin_count: int
    nan_count: int

    @property
    def n_kept(self) -> int:
        return self.pos_theta.shape[0]

    @property
    def accept_rate(self) -> float:
        return self.accept_count / self.n_samples

    @property
    def seed(self) -> int:
        return self.config.seed


@dataclass
class ChainSet:
    """Independent chains over one model/dataset, plus per-chain failures."""

    chains: "list[Chain]"
    failures: "list[tuple[int, str]]"

    @property
    def spec(self) -> ModelSpec:
        return self.chains[0].spec

    @property
    def n_kept(self) -> int:
        return self.chains[0].n_kept

    def param_matrix(self, parameter_index: int) -> np.ndarray:
        """(n_chains, n_kept) matrix of one theta coordinate across chains."""
        return np.stack([c.pos_theta[:, parameter_index] for c in self.chains])

    def pooled_theta(self) -> np.ndarray:
        return np.vstack([c.pos_theta for c in self.chains])

    def pooled_tau(self) -> "np.ndarray | None":
        if self.chains[0].pos_tau is None:
            return None
        return np.concatenate([c.pos_tau for c in self.chains])

    def accept_rates(self) -> "list[float]":
        return [c.accept_rate for c in self.chains]


def _check_data(spec: ModelSpec, data) -> None:
    if data.task != spec.task:
        raise InvalidParameterError(
            f"dataset task {data.task!r} does not match model task {spec.task!r}")
    x_train = np.asarray(data.x_train, dtype=float)
    x_test = np.asarray(data.x_test, dtype=float)
    if x_train.ndim != 2 or x_test.ndim != 2:
        raise DimensionError("feature matrices must be 2-D")
    if x_train.shape[1] != spec.input_num or x_test.shape[1] != spec.input_num:
        raise DimensionError(
            f"dataset has {x_train.shape[1]} features, model expects {spec.input_num}")


def run_chain(spec: ModelSpec, data, config: SamplerConfig) -> Chain:
    """Run one MH chain of ``config.n_samples`` iterations.

    Iteration 0 stores the initial state; each later iteration draws either a
    Langevin-gradient proposal (with probability l_prob when use_langevin is
    set) or a random-walk proposal, plus an eta random-walk for regression,
    and applies the log-space MH test. Test-set metrics are recorded every
    iteration but never influence acceptance.
    """
    _check_data(spec, data)
    regression = spec.task == "regression"
    x_train = np.asarray(data.x_train, dtype=float)
    x_test = np.asarray(data.x_test, dtype=float)
    y_train = np.asarray(data.y_train)
    y_test = np.asarray(data.y_test)

    rng = np.random.default_rng(config.seed)
    model = build_model(spec)
    n = config.n_samples
    theta = rng.standard_normal(spec.n_params)

    if regression:
        y_train = y_train.astype(float)
        y_test = y_test.astype(float)
        y_sgd = y_train.reshape(-1, 1)
        if config.tau2_fixed is not None:
            sample_eta = False
            tau2 = float(config.tau2_fixed)
            eta = float(np.log(tau2))
        else:
            sample_eta = True
            pred0 = model.evaluate(x_train, theta)[:, 0]
            eta = float(np.log(
                max(float(np.var(pred0 - y_train)), MIN_INITIAL_VARIANCE)))
            tau2 = float(np.exp(eta))
        cur_ll, cur_pred_tr, cur_metric_tr = gaussian_log_likelihood(
            model, theta, tau2, x_train, y_train)
        _, cur_pred_te, cur_metric_te = gaussian_log_likelihood(
            model, theta, tau2, x_test, y_test)
        cur_prior = regression_log_prior(
            config.sigma2_prior, config.nu1, config.nu2, theta, tau2)
    else:
        sample_eta = False
        eta = tau2 = None
        y_sgd = one_hot(y_train, spec.output_num)
        one_hot(y_test, spec.output_num)  # validates test label range
        cur_ll, cur_pred_tr, cur_metric_tr = multinomial_log_likelihood(
            model, theta, x_train, y_train)
        _, cur_pred_te, cur_metric_te = multinomial_log_likelihood(
            model, theta, x_test, y_test)
        cur_prior = classification_log_prior(config.sigma2_prior, theta)

    pred_dtype = float if regression else int
    pos_theta = np.empty((n, spec.n_params))
    pos_tau = np.empty(n) if regression else None
    train_metric = np.empty(n)
    test_metric = np.empty(n)
    pred_train = np.empty((n, len(y_train)), dtype=pred_dtype)
    pred_test = np.empty((n, len(y_test)), dtype=pred_dtype)

    accept_count = 0
    langevin_count = 0
    nan_count = 0

    def store(i):
        pos_theta[i] = theta
        if regression:
            pos_tau[i] = tau2
        train_metric[i] = cur_metric_tr
        test_metric[i] = cur_metric_te
        pred_train[i] = cur_pred_tr
        pred_test[i] = cur_pred_te

    store(0)
    for ii in range(1, n):
        if config.use_langevin and rng.uniform() < config.l_prob:
            theta_p, log_q = langevin_propose(
                model, x_train, y_sgd, theta, config, rng)
            langevin_count += 1
        else:
            theta_p = rw_propose(theta, config.step_theta, rng)
            log_q = 0.0

        if regression and sample_eta:
            eta_p, tau2_p = eta_propose(eta, config.step_eta, rng)
        else:
            eta_p, tau2_p = eta, tau2

        if regression and not (np.isfinite(tau2_p) and tau2_p > 0):
            # exp(eta') over/underflowed: the proposal has no usable density.
            decision = MhDecision(False, -np.inf, False)
        else:
            if regression:
                ll_p, pred_tr_p, metric_tr_p = gaussian_log_likelihood(
                    model, theta_p, tau2_p, x_train, y_train)
                _, pred_te_p, metric_te_p = gaussian_log_likelihood(
                    model, theta_p, tau2_p, x_test, y_test)
                prior_p = regression_log_prior(
                    config.sigma2_prior, config.nu1, config.nu2, theta_p, tau2_p)
            else:
                ll_p, pred_tr_p, metric_tr_p = multinomial_log_likelihood(
                    model, theta_p, x_train, y_train)
                _, pred_te_p, metric_te_p = multinomial_log_likelihood(
                    model, theta_p, x_test, y_test)
                prior_p = classification_log_prior(config.sigma2_prior, theta_p)
            decision = mh_accept(
                LogPosteriorParts(ll_p, prior_p, log_q),
                LogPosteriorParts(cur_ll, cur_prior), rng)

        if decision.nan_flagged:
            nan_count += 1
        if decision.accepted:
            accept_count += 1
            theta = theta_p
            eta, tau2 = eta_p, tau2_p
            cur_ll, cur_prior = ll_p, prior_p
            cur_pred_tr, cur_metric_tr = pred_tr_p, metric_tr_p
            cur_pred_te, cur_metric_te = pred_te_p, metric_te_p
        store(ii)

    n_burnin = config.n_burnin
    return Chain(
        spec=spec,
        config=config,
        n_samples=n,
        pos_theta=pos_theta[n_burnin:],
        pos_tau=pos_tau[n_burnin:] if regression else None,
        train_metric=train_metric[n_burnin:],
        test_metric=test_metric[n_burnin:],
        pred_train=pred_train[n_burnin:],
        pred_test=pred_test[n_burnin:],
        accept_count=accept_count,
        langevin_count=langevin_count,
        nan_count=nan_count,
    )


def _run_chain_guarded(spec, data, config):
    try:
        return run_chain(spec, data, config), None
    except Exception as exc:  # noqa: BLE001 - per-chain fault isolation
        return None, exc


def run_multi_chain(spec: ModelSpec, data, config: SamplerConfig,
                    n_chains: int, jobs: int = 1) -> ChainSet:
    """Run ``n_chains`` independent chains with per-chain seeds seed + i.

    Chains never share mutable state. A failing chain is recorded in
    ``failures`` while surviving chains are retained; if every chain fails,
    the first error propagates. ``jobs`` > 1 runs chains in parallel worker
    processes; results are identical either way because each chain owns its
    own seeded generator.
    """
    if n_chains < 1:
        raise InvalidParameterError("n_chains must be >= 1")
    configs = [replace(config, seed=config.seed + i) for i in range(n_chains)]
    if jobs == 1:
        results = [_run_chain_guarded(spec, data, c) for c in configs]
    else:
        results = Parallel(n_jobs=jobs)(
            delayed(_run_chain_guarded)(spec, data, c) for c in configs)
    chains = [chain for chain, _ in results if chain is not None]
    failures = [(i, repr(err)) for i, (_, err) in enumerate(results)
                if err is not None]
    if not chains:
        raise next(err for _, err in results if err is not None)
    return ChainSet(chains=chains, failures=failures)
