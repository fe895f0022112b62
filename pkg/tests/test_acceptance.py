"""Acceptance gate: ten release criteria with pinned tolerances.

Each test prints exactly one ``[ACCEPTANCE NN] <name>: PASS|FAIL (<detail>)``
line on the real terminal (bypassing capture) and then asserts, so a red
criterion is reported honestly rather than skipped.  Criteria 4-6 share four
benchmark runs (sunspot/iris x linear/mlp) executed once per session with the
table protocol: 5 chains x 10,000 samples, 50% burn-in (25,000 kept in
total), family default hyperparameters, seed 1.

Known-red criteria in this environment, asserted anyway:

* Criterion 4: the vendored sunspot series is the yearly mean table (309
  rows), not the monthly series the reference RMSE bands were produced on,
  and the abalone file is not vendored (no network access here).  Supplying
  ``BAYESMC_DATA_DIR`` with the canonical files upgrades the run.
* Criterion 5/6 (classification rows): the sampler evaluates the Langevin
  detailed-balance correction with the true proposal variance
  ``step_theta**2`` (criterion 8 pins this against an independent density
  evaluation at 1e-9).  Under that corrected q-ratio the Langevin moves on
  multinomial posteriors are almost always rejected, capping classification
  MLP acceptance near l_prob * rw_rate ~ 0.48 and leaving iris MLP accuracy
  far below the >= 90% band, which was generated by a softer (unsquared)
  q-ratio variance.  The regression clauses are unaffected.
"""

import time

import numpy as np
import pytest
from scipy import stats

from bayesmc import (
    Dataset,
    DataError,
    ModelSpec,
    SamplerConfig,
    build_model,
    langevin_gradient,
    langevin_propose,
    mcse_batch_means,
    run_chain,
    sample_binomial_demo,
    split_rhat,
)
from bayesmc.service import SampleRequest, handle_sample


def report(capsys, number, name, ok, detail=""):
    """Print the criterion verdict on the real terminal, then assert."""
    line = f"[ACCEPTANCE {number:02d}] {name}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f" ({detail})"
    with capsys.disabled():
        print(f"\n{line}", flush=True)
    assert ok, line


def tiny_regression_dataset(x, y, name="toy"):
    """Wrap raw arrays; benchmark-style normalization is not part of the
    pinned protocols, so features/targets are used as-is."""
    x = np.asarray(x, float)
    return Dataset(name=name, task="regression", x_train=x,
                   y_train=np.asarray(y, float), x_test=x[:5],
                   y_test=np.asarray(y, float)[:5],
                   feature_mins=x.min(axis=0), feature_maxs=x.max(axis=0))


@pytest.fixture(scope="session")
def table_runs(tmp_path_factory):
    """The four feasible benchmark experiments under the table protocol."""
    root = tmp_path_factory.mktemp("table_runs")
    runs = {}
    for dataset, family in (("sunspot", "linear"), ("sunspot", "mlp"),
                            ("iris", "linear"), ("iris", "mlp")):
        start = time.perf_counter()
        resp = handle_sample(SampleRequest(
            dataset=dataset, model=family, n_chains=5, n_samples=10000,
            burn_in_fraction=0.5, seed=1,
            out_dir=str(root / f"{dataset}_{family}")))
        runs[dataset, family] = (resp, time.perf_counter() - start)
    return runs


def test_criterion_01_binomial_demo(capsys):
    # k=50 successes in n=100 trials; Beta(51, 51) posterior has mean 0.5
    # and std sqrt(51*51/(102^2*103)) = 0.04926.
    start = time.perf_counter()
    samples = sample_binomial_demo(50, 100, n_samples=10000,
                                   burn_in_fraction=0.25, seed=1)
    elapsed = time.perf_counter() - start
    mean, std = float(samples.mean()), float(samples.std())
    ok = (abs(mean - 0.502) <= 0.01 and abs(std - 0.0493) <= 0.005
          and elapsed < 5.0)
    report(capsys, 1, "binomial demo posterior", ok,
           f"mean {mean:.4f} need 0.502+/-0.01, std {std:.4f} need "
           f"0.0493+/-0.005, {elapsed:.2f}s need <5s")


def test_criterion_02_conjugate_oracle(capsys):
    # One-feature Bayesian linear regression with tau2 fixed at the true
    # noise variance is conjugate: with design Z = [x 1] the posterior over
    # (w, b) is Gaussian with precision A = Z'Z/tau2 + I/sigma2 and mean
    # A^{-1} Z'y/tau2.  The chain mean must land within 3 batch-means MCSEs.
    rng = np.random.default_rng(42)
    x = rng.uniform(-1.0, 1.0, size=(30, 1))
    y = 1.2 * x[:, 0] - 0.7 + rng.normal(0.0, 0.5, size=30)
    data = tiny_regression_dataset(x, y, name="conjugate")
    spec = ModelSpec(family="linear", task="regression", input_num=1,
                     learning_rate=0.1)
    config = SamplerConfig(n_samples=100_000, burn_in_fraction=0.5,
                           step_theta=0.2, step_eta=0.05, sigma2_prior=5.0,
                           tau2_fixed=0.25, seed=5)
    start = time.perf_counter()
    chain = run_chain(spec, data, config)
    elapsed = time.perf_counter() - start

    design = np.column_stack([x[:, 0], np.ones(30)])
    precision = design.T @ design / 0.25 + np.eye(2) / 5.0
    analytic = np.linalg.solve(precision, design.T @ y / 0.25)

    details, ok = [], chain.n_kept == 50_000 and elapsed < 30.0
    for j, label in ((0, "w"), (1, "b")):
        draws = chain.pos_theta[:, j]
        mcse = mcse_batch_means(draws)
        dev = abs(float(draws.mean()) - analytic[j])
        ok = ok and dev < 3.0 * mcse
        details.append(f"{label} dev {dev:.5f} vs 3*MCSE {3 * mcse:.5f}")
    report(capsys, 2, "conjugate posterior oracle", ok,
           f"{'; '.join(details)}; {chain.n_kept} kept, {elapsed:.1f}s "
           f"need <30s")


def test_criterion_03_toy_line_recovery(capsys):
    rng = np.random.default_rng(1)
    x = np.linspace(0.0, 1.0, 100).reshape(-1, 1)
    y = 3.0 * x[:, 0] + 4.0 + rng.normal(0.0, 0.5, size=100)
    data = tiny_regression_dataset(x, y)
    spec = ModelSpec(family="linear", task="regression", input_num=1,
                     learning_rate=0.1)
    config = SamplerConfig(n_samples=20_000, burn_in_fraction=0.25,
                           step_theta=0.02, step_eta=0.01, sigma2_prior=5.0,
                           seed=1)
    chain = run_chain(spec, data, config)
    w = float(chain.pos_theta[:, 0].mean())
    b = float(chain.pos_theta[:, 1].mean())
    ok = 2.7 <= w <= 3.3 and 3.7 <= b <= 4.3
    report(capsys, 3, "toy line recovery", ok,
           f"w {w:.4f} need [2.7, 3.3], b {b:.4f} need [3.7, 4.3]")


def test_criterion_04_regression_benchmarks(capsys, table_runs):
    bands = {"linear": (0.025, 0.022), "mlp": (0.027, 0.026)}
    details, ok = [], True
    for family, (train_band, test_band) in bands.items():
        resp, elapsed = table_runs["sunspot", family]
        hit = (abs(resp.train_metric_mean - train_band) <= 0.015
               and abs(resp.test_metric_mean - test_band) <= 0.015)
        ok = ok and hit and not resp.chain_failures
        details.append(
            f"sunspot {family} train/test RMSE "
            f"{resp.train_metric_mean:.4f}/{resp.test_metric_mean:.4f} need "
            f"{train_band}/{test_band} +/-0.015 in {elapsed:.0f}s")
    abalone_bands = {"linear": (0.085, 0.086), "mlp": (0.080, 0.080)}
    try:
        for family, (train_band, test_band) in abalone_bands.items():
            resp = handle_sample(SampleRequest(
                dataset="abalone", model=family, n_chains=5, n_samples=10000,
                burn_in_fraction=0.5, seed=1,
                out_dir=f"runs/acceptance/abalone_{family}"))
            hit = (abs(resp.train_metric_mean - train_band) <= 0.015
                   and abs(resp.test_metric_mean - test_band) <= 0.015)
            ok = ok and hit and not resp.chain_failures
            details.append(
                f"abalone {family} train/test RMSE "
                f"{resp.train_metric_mean:.4f}/{resp.test_metric_mean:.4f} "
                f"need {train_band}/{test_band} +/-0.015")
    except DataError:
        ok = False
        details.append("abalone: dataset not vendored and no local copy "
                       "found (set BAYESMC_DATA_DIR)")
    report(capsys, 4, "regression benchmark RMSE", ok, "; ".join(details))


def test_criterion_05_classification_benchmarks(capsys, table_runs):
    thresholds = {"mlp": 90.0, "linear": 85.0}
    details, ok = [], True
    for family, need in thresholds.items():
        resp, elapsed = table_runs["iris", family]
        hit = resp.test_metric_mean >= need and not resp.chain_failures
        ok = ok and hit
        details.append(f"iris {family} test accuracy "
                       f"{resp.test_metric_mean:.1f}% need >={need:.0f}% "
                       f"in {elapsed:.0f}s")
    try:
        for family, need in (("mlp", 85.0), ("linear", 80.0)):
            resp = handle_sample(SampleRequest(
                dataset="ionosphere", model=family, n_chains=5,
                n_samples=10000, burn_in_fraction=0.5, seed=1,
                out_dir=f"runs/acceptance/ionosphere_{family}"))
            hit = resp.test_metric_mean >= need and not resp.chain_failures
            ok = ok and hit
            details.append(f"ionosphere {family} test accuracy "
                           f"{resp.test_metric_mean:.1f}% need >={need:.0f}%")
    except DataError:
        ok = False
        details.append("ionosphere: dataset not vendored and no local copy "
                       "found (set BAYESMC_DATA_DIR)")
    report(capsys, 5, "classification benchmark accuracy", ok,
           "; ".join(details))


def test_criterion_06_acceptance_rate_structure(capsys, table_runs):
    linear_rate = float(np.mean(table_runs["sunspot", "linear"][0]
                                .acceptance_rates))
    mlp_rate = float(np.mean(table_runs["sunspot", "mlp"][0]
                             .acceptance_rates))
    iris_rate = float(np.mean(table_runs["iris", "mlp"][0].acceptance_rates))
    regression_ok = mlp_rate < linear_rate
    classification_ok = iris_rate > 0.80
    ok = regression_ok and classification_ok
    report(capsys, 6, "acceptance-rate structure", ok,
           f"sunspot mlp {mlp_rate:.3f} need < linear {linear_rate:.3f} "
           f"[{'ok' if regression_ok else 'violated'}]; iris mlp "
           f"{iris_rate:.3f} need >0.80 "
           f"[{'ok' if classification_ok else 'violated'}]")


def test_criterion_07_gradient_finite_differences(capsys):
    # theta - sgd_step(theta) equals the gradient of the half-SSE loss for a
    # single instance at learning rate 1, checked against central
    # differences on 100 random layer geometries.
    rng = np.random.default_rng(7)
    worst = 0.0
    ok = True
    for _ in range(100):
        input_num = int(rng.integers(1, 5))
        hidden_num = int(rng.integers(1, 6))
        output_num = int(rng.integers(1, 4))
        spec = ModelSpec(family="mlp", task="regression",
                         input_num=input_num, hidden_num=hidden_num,
                         output_num=output_num, learning_rate=1.0)
        model = build_model(spec)
        theta = rng.normal(scale=0.5, size=spec.n_params)
        x = rng.normal(size=(1, input_num))
        y = rng.uniform(0.1, 0.9, size=(1, output_num))
        analytic = theta - langevin_gradient(model, x, y, theta, depth=1)

        def loss(t):
            return 0.5 * float(np.sum((y - model.evaluate(x, t)) ** 2))

        h = 1e-6
        numeric = np.empty_like(theta)
        for j in range(theta.size):
            up, down = theta.copy(), theta.copy()
            up[j] += h
            down[j] -= h
            numeric[j] = (loss(up) - loss(down)) / (2 * h)
        err = float(np.max(np.abs(analytic - numeric)
                           / np.maximum(np.abs(numeric), 1e-3)))
        worst = max(worst, err)
        ok = ok and np.allclose(analytic, numeric, rtol=1e-5, atol=1e-8)
    report(capsys, 7, "backward pass vs finite differences", ok,
           f"100 random networks, worst relative error {worst:.2e} "
           f"need <=1e-5")


def test_criterion_08_langevin_qratio_density(capsys):
    # The proposal is N(theta_bar, step^2 I); the returned log q-ratio must
    # match ln q(theta | theta') - ln q(theta' | theta) evaluated with
    # scipy's full multivariate-normal density.
    rng = np.random.default_rng(3)
    x = rng.uniform(-1.0, 1.0, size=(12, 1))
    y = 1.5 * x[:, 0] + 0.2
    spec = ModelSpec(family="linear", task="regression", input_num=1,
                     learning_rate=0.1)
    model = build_model(spec)
    config = SamplerConfig(step_theta=0.05, sigma2_prior=5.0, seed=1)
    cov = config.step_theta ** 2 * np.eye(spec.n_params)

    worst = 0.0
    for i in range(25):
        theta = rng.normal(size=spec.n_params)
        proposal, log_q = langevin_propose(model, x, y, theta, config,
                                           np.random.default_rng(100 + i))
        theta_bar = langevin_gradient(model, x, y, theta, config.sgd_depth)
        reverse_bar = langevin_gradient(model, x, y, proposal,
                                        config.sgd_depth)
        expected = (stats.multivariate_normal.logpdf(theta, reverse_bar, cov)
                    - stats.multivariate_normal.logpdf(proposal, theta_bar,
                                                       cov))
        worst = max(worst, abs(log_q - expected))

    zero_spec = ModelSpec(family="linear", task="regression", input_num=1,
                          learning_rate=0.0)
    _, zero_q = langevin_propose(build_model(zero_spec), x, y,
                                 np.zeros(2), config,
                                 np.random.default_rng(0))
    ok = worst <= 1e-9 and zero_q == 0.0
    report(capsys, 8, "langevin q-ratio density", ok,
           f"worst |diff| {worst:.2e} need <=1e-9 over 25 states; "
           f"r=0 log q-ratio {zero_q!r} need exactly 0.0")


def test_criterion_09_rhat_properties(capsys):
    rng = np.random.default_rng(99)
    iid = rng.normal(size=(4, 1000))
    rhat_iid = split_rhat(iid)
    separated = np.stack([rng.normal(0.0, 1.0, 1000),
                          rng.normal(5.0, 1.0, 1000),
                          rng.normal(0.0, 1.0, 1000),
                          rng.normal(5.0, 1.0, 1000)])
    rhat_sep = split_rhat(separated)
    affine_gap = abs(split_rhat(3.0 * iid + 7.0) - rhat_iid)
    ok = (0.99 <= rhat_iid <= 1.05 and rhat_sep > 1.5
          and affine_gap <= 1e-10)
    report(capsys, 9, "split R-hat properties", ok,
           f"iid {rhat_iid:.4f} need [0.99, 1.05]; separated {rhat_sep:.2f} "
           f"need >1.5; affine gap {affine_gap:.1e} need <=1e-10")


def test_criterion_10_manifest_replay(capsys, tmp_path):
    first = handle_sample(SampleRequest(
        dataset="iris", model="linear", n_chains=2, n_samples=50,
        burn_in_fraction=0.5, seed=7, out_dir=str(tmp_path / "first")))
    replay = handle_sample(SampleRequest(
        manifest_path=first.manifest_path, out_dir=str(tmp_path / "replay")))
    pairs = list(zip(first.posterior_paths, replay.posterior_paths))
    identical = all(open(a, "rb").read() == open(b, "rb").read()
                    for a, b in pairs)
    ok = identical and len(pairs) == 2
    report(capsys, 10, "manifest replay determinism", ok,
           f"{len(pairs)} posterior files byte-identical: {identical}")
