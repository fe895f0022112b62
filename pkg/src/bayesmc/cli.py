"""Command-line interface.

Each subcommand builds a pydantic request model from, in order of
precedence, command-line flags, then a ``--config`` file of flat
``key=value`` lines, then the model defaults, and passes it to the
matching service handler. With ``--server URL`` the request is POSTed
to a running ``bayesmc serve`` instance instead and the JSON response
is rendered identically.

Exit codes: 0 success, 1 unexpected failure, 2 usage (argparse),
3 invalid parameters, 4 data problems, 5 numerical failures.
Progress goes to stderr; results are written to files by the handlers.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import httpx
from pydantic import ValidationError

from . import __version__
from .errors import BayesmcError, InvalidParameterError
from .service import (
    DemoRequest, DemoResponse, handle_demo,
    SampleRequest, SampleResponse, handle_sample,
    PredictRequest, PredictResponse, handle_predict,
    DiagnoseRequest, DiagnoseResponse, handle_diagnose,
    WindowRequest, WindowResponse, handle_window,
)


class RemoteError(BayesmcError):
    """Server-side failure relayed to the client with its exit code."""

    def __init__(self, message: str, exit_code: int = 1):
        super().__init__(message)
        self.exit_code = exit_code


def parse_config_file(path) -> dict:
    """Read a flat key=value config file (#-comments and blanks allowed)."""
    path = Path(path)
    if not path.is_file():
        raise InvalidParameterError(f"no such config file: {path}")
    values = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise InvalidParameterError(
                f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", metavar="FILE",
                     help="flat key=value config file; flags take precedence")
    sub.add_argument("--server", metavar="URL",
                     help="send the request to a running bayesmc server")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bayesmc",
        description="Bayesian linear and neural-network regression and "
                    "classification via MCMC")
    parser.add_argument("--version", action="version",
                        version=f"bayesmc {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    demo = subs.add_parser(
        "demo", help="binomial success-probability sampler demo")
    demo.add_argument("--k", type=int, help="observed successes (default 50)")
    demo.add_argument("--n", type=int, help="number of trials (default 100)")
    demo.add_argument("--n-samples", type=int)
    demo.add_argument("--burn-in-fraction", type=float)
    demo.add_argument("--seed", type=int)
    demo.add_argument("--out-dir")
    _add_common(demo)

    sample = subs.add_parser(
        "sample", help="run multi-chain MCMC on a dataset")
    sample.add_argument("--dataset",
                        help="registry name: sunspot|abalone|iris|ionosphere")
    sample.add_argument("--csv", dest="csv_path",
                        help="train on a CSV file instead of a registry name")
    sample.add_argument("--target-column",
                        help="target column name or index (default: last)")
    sample.add_argument("--task", choices=["regression", "classification"])
    sample.add_argument("--model", choices=["linear", "mlp"])
    sample.add_argument("--hidden-num", type=int)
    sample.add_argument("--n-chains", type=int)
    sample.add_argument("--n-samples", type=int,
                        help="samples per chain (default 5000)")
    sample.add_argument("--burn-in-fraction", type=float)
    sample.add_argument("--step-theta", type=float)
    sample.add_argument("--step-eta", type=float)
    sample.add_argument("--sigma2-prior", type=float)
    sample.add_argument("--nu1", type=float)
    sample.add_argument("--nu2", type=float)
    sample.add_argument("--use-langevin", action=argparse.BooleanOptionalAction,
                        default=None)
    sample.add_argument("--l-prob", type=float)
    sample.add_argument("--sgd-depth", type=int)
    sample.add_argument("--learning-rate", type=float)
    sample.add_argument("--tau2-fixed", type=float)
    sample.add_argument("--train-fraction", type=float)
    sample.add_argument("--shuffle", action=argparse.BooleanOptionalAction,
                        default=None)
    sample.add_argument("--embed-d", type=int)
    sample.add_argument("--embed-t", type=int)
    sample.add_argument("--embed-mode", choices=["horizon", "stride"])
    sample.add_argument("--abalone-sex", choices=["drop", "onehot"])
    sample.add_argument("--data-dir")
    sample.add_argument("--manifest", dest="manifest_path",
                        help="replay a previous run from its manifest.json")
    sample.add_argument("--seed", type=int)
    sample.add_argument("--jobs", type=int)
    sample.add_argument("--out-dir")
    _add_common(sample)

    predict = subs.add_parser(
        "predict", help="posterior predictions from a finished run")
    predict.add_argument("--manifest", dest="manifest_path", required=True)
    predict.add_argument("--split", choices=["train", "test"])
    predict.add_argument("--num-draws", type=int)
    predict.add_argument("--mode", choices=["gaussian-approx", "empirical"])
    predict.add_argument("--sequential", action=argparse.BooleanOptionalAction,
                         default=None)
    predict.add_argument("--seed", type=int)
    predict.add_argument("--out", dest="out_path")
    _add_common(predict)

    diagnose = subs.add_parser(
        "diagnose", help="convergence summary across chain CSV files")
    diagnose.add_argument("chain_csvs", nargs="+", metavar="CHAIN_CSV")
    diagnose.add_argument("--thin", type=int)
    diagnose.add_argument("--out-dir")
    _add_common(diagnose)

    window = subs.add_parser(
        "window", help="embed a time series into windowed rows")
    window.add_argument("csv_path", metavar="CSV")
    window.add_argument("--column",
                        help="series column name or index (default: last)")
    window.add_argument("--d", type=int, help="window size (default 4)")
    window.add_argument("--t", type=int, help="time lag (default 2)")
    window.add_argument("--mode", choices=["horizon", "stride"])
    window.add_argument("--out", dest="out_path")
    _add_common(window)

    serve = subs.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def _print_demo(r: DemoResponse) -> None:
    print(f"posterior mean {r.mean:.4f}  std {r.std:.4f}  "
          f"95% CI [{r.ci_lo:.4f}, {r.ci_hi:.4f}]  ({r.n_kept} kept samples)")
    print(f"wrote {r.posterior_path} and {r.summary_path}")


def _print_sample(r: SampleResponse) -> None:
    rates = ", ".join(f"{rate:.3f}" for rate in r.acceptance_rates)
    print(f"train {r.metric_name}: {r.train_metric_mean:.5f} "
          f"± {r.train_metric_std:.5f}")
    print(f"test  {r.metric_name}: {r.test_metric_mean:.5f} "
          f"± {r.test_metric_std:.5f}")
    print(f"acceptance rates: [{rates}]  ({r.n_kept_total} kept samples)")
    for index, message in r.chain_failures:
        print(f"warning: chain {index} failed: {message}", file=sys.stderr)
    print(f"wrote {r.manifest_path}")


def _print_predict(r: PredictResponse) -> None:
    print(f"wrote {r.path} ({r.n_rows} rows, mode {r.mode}, "
          f"{r.num_draws} draws, 95% band coverage {r.coverage:.3f})")


def _print_diagnose(r: DiagnoseResponse) -> None:
    header = f"{'name':>12}  {'mean':>12}  {'std':>12}  {'rhat':>8}"
    print(header)
    for row in r.rows:
        print(f"{row['name']:>12}  {row['mean']:>12.5f}  "
              f"{row['std']:>12.5f}  {row['rhat']:>8.4f}")
    print(f"wrote {r.summary_csv} and {r.summary_json}")


def _print_window(r: WindowResponse) -> None:
    print(f"wrote {r.path} ({r.n_rows} rows, d={r.d}, t={r.t}, {r.mode})")


SUBCOMMANDS = {
    "demo": (DemoRequest, DemoResponse, handle_demo, "/demo", _print_demo),
    "sample": (SampleRequest, SampleResponse, handle_sample, "/sample",
               _print_sample),
    "predict": (PredictRequest, PredictResponse, handle_predict, "/predict",
                _print_predict),
    "diagnose": (DiagnoseRequest, DiagnoseResponse, handle_diagnose,
                 "/diagnose", _print_diagnose),
    "window": (WindowRequest, WindowResponse, handle_window, "/window",
               _print_window),
}


def _request_values(args: argparse.Namespace, request_cls) -> dict:
    values = {}
    if args.config:
        values.update(parse_config_file(args.config))
    for name in request_cls.model_fields:
        provided = getattr(args, name, None)
        if provided is not None:
            values[name] = provided
    return values


def _remote(server: str, endpoint: str, request, response_cls):
    url = server.rstrip("/") + endpoint
    response = httpx.post(url, json=request.model_dump(mode="json"),
                          timeout=None)
    if response.status_code == 400:
        payload = response.json()
        raise RemoteError(payload.get("message", response.text),
                          payload.get("exit_code", 1))
    response.raise_for_status()
    return response_cls.model_validate(response.json())


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "serve":
        import uvicorn

        from .service import create_app
        uvicorn.run(create_app(), host=args.host, port=args.port)
        return 0
    request_cls, response_cls, handler, endpoint, printer = \
        SUBCOMMANDS[args.command]
    request = request_cls(**_request_values(args, request_cls))
    if args.command in ("demo", "sample"):
        print(f"running {args.command} ...", file=sys.stderr)
    if args.server:
        response = _remote(args.server, endpoint, request, response_cls)
    else:
        response = handler(request)
    printer(response)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ValidationError as err:
        print(f"bayesmc: invalid request: {err}", file=sys.stderr)
        return 3
    except BayesmcError as err:
        print(f"bayesmc: {err}", file=sys.stderr)
        return err.exit_code
    except httpx.HTTPError as err:
        print(f"bayesmc: server request failed: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
