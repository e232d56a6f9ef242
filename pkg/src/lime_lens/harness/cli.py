"""Command-line interface.

Exit status is 0 on success, 1 on usage errors and 2 on numerical or
degenerate-design errors. Vector flags take comma-separated values; use
``--xi=-1,2`` when the first value is negative.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .. import theory
from ..errors import NumericalError, UsageError
from ..models import LinearModel, fit_linear, train_kernel_ridge
from ..sampling import SamplingConfig, theoretical_grid
from ..surrogate import explain
from . import experiments

__all__ = ["main", "build_parser"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_config_flags(p, need_xi: bool = True):
    p.add_argument("--xi", type=_floats, required=need_xi, help="instance to explain")
    p.add_argument("--mu", type=_floats, default=[0.0], help="sampling mean (scalar or vector)")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--nu", type=float, default=1.0, help="kernel bandwidth")
    p.add_argument("--bins", type=int, default=4, help="number of quantile bins p")
    p.add_argument("--samples", type=int, default=1000, help="number of perturbations n")
    p.add_argument("--seed", type=int, default=0)


def _add_model_flags(p):
    p.add_argument("--coef", type=_floats, help="slopes of a linear black box")
    p.add_argument("--intercept", type=float, default=0.0)


def _add_output_flags(p, formats=("json", "csv")):
    p.add_argument("--format", choices=formats, default="json")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lime-lens", description="TabularLIME explanations and their closed-form expectations.")
    parser.add_argument("--threads", type=int, help="worker threads (default: LIME_LENS_THREADS or CPU count)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("explain", help="run TabularLIME once")
    _add_config_flags(p)
    _add_model_flags(p)
    p.add_argument("--data", help="CSV to train the black box on (features then target)")
    p.add_argument("--model", choices=("linear", "kernel_ridge"), default="linear")
    p.add_argument("--target", help="target column name or 0-based index")
    p.add_argument("--header", action="store_true", help="the CSV has a header row")
    p.add_argument("--ridge", type=float, default=0.0)
    _add_output_flags(p)

    p = sub.add_parser("theory", help="closed-form report for a configuration")
    _add_config_flags(p)
    _add_model_flags(p)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--eta", type=float)
    _add_output_flags(p, ("json",))

    p = sub.add_parser("figure", help="run a desk-scale experiment")
    p.add_argument("name", choices=("fig5", "reference", "switchoff", "errors", "convergence", "dataset"))
    p.add_argument("--seed", type=int, default=experiments.DEFAULT_SEED)
    p.add_argument("--data", help="CSV for the dataset experiment")
    p.add_argument("--model", choices=("linear", "kernel_ridge"), default="linear")
    p.add_argument("--target", help="target column name or 0-based index")
    p.add_argument("--header", action="store_true")
    p.add_argument("--plot", action=argparse.BooleanOptionalAction, default=True, help="write plot.svg")
    _add_output_flags(p)

    p = sub.add_parser("sweep-nu", help="theta_j as a function of the bandwidth")
    _add_config_flags(p)
    p.add_argument("--feature", type=int, default=1, help="1-based feature index")
    p.add_argument("--nu-min", type=float, default=0.05)
    p.add_argument("--nu-max", type=float, default=5.0)
    p.add_argument("--steps", type=int, default=100)
    _add_output_flags(p)

    p = sub.add_parser("sample-size", help="samples needed for |beta_hat - beta| <= epsilon w.p. 1 - eta")
    _add_config_flags(p)
    _add_model_flags(p)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--eta", type=float, required=True)
    return parser


def _config(args) -> SamplingConfig:
    return SamplingConfig(args.xi, args.mu, args.sigma, args.nu, p=args.bins, n=args.samples, seed=args.seed)


def _linear(args, d: int) -> LinearModel | None:
    if args.coef is None:
        return None
    if len(args.coef) != d:
        raise UsageError(f"--coef has {len(args.coef)} values but --xi has {d}")
    return LinearModel(args.coef, args.intercept)


def _emit(text: str, out_dir, filename: str):
    if out_dir:
        from pathlib import Path

        target = Path(out_dir)
        target.mkdir(parents=True, exist_ok=True)
        (target / filename).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _dumps(obj) -> str:
    return json.dumps(experiments._jsonable(obj), indent=2, allow_nan=False) + "\n"


def _cmd_explain(args) -> None:
    config = _config(args)
    if args.data:
        data = experiments.load_training_data(args.data, args.target, args.header)
        model = fit_linear(data) if args.model == "linear" else train_kernel_ridge(
            data, experiments.KERNEL_SCALE, experiments.KERNEL_RIDGE
        )
    else:
        model = _linear(args, config.dim)
        if model is None:
            raise UsageError("explain needs --coef or --data")
    grid = theoretical_grid(config.mu, config.sigma, config.p)
    result = explain(model, config, grid, ridge=args.ridge, workers=args.threads)
    if args.format == "json":
        _emit(_dumps(result.to_dict()), args.out, "explanation.json")
    else:
        lines = ["coefficient,value"] + [f"beta_{j},{float(v)!r}" for j, v in enumerate(result.beta_hat)]
        _emit("\n".join(lines) + "\n", args.out, "explanation.csv")


def _cmd_theory(args) -> None:
    config = _config(args)
    grid = theoretical_grid(config.mu, config.sigma, config.p)
    report = theory.theory_report(config, grid, _linear(args, config.dim), args.epsilon, args.eta)
    _emit(_dumps(report.to_dict()), args.out, "theory.json")


def _cmd_figure(args) -> None:
    name, seed, workers = args.name, args.seed, args.threads
    if name == "dataset":
        if not args.data:
            raise UsageError("figure dataset needs --data")
        record = experiments.run_dataset_comparison(
            args.data, args.model, seed, workers, target_column=args.target, has_header=args.header
        )
    else:
        runner = {
            "fig5": experiments.run_fig5,
            "reference": experiments.run_fig5_reference,
            "switchoff": experiments.run_switch_off,
            "errors": experiments.run_error_histogram,
            "convergence": experiments.run_convergence,
        }[name]
        record = runner(seed, workers)
    for c in record.checks:
        status = "PASS" if c["passed"] else "FAIL"
        print(f"{status} {record.experiment_id}.{c['name']}: value={c['value']:.6g} threshold={c['threshold']:.6g}",
              file=sys.stderr)
    if args.out:
        path = experiments.write_record(record, args.out, plot=args.plot)
        print(f"wrote {path}", file=sys.stderr)
    else:
        sys.stdout.write(record.to_json() if args.format == "json" else record.to_csv())


def _cmd_sweep(args) -> None:
    config = _config(args)
    j = args.feature - 1
    if not 0 <= j < config.dim:
        raise UsageError(f"--feature must lie in 1..{config.dim}, got {args.feature}")
    if not (0 < args.nu_min < args.nu_max) or args.steps < 2:
        raise UsageError("need 0 < --nu-min < --nu-max and --steps >= 2")
    grid = theoretical_grid(config.mu, config.sigma, config.p)
    nus = np.geomspace(args.nu_min, args.nu_max, args.steps)
    thetas = [theory.theta(j, config.replace(nu=float(nu)), grid) for nu in nus]
    v = theory.v_crit(j, config, grid)
    if args.format == "json":
        payload = {"feature": args.feature, "v_crit": v, "nu": nus, "theta": thetas}
        _emit(_dumps(payload), args.out, "sweep.json")
    else:
        lines = ["nu,theta"] + [f"{float(a)!r},{float(b)!r}" for a, b in zip(nus, thetas)]
        _emit("\n".join(lines) + "\n", args.out, "sweep.csv")


def _cmd_sample_size(args) -> None:
    config = _config(args)
    model = _linear(args, config.dim)
    if model is None:
        raise UsageError("sample-size needs --coef")
    grid = theoretical_grid(config.mu, config.sigma, config.p)
    print(theory.sample_size_bound(model, config, grid, args.epsilon, args.eta))


_COMMANDS = {
    "explain": _cmd_explain,
    "theory": _cmd_theory,
    "figure": _cmd_figure,
    "sweep-nu": _cmd_sweep,
    "sample-size": _cmd_sample_size,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
