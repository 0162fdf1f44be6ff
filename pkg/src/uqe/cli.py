"""Command-line entry point (``uqe``)."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .core_stats import BandwidthRule
from .data import Dataset
from .dgp import DgpSpec, bias_curve, bias_decomposition, generate_sample
from .engine import EstimationConfig, estimate_mean_effect, estimate_uqe, mte_tau_curve
from .errors import InvalidInputError, UqeError
from .harness import POWER_BETAS, TABLE_BETAS, TABLE_RHOS, ExperimentPlan, run
from .propensity import fit_propensity
from .series import BasisSpec

log = logging.getLogger("uqe")

EXPERIMENT_DEFAULTS = {
    "coverage": {"beta": TABLE_BETAS, "rho": TABLE_RHOS, "tau_grid": (0.1, 0.5), "reps": 1000, "n": 1000},
    "power": {"beta": POWER_BETAS, "rho": TABLE_RHOS, "tau_grid": (0.2, 0.3, 0.4, 0.5), "reps": 1000, "n": 1000},
    "rmse": {"beta": (1.0,), "rho": (0.5,), "tau_grid": (0.5,), "reps": 200, "n": 1000, "n_grid": (500, 4000)},
}
BIAS_DEFAULTS = {"beta": (1.0,), "rho": (0.0, 0.25, 0.5, 0.75, 0.9), "tau_grid": tuple(np.round(np.arange(0.1, 0.91, 0.05), 2))}


# ---------------------------------------------------------------- parsing helpers

def float_list(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    try:
        return tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def int_list(text) -> tuple:
    return tuple(int(round(v)) for v in float_list(text))


def bandwidth(text):
    try:
        return BandwidthRule.parse(text)
    except InvalidInputError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def read_dataset(path) -> Dataset:
    """Read ``y, d, z1[, z2..][, x1..]`` from a header CSV, naming the offending line on error."""
    text = Path(path).read_text(encoding="utf-8") if str(path) != "-" else sys.stdin.read()
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise InvalidInputError(f"{path}: empty file, expected a header with columns y, d, z1") from None
    missing = [c for c in ("y", "d", "z1") if c not in header]
    if missing:
        raise InvalidInputError(f"{path}: missing required column(s) {', '.join(missing)}")
    if len(set(header)) != len(header):
        raise InvalidInputError(f"{path}: duplicate column names in header")
    z_cols = sorted((c for c in header if c.startswith("z") and c[1:].isdigit()), key=lambda c: int(c[1:]))
    x_cols = sorted((c for c in header if c.startswith("x") and c[1:].isdigit()), key=lambda c: int(c[1:]))
    unknown = set(header) - {"y", "d"} - set(z_cols) - set(x_cols)
    if unknown:
        raise InvalidInputError(f"{path}: unknown column(s) {', '.join(sorted(unknown))}")
    idx = {c: header.index(c) for c in header}
    rows = []
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise InvalidInputError(f"{path}: line {line} has {len(row)} fields, expected {len(header)}")
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise InvalidInputError(f"{path}: line {line} contains a non-numeric value") from None
        if not all(math.isfinite(v) for v in vals):
            raise InvalidInputError(f"{path}: line {line} contains a non-finite value")
        if vals[idx["d"]] not in (0.0, 1.0):
            raise InvalidInputError(f"{path}: line {line}: d must be 0 or 1, got {row[idx['d']]}")
        rows.append(vals)
    if not rows:
        raise InvalidInputError(f"{path}: no data rows")
    arr = np.array(rows)
    col = lambda names: arr[:, [idx[c] for c in names]]  # noqa: E731
    return Dataset(y=arr[:, idx["y"]], d=arr[:, idx["d"]], z=col(z_cols), x=col(x_cols) if x_cols else None)


def write_dataset(data: Dataset, path) -> None:
    header = ["y", "d"] + [f"z{j + 1}" for j in range(data.z.shape[1])] + [f"x{j + 1}" for j in range(data.x.shape[1])]
    table = np.column_stack([data.y, data.d, data.z, data.x])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in table:
            w.writerow([repr(float(v)) for v in row])


def _rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _emit(rows: list[dict], args, stem: str) -> None:
    text = _rows_to_csv(rows) if args.format == "csv" else json.dumps(_jsonable(rows), indent=2)
    if args.out is None:
        sys.stdout.write(text)
        return
    out = Path(args.out)
    if out.suffix:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")
    else:
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{stem}.{args.format}").write_text(text, encoding="utf-8")


def manifest(args, extra: dict | None = None) -> dict:
    settings = {k: v for k, v in vars(args).items() if k != "func"}
    return _jsonable({
        "command": args.command,
        "settings": {k: (str(v) if isinstance(v, BandwidthRule) else v) for k, v in settings.items()},
        "versions": {"uqe": __version__, "python": platform.python_version(), "numpy": np.__version__,
                     "scipy": scipy.__version__},
        **(extra or {}),
    })


def estimation_config(args, tau: float | None = None) -> EstimationConfig:
    basis = BasisSpec(degree=args.degree, interactions=True, lam=args.lam)
    return EstimationConfig(tau=tau if tau is not None else args.tau, bandwidth=args.bandwidth, link=args.link,
                            basis=basis, ci_level=args.level, fd_epsilon_factor=args.fd_epsilon_factor,
                            ps_basis=BasisSpec(degree=args.degree, interactions=True, lam=args.lam))


def _taus(args) -> tuple:
    return tuple(args.tau_grid) if args.tau_grid else (args.tau,)


# ---------------------------------------------------------------- commands

def cmd_estimate(args) -> int:
    data = read_dataset(args.input)
    rows = []
    for tau in _taus(args):
        est = estimate_uqe(data, estimation_config(args, tau))
        rows.append(est.summary())
    _emit(rows, args, "estimate")
    return 0


def cmd_mean_effect(args) -> int:
    data = read_dataset(args.input)
    _emit([estimate_mean_effect(data, estimation_config(args)).summary()], args, "mean_effect")
    return 0


def cmd_mte_curve(args) -> int:
    data = read_dataset(args.input)
    cfg = estimation_config(args)
    ps = fit_propensity(data, cfg.link, cfg.ps_basis)
    if args.u_grid:
        grid = np.array(args.u_grid)
    else:
        from .propensity import propensity
        p = propensity(ps, data.z, data.x)
        grid = np.linspace(np.quantile(p, 0.05), np.quantile(p, 0.95), 19)
    rows = []
    for tau in _taus(args):
        curve = mte_tau_curve(data, ps, cfg.with_tau(tau), grid)
        rows.extend({"tau": tau, "u": float(u), "mte": float(m)} for u, m in zip(grid, curve))
    _emit(rows, args, "mte_curve")
    return 0


def _plan(args, kind: str) -> ExperimentPlan:
    d = EXPERIMENT_DEFAULTS[kind]
    return ExperimentPlan(
        kind=kind,
        beta_grid=args.beta if args.beta is not None else d["beta"],
        rho_grid=args.rho if args.rho is not None else d["rho"],
        tau_grid=args.tau_grid if args.tau_grid else d["tau_grid"],
        n=args.n if args.n is not None else d["n"],
        replications=args.reps if args.reps is not None else d["reps"],
        seed=args.seed,
        config=estimation_config(args, 0.5),
        variant=args.variant,
        latent=args.latent,
        n_grid=args.n_grid if args.n_grid else d.get("n_grid", ()),
        workers=args.workers,
    )


def cmd_experiment(args) -> int:
    plan = _plan(args, args.command)
    result = run(plan)
    out = Path(args.out) if args.out else None
    files = {f"{plan.kind}.csv": result.to_csv(), f"{plan.kind}.json": result.to_json()}
    if plan.kind == "power":
        files["power_curves.csv"] = _rows_to_csv(result.power_series())
    mani = manifest(args, {"plan": plan.to_dict(), "flagged_cells": sum(c.flagged for c in result.cells)})
    files["manifest.json"] = json.dumps(mani, indent=2)
    if out is None:
        sys.stdout.write(files[f"{plan.kind}.{args.format}"])
    else:
        out.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            (out / name).write_text(text, encoding="utf-8")
    if result.any_flagged:
        log.warning("%d cell(s) had more than 5%% failed replications", sum(c.flagged for c in result.cells))
        if args.strict:
            return 3
    return 0


def cmd_bias(args) -> int:
    betas = args.beta if args.beta is not None else BIAS_DEFAULTS["beta"]
    rhos = args.rho if args.rho is not None else BIAS_DEFAULTS["rho"]
    taus = args.tau_grid if args.tau_grid else BIAS_DEFAULTS["tau_grid"]
    rows = []
    for beta in betas:
        for row in bias_curve(args.variant, beta, taus, rhos):
            row = {"beta": beta, **row}
            row["identity_gap"] = row["a"] - row["pi"] - row["b1"] - row["b2"]
            rows.append(row)
    _emit(rows, args, "bias")
    if args.out and not Path(args.out).suffix:
        Path(args.out, "manifest.json").write_text(json.dumps(manifest(args), indent=2), encoding="utf-8")
    return 0


def cmd_oracle(args) -> int:
    betas = args.beta if args.beta is not None else (0.0,)
    rhos = args.rho if args.rho is not None else (0.0,)
    if args.emit_sample:
        spec = DgpSpec(args.variant, betas[0], rhos[0], seed=args.seed, latent=args.latent)
        write_dataset(generate_sample(spec, args.n or 1000), args.emit_sample)
    rows = []
    for beta in betas:
        for rho in rhos:
            spec = DgpSpec(args.variant, beta, rho)
            for tau in _taus(args):
                rows.append({"beta": beta, "rho": rho, **bias_decomposition(spec, tau).as_row()})
    _emit(rows, args, "oracle")
    return 0


# ---------------------------------------------------------------- parser

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--tau-grid", type=float_list, default=None)
    p.add_argument("--link", choices=("logit", "probit", "series"), default="probit")
    p.add_argument("--degree", type=int, default=3)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--bandwidth", type=bandwidth, default=BandwidthRule())
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--fd-epsilon-factor", type=float, default=1.0)
    p.add_argument("--beta", type=float_list, default=None)
    p.add_argument("--rho", type=float_list, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--n-grid", type=int_list, default=None)
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--seed", type=int, default=20240101)
    p.add_argument("--variant", choices=("plain", "covariate"), default="plain")
    p.add_argument("--latent", choices=("conditional", "clipped"), default="conditional")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--strict", action="store_true")
    p.add_argument("--config", default=None, help="key=value file; command-line flags take precedence")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uqe", description="Quantile effects of shifting a selected binary treatment through its instrument.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    specs = [
        ("estimate", cmd_estimate, "estimate the quantile effect from a CSV", True),
        ("mean-effect", cmd_mean_effect, "estimate the marginal mean effect from a CSV", True),
        ("mte-curve", cmd_mte_curve, "estimate the quantile MTE curve from a CSV", True),
        ("power", cmd_experiment, "simulate the power of the no-effect test", False),
        ("coverage", cmd_experiment, "simulate confidence interval coverage", False),
        ("rmse", cmd_experiment, "simulate estimator RMSE across sample sizes", False),
        ("bias", cmd_bias, "tabulate the bias of the exogenous-treatment estimand", False),
        ("oracle", cmd_oracle, "quadrature truth; optionally write a simulated sample", False),
    ]
    for name, func, help_, needs_input in specs:
        p = sub.add_parser(name, help=help_)
        if needs_input:
            p.add_argument("input", help="CSV with columns y, d, z1[, z2...][, x1...]")
        if name == "mte-curve":
            p.add_argument("--u-grid", type=float_list, default=None)
        if name == "oracle":
            p.add_argument("--emit-sample", default=None, metavar="CSV")
        _common(p)
        p.set_defaults(func=func)
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    sub = parser._subparsers._group_actions[0].choices[args.command]  # noqa: SLF001
    by_key = {}
    for action in sub._actions:  # noqa: SLF001
        for opt in action.option_strings:
            if opt.startswith("--"):
                by_key[opt[2:]] = action
                by_key[opt[2:].replace("-", "_")] = action
    overrides = {}
    for lineno, raw in enumerate(Path(args.config).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInputError(f"{args.config}: line {lineno} is not key=value")
        key, value = (t.strip() for t in line.split("=", 1))
        action = by_key.get(key)
        if action is None or key in ("config", "out"):
            raise InvalidInputError(f"{args.config}: line {lineno}: unknown key {key!r}")
        if action.nargs == 0:
            overrides[action.dest] = value.lower() in ("1", "true", "yes", "on")
        else:
            try:
                overrides[action.dest] = action.type(value) if action.type else value
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise InvalidInputError(f"{args.config}: line {lineno}: bad value for {key}: {exc}") from None
            if action.choices and overrides[action.dest] not in action.choices:
                raise InvalidInputError(f"{args.config}: line {lineno}: {key} must be one of {action.choices}")
    sub.set_defaults(**overrides)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config_file(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UqeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
