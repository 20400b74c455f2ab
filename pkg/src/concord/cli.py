"""Command-line interface.

Subcommands: analyze, table, simulate, genesis, deconvolve, validate.
Exit codes: 0 ok, 1 I/O or config error, 2 validation hard failure,
3 fit non-convergence (the report is still emitted).
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

import concord
from concord.dataset import Dataset, ParseError, ValidationError, parse_dataset, serialize_dataset, validate
from concord.genesis import (
    DeconvolutionResult,
    GenesisSpec,
    SimSpec,
    deconvolve,
    genesis_tail_exponent,
    simulate_dataset,
)
from concord.report import analyze, theoretical_survival_rows, survival_row, _jsonable
from concord.statfun import DistSpec
from concord.tfit import FitConfig, fit_report

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_VALIDATION = 2
EXIT_NO_CONVERGENCE = 3

DEFAULT_SEED = 42


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; config errors here are exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="dataset file")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--weighting", choices=["Q", "M", "P"], default="M")
    p.add_argument("--mode", choices=["quadrature", "linear", "covariance"], default="quadrature")
    p.add_argument("--cov", type=float, default=0.0, help="covariance term for covariance mode")
    p.add_argument("--replicas", type=int, default=1000, help="bootstrap replicas")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--bins", default=None, help="comma-separated ascending bin edges")
    p.add_argument("--exclude-shared-source", action="store_true")
    p.add_argument("--out", default=None, help="output path (default stdout)")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="concord", description=__doc__)
    parser.add_argument("--version", action="version", version=f"concord {concord.__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="full z-distribution analysis of a dataset")
    _add_common_flags(p)
    p.add_argument("--h-scores", action="store_true", help="also fit the h (difference from weighted mean) distribution")

    p = sub.add_parser("table", help="survival table for reference distributions and optional data")
    p.add_argument("--input", default=None)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--weighting", choices=["Q", "M", "P"], default="M")
    p.add_argument("--mode", choices=["quadrature", "linear", "covariance"], default="quadrature")
    p.add_argument("--cov", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", default=None)

    p = sub.add_parser("validate", help="report dataset issues without analysing")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out", default=None)

    p = sub.add_parser("simulate", help="generate a synthetic dataset from a config file")
    p.add_argument("--config", required=True, help="JSON SimSpec configuration")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=["csv", "json"], default="csv")

    p = sub.add_parser("genesis", help="effective nu of the unfound-systematic-error model")
    p.add_argument("--config", required=True, help='JSON like {"n_m": 3, "alpha": 1.0}')
    p.add_argument("--out", default=None)

    p = sub.add_parser("deconvolve", help="individual-measurement error law from pair distribution")
    _add_common_flags(p)
    p.add_argument("--n-pairs", type=int, default=200_000, help="simulated pairs per grid point")
    return parser


def _parse_bins(spec: str | None):
    if spec is None:
        return None
    try:
        edges = np.array([float(x) for x in spec.split(",")])
    except ValueError:
        raise ValueError(f"bad --bins value {spec!r}") from None
    if edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError(f"--bins must list at least two ascending edges, got {spec!r}")
    return edges


def _fail(message: str, code: int) -> int:
    print(f"concord: error: {message}", file=sys.stderr)
    return code


def _emit(doc, out_path: str | None) -> None:
    text = doc if isinstance(doc, str) else json.dumps(doc, indent=1, sort_keys=True)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
            if not text.endswith("\n"):
                fh.write("\n")
    else:
        print(text)


def _load_dataset(path: str, fmt: str) -> Dataset:
    with open(path) as fh:
        text = fh.read()
    return parse_dataset(text, fmt)


def _fit_config(args, statistic: str = "z") -> FitConfig:
    return FitConfig(
        bins=_parse_bins(args.bins),
        weighting=args.weighting,
        mode=args.mode,
        cov=args.cov,
        replicas=args.replicas,
        seed=args.seed,
        exclude_shared_source=args.exclude_shared_source,
        statistic=statistic,
    )


def _cmd_analyze(args) -> int:
    try:
        d = _load_dataset(args.input, args.format)
    except OSError as exc:
        return _fail(f"cannot read {args.input}: {exc}", EXIT_CONFIG)
    except (ParseError, ValidationError) as exc:
        return _fail(str(exc), EXIT_VALIDATION)
    try:
        cfg = _fit_config(args)
    except ValueError as exc:
        return _fail(str(exc), EXIT_CONFIG)
    try:
        doc = analyze(d, cfg, with_h=args.h_scores)
    except ValueError as exc:
        return _fail(str(exc), EXIT_VALIDATION)
    _emit(doc, args.out)
    converged = doc["z"]["fit"]["converged"] and (
        "h" not in doc or doc["h"]["fit"]["converged"]
    )
    return EXIT_OK if converged else EXIT_NO_CONVERGENCE


def _cmd_table(args) -> int:
    doc = {
        "tool": {"name": "concord", "version": concord.__version__},
        "theoretical": theoretical_survival_rows(),
    }
    if args.input:
        try:
            d = _load_dataset(args.input, args.format)
        except OSError as exc:
            return _fail(f"cannot read {args.input}: {exc}", EXIT_CONFIG)
        except (ParseError, ValidationError) as exc:
            return _fail(str(exc), EXIT_VALIDATION)
        cfg = FitConfig(weighting=args.weighting, mode=args.mode, cov=args.cov, seed=args.seed, replicas=100)
        rep = fit_report(d, cfg)
        row = survival_row(rep.survival_probs, rep.z95)
        row["distribution"] = d.name
        doc["observed"] = [row]
    _emit(doc, args.out)
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        d = _load_dataset(args.input, args.format)
    except OSError as exc:
        return _fail(f"cannot read {args.input}: {exc}", EXIT_CONFIG)
    except (ParseError, ValidationError) as exc:
        return _fail(str(exc), EXIT_VALIDATION)
    report = validate(d)
    doc = {
        "dataset": d.name,
        "measurement_counts": report.measurement_counts,
        "issues": report.issues,
    }
    _emit(doc, args.out)
    return EXIT_OK


def _sim_spec_from_config(cfg: dict, seed_override: int | None) -> SimSpec:
    law_cfg = cfg.get("error_law", {"kind": "normal", "sigma": 1.0})
    law = DistSpec(law_cfg["kind"], law_cfg.get("sigma", 1.0), law_cfg.get("nu"))
    true_value = cfg.get("true_value", 0.0)
    if isinstance(true_value, list):
        true_value = tuple(true_value)
    bounds = tuple(cfg["bounds"]) if cfg.get("bounds") is not None else None
    date_range = tuple(cfg["date_range"]) if cfg.get("date_range") is not None else None
    seed = seed_override if seed_override is not None else cfg.get("seed", DEFAULT_SEED)
    return SimSpec(
        n_quantities=cfg["n_quantities"],
        measurements_per_quantity=cfg["measurements_per_quantity"],
        error_law=law,
        reported_u=cfg.get("reported_u", 1.0),
        u_relative=cfg.get("u_relative", False),
        true_value=true_value,
        bounds=bounds,
        date_range=date_range,
        seed=seed,
    )


def _read_config(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _cmd_simulate(args) -> int:
    try:
        cfg = _read_config(args.config)
        spec = _sim_spec_from_config(cfg, args.seed)
    except OSError as exc:
        return _fail(f"cannot read {args.config}: {exc}", EXIT_CONFIG)
    except (KeyError, TypeError, ValueError) as exc:
        return _fail(f"bad simulate config: {exc}", EXIT_CONFIG)
    d = simulate_dataset(spec)
    _emit(serialize_dataset(d, args.format), args.out)
    return EXIT_OK


def _cmd_genesis(args) -> int:
    try:
        cfg = _read_config(args.config)
        spec = GenesisSpec(
            n_m=cfg["n_m"],
            alpha=cfg["alpha"],
            chi2_max=cfg.get("chi2_max"),
            sigma_floor=cfg.get("sigma_floor", 1.0),
        )
    except OSError as exc:
        return _fail(f"cannot read {args.config}: {exc}", EXIT_CONFIG)
    except KeyError as exc:
        return _fail(f"genesis config missing key {exc}", EXIT_CONFIG)
    except (TypeError, ValueError) as exc:
        return _fail(f"bad genesis config: {exc}", EXIT_CONFIG)
    effective_nu = genesis_tail_exponent(spec)
    doc = {
        "n_m": spec.n_m,
        "alpha": spec.alpha,
        "chi2_max": spec.chi2_max,
        "sigma_floor": spec.sigma_floor,
        "effective_nu": effective_nu,
        "nu_formula_n_m_minus_1_plus_alpha": spec.n_m - 1 + spec.alpha,
    }
    _emit(doc, args.out)
    return EXIT_OK


def _cmd_deconvolve(args) -> int:
    try:
        d = _load_dataset(args.input, args.format)
    except OSError as exc:
        return _fail(f"cannot read {args.input}: {exc}", EXIT_CONFIG)
    except (ParseError, ValidationError) as exc:
        return _fail(str(exc), EXIT_VALIDATION)
    try:
        cfg = _fit_config(args)
    except ValueError as exc:
        return _fail(str(exc), EXIT_CONFIG)
    try:
        rep = fit_report(d, cfg)
        multiplicities = [len(q) for q in d.quantities if len(q) >= 2]
        result: DeconvolutionResult = deconvolve(
            rep.histogram, multiplicities, seed=args.seed, n_pairs=args.n_pairs
        )
    except ValueError as exc:
        return _fail(str(exc), EXIT_VALIDATION)
    doc = {
        "seed": args.seed,
        "pair_fit": {"nu": rep.fit.nu, "sigma": rep.fit.sigma},
        "individual": {"nu_x": result.nu_x, "sigma_x": result.sigma_x},
        "objective": result.objective,
        "on_boundary": result.on_boundary,
    }
    _emit(doc, args.out)
    return EXIT_OK if rep.fit.converged else EXIT_NO_CONVERGENCE


_COMMANDS = {
    "analyze": _cmd_analyze,
    "table": _cmd_table,
    "validate": _cmd_validate,
    "simulate": _cmd_simulate,
    "genesis": _cmd_genesis,
    "deconvolve": _cmd_deconvolve,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
