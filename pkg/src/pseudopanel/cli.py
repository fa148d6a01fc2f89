"""Batch command-line front end.

Subcommands: group | estimate | simulate | hausman | shadow-price |
elasticity. Every command is a pure function of its files, flags and
seed: numeric output is serialized at 12 significant digits, JSON keys
are sorted, so reruns are byte-identical. Exit codes: 0 ok, 2 bad input
or configuration, 3 numerical failure.
"""

import argparse
import json
import sys
from dataclasses import replace

import numpy as np
import pandas as pd

from .data import load_csv
from .demand import expenditure_elasticity, shadow_price_elasticity
from .diagnostics import hausman
from .errors import NumericalError, PseudopanelError, ValidationError
from .estimators import (
    between_fit,
    cross_section_fit,
    first_difference_fit,
    within_fit,
)
from .iv import InstrumentSet, fd_instrument, first_stage
from .mc import DgpConfig, GroupingOptions, run_study
from .pseudo import CohortScheme, PseudoPanel, aggregate, assign_cohorts, cell_report
from .regress import FitResult, ModelSpec

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".12g")
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, dict):
        return {k: _fmt(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_fmt(v) for v in value]
    return value


def _emit(payload, out, quiet):
    text = json.dumps(_fmt(payload), sort_keys=True, indent=2) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
        if not quiet:
            sys.stdout.write(f"wrote {out}\n")
    elif not quiet:
        sys.stdout.write(text)


def _read_schema(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _read_scheme(path):
    if path is None:
        return CohortScheme()
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    bands = tuple(tuple(b) for b in raw.get("age_bands", [])) or None
    kwargs = {}
    if bands:
        kwargs["age_bands"] = bands
    if "edu_levels" in raw and raw["edu_levels"] is not None:
        kwargs["edu_levels"] = {k: set(v) for k, v in raw["edu_levels"].items()}
    for key in ("split_k", "age_col", "edu_col"):
        if key in raw:
            kwargs[key] = raw[key]
    return CohortScheme(**kwargs)


def _load_table(args):
    return load_csv(args.input, _read_schema(args.schema),
                    unit_col=args.unit_col, wave_col=args.wave_col)


def _fit_payload(fit):
    payload = fit.to_dict()
    payload["coef"] = {k: format(v, ".12g") for k, v in payload["coef"].items()}
    payload["se"] = {k: format(v, ".12g") for k, v in payload["se"].items()}
    payload["cov"] = [format(v, ".12g") for v in payload["cov"]]
    return payload


# ---------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------

def cmd_group(args):
    table = _load_table(args)
    scheme = _read_scheme(args.cohorts)
    if args.split is not None:
        scheme = CohortScheme(
            age_bands=scheme.age_bands, edu_levels=scheme.edu_levels,
            split_k=args.split, age_col=scheme.age_col, edu_col=scheme.edu_col)
    table = assign_cohorts(table, scheme, seed=args.seed)
    pp = aggregate(table, weighting=args.weighting, min_cell_size=args.min_size)
    pp.to_csv(args.out or "pseudo_panel.csv", float_format="%.12g")
    if args.report:
        cell_report(pp, size_threshold=args.size_threshold).to_csv(
            args.report, float_format="%.12g")
    if not args.quiet:
        sys.stdout.write(
            f"{len(pp.keys)} cells x {len(pp.waves)} waves -> "
            f"{args.out or 'pseudo_panel.csv'}\n")
    return EXIT_OK


def _resolve_panel(args):
    if args.pseudo_input:
        roles = _read_schema(args.schema) if args.schema else None
        return PseudoPanel.from_csv(args.pseudo_input, roles=roles), None
    table = _load_table(args)
    if args.group:
        scheme = _read_scheme(args.cohorts)
        table = assign_cohorts(table, scheme, seed=args.seed)
        return aggregate(table, weighting=args.weighting), table
    return table, table


def _single_estimate(args, spec, panel, table, estimator, use_iv):
    instruments = tuple(args.instruments.split(",")) if args.instruments else ()
    iv_spec = None
    fit_spec = spec
    if use_iv:
        frame = table.frame if table is not None else panel.frame
        fs = first_stage(args.endogenous, instruments,
                         tuple(c for c in spec.regressors if c != args.endogenous),
                         frame)
        hat = f"{args.endogenous}_hat"
        if table is not None:
            work = table.frame.copy()
            work[hat] = fs.fitted.reindex(work.index)
            table2 = table.replace_frame(work)
            panel2 = aggregate(table2, weighting=args.weighting) \
                if args.group else table2
        else:
            work = panel.frame.copy()
            work[hat] = fs.fitted.reindex(work.index)
            panel2 = PseudoPanel(work, panel.value_columns + [hat], roles=panel.roles)
        fit_spec = ModelSpec(spec.dependent, tuple(
            hat if r == args.endogenous else r for r in spec.regressors),
            spec.intercept, spec.dummies)
        iv_spec = spec
        panel = panel2

    if estimator == "between":
        return between_fit(fit_spec, panel, correction=args.correction,
                           iv_resid_spec=iv_spec)
    if estimator == "within":
        return within_fit(fit_spec, panel, correction=args.correction,
                          mode=args.within_mode, iv_resid_spec=iv_spec)
    if estimator == "fd":
        if use_iv:
            return fd_instrument(spec, table, InstrumentSet(args.endogenous, instruments))
        return first_difference_fit(fit_spec, panel, correction=args.correction)
    if estimator == "cs":
        return cross_section_fit(fit_spec, panel, iv_resid_spec=iv_spec)
    raise ValidationError(f"unknown estimator {estimator!r}")


def cmd_estimate(args):
    if args.iv and not args.instruments:
        raise ValidationError("--iv requires --instruments")
    panel, table = _resolve_panel(args)
    regressors = tuple(args.regressors.split(","))
    spec = ModelSpec(args.dependent, regressors, intercept=not args.no_intercept,
                     dummies=tuple(args.dummies.split(",")) if args.dummies else ())
    if args.endogenous is None and args.instruments:
        args.endogenous = regressors[0]

    frame = table.frame if table is not None else panel.frame

    def summarize(fit):
        payload = {"method": fit.method if hasattr(fit, "method") else "cs",
                   "coef": {k: float(v) for k, v in fit.params.items()},
                   "se": {k: float(v) for k, v in fit.se.items()}}
        if args.elasticity:
            share = float(frame[args.dependent].mean())
            name = None
            for cand in (args.elasticity_coef, f"{args.endogenous}_hat" if args.endogenous else None,
                         args.endogenous, regressors[0]):
                if cand and cand in fit.params.index:
                    name = cand
                    break
            if name is None:
                raise ValidationError("no coefficient found for the elasticity")
            b = float(fit.params[name])
            payload["elasticity"] = 1.0 + b / share if share > 0 else float("nan")
            payload["elasticity_share"] = share
        return payload

    if args.all:
        grid = {}
        for est in ("between", "cs", "within", "fd"):
            grid[est] = {}
            for use_iv in (False, True) if args.instruments else (False,):
                tag = "iv" if use_iv else "raw"
                fit = _single_estimate(args, spec, panel, table, est, use_iv)
                grid[est][tag] = summarize(fit)
        _emit({"grid": grid}, args.out, args.quiet)
        return EXIT_OK

    fit = _single_estimate(args, spec, panel, table, args.estimator, args.iv)
    if isinstance(fit, FitResult):
        payload = _fit_payload(fit)
    else:  # cross-section summary
        payload = {"method": "cross_section",
                   "coef": {k: format(float(v), ".12g") for k, v in fit.params.items()},
                   "se": {k: format(float(v), ".12g") for k, v in fit.se.items()}}
    if args.elasticity:
        payload["elasticity"] = summarize(fit).get("elasticity")
    _emit(payload, args.out, args.quiet)
    return EXIT_OK


def cmd_simulate(args):
    config = DgpConfig.from_json(args.config) if args.config else DgpConfig()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    estimators = tuple(args.estimators.split(","))
    corrections = tuple(args.corrections.split(","))
    grouping = GroupingOptions(weighting=args.weighting) if args.group else None
    with_iv = (False, True) if args.iv else (False,)
    report = run_study(config, estimators, corrections=corrections,
                       reps=args.reps, grouping=grouping, with_iv=with_iv)
    if args.out:
        report.to_csv(args.out)
        if not args.quiet:
            sys.stdout.write(f"wrote {args.out}\n")
    else:
        sys.stdout.write(report.to_json() + "\n")
    if args.json_out:
        report.to_json(args.json_out)
    return EXIT_OK


def cmd_hausman(args):
    fit_a = FitResult.from_json(args.fit_a)
    fit_b = FitResult.from_json(args.fit_b)
    subset = tuple(args.subset.split(",")) if args.subset else None
    result = hausman(fit_a, fit_b, subset=subset, naive=args.naive)
    _emit({
        "statistic": result.statistic,
        "dof": result.dof,
        "p_value": result.p_value,
        "v_psd_repaired": result.v_psd_repaired,
        "subset": list(result.subset),
    }, args.out, args.quiet)
    return EXIT_OK


def cmd_shadow_price(args):
    gamma = None if args.frisch else args.gamma
    if gamma is None and not args.frisch:
        gamma = args.gamma
    result = shadow_price_elasticity(args.cs, args.ts, gamma_ii=gamma)
    _emit({
        "cs": result.e_cs,
        "ts": result.e_ts,
        "direct_price_elasticity": result.gamma_ii,
        "shadow_price_income_elasticity": result.shadow_income_elasticity,
        "frisch_calibrated": result.frisch_calibrated,
    }, args.out, args.quiet)
    return EXIT_OK


def cmd_elasticity(args):
    fit = FitResult.from_json(args.fit)
    name = args.coef
    if name is None:
        candidates = [n for n in fit.names if n != "const"]
        if not candidates:
            raise ValidationError("fit carries no slope coefficient")
        name = candidates[0]
    value = expenditure_elasticity(
        fit, args.share, args.ln_y, quadratic=args.quad_coef is not None,
        e_p=args.e_p, outlay_coef=name,
        quad_coef=args.quad_coef or "lny2")
    _emit({"coef": name, "share": args.share, "ln_y": args.ln_y,
           "elasticity": value}, args.out, args.quiet)
    return EXIT_OK


# ---------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------

def _add_io(p, need_input=True):
    if need_input:
        p.add_argument("--input", help="long-format CSV")
        p.add_argument("--schema", help="JSON column->role map")
        p.add_argument("--unit-col", default="unit_id")
        p.add_argument("--wave-col", default="wave")
    p.add_argument("--out", help="output path (stdout when omitted)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quiet", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pseudopanel",
        description="pseudo-panel grouping, corrected panel estimators, "
                    "elasticity calculus",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("group", help="build a pseudo-panel CSV from microdata")
    _add_io(p)
    p.add_argument("--cohorts", help="cohort scheme JSON")
    p.add_argument("--split", type=int, help="random sub-sample count")
    p.add_argument("--weighting", choices=("income_share", "equal"),
                   default="income_share")
    p.add_argument("--min-size", type=int, default=30)
    p.add_argument("--size-threshold", type=int, default=100)
    p.add_argument("--report", help="write the per-key cell report CSV here")
    p.set_defaults(func=cmd_group)

    p = sub.add_parser("estimate", help="run one estimator chain or the full grid")
    _add_io(p)
    p.add_argument("--pseudo-input", help="pseudo-panel CSV (skip grouping)")
    p.add_argument("--group", action="store_true", help="group before estimating")
    p.add_argument("--cohorts", help="cohort scheme JSON (with --group)")
    p.add_argument("--weighting", choices=("income_share", "equal"),
                   default="income_share")
    p.add_argument("--dependent", required=True)
    p.add_argument("--regressors", required=True, help="comma-separated columns")
    p.add_argument("--dummies", help="comma-separated dummy group columns")
    p.add_argument("--no-intercept", action="store_true")
    p.add_argument("--estimator", choices=("between", "within", "fd", "cs"),
                   default="between")
    p.add_argument("--correction", choices=("approx", "exact", "none", "false"),
                   default="none")
    p.add_argument("--within-mode", choices=("demean", "system"), default="demean",
                   dest="within_mode")
    p.add_argument("--iv", action="store_true")
    p.add_argument("--instruments", help="comma-separated instrument columns")
    p.add_argument("--endogenous", help="endogenous column (default: first regressor)")
    p.add_argument("--all", action="store_true",
                   help="4-estimator x with/without-IV grid")
    p.add_argument("--elasticity", action="store_true")
    p.add_argument("--elasticity-coef", help="coefficient used for the elasticity")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="Monte Carlo estimator-bias study")
    _add_io(p, need_input=False)
    p.add_argument("--config", help="DGP config JSON")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--estimators", default="between,within",
                   help="comma list of ols,between,within,first_difference,cross_section")
    p.add_argument("--corrections", default="none")
    p.add_argument("--group", action="store_true")
    p.add_argument("--weighting", choices=("income_share", "equal"),
                   default="income_share")
    p.add_argument("--iv", action="store_true", help="also run instrumented variants")
    p.add_argument("--json-out", help="also write the JSON summary here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("hausman", help="contrast two saved fits")
    _add_io(p, need_input=False)
    p.add_argument("--fit-a", required=True, help="first fit JSON (e.g. between)")
    p.add_argument("--fit-b", required=True, help="second fit JSON (e.g. within)")
    p.add_argument("--subset", help="comma-separated coefficient names")
    p.add_argument("--naive", action="store_true",
                   help="subset-only variance (biased; for comparison)")
    p.set_defaults(func=cmd_hausman)

    p = sub.add_parser("shadow-price", help="shadow-price income elasticity")
    _add_io(p, need_input=False)
    p.add_argument("--cs", type=float, required=True)
    p.add_argument("--ts", type=float, required=True)
    p.add_argument("--gamma", type=float, help="direct price elasticity")
    p.add_argument("--frisch", action="store_true",
                   help="calibrate gamma as -ts/2")
    p.set_defaults(func=cmd_shadow_price)

    p = sub.add_parser("elasticity", help="expenditure elasticity from a saved fit")
    _add_io(p, need_input=False)
    p.add_argument("--fit", required=True, help="fit JSON")
    p.add_argument("--share", type=float, required=True)
    p.add_argument("--ln-y", type=float, default=0.0, dest="ln_y")
    p.add_argument("--e-p", type=float, default=1.0, dest="e_p")
    p.add_argument("--coef", help="outlay coefficient name")
    p.add_argument("--quad-coef", help="quadratic coefficient name", dest="quad_coef")
    p.set_defaults(func=cmd_elasticity)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return EXIT_CONFIG
    except NumericalError as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return EXIT_NUMERIC
    except PseudopanelError as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
