"""Command-line interface.

Subcommands cover the full pipeline: synthesizing cohorts, fitting and
persisting models, predicting curves, scoring predictions, running split
scenarios, comparing saved evaluations, the optimism-bootstrap demonstration,
and emitting figure-ready curve data.  Machine-readable results go to the
path named by ``--out``; a short human summary goes to standard output.
Identical invocations produce byte-identical output files.

Exit codes: 0 on success, 1 on usage errors (bad flags, malformed or missing
inputs, schema mismatches), 2 on computation errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from .cohort import SynthConfig, generate_synthetic, load_cohort, save_cohort
from .errors import (
    CohortFormatError,
    ConfigError,
    RelapseLabError,
    SchemaMismatchError,
)
from .metrics import (
    DEFAULT_BOOT_ITERATIONS,
    build_info_report,
    compare_methods,
    concordance_from_probabilities,
    format_csv_value,
    order_outcomes,
    report_from_dict,
    report_to_dict,
    time_contributions,
)
from .mixture import ChainConfig
from .persist import METHODS, fit_model, load_model, save_model
from .predictions import DEFAULT_HORIZON, evaluation_grid
from .prior import prior_prediction
from .scenarios import SCENARIOS, memorizer_demo, run_scenario

__all__ = ["main"]

log = logging.getLogger("relapse_lab.cli")

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

_TABLE1_COLUMNS = ("type", "scenario", "method", "concord", "q025", "mean", "median", "q975")
_TABLE2_COLUMNS = (
    "methodA",
    "methodB",
    "scenario",
    "type",
    "p_a_gt_b",
    "diff_q025",
    "diff_mean",
    "diff_median",
    "diff_q975",
    "ratio_q025",
    "ratio_mean",
    "ratio_median",
    "ratio_q975",
)

# demo cohort used by `synth` when no synthetic config is supplied: one
# informative covariate, mean relapse time 50 months, roughly half censored
_DEFAULT_SYNTH = {
    "n": 400,
    "beta": [0.5] + [0.0] * 11,
    "lambda": 0.02,
    "censor_mu": 3.5,
    "censor_sigma": 0.8,
}

_EVALUATION_FORMAT = "relapse-lab-evaluation"
_PREDICTIONS_FORMAT = "relapse-lab-predictions"
_VERSION = 1


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


class RunConfig:
    """Merged view of command-line flags and the optional JSON config file.

    A flag given on the command line always wins; otherwise the value comes
    from the config file, then from the stated default.
    """

    _KNOWN_FILE_KEYS = {
        "n",
        "seed",
        "horizon",
        "iters",
        "threads",
        "scenario",
        "methods",
        "sampled",
        "synth",
        "chain",
    }

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.file_values = {}
        path = getattr(args, "config", None)
        if path is not None:
            try:
                with open(path, "r", encoding="utf-8") as fh:
                    doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"could not parse config file {path}: {exc}") from exc
            if not isinstance(doc, dict):
                raise ConfigError(f"config file {path} must hold a JSON object")
            unknown = set(doc) - self._KNOWN_FILE_KEYS
            if unknown:
                raise ConfigError(
                    f"unknown config keys {sorted(unknown)} "
                    f"(choose from {sorted(self._KNOWN_FILE_KEYS)})"
                )
            self.file_values = doc

    def get(self, key, default=None):
        value = getattr(self.args, key, None)
        if value is None:
            value = self.file_values.get(key, default)
        return value

    def horizon(self) -> float:
        h = float(self.get("horizon", DEFAULT_HORIZON))
        if not h > 0.0:
            raise ConfigError("horizon must be > 0")
        return h

    def iters(self) -> int:
        it = int(self.get("iters", DEFAULT_BOOT_ITERATIONS))
        if it < 1:
            raise ConfigError("iters must be >= 1")
        return it

    def seed(self) -> int:
        return int(self.get("seed", 0))

    def threads(self) -> int:
        t = int(self.get("threads", 1))
        if t < 1:
            raise ConfigError("threads must be >= 1")
        return t

    def chain_config(self, seed: int) -> ChainConfig:
        section = self.file_values.get("chain", {})
        if not isinstance(section, dict):
            raise ConfigError("config key 'chain' must hold a JSON object")
        allowed = {"burn_in", "samples", "thin", "target_acceptance"}
        unknown = set(section) - allowed
        if unknown:
            raise ConfigError(
                f"unknown chain config keys {sorted(unknown)} (choose from {sorted(allowed)})"
            )
        return ChainConfig(seed=seed, **section)


def _parse_methods(raw) -> tuple[str, ...]:
    if isinstance(raw, str):
        names = [m.strip() for m in raw.split(",") if m.strip()]
    else:
        names = [str(m) for m in raw]
    if not names:
        raise ConfigError(f"no methods given (choose from {', '.join(METHODS)})")
    for name in names:
        if name not in METHODS:
            raise ConfigError(
                f"unknown method {name!r} (choose from {', '.join(METHODS)})"
            )
    if len(set(names)) != len(names):
        raise ConfigError("duplicate method names")
    return tuple(names)


def _load_cohort_checked(path):
    if not os.path.exists(path):
        raise ConfigError(f"cohort file {path} does not exist")
    return load_cohort(path)


def _load_model_checked(path):
    if not os.path.exists(path):
        raise ConfigError(f"model file {path} does not exist; run `fit` first")
    return load_model(path)


def _write_json(doc: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _summary_cells(summary):
    return [
        format_csv_value(summary.q025),
        format_csv_value(summary.mean),
        format_csv_value(summary.median),
        format_csv_value(summary.q975),
    ]


def _require_density_model(model):
    if model.kind == "coxph-unblurred":
        raise ConfigError(
            "the unblurred model is spike-valued and has no density curves; "
            "fit 'coxph' instead"
        )


# ----------------------------------------------------------------------
# commands


def cmd_synth(cfg: RunConfig) -> int:
    doc = dict(_DEFAULT_SYNTH)
    section = cfg.file_values.get("synth", {})
    if not isinstance(section, dict):
        raise ConfigError("config key 'synth' must hold a JSON object")
    doc.update(section)
    n = cfg.get("n")
    if n is not None:
        doc["n"] = int(n)
    config = SynthConfig.from_dict(doc)
    cohort = generate_synthetic(config, cfg.seed())
    save_cohort(cohort, cfg.args.out)
    print(
        f"wrote {len(cohort)} patients ({cohort.n_events} relapses, "
        f"{len(cohort.schema)} covariates) to {cfg.args.out}"
    )
    return 0


def cmd_fit(cfg: RunConfig) -> int:
    methods = _parse_methods(cfg.get("methods", ""))
    if len(methods) != 1:
        raise ConfigError("`fit` persists one model per invocation; give exactly one method")
    method = methods[0]
    train = _load_cohort_checked(cfg.args.cohort)
    seed = cfg.seed()
    model = fit_model(method, train, chain_config=cfg.chain_config(seed))
    save_model(model, cfg.args.out)
    print(
        f"fit {method} on {len(train)} patients ({train.n_events} relapses); "
        f"prior rate {model.prior.rate:.6g}/month; wrote {cfg.args.out}"
    )
    return 0


def cmd_predict(cfg: RunConfig) -> int:
    model = _load_model_checked(cfg.args.model)
    _require_density_model(model)
    cohort = _load_cohort_checked(cfg.args.cohort)
    horizon = cfg.horizon()
    preds = model.predictions(cohort, horizon)
    ts = evaluation_grid(horizon)
    patients = {
        pid: {
            "density": pred.density(ts).tolist(),
            "survival_at_horizon": float(pred.survival_at(horizon)),
        }
        for pid, pred in preds.items()
    }
    doc = {
        "format": _PREDICTIONS_FORMAT,
        "version": _VERSION,
        "method": model.kind,
        "horizon": horizon,
        "times": ts.tolist(),
        "patients": patients,
    }
    _write_json(doc, cfg.args.out)
    print(
        f"predicted {len(patients)} patients with the {model.kind} model "
        f"on {ts.size} time points; wrote {cfg.args.out}"
    )
    return 0


def _evaluate_document(model, cohort, horizon, iters, seed) -> dict:
    preds = model.predictions(cohort, horizon)
    prior_pred = prior_prediction(model.prior, horizon)
    t_units, t_values = time_contributions(preds, cohort, prior_pred)
    time_report = build_info_report("time", t_units, t_values, iters, seed)
    doc = {
        "format": _EVALUATION_FORMAT,
        "version": _VERSION,
        "method": model.kind,
        "scenario": "n/a",
        "horizon": horizon,
        "time": report_to_dict(time_report),
    }
    try:
        o_units, p_realized = order_outcomes(preds, cohort)
    except RelapseLabError:
        return doc
    with np.errstate(divide="ignore"):
        o_values = np.log(2.0 * np.clip(p_realized, 0.0, 1.0))
    doc["order"] = report_to_dict(build_info_report("order", o_units, o_values, iters, seed))
    doc["concord"] = concordance_from_probabilities(p_realized)
    return doc


def cmd_evaluate(cfg: RunConfig) -> int:
    model = _load_model_checked(cfg.args.model)
    cohort = _load_cohort_checked(cfg.args.cohort)
    doc = _evaluate_document(model, cohort, cfg.horizon(), cfg.iters(), cfg.seed())
    _write_json(doc, cfg.args.out)
    t = doc["time"]["summary"]
    print(
        f"{model.kind} time-ASI mean {format_csv_value(t['mean'])} nepers/patient "
        f"[{format_csv_value(t['q025'])}, {format_csv_value(t['q975'])}]"
    )
    if "order" in doc:
        o = doc["order"]["summary"]
        print(
            f"{model.kind} order-ASI mean {format_csv_value(o['mean'])} nepers/pair "
            f"[{format_csv_value(o['q025'])}, {format_csv_value(o['q975'])}], "
            f"concordance {doc['concord']:.3f}"
        )
    print(f"wrote {cfg.args.out}")
    return 0


def _write_table1(path, result) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_TABLE1_COLUMNS)
        for method in result.methods:
            report = result.time_reports[method]
            writer.writerow(
                ["time", result.scenario, method, "n/a", *_summary_cells(report.summary)]
            )
        for method in result.methods:
            if method not in result.order_reports:
                continue
            writer.writerow(
                [
                    "order",
                    result.scenario,
                    method,
                    format_csv_value(result.concordances[method]),
                    *_summary_cells(result.order_reports[method].summary),
                ]
            )


def _table2_row(method_a, method_b, scenario, kind, comparison):
    return [
        method_a,
        method_b,
        scenario,
        kind,
        format_csv_value(comparison.p_a_gt_b),
        *_summary_cells(comparison.difference),
        *_summary_cells(comparison.ratio),
    ]


def _write_table2(path, result) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_TABLE2_COLUMNS)
        for (a, b), by_kind in result.comparisons.items():
            for kind in ("time", "order"):
                if kind in by_kind:
                    writer.writerow(_table2_row(a, b, result.scenario, kind, by_kind[kind]))


def cmd_scenario(cfg: RunConfig) -> int:
    scenario = cfg.get("scenario")
    if scenario is None:
        raise ConfigError(f"no scenario given (choose from {', '.join(SCENARIOS)})")
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r} (choose from {', '.join(SCENARIOS)})")
    methods = _parse_methods(cfg.get("methods", "prior,coxph,coxch,bayes"))
    cohort = _load_cohort_checked(cfg.args.cohort)
    seed = cfg.seed()
    result = run_scenario(
        cohort,
        scenario,
        methods,
        seed,
        horizon=cfg.horizon(),
        boot_iterations=cfg.iters(),
        chain_config=cfg.chain_config(seed),
        threads=cfg.threads(),
    )
    os.makedirs(cfg.args.out, exist_ok=True)
    table1 = os.path.join(cfg.args.out, "table1.csv")
    _write_table1(table1, result)
    written = [table1]
    if result.comparisons:
        table2 = os.path.join(cfg.args.out, "table2.csv")
        _write_table2(table2, result)
        written.append(table2)
    for method in result.methods:
        summary = result.time_reports[method].summary
        line = (
            f"time  {method:16s} mean {format_csv_value(summary.mean):>8s} "
            f"[{format_csv_value(summary.q025)}, {format_csv_value(summary.q975)}]"
        )
        print(line)
        if method in result.order_reports:
            osum = result.order_reports[method].summary
            print(
                f"order {method:16s} mean {format_csv_value(osum.mean):>8s} "
                f"[{format_csv_value(osum.q025)}, {format_csv_value(osum.q975)}] "
                f"concord {result.concordances[method]:.3f}"
            )
    print("wrote " + ", ".join(written))
    return 0


def cmd_compare(cfg: RunConfig) -> int:
    docs = []
    for path in (cfg.args.report_a, cfg.args.report_b):
        if not os.path.exists(path):
            raise ConfigError(f"evaluation file {path} does not exist; run `evaluate` first")
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"could not parse evaluation file {path}: {exc}") from exc
        if not isinstance(doc, dict) or doc.get("format") != _EVALUATION_FORMAT:
            raise ConfigError(f"{path} is not an evaluation document")
        if doc.get("version") != _VERSION:
            raise ConfigError(f"unsupported evaluation version in {path}")
        docs.append(doc)
    doc_a, doc_b = docs
    iters, seed = cfg.iters(), cfg.seed()
    rows = []
    summary_lines = []
    for kind in ("time", "order"):
        if kind not in doc_a or kind not in doc_b:
            continue
        comparison = compare_methods(
            report_from_dict(doc_a[kind]), report_from_dict(doc_b[kind]), iters, seed
        )
        rows.append(
            _table2_row(doc_a["method"], doc_b["method"], doc_a.get("scenario", "n/a"), kind, comparison)
        )
        summary_lines.append(
            f"P({doc_a['method']} beats {doc_b['method']} on {kind}-ASI) = "
            f"{comparison.p_a_gt_b:.4f}"
        )
    if not rows:
        raise ConfigError("the two evaluations share no report types to compare")
    with open(cfg.args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_TABLE2_COLUMNS)
        writer.writerows(rows)
    for line in summary_lines:
        print(line)
    print(f"wrote {cfg.args.out}")
    return 0


def cmd_bootstrap_demo(cfg: RunConfig) -> int:
    n = int(cfg.get("n", 10000))
    iters = int(cfg.get("iters", 200))
    sampled = bool(cfg.get("sampled", False))
    corrected, true_accuracy = memorizer_demo(n, iters, cfg.seed(), sampled=sampled)
    print(f"optimism-corrected accuracy: {corrected:.6f}")
    print(f"true out-of-sample accuracy: {true_accuracy}")
    out = getattr(cfg.args, "out", None)
    if out is not None:
        _write_json(
            {
                "corrected_accuracy": corrected,
                "true_accuracy": true_accuracy,
                "n": n,
                "iterations": iters,
                "sampled": sampled,
            },
            out,
        )
        print(f"wrote {out}")
    return 0


def _markers_path(out_path: str) -> str:
    base, ext = os.path.splitext(out_path)
    return f"{base}-markers{ext or '.csv'}"


def cmd_curves(cfg: RunConfig) -> int:
    model = _load_model_checked(cfg.args.model)
    _require_density_model(model)
    cohort = _load_cohort_checked(cfg.args.cohort)
    horizon = cfg.horizon()
    preds = model.predictions(cohort, horizon)
    ts = evaluation_grid(horizon)
    prior_pred = prior_prediction(model.prior, horizon)
    with open(cfg.args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["patient_id", "t", "density", "survival"])
        for pid, pred in [("__prior__", prior_pred)] + [(p, preds[p]) for p in cohort.ids]:
            dens = pred.density(ts)
            surv = pred.survival(ts)
            for t, d, s in zip(ts, dens, surv):
                writer.writerow(
                    [pid, format_csv_value(t), format_csv_value(d), format_csv_value(s)]
                )
    markers = _markers_path(cfg.args.out)
    with open(markers, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["patient_id", "time_months", "relapsed"])
        for rec in cohort:
            writer.writerow([rec.id, format_csv_value(rec.time_months), int(rec.relapsed)])
    print(
        f"wrote curves for {len(cohort)} patients plus the prior ({ts.size} points each) "
        f"to {cfg.args.out}; event markers to {markers}"
    )
    return 0


# ----------------------------------------------------------------------
# parser


def _add_common(sub, *, cohort=False, model=False, out=None, n=False, methods=False,
                scenario=False, threads=False, sampled=False):
    if cohort:
        sub.add_argument("--cohort", required=True, help="cohort CSV path")
    if model:
        sub.add_argument("--model", required=True, help="saved model JSON path")
    if out == "required":
        sub.add_argument("--out", required=True, help="output path")
    elif out == "optional":
        sub.add_argument("--out", help="optional output path")
    if n:
        sub.add_argument("--n", type=int, help="number of items/patients")
    if methods:
        sub.add_argument("--methods", help=f"comma list of {{{','.join(METHODS)}}}")
    if scenario:
        sub.add_argument("--scenario", help=f"one of {{{','.join(SCENARIOS)}}}")
    if threads:
        sub.add_argument("--threads", type=int, help="fold-level worker threads (default 1)")
    if sampled:
        sub.add_argument(
            "--sampled", action="store_const", const=True,
            help="score unseen items by real coin flips instead of expectation",
        )
    sub.add_argument("--seed", type=int, help="integer seed (default 0)")
    sub.add_argument("--horizon", type=float, help="prediction horizon in months (default 100)")
    sub.add_argument("--iters", type=int, help="bootstrap/comparison iterations")
    sub.add_argument("--config", help="JSON config file; flags override its values")


def build_parser() -> _Parser:
    parser = _Parser(prog="relapse-lab", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("synth", help="generate a synthetic right-censored cohort CSV")
    _add_common(p, out="required", n=True)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("fit", help="fit one method and persist it as JSON")
    _add_common(p, cohort=True, out="required", methods=True)
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("predict", help="per-patient predictive densities from a saved model")
    _add_common(p, cohort=True, model=True, out="required")
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("evaluate", help="score a saved model on a cohort (time and order ASI)")
    _add_common(p, cohort=True, model=True, out="required")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("scenario", help="run a split scenario and write table CSVs")
    _add_common(p, cohort=True, out="required", methods=True, scenario=True, threads=True)
    p.set_defaults(handler=cmd_scenario)

    p = sub.add_parser("compare", help="paired comparison of two saved evaluations")
    p.add_argument("report_a", help="first evaluation JSON (from `evaluate`)")
    p.add_argument("report_b", help="second evaluation JSON")
    _add_common(p, out="required")
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser(
        "bootstrap-demo",
        help="optimism bootstrap on the memorizing classifier (true accuracy 0.5)",
    )
    _add_common(p, out="optional", n=True, sampled=True)
    p.set_defaults(handler=cmd_bootstrap_demo)

    p = sub.add_parser("curves", help="figure-ready curve data plus event markers")
    _add_common(p, cohort=True, model=True, out="required")
    p.set_defaults(handler=cmd_curves)

    return parser


def _configure_logging() -> None:
    raw = os.environ.get("RELAPSE_LAB_LOG", "error").lower()
    if raw not in _LOG_LEVELS:
        raise ConfigError(
            f"RELAPSE_LAB_LOG must be one of {sorted(_LOG_LEVELS)}, got {raw!r}"
        )
    logging.basicConfig(
        level=_LOG_LEVELS[raw],
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _configure_logging()
        cfg = RunConfig(args)
        return args.handler(cfg)
    except (ConfigError, CohortFormatError, SchemaMismatchError) as exc:
        print(f"relapse-lab: error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"relapse-lab: error: {exc}", file=sys.stderr)
        return 1
    except RelapseLabError as exc:
        print(f"relapse-lab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
