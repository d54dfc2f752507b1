"""``sessionlens`` command-line interface.

Exit status is 0 on success, 1 for usage errors and 2 for data or
validation errors; diagnostics go to standard error.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from importlib import resources

from . import evaluation, knowledge, session_log, synth
from .features import AoALexicon, FeatureExtractionError, FeatureMatrix, extract_matrix
from .models import DEFAULT_GRIDS, ModelSpec
from .selection import RelevanceTable, redundancy_prune, relevance_filter, select_features

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
CLASSIFIERS = ("NB", "LR", "SVM", "RF", "MP")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def bundled_correlations() -> str:
    return str(resources.files("sessionlens") / "fixtures" / "paper_correlations.csv")


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _param(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}")
    name, value = text.split("=", 1)
    try:
        value = json.loads(value)
    except json.JSONDecodeError:
        pass
    return name, value


@contextlib.contextmanager
def _output(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


# -- shared argument groups ------------------------------------------------

def _add_assembly(p):
    p.add_argument("--serp-prefix", default=session_log.DEFAULT_SERP_PREFIX,
                   help="URL prefix identifying search result pages (default: %(default)s)")
    p.add_argument("--idle-window", type=float, default=session_log.DEFAULT_IDLE_WINDOW_S,
                   help="seconds of activity credited per interaction (default: %(default)s)")


def _add_dataset(p):
    p.add_argument("--features", required=True, help="features CSV from 'extract'")
    p.add_argument("--labels", required=True, help="labels CSV from 'label'")
    p.add_argument("--task", choices=("gain", "state"), default="gain", help="prediction target")


def _add_selection(p, grid=False):
    if grid:
        p.add_argument("--taus", type=_float_list, default=[1.0], help="comma-separated tau values")
        p.add_argument("--betas", type=_float_list, help="comma-separated relevance thresholds (gain task)")
        p.add_argument("--gammas", type=_float_list, help="comma-separated relevance thresholds (state task)")
    else:
        p.add_argument("--tau", type=float, default=1.0, help="redundancy threshold in (0, 1]")
        p.add_argument("--beta", type=float, help="relevance threshold for the gain task")
        p.add_argument("--gamma", type=float, help="relevance threshold for the state task")
    p.add_argument("--selection-scope", choices=("fold", "global"), default="fold",
                   help="fit feature selection per training fold or once on all rows")


def _add_cv(p, seed_required=True):
    p.add_argument("--seed", type=int, required=seed_required, default=None if seed_required else 0)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--reps", type=int, default=10)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sessionlens", description=__doc__.splitlines()[0].strip("`"))
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("ingest", help="validate an event log and summarize its sessions")
    p.add_argument("--events", required=True)
    p.add_argument("--records", help="knowledge records JSON; enables participant filtering")
    _add_assembly(p)

    p = sub.add_parser("label", help="score knowledge tests and assign Low/Moderate/High classes")
    p.add_argument("--records", required=True)
    p.add_argument("--grouping", choices=("per_topic", "global"), default="per_topic")
    p.add_argument("--out", help="output CSV (default: stdout)")

    p = sub.add_parser("extract", help="compute the 70-feature matrix for kept sessions")
    p.add_argument("--events", required=True)
    p.add_argument("--records", required=True)
    p.add_argument("--lexicon", required=True, help="CSV with columns word,aoa")
    p.add_argument("--out", help="output CSV (default: stdout)")
    _add_assembly(p)

    p = sub.add_parser("select", help="list features surviving relevance and redundancy thresholds")
    p.add_argument("--features", help="features CSV (needed for tau < 1 or data-driven correlations)")
    p.add_argument("--labels", help="labels CSV (needed for data-driven correlations)")
    p.add_argument("--task", choices=("gain", "state"), default="gain")
    p.add_argument("--correlations", nargs="?", const=bundled_correlations(),
                   help="correlation table CSV (feature,corr_gain,corr_state); "
                        "without a value uses the bundled table")
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float)

    p = sub.add_parser("evaluate", help="repeated stratified cross-validation of one configuration")
    _add_dataset(p)
    p.add_argument("--classifier", choices=CLASSIFIERS, required=True)
    p.add_argument("--param", type=_param, action="append", default=[], metavar="NAME=VALUE",
                   help="classifier hyperparameter (repeatable)")
    _add_selection(p)
    _add_cv(p)
    p.add_argument("--out-json")
    p.add_argument("--out-csv")

    p = sub.add_parser("gridsearch", help="evaluate every hyperparameter and selection cell")
    _add_dataset(p)
    p.add_argument("--classifier", choices=CLASSIFIERS, action="append", required=True,
                   help="classifier kind (repeatable)")
    p.add_argument("--grid", help="JSON file mapping kind to {param: [values]} (default grids otherwise)")
    _add_selection(p, grid=True)
    _add_cv(p)
    p.add_argument("--out-csv", help="full report table (default: stdout)")
    p.add_argument("--out-json", help="all reports as JSON")

    p = sub.add_parser("importance", help="random-forest mean decrease accuracy per feature")
    _add_dataset(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n-trees", type=int, default=100)
    p.add_argument("--out")

    p = sub.add_parser("baseline-ks", help="query-length/click-rank knowledge-state baseline")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    _add_cv(p, seed_required=False)
    p.add_argument("--out-json")

    p = sub.add_parser("synth", help="generate a synthetic event log, records and lexicon")
    p.add_argument("--spec", required=True, help="generator spec JSON")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("describe", help="per-topic pre/post/gain summary table")
    p.add_argument("--records", required=True)
    return parser


# -- subcommands -----------------------------------------------------------

def _sessions(args):
    events = session_log.read_events(args.events)
    return session_log.assemble_sessions(events, args.serp_prefix, args.idle_window), events


def cmd_ingest(args):
    sessions, events = _sessions(args)
    summary = {
        "events": len(events),
        "sessions": len(sessions),
        "queries": sum(len(s.queries) for s in sessions),
        "page_visits": sum(1 for s in sessions for v in s.page_visits if not v.is_serp),
        "serp_visits": sum(1 for s in sessions for v in s.page_visits if v.is_serp),
    }
    if args.records:
        kept, rejected = session_log.filter_sessions(sessions, knowledge.load_records(args.records))
        summary["kept"] = len(kept)
        summary["rejected"] = {r: sum(1 for _, why in rejected if why == r) for r in session_log.REJECT_REASONS}
        summary["rejected_sessions"] = [{"session_id": sid, "reason": why} for sid, why in rejected]
    print(json.dumps(summary, indent=2))


def cmd_label(args):
    labeled = knowledge.label_dataset(knowledge.load_records(args.records), args.grouping)
    with _output(args.out) as fh:
        knowledge.write_labels_csv(labeled, fh)


def cmd_extract(args):
    sessions, _ = _sessions(args)
    kept, rejected = session_log.filter_sessions(sessions, knowledge.load_records(args.records))
    for sid, why in rejected:
        logging.getLogger("sessionlens").warning("session %s rejected: %s", sid, why)
    matrix = extract_matrix(kept, AoALexicon.from_csv(args.lexicon))
    with _output(args.out) as fh:
        matrix.to_csv(fh)


def _threshold(args) -> float:
    value = args.beta if args.task == "gain" else args.gamma
    other = args.gamma if args.task == "gain" else args.beta
    if other is not None:
        raise UsageError("use --beta with --task gain and --gamma with --task state")
    return 0.0 if value is None else value


def _dataset(args):
    matrix = FeatureMatrix.read_csv(args.features)
    return evaluation.build_dataset(matrix, knowledge.read_labels_csv(args.labels), args.task)


def cmd_select(args):
    threshold = _threshold(args)
    if args.correlations:
        table = RelevanceTable.read_csv(args.correlations)
        subset = relevance_filter(table, args.task, threshold)
        if args.features:
            matrix = FeatureMatrix.read_csv(args.features)
            subset = redundancy_prune(matrix.values, matrix.columns, subset, args.tau, table, args.task)
        elif args.tau < 1.0:
            raise UsageError("--tau below 1 needs --features to measure inter-feature correlation")
        total = len(table.names)
    else:
        if not (args.features and args.labels):
            raise UsageError("give --correlations, or both --features and --labels")
        ds = _dataset(args)
        subset = select_features(ds.X, ds.columns, ds.target, args.task, threshold, args.tau)
        total = len(ds.columns)
    thr_name = "beta" if args.task == "gain" else "gamma"
    print(f"# {len(subset)} of {total} features (task={args.task}, {thr_name}={threshold:g}, tau={args.tau:g})")
    for name in subset.names:
        print(name)


def _selection_thresholds(args) -> list[float]:
    values = args.betas if args.task == "gain" else args.gammas
    other = args.gammas if args.task == "gain" else args.betas
    if other is not None:
        raise UsageError("use --betas with --task gain and --gammas with --task state")
    return values or [0.0]


def _emit_report(report, out_json, out_csv):
    with _output(out_json) as fh:
        fh.write(report.to_json() + "\n")
    if out_csv:
        with _output(out_csv) as fh:
            evaluation.write_reports_csv([report], fh)


def cmd_evaluate(args):
    ds = _dataset(args)
    spec = ModelSpec(args.classifier, dict(args.param), args.seed)
    cfg = evaluation.SelectionConfig(args.task, _threshold(args), args.tau, args.selection_scope)
    report = evaluation.repeated_cv(ds, spec, cfg, args.folds, args.reps, args.seed)
    _emit_report(report, args.out_json, args.out_csv)


def cmd_gridsearch(args):
    ds = _dataset(args)
    grids = dict(DEFAULT_GRIDS)
    if args.grid:
        with open(args.grid, encoding="utf-8") as fh:
            grids.update(json.load(fh))
    thresholds = _selection_thresholds(args)
    all_reports, bests = [], []
    for kind in args.classifier:
        best, reports = evaluation.grid_search(
            ds, kind, grids[kind], args.taus, thresholds, args.task, args.seed,
            args.folds, args.reps, args.selection_scope)
        all_reports += reports
        bests.append(best)
    with _output(args.out_csv) as fh:
        evaluation.write_reports_csv(all_reports, fh)
    if args.out_json:
        with _output(args.out_json) as fh:
            json.dump({"reports": [r.to_dict() for r in all_reports],
                       "best": [r.to_dict() for r in bests]}, fh, indent=2, sort_keys=True)
    for best in bests:
        print(f"best {best.method}: {json.dumps(best.hyperparameters, sort_keys=True)} "
              f"tau={best.tau:g} threshold={best.threshold:g} accuracy={best.metrics.accuracy:.4f} "
              f"macro_f1={best.metrics.macro_f1:.4f}", file=sys.stderr)


def cmd_importance(args):
    ds = _dataset(args)
    report = evaluation.mda_importance(ds, ModelSpec("RF", {"n_trees": args.n_trees}), args.seed)
    with _output(args.out) as fh:
        report.to_csv(fh)


def cmd_baseline_ks(args):
    matrix = FeatureMatrix.read_csv(args.features)
    ds = evaluation.build_dataset(matrix, knowledge.read_labels_csv(args.labels), "state")
    ds = ds.subset_columns(evaluation.BASELINE_COLUMNS)
    report = evaluation.repeated_cv(ds, ModelSpec("KS_Zhang"), None, args.folds, args.reps, args.seed)
    _emit_report(report, args.out_json, None)


def cmd_synth(args):
    result = synth.generate(synth.load_spec(args.spec, seed=args.seed))
    paths = result.write(args.out)
    print(json.dumps({k: str(v) for k, v in paths.items()}, indent=2))


def cmd_describe(args):
    rows, overall, familiarity = knowledge.describe_topics(knowledge.load_records(args.records))
    print(knowledge.format_topic_table(rows, overall, familiarity))


COMMANDS = {
    "ingest": cmd_ingest, "label": cmd_label, "extract": cmd_extract, "select": cmd_select,
    "evaluate": cmd_evaluate, "gridsearch": cmd_gridsearch, "importance": cmd_importance,
    "baseline-ks": cmd_baseline_ks, "synth": cmd_synth, "describe": cmd_describe,
}

DATA_ERRORS = (
    session_log.SessionLogError, knowledge.KnowledgeError, FeatureExtractionError,
    synth.SynthError, ValueError, KeyError, OSError, json.JSONDecodeError,
)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"sessionlens {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        print(f"sessionlens {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
