"""Command-line pipeline: ``explain-dlg <subcommand> [options]``.

Options can also come from an INI file passed with ``--config``.  Keys in
``[pipeline]`` apply to every subcommand, keys in a section named after the
subcommand apply to it alone, and command-line flags override both.  Keys
are the long flag names, with dashes or underscores.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import sys
from collections import Counter
from pathlib import Path
from typing import Any, Callable, Sequence

from .agreement import count_matrix, fleiss_kappa, krippendorff_alpha_ordinal
from .aggregation import EMConfig
from .consolidate import SCOPES, ConsolidationConfig, SplitConfig, consolidate_corpus, in_scope, load_annotations
from .flows import (
    CONDITIONED_HEADER,
    FLOW_HEADER,
    LABEL_HEADER,
    SCORE_HEADER,
    flows_csv_rows,
    label_distribution,
    mine_flows,
    quality_conditioned_distribution,
    score_distribution,
)
from .folds import topic_folds
from .ingest import Dialogue, extract_corpus, parse_dump, select_candidate_threads
from .io import atomic_write_text, csv_text, dumps_jsonl, read_jsonl
from .quality import (
    Augmentation,
    BaselinePredictor,
    QualityEnsemble,
    early_prediction_curve,
    evaluate_ensemble,
    evaluate_quality,
    predict_with_predicted_labels,
    train_quality,
)
from .tagger import CrfModel, TaggerHyper, evaluate_tagger, train_tagger
from .taxonomy import TURN_DIMENSIONS, Dimension

log = logging.getLogger("explain-dlg")

EVAL_HEADER = ("augmentation", "label_source", "rmse", "mae")
EARLY_HEADER = ("percentage", "augmentation", "rmse")
TAGGER_HEADER = ("label", "f1")
AGREE_HEADER = ("dimension", "statistic", "items", "value")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        _emit_error("usage", message)
        sys.exit(2)


def _emit_error(kind: str, message: str) -> None:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)


# --- small helpers -----------------------------------------------------------------

def _need(args: argparse.Namespace, *names: str) -> None:
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise UsageError(f"{args.command}: missing required option(s) {flags}")


def _existing(path: str | Path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"{what} not found: {p}")
    return p


def _guard_outputs(inputs: Sequence[str | Path | None], outputs: Sequence[str | Path | None]) -> None:
    ins = {Path(p).resolve() for p in inputs if p}
    for out in outputs:
        if out and out != "-" and Path(out).resolve() in ins:
            raise UsageError(f"refusing to overwrite input file {out}")


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        atomic_write_text(path, text)
        log.info("wrote %s", path)


def _load_dialogues(path: str) -> list[Dialogue]:
    return [Dialogue.from_dict(obj) for obj in read_jsonl(_existing(path, "dialogue file"))]


def _dimension(value: str) -> Dimension:
    dim = Dimension.parse(value)
    if dim not in TURN_DIMENSIONS:
        raise UsageError(f"{dim.value} is not a turn-level dimension")
    return dim


def _augmentations(value: str) -> list[Augmentation]:
    return [Augmentation.parse(v.strip()) for v in value.split(",") if v.strip()]


def _fmt(x: float) -> str:
    return repr(float(x))


def _hyper(args: argparse.Namespace) -> TaggerHyper:
    return TaggerHyper(
        seed=args.seed,
        l2=args.tagger_l2,
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        use_transitions=not args.no_transitions,
    )


def _quality_model_path(models: str, aug: Augmentation) -> Path:
    return Path(models) / f"quality-{aug.value}.json"


def _tagger_path(models: str, dim: Dimension) -> Path:
    return Path(models) / f"tagger-{dim.value}.json"


# --- subcommands -------------------------------------------------------------------

def cmd_ingest(args: argparse.Namespace) -> None:
    _need(args, "dump")
    _guard_outputs([args.dump], [args.out])
    trees = parse_dump(read_jsonl(_existing(args.dump, "dump")))
    chosen = select_candidate_threads(trees, args.per_month_limit)
    log.info("selected %d of %d threads", len(chosen), len(trees))
    rows = []
    for tree in chosen:
        recs = sorted(tree.records.values(), key=lambda r: (r.created_utc, r.id))
        rows.extend(r.to_dict() for r in recs)
    _write(args.out, dumps_jsonl(rows))


def cmd_extract(args: argparse.Namespace) -> None:
    _need(args, "dump")
    _guard_outputs([args.dump], [args.out])
    trees = parse_dump(read_jsonl(_existing(args.dump, "dump")))
    chosen = select_candidate_threads(trees, args.per_month_limit)
    dialogues = extract_corpus(chosen, args.min_turns, args.min_first_level_score)
    log.info("extracted %d dialogues from %d threads", len(dialogues), len(chosen))
    _write(args.out, dumps_jsonl(d.to_dict() for d in dialogues))


def cmd_consolidate(args: argparse.Namespace) -> None:
    _need(args, "dialogues", "annotations", "seed")
    _guard_outputs([args.dialogues, args.annotations], [args.out])
    dialogues = _load_dialogues(args.dialogues)
    annotations = load_annotations(read_jsonl(_existing(args.annotations, "annotation file")))
    config = ConsolidationConfig(
        seed=args.seed,
        em=EMConfig(seed=args.seed, restarts=args.restarts, iterations=args.iterations, smoothing=args.smoothing),
        quality_method=args.quality_method,
        split=SplitConfig(args.split_train, args.split_test),
    )
    corpus = consolidate_corpus(dialogues, annotations, config)
    _write(args.out, dumps_jsonl(d.to_dict() for d in corpus))


def cmd_agree(args: argparse.Namespace) -> None:
    _need(args, "annotations")
    annotations = load_annotations(read_jsonl(_existing(args.annotations, "annotation file")))
    rows = []
    for dim in TURN_DIMENSIONS:
        sets = annotations[dim]
        if not sets:
            continue
        # Fleiss' kappa needs a fixed number of judgments per item
        modal, _ = Counter(len(s.judgments) for s in sets).most_common(1)[0]
        usable = {s.item_id: list(s.judgments.values()) for s in sets if len(s.judgments) == modal}
        if modal < 2:
            log.warning("%s: items carry a single judgment, skipping kappa", dim.value)
            continue
        kappa = fleiss_kappa(count_matrix(usable, dim.size))
        rows.append((dim.value, "fleiss_kappa", len(usable), _fmt(kappa)))
    quality = annotations[Dimension.QUALITY]
    if quality:
        ratings = {s.item_id: {a: v + 1 for a, v in s.judgments.items()} for s in quality}
        alpha = krippendorff_alpha_ordinal(ratings)
        n = sum(1 for r in ratings.values() if len(r) >= 2)
        rows.append(("quality", "krippendorff_alpha_ordinal", n, _fmt(alpha)))
    _write(args.out, csv_text(AGREE_HEADER, rows))


def cmd_analyze(args: argparse.Namespace) -> None:
    _need(args, "dialogues", "reports")
    corpus = _load_dialogues(args.dialogues)
    out = Path(args.reports)
    for dim in TURN_DIMENSIONS:
        for scope in SCOPES:
            if not in_scope(corpus, scope):
                log.warning("scope %s is empty, skipping %s distribution", scope, dim.value)
                continue
            dist = label_distribution(corpus, dim, scope)
            atomic_write_text(out / f"labels-{dim.value}-{scope}.csv", csv_text(LABEL_HEADER, dist.csv_rows()))
        cond = quality_conditioned_distribution(corpus, dim)
        atomic_write_text(out / f"quality-by-{dim.value}.csv", csv_text(CONDITIONED_HEADER, cond.csv_rows()))
    scores = score_distribution(corpus)
    atomic_write_text(out / "scores.csv", csv_text(SCORE_HEADER, scores.csv_rows()))
    log.info("wrote analysis tables to %s", out)


def cmd_mine_flows(args: argparse.Namespace) -> None:
    _need(args, "dialogues")
    dim = _dimension(args.dimension)
    flows = mine_flows(_load_dialogues(args.dialogues), dim, args.top_k)
    _write(args.out, csv_text(FLOW_HEADER, flows_csv_rows(flows)))


def cmd_train_tagger(args: argparse.Namespace) -> None:
    _need(args, "dialogues", "seed")
    dim = _dimension(args.dimension)
    if args.out is None:
        _need(args, "models")
    out = args.out or _tagger_path(args.models, dim)
    _guard_outputs([args.dialogues], [out])
    corpus = in_scope(_load_dialogues(args.dialogues), args.scope)
    model = train_tagger(corpus, dim, _hyper(args))
    model.save(out)
    log.info("wrote %s", out)


def cmd_eval_tagger(args: argparse.Namespace) -> None:
    _need(args, "dialogues", "seed")
    dim = _dimension(args.dimension)
    corpus = in_scope(_load_dialogues(args.dialogues), args.scope)
    folds = topic_folds(corpus, args.folds, args.seed)
    result = evaluate_tagger(corpus, dim, folds, _hyper(args))
    rows = [(lab, _fmt(f)) for lab, f in result.f1.per_label_f1.items()]
    rows.append(("macro", _fmt(result.macro)))
    _write(args.out, csv_text(TAGGER_HEADER, rows))


def cmd_train_quality(args: argparse.Namespace) -> None:
    _need(args, "dialogues", "models", "seed")
    train = in_scope(_load_dialogues(args.dialogues), "train")
    for aug in _augmentations(args.augmentation):
        out = _quality_model_path(args.models, aug)
        _guard_outputs([args.dialogues], [out])
        ens = train_quality(train, aug, args.l2, args.seed, args.quality_folds, args.min_freq)
        ens.save(out)
        log.info("wrote %s", out)


def _load_ensemble(models: str, aug: Augmentation) -> QualityEnsemble:
    return QualityEnsemble.load(_existing(_quality_model_path(models, aug), "quality model"))


def cmd_eval_quality(args: argparse.Namespace) -> None:
    _need(args, "dialogues", "models")
    corpus = _load_dialogues(args.dialogues)
    test = sorted(in_scope(corpus, "test"), key=lambda d: d.dialogue_id)
    if not test:
        raise ValueError("no test-split dialogues to evaluate")
    gold = [d.quality for d in test]
    rows = []
    if args.baseline:
        base = BaselinePredictor.fit(in_scope(corpus, "train"))
        err = evaluate_quality([base.predict(d) for d in test], gold)
        rows.append(("baseline", "gold", _fmt(err.rmse), _fmt(err.mae)))
    for aug in _augmentations(args.augmentation):
        ens = _load_ensemble(args.models, aug)
        err = evaluate_ensemble(ens, test)
        rows.append((aug.value, "gold", _fmt(err.rmse), _fmt(err.mae)))
        if args.taggers and aug.dimensions:
            taggers = {dim: CrfModel.load(_existing(_tagger_path(args.taggers, dim), "tagger model"))
                       for dim in aug.dimensions}
            preds = [predict_with_predicted_labels(ens, d, taggers) for d in test]
            err = evaluate_quality(preds, gold)
            rows.append((aug.value, "predicted", _fmt(err.rmse), _fmt(err.mae)))
    _write(args.out, csv_text(EVAL_HEADER, rows))


def cmd_early_eval(args: argparse.Namespace) -> None:
    _need(args, "dialogues", "models")
    try:
        percentages = [int(p) for p in args.percentages.split(",") if p.strip()]
    except ValueError:
        raise UsageError(f"--percentages must be comma-separated integers, got {args.percentages!r}") from None
    test = in_scope(_load_dialogues(args.dialogues), "test")
    if not test:
        raise ValueError("no test-split dialogues to evaluate")
    rows = []
    for aug in _augmentations(args.augmentation):
        ens = _load_ensemble(args.models, aug)
        rows.extend((pct, aug.value, _fmt(rmse)) for pct, rmse in early_prediction_curve(ens, test, percentages))
    _write(args.out, csv_text(EARLY_HEADER, rows))


def cmd_report(args: argparse.Namespace) -> None:
    _need(args, "reports", "out_dir")
    sources = []
    for item in args.reports.split(","):
        p = Path(item.strip())
        if p.is_dir():
            sources.extend(sorted(p.glob("*.csv")))
        else:
            sources.append(_existing(p, "report"))
    if not sources:
        raise ValueError(f"no CSV reports found in {args.reports}")
    out = Path(args.out_dir)
    names: dict[str, Path] = {}
    entries = []
    for src in sources:
        if src.name in names and names[src.name].resolve() != src.resolve():
            raise ValueError(f"two reports share the file name {src.name}")
        names[src.name] = src
    for name, src in sorted(names.items()):
        data = src.read_bytes()
        if (out / name).resolve() != src.resolve():
            atomic_write_text(out / name, data.decode("utf-8"))
        entries.append({
            "file": name,
            "rows": max(0, data.decode("utf-8").count("\n") - 1),
            "sha256": hashlib.sha256(data).hexdigest(),
        })
    manifest = json.dumps({"reports": entries}, indent=2) + "\n"
    atomic_write_text(out / "manifest.json", manifest)
    log.info("collected %d reports into %s", len(entries), out)


# --- parser ------------------------------------------------------------------------

COMMANDS: dict[str, tuple[Callable[[argparse.Namespace], None], str]] = {
    "ingest": (cmd_ingest, "parse a comment dump and keep the top threads per month"),
    "extract": (cmd_extract, "extract two-party explanation dialogues from a dump"),
    "consolidate": (cmd_consolidate, "aggregate annotations and split the corpus by topic"),
    "agree": (cmd_agree, "inter-annotator agreement statistics"),
    "analyze": (cmd_analyze, "label, quality-conditioned and score distribution tables"),
    "mine-flows": (cmd_mine_flows, "most frequent dialogue label flows"),
    "train-tagger": (cmd_train_tagger, "train a CRF turn tagger"),
    "eval-tagger": (cmd_eval_tagger, "cross-validated macro-F1 of the turn tagger"),
    "train-quality": (cmd_train_quality, "train quality-regression ensembles"),
    "eval-quality": (cmd_eval_quality, "RMSE/MAE of quality models on the test split"),
    "early-eval": (cmd_early_eval, "RMSE when only a prefix of each dialogue is seen"),
    "report": (cmd_report, "collect CSV reports into one directory with a manifest"),
}


def _add_options(name: str, p: argparse.ArgumentParser) -> None:
    opt = p.add_argument
    paths = {
        "ingest": ("dump", "out"),
        "extract": ("dump", "out"),
        "consolidate": ("dialogues", "annotations", "out"),
        "agree": ("annotations", "out"),
        "analyze": ("dialogues", "reports"),
        "mine-flows": ("dialogues", "out"),
        "train-tagger": ("dialogues", "models", "out"),
        "eval-tagger": ("dialogues", "out"),
        "train-quality": ("dialogues", "models"),
        "eval-quality": ("dialogues", "models", "taggers", "out"),
        "early-eval": ("dialogues", "models", "out"),
        "report": ("reports", "out-dir"),
    }[name]
    help_text = {
        "dump": "comment dump (JSONL)",
        "dialogues": "dialogue corpus (JSONL)",
        "annotations": "annotation records (JSONL)",
        "models": "model directory",
        "taggers": "directory of tagger models; adds predicted-label rows",
        "reports": "report directory (analyze) or comma-separated CSV files/directories (report)",
        "out": "output file ('-' or omitted: standard output where allowed)",
        "out-dir": "directory receiving the collected reports",
    }
    for key in paths:
        opt(f"--{key}", help=help_text[key])

    if name in ("ingest", "extract"):
        opt("--per-month-limit", type=int, default=100)
    if name == "extract":
        opt("--min-turns", type=int, default=6)
        opt("--min-first-level-score", type=int, default=2)
    if name in ("consolidate", "train-tagger", "eval-tagger", "train-quality"):
        opt("--seed", type=int, help="random seed (required)")
    if name == "consolidate":
        opt("--restarts", type=int, default=10)
        opt("--iterations", type=int, default=50)
        opt("--smoothing", type=float, default=None, help="additive smoothing (default 0.1 / labels)")
        opt("--quality-method", choices=("em", "median"), default="em")
        opt("--split-train", type=int, default=154, help="train share of topics")
        opt("--split-test", type=int, default=50, help="test share of topics")
    if name in ("mine-flows", "train-tagger", "eval-tagger"):
        opt("--dimension", default="act", help="move, act or topic")
    if name == "mine-flows":
        opt("--top-k", type=int, default=5)
    if name in ("train-tagger", "eval-tagger"):
        opt("--scope", choices=SCOPES, default="train" if name == "train-tagger" else "all")
        opt("--tagger-l2", type=float, default=0.1)
        opt("--epochs", type=int, default=30)
        opt("--learning-rate", type=float, default=0.1)
        opt("--batch-size", type=int, default=8)
        opt("--no-transitions", type=_bool, default=False, nargs="?", const=True,
            help="emission-only classifier")
    if name == "eval-tagger":
        opt("--folds", type=int, default=5)
    if name in ("train-quality", "eval-quality", "early-eval"):
        opt("--augmentation", default="plain,moves,acts,topics,all", help="comma-separated augmentations")
    if name == "train-quality":
        opt("--l2", type=float, default=1.0)
        opt("--quality-folds", type=int, default=10)
        opt("--min-freq", type=int, default=5)
    if name == "eval-quality":
        opt("--baseline", type=_bool, default=False, nargs="?", const=True, help="add the average baseline row")
    if name == "early-eval":
        opt("--percentages", default="10,20,30,40,50,60,70,80,90,100")


def _bool(value: str) -> bool:
    v = str(value).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {value!r}")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = _Parser(prog="explain-dlg", description="Explanation dialogue corpus pipeline.")
    parser.add_argument("--config", help="INI configuration file")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging on stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    subparsers = {}
    for name, (_, desc) in COMMANDS.items():
        sp = sub.add_parser(name, help=desc, description=desc)
        _add_options(name, sp)
        subparsers[name] = sp
    return parser, subparsers


def _config_defaults(path: str, command: str, sp: argparse.ArgumentParser) -> dict[str, Any]:
    cp = configparser.ConfigParser(interpolation=None)
    if not cp.read(_existing(path, "config file"), encoding="utf-8"):
        raise FileNotFoundError(f"config file not found: {path}")
    unknown = set(cp.sections()) - set(COMMANDS) - {"pipeline"}
    if unknown:
        raise UsageError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    actions = {a.dest: a for a in sp._actions if a.dest != "help"}
    out: dict[str, Any] = {}
    for section in ("pipeline", command):
        if not cp.has_section(section):
            continue
        for key, raw in cp.items(section):
            dest = key.replace("-", "_")
            action = actions.get(dest)
            if action is None:
                if section == command:
                    raise UsageError(f"[{section}] {key}: not an option of {command}")
                continue  # shared keys only apply where they make sense
            conv = action.type or str
            try:
                value = conv(raw)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"[{section}] {key}: {exc}") from None
            if action.choices is not None and value not in action.choices:
                raise UsageError(f"[{section}] {key}: {value!r} not in {list(action.choices)}")
            out[dest] = value
    return out


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subparsers = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.config:
            sp = subparsers[args.command]
            sp.set_defaults(**_config_defaults(args.config, args.command, sp))
            args = parser.parse_args(argv)
        COMMANDS[args.command][0](args)
    except UsageError as exc:
        subparsers[args.command].print_usage(sys.stderr)
        _emit_error("usage", str(exc))
        return 2
    except FileNotFoundError as exc:
        _emit_error("missing_file", str(exc))
        return 1
    except (ValueError, KeyError, OSError, RuntimeError) as exc:
        _emit_error(type(exc).__name__, str(exc))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
