"""Command-line entry point: fetch -> prepare -> train (+ train-baseline) ->
evaluate -> compare -> predict -> serve.

Exit codes: 0 success, 2 usage error, 3 data error, 4 model error,
5 network error. Every subcommand validates its flags up front and prints
the resolved effective configuration before doing any work.

Training flags overlay a config file: explicit flags beat the preset, the
preset beats built-in defaults. ``--preset paper-2021`` resolves to the
checked-in preset carrying the full-scale reference hyperparameters.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from importlib import resources
from pathlib import Path

from . import __version__
from .baseline import (
    BaselineConfig,
    load_baseline,
    predict_baseline,
    predict_baseline_batch,
    train_baseline,
    save_baseline,
)
from .classifier import (
    TrainingConfig,
    fine_tune,
    load_artifact,
    predict,
    predict_batch,
    save_artifact,
)
from .corpus import (
    CorpusSplit,
    build_examples,
    oversample_minority,
    read_corpus_split,
    split_corpus,
    subsample,
    write_corpus_split,
)
from .errors import DataError, ModelError, NetworkError
from .ingestion import GitHubClient, fetch_corpus, read_archive
from .labels import LABELS
from .metrics import Comparison, EvaluationReport, compare_reports, evaluate


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if value <= 0:
        raise argparse.ArgumentTypeError("must be a positive number")
    return value


def _unit_open_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError("must be strictly between 0 and 1")
    return value


def _echo_config(name: str, config: dict) -> None:
    print(f"resolved configuration ({name}): {json.dumps(config, sort_keys=True)}")


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------


def _parse_languages(value: str) -> list[str]:
    path = Path(value)
    if path.exists():
        lines = path.read_text(encoding="utf-8").splitlines()
        languages = [line.strip() for line in lines if line.strip()]
    else:
        languages = [part.strip() for part in value.split(",") if part.strip()]
    if not languages:
        raise DataError(f"no languages found in {value!r}")
    return languages


def _cmd_fetch(args: argparse.Namespace) -> int:
    languages = _parse_languages(args.languages)
    _echo_config(
        "fetch",
        {
            "languages": languages,
            "repos_per_language": args.repos_per_language,
            "out": str(args.out),
            "page_size": args.page_size,
            "workers": args.workers,
        },
    )
    client = GitHubClient()
    manifest = fetch_corpus(
        client,
        languages,
        args.repos_per_language,
        args.out,
        page_size=args.page_size,
        max_workers=args.workers,
        progress=lambda msg: print(msg),
    )
    manifest_path = Path(str(args.out) + ".manifest.json")
    manifest_path.write_text(
        json.dumps(manifest.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    print(
        f"archived {manifest.total_written} new records from "
        f"{len(manifest.fetched_counts)} repositories "
        f"(archive total {manifest.archive_total}); manifest: {manifest_path}"
    )
    return 0


def _cmd_prepare(args: argparse.Namespace) -> int:
    _echo_config(
        "prepare",
        {
            "in": str(args.in_path),
            "out": str(args.out),
            "ratio": args.ratio,
            "seed": args.seed,
            "oversample": not args.no_oversample,
            "sample": args.sample,
        },
    )
    records = read_archive(args.in_path)
    examples = build_examples(records)
    if not examples:
        raise DataError("no usable examples survived filtering (labels/english/pull requests)")
    dropped_info = f"{len(examples)} labeled English examples"
    if args.sample is not None:
        examples = subsample(examples, args.sample, args.seed)
        dropped_info += f", subsampled to {len(examples)}"
    split = split_corpus(examples, args.ratio, args.seed)
    if not args.no_oversample:
        split.train, split.oversample_report = oversample_minority(split.train, args.seed)
    manifest = write_corpus_split(split, args.out)
    print(dropped_info)
    print(
        f"wrote {manifest['n_train']} train / {manifest['n_test']} test examples to "
        f"{args.out} (test fingerprint {manifest['fingerprint_test'][:12]})"
    )
    return 0


def _load_preset(name_or_path: str) -> dict:
    candidate = Path(name_or_path)
    if candidate.exists():
        return json.loads(candidate.read_text(encoding="utf-8"))
    packaged = resources.files("issuetriage") / "presets" / f"{name_or_path}.json"
    if packaged.is_file():
        return json.loads(packaged.read_text(encoding="utf-8"))
    raise DataError(
        f"preset {name_or_path!r} is neither a file nor a bundled preset name"
    )


_TRAIN_FLAG_FIELDS = {
    "epochs": "epochs",
    "lr": "learning_rate",
    "max_len": "max_sequence_length",
    "batch": "batch_size",
    "encoder": "base_encoder",
    "seed": "seed",
    "threshold": "decision_threshold",
}


def _resolve_training_config(args: argparse.Namespace) -> TrainingConfig:
    """Overlay: explicit flags > preset file > TrainingConfig defaults."""
    values = TrainingConfig().to_dict()
    if args.preset:
        preset = _load_preset(args.preset)
        unknown = set(preset) - set(values)
        if unknown:
            raise DataError(f"preset contains unknown fields: {sorted(unknown)}")
        values.update(preset)
    for flag, field_name in _TRAIN_FLAG_FIELDS.items():
        flag_value = getattr(args, flag)
        if flag_value is not None:
            values[field_name] = flag_value
    try:
        return TrainingConfig.from_dict(values)
    except (TypeError, ValueError) as exc:
        raise DataError(f"invalid training configuration: {exc}") from exc


def _cmd_train(args: argparse.Namespace) -> int:
    config = _resolve_training_config(args)
    _echo_config("train", {**config.to_dict(), "corpus": str(args.corpus), "out": str(args.out)})
    split, manifest = read_corpus_split(args.corpus)
    if not split.train:
        raise DataError(f"corpus {args.corpus} has an empty train split")

    def sink(epoch: int, step: int, loss: float) -> None:
        if args.verbose:
            print(f"epoch {epoch} step {step}: loss {loss:.4f}")

    artifact = fine_tune(split.train, config, progress_sink=sink)
    for epoch, loss in enumerate(artifact.loss_curve):
        print(f"epoch {epoch}: mean loss {loss:.4f}")
    save_artifact(artifact, args.out)
    print(
        f"saved artifact {artifact.version_tag} to {args.out} "
        f"(train fingerprint {artifact.corpus_fingerprint[:12]})"
    )
    return 0


def _cmd_train_baseline(args: argparse.Namespace) -> int:
    config = BaselineConfig(min_token_freq=args.min_token_freq, seed=args.seed)
    _echo_config(
        "train-baseline",
        {
            "corpus": str(args.corpus),
            "out": str(args.out),
            "min_token_freq": config.min_token_freq,
            "seed": config.seed,
            "iterations": config.iterations,
            "learning_rate": config.learning_rate,
            "l2": config.l2,
        },
    )
    split, _ = read_corpus_split(args.corpus)
    if not split.train:
        raise DataError(f"corpus {args.corpus} has an empty train split")
    artifact = train_baseline(split.train, config)
    save_baseline(artifact, args.out)
    print(f"saved baseline {artifact.version_tag} to {args.out} "
          f"(vocabulary {len(artifact.vocabulary)} tokens)")
    return 0


def _split_examples(split: CorpusSplit, which: str):
    return split.train if which == "train" else split.test


def _evaluate_model(
    corpus_dir: Path, split_name: str, artifact_dir: str | None, baseline_dir: str | None
) -> EvaluationReport:
    split, manifest = read_corpus_split(corpus_dir)
    examples = _split_examples(split, split_name)
    if not examples:
        raise DataError(f"corpus {corpus_dir} has an empty {split_name} split")
    texts = [example.text for example in examples]
    truths = [example.labels for example in examples]
    if artifact_dir is not None:
        artifact = load_artifact(artifact_dir)
        predictions = [p.labels for p in predict_batch(artifact, texts)]
        model_id = artifact.version_tag
    else:
        baseline = load_baseline(baseline_dir)
        predictions = [p.labels for p in predict_baseline_batch(baseline, texts)]
        model_id = baseline.version_tag
    return evaluate(
        predictions,
        truths,
        model_id=model_id,
        corpus_fingerprint=manifest[f"fingerprint_{split_name}"],
    )


def _cmd_evaluate(args: argparse.Namespace) -> int:
    kind = "transformer" if args.artifact else "baseline"
    out = Path(args.out) if args.out else Path(f"report-{kind}-{args.split}.json")
    _echo_config(
        "evaluate",
        {
            "artifact": args.artifact,
            "baseline": args.baseline,
            "corpus": str(args.corpus),
            "split": args.split,
            "out": str(out),
            "format": args.format,
        },
    )
    report = _evaluate_model(args.corpus, args.split, args.artifact, args.baseline)
    report.save(out)
    if args.format == "json":
        print(json.dumps(report.to_dict(), indent=2))
    else:
        print(report.format_table())
    print(f"report written to {out}")
    return 0


def rq1_report(
    corpus_dir: str | Path,
    transformer_artifact: str | Path,
    baseline_artifact: str | Path,
    split_name: str = "test",
) -> tuple[Comparison, EvaluationReport, EvaluationReport]:
    """Evaluate both models on the same test partition and compare them."""
    report_a = _evaluate_model(Path(corpus_dir), split_name, str(transformer_artifact), None)
    report_b = _evaluate_model(Path(corpus_dir), split_name, None, str(baseline_artifact))
    comparison = compare_reports(
        report_a, report_b, name_a="transformer", name_b="baseline"
    )
    return comparison, report_a, report_b


def _cmd_compare(args: argparse.Namespace) -> int:
    reports = args.reports or []
    if len(reports) > 2:
        raise DataError(f"compare takes at most two --report files, got {len(reports)}")
    if len(reports) == 2:
        _echo_config(
            "compare",
            {"report_a": reports[0], "report_b": reports[1], "format": args.format},
        )
        report_a = EvaluationReport.load(reports[0])
        report_b = EvaluationReport.load(reports[1])
        comparison = compare_reports(
            report_a,
            report_b,
            name_a=report_a.model_id or "a",
            name_b=report_b.model_id or "b",
        )
    elif args.corpus and args.artifact and args.baseline:
        _echo_config(
            "compare",
            {
                "corpus": str(args.corpus),
                "artifact": args.artifact,
                "baseline": args.baseline,
                "split": args.split,
                "format": args.format,
            },
        )
        comparison, _, _ = rq1_report(args.corpus, args.artifact, args.baseline, args.split)
    else:
        raise DataError(
            "compare needs either two --report files, or "
            "--corpus with --artifact and --baseline"
        )
    if args.format == "json":
        print(json.dumps(comparison.to_dict(), indent=2))
    else:
        print(comparison.format_table())
    if args.out:
        Path(args.out).write_text(
            json.dumps(comparison.to_dict(), indent=2) + "\n", encoding="utf-8"
        )
        print(f"comparison written to {args.out}")
    return 0


def _cmd_predict(args: argparse.Namespace) -> int:
    _echo_config(
        "predict",
        {"artifact": args.artifact, "baseline": args.baseline, "text": args.text},
    )
    if args.artifact:
        prediction = predict(load_artifact(args.artifact), args.text)
    else:
        prediction = predict_baseline(load_baseline(args.baseline), args.text)
    payload = {
        "probabilities": dict(zip(LABELS, prediction.probabilities)),
        "labels": list(prediction.labels.names()),
    }
    print(json.dumps(payload, indent=2))
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    from .service import DeliveryLog, GitHubLabelClient, WebhookService, serve_forever

    artifact_dir = args.artifact or os.environ.get("ARTIFACT_DIR")
    if not artifact_dir:
        raise DataError("no artifact directory: pass --artifact or set ARTIFACT_DIR")
    bind = args.bind or os.environ.get("BIND_ADDR", "127.0.0.1:8400")
    host, _, port_text = bind.rpartition(":")
    if not host or not port_text.isdigit():
        raise DataError(f"bind address must look like HOST:PORT, got {bind!r}")
    secret = os.environ.get("WEBHOOK_SECRET", "")
    if not secret:
        raise DataError("WEBHOOK_SECRET must be set for signature verification")
    dedup_path = args.dedup_log or str(Path(artifact_dir) / "deliveries.jsonl")
    _echo_config(
        "serve",
        {"artifact": str(artifact_dir), "bind": bind, "dedup_log": dedup_path},
    )
    artifact = load_artifact(artifact_dir)
    service = WebhookService(
        artifact=artifact,
        api_client=GitHubLabelClient(token=os.environ.get("GITHUB_TOKEN")),
        secret=secret.encode("utf-8"),
        dedup=DeliveryLog(dedup_path),
    )
    print(f"serving artifact {artifact.version_tag} on {host}:{port_text}")
    serve_forever(service, host, int(port_text))
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="issuetriage",
        description="Harvest GitHub issues, train multi-label triage classifiers, "
        "and serve a webhook auto-labeler.",
    )
    parser.add_argument("--version", action="version", version=f"issuetriage {__version__}")
    parser.add_argument(
        "--log-level",
        default="warning",
        choices=["debug", "info", "warning", "error"],
        help="logging verbosity (default: warning)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fetch", help="fetch top repositories per language and archive their issues")
    p.add_argument("--languages", required=True, help="comma-separated list or a file with one language per line")
    p.add_argument("--repos-per-language", type=_positive_int, default=200)
    p.add_argument("--out", required=True, help="archive file (JSON lines)")
    p.add_argument("--page-size", type=_positive_int, default=100)
    p.add_argument("--workers", type=_positive_int, default=4)
    p.set_defaults(func=_cmd_fetch)

    p = sub.add_parser("prepare", help="turn a raw archive into a train/test corpus")
    p.add_argument("--in", dest="in_path", required=True, help="raw archive path")
    p.add_argument("--out", required=True, help="output corpus directory")
    p.add_argument("--ratio", type=_unit_open_float, default=0.8, help="train fraction (default 0.8)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-oversample", action="store_true", help="skip minority-label oversampling")
    p.add_argument("--sample", type=_positive_int, default=None, help="randomly subsample this many labeled issues first")
    p.set_defaults(func=_cmd_prepare)

    p = sub.add_parser("train", help="fine-tune the transformer classifier")
    p.add_argument("--corpus", required=True, help="prepared corpus directory")
    p.add_argument("--out", required=True, help="artifact output directory")
    p.add_argument("--preset", default=None, help="bundled preset name (e.g. paper-2021) or a JSON file")
    p.add_argument("--epochs", type=_positive_int, default=None)
    p.add_argument("--lr", type=_positive_float, default=None)
    p.add_argument("--max-len", dest="max_len", type=_positive_int, default=None)
    p.add_argument("--batch", type=_positive_int, default=None)
    p.add_argument("--encoder", default=None, help="encoder pack name or directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threshold", type=_unit_open_float, default=None)
    p.add_argument("--verbose", action="store_true", help="print per-step losses")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("train-baseline", help="train the tf-idf keyword baseline")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="output directory (or .json path)")
    p.add_argument("--min-token-freq", type=_positive_int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_train_baseline)

    p = sub.add_parser("evaluate", help="score a model on a corpus split")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--artifact", help="transformer artifact directory")
    group.add_argument("--baseline", help="baseline artifact directory")
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.add_argument("--out", default=None, help="report file (default report-<kind>-<split>.json)")
    p.add_argument("--format", choices=["table", "json"], default="table")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("compare", help="compare two evaluation reports (or two artifacts)")
    p.add_argument(
        "--report",
        dest="reports",
        action="append",
        default=None,
        metavar="REPORT",
        help="evaluation report file; pass twice (first is A, second is B)",
    )
    p.add_argument("--corpus", default=None)
    p.add_argument("--artifact", default=None, help="transformer artifact directory")
    p.add_argument("--baseline", default=None, help="baseline artifact directory")
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=["table", "json"], default="table")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("predict", help="predict labels for one text")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--artifact", help="transformer artifact directory")
    group.add_argument("--baseline", help="baseline artifact directory")
    p.add_argument("--text", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("serve", help="run the webhook auto-labeler")
    p.add_argument("--artifact", default=None, help="artifact directory (or ARTIFACT_DIR)")
    p.add_argument("--bind", default=None, help="HOST:PORT (or BIND_ADDR; default 127.0.0.1:8400)")
    p.add_argument("--dedup-log", default=None, help="delivery log path (default <artifact>/deliveries.jsonl)")
    p.set_defaults(func=_cmd_serve)

    return parser


def dispatch(argv=None) -> int:
    """Parse and run; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    logging.basicConfig(level=args.log_level.upper())
    try:
        return args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except ModelError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return 4
    except NetworkError as exc:
        print(f"network error: {exc}", file=sys.stderr)
        return 5
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
