"""Command-line front-end.

Four subcommands: ``eda`` (descriptive statistics), ``baseline``
(lexical similarity), ``crossval`` (train and evaluate under the
stratified K-fold protocol), ``score`` (one prediction from a saved
checkpoint). Every artifact-writing command also writes a ``run.json``
manifest recording flags, input/output hashes, and wall-clock time.

Exit codes: 0 success, 1 I/O failure, 2 validation or configuration
failure, 3 numeric failure during training.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import corpus, evaluation, lexical, model, reporting
from .errors import IoError, NumericError, PhraseLabError, ValidationError
from .text import encode, load_vocab, save_vocab

EXIT_OK = 0
EXIT_IO = 1
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3


def _write_manifest(
    out_dir: Path,
    command: str,
    flags: dict,
    seed,
    inputs: dict[str, Path],
    outputs: set[Path],
    started: float,
) -> Path:
    manifest = {
        "command": command,
        "flags": reporting.exact_reals(flags),
        "seed": seed,
        "inputs": {str(p): reporting.sha256_of(p) for p in inputs.values()},
        "outputs": {
            str(p.relative_to(out_dir)): reporting.sha256_of(p) for p in sorted(outputs)
        },
        "wall_clock_seconds": time.perf_counter() - started,
    }
    return reporting.write_json(out_dir / "run.json", manifest)


def cmd_eda(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    out_dir = Path(args.out)
    d = corpus.load_dataset(args.data)
    report = corpus.compute_eda(d, char_bin_width=args.char_bin, word_bin_width=args.word_bin)
    written = corpus.export_eda(report, out_dir)
    _write_manifest(
        out_dir,
        "eda",
        {"data": args.data, "out": args.out, "char_bin": args.char_bin, "word_bin": args.word_bin},
        None,
        {"data": Path(args.data)},
        written,
        started,
    )
    return EXIT_OK


def cmd_baseline(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    out_dir = Path(args.out)
    d = corpus.load_dataset(args.data)
    report = lexical.run_baseline(d)
    written = {
        reporting.write_json(
            out_dir / "baseline_report.json",
            {
                "record_count": len(d),
                "pearson": report.pearson_vs_gold,
                "pearson_error": report.pearson_error,
            },
        ),
        reporting.write_hist_csv(out_dir / "hist_levenshtein.csv", report.histogram),
    }
    _write_manifest(
        out_dir,
        "baseline",
        {"data": args.data, "out": args.out},
        None,
        {"data": Path(args.data)},
        written,
        started,
    )
    return EXIT_OK


def _fold_artifacts(out_dir: Path, fold: int, fold_cfg, outcome) -> set[Path]:
    written: set[Path] = set()
    ckpt = out_dir / f"fold_{fold}.ckpt"
    model.save_checkpoint(outcome.extras["params"], fold_cfg, ckpt)
    written.add(ckpt)
    written.add(Path(f"{ckpt}.json"))
    written.add(save_vocab(outcome.extras["vocab"], Path(f"{ckpt}.vocab.txt")))

    trace = outcome.trace
    spe = trace.steps_per_epoch
    rows = ["epoch,mean_train_loss,val_loss"]
    for e, vloss in enumerate(trace.val_losses):
        chunk = trace.step_losses[e * spe : (e + 1) * spe]
        mean_train = sum(chunk) / len(chunk)
        rows.append(
            f"{e},{reporting.format_real(mean_train)},{reporting.format_real(vloss)}"
        )
    written.add(
        reporting.write_text(out_dir / f"loss_curve_fold_{fold}.csv", "\n".join(rows) + "\n")
    )

    rows = ["epoch,pearson"]
    for e, corr in enumerate(trace.val_pearsons):
        rows.append(f"{e}," + ("" if corr is None else reporting.format_real(corr)))
    written.add(
        reporting.write_text(out_dir / f"pearson_curve_fold_{fold}.csv", "\n".join(rows) + "\n")
    )
    return written


def cmd_crossval(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    out_dir = Path(args.out)
    d = corpus.load_dataset(args.data)

    cfg = model.presets(args.preset)
    overrides: dict = {"input_layout": args.layout}
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.seed is not None:
        overrides["seed"] = args.seed
    cfg = replace(cfg, **overrides)

    plan = evaluation.stratified_kfold(d, args.k, n_bins=args.bins, seed=cfg.seed)

    written: set[Path] = set()
    fold_counter = [0]

    def capture_trainer(data, train_idx, val_idx, fold_cfg):
        outcome = model.model_fold_trainer(data, train_idx, val_idx, fold_cfg)
        written.update(_fold_artifacts(out_dir, fold_counter[0], fold_cfg, outcome))
        fold_counter[0] += 1
        return outcome

    report = evaluation.cross_validate(d, plan, cfg, train_fn=capture_trainer)

    payload = {
        "cv_estimate": report.cv_estimate,
        "mean_pearson": report.mean_pearson,
        "folds": [
            {
                "fold": f.fold,
                "n_val": f.n_val,
                "training_loss": f.train_loss,
                "validation_loss": f.validation_loss,
                "pearson": f.pearson,
                "pearson_error": f.pearson_error,
            }
            for f in report.folds
        ],
        "k": plan.k,
        "n_bins": args.bins,
        "seed": cfg.seed,
        "training_loss_definition": "final_epoch_mean",
        "config": reporting.exact_reals(model.config_dict(cfg)),
    }
    written.add(reporting.write_json(out_dir / "cv_report.json", payload))

    flags = {
        "data": args.data,
        "out": args.out,
        "preset": args.preset,
        "k": args.k,
        "bins": args.bins,
        "seed": args.seed,
        "epochs": args.epochs,
        "layout": args.layout,
    }
    _write_manifest(out_dir, "crossval", flags, cfg.seed, {"data": Path(args.data)}, written, started)
    return EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    params, cfg = model.load_checkpoint(args.checkpoint)
    vocab = load_vocab(f"{args.checkpoint}.vocab.txt")
    seq = encode(args.anchor, args.target, args.context, vocab, cfg.max_len, cfg.input_layout)
    score = model.forward(seq, params, cfg)
    print(f"{score:.6f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phraselab",
        description="Phrase-pair similarity laboratory: statistics, lexical baseline, "
        "small-encoder training, and checkpoint scoring.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eda", help="write descriptive statistics for a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--char-bin", type=int, default=5, dest="char_bin")
    p.add_argument("--word-bin", type=int, default=1, dest="word_bin")
    p.set_defaults(func=cmd_eda)

    p = sub.add_parser("baseline", help="run the lexical similarity baseline")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("crossval", help="train and evaluate with stratified K-fold")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--preset", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--bins", type=int, default=5)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument(
        "--layout",
        choices=sorted(("anchor_target_context", "anchor_context")),
        default="anchor_target_context",
    )
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("score", help="score one phrase pair with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--anchor", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--context", required=True)
    p.set_defaults(func=cmd_score)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except IoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValidationError, PhraseLabError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


def entrypoint() -> None:
    raise SystemExit(main())
