"""Command-line pipeline: feature generation, labeling, probe training and
evaluation, PER scoring, cross-system correlation, and the objectives
verification suite.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal invariant
violation (including failed verification checks). Reports are plain JSON with
no timestamps; anything time-dependent goes to the stderr log only.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .af import (
    DEFAULT_DROP,
    concat_labeled,
    default_af_map,
    label_frames,
    load_af_map,
    read_labeled,
    write_labeled,
)
from .errors import DataError, InternalError
from .metrics import (
    correlate_report,
    load_system,
    per_corpus,
    probe_report,
    read_trn,
    write_json,
)
from .mfcc import MfccConfig, mfcc, read_wav, splice
from .probe import ProbeConfig, fit_probe, read_probe, subsample_per_utterance, write_probe
from .store import read_alignment, read_features, read_manifest, write_features
from .verify import run_loss_checks

log = logging.getLogger("afprobe")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        raise SystemExit(1)


@dataclass
class RunConfig:
    seed: int = 17
    threads: int = 0  # 0 = all cores

    def resolved_threads(self) -> int:
        if self.threads > 0:
            return self.threads
        env = os.environ.get("AFPROBE_THREADS", "")
        if env.isdigit() and int(env) > 0:
            return int(env)
        return os.cpu_count() or 1


def _parallel_map(fn, items, threads: int):
    """Order-preserving map; results never depend on scheduling."""
    if threads > 1 and len(items) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=17, help="master seed (default 17)")
    p.add_argument(
        "--threads",
        type=int,
        default=0,
        help="worker threads; 0 = AFPROBE_THREADS or all cores",
    )
    p.add_argument("--log-level", default="info", choices=["debug", "info", "warning", "error"])


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="afprobe", description=__doc__)
    parser.add_argument("--version", action="version", version=f"afprobe {__version__}")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("mfcc", help="compute MFCC features from WAV files")
    p.add_argument("--wav", required=True, help="WAV file or directory of *.wav")
    p.add_argument("--out", required=True, help="output directory for .afpr files")
    p.add_argument("--context", type=int, default=5, help="splice context (odd; 1 = none)")
    p.add_argument("--sample-rate", type=int, default=16000)
    _add_common(p)

    p = sub.add_parser("label", help="attach AF labels to feature frames")
    p.add_argument("--manifest", required=True)
    p.add_argument("--af-map", default=None, help="phone-to-AF TSV (default: bundled TIMIT-39 map)")
    p.add_argument("--drop", default=",".join(sorted(DEFAULT_DROP)), help="comma-separated phones to drop")
    p.add_argument("--split", default="all", choices=["train", "validation", "test", "all"])
    p.add_argument("--sample-rate", type=int, default=16000, help="alignment sample rate")
    p.add_argument("--max-frames-per-utt", type=int, default=0, help="0 = keep all")
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("train-probe", help="train one-vs-rest linear probes")
    p.add_argument("--train", required=True, help="labeled frame set")
    p.add_argument("--out", required=True, help="probe container path")
    p.add_argument("--alpha", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=0, help="0 = max(5, ceil(1e6/n))")
    p.add_argument("--no-shuffle", action="store_true")
    _add_common(p)

    p = sub.add_parser("eval-probe", help="score a probe on a labeled test set")
    p.add_argument("--probe", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--report", required=True, help="JSON report path")
    p.add_argument("--name", default="", help="system name recorded in the report")
    _add_common(p)

    p = sub.add_parser("per", help="phone error rate between .trn transcripts")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--report", default=None, help="optional JSON report path")
    _add_common(p)

    p = sub.add_parser("correlate", help="correlate probe F1 with PER across systems")
    p.add_argument("--inputs", required=True, help="comma-separated system JSON paths")
    p.add_argument("--report", default=None, help="optional JSON summary path")
    p.add_argument("--csv", default=None, help="optional CSV of the paired table")
    _add_common(p)

    p = sub.add_parser("loss-check", help="run the objectives verification suite")
    p.add_argument("--seeds", type=int, default=100)
    _add_common(p)
    return parser


def _cmd_mfcc(args: argparse.Namespace, run: RunConfig) -> int:
    wav_arg = Path(args.wav)
    if wav_arg.is_dir():
        wavs = sorted(wav_arg.glob("*.wav"))
        if not wavs:
            raise DataError(f"no *.wav files in {wav_arg}")
    elif wav_arg.exists():
        wavs = [wav_arg]
    else:
        raise DataError(f"no such file or directory: {wav_arg}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = MfccConfig(sample_rate=args.sample_rate, context_frames=args.context)

    def one(path: Path) -> str:
        samples, _rate = read_wav(path, expected_sample_rate=args.sample_rate)
        feats = mfcc(samples, cfg, utterance_id=path.stem)
        if args.context > 1:
            feats = splice(feats, args.context)
        write_features(feats, out_dir / f"{path.stem}.afpr")
        return path.stem

    done = _parallel_map(one, wavs, run.resolved_threads())
    log.info("wrote %d feature files to %s", len(done), out_dir)
    return 0


def _cmd_label(args: argparse.Namespace, run: RunConfig) -> int:
    manifest = read_manifest(args.manifest)
    entries = manifest.select(args.split)
    if not entries:
        raise DataError(f"manifest has no entries for split {args.split!r}")
    af_map = load_af_map(args.af_map) if args.af_map else default_af_map()
    drop = frozenset(p for p in args.drop.split(",") if p)

    def one(entry):
        feats = read_features(entry.feature_path)
        ali = read_alignment(entry.alignment_path, args.sample_rate, entry.utterance_id)
        return label_frames(feats, ali, af_map, drop)

    parts = _parallel_map(one, entries, run.resolved_threads())
    labeled = concat_labeled(parts)
    if args.max_frames_per_utt > 0:
        labeled = subsample_per_utterance(labeled, args.max_frames_per_utt, run.seed)
    write_labeled(labeled, args.out)
    log.info(
        "labeled %d frames (%d dropped, %d out of segment) -> %s",
        labeled.counts["kept"],
        labeled.counts["dropped"],
        labeled.counts["out_of_segment"],
        args.out,
    )
    return 0


def _cmd_train_probe(args: argparse.Namespace, run: RunConfig) -> int:
    train = read_labeled(args.train)
    cfg = ProbeConfig(
        alpha=args.alpha, epochs=args.epochs, seed=run.seed, shuffle=not args.no_shuffle
    )
    probe = fit_probe(train, cfg=cfg, threads=run.resolved_threads())
    write_probe(probe, args.out)
    untrainable = [b.feature for b in probe.blocks if not b.trainable]
    if untrainable:
        log.warning("untrainable features (single class in training data): %s", untrainable)
    log.info("trained probe on %d frames -> %s", len(train), args.out)
    return 0


def _cmd_eval_probe(args: argparse.Namespace, run: RunConfig) -> int:
    probe = read_probe(args.probe)
    test = read_labeled(args.test)
    report = probe_report(probe, test, name=args.name)
    write_json(report.to_jsonable(), args.report)
    print(f"{'AF':<10} {'macro-F1':>9}")
    for feature in report.per_af:
        print(f"{feature:<10} {report.per_af[feature].macro_f1:>9.3f}")
    print(f"{'Avg':<10} {report.averaged:>9.3f}")
    print(f"{'Std':<10} {report.std:>9.3f}")
    return 0


def _cmd_per(args: argparse.Namespace, run: RunConfig) -> int:
    refs = read_trn(args.ref)
    hyps = read_trn(args.hyp)
    report = per_corpus(refs, hyps)
    if args.report:
        write_json(report.to_jsonable(), args.report)
    print(f"%PER          {100.0 * report.per:.1f}")
    print(f"%substitution {100.0 * report.substitutions / report.n_ref:.1f}")
    print(f"%deletion     {100.0 * report.deletions / report.n_ref:.1f}")
    print(f"%insertion    {100.0 * report.insertions / report.n_ref:.1f}")
    return 0


def _cmd_correlate(args: argparse.Namespace, run: RunConfig) -> int:
    paths = [p for p in args.inputs.split(",") if p]
    systems = [load_system(p) for p in paths]
    summary = correlate_report(systems)
    if args.report:
        write_json(summary.to_jsonable(), args.report)
    if args.csv:
        summary.write_csv(args.csv)
    print(f"{'system':<14} {'avg F1':>8} {'PER':>8}")
    for name, f1, p in zip(summary.names, summary.f1_averaged, summary.per):
        print(f"{name:<14} {f1:>8.3f} {p:>8.3f}")
    print(f"r = {summary.r:.3f}")
    print(f"|r| = {summary.abs_r:.3f}")
    return 0


def _cmd_loss_check(args: argparse.Namespace, run: RunConfig) -> int:
    results = run_loss_checks(args.seeds)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{r.name:<{width}}  {'pass' if r.passed else 'FAIL'}  {r.detail}")
    if not all(r.passed for r in results):
        raise InternalError("verification suite reported failures")
    return 0


_COMMANDS = {
    "mfcc": _cmd_mfcc,
    "label": _cmd_label,
    "train-probe": _cmd_train_probe,
    "eval-probe": _cmd_eval_probe,
    "per": _cmd_per,
    "correlate": _cmd_correlate,
    "loss-check": _cmd_loss_check,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return 1
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper()),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    run = RunConfig(seed=args.seed, threads=args.threads)
    try:
        return _COMMANDS[args.command](args, run)
    except DataError as exc:
        log.error("%s", exc)
        return 2
    except InternalError as exc:
        log.error("internal error: %s", exc)
        return 3
    except OSError as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
