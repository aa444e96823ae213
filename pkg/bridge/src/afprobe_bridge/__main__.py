"""python -m afprobe_bridge extract --model hubert --wav-list list.txt --out feats/"""

from __future__ import annotations

import argparse
import sys

from .extract import ExtractSpec, extract, read_wav_list
from .models import BridgeError


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="afprobe_bridge")
    sub = parser.add_subparsers(dest="command")
    p = sub.add_parser("extract", help="dump checkpoint representations to feature files")
    p.add_argument("--model", required=True, choices=["cpc", "wav2vec2", "hubert"])
    p.add_argument("--wav-list", required=True, help="text file, one wav path per line")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--checkpoint", default=None, help="hub id or local path (required for cpc)")
    p.add_argument("--layer", type=int, default=None, help="context layer (default: final)")
    args = parser.parse_args(argv)
    if args.command != "extract":
        parser.print_usage(sys.stderr)
        return 1
    try:
        spec = ExtractSpec(
            model=args.model,
            wav_paths=read_wav_list(args.wav_list),
            out_dir=args.out,
            checkpoint=args.checkpoint,
            layer=args.layer,
        )
        written = extract(spec)
    except BridgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {len(written)} feature files to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
