"""CLI: run a frozen backbone over exported patches, emit .dfb descriptors."""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .backbones import ARCHITECTURES, build_backbone
from .errors import ExtractorError, WeightsError
from .extract import extract_directory


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cnn-descriptors", description=__doc__)
    parser.add_argument("--version", action="version", version=f"cnn-descriptors {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("extract", help="extract descriptors for every patch PNG in a directory")
    p.add_argument("--arch", required=True, choices=sorted(ARCHITECTURES))
    p.add_argument("--patches", required=True, help="directory of patch PNGs")
    p.add_argument("--out", required=True, help="destination directory for .dfb files")
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--device", default="cpu")
    p.add_argument("--weights", choices=("pretrained", "random"), default="pretrained",
                   help="'random' uses a seeded architecture-native initialization")
    p.add_argument("--seed", type=int, default=0, help="seed for --weights random")
    p.add_argument("--resize", choices=("native", "canonical"), default="native",
                   help="feed patches at native resolution or the backbone's classical input size")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        backbone = build_backbone(args.arch, weights=args.weights, seed=args.seed,
                                  device=args.device)
        written = extract_directory(backbone, args.patches, args.out,
                                    batch_size=args.batch, resize=args.resize)
    except WeightsError as exc:
        print(f"weights error: {exc}", file=sys.stderr)
        return 2
    except ExtractorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(written)} descriptor files (D={backbone.spec.descriptor_dim}) to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
