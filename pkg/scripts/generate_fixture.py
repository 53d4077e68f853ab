#!/usr/bin/env python3
"""Generate the synthetic desk-scale dataset (images + manifest)."""

import argparse
from pathlib import Path

from mycobow.synthetic import SyntheticSpec, generate_synthetic_dataset


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("outdir", type=Path, help="destination directory")
    parser.add_argument("--classes", type=int, default=4)
    parser.add_argument("--scans-per-class-per-prep", type=int, default=5)
    parser.add_argument("--image-size", type=int, default=1024)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    spec = SyntheticSpec(
        classes=args.classes,
        scans_per_class_per_prep=args.scans_per_class_per_prep,
        image_size=args.image_size,
        seed=args.seed,
    )
    manifest, records = generate_synthetic_dataset(args.outdir, spec)
    print(f"wrote {len(records)} scans; manifest at {manifest}")


if __name__ == "__main__":
    main()
