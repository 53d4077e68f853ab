#!/usr/bin/env python3
"""End-to-end synthetic experiment: generate data, run both methods, export clusters.

Equivalent CLI sequence (after `python scripts/generate_fixture.py data/synthetic`):
  mycobow crossval --config configs/synthetic.yaml --seed 11 --out out/synthetic-crossval
  mycobow crossval --config configs/synthetic.yaml --method baseline-head --seed 11 --out out/synthetic-baseline
"""

import argparse
import sys
from pathlib import Path

from mycobow.cli import main as cli_main
from mycobow.synthetic import SyntheticSpec, generate_synthetic_dataset


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", type=Path, default=Path("out/synthetic-experiment"))
    parser.add_argument("--seed", type=int, default=11)
    parser.add_argument("--image-size", type=int, default=1024)
    args = parser.parse_args()

    data_dir = args.workdir / "data"
    manifest = data_dir / "manifest.txt"
    if not manifest.exists():
        print("generating synthetic dataset ...")
        generate_synthetic_dataset(data_dir, SyntheticSpec(image_size=args.image_size, seed=0))

    config = args.workdir / "run.yaml"
    config.write_text(
        f"""
manifest: {manifest}
patching: {{patch_size: 256, stride: 256, foreground_threshold: 0.02}}
descriptors:
  source: builtin
  bank: {{seed: 7, cell: 32, dim: 64}}
em: {{max_iterations: 60, tolerance: 1.0e-6, sample_cap: 8192}}
grids:
  c_values: [0.01, 1.0, 100.0]
  k_values: [8, 16]
baseline: {{hidden: 512, learning_rate: 0.05, epochs: 200, batch_size: 32}}
""",
        encoding="utf-8",
    )

    steps = [
        ["crossval", "--config", str(config), "--seed", str(args.seed),
         "--out", str(args.workdir / "fv-svm")],
        ["crossval", "--config", str(config), "--method", "baseline-head",
         "--seed", str(args.seed), "--out", str(args.workdir / "baseline")],
        ["train", "--config", str(config), "--k", "8", "--c", "1.0",
         "--seed", str(args.seed), "--out", str(args.workdir / "bundle")],
        ["clusters", "--config", str(config), "--bundle", str(args.workdir / "bundle"),
         "--n-components", "6", "--top", "9", "--seed", str(args.seed),
         "--out", str(args.workdir / "clusters")],
    ]
    for step in steps:
        print("$ mycobow " + " ".join(step))
        rc = cli_main(step)
        if rc != 0:
            return rc
    return 0


if __name__ == "__main__":
    sys.exit(main())
