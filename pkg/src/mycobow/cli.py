"""Command-line entry point wiring the pipeline stages into reproducible runs.

Exit codes: 0 success, 1 usage/config errors, 2 data errors, 3 numerical
failures.  Flags override config-file values which override defaults; every
run drops a resolved-config echo (effective seed, tool version) into its
output directory.
"""

from __future__ import annotations

import os

# Pin BLAS pools before numpy loads so `--threads` is the only source of
# parallelism and reports stay byte-identical across thread counts.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__, detrng, jsonfmt
from .config import RunConfig, load_run_config, resolved_config_dict
from .data import SPECIES_ORDER, parse_manifest, summarize
from .dfb import write_descriptors, write_matrix
from .errors import ConfigError, DataError, MycobowError, NumericalError
from .evaluation import aggregate_scan, run_experiment, save_report
from .explain import export_montage, save_attribute_template, species_similarity, top_patches, write_similarity_csv
from .fisher import encode_normalized, fit_whitening, load_whitening, save_whitening
from .gmm import EmConfig, em_fit, load_gmm, save_gmm
from .imaging import load_image, normalize_intensity, save_png, to_uint
from .patches import extract_patch_grid, is_foreground
from .pipeline import (
    BuiltinSource,
    build_source,
    load_features,
    pool_descriptors,
    pooled_means,
)
from .svm import decision_matrix, load_svm, save_svm, train_svm_ovr
from .baseline import forward, load_head, save_head, train_baseline_head


class CliParser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on usage errors; we reserve 2 for data errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _effective_threads(cfg_threads: int) -> int:
    if cfg_threads and cfg_threads > 0:
        return cfg_threads
    return os.cpu_count() or 1


def _load_manifest(path: str):
    p = Path(path)
    if not p.exists():
        raise DataError(f"manifest not found: {path}")
    return parse_manifest(p.read_text(encoding="utf-8")), p.parent


def _write_echo(cfg: RunConfig, outdir: Path, **extras) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    jsonfmt.dump(resolved_config_dict(cfg, __version__, extras or None), outdir / "resolved_config.json")


def _common_config(args) -> RunConfig:
    overrides = {}
    for key in ("manifest", "output", "seed", "threads", "method", "aggregate"):
        if hasattr(args, key):
            overrides[key] = getattr(args, key)
    if getattr(args, "dfb_dir", None):
        overrides["dfb_dir"] = args.dfb_dir
        overrides["source"] = "dfb-directory"
    if getattr(args, "patch_index", None):
        overrides["patch_index"] = args.patch_index
    cfg = load_run_config(getattr(args, "config", None), **overrides)
    if not cfg.manifest:
        raise ConfigError("a manifest is required (flag --manifest or config key `manifest`)")
    return cfg


def _require_output(cfg: RunConfig) -> Path:
    if not cfg.output:
        raise ConfigError("an output directory is required (flag --out or config key `output`)")
    return Path(cfg.output)


def _seed_of(cfg: RunConfig, default: int | None = 0) -> int:
    if cfg.seed is None:
        if default is None:
            raise ConfigError("--seed is required for this command")
        return default
    return int(cfg.seed)


# ---------------------------------------------------------------- commands


def cmd_validate_manifest(args) -> int:
    cfg = _common_config(args)
    records, _ = _load_manifest(cfg.manifest)
    summary = summarize(records)
    n_species = sum(1 for v in summary.per_species.values() if v > 0)
    n_preps = sum(1 for v in summary.per_preparation.values() if v > 0)
    print(f"{summary.total} scans, {n_species} species, {n_preps} preparations")
    for code, count in summary.per_species.items():
        if count:
            print(f"  {code}: {count}")
    if cfg.output:
        _write_echo(cfg, Path(cfg.output))
    return 0


def cmd_extract_patches(args) -> int:
    cfg = _common_config(args)
    outdir = _require_output(cfg)
    records, base = _load_manifest(cfg.manifest)
    outdir.mkdir(parents=True, exist_ok=True)
    index_lines = ["# patch_id\tscan_id\trow\tcol\tforeground"]
    n_written = 0
    for rec in records:
        raw = load_image(base / rec.path)
        source_depth = 16 if raw.dtype == np.uint16 else 8
        bit_depth = args.bit_depth or source_depth
        image = normalize_intensity(raw)
        for patch in extract_patch_grid(image, cfg.patch_spec, scan_id=rec.scan_id):
            fg = is_foreground(patch, cfg.patch_spec.foreground_threshold)
            if args.drop_background and not fg:
                continue
            save_png(outdir / f"{patch.id}.png", to_uint(patch.pixels, bit_depth))
            index_lines.append(
                f"{patch.id}\t{rec.scan_id}\t{patch.row}\t{patch.col}\t{1 if fg else 0}"
            )
            n_written += 1
    (outdir / "patches.tsv").write_text("\n".join(index_lines) + "\n", encoding="utf-8")
    _write_echo(cfg, outdir, patches_written=n_written)
    print(f"wrote {n_written} patches to {outdir}")
    return 0


def cmd_describe(args) -> int:
    cfg = _common_config(args)
    outdir = _require_output(cfg)
    records, base = _load_manifest(cfg.manifest)
    source = BuiltinSource(base, cfg.patch_spec, cfg.bank)
    outdir.mkdir(parents=True, exist_ok=True)
    threads = _effective_threads(cfg.threads)
    features = load_features(source, records, threads)
    n = 0
    for rec in records:
        for feat in features[rec.scan_id]:
            write_descriptors(feat.dset, outdir / f"{feat.patch_id}.dfb")
            n += 1
    _write_echo(cfg, outdir, descriptor_files=n)
    print(f"wrote {n} descriptor files to {outdir}")
    return 0


def cmd_fit_gmm(args) -> int:
    cfg = _common_config(args)
    outdir = _require_output(cfg)
    seed = _seed_of(cfg)
    records, base = _load_manifest(cfg.manifest)
    source = build_source(cfg, base)
    threads = _effective_threads(cfg.threads)
    features = load_features(source, records, threads)
    sets = [f.dset for rec in records for f in features[rec.scan_id] if f.foreground]
    if not sets:
        raise DataError("no foreground descriptor sets to fit")
    pooled = pool_descriptors(sets, cfg.em.sample_cap, seed)
    model, trace = em_fit(pooled, EmConfig(
        k=args.k, max_iterations=cfg.em.max_iterations, tolerance=cfg.em.tolerance,
        seed=seed, variance_floor_fraction=cfg.em.variance_floor_fraction,
    ))
    outdir.mkdir(parents=True, exist_ok=True)
    save_gmm(model, outdir / "gmm.json", seed=seed, trace=trace)
    if cfg.fisher.whiten:
        save_whitening(fit_whitening(pooled, cfg.fisher.whiten_dim), outdir / "whitening.json")
    _write_echo(cfg, outdir, k=args.k, pooled_descriptors=int(pooled.shape[0]),
                converged=trace.converged, iterations=trace.iterations)
    print(f"fitted K={args.k} mixture on {pooled.shape[0]} descriptors "
          f"({'converged' if trace.converged else 'iteration cap'}, {trace.iterations} iterations)")
    return 0


def cmd_encode(args) -> int:
    cfg = _common_config(args)
    outdir = _require_output(cfg)
    model = load_gmm(args.gmm)
    whitening = load_whitening(args.whitening) if args.whitening else None
    records, base = _load_manifest(cfg.manifest)
    source = build_source(cfg, base)
    threads = _effective_threads(cfg.threads)
    features = load_features(source, records, threads)
    ids, rows = [], []
    for rec in records:
        for feat in features[rec.scan_id]:
            dset = whitening.transform_set(feat.dset) if whitening else feat.dset
            rows.append(encode_normalized(model, dset, cfg.fisher.alpha).values)
            ids.append(feat.patch_id)
    outdir.mkdir(parents=True, exist_ok=True)
    write_matrix(np.vstack(rows), outdir / "fvs.dfb", source_id="fvs")
    (outdir / "fvs.ids.txt").write_text("\n".join(ids) + "\n", encoding="utf-8")
    _write_echo(cfg, outdir, encoded=len(ids), fv_dimension=int(rows[0].shape[0]))
    print(f"encoded {len(ids)} patches at dimension {rows[0].shape[0]}")
    return 0


def cmd_train(args) -> int:
    cfg = _common_config(args)
    outdir = _require_output(cfg)
    seed = _seed_of(cfg)
    records, base = _load_manifest(cfg.manifest)
    source = build_source(cfg, base)
    threads = _effective_threads(cfg.threads)
    features = load_features(source, records, threads)
    feats = [(rec, f) for rec in records for f in features[rec.scan_id] if f.foreground]
    if not feats:
        raise DataError("no foreground patches to train on")
    labels = [rec.species for rec, _ in feats]
    sets = [f.dset for _, f in feats]
    outdir.mkdir(parents=True, exist_ok=True)

    if cfg.method == "fv-svm":
        pooled = pool_descriptors(sets, cfg.em.sample_cap, seed)
        whitening = None
        if cfg.fisher.whiten:
            whitening = fit_whitening(pooled, cfg.fisher.whiten_dim)
            pooled = whitening.transform(pooled)
        model, trace = em_fit(pooled, EmConfig(
            k=args.k, max_iterations=cfg.em.max_iterations, tolerance=cfg.em.tolerance,
            seed=seed, variance_floor_fraction=cfg.em.variance_floor_fraction,
        ))
        save_gmm(model, outdir / "gmm.json", seed=seed, trace=trace)
        if whitening is not None:
            save_whitening(whitening, outdir / "whitening.json")
        enc = np.vstack([
            encode_normalized(model, whitening.transform_set(s) if whitening else s,
                              cfg.fisher.alpha).values
            for s in sets
        ])
        svm_model = train_svm_ovr(enc, labels, args.c, detrng.derive_seed(seed, 61, args.k))
        save_svm(svm_model, outdir / "svm.json", seed=seed)
        print(f"trained fv-svm bundle (K={args.k}, C={args.c:g}) on {len(sets)} patches")
    else:
        head = train_baseline_head(pooled_means(sets), labels, cfg.head)
        save_head(head, outdir / "head.json")
        print(f"trained baseline head on {len(sets)} patches")
    _write_echo(cfg, outdir, k=getattr(args, "k", None), c=getattr(args, "c", None))
    return 0


def cmd_predict(args) -> int:
    cfg = _common_config(args)
    outdir = _require_output(cfg)
    bundle = Path(args.bundle)
    records, base = _load_manifest(cfg.manifest)
    source = build_source(cfg, base)
    threads = _effective_threads(cfg.threads)
    features = load_features(source, records, threads)

    if (bundle / "svm.json").exists():
        model = load_gmm(bundle / "gmm.json")
        svm_model = load_svm(bundle / "svm.json")
        whitening = load_whitening(bundle / "whitening.json") if (bundle / "whitening.json").exists() else None

        def patch_scores(sets):
            enc = np.vstack([
                encode_normalized(model, whitening.transform_set(s) if whitening else s,
                                  cfg.fisher.alpha).values
                for s in sets
            ])
            return decision_matrix(svm_model, enc)
    elif (bundle / "head.json").exists():
        head = load_head(bundle / "head.json")

        def patch_scores(sets):
            return forward(head, pooled_means(sets))
    else:
        raise DataError(f"bundle {bundle} holds neither svm.json nor head.json")

    outdir.mkdir(parents=True, exist_ok=True)
    lines = ["scan_id,true,predicted," + ",".join(s.value for s in SPECIES_ORDER)]
    correct = 0
    for rec in records:
        sets = [f.dset for f in features[rec.scan_id]]
        scores = patch_scores(sets)
        predicted, combined = aggregate_scan(scores, cfg.aggregate)
        if predicted is rec.species:
            correct += 1
        rendered = ",".join("-inf" if not np.isfinite(v) else format(v, ".17g") for v in combined)
        lines.append(f"{rec.scan_id},{rec.species.value},{predicted.value},{rendered}")
    (outdir / "predictions.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _write_echo(cfg, outdir, scans=len(records))
    print(f"predicted {len(records)} scans, accuracy {correct / len(records):.3f}")
    return 0


def cmd_crossval(args) -> int:
    cfg = _common_config(args)
    outdir = _require_output(cfg)
    seed = _seed_of(cfg, default=None)  # --seed mandatory here
    records, base = _load_manifest(cfg.manifest)
    threads = _effective_threads(cfg.threads)
    report = run_experiment(records, cfg, seed=seed, threads=threads, manifest_dir=base)
    save_report(report, outdir)
    _write_echo(cfg, outdir, effective_seed=seed, threads=threads)
    print((outdir / "report.txt").read_text(encoding="utf-8"))
    return 0


def cmd_clusters(args) -> int:
    cfg = _common_config(args)
    outdir = _require_output(cfg)
    model = load_gmm(Path(args.bundle) / "gmm.json" if Path(args.bundle).is_dir() else args.bundle)
    records, base = _load_manifest(cfg.manifest)
    if cfg.source != "builtin":
        raise ConfigError("clusters requires the builtin source (montages need patch pixels)")
    source = BuiltinSource(base, cfg.patch_spec, cfg.bank)
    threads = _effective_threads(cfg.threads)
    features = load_features(source, records, threads)
    whitening = None
    wpath = Path(args.bundle) / "whitening.json" if Path(args.bundle).is_dir() else None
    if wpath is not None and wpath.exists():
        whitening = load_whitening(wpath)

    items = []
    pixels_by_patch = {}
    items_by_species: dict[str, list] = {}
    for rec in records:
        for feat in features[rec.scan_id]:
            dset = whitening.transform_set(feat.dset) if whitening else feat.dset
            items.append((feat.patch_id, dset))
            items_by_species.setdefault(rec.species.value, []).append((feat.patch_id, dset))
    for rec in records:
        for patch in source.pixel_patches_for(rec):
            pixels_by_patch[patch.id] = patch.pixels

    if args.components:
        component_ids = [int(v) for v in args.components.split(",")]
        bad = [c for c in component_ids if not 0 <= c < model.k]
        if bad:
            raise ConfigError(f"component ids {bad} out of range for K={model.k}")
    else:
        rng = np.random.default_rng(detrng.derive_seed(_seed_of(cfg), 83))
        count = min(args.n_components, model.k)
        component_ids = sorted(int(v) for v in rng.choice(model.k, size=count, replace=False))

    rows = cols = int(np.ceil(np.sqrt(args.top)))
    outdir.mkdir(parents=True, exist_ok=True)
    for comp in component_ids:
        ids, short = top_patches(model, items, comp, args.top)
        cells = [pixels_by_patch.get(pid) for pid in ids]
        cells += [None] * (rows * cols - len(cells))
        export_montage(cells, rows, cols, outdir / f"cluster_{comp:03d}.png", bit_depth=16)
        if short:
            print(f"component {comp}: only {len(ids)} patches available")
    save_attribute_template(model.k, outdir / "attribute_template.json")
    codes, matrix = species_similarity(model, items_by_species)
    write_similarity_csv(codes, matrix, outdir / "species_similarity.csv")
    _write_echo(cfg, outdir, components=component_ids)
    print(f"exported {len(component_ids)} cluster montages to {outdir}")
    return 0


# ---------------------------------------------------------------- wiring


def build_parser() -> CliParser:
    parser = CliParser(prog="mycobow", description=__doc__)
    parser.add_argument("--version", action="version", version=f"mycobow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, need_out=True):
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--manifest", help="dataset manifest")
        if need_out:
            p.add_argument("--out", dest="output", help="output directory")
        p.add_argument("--seed", type=int, help="master random seed")
        p.add_argument("--threads", type=int, help="worker threads (0 = all cores)")
        p.add_argument("--dfb-dir", help="directory of pre-extracted .dfb descriptor files")
        p.add_argument("--patch-index", help="patches.tsv with foreground flags (dfb source)")

    p = sub.add_parser("validate-manifest", help="parse and summarize a manifest")
    add_common(p, need_out=False)
    p.add_argument("--out", dest="output", help="optional output directory for the config echo")
    p.set_defaults(func=cmd_validate_manifest)

    p = sub.add_parser("extract-patches", help="export the patch grid as PNG files")
    add_common(p)
    p.add_argument("--drop-background", action="store_true",
                   help="skip patches below the foreground threshold (training exports)")
    p.add_argument("--bit-depth", type=int, choices=(8, 16), default=None,
                   help="override the exported PNG depth (default: preserve the source)")
    p.set_defaults(func=cmd_extract_patches)

    p = sub.add_parser("describe", help="compute built-in filter-bank descriptors (.dfb)")
    add_common(p)
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("fit-gmm", help="fit the visual dictionary on a manifest's descriptors")
    add_common(p)
    p.add_argument("--k", type=int, required=True, help="mixture components")
    p.set_defaults(func=cmd_fit_gmm)

    p = sub.add_parser("encode", help="Fisher-encode every patch under a fitted dictionary")
    add_common(p)
    p.add_argument("--gmm", required=True, help="gmm.json from fit-gmm")
    p.add_argument("--whitening", help="optional whitening.json")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("train", help="train a model bundle on the full manifest")
    add_common(p)
    p.add_argument("--method", choices=("fv-svm", "baseline-head"))
    p.add_argument("--k", type=int, default=32, help="mixture components (fv-svm)")
    p.add_argument("--c", type=float, default=1.0, help="SVM regularization C (fv-svm)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score a manifest with a trained bundle")
    add_common(p)
    p.add_argument("--bundle", required=True, help="model bundle directory from train")
    p.add_argument("--aggregate", choices=("sum", "vote"))
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("crossval", help="run the full preparation-split protocol")
    add_common(p)
    p.add_argument("--method", choices=("fv-svm", "baseline-head"))
    p.add_argument("--aggregate", choices=("sum", "vote"))
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("clusters", help="export per-component montages and the attribute template")
    add_common(p)
    p.add_argument("--bundle", required=True, help="model bundle directory (or gmm.json path)")
    p.add_argument("--components", help="explicit comma-separated component ids")
    p.add_argument("--n-components", type=int, default=6, help="seeded-random component count")
    p.add_argument("--top", type=int, default=9, help="patches per montage")
    p.set_defaults(func=cmd_clusters)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except MycobowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
