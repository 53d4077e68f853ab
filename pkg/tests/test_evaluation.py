import math

import numpy as np
import pytest

from mycobow.data import SPECIES_ORDER, ScanRecord, SpeciesLabel
from mycobow.errors import DataError
from mycobow.evaluation import (
    accuracy,
    aggregate_scan,
    confusion_matrix,
    format_pct,
    mean_std,
    outer_folds,
    render_report_table,
    report_document,
    run_experiment,
    save_report,
)
from mycobow import jsonfmt

from pipeline_helpers import tiny_run_config

CA, CG, MF = SpeciesLabel.CA, SpeciesLabel.CG, SpeciesLabel.MF


def records_for(species_preps):
    out = []
    for i, (code, prep) in enumerate(species_preps):
        label = SpeciesLabel.parse(code)
        out.append(ScanRecord(f"{code}_p{prep}_{i}", label, prep, i, f"x{i}.png"))
    return out


def full_manifest_records():
    out = []
    for s in SPECIES_ORDER:
        for prep in (1, 2):
            for i in range(10):
                out.append(ScanRecord(f"{s.value}_p{prep}_i{i}", s, prep, i, f"{s.value}_{prep}_{i}.png"))
    return out


def test_outer_folds_partition_and_swap():
    records = full_manifest_records()
    fold1, fold2 = outer_folds(records)
    assert len(fold1.train_records) == 90 and len(fold1.test_records) == 90
    assert {r.preparation for r in fold1.train_records} == {1}
    assert {r.preparation for r in fold1.test_records} == {2}
    assert {r.preparation for r in fold2.train_records} == {2}
    union = set(fold1.train_records) | set(fold1.test_records)
    assert union == set(records)
    assert not set(fold1.train_records) & set(fold1.test_records)


def test_outer_folds_missing_species_named():
    records = [r for r in full_manifest_records() if not (r.species is MF and r.preparation == 2)]
    with pytest.raises(DataError, match="MF"):
        outer_folds(records)


def test_aggregate_single_patch_identity():
    scores = np.zeros((1, 9))
    scores[0, 4] = 2.0
    predicted, combined = aggregate_scan(scores)
    assert predicted is SPECIES_ORDER[4]
    assert np.array_equal(combined, scores[0])


def test_aggregate_sum_arithmetic():
    a = np.zeros(9); a[0] = 1.0
    b = np.zeros(9); b[1] = 2.0
    predicted, combined = aggregate_scan(np.vstack([a, b]))
    assert predicted is CG  # index 1 wins with 2 > 1
    assert combined[0] == 1.0 and combined[1] == 2.0


def test_aggregate_all_tie_goes_to_lowest_index():
    scores = np.full((3, 9), 0.25)
    predicted, _ = aggregate_scan(scores)
    assert predicted is CA


def test_aggregate_vote_mode():
    a = np.zeros(9); a[2] = 5.0
    b = np.zeros(9); b[2] = 5.0
    c = np.zeros(9); c[1] = 1000.0
    predicted, combined = aggregate_scan(np.vstack([a, b, c]), mode="vote")
    assert predicted is SPECIES_ORDER[2]  # two votes beat one huge score
    assert combined[2] == 2.0 and combined[1] == 1.0


def test_aggregate_empty_rejected():
    with pytest.raises(DataError):
        aggregate_scan(np.zeros((0, 9)))


def test_accuracy_examples():
    assert accuracy([CA, CG], [CA, CG]) == 1.0
    assert accuracy([CA, CA], [CG, CG]) == 0.0
    assert accuracy([CA, CA, CG, CG], [CA, CA, CG, MF]) == 0.75
    with pytest.raises(DataError):
        accuracy([], [])
    with pytest.raises(DataError):
        accuracy([CA], [CA, CG])


def test_mean_std_recompute():
    vals = [0.9781, 0.9344]
    mean, std = mean_std(vals)
    assert mean == (vals[0] + vals[1]) / 2
    assert std == math.sqrt(((vals[0] - mean) ** 2 + (vals[1] - mean) ** 2) / 2)


def test_format_pct_one_decimal():
    assert format_pct(0.939, 0.039) == "93.9 ± 3.9"
    assert format_pct(0.824, 0.002) == "82.4 ± 0.2"


def test_confusion_matrix_counts():
    mat = confusion_matrix([CA, CG, CG], [CA, CA, CG])
    assert mat[CA.index, CA.index] == 1
    assert mat[CA.index, CG.index] == 1
    assert mat[CG.index, CG.index] == 1
    assert mat.sum() == 3


@pytest.fixture(scope="module")
def tiny_report(tiny_dataset, tmp_path_factory):
    root, manifest, records = tiny_dataset
    out = tmp_path_factory.mktemp("evalout")
    cfg = tiny_run_config(manifest, out, seed=7)
    report = run_experiment(records, cfg, seed=7, threads=2, manifest_dir=root)
    return report, out


def test_run_experiment_protocol_shape(tiny_report):
    report, _ = tiny_report
    assert [f.fold_id for f in report.folds] == [1, 2]
    assert report.folds[0].train_preparation == 1
    assert report.folds[0].test_preparation == 2
    assert report.folds[1].train_preparation == 2
    for fold in report.folds:
        assert 0.0 <= fold.patch_accuracy <= 1.0
        assert 0.0 <= fold.scan_accuracy <= 1.0
        assert fold.selected_k == 4 and fold.selected_c == 1.0
        assert len(fold.internal_folds) == 5
        assert fold.confusion_scan.sum() == 20


def test_report_mean_std_consistency(tiny_report):
    report, _ = tiny_report
    mean, std = mean_std([f.patch_accuracy for f in report.folds])
    assert report.patch_mean == mean and report.patch_std == std
    mean, std = mean_std([f.scan_accuracy for f in report.folds])
    assert report.scan_mean == mean and report.scan_std == std


def test_report_render_and_persist(tiny_report, tmp_path):
    report, _ = tiny_report
    table = render_report_table(report)
    assert "Patch-based" in table and "Scan-based" in table
    assert "±" in table
    save_report(report, tmp_path)
    assert (tmp_path / "report.json").exists()
    assert (tmp_path / "report.txt").exists()
    assert (tmp_path / "timing.json").exists()
    assert (tmp_path / "confusion_scan_fold1.csv").exists()
    doc = jsonfmt.load(tmp_path / "report.json")
    assert "timing" not in doc
    assert doc["scan_accuracy"]["per_fold"] == [f.scan_accuracy for f in report.folds]
    # csv shape: header + 9 rows
    lines = (tmp_path / "confusion_scan_fold1.csv").read_text().strip().splitlines()
    assert len(lines) == 10


def test_no_internal_leakage_recorded(tiny_report):
    report, _ = tiny_report
    for fold in report.folds:
        for internal in fold.internal_folds:
            train = set(internal["train_scans"])
            val = set(internal["val_scans"])
            assert not train & val
            assert len(train | val) == 20  # all training-side scans covered


def test_same_seed_reproduces_report(tiny_dataset, tmp_path):
    root, manifest, records = tiny_dataset
    cfg = tiny_run_config(manifest, tmp_path, seed=21)
    r1 = run_experiment(records, cfg, seed=21, threads=1, manifest_dir=root)
    r2 = run_experiment(records, cfg, seed=21, threads=3, manifest_dir=root)
    assert jsonfmt.dumps(report_document(r1)) == jsonfmt.dumps(report_document(r2))
