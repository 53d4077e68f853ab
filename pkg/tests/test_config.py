import pytest

from mycobow.config import (
    EmOptions,
    FisherOptions,
    Grids,
    RunConfig,
    load_run_config,
    resolved_config_dict,
)
from mycobow.errors import ConfigError
from mycobow import jsonfmt


def test_defaults():
    cfg = load_run_config(None, manifest="m.txt")
    assert cfg.method == "fv-svm"
    assert cfg.source == "builtin"
    assert cfg.grids.c_values == (0.01, 0.1, 1.0, 10.0, 100.0)
    assert cfg.grids.k_values == (16, 32, 64)
    assert cfg.patch_spec.patch_size == 512
    assert cfg.patch_spec.stride == 512
    assert cfg.patch_spec.foreground_threshold == 0.02
    assert cfg.fisher.alpha == 0.5
    assert not cfg.fisher.whiten
    assert cfg.em.variance_floor_fraction == 1e-4


def test_yaml_file_and_flag_precedence(tmp_path):
    cfg_file = tmp_path / "run.yaml"
    cfg_file.write_text(
        """
manifest: from_file.txt
seed: 3
method: baseline-head
patching: {patch_size: 128, stride: 64}
grids: {c_values: [1.0], k_values: [8]}
fisher: {alpha: 0.75, whiten: true, whiten_dim: 16}
descriptors:
  source: builtin
  bank: {seed: 5, cell: 16, dim: 32}
""",
        encoding="utf-8",
    )
    cfg = load_run_config(cfg_file)
    assert cfg.manifest == "from_file.txt"
    assert cfg.seed == 3
    assert cfg.method == "baseline-head"
    assert cfg.patch_spec.patch_size == 128
    assert cfg.bank.dim == 32
    assert cfg.fisher.whiten and cfg.fisher.whiten_dim == 16
    # flags win over the file
    override = load_run_config(cfg_file, manifest="flag.txt", seed=9, method="fv-svm")
    assert override.manifest == "flag.txt"
    assert override.seed == 9
    assert override.method == "fv-svm"
    # None overrides are ignored
    keep = load_run_config(cfg_file, seed=None)
    assert keep.seed == 3


def test_unknown_keys_rejected(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("mainfest: typo.txt\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="mainfest"):
        load_run_config(bad)
    bad.write_text("em: {max_iters: 3}\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="max_iters"):
        load_run_config(bad)


def test_validation_errors():
    with pytest.raises(ConfigError, match="method"):
        RunConfig(manifest="m", method="nope")
    with pytest.raises(ConfigError, match="source"):
        RunConfig(manifest="m", source="ftp")
    with pytest.raises(ConfigError, match="dfb_dir"):
        RunConfig(manifest="m", source="dfb-directory")
    with pytest.raises(ConfigError, match="alpha"):
        FisherOptions(alpha=2.0)
    with pytest.raises(ConfigError, match="non-empty"):
        Grids(c_values=())
    with pytest.raises(ConfigError, match="sample_cap"):
        EmOptions(sample_cap=0)


def test_missing_config_file():
    with pytest.raises(ConfigError, match="not found"):
        load_run_config("/does/not/exist.yaml")


def test_resolved_echo_serializes(tmp_path):
    cfg = load_run_config(None, manifest="m.txt", output="out", seed=4)
    doc = resolved_config_dict(cfg, "0.1.0", {"effective_seed": 4})
    assert doc["seed"] == 4
    assert doc["tool_version"] == "0.1.0"
    assert doc["effective_seed"] == 4
    path = tmp_path / "echo.json"
    jsonfmt.dump(doc, path)
    assert jsonfmt.load(path)["grids"]["k_values"] == [16, 32, 64]
