from pathlib import Path

import pytest

from mycobow.synthetic import SyntheticSpec, generate_synthetic_dataset


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """40 small synthetic scans (4 classes x 5 scans x 2 preparations, 256px)."""
    root = Path(tmp_path_factory.mktemp("tinydata"))
    spec = SyntheticSpec(classes=4, scans_per_class_per_prep=5, image_size=256, seed=0)
    manifest, records = generate_synthetic_dataset(root, spec)
    return root, manifest, records
