from pathlib import Path

import cv2
import numpy as np
import pytest


@pytest.fixture(scope="session")
def patch_dir(tmp_path_factory) -> Path:
    """Three deterministic 128px 16-bit grayscale patches, named like the
    primary pipeline's exports (<scan_id>__r#####_c#####.png)."""
    root = Path(tmp_path_factory.mktemp("patches"))
    rng = np.random.default_rng(0)
    for i in range(3):
        img = (rng.random((128, 128)) * 65535).astype(np.uint16)
        cv2.imwrite(str(root / f"CA_p1_i0{i}__r00000_c{i:05d}.png"), img)
    return root
