import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mycobow.dfb import write_descriptors
from mycobow.errors import DataError
from mycobow.patches import (
    FilterBank,
    Patch,
    PatchSpec,
    builtin_descriptors,
    extract_patch_grid,
    grid_shape,
    is_foreground,
    patch_coords,
    patch_id,
    scan_id_of_patch,
)


def make_patch(pixels, scan_id="scan", row=0, col=0):
    if pixels.ndim == 2:
        pixels = pixels[:, :, None]
    return Patch(scan_id=scan_id, row=row, col=col, pixels=pixels.astype(np.float32))


def test_difas_scan_geometry_gives_77_patches():
    assert grid_shape(3600, 5760, PatchSpec(512, 512)) == (7, 11)


def test_single_patch_when_image_equals_patch():
    img = np.zeros((64, 64, 1), dtype=np.float32)
    patches = extract_patch_grid(img, PatchSpec(64, 64), scan_id="s")
    assert len(patches) == 1
    assert (patches[0].row, patches[0].col) == (0, 0)


def test_half_stride_gives_nine_patches():
    img = np.zeros((128, 128, 1), dtype=np.float32)
    patches = extract_patch_grid(img, PatchSpec(64, 32), scan_id="s")
    assert len(patches) == 9


def test_too_small_image_rejected():
    with pytest.raises(DataError, match="smaller"):
        extract_patch_grid(np.zeros((63, 128, 1), dtype=np.float32), PatchSpec(64, 64))


@settings(max_examples=60, deadline=None)
@given(
    st.integers(32, 40),  # patch size
    st.integers(1, 50),  # stride
    st.integers(0, 90),  # extra height
    st.integers(0, 90),  # extra width
)
def test_patch_count_formula_and_positions(p, stride, eh, ew):
    h, w = p + eh, p + ew
    spec = PatchSpec(p, stride)
    img = np.zeros((h, w, 1), dtype=np.float32)
    patches = extract_patch_grid(img, spec, scan_id="s")
    rows = (h - p) // stride + 1
    cols = (w - p) // stride + 1
    assert len(patches) == rows * cols
    for patch in patches:
        assert patch.row % stride == 0 and patch.col % stride == 0
        assert patch.row + p <= h and patch.col + p <= w
    # row-major order
    coords = [(q.row, q.col) for q in patches]
    assert coords == sorted(coords)


def test_spec_invariants():
    with pytest.raises(DataError):
        PatchSpec(patch_size=16)
    with pytest.raises(DataError):
        PatchSpec(stride=0)


def test_foreground_constant_patch_false():
    patch = make_patch(np.full((64, 64), 0.5))
    assert not is_foreground(patch, 0.01)
    assert is_foreground(patch, 0.0)  # std >= 0 always


def test_foreground_half_black_half_white():
    pixels = np.zeros((64, 64))
    pixels[:, 32:] = 1.0
    patch = make_patch(pixels)
    assert is_foreground(patch, 0.4)  # std is exactly 0.5
    assert np.isclose(np.std(pixels), 0.5)


def test_builtin_descriptor_shape_and_grid():
    rng = np.random.default_rng(0)
    patch = make_patch(rng.random((64, 64)))
    bank = FilterBank(seed=3, cell=16, dim=64)
    dset = builtin_descriptors(patch, bank)
    assert dset.descriptors.shape == (16, 64)
    assert dset.grid == (4, 4)
    assert dset.source_id == patch.id


def test_builtin_descriptors_constant_patch_all_zero():
    patch = make_patch(np.full((64, 64), 0.7))
    dset = builtin_descriptors(patch, FilterBank(seed=1, cell=16, dim=8))
    assert np.all(dset.descriptors == 0.0)


def test_builtin_descriptors_deterministic_bytes():
    rng = np.random.default_rng(5)
    pixels = rng.random((64, 64))
    bank = FilterBank(seed=11, cell=16, dim=24)
    a, b = io.BytesIO(), io.BytesIO()
    write_descriptors(builtin_descriptors(make_patch(pixels), bank), a)
    write_descriptors(builtin_descriptors(make_patch(pixels.copy()), bank), b)
    assert a.getvalue() == b.getvalue()


def test_builtin_descriptors_divisibility_error():
    patch = make_patch(np.zeros((64, 64)))
    with pytest.raises(DataError, match="divisible"):
        builtin_descriptors(patch, FilterBank(seed=1, cell=24, dim=8))


def test_projection_determined_by_seed_cell_dim():
    a = FilterBank(seed=9, cell=8, dim=4).projection
    b = FilterBank(seed=9, cell=8, dim=4).projection
    c = FilterBank(seed=10, cell=8, dim=4).projection
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert a.shape == (4, 64)


def test_patch_id_roundtrip():
    pid = patch_id("CA_p1_i00", 512, 1024)
    assert scan_id_of_patch(pid) == "CA_p1_i00"
    assert patch_coords(pid) == (512, 1024)
