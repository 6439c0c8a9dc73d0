import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sagraph.imaging import (
    PatchGrid,
    PatchSet,
    PerturbationMode,
    load_image,
    make_baseline,
    perturb,
    save_image,
    save_mask,
    upsample_mask,
)

from oracles import bilinear_upsample_naive, gaussian_blur_naive


@pytest.mark.parametrize("h,w", [(224, 224), (225, 230), (28, 28), (50, 43)])
def test_grid_tiles_exactly(h, w):
    grid = PatchGrid(7, h, w)
    covered = np.zeros((h, w), dtype=int)
    for i in range(grid.num_patches):
        rows, cols = grid.region(i)
        covered[rows, cols] += 1
    assert covered.min() == covered.max() == 1  # disjoint and exhaustive


def test_grid_region_layout():
    grid = PatchGrid(7, 224, 224)
    rows, cols = grid.region(0)
    assert (rows.start, rows.stop, cols.start, cols.stop) == (0, 32, 0, 32)
    rows, cols = grid.region(8)  # row 1, col 1
    assert (rows.start, cols.start) == (32, 32)


def test_grid_rejects_tiny_images():
    with pytest.raises(ValueError):
        PatchGrid(7, 6, 224)


def test_patchset_basics():
    grid = PatchGrid(7, 28, 28)
    ps = PatchSet.from_indices(grid, [3, 7, 11])
    assert len(ps) == 3
    assert ps.indices() == (3, 7, 11)
    assert 7 in ps and 5 not in ps
    assert ps.without_patch(7).indices() == (3, 11)
    assert ps.with_patch(0).indices() == (0, 3, 7, 11)
    assert PatchSet.from_indices(grid, [7, 3, 11]) == ps
    with pytest.raises(ValueError):
        PatchSet.from_indices(grid, [49])


def test_full_set_mask_is_all_ones():
    grid = PatchGrid(7, 224, 224)
    mask = upsample_mask(PatchSet.full(grid), 224, 224)
    assert np.allclose(mask, 1.0)


def test_empty_set_mask_is_all_zeros():
    grid = PatchGrid(7, 224, 224)
    mask = upsample_mask(PatchSet.empty(grid), 224, 224)
    assert np.allclose(mask, 0.0)


def test_single_patch_mask_matches_bilinear_oracle():
    grid = PatchGrid(7, 224, 224)
    mask = upsample_mask(PatchSet.from_indices(grid, [0]), 224, 224)
    reference = bilinear_upsample_naive(
        [[1.0 if (gr, gc) == (0, 0) else 0.0 for gc in range(7)] for gr in range(7)],
        224,
        224,
    )
    rng = np.random.default_rng(7)
    for _ in range(100):
        y, x = rng.integers(0, 224), rng.integers(0, 224)
        assert abs(mask[y, x] - reference[y][x]) < 1e-5


def test_random_mask_matches_bilinear_oracle_non_divisible():
    grid = PatchGrid(7, 90, 101)
    rng = np.random.default_rng(3)
    ps = PatchSet.from_indices(grid, rng.choice(49, size=12, replace=False))
    mask = upsample_mask(ps, 90, 101)
    reference = bilinear_upsample_naive(ps.to_grid_array().tolist(), 90, 101)
    assert np.max(np.abs(mask - np.asarray(reference))) < 1e-12


def test_mask_dimension_mismatch_rejected():
    grid = PatchGrid(7, 224, 224)
    with pytest.raises(ValueError):
        upsample_mask(PatchSet.full(grid), 100, 100)


def test_mask_bounded_by_grid_values():
    grid = PatchGrid(7, 56, 56)
    rng = np.random.default_rng(5)
    for _ in range(10):
        ps = PatchSet(grid, int(rng.integers(1, 2**49 - 1)))
        mask = upsample_mask(ps, 56, 56)
        assert mask.min() >= 0.0 and mask.max() <= 1.0


@settings(max_examples=40, deadline=None)
@given(
    bits=st.integers(min_value=0, max_value=2**49 - 1),
    extra=st.integers(min_value=0, max_value=2**49 - 1),
)
def test_mask_monotone_in_coverage(bits, extra):
    grid = PatchGrid(7, 28, 28)
    small = PatchSet(grid, bits)
    large = PatchSet(grid, bits | extra)
    m_small = upsample_mask(small, 28, 28)
    m_large = upsample_mask(large, 28, 28)
    assert np.all(m_small <= m_large + 1e-12)


def test_black_baseline_is_zero():
    image = np.random.default_rng(0).random((40, 40, 3))
    assert not make_baseline(image, PerturbationMode.black()).any()


def test_blur_of_constant_is_constant():
    image = np.full((64, 64, 3), 0.42)
    blurred = make_baseline(image, PerturbationMode.blur(10.0))
    assert np.max(np.abs(blurred - 0.42)) < 1e-6


def test_blur_impulse_matches_dense_convolution_oracle():
    image = np.zeros((25, 25, 3))
    image[12, 12, :] = 1.0
    blurred = make_baseline(image, PerturbationMode.blur(2.0))
    reference = gaussian_blur_naive(image[:, :, 0].tolist(), 2.0)
    assert np.max(np.abs(blurred[:, :, 0] - np.asarray(reference))) < 1e-5


def test_perturb_full_set_returns_image():
    rng = np.random.default_rng(1)
    image = rng.random((56, 56, 3))
    grid = PatchGrid(7, 56, 56)
    for mode in (PerturbationMode.black(), PerturbationMode.blur(5.0)):
        out = perturb(image, PatchSet.full(grid), mode)
        assert np.max(np.abs(out - image)) < 1e-6


def test_perturb_empty_set_black_is_zero():
    image = np.random.default_rng(2).random((56, 56, 3))
    grid = PatchGrid(7, 56, 56)
    out = perturb(image, PatchSet.empty(grid), PerturbationMode.black())
    assert not out.any()


def test_perturb_half_set_on_ones_equals_mask():
    grid = PatchGrid(7, 56, 56)
    image = np.ones((56, 56, 3))
    half = PatchSet.from_indices(grid, range(0, 49, 2))
    out = perturb(image, half, PerturbationMode.black())
    mask = upsample_mask(half, 56, 56)
    assert np.max(np.abs(out - mask[:, :, None])) == 0.0


def test_perturb_dimension_mismatch_rejected():
    grid = PatchGrid(7, 56, 56)
    image = np.ones((28, 28, 3))
    with pytest.raises(ValueError):
        perturb(image, PatchSet.full(grid), PerturbationMode.black())


def test_mask_is_one_at_patch_center_region(grid28):
    # included patch centers hit mask 1.0 at the clamped corner patch
    mask = upsample_mask(PatchSet.from_indices(grid28, [0]), 28, 28)
    assert mask[0, 0] == 1.0


def test_mask_exact_one_at_interior_patch_center():
    # with odd patch size the patch center is a pixel center: mask is 1 there
    grid = PatchGrid(7, 49, 49)
    mask = upsample_mask(PatchSet.from_indices(grid, [24]), 49, 49)  # row 3, col 3
    assert mask[3 * 7 + 3, 3 * 7 + 3] == 1.0


def test_image_roundtrip(tmp_path):
    rng = np.random.default_rng(4)
    quantized = np.round(rng.random((30, 31, 3)) * 255) / 255.0
    path = tmp_path / "img.png"
    save_image(quantized, path)
    loaded = load_image(path)
    assert np.array_equal(loaded, quantized)


def test_save_mask(tmp_path):
    grid = PatchGrid(7, 28, 28)
    mask = upsample_mask(PatchSet.from_indices(grid, [24]), 28, 28)
    save_mask(mask, tmp_path / "mask.png")
    assert (tmp_path / "mask.png").stat().st_size > 0


def test_perturbation_mode_validation():
    with pytest.raises(ValueError):
        PerturbationMode("blur", -1.0)
    with pytest.raises(ValueError):
        PerturbationMode("speckle")
    assert PerturbationMode.parse("blur:2.5").sigma == 2.5
    assert str(PerturbationMode.black()) == "black"
