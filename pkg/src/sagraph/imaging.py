"""Patch grid geometry, bilinear mask generation and image perturbation.

Images are numpy arrays of shape (H, W, 3) with float intensities in [0, 1].
Masks are (H, W) float arrays in [0, 1]. The r x r patch grid tiles the image
with non-overlapping integer pixel regions; the last row/column of patches
absorbs any remainder so the patch count is always exactly r^2.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage
from scipy.ndimage import gaussian_filter

BLUR_SIGMA_DEFAULT = 10.0
BLUR_TRUNCATE = 4.0


@dataclass(frozen=True)
class PerturbationMode:
    """How excluded pixels are filled: flat black or a Gaussian-blurred copy."""

    kind: str  # "black" or "blur"
    sigma: float = BLUR_SIGMA_DEFAULT

    def __post_init__(self):
        if self.kind not in ("black", "blur"):
            raise ValueError(f"unknown perturbation kind: {self.kind!r}")
        if self.kind == "blur" and not self.sigma > 0:
            raise ValueError("blur sigma must be > 0")

    @staticmethod
    def black() -> "PerturbationMode":
        return PerturbationMode("black")

    @staticmethod
    def blur(sigma: float = BLUR_SIGMA_DEFAULT) -> "PerturbationMode":
        return PerturbationMode("blur", sigma)

    def cache_key(self) -> tuple:
        if self.kind == "black":
            return ("black",)
        return ("blur", self.sigma)

    def __str__(self) -> str:
        return "black" if self.kind == "black" else f"blur:{self.sigma:g}"

    @staticmethod
    def parse(text: str) -> "PerturbationMode":
        if text == "black":
            return PerturbationMode.black()
        if text == "blur":
            return PerturbationMode.blur()
        if text.startswith("blur:"):
            return PerturbationMode.blur(float(text.split(":", 1)[1]))
        raise ValueError(f"cannot parse perturbation mode {text!r}")


@dataclass(frozen=True)
class PatchGrid:
    """r x r tiling of an image; patch i covers grid cell (i // r, i % r)."""

    r: int
    height: int
    width: int

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("grid side r must be >= 1")
        if self.height < self.r or self.width < self.r:
            raise ValueError(
                f"image {self.height}x{self.width} too small for r={self.r}"
            )

    @property
    def num_patches(self) -> int:
        return self.r * self.r

    def row_bounds(self) -> np.ndarray:
        """r+1 row boundaries; the last row absorbs the remainder pixels."""
        step = self.height // self.r
        bounds = np.arange(self.r + 1, dtype=np.int64) * step
        bounds[-1] = self.height
        return bounds

    def col_bounds(self) -> np.ndarray:
        step = self.width // self.r
        bounds = np.arange(self.r + 1, dtype=np.int64) * step
        bounds[-1] = self.width
        return bounds

    def region(self, index: int) -> tuple[slice, slice]:
        """Pixel region (row slice, col slice) of patch `index`."""
        if not 0 <= index < self.num_patches:
            raise ValueError(f"patch index {index} out of range for r={self.r}")
        rb, cb = self.row_bounds(), self.col_bounds()
        gr, gc = divmod(index, self.r)
        return slice(int(rb[gr]), int(rb[gr + 1])), slice(int(cb[gc]), int(cb[gc + 1]))


@dataclass(frozen=True, order=False)
class PatchSet:
    """A subset of the grid's r^2 patches, stored as a bit vector in an int."""

    grid: PatchGrid
    bits: int = 0

    def __post_init__(self):
        object.__setattr__(self, "bits", int(self.bits))
        if self.bits < 0 or self.bits >> self.grid.num_patches:
            raise ValueError("bits outside the grid's patch range")

    @staticmethod
    def empty(grid: PatchGrid) -> "PatchSet":
        return PatchSet(grid, 0)

    @staticmethod
    def full(grid: PatchGrid) -> "PatchSet":
        return PatchSet(grid, (1 << grid.num_patches) - 1)

    @staticmethod
    def from_indices(grid: PatchGrid, indices) -> "PatchSet":
        bits = 0
        for i in indices:
            i = int(i)
            if not 0 <= i < grid.num_patches:
                raise ValueError(f"patch index {i} out of range")
            bits |= 1 << i
        return PatchSet(grid, bits)

    def indices(self) -> tuple[int, ...]:
        """Sorted patch indices; also the canonical lexicographic sort key."""
        cached = self.__dict__.get("_indices")
        if cached is None:
            cached = tuple(
                i for i in range(self.grid.num_patches) if self.bits >> i & 1
            )
            object.__setattr__(self, "_indices", cached)
        return cached

    def __len__(self) -> int:
        return self.bits.bit_count()

    def __contains__(self, index: int) -> bool:
        return bool(self.bits >> index & 1)

    def with_patch(self, index: int) -> "PatchSet":
        return PatchSet(self.grid, self.bits | (1 << index))

    def without_patch(self, index: int) -> "PatchSet":
        return PatchSet(self.grid, self.bits & ~(1 << index))

    def intersection_size(self, other: "PatchSet") -> int:
        return (self.bits & other.bits).bit_count()

    def issubset(self, other: "PatchSet") -> bool:
        return self.bits & ~other.bits == 0

    def to_grid_array(self) -> np.ndarray:
        """(r, r) float array, 1.0 where the patch is included."""
        n = self.grid.num_patches
        raw = self.bits.to_bytes((n + 7) // 8, "little")
        flat = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")
        return flat[:n].astype(np.float64).reshape(self.grid.r, self.grid.r)


@functools.lru_cache(maxsize=64)
def _axis_weights(n_grid: int, n_pixels: int) -> np.ndarray:
    """(n_pixels, n_grid) bilinear weights, grid values anchored at patch
    centers under a uniform scale (align-corners=false), edges clamped."""
    u = (np.arange(n_pixels, dtype=np.float64) + 0.5) * n_grid / n_pixels - 0.5
    u = np.clip(u, 0.0, n_grid - 1.0)
    i0 = np.minimum(u.astype(np.int64), n_grid - 2) if n_grid > 1 else np.zeros(
        n_pixels, dtype=np.int64
    )
    w = np.zeros((n_pixels, n_grid), dtype=np.float64)
    if n_grid == 1:
        w[:, 0] = 1.0
        return w
    t = u - i0
    rows = np.arange(n_pixels)
    w[rows, i0] = 1.0 - t
    w[rows, i0 + 1] = t
    w.setflags(write=False)
    return w


def upsample_mask(patch_set: PatchSet, height: int, width: int) -> np.ndarray:
    """Bilinear upsampling of the set's binary r x r grid to (height, width)."""
    grid = patch_set.grid
    if height != grid.height or width != grid.width:
        raise ValueError(
            f"requested {height}x{width} does not match grid image "
            f"{grid.height}x{grid.width}"
        )
    wy = _axis_weights(grid.r, height)
    wx = _axis_weights(grid.r, width)
    return wy @ patch_set.to_grid_array() @ wx.T


def validate_image(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {image.shape}")
    if image.min() < 0.0 or image.max() > 1.0:
        raise ValueError("image intensities must lie in [0, 1]")
    return image


def make_baseline(image: np.ndarray, mode: PerturbationMode) -> np.ndarray:
    """Substitute content: zeros, or a heavy per-channel Gaussian blur."""
    image = validate_image(image)
    if mode.kind == "black":
        return np.zeros_like(image)
    blurred = np.empty_like(image)
    for c in range(3):
        blurred[:, :, c] = gaussian_filter(
            image[:, :, c], sigma=mode.sigma, mode="reflect", truncate=BLUR_TRUNCATE
        )
    return blurred


def perturb(
    image: np.ndarray,
    patch_set: PatchSet,
    mode: PerturbationMode,
    baseline: np.ndarray | None = None,
) -> np.ndarray:
    """mask * image + (1 - mask) * baseline, with the set's bilinear mask.

    `baseline` may be passed to avoid recomputing the blur for every set.
    """
    image = validate_image(image)
    h, w = image.shape[:2]
    if (patch_set.grid.height, patch_set.grid.width) != (h, w):
        raise ValueError("patch set grid does not match image dimensions")
    if baseline is None:
        baseline = make_baseline(image, mode)
    mask = upsample_mask(patch_set, h, w)[:, :, None]
    out = mask * image + (1.0 - mask) * baseline
    return np.clip(out, 0.0, 1.0)


def load_image(path) -> np.ndarray:
    """8-bit RGB file -> float image via value / 255."""
    with PILImage.open(path) as img:
        rgb = img.convert("RGB")
        return np.asarray(rgb, dtype=np.float64) / 255.0


def save_image(image: np.ndarray, path) -> None:
    """Float image -> 8-bit RGB PNG (lossless)."""
    image = validate_image(image)
    data = np.round(image * 255.0).astype(np.uint8)
    PILImage.fromarray(data, mode="RGB").save(path, format="PNG")


def save_mask(mask: np.ndarray, path) -> None:
    """Mask -> 8-bit grayscale PNG."""
    mask = np.asarray(mask, dtype=np.float64)
    data = np.round(np.clip(mask, 0.0, 1.0) * 255.0).astype(np.uint8)
    PILImage.fromarray(data, mode="L").save(path, format="PNG")


def resize_image(image: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize used to match a model's declared input size."""
    image = validate_image(image)
    if image.shape[:2] == (height, width):
        return image
    data = np.round(image * 255.0).astype(np.uint8)
    resized = PILImage.fromarray(data, mode="RGB").resize(
        (width, height), resample=PILImage.Resampling.BILINEAR
    )
    return np.asarray(resized, dtype=np.float64) / 255.0


def encode_rgb8(image: np.ndarray) -> bytes:
    """Row-major H*W*3 bytes, the wire representation of an image."""
    image = validate_image(image)
    return np.round(image * 255.0).astype(np.uint8).tobytes()


def decode_rgb8(data: bytes, height: int, width: int) -> np.ndarray:
    expected = height * width * 3
    if len(data) != expected:
        raise ValueError(f"expected {expected} bytes, got {len(data)}")
    arr = np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3)
    return arr.astype(np.float64) / 255.0
