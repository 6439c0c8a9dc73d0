"""Coarse per-patch attention: pooled external heatmaps or occlusion fallback.

The searches only ever *rank* patches with these values (top-m / top-q /
top-w), so no normalization is applied. Ties rank the lower patch index
first, deterministically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classifiers import Classifier, EvalCache, Evaluator, _region_means
from .imaging import PatchGrid, PatchSet, PerturbationMode, load_image


@dataclass(frozen=True)
class CoarseAttention:
    """One scalar per patch; `values[j]` scores patch j."""

    r: int
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != self.r * self.r:
            raise ValueError("need exactly r^2 attention values")
        if not all(np.isfinite(v) for v in self.values):
            raise ValueError("attention values must be finite")

    def ranking(self) -> list[int]:
        """Patch indices from most to least relevant, low index wins ties."""
        return sorted(range(len(self.values)), key=lambda j: (-self.values[j], j))

    def top(self, n: int) -> list[int]:
        return self.ranking()[:n]

    def top_absent(self, patch_set: PatchSet, n: int) -> list[int]:
        """The n best-ranked patches not already in `patch_set`."""
        out = []
        for j in self.ranking():
            if j not in patch_set:
                out.append(j)
                if len(out) == n:
                    break
        return out


def pool_attention(full_map: np.ndarray, grid: PatchGrid) -> CoarseAttention:
    """Average-pool a full-resolution scalar field over each patch region."""
    full_map = np.asarray(full_map, dtype=np.float64)
    if full_map.shape != (grid.height, grid.width):
        raise ValueError(
            f"field shape {full_map.shape} does not match grid "
            f"{grid.height}x{grid.width}"
        )
    values = _region_means(full_map, grid)
    return CoarseAttention(grid.r, tuple(float(v) for v in values))


def occlusion_attention(
    classifier: Classifier,
    image: np.ndarray,
    class_index: int,
    mode: PerturbationMode,
    cache: EvalCache,
    grid: PatchGrid | None = None,
) -> CoarseAttention:
    """Fallback attention: confidence of each singleton patch set.

    Costs exactly r^2 classifier evaluations (cache-mediated).
    """
    if grid is None:
        grid = PatchGrid(7, image.shape[0], image.shape[1])
    if cache.classifier is not classifier:
        raise ValueError("cache wraps a different classifier")
    evaluator = Evaluator(cache, image, grid, mode)
    singletons = [PatchSet.from_indices(grid, [j]) for j in range(grid.num_patches)]
    values = evaluator.confidences(singletons, class_index)
    return CoarseAttention(grid.r, tuple(values))


def load_attention_field(path) -> np.ndarray:
    """Read an externally produced heatmap: CSV matrix or grayscale image.

    CSV/TXT files hold height rows x width columns of floats; image files are
    read as 8-bit grayscale and rescaled to [0, 1].
    """
    text = str(path).lower()
    if text.endswith((".csv", ".txt")):
        field = np.loadtxt(path, delimiter=",", dtype=np.float64)
        if field.ndim == 1:
            field = field[None, :]
        return field
    rgb = load_image(path)
    return rgb.mean(axis=2)


def attention_for(
    image: np.ndarray,
    grid: PatchGrid,
    heatmap_path,
    classifier: Classifier,
    class_index: int,
    mode: PerturbationMode,
    cache: EvalCache,
) -> CoarseAttention:
    """External heatmap when a path is given, occlusion fallback otherwise."""
    if heatmap_path is not None:
        return pool_attention(load_attention_field(heatmap_path), grid)
    return occlusion_attention(classifier, image, class_index, mode, cache, grid)
