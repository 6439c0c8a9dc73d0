"""Black-box classifier abstraction, evaluation cache and synthetic oracles.

A classifier maps an (H, W, 3) float image to a vector of class-conditional
scores in [0, 1] (not required to sum to one). The EvalCache wraps one
classifier and guarantees at-most-once evaluation per (patch set, mode) key,
which is what makes query-budget audits meaningful.
"""

from __future__ import annotations

import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .imaging import (
    PatchGrid,
    PatchSet,
    PerturbationMode,
    make_baseline,
    perturb,
    upsample_mask,
    validate_image,
)


class Classifier(ABC):
    """Abstract black-box: images in, score vectors out."""

    @property
    @abstractmethod
    def num_classes(self) -> int: ...

    @abstractmethod
    def classify(self, image: np.ndarray) -> np.ndarray:
        """Return a vector of `num_classes` scores in [0, 1]."""

    def classify_batch(self, images: list[np.ndarray]) -> list[np.ndarray]:
        return [self.classify(im) for im in images]


def target_class(classifier: Classifier, image: np.ndarray) -> int:
    """Smallest class index attaining the maximum score."""
    scores = np.asarray(classifier.classify(image))
    return int(np.argmax(scores))


def _region_means(field: np.ndarray, grid: PatchGrid) -> np.ndarray:
    """Mean of a (H, W) field over each patch region, flattened to r^2."""
    rb, cb = grid.row_bounds(), grid.col_bounds()
    row_sums = np.add.reduceat(field, rb[:-1], axis=0)
    sums = np.add.reduceat(row_sums, cb[:-1], axis=1)
    counts = np.outer(np.diff(rb), np.diff(cb))
    return (sums / counts).ravel()


class SyntheticMonotoneDnf(Classifier):
    """Ground-truth oracle: a monotone DNF over patch presence.

    Presence of a patch is reconstructed from the pixel content: the mean
    intensity over the patch region must exceed `presence_threshold`. Run it
    on all-ones images perturbed against the black baseline so the perturbed
    image *is* the mask and the whole imaging path is exercised.

    Scoring gives partial credit per present patch of the best-advanced term
    (capped below any sufficiency/pruning threshold), so that occlusion-style
    attention maps carry a usable ranking signal; a fully present term yields
    `p_high`; no term patches at all yields `p_low`.
    """

    def __init__(
        self,
        r: int,
        terms: list,
        p_low: float = 0.05,
        p_high: float = 0.95,
        presence_threshold: float = 0.5,
        partial_step: float = 0.1,
        partial_cap: float = 0.35,
    ):
        self.r = r
        self.num_patches = r * r
        self.term_bits: list[int] = []
        for term in terms:
            bits = term.bits if isinstance(term, PatchSet) else PatchSet.from_indices(
                PatchGrid(r, r, r), term
            ).bits
            if bits == 0:
                raise ValueError("empty term is not allowed")
            self.term_bits.append(bits)
        if not self.term_bits:
            raise ValueError("at least one term is required")
        if not p_low < partial_cap < min(p_high, 1.0):
            raise ValueError("need p_low < partial_cap < p_high")
        self.p_low = p_low
        self.p_high = p_high
        self.presence_threshold = presence_threshold
        self.partial_step = partial_step
        self.partial_cap = partial_cap

    @property
    def num_classes(self) -> int:
        return 2

    def _presence_rows(self, stack: np.ndarray) -> list[int]:
        """Presence bit vectors for a (N, H, W, 3) image stack.

        One arithmetic path for single and batched classification, so cached
        scores are bit-identical however the evaluation was batched.
        """
        n, h, w = stack.shape[:3]
        grid = PatchGrid(self.r, h, w)
        rb, cb = grid.row_bounds(), grid.col_bounds()
        field = stack.mean(axis=3)
        sums = np.add.reduceat(np.add.reduceat(field, rb[:-1], axis=1), cb[:-1], axis=2)
        means = sums / np.outer(np.diff(rb), np.diff(cb))[None, :, :]
        present = means.reshape(n, -1) > self.presence_threshold
        rows = []
        for row in present:
            bits = 0
            for i in np.nonzero(row)[0]:
                bits |= 1 << int(i)
            rows.append(bits)
        return rows

    def score_presence(self, presence: int) -> float:
        best = 0
        for term in self.term_bits:
            overlap = (presence & term).bit_count()
            if overlap == term.bit_count():
                return self.p_high
            best = max(best, overlap)
        return min(self.p_low + self.partial_step * best, self.partial_cap)

    def presence_bits(self, image: np.ndarray) -> int:
        image = validate_image(image)
        return self._presence_rows(image[None])[0]

    def classify(self, image: np.ndarray) -> np.ndarray:
        score = self.score_presence(self.presence_bits(image))
        return np.array([score, 1.0 - score])

    def classify_batch(self, images) -> list[np.ndarray]:
        if len(images) == 0:
            return []
        if isinstance(images, np.ndarray):
            stack = np.asarray(images, dtype=np.float64)
        else:
            stack = np.stack([np.asarray(im, dtype=np.float64) for im in images])
        if stack.ndim != 4 or stack.shape[3] != 3:
            raise ValueError(f"expected (H, W, 3) images, got {stack.shape[1:]}")
        if stack.min() < 0.0 or stack.max() > 1.0:
            raise ValueError("image intensities must lie in [0, 1]")
        return [
            np.array([score, 1.0 - score])
            for score in map(self.score_presence, self._presence_rows(stack))
        ]


class ConstantClassifier(Classifier):
    """Ignores its input; handy for mode-invariance and plumbing tests."""

    def __init__(self, scores):
        self._scores = np.asarray(scores, dtype=np.float64)

    @property
    def num_classes(self) -> int:
        return len(self._scores)

    def classify(self, image: np.ndarray) -> np.ndarray:
        validate_image(image)
        return self._scores.copy()


class EvalCache:
    """Memo of (patch-set bits, mode) -> score vector around one classifier.

    Thread-safe with a single-flight guarantee: concurrent lookups of the
    same missing key trigger exactly one wrapped evaluation; the rest wait.
    """

    def __init__(self, classifier: Classifier):
        self.classifier = classifier
        self._store: dict[tuple, np.ndarray] = {}
        self._inflight: dict[tuple, threading.Event] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0
        self.evaluations = 0  # wrapped-classifier call count == distinct keys

    @staticmethod
    def key(patch_set: PatchSet, mode: PerturbationMode) -> tuple:
        return (patch_set.bits, mode.cache_key())

    def lookup(self, patch_set: PatchSet, mode: PerturbationMode) -> np.ndarray | None:
        with self._lock:
            vec = self._store.get(self.key(patch_set, mode))
            if vec is not None:
                self.hits += 1
            else:
                self.misses += 1
            return vec

    def get_or_evaluate(
        self,
        patch_set: PatchSet,
        mode: PerturbationMode,
        evaluate,
    ) -> np.ndarray:
        """Return the cached vector, or run `evaluate()` exactly once for it."""
        key = self.key(patch_set, mode)
        while True:
            with self._lock:
                vec = self._store.get(key)
                if vec is not None:
                    self.hits += 1
                    return vec
                event = self._inflight.get(key)
                if event is None:
                    event = threading.Event()
                    self._inflight[key] = event
                    self.misses += 1
                    owner = True
                else:
                    owner = False
            if not owner:
                event.wait()
                continue
            try:
                vec = np.asarray(evaluate(), dtype=np.float64)
                vec.setflags(write=False)
                with self._lock:
                    self._store[key] = vec
                    self.evaluations += 1
                return vec
            finally:
                with self._lock:
                    self._inflight.pop(key, None)
                event.set()

    def store(self, patch_set: PatchSet, mode: PerturbationMode, vec: np.ndarray):
        vec = np.asarray(vec, dtype=np.float64)
        vec.setflags(write=False)
        with self._lock:
            key = self.key(patch_set, mode)
            if key not in self._store:
                self._store[key] = vec
                self.evaluations += 1
            event = self._inflight.pop(key, None)
            if event is not None:
                event.set()

    def __len__(self) -> int:
        with self._lock:
            return len(self._store)


@dataclass
class Evaluator:
    """Bundles classifier + image + mode + cache; precomputes the baseline.

    This is the workhorse the search and SAG layers talk to; the standalone
    `set_confidence` function below is the thin per-call form of the same
    contract.
    """

    cache: EvalCache
    image: np.ndarray
    grid: PatchGrid
    mode: PerturbationMode

    def __post_init__(self):
        self.image = validate_image(self.image)
        if (self.grid.height, self.grid.width) != self.image.shape[:2]:
            raise ValueError("grid does not match image dimensions")
        self.baseline = make_baseline(self.image, self.mode)
        self._baseline_is_zero = not self.baseline.any()

    def vector(self, patch_set: PatchSet) -> np.ndarray:
        return self.cache.get_or_evaluate(
            patch_set,
            self.mode,
            lambda: self.cache.classifier.classify(
                perturb(self.image, patch_set, self.mode, baseline=self.baseline)
            ),
        )

    def confidence(self, patch_set: PatchSet, class_index: int) -> float:
        return float(self.vector(patch_set)[class_index])

    def confidences(self, patch_sets: list[PatchSet], class_index: int) -> list[float]:
        """Batch scoring: misses go through classify_batch in one call.

        The per-set mask uses exactly the same arithmetic as `perturb`, so a
        score is bit-identical whether it was computed here or one at a time.
        """
        missing, seen = [], set()
        for ps in patch_sets:
            if ps.bits not in seen and self.cache.lookup(ps, self.mode) is None:
                seen.add(ps.bits)
                missing.append(ps)
        if missing:
            h, w = self.image.shape[:2]
            batch = np.empty((len(missing), h, w, 3), dtype=np.float64)
            if self._baseline_is_zero:
                # mask * image is already in [0, 1]; the clip in `perturb`
                # cannot change any value, so skipping it is bit-identical.
                for i, ps in enumerate(missing):
                    np.multiply(
                        upsample_mask(ps, h, w)[:, :, None], self.image, out=batch[i]
                    )
            else:
                for i, ps in enumerate(missing):
                    mask = upsample_mask(ps, h, w)[:, :, None]
                    np.multiply(mask, self.image, out=batch[i])
                    batch[i] += (1.0 - mask) * self.baseline
                np.clip(batch, 0.0, 1.0, out=batch)
            vectors = self.cache.classifier.classify_batch(batch)
            for ps, vec in zip(missing, vectors):
                self.cache.store(ps, self.mode, vec)
        return [float(self.vector(ps)[class_index]) for ps in patch_sets]


def set_confidence(
    classifier: Classifier,
    image: np.ndarray,
    patch_set: PatchSet,
    class_index: int,
    mode: PerturbationMode,
    cache: EvalCache,
) -> float:
    """Class score of the image perturbed down to `patch_set`, via the cache."""
    if cache.classifier is not classifier:
        raise ValueError("cache wraps a different classifier")
    vec = cache.get_or_evaluate(
        patch_set,
        mode,
        lambda: classifier.classify(perturb(image, patch_set, mode)),
    )
    return float(vec[class_index])
