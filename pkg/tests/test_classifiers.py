import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sagraph.classifiers import (
    ConstantClassifier,
    EvalCache,
    Evaluator,
    SyntheticMonotoneDnf,
    set_confidence,
    target_class,
)
from sagraph.imaging import PatchGrid, PatchSet, PerturbationMode, perturb


def make_eval(terms, image, mode=None):
    clf = SyntheticMonotoneDnf(7, terms)
    cache = EvalCache(clf)
    grid = PatchGrid(7, image.shape[0], image.shape[1])
    mode = mode or PerturbationMode.black()
    return clf, cache, Evaluator(cache, image, grid, mode), grid


def test_target_class_prefers_satisfied_term(ones_image):
    clf = SyntheticMonotoneDnf(7, [[3, 7]])
    assert target_class(clf, ones_image) == 0
    assert clf.classify(ones_image)[0] == 0.95


def test_target_class_tie_breaks_low_index(ones_image):
    clf = ConstantClassifier([0.2, 0.2])
    assert target_class(clf, ones_image) == 0


def test_set_confidence_full_set_equals_direct_classify(ones_image, grid28):
    clf = SyntheticMonotoneDnf(7, [[3, 7]])
    cache = EvalCache(clf)
    conf = set_confidence(
        clf, ones_image, PatchSet.full(grid28), 0, PerturbationMode.black(), cache
    )
    assert conf == clf.classify(ones_image)[0] == 0.95


def test_set_confidence_term_satisfied(ones_image, grid28):
    clf = SyntheticMonotoneDnf(7, [[3, 7]])
    cache = EvalCache(clf)
    ps = PatchSet.from_indices(grid28, [3, 7])
    assert set_confidence(clf, ones_image, ps, 0, PerturbationMode.black(), cache) == 0.95


def test_set_confidence_partial_term_graded(ones_image, grid28):
    # one patch of a two-patch term earns exactly one step of partial credit
    clf = SyntheticMonotoneDnf(7, [[3, 7]])
    cache = EvalCache(clf)
    ps = PatchSet.from_indices(grid28, [3])
    conf = set_confidence(clf, ones_image, ps, 0, PerturbationMode.black(), cache)
    assert conf == pytest.approx(clf.p_low + clf.partial_step)
    assert conf < 0.9 * 0.95  # still far below the sufficiency threshold


def test_no_term_patches_scores_p_low(ones_image, grid28):
    clf = SyntheticMonotoneDnf(7, [[3, 7]])
    cache = EvalCache(clf)
    ps = PatchSet.from_indices(grid28, [0, 10, 20])
    assert set_confidence(clf, ones_image, ps, 0, PerturbationMode.black(), cache) == 0.05


def test_partial_credit_capped_below_pruning_floor(ones_image, grid28):
    clf = SyntheticMonotoneDnf(7, [[10, 11, 12, 13]])
    cache = EvalCache(clf)
    ps = PatchSet.from_indices(grid28, [10, 11, 12])
    conf = set_confidence(clf, ones_image, ps, 0, PerturbationMode.black(), cache)
    assert conf == pytest.approx(0.35)
    assert conf < 0.4


def test_presence_reconstruction_from_perturbed_image(ones_image, grid28):
    # presence is read from pixels, so the full imaging path is in the loop
    clf = SyntheticMonotoneDnf(7, [[3, 7]])
    ps = PatchSet.from_indices(grid28, [3, 7, 20])
    perturbed = perturb(ones_image, ps, PerturbationMode.black())
    assert clf.presence_bits(perturbed) == ps.bits


def test_presence_not_leaked_to_neighbors(ones_image, grid28):
    clf = SyntheticMonotoneDnf(7, [[0]])
    ps = PatchSet.from_indices(grid28, [24])  # grid center
    perturbed = perturb(ones_image, ps, PerturbationMode.black())
    assert clf.presence_bits(perturbed) == ps.bits


def test_cache_soundness_distinct_keys(ones_image, grid28):
    clf, cache, evaluator, grid = make_eval([[3, 7]], ones_image)
    sets = [
        PatchSet.from_indices(grid, ix)
        for ix in ([3], [7], [3, 7], [3], [7], [3, 7], [0])
    ]
    for ps in sets:
        evaluator.confidence(ps, 0)
    assert cache.evaluations == 4  # {3}, {7}, {3,7}, {0}
    assert len(cache) == 4


def test_cache_rereads_are_bit_identical(ones_image, grid28):
    clf, cache, evaluator, grid = make_eval([[3, 7]], ones_image)
    ps = PatchSet.from_indices(grid, [3, 5])
    first = evaluator.vector(ps)
    again = evaluator.vector(ps)
    assert first is again  # same stored array, trivially bit-identical


def test_cache_modes_are_separate_keys(ones_image, grid28):
    clf = SyntheticMonotoneDnf(7, [[3, 7]])
    cache = EvalCache(clf)
    ps = PatchSet.from_indices(grid28, [3])
    set_confidence(clf, ones_image, ps, 0, PerturbationMode.black(), cache)
    set_confidence(clf, ones_image, ps, 0, PerturbationMode.blur(5.0), cache)
    assert cache.evaluations == 2


def test_cache_single_flight_under_threads(ones_image, grid28):
    calls = []
    call_lock = threading.Lock()

    class Slow(ConstantClassifier):
        def classify(self, image):
            with call_lock:
                calls.append(1)
            return super().classify(image)

    clf = Slow([0.6, 0.2])
    cache = EvalCache(clf)
    ps = PatchSet.from_indices(grid28, [1, 2])
    barrier = threading.Barrier(8)
    results = []

    def worker():
        barrier.wait()
        results.append(
            set_confidence(clf, ones_image, ps, 0, PerturbationMode.black(), cache)
        )

    threads = [threading.Thread(target=worker) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(calls) == 1  # single-flight: one evaluation for 8 callers
    assert results == [0.6] * 8
    assert cache.evaluations == 1


def test_batched_and_single_paths_agree_bitwise(ones_image, grid28):
    clf, cache, evaluator, grid = make_eval([[3, 7], [20, 30, 40]], ones_image)
    sets = [PatchSet.from_indices(grid, ix) for ix in ([3], [3, 7], [20, 30], [5, 6])]
    batched = evaluator.confidences(sets, 0)
    fresh = [
        float(clf.classify(perturb(ones_image, ps, PerturbationMode.black()))[0])
        for ps in sets
    ]
    assert batched == fresh


def test_blur_mode_presence_differs_from_black(grid28):
    # blur baseline keeps intensity outside the kept region, so the synthetic
    # presence rule may see extra patches; black is the canonical oracle mode
    clf = SyntheticMonotoneDnf(7, [[24]])
    image = np.ones((28, 28, 3))
    cache = EvalCache(clf)
    black = set_confidence(
        clf, image, PatchSet.from_indices(grid28, [24]), 0,
        PerturbationMode.black(), cache,
    )
    assert black == 0.95


@settings(max_examples=60, deadline=None)
@given(
    bits=st.integers(min_value=0, max_value=2**49 - 1),
    extra=st.integers(min_value=0, max_value=2**49 - 1),
)
def test_synthetic_monotone_under_black(bits, extra):
    image = np.ones((28, 28, 3))
    grid = PatchGrid(7, 28, 28)
    clf = SyntheticMonotoneDnf(7, [[3, 7], [10, 20, 30]])
    cache = EvalCache(clf)
    evaluator = Evaluator(cache, image, grid, PerturbationMode.black())
    small = PatchSet(grid, bits)
    large = PatchSet(grid, bits | extra)
    assert evaluator.confidence(small, 0) <= evaluator.confidence(large, 0) + 1e-12


def test_synthetic_validation():
    with pytest.raises(ValueError):
        SyntheticMonotoneDnf(7, [])
    with pytest.raises(ValueError):
        SyntheticMonotoneDnf(7, [[]])
    with pytest.raises(ValueError):
        SyntheticMonotoneDnf(7, [[1]], p_low=0.4, partial_cap=0.3)


def test_set_confidence_rejects_foreign_cache(ones_image, grid28):
    clf = SyntheticMonotoneDnf(7, [[3]])
    other = SyntheticMonotoneDnf(7, [[4]])
    cache = EvalCache(other)
    with pytest.raises(ValueError):
        set_confidence(
            clf, ones_image, PatchSet.full(grid28), 0, PerturbationMode.black(), cache
        )
