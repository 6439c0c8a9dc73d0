"""Minimal sufficient explanations via restricted combinatorial and beam search.

A patch set N is *sufficient* for class c when f_c(N) >= P_h * f_c(x), and a
sufficient set is *minimal* when every leave-one-out subset falls below that
threshold. Both searches return only minimal records, every tie broken
deterministically (confidence descending, then the canonical index-tuple
order of the sets).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .attention import CoarseAttention
from .classifiers import EvalCache, Evaluator
from .imaging import PatchGrid, PatchSet, PerturbationMode


@dataclass(frozen=True)
class SearchConfig:
    """All search/graph hyperparameters in one place.

    p_h scales the full-image confidence into the sufficiency threshold;
    p_l is the absolute confidence floor below which graph nodes are not
    expanded; c is the diverse-subset size used for graph roots.
    """

    p_h: float = 0.9
    r: int = 7
    m: int = 10
    k: int = 2
    w: int = 15
    q: int = 15
    max_iterations: int | None = None
    mode: PerturbationMode = field(default_factory=PerturbationMode.black)
    p_l: float = 0.4
    c: int = 3

    def __post_init__(self):
        if not 0 < self.p_l < self.p_h <= 1:
            raise ValueError("need 0 < p_l < p_h <= 1")
        if not 0 < self.k < self.m <= self.r * self.r:
            raise ValueError("need 0 < k < m <= r^2")
        if self.w < 1 or self.q < 1:
            raise ValueError("need w >= 1 and q >= 1")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")

    @property
    def iteration_limit(self) -> int:
        return self.max_iterations if self.max_iterations is not None else self.r**2


@dataclass(frozen=True)
class MseRecord:
    """A patch set with its confidence and verified minimality status."""

    patch_set: PatchSet
    confidence: float
    base_confidence: float
    minimal: bool

    def sort_key(self):
        return (-self.confidence, self.patch_set.indices())


@dataclass
class SearchContext:
    """Evaluator plus the run's target class and threshold."""

    evaluator: Evaluator
    class_index: int
    config: SearchConfig
    base_confidence: float

    @property
    def threshold(self) -> float:
        return self.config.p_h * self.base_confidence


def make_context(
    image,
    class_index: int,
    config: SearchConfig,
    cache: EvalCache,
) -> SearchContext:
    grid = PatchGrid(config.r, image.shape[0], image.shape[1])
    evaluator = Evaluator(cache, image, grid, config.mode)
    base = evaluator.confidence(PatchSet.full(grid), class_index)
    return SearchContext(evaluator, class_index, config, base)


def is_sufficient(patch_set: PatchSet, context: SearchContext) -> bool:
    conf = context.evaluator.confidence(patch_set, context.class_index)
    return conf >= context.threshold


def check_minimal(patch_set: PatchSet, context: SearchContext) -> MseRecord:
    """Verify leave-one-out minimality of an already-sufficient set.

    Children are scored in small batches and the scan stops at the first
    sufficient child; one sufficient child already settles non-minimality.
    """
    conf = context.evaluator.confidence(patch_set, context.class_index)
    minimal = True
    if len(patch_set) > 1:
        children = [patch_set.without_patch(i) for i in patch_set.indices()]
        for start in range(0, len(children), 8):
            chunk = children[start : start + 8]
            confs = context.evaluator.confidences(chunk, context.class_index)
            if any(c >= context.threshold for c in confs):
                minimal = False
                break
    return MseRecord(patch_set, conf, context.base_confidence, minimal)


def combinatorial_search(
    image,
    attention: CoarseAttention,
    class_index: int,
    config: SearchConfig,
    cache: EvalCache,
) -> list[MseRecord]:
    """Enumerate all C(m, k) subsets of the top-m attention patches."""
    if config.k >= config.m:
        raise ValueError("k must be smaller than m")
    context = make_context(image, class_index, config, cache)
    grid = context.evaluator.grid
    pool = sorted(attention.top(config.m))
    candidates = [
        PatchSet.from_indices(grid, combo)
        for combo in itertools.combinations(pool, config.k)
    ]
    confs = context.evaluator.confidences(candidates, class_index)
    records = []
    for ps, conf in zip(candidates, confs):
        if conf >= context.threshold:
            record = check_minimal(ps, context)
            if record.minimal:
                records.append(record)
    return sorted(records, key=MseRecord.sort_key)


@dataclass
class BeamTrace:
    """Diagnostics of one beam run, mainly for query-budget audits."""

    iterations: int = 0
    finalized: int = 0
    finalized_at: list[tuple[int, int]] = field(default_factory=list)  # (bits, iteration)
    discarded_non_minimal: list[PatchSet] = field(default_factory=list)
    base_confidence: float = 0.0


def beam_search(
    image,
    attention: CoarseAttention,
    class_index: int,
    config: SearchConfig,
    cache: EvalCache,
    trace: BeamTrace | None = None,
) -> list[MseRecord]:
    """Attention-guided beam search for up to w minimal sufficient sets.

    States all grow by one patch per iteration; a candidate that reaches the
    sufficiency threshold is finalized through the minimality check and
    leaves the beam; the top-w remaining candidates survive. Stops when w
    records have been finalized, the iteration limit is reached, or no
    candidates remain.
    """
    context = make_context(image, class_index, config, cache)
    grid = context.evaluator.grid
    if trace is not None:
        trace.base_confidence = context.base_confidence

    finished: list[MseRecord] = []
    # Every sufficient set discovered so far. A strict superset of any of
    # them can never be minimal (it has a sufficient proper subset), so they
    # are dropped without spending classifier queries on them.
    known_sufficient: list[int] = []

    def covers_known(bits: int) -> bool:
        return any(bits != k and bits & k == k for k in known_sufficient)

    def finalize(patch_set: PatchSet, iteration: int) -> None:
        known_sufficient.append(patch_set.bits)
        record = check_minimal(patch_set, context)
        if record.minimal:
            finished.append(record)
            if trace is not None:
                trace.finalized_at.append((patch_set.bits, iteration))
        elif trace is not None:
            trace.discarded_non_minimal.append(patch_set)

    # Initial states: the top-w singleton patches; already-sufficient ones
    # finalize immediately instead of being expanded.
    singletons = [PatchSet.from_indices(grid, [j]) for j in attention.top(config.w)]
    confs = context.evaluator.confidences(singletons, class_index)
    beam: list[tuple[PatchSet, float]] = []
    for ps, conf in sorted(
        zip(singletons, confs), key=lambda t: (-t[1], t[0].indices())
    ):
        if conf >= context.threshold:
            if len(finished) < config.w:
                finalize(ps, 0)
        else:
            beam.append((ps, conf))

    ranking = attention.ranking()
    iterations = 0
    while beam and len(finished) < config.w and iterations < config.iteration_limit:
        iterations += 1
        # Candidates: each state plus each of its q best absent patches,
        # merged across parents before scoring.
        seen: set[int] = set()
        candidates: list[PatchSet] = []
        for state, _ in beam:
            added = 0
            for j in ranking:
                if j in state:
                    continue
                child = state.with_patch(j)
                if child.bits not in seen:
                    seen.add(child.bits)
                    if not covers_known(child.bits):
                        candidates.append(child)
                added += 1
                if added == config.q:
                    break
        if not candidates:
            break
        confs = context.evaluator.confidences(candidates, class_index)
        ranked = sorted(
            zip(candidates, confs), key=lambda t: (-t[1], t[0].indices())
        )
        beam = []
        for ps, conf in ranked:
            if conf >= context.threshold:
                if len(finished) < config.w:
                    finalize(ps, iterations)
            elif len(beam) < config.w:
                beam.append((ps, conf))

    if trace is not None:
        trace.iterations = iterations
        trace.finalized = len(finished)
    return sorted(finished, key=MseRecord.sort_key)


def verify_record(record: MseRecord, context: SearchContext) -> bool:
    """Independent post-hoc pass: re-check sufficiency and minimality."""
    conf = context.evaluator.confidence(record.patch_set, context.class_index)
    if conf != record.confidence or conf < context.threshold:
        return False
    if not record.minimal:
        return True
    for i in record.patch_set.indices():
        if len(record.patch_set) == 1:
            break
        child = record.patch_set.without_patch(i)
        if context.evaluator.confidence(child, context.class_index) >= context.threshold:
            return False
    return True
