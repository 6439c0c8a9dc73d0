"""Greedy dispersion: pick few explanations that overlap as little as possible.

The dispersion value psi of a chosen set is the cardinality of its largest
pairwise intersection; the greedy minimizes the max intersection with what
is already chosen at every step.
"""

from __future__ import annotations

from dataclasses import dataclass

from .search import MseRecord


@dataclass(frozen=True)
class DiverseSelection:
    """Ordered picks plus the realized dispersion value."""

    chosen: tuple[MseRecord, ...]
    psi: int


def pairwise_psi(records) -> int:
    """Largest pairwise intersection cardinality; 0 for fewer than 2 sets."""
    best = 0
    records = list(records)
    for i in range(len(records)):
        for j in range(i + 1, len(records)):
            best = max(
                best, records[i].patch_set.intersection_size(records[j].patch_set)
            )
    return best


def select_diverse(candidates: list[MseRecord], c: int) -> DiverseSelection:
    """Greedy dispersion-maximizing subset of size c.

    First pick: highest confidence (lexicographically smallest set on ties).
    Each later pick minimizes the max intersection with the chosen sets,
    ties broken by higher confidence, then lexicographic order.
    """
    if c < 1:
        raise ValueError("c must be >= 1")
    ordered = sorted(candidates, key=MseRecord.sort_key)
    if len(ordered) <= c:
        return DiverseSelection(tuple(ordered), pairwise_psi(ordered))
    chosen = [ordered[0]]
    remaining = ordered[1:]
    while len(chosen) < c:
        best_idx = min(
            range(len(remaining)),
            key=lambda i: (
                max(
                    remaining[i].patch_set.intersection_size(z.patch_set)
                    for z in chosen
                ),
                -remaining[i].confidence,
                remaining[i].patch_set.indices(),
            ),
        )
        chosen.append(remaining.pop(best_idx))
    return DiverseSelection(tuple(chosen), pairwise_psi(chosen))


def count_diverse(candidates: list[MseRecord], overlap: int) -> int:
    """Size of a greedy maximal packing allowing pairwise overlap <= `overlap`.

    Candidates are taken in confidence-descending order (lexicographic ties);
    one is accepted when it overlaps every accepted set in at most `overlap`
    patches.
    """
    if overlap < 0:
        raise ValueError("overlap must be >= 0")
    accepted = []
    for record in sorted(candidates, key=MseRecord.sort_key):
        if all(
            record.patch_set.intersection_size(a.patch_set) <= overlap
            for a in accepted
        ):
            accepted.append(record)
    return len(accepted)
