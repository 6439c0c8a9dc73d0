"""Structured attention graph construction by recursive single-patch deletion.

Nodes are deduplicated patch sets with classifier confidences; every edge
removes exactly one patch, so the graph is acyclic by construction. Nodes
whose confidence falls below the absolute floor p_l are kept (their score is
informative) but never expanded; singletons are never expanded either.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .classifiers import EvalCache
from .diversity import DiverseSelection
from .imaging import PatchSet
from .search import SearchConfig, make_context


@dataclass
class SagNode:
    patch_set: PatchSet
    confidence: float
    expanded: bool
    is_root: bool = False


@dataclass
class SagEdge:
    parent: int  # node keys are the decimal bit-vector values
    child: int
    removed_patch: int


@dataclass
class SagGraph:
    r: int
    class_index: int
    mode_name: str
    base_confidence: float
    nodes: dict[int, SagNode] = field(default_factory=dict)
    edges: list[SagEdge] = field(default_factory=list)
    roots: list[int] = field(default_factory=list)

    def children_of(self, bits: int) -> list[SagEdge]:
        return [e for e in self.edges if e.parent == bits]

    def parents_of(self, bits: int) -> list[SagEdge]:
        return [e for e in self.edges if e.child == bits]


def build_sag(
    image,
    roots: DiverseSelection,
    class_index: int,
    config: SearchConfig,
    cache: EvalCache,
) -> SagGraph:
    """Breadth-first leave-one-out expansion from the diverse roots."""
    if not roots.chosen:
        raise ValueError("cannot build a graph from empty roots")
    context = make_context(image, class_index, config, cache)
    graph = SagGraph(
        r=config.r,
        class_index=class_index,
        mode_name=str(config.mode),
        base_confidence=context.base_confidence,
    )

    def expandable(node: SagNode) -> bool:
        return node.confidence >= config.p_l and len(node.patch_set) >= 2

    frontier: list[PatchSet] = []
    for record in roots.chosen:
        if record.patch_set.bits in graph.nodes:
            continue
        conf = context.evaluator.confidence(record.patch_set, class_index)
        node = SagNode(record.patch_set, conf, expanded=False, is_root=True)
        graph.nodes[record.patch_set.bits] = node
        graph.roots.append(record.patch_set.bits)
        frontier.append(record.patch_set)

    while frontier:
        # One level at a time; children are scored in a single batch.
        level_edges: list[tuple[PatchSet, PatchSet, int]] = []
        for parent in frontier:
            node = graph.nodes[parent.bits]
            if not expandable(node):
                continue
            node.expanded = True
            for idx in parent.indices():
                level_edges.append((parent, parent.without_patch(idx), idx))
        if not level_edges:
            break
        new_sets: dict[int, PatchSet] = {}
        for _, child, _ in level_edges:
            if child.bits not in graph.nodes:
                new_sets.setdefault(child.bits, child)
        new_list = list(new_sets.values())
        confs = context.evaluator.confidences(new_list, class_index)
        for child, conf in zip(new_list, confs):
            graph.nodes[child.bits] = SagNode(child, conf, expanded=False)
        for parent, child, idx in level_edges:
            graph.edges.append(SagEdge(parent.bits, child.bits, idx))
        frontier = new_list

    return graph


def node_importance(graph: SagGraph, parent_bits: int, child_bits: int) -> float:
    """Confidence drop along an edge; the size of the drop is the removed
    patch's importance in that context (can be negative)."""
    for edge in graph.edges:
        if edge.parent == parent_bits and edge.child == child_bits:
            return graph.nodes[parent_bits].confidence - graph.nodes[child_bits].confidence
    raise KeyError(f"no edge {parent_bits} -> {child_bits} in graph")
