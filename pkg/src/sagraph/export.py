"""Serialize structured attention graphs: JSON, DOT + node images, static HTML.

The JSON document is a faithful bijection of the in-memory graph (round-trip
isomorphism); node ids are the decimal value of the patch bit vector. Node
subimages always render excluded regions black, matching the usual visual
convention, regardless of the perturbation mode used for scoring.
"""

from __future__ import annotations

import base64
import io
import json
from collections import deque
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .imaging import PatchSet, PatchGrid, PerturbationMode, perturb, validate_image
from .sag import SagEdge, SagGraph, SagNode, node_importance


def graph_to_dict(graph: SagGraph) -> dict:
    nodes = [
        {
            "id": bits,
            "patches": list(node.patch_set.indices()),
            "confidence": node.confidence,
            "is_root": node.is_root,
            "expanded": node.expanded,
        }
        for bits, node in sorted(graph.nodes.items())
    ]
    edges = [
        {
            "parent": e.parent,
            "child": e.child,
            "removed_patch": e.removed_patch,
            "drop": node_importance(graph, e.parent, e.child),
        }
        for e in sorted(graph.edges, key=lambda e: (e.parent, e.child, e.removed_patch))
    ]
    return {
        "r": graph.r,
        "base_confidence": graph.base_confidence,
        "class_index": graph.class_index,
        "mode": graph.mode_name,
        "nodes": nodes,
        "edges": edges,
    }


def export_json(graph: SagGraph, path) -> None:
    document = graph_to_dict(graph)
    Path(path).write_text(json.dumps(document, indent=2, sort_keys=True) + "\n")


def load_json(path, image_height: int | None = None, image_width: int | None = None) -> SagGraph:
    """Rebuild a SagGraph from its exported document.

    Node sets need grid pixel dimensions; by default the grid is the trivial
    r x r one, which preserves all structure (ids, patches, edges, flags).
    """
    document = json.loads(Path(path).read_text())
    r = document["r"]
    grid = PatchGrid(r, image_height or r, image_width or r)
    graph = SagGraph(
        r=r,
        class_index=document["class_index"],
        mode_name=document["mode"],
        base_confidence=document["base_confidence"],
    )
    for entry in document["nodes"]:
        ps = PatchSet.from_indices(grid, entry["patches"])
        if ps.bits != entry["id"]:
            raise ValueError(f"node id {entry['id']} does not match its patches")
        graph.nodes[ps.bits] = SagNode(
            ps, entry["confidence"], entry["expanded"], entry["is_root"]
        )
        if entry["is_root"]:
            graph.roots.append(ps.bits)
    for entry in document["edges"]:
        graph.edges.append(
            SagEdge(entry["parent"], entry["child"], entry["removed_patch"])
        )
    return graph


def render_node_image(image: np.ndarray, patch_set: PatchSet) -> np.ndarray:
    """Node subimage: the kept region over a black background."""
    return perturb(image, patch_set, PerturbationMode.black())


def _png_bytes(image: np.ndarray) -> bytes:
    data = np.round(validate_image(image) * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    PILImage.fromarray(data, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def export_dot(graph: SagGraph, image: np.ndarray, out_dir) -> Path:
    """Write graph.dot plus one rendered PNG per node under out_dir/nodes/."""
    out_dir = Path(out_dir)
    nodes_dir = out_dir / "nodes"
    nodes_dir.mkdir(parents=True, exist_ok=True)
    grid = PatchGrid(graph.r, image.shape[0], image.shape[1])
    for bits, node in sorted(graph.nodes.items()):
        ps = PatchSet(grid, bits)
        (nodes_dir / f"{bits}.png").write_bytes(_png_bytes(render_node_image(image, ps)))

    lines = ["digraph sag {", "  rankdir=TB;", '  node [shape=none, margin=0];']
    for bits, node in sorted(graph.nodes.items()):
        label = (
            f'<<TABLE BORDER="0" CELLBORDER="0"><TR><TD>'
            f'<IMG SRC="nodes/{bits}.png"/></TD></TR>'
            f"<TR><TD>{node.confidence:.0%}</TD></TR></TABLE>>"
        )
        lines.append(f'  n{bits} [label={label}];')
    if graph.roots:
        root_ids = " ".join(f"n{bits};" for bits in graph.roots)
        lines.append(f"  {{ rank=min; {root_ids} }}")
    for e in sorted(graph.edges, key=lambda e: (e.parent, e.child, e.removed_patch)):
        lines.append(f'  n{e.parent} -> n{e.child} [label="{e.removed_patch}"];')
    lines.append("}")
    dot_path = out_dir / "graph.dot"
    dot_path.write_text("\n".join(lines) + "\n")
    return dot_path


def reachability(graph: SagGraph, bits: int) -> list[int]:
    """Ancestors, descendants and the node itself, sorted by id."""
    down: dict[int, list[int]] = {}
    up: dict[int, list[int]] = {}
    for e in graph.edges:
        down.setdefault(e.parent, []).append(e.child)
        up.setdefault(e.child, []).append(e.parent)
    seen = {bits}
    for adjacency in (down, up):
        queue = deque([bits])
        while queue:
            current = queue.popleft()
            for nxt in adjacency.get(current, []):
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
    return sorted(seen)


_HTML_TEMPLATE = """<!DOCTYPE html>
<html>
<head>
<meta charset="utf-8"/>
<title>Structured attention graph</title>
<style>
body {{ font-family: sans-serif; background: #fafafa; margin: 16px; }}
#sag {{ position: relative; width: {page_w}px; height: {page_h}px; }}
.node {{ position: absolute; width: {thumb}px; text-align: center;
        border: 2px solid #bbb; border-radius: 4px; background: #fff;
        cursor: pointer; padding: 2px; }}
.node img {{ width: {thumb}px; display: block; }}
.node .conf {{ font-size: 12px; }}
.node.root {{ border-color: #444; }}
.node.highlit {{ border-color: #d62728; box-shadow: 0 0 6px #d62728; }}
svg {{ position: absolute; left: 0; top: 0; pointer-events: none; }}
</style>
</head>
<body>
<h2>Structured attention graph (class {class_index}, base {base:.1%})</h2>
<p>Click a node to highlight everything reachable from it (ancestors and
descendants); click again to clear.</p>
<div id="sag">
<svg width="{page_w}" height="{page_h}">
{svg_edges}
</svg>
{node_divs}
</div>
<script>
const HIGHLIGHT = {highlight_json};
let active = null;
function clearAll() {{
  document.querySelectorAll('.node.highlit').forEach(n => n.classList.remove('highlit'));
}}
document.querySelectorAll('.node').forEach(el => {{
  el.addEventListener('click', () => {{
    const id = el.dataset.id;
    if (active === id) {{ active = null; clearAll(); return; }}
    active = id;
    clearAll();
    for (const other of HIGHLIGHT[id]) {{
      const target = document.querySelector('.node[data-id="' + other + '"]');
      if (target) target.classList.add('highlit');
    }}
  }});
}});
</script>
</body>
</html>
"""


def export_html(graph: SagGraph, image: np.ndarray, path) -> None:
    """Single self-contained page: inline node images, click-to-highlight.

    Highlight sets are precomputed reachability closures embedded as JSON,
    so the page needs no graph code and no network access.
    """
    grid = PatchGrid(graph.r, image.shape[0], image.shape[1])
    thumb = 112
    gap_x, gap_y = 24, 80

    # Trivial level layout: nodes grouped by cardinality, largest sets on top.
    by_level: dict[int, list[int]] = {}
    for bits, node in graph.nodes.items():
        by_level.setdefault(-len(node.patch_set), []).append(bits)
    levels = [sorted(by_level[k]) for k in sorted(by_level)]
    positions: dict[int, tuple[int, int]] = {}
    for li, level in enumerate(levels):
        for ni, bits in enumerate(level):
            positions[bits] = (ni * (thumb + gap_x) + 8, li * (thumb + gap_y) + 8)
    page_w = max(x + thumb + 16 for x, _ in positions.values())
    page_h = max(y + thumb + gap_y for _, y in positions.values())

    node_divs = []
    for bits, node in sorted(graph.nodes.items()):
        ps = PatchSet(grid, bits)
        png = base64.b64encode(_png_bytes(render_node_image(image, ps))).decode("ascii")
        x, y = positions[bits]
        classes = "node root" if node.is_root else "node"
        node_divs.append(
            f'<div class="{classes}" data-id="{bits}" '
            f'style="left:{x}px;top:{y}px;">'
            f'<img src="data:image/png;base64,{png}" alt="node {bits}"/>'
            f'<div class="conf">{node.confidence:.0%}</div></div>'
        )

    svg_edges = []
    for e in sorted(graph.edges, key=lambda e: (e.parent, e.child, e.removed_patch)):
        x1, y1 = positions[e.parent]
        x2, y2 = positions[e.child]
        svg_edges.append(
            f'<line x1="{x1 + thumb // 2}" y1="{y1 + thumb + 22}" '
            f'x2="{x2 + thumb // 2}" y2="{y2}" stroke="#999"/>'
        )

    highlight = {str(bits): reachability(graph, bits) for bits in sorted(graph.nodes)}
    html = _HTML_TEMPLATE.format(
        page_w=page_w,
        page_h=page_h,
        thumb=thumb,
        class_index=graph.class_index,
        base=graph.base_confidence,
        svg_edges="\n".join(svg_edges),
        node_divs="\n".join(node_divs),
        highlight_json=json.dumps(highlight, sort_keys=True),
    )
    Path(path).write_text(html)
