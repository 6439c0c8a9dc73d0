"""Command line interface: `search`, `export` and `stats` subcommands.

All commands score images through a model server (``--endpoint`` or the
SAG_MODEL_ENDPOINT environment variable) speaking the /v1/meta + /v1/classify
protocol; images are resized client-side to the server's declared input size
so perturbation happens at exactly the resolution the model sees.
"""

from __future__ import annotations

import json
from pathlib import Path

import click

from .attention import attention_for
from .classifiers import EvalCache, target_class
from .diversity import select_diverse
from .export import export_dot, export_html, export_json
from .harness import default_methods, run_corpus
from .imaging import PatchGrid, PatchSet, PerturbationMode, load_image, resize_image
from .remote import RemoteClassifier, resolve_endpoint
from .sag import build_sag
from .search import MseRecord, SearchConfig, beam_search, combinatorial_search


def _mode_option(mode: str, blur_sigma: float) -> PerturbationMode:
    return (
        PerturbationMode.black() if mode == "black" else PerturbationMode.blur(blur_sigma)
    )


def _load_for_server(image_path: str, classifier: RemoteClassifier):
    image = load_image(image_path)
    meta = classifier.metadata
    return resize_image(image, meta.input_height, meta.input_width)


def _config_from_flags(method, k, w, q, m, ph, mode, blur_sigma) -> SearchConfig:
    return SearchConfig(
        p_h=ph, k=k, w=w, q=q, m=m, mode=_mode_option(mode, blur_sigma)
    )


@click.group()
def main():
    """Find minimal sufficient explanations and build structured attention
    graphs for a served black-box image classifier."""


@main.command()
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--method", type=click.Choice(["comb", "beam"]), default="beam")
@click.option("--k", default=2, show_default=True, help="Subset size for comb search.")
@click.option("--w", default=15, show_default=True, help="Beam width.")
@click.option("--q", default=15, show_default=True, help="Successors per state.")
@click.option("--m", default=10, show_default=True, help="Attention pool size.")
@click.option("--ph", default=0.9, show_default=True, help="Sufficiency fraction P_h.")
@click.option("--mode", type=click.Choice(["black", "blur"]), default="black")
@click.option("--blur-sigma", default=10.0, show_default=True)
@click.option("--attention", "attention_path", type=click.Path(exists=True),
              default=None, help="External heatmap (CSV or grayscale image); "
              "occlusion fallback when omitted.")
@click.option("--class", "class_index", type=int, default=None,
              help="Target class index; defaults to the model's argmax.")
@click.option("--endpoint", default=None, help="Model server URL.")
@click.option("--timeout", default=30.0, show_default=True,
              help="Server request timeout in seconds.")
@click.option("--out", "out_path", required=True, type=click.Path())
def search(image_path, method, k, w, q, m, ph, mode, blur_sigma, attention_path,
           class_index, endpoint, timeout, out_path):
    """Search one image for minimal sufficient explanations."""
    classifier = RemoteClassifier(resolve_endpoint(endpoint), timeout=timeout)
    image = _load_for_server(image_path, classifier)
    config = _config_from_flags(method, k, w, q, m, ph, mode, blur_sigma)
    cache = EvalCache(classifier)
    grid = PatchGrid(config.r, image.shape[0], image.shape[1])
    if class_index is None:
        class_index = target_class(classifier, image)
    attention = attention_for(
        image, grid, attention_path, classifier, class_index, config.mode, cache
    )
    if method == "beam":
        records = beam_search(image, attention, class_index, config, cache)
    else:
        records = combinatorial_search(image, attention, class_index, config, cache)
    base = records[0].base_confidence if records else None
    document = {
        "image": str(image_path),
        "input_height": image.shape[0],
        "input_width": image.shape[1],
        "class_index": class_index,
        "method": method,
        "config": {
            "p_h": config.p_h, "r": config.r, "m": config.m, "k": config.k,
            "w": config.w, "q": config.q, "mode": str(config.mode),
            "p_l": config.p_l, "c": config.c,
        },
        "base_confidence": base,
        "records": [
            {
                "patches": list(rec.patch_set.indices()),
                "confidence": rec.confidence,
                "base_confidence": rec.base_confidence,
                "minimal": rec.minimal,
            }
            for rec in records
        ],
        "classifier_calls": cache.evaluations,
    }
    Path(out_path).write_text(json.dumps(document, indent=2) + "\n")
    click.echo(f"{len(records)} minimal sufficient explanation(s) -> {out_path}")


@main.command("export")
@click.option("--results", "results_path", required=True, type=click.Path(exists=True),
              help="Output file of the `search` subcommand.")
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--format", "fmt", type=click.Choice(["json", "dot", "html"]),
              default="json", show_default=True)
@click.option("--c", default=3, show_default=True, help="Diverse roots to keep.")
@click.option("--pl", default=0.4, show_default=True, help="Expansion floor P_l.")
@click.option("--endpoint", default=None, help="Model server URL.")
@click.option("--timeout", default=30.0, show_default=True,
              help="Server request timeout in seconds.")
@click.option("--out", "out_path", required=True, type=click.Path())
def export_cmd(results_path, image_path, fmt, c, pl, endpoint, timeout, out_path):
    """Build the structured attention graph for saved search results and
    export it as structured JSON, DOT + node images, or a static HTML page."""
    document = json.loads(Path(results_path).read_text())
    if not document["records"]:
        raise click.ClickException("no explanations in results file; nothing to export")
    classifier = RemoteClassifier(resolve_endpoint(endpoint), timeout=timeout)
    image = _load_for_server(image_path, classifier)
    cfg = document["config"]
    config = SearchConfig(
        p_h=cfg["p_h"], r=cfg["r"], m=cfg["m"], k=cfg["k"], w=cfg["w"], q=cfg["q"],
        mode=PerturbationMode.parse(cfg["mode"]), p_l=pl, c=c,
    )
    grid = PatchGrid(config.r, image.shape[0], image.shape[1])
    records = [
        MseRecord(
            PatchSet.from_indices(grid, rec["patches"]),
            rec["confidence"],
            rec["base_confidence"],
            rec["minimal"],
        )
        for rec in document["records"]
        if rec["minimal"]
    ]
    cache = EvalCache(classifier)
    selection = select_diverse(records, c)
    graph = build_sag(image, selection, document["class_index"], config, cache)
    out = Path(out_path)
    if fmt == "json":
        export_json(graph, out)
    elif fmt == "dot":
        export_dot(graph, image, out)
    else:
        export_html(graph, image, out)
    click.echo(
        f"graph with {len(graph.nodes)} nodes / {len(graph.edges)} edges -> {out}"
    )


@main.command()
@click.option("--images", "image_dir", required=True, type=click.Path(exists=True))
@click.option("--methods", default="comb,beam", show_default=True,
              help="Comma-separated subset of {comb,beam}.")
@click.option("--widths", default="3,15", show_default=True,
              help="Beam widths, comma-separated.")
@click.option("--overlap-levels", default="0,1", show_default=True,
              help="Diversity-count columns to report, comma-separated.")
@click.option("--mode", type=click.Choice(["black", "blur"]), default="black")
@click.option("--blur-sigma", default=10.0, show_default=True)
@click.option("--endpoint", default=None, help="Model server URL.")
@click.option("--timeout", default=30.0, show_default=True,
              help="Server request timeout in seconds.")
@click.option("--limit", type=int, default=None, help="Cap the corpus size.")
@click.option("--workers", default=1, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def stats(image_dir, methods, widths, overlap_levels, mode, blur_sigma, endpoint,
          timeout, limit, workers, out_dir):
    """Corpus statistics: coverage curves, diversity counts, timings."""
    classifier = RemoteClassifier(resolve_endpoint(endpoint), timeout=timeout)
    mode_obj = _mode_option(mode, blur_sigma)
    kinds = {m.strip() for m in methods.split(",") if m.strip()}
    width_list = [int(w) for w in widths.split(",") if w.strip()]
    specs = default_methods(
        widths=width_list if "beam" in kinds else (),
        comb="comb" in kinds,
        mode=mode_obj,
    )
    if not specs:
        raise click.ClickException("no methods selected")

    def classifier_for(path):
        return classifier

    # Corpus images must match the server's declared input size; resize once
    # into a staging directory so every method sees identical pixels.
    staged = Path(out_dir) / "resized"
    staged.mkdir(parents=True, exist_ok=True)
    from .harness import list_corpus
    from .imaging import save_image

    meta = classifier.metadata
    for path in list_corpus(image_dir)[: limit if limit else None]:
        img = resize_image(load_image(path), meta.input_height, meta.input_width)
        save_image(img, staged / (path.stem + ".png"))

    levels = tuple(int(v) for v in overlap_levels.split(",") if v.strip())
    results = run_corpus(
        staged, specs, classifier, out_dir, workers=workers, limit=limit,
        overlap_levels=levels,
    )
    click.echo(f"{len(results)} (image, method) rows -> {out_dir}")


if __name__ == "__main__":
    main()
