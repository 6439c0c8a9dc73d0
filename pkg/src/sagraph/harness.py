"""Corpus-scale driver: MSE size coverage, diversity statistics, perturbation
comparison and timing accounting, written as versioned CSVs plus rendered
coverage figures.
"""

from __future__ import annotations

import csv
import time
import traceback
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .attention import occlusion_attention
from .classifiers import Classifier, EvalCache, target_class
from .diversity import count_diverse, select_diverse
from .export import export_json
from .imaging import PatchGrid, load_image
from .sag import build_sag
from .search import MseRecord, SearchConfig, beam_search, combinatorial_search

CSV_SCHEMA_VERSION = "sagraph-stats v1"
IMAGE_SUFFIXES = (".png", ".bmp", ".jpg", ".jpeg")


@dataclass(frozen=True)
class MethodSpec:
    """One column of the experiment matrix: a labeled search configuration."""

    label: str
    kind: str  # "beam" or "comb"
    config: SearchConfig

    def __post_init__(self):
        if self.kind not in ("beam", "comb"):
            raise ValueError(f"unknown search kind {self.kind!r}")


@dataclass
class ImageResult:
    image_id: str
    method: str
    min_mse_size: int | None
    diverse_counts: dict[int, int]  # overlap level -> diverse-MSE count
    find_seconds: float
    build_seconds: float
    classifier_calls: int


def default_methods(
    widths=(3, 15), comb=True, mode=None, k_max: int | None = None
) -> list[MethodSpec]:
    methods = []
    base = SearchConfig() if mode is None else SearchConfig(mode=mode)
    if comb:
        methods.append(MethodSpec("CombS", "comb", base))
    for w in widths:
        methods.append(MethodSpec(f"BeamS-{w}", "beam", replace(base, w=w)))
    return methods


def find_mses(
    image, classifier: Classifier, spec: MethodSpec, cache: EvalCache
) -> tuple[list[MseRecord], int]:
    """Run one method on one image; returns (records, class index).

    CombS sweeps k upward and pools every minimal record found, since the
    corpus statistics need the minimum explanation size, not one fixed k.
    """
    grid = PatchGrid(spec.config.r, image.shape[0], image.shape[1])
    cls = target_class(classifier, image)
    attention = occlusion_attention(
        classifier, image, cls, spec.config.mode, cache, grid
    )
    if spec.kind == "beam":
        return beam_search(image, attention, cls, spec.config, cache), cls
    pooled: dict[int, MseRecord] = {}
    for k in range(1, spec.config.m):
        records = combinatorial_search(
            image, attention, cls, replace(spec.config, k=k), cache
        )
        for record in records:
            pooled.setdefault(record.patch_set.bits, record)
    return sorted(pooled.values(), key=MseRecord.sort_key), cls


def _process_image(
    path: Path,
    classifier: Classifier,
    spec: MethodSpec,
    sag_dir: Path | None,
    overlap_levels: tuple[int, ...],
) -> ImageResult:
    image = load_image(path)
    cache = EvalCache(classifier)
    t0 = time.perf_counter()
    records, cls = find_mses(image, classifier, spec, cache)
    find_seconds = time.perf_counter() - t0

    t1 = time.perf_counter()
    build_seconds = 0.0
    if records:
        selection = select_diverse(records, spec.config.c)
        graph = build_sag(image, selection, cls, spec.config, cache)
        if sag_dir is not None:
            export_json(graph, sag_dir / f"{path.stem}__{spec.label}.json")
        build_seconds = time.perf_counter() - t1

    return ImageResult(
        image_id=path.name,
        method=spec.label,
        min_mse_size=min((len(r.patch_set) for r in records), default=None),
        diverse_counts={ov: count_diverse(records, ov) for ov in overlap_levels},
        find_seconds=find_seconds,
        build_seconds=build_seconds,
        classifier_calls=cache.evaluations,
    )


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {CSV_SCHEMA_VERSION}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _mode_stat(values: list[int]) -> int | None:
    if not values:
        return None
    counts = Counter(values)
    best = max(counts.values())
    return min(v for v, n in counts.items() if n == best)


def _variance(values) -> float:
    if not values:
        return 0.0
    mean = sum(values) / len(values)
    return sum((v - mean) ** 2 for v in values) / len(values)


def coverage_curve(results: list[ImageResult], r: int) -> list[tuple[int, int]]:
    """Cumulative number of images whose minimum MSE size is <= k."""
    sizes = [res.min_mse_size for res in results if res.min_mse_size is not None]
    return [(k, sum(1 for s in sizes if s <= k)) for k in range(1, r * r + 1)]


def _plot_coverage(curves: dict[str, list[tuple[int, int]]], total: int, path: Path):
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, curve in curves.items():
        ks = [k for k, _ in curve]
        frac = [100.0 * n / total if total else 0.0 for _, n in curve]
        ax.plot(ks, frac, label=label)
    ax.set_xlabel("number of patches")
    ax.set_ylabel("% images explained")
    ax.set_ylim(0, 100)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def list_corpus(image_dir) -> list[Path]:
    return sorted(
        p for p in Path(image_dir).iterdir()
        if p.suffix.lower() in IMAGE_SUFFIXES and p.is_file()
    )


def run_corpus(
    image_dir,
    methods: list[MethodSpec],
    classifier,
    out_dir,
    workers: int = 1,
    limit: int | None = None,
    export_sags: bool = True,
    overlap_levels: tuple[int, ...] = (0, 1),
) -> list[ImageResult]:
    """Per-image searches + aggregate reports for every method in the matrix.

    `classifier` is either a Classifier or a callable mapping an image path to
    one (the latter lets synthetic ground-truth corpora vary per image).
    Per-image failures are logged to errors.csv and skipped.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sag_dir = out_dir / "sags" if export_sags else None
    if sag_dir is not None:
        sag_dir.mkdir(exist_ok=True)
    paths = list_corpus(image_dir)
    if limit is not None:
        paths = paths[:limit]
    overlap_levels = tuple(sorted(set(overlap_levels)))

    classifier_for = classifier if callable(classifier) else (lambda _path: classifier)

    results: list[ImageResult] = []
    errors: list[tuple[str, str, str]] = []

    def work(path: Path, spec: MethodSpec):
        return _process_image(path, classifier_for(path), spec, sag_dir, overlap_levels)

    jobs = [(path, spec) for path in paths for spec in methods]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(work, p, s): (p, s) for p, s in jobs}
            for future, (path, spec) in futures.items():
                try:
                    results.append(future.result())
                except Exception as exc:
                    errors.append((path.name, spec.label, repr(exc)))
    else:
        for path, spec in jobs:
            try:
                results.append(work(path, spec))
            except Exception as exc:
                errors.append((path.name, spec.label, repr(exc)))

    results.sort(key=lambda r: (r.image_id, r.method))
    overlap_columns = [f"diverse_overlap{ov}" for ov in overlap_levels]
    _write_csv(
        out_dir / "per_image.csv",
        ["image_id", "method", "min_mse_size", *overlap_columns,
         "find_seconds", "build_seconds", "classifier_calls"],
        [
            [
                r.image_id, r.method,
                "" if r.min_mse_size is None else r.min_mse_size,
                *[r.diverse_counts[ov] for ov in overlap_levels],
                f"{r.find_seconds:.4f}", f"{r.build_seconds:.4f}",
                r.classifier_calls,
            ]
            for r in results
        ],
    )

    r_side = methods[0].config.r if methods else 7
    total = len(paths)
    curves: dict[str, list[tuple[int, int]]] = {}
    coverage_rows = []
    for spec in methods:
        sub = [res for res in results if res.method == spec.label]
        curve = coverage_curve(sub, r_side)
        curves[spec.label] = curve
        for k, n in curve:
            coverage_rows.append(
                [spec.label, k, n, f"{n / total:.4f}" if total else ""]
            )
    _write_csv(
        out_dir / "coverage.csv",
        ["method", "size", "images_covered", "fraction"],
        coverage_rows,
    )

    diversity_rows = []
    for spec in methods:
        sub = [res for res in results if res.method == spec.label]
        for overlap in overlap_levels:
            incl = [r.diverse_counts[overlap] for r in sub]
            excl = [v for v in incl if v > 0]
            diversity_rows.append([
                spec.label, overlap,
                f"{sum(incl) / len(incl):.4f}" if incl else "",
                f"{_variance(incl):.4f}" if incl else "",
                _mode_stat(incl) if incl else "",
                f"{sum(excl) / len(excl):.4f}" if excl else "",
                f"{_variance(excl):.4f}" if excl else "",
                _mode_stat(excl) if excl else "",
            ])
    _write_csv(
        out_dir / "diversity_stats.csv",
        [
            "method", "overlap",
            "mean_incl_zero", "variance_incl_zero", "mode_incl_zero",
            "mean_excl_zero", "variance_excl_zero", "mode_excl_zero",
        ],
        diversity_rows,
    )

    timing_rows = []
    for spec in methods:
        sub = [res for res in results if res.method == spec.label]
        finds = [res.find_seconds for res in sub]
        builds = [res.find_seconds + res.build_seconds for res in sub]
        if finds:
            timing_rows.append([
                spec.label,
                f"{sum(finds) / len(finds):.4f}",
                f"{_variance(finds):.6f}",
                f"{sum(builds) / len(builds):.4f}",
                f"{_variance(builds):.6f}",
            ])
    _write_csv(
        out_dir / "timing_stats.csv",
        ["method", "find_mean_s", "find_variance", "build_mean_s", "build_variance"],
        timing_rows,
    )

    if errors:
        _write_csv(out_dir / "errors.csv", ["image_id", "method", "error"], list(errors))
    if total and curves:
        _plot_coverage(curves, total, out_dir / "coverage.png")
    return results


def compare_perturbation(
    image_dir,
    classifier,
    out_dir,
    spec: MethodSpec | None = None,
    limit: int | None = None,
) -> dict[str, list[tuple[int, int]]]:
    """Identical search per image under black and blur perturbation; paired
    coverage curves as CSV + figure."""
    from .imaging import PerturbationMode

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base_spec = spec or MethodSpec("BeamS-15", "beam", SearchConfig(w=15))
    paths = list_corpus(image_dir)
    if limit is not None:
        paths = paths[:limit]
    classifier_for = classifier if callable(classifier) else (lambda _path: classifier)

    curves: dict[str, list[tuple[int, int]]] = {}
    per_mode_results: dict[str, list[ImageResult]] = {}
    for mode_name, mode in (("black", PerturbationMode.black()),
                            ("blur", PerturbationMode.blur())):
        mode_spec = replace(base_spec, config=replace(base_spec.config, mode=mode))
        mode_results = []
        for path in paths:
            try:
                mode_results.append(
                    _process_image(path, classifier_for(path), mode_spec, None, (0, 1))
                )
            except Exception:
                traceback.print_exc()
        per_mode_results[mode_name] = mode_results
        curves[mode_name] = coverage_curve(mode_results, base_spec.config.r)

    rows = []
    for (k, black_n), (_, blur_n) in zip(curves["black"], curves["blur"]):
        rows.append([base_spec.label, k, black_n, blur_n])
    _write_csv(
        out_dir / "perturbation_comparison.csv",
        ["method", "size", "black_images_covered", "blur_images_covered"],
        rows,
    )
    if paths:
        _plot_coverage(curves, len(paths), out_dir / "perturbation_comparison.png")
    return curves
