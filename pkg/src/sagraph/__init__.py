"""Minimal sufficient explanations and structured attention graphs for
black-box image classifiers."""

from .attention import CoarseAttention, occlusion_attention, pool_attention
from .classifiers import (
    Classifier,
    ConstantClassifier,
    EvalCache,
    Evaluator,
    SyntheticMonotoneDnf,
    set_confidence,
    target_class,
)
from .diversity import DiverseSelection, count_diverse, select_diverse
from .export import export_dot, export_html, export_json, load_json
from .imaging import (
    PatchGrid,
    PatchSet,
    PerturbationMode,
    load_image,
    make_baseline,
    perturb,
    save_image,
    save_mask,
    upsample_mask,
)
from .remote import ProtocolError, RemoteClassifier, TransportError, fetch_metadata
from .sag import SagGraph, SagNode, build_sag, node_importance
from .search import (
    BeamTrace,
    MseRecord,
    SearchConfig,
    beam_search,
    check_minimal,
    combinatorial_search,
    is_sufficient,
    make_context,
)

__version__ = "0.1.0"
