"""Links attack descriptions to CVEs.

Ground truth comes from explicit-link chains in the corpus; predictions come
from embedding similarity with a top-k cut and a threshold on the 0-100 scale.
"""

from ._core import (
    Corpus,
    EmbeddingStore,
    Service,
    VulnlinkError,
    annotate,
    annotate_all,
    clean_text,
    cosine,
    extract_cve_ids,
    f1_score,
    overlap,
    pr_sweep,
    predict,
    prf,
    roc_sweep,
    run_stage,
    test_embed,
    topk_sweep,
)

STAGES = ("ingest", "annotate", "embed", "predict", "calibrate", "evaluate", "news")


def run_pipeline(corpus, out, stages=STAGES, **config):
    """Run the given stages in order and return their summaries."""
    if isinstance(corpus, str):
        corpus = [corpus]
    return [run_stage(stage, corpus, out, **config) for stage in stages]


__all__ = [
    "Corpus",
    "EmbeddingStore",
    "STAGES",
    "Service",
    "VulnlinkError",
    "annotate",
    "annotate_all",
    "clean_text",
    "cosine",
    "extract_cve_ids",
    "f1_score",
    "overlap",
    "pr_sweep",
    "predict",
    "prf",
    "roc_sweep",
    "run_pipeline",
    "run_stage",
    "test_embed",
    "topk_sweep",
]
