from .ablation import VARIANTS, AblationTable, ablation_harness
from .bench import BenchReport, attention_memory, latency_bench, synthetic_inputs
from ..metrics import TOPK, TopKReport, label_ranks, topk_accuracy, topk_hits
from .mlm import extract_cls_embeddings, mlm_eval, read_embeddings_csv, write_embeddings_csv
from .projection import (ProjectionResult, conditional_affinities, knn_purity, pca,
                         pca_projection, tsne)

__all__ = [
    "VARIANTS", "AblationTable", "BenchReport", "ProjectionResult", "TOPK", "TopKReport",
    "ablation_harness", "attention_memory", "conditional_affinities", "extract_cls_embeddings",
    "knn_purity", "label_ranks", "latency_bench", "mlm_eval", "pca", "pca_projection",
    "read_embeddings_csv", "synthetic_inputs", "topk_accuracy", "topk_hits", "tsne",
    "write_embeddings_csv",
]
