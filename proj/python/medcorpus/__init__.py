from ._medcorpus import (
    DataError,
    Error,
    TrialContext,
    TrialPruned,
    UsageError,
    Vocabulary,
    anonymize,
    auroc,
    build_vocab,
    clean,
    corpus_stats,
    cosine_similarity,
    dedup,
    detect_dates,
    fertility,
    load_documents,
    multilabel_report,
    pretrain_config,
    prf,
    run_pipeline,
    run_study,
    stratified_split,
)

__all__ = [
    "DataError",
    "Error",
    "TrialContext",
    "TrialPruned",
    "UsageError",
    "Vocabulary",
    "anonymize",
    "auroc",
    "build_vocab",
    "clean",
    "corpus_stats",
    "cosine_similarity",
    "dedup",
    "detect_dates",
    "fertility",
    "load_documents",
    "multilabel_report",
    "pretrain_config",
    "prf",
    "run_pipeline",
    "run_study",
    "stratified_split",
]
