"""Python bindings for the casejudge core."""

from ._core import (
    Bm25Index,
    CasejudgeError,
    aggregate_label,
    cohens_kappa,
    confusion_matrix,
    gold_fact_flags,
    label_quotas,
    mock_judge_pair,
    ndcg_at_k,
    reliability_kappa,
    run_cli,
    sample_pairs,
    tokenize,
)

__all__ = [
    "Bm25Index",
    "CasejudgeError",
    "aggregate_label",
    "cohens_kappa",
    "confusion_matrix",
    "gold_fact_flags",
    "label_quotas",
    "mock_judge_pair",
    "ndcg_at_k",
    "reliability_kappa",
    "run_cli",
    "sample_pairs",
    "tokenize",
]
