"""Attentive long- and short-term preference modeling for personalized product search.

Thin wrappers over the C++ pipeline; every stage reads and writes the same
on-disk directories as the ``alstp`` command-line tool.
"""

from ._alstp import (
    Error,
    aggregate,
    attention,
    baseline,
    default_config,
    embed,
    evaluate,
    hit_ratio,
    ndcg,
    paired_ttest,
    preprocess,
    reciprocal_rank,
    search,
    set_log_level,
    significance,
    synthesize,
    train,
    variants,
)

__all__ = [
    "Error",
    "aggregate",
    "attention",
    "baseline",
    "default_config",
    "embed",
    "evaluate",
    "hit_ratio",
    "ndcg",
    "paired_ttest",
    "preprocess",
    "reciprocal_rank",
    "search",
    "set_log_level",
    "significance",
    "synthesize",
    "train",
    "variants",
]
