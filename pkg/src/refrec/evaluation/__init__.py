from .metrics import (
    CorpusReport, MatchCounts, RefScore, choice_distribution, evaluate_system, f1_of, field_counter,
    match_fields, normalize_value, score_counts, score_reference, type_correct,
)
from .stats import TTestResult, betainc, paired_ttest, t_cdf, t_sf_two_sided

__all__ = [
    "CorpusReport", "MatchCounts", "RefScore", "choice_distribution", "evaluate_system", "f1_of",
    "field_counter", "match_fields", "normalize_value", "score_counts", "score_reference", "type_correct",
    "TTestResult", "betainc", "paired_ttest", "t_cdf", "t_sf_two_sided",
]
