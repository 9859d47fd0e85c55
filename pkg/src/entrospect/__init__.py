"""Line-level fault localization that fuses spectrum-based suspiciousness
metrics with statistical language model entropy features."""

from .errors import DataError, EntrospectError, InternalError, TokenizeError, UsageError
from .evaluation import (
    CECurve,
    StatResult,
    aucec,
    ce_curve,
    cohens_d,
    cross_project_split,
    gain,
    overall_gain,
    rank_sum_test,
    welch_t_test,
)
from .forest import (
    ForestModel,
    ForestParams,
    LabeledInstance,
    RankedReport,
    hybrid_scores,
    hybrid_suspiciousness,
    label_lines,
    rank_lines,
    train_forest,
    undersample,
)
from .ngram import (
    CacheState,
    LineEntropy,
    NgramModel,
    TypeStats,
    compute_type_stats,
    file_entropies,
    line_entropies,
    train_ngram,
    zscore_normalize,
)
from .spectra import (
    METRIC_NAMES,
    SpectraGroup,
    SpectraMatrix,
    TestTrace,
    group_by_spectra,
    ingest_coverage,
    suspiciousness_vector,
)
from .tokens import LineRecord, LineType, Token, TokenKind, classify_line_type, tokenize

__version__ = "0.1.0"

__all__ = [
    "CECurve",
    "CacheState",
    "DataError",
    "EntrospectError",
    "ForestModel",
    "ForestParams",
    "InternalError",
    "LabeledInstance",
    "LineEntropy",
    "LineRecord",
    "LineType",
    "METRIC_NAMES",
    "NgramModel",
    "RankedReport",
    "SpectraGroup",
    "SpectraMatrix",
    "StatResult",
    "TestTrace",
    "Token",
    "TokenKind",
    "TokenizeError",
    "TypeStats",
    "UsageError",
    "aucec",
    "ce_curve",
    "classify_line_type",
    "cohens_d",
    "compute_type_stats",
    "cross_project_split",
    "file_entropies",
    "gain",
    "group_by_spectra",
    "hybrid_scores",
    "hybrid_suspiciousness",
    "ingest_coverage",
    "label_lines",
    "line_entropies",
    "overall_gain",
    "rank_lines",
    "rank_sum_test",
    "suspiciousness_vector",
    "tokenize",
    "train_forest",
    "train_ngram",
    "undersample",
    "welch_t_test",
    "zscore_normalize",
]
