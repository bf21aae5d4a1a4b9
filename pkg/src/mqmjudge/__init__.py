"""MQM judge toolkit.

Run LLM/LRM judges for machine-translation quality under the MQM
framework, convert their free-form outputs into calibrated scores,
meta-evaluate those scores against human annotations, attribute the
contribution of evaluation materials, analyze reasoning cost, and
synthesize thinking-trajectory training data.
"""

from .attribution import AttributionInput, AttributionResult, shapley_mt
from .analytics import (
    BudgetProfile,
    BudgetStats,
    DifficultyBin,
    DistributionReport,
    budget_by_difficulty,
    discrepancy_typology,
    distribution_report,
    thinking_budget,
)
from .client import DecodeParams, EndpointConfig, request_judgment, run_batch
from .errors import ConfigError, DataError, EndpointError, MqmJudgeError, ParseError
from .metaeval import (
    MetaReport,
    PairwisePValueMatrix,
    TestConfig,
    WinTieLoss,
    kendall_tau_b,
    meta_report,
    metric_significance,
    pairwise_p_matrix,
    pairwise_p_value,
    pearson,
    rank_correlations,
    segment_pairs,
    soft_pairwise_accuracy,
    tie_calibrated_accuracy,
    win_tie_loss,
)
from .parsing import (
    ParsedJudgment,
    ScoreScale,
    Strictness,
    ThinkSplit,
    parse_direct_score,
    parse_error_spans,
    split_think_answer,
)
from .prompts import (
    DemoExample,
    PromptTemplate,
    RenderedPrompt,
    build_judge_prompt,
    build_rescoring_prompt,
    default_demos,
)
from .scoring import (
    ALT321_WEIGHTS,
    DEFAULT_WEIGHTS,
    MqmScore,
    WeightScheme,
    aggregate_rater_scores,
    rescore_matrix,
    score_annotation,
)
from .trajectories import (
    TrainingInstance,
    balance_dataset,
    synthesize_trajectory,
    validate_instance,
)
from .types import (
    ErrorAnnotation,
    ErrorSpan,
    ItemKey,
    JudgeRecord,
    MaterialsMode,
    ScoreMatrix,
    Segment,
    SegmentKey,
    Severity,
    TokenUsage,
    build_score_matrix,
    normalize_category,
)

__version__ = "0.1.0"
