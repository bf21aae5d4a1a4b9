"""Reasoning-cost and score-behavior diagnostics for judge runs.

Covers thinking-budget measurement (token and turn counts), budget
profiles conditioned on evaluation difficulty and human alignment,
score-distribution / overestimation reports, and error-typology
discrepancy tallies between judge and human annotations.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError
from .types import ErrorAnnotation, JudgeRecord, ScoreMatrix, SegmentKey

_TURN_SPLIT_RE = re.compile(r"\n\s*\n")

TokenCounter = Callable[[str], int]


def whitespace_tokens(text: str) -> int:
    return len(text.split())


@dataclass(frozen=True)
class BudgetStats:
    """Thinking cost of one judge record."""

    tokens: int
    turns: int
    chars: int


def thinking_budget(record: JudgeRecord, token_counter: TokenCounter = whitespace_tokens) -> BudgetStats:
    """Measure the thinking budget of one record.

    Tokens default to a whitespace proxy over the think text; an
    endpoint-reported completion-token count takes precedence when present.
    Turns count the non-empty blank-line-delimited sections of the think
    text. A record without think text costs (0, 0, 0) regardless of usage.
    """
    think = record.think or ""
    if not think.strip():
        return BudgetStats(tokens=0, turns=0, chars=0)
    if record.usage is not None:
        tokens = int(record.usage.completion_tokens)
    else:
        tokens = int(token_counter(think))
    turns = len([part for part in _TURN_SPLIT_RE.split(think) if part.strip()])
    return BudgetStats(tokens=tokens, turns=turns, chars=len(think))


@dataclass(frozen=True)
class DifficultyBin:
    """One human-score interval; bounds are explicit about closedness."""

    label: str
    lower: float
    upper: float
    closed_lower: bool = True
    closed_upper: bool = False

    def contains(self, x: float) -> bool:
        lo = x >= self.lower if self.closed_lower else x > self.lower
        hi = x <= self.upper if self.closed_upper else x < self.upper
        return lo and hi


# Natural severity breakpoints of the scoring rubric; bin {0} holds the
# no-error instances.
DEFAULT_DIFFICULTY_BINS = (
    DifficultyBin("0", 0.0, 0.0, closed_lower=True, closed_upper=True),
    DifficultyBin("[-1,0)", -1.0, 0.0),
    DifficultyBin("[-5,-1)", -5.0, -1.0),
    DifficultyBin("[-25,-5)", -25.0, -5.0),
    DifficultyBin("(-inf,-25)", -math.inf, -25.0, closed_lower=False),
)


def assign_bin(score: float, bins: Sequence[DifficultyBin]) -> DifficultyBin:
    for b in bins:
        if b.contains(score):
            return b
    raise DataError(f"score {score} falls outside every difficulty bin")


@dataclass(frozen=True)
class FiveNumber:
    """Min / quartile / median summary of one cell, plot-ready."""

    count: int
    minimum: float | None = None
    q1: float | None = None
    median: float | None = None
    q3: float | None = None
    maximum: float | None = None

    @classmethod
    def of(cls, values: Sequence[float]) -> "FiveNumber":
        if not values:
            return cls(count=0)
        arr = np.asarray(values, dtype=np.float64)
        q1, med, q3 = np.percentile(arr, [25, 50, 75])
        return cls(
            count=int(arr.size),
            minimum=float(arr.min()),
            q1=float(q1),
            median=float(med),
            q3=float(q3),
            maximum=float(arr.max()),
        )


ALIGNED = "aligned"
MISALIGNED = "misaligned"


@dataclass(frozen=True)
class BudgetProfile:
    """Token five-number summaries per (difficulty bin, alignment tag)."""

    bins: tuple[DifficultyBin, ...]
    tau: float
    cells: Mapping[tuple[str, str], FiveNumber]

    def cell(self, bin_label: str, tag: str) -> FiveNumber:
        return self.cells[(bin_label, tag)]


def budget_by_difficulty(
    items: Iterable[tuple[JudgeRecord, float, float]],
    bins: Sequence[DifficultyBin] = DEFAULT_DIFFICULTY_BINS,
    tau: float = 1.0,
    token_counter: TokenCounter = whitespace_tokens,
) -> BudgetProfile:
    """Profile thinking tokens by difficulty and human alignment.

    ``items`` yields (record, model score, human score). A record is
    aligned when |model - human| <= tau. Empty (bin, tag) cells are
    emitted with a zero count rather than dropped.
    """
    if tau <= 0:
        raise DataError("alignment tolerance tau must be > 0")
    buckets: dict[tuple[str, str], list[float]] = {
        (b.label, tag): [] for b in bins for tag in (ALIGNED, MISALIGNED)
    }
    for record, model_score, human_score in items:
        stats = thinking_budget(record, token_counter)
        tag = ALIGNED if abs(model_score - human_score) <= tau else MISALIGNED
        b = assign_bin(human_score, bins)
        buckets[(b.label, tag)].append(float(stats.tokens))
    cells = {key: FiveNumber.of(vals) for key, vals in buckets.items()}
    return BudgetProfile(bins=tuple(bins), tau=tau, cells=cells)


@dataclass(frozen=True)
class DistributionReport:
    """Score histograms for metric vs human plus the zero-rate gap.

    ``overestimation_index`` = human zero-rate - metric zero-rate; positive
    means the metric assigns error penalties to translations humans scored
    as error-free.
    """

    bin_edges: tuple[float, ...]
    human_density: tuple[float, ...]
    metric_density: tuple[float, ...]
    human_zero_rate: float
    metric_zero_rate: float
    overestimation_index: float
    n_cells: int


DEFAULT_SCORE_EDGES = (-50.0, -25.0, -15.0, -10.0, -5.0, -3.0, -2.0, -1.0, -0.5, 0.0)


def distribution_report(
    metric: ScoreMatrix,
    human: ScoreMatrix,
    bin_edges: Sequence[float] = DEFAULT_SCORE_EDGES,
) -> DistributionReport:
    """Compare score distributions of aligned metric and human matrices."""
    if metric.systems != human.systems or metric.segments != human.segments:
        raise DataError("matrices must share systems and segments")
    both = ~(np.isnan(metric.values) | np.isnan(human.values))
    if not both.any():
        raise DataError("no jointly scored cells")
    m_vals = metric.values[both]
    h_vals = human.values[both]

    edges = np.asarray(sorted(set(bin_edges)), dtype=np.float64)
    lo = float(min(m_vals.min(), h_vals.min(), edges[0]))
    hi = float(max(m_vals.max(), h_vals.max(), edges[-1]))
    if lo < edges[0]:
        edges = np.concatenate([[lo], edges])
    if hi > edges[-1]:
        edges = np.concatenate([edges, [hi]])

    def density(vals: np.ndarray) -> tuple[float, ...]:
        counts, _ = np.histogram(vals, bins=edges)
        return tuple(float(c) / vals.size for c in counts)

    m_zero = float(np.count_nonzero(m_vals == 0.0)) / m_vals.size
    h_zero = float(np.count_nonzero(h_vals == 0.0)) / h_vals.size
    return DistributionReport(
        bin_edges=tuple(float(e) for e in edges),
        human_density=density(h_vals),
        metric_density=density(m_vals),
        human_zero_rate=h_zero,
        metric_zero_rate=m_zero,
        overestimation_index=h_zero - m_zero,
        n_cells=int(m_vals.size),
    )


def discrepancy_typology(
    judge: Mapping[SegmentKey, ErrorAnnotation],
    human: Mapping[SegmentKey, ErrorAnnotation],
) -> Counter:
    """Count (severity, category) discrepancies on common segments.

    Per segment, spans are matched greedily by (severity, category) with
    span text ignored; the symmetric multiset difference is tallied. The
    result is zero for identical inputs and symmetric under argument swap.
    """
    totals: Counter = Counter()
    for key in sorted(set(judge) & set(human)):
        a = Counter((s.severity.value, s.category) for s in judge[key].spans)
        b = Counter((s.severity.value, s.category) for s in human[key].spans)
        totals.update(a - b)
        totals.update(b - a)
    return totals
