"""Meta-evaluation of metric scores against human scores.

System level: soft pairwise accuracy (SPA), the mean over system pairs of
1 - |p_h - p_m|, where each p is the one-sided significance that one
system beats the other. Segment level: tie-calibrated pairwise accuracy
with an optimally chosen tie threshold. Plus Pearson / Kendall tau-b rank
correlations and permutation-based significance testing between metrics.

Determinism contract: the sign flips for resample k of system pair (i, j)
come from a BLAKE2b stream keyed by (seed, i, j), so every p-value is
reproducible independent of execution order, thread count, and platform.
Pair terms are aggregated with exactly rounded summation (``math.fsum``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Literal, Mapping, Sequence

import numpy as np

from .errors import DataError
from .seeding import sign_flips, bit_matrix, stream_key
from .types import ScoreMatrix

Pair = tuple[float, float]


@dataclass(frozen=True)
class TestConfig:
    """Permutation-test configuration; the test is always one-sided."""

    __test__ = False  # not a pytest class, despite the name

    resamples: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.resamples < 1:
            raise DataError("resamples must be >= 1")


@dataclass(frozen=True)
class PairwisePValueMatrix:
    """Upper-triangular p-values: p[i][j] = significance that i beats j."""

    systems: tuple[str, ...]
    p: Mapping[tuple[str, str], float]

    def value(self, sys_i: str, sys_j: str) -> float:
        return self.p[(sys_i, sys_j)]


def pairwise_p_value(
    a: Sequence[float],
    b: Sequence[float],
    cfg: TestConfig,
    pair: tuple[str, str] = ("a", "b"),
) -> float:
    """One-sided paired sign-flip permutation p-value that a beats b.

    ``a`` and ``b`` must be aligned on identical segments. The statistic is
    the sum of paired differences; each resample flips the sign of every
    difference independently. p = (1 + #{resamples with flipped sum >=
    observed sum}) / (R + 1), hence p is always in [1/(R+1), 1] and equals
    1.0 exactly when a == b elementwise.
    """
    a_arr = np.asarray(a, dtype=np.float64)
    b_arr = np.asarray(b, dtype=np.float64)
    if a_arr.shape != b_arr.shape or a_arr.ndim != 1 or a_arr.size == 0:
        raise DataError(
            f"misaligned score vectors for pair {pair}: {a_arr.shape} vs {b_arr.shape}"
        )
    d = a_arr - b_arr
    observed = float(np.sum(d))
    key = stream_key(cfg.seed, "pairwise-p", pair[0], pair[1])
    flips = sign_flips(key, cfg.resamples, d.size)
    permuted = flips @ d
    count = int(np.count_nonzero(permuted >= observed))
    return (1 + count) / (cfg.resamples + 1)


def _joint_mask(rows: Iterable[np.ndarray]) -> np.ndarray:
    mask = None
    for row in rows:
        ok = ~np.isnan(row)
        mask = ok if mask is None else (mask & ok)
    return mask


def _check_same_systems(a: ScoreMatrix, b: ScoreMatrix) -> None:
    if a.systems != b.systems:
        raise DataError(f"system sets differ: {a.systems} vs {b.systems}")


def _check_same_segments(a: ScoreMatrix, b: ScoreMatrix) -> None:
    if a.segments != b.segments:
        raise DataError("segment sets differ between matrices")


def pairwise_p_matrix(matrix: ScoreMatrix, cfg: TestConfig) -> PairwisePValueMatrix:
    """All-pairs one-sided p-values within one matrix (pairwise deletion)."""
    if matrix.n_systems < 2:
        raise DataError("need at least 2 systems")
    p: dict[tuple[str, str], float] = {}
    for i in range(matrix.n_systems):
        for j in range(i + 1, matrix.n_systems):
            mask = _joint_mask([matrix.values[i], matrix.values[j]])
            if not mask.any():
                raise DataError(
                    f"no jointly scored segments for pair ({matrix.systems[i]}, {matrix.systems[j]})"
                )
            pair = (matrix.systems[i], matrix.systems[j])
            p[pair] = pairwise_p_value(matrix.values[i][mask], matrix.values[j][mask], cfg, pair)
    return PairwisePValueMatrix(systems=matrix.systems, p=p)


def soft_pairwise_accuracy(human: ScoreMatrix, metric: ScoreMatrix, cfg: TestConfig) -> float:
    """SPA: mean over system pairs of 1 - |p_human - p_metric|.

    Both p-values for a pair use the same segments (cells present in all
    four involved rows) and the same sign-flip stream, so identical
    matrices under a shared seed score exactly 1.0.
    """
    _check_same_systems(human, metric)
    _check_same_segments(human, metric)
    n = human.n_systems
    if n < 2:
        raise DataError("SPA needs at least 2 systems")
    terms: list[float] = []
    for i in range(n):
        for j in range(i + 1, n):
            mask = _joint_mask(
                [human.values[i], human.values[j], metric.values[i], metric.values[j]]
            )
            if not mask.any():
                raise DataError(
                    f"no jointly scored segments for pair ({human.systems[i]}, {human.systems[j]})"
                )
            pair = (human.systems[i], human.systems[j])
            p_h = pairwise_p_value(human.values[i][mask], human.values[j][mask], cfg, pair)
            p_m = pairwise_p_value(metric.values[i][mask], metric.values[j][mask], cfg, pair)
            terms.append(1.0 - abs(p_h - p_m))
    return math.fsum(terms) / len(terms)


def spa_from_p_values(pairs: Iterable[tuple[float, float]]) -> float:
    """SPA from precomputed (p_human, p_metric) pairs."""
    terms = [1.0 - abs(ph - pm) for ph, pm in pairs]
    if not terms:
        raise DataError("no system pairs")
    return math.fsum(terms) / len(terms)


def tie_calibrated_accuracy(
    human_pairs: Sequence[Pair],
    metric_pairs: Sequence[Pair],
) -> tuple[float, float]:
    """Segment-level pairwise accuracy with an optimal tie threshold.

    Each element pairs the scores of two systems' translations of the same
    source segment. The metric calls a pair a tie when |m_a - m_b| <=
    epsilon; humans tie only on exact equality. Returns (accuracy at the
    best epsilon, that epsilon), searching {0} plus every observed
    |metric difference| and breaking accuracy ties toward smaller epsilon.
    """
    if len(human_pairs) != len(metric_pairs):
        raise DataError("human and metric pair lists differ in length")
    if not human_pairs:
        raise DataError("no score pairs to evaluate")
    n = len(human_pairs)
    hdiff = np.array([a - b for a, b in human_pairs], dtype=np.float64)
    mdiff = np.array([a - b for a, b in metric_pairs], dtype=np.float64)
    if np.isnan(hdiff).any() or np.isnan(mdiff).any():
        raise DataError("score pairs contain missing values")

    abs_m = np.abs(mdiff)
    order = np.argsort(abs_m, kind="stable")
    abs_sorted = abs_m[order]
    # Once a pair's |metric diff| <= epsilon it counts as a predicted tie:
    # correct iff the humans tied. Above epsilon the sign must match.
    tie_correct = (hdiff[order] == 0.0).astype(np.int64)
    sign_correct = ((hdiff[order] != 0.0) & (np.sign(mdiff[order]) == np.sign(hdiff[order]))).astype(np.int64)
    tie_prefix = np.concatenate([[0], np.cumsum(tie_correct)])
    sign_suffix = np.concatenate([np.cumsum(sign_correct[::-1])[::-1], [0]])

    candidates = np.unique(np.concatenate([[0.0], abs_sorted]))
    best_correct = -1
    best_eps = 0.0
    for eps in candidates:
        k = int(np.searchsorted(abs_sorted, eps, side="right"))
        correct = int(tie_prefix[k] + sign_suffix[k])
        if correct > best_correct:
            best_correct = correct
            best_eps = float(eps)
    return best_correct / n, best_eps


def segment_pairs(human: ScoreMatrix, metric: ScoreMatrix) -> tuple[list[Pair], list[Pair]]:
    """All same-segment system pairs scored by both matrices."""
    _check_same_systems(human, metric)
    _check_same_segments(human, metric)
    human_pairs: list[Pair] = []
    metric_pairs: list[Pair] = []
    n = human.n_systems
    hv, mv = human.values, metric.values
    for col in range(human.n_segments):
        for i in range(n):
            for j in range(i + 1, n):
                vals = (hv[i, col], hv[j, col], mv[i, col], mv[j, col])
                if any(math.isnan(v) for v in vals):
                    continue
                human_pairs.append((float(vals[0]), float(vals[1])))
                metric_pairs.append((float(vals[2]), float(vals[3])))
    return human_pairs, metric_pairs


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation; raises on zero variance."""
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.size != ya.size or xa.size < 2:
        raise DataError("pearson needs two aligned vectors of length >= 2")
    xc = xa - xa.mean()
    yc = ya - ya.mean()
    denom = math.sqrt(float(xc @ xc) * float(yc @ yc))
    if denom == 0.0:
        raise DataError("undefined correlation: zero variance")
    return float(xc @ yc) / denom


def kendall_tau_b(x: Sequence[float], y: Sequence[float]) -> float:
    """Kendall tau-b (tie-adjusted), by direct pair counting."""
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    n = xa.size
    if ya.size != n or n < 2:
        raise DataError("kendall needs two aligned vectors of length >= 2")
    sx = np.sign(xa[:, None] - xa[None, :])
    sy = np.sign(ya[:, None] - ya[None, :])
    iu = np.triu_indices(n, k=1)
    prod = sx[iu] * sy[iu]
    con_minus_dis = int(np.sum(prod))
    n0 = n * (n - 1) // 2
    ties_x = int(np.count_nonzero(sx[iu] == 0))
    ties_y = int(np.count_nonzero(sy[iu] == 0))
    if n0 == ties_x or n0 == ties_y:
        raise DataError("undefined correlation: zero variance")
    return con_minus_dis / math.sqrt((n0 - ties_x) * (n0 - ties_y))


def rank_correlations(
    human_sys: Sequence[float], metric_sys: Sequence[float]
) -> tuple[float, float]:
    """(Pearson r, Kendall tau-b) over per-system mean scores."""
    return pearson(human_sys, metric_sys), kendall_tau_b(human_sys, metric_sys)


# ---------------------------------------------------------------------------
# Metric-vs-metric significance testing


MetaMetric = Literal["spa", "acc_eq", "pearson", "kendall"]


def _aligned_complete(matrices: Sequence[ScoreMatrix]) -> list[np.ndarray]:
    first = matrices[0]
    for other in matrices[1:]:
        _check_same_systems(first, other)
        _check_same_segments(first, other)
    keep = None
    for m in matrices:
        ok = ~np.isnan(m.values).any(axis=0)
        keep = ok if keep is None else keep & ok
    if not keep.any():
        raise DataError("no segments scored by all systems in all matrices")
    return [m.values[:, keep] for m in matrices]


def _meta_value(metric: np.ndarray, human: np.ndarray, meta: MetaMetric, cfg: TestConfig) -> float:
    n, s = metric.shape
    if meta == "pearson":
        return pearson(human.mean(axis=1), metric.mean(axis=1))
    if meta == "kendall":
        return kendall_tau_b(human.mean(axis=1), metric.mean(axis=1))
    if meta == "acc_eq":
        hp: list[Pair] = []
        mp: list[Pair] = []
        for col in range(s):
            for i in range(n):
                for j in range(i + 1, n):
                    hp.append((human[i, col], human[j, col]))
                    mp.append((metric[i, col], metric[j, col]))
        return tie_calibrated_accuracy(hp, mp)[0]
    if meta == "spa":
        terms = []
        for i in range(n):
            for j in range(i + 1, n):
                pair = (str(i), str(j))
                p_h = pairwise_p_value(human[i], human[j], cfg, pair)
                p_m = pairwise_p_value(metric[i], metric[j], cfg, pair)
                terms.append(1.0 - abs(p_h - p_m))
        return math.fsum(terms) / len(terms)
    raise DataError(f"unknown meta-metric {meta!r}")


def metric_significance(
    metric_a: ScoreMatrix,
    metric_b: ScoreMatrix,
    human: ScoreMatrix,
    meta: MetaMetric,
    cfg: TestConfig,
    sidedness: Literal["two_sided", "greater"] = "two_sided",
    label: str = "metric-significance",
) -> float:
    """Paired permutation test of meta(metric_a) - meta(metric_b).

    Each resample swaps the two metrics' score columns independently per
    segment with probability 1/2 and recomputes the meta-metric difference.
    ``two_sided`` compares |difference| (ties between metrics); ``greater``
    is the one-sided win/loss direction. Add-one estimator throughout, so
    self-comparison yields exactly 1.0.
    """
    a, b, h = _aligned_complete([metric_a, metric_b, human])
    n_segments = a.shape[1]
    delta_obs = _meta_value(a, h, meta, cfg) - _meta_value(b, h, meta, cfg)
    swaps = bit_matrix(stream_key(cfg.seed, label, meta), cfg.resamples, n_segments)

    if meta == "pearson":
        deltas = _pearson_swap_deltas(a, b, h, swaps)
    else:
        deltas = np.empty(cfg.resamples)
        for k in range(cfg.resamples):
            mask = swaps[k].astype(bool)
            a_k = np.where(mask, b, a)
            b_k = np.where(mask, a, b)
            deltas[k] = _meta_value(a_k, h, meta, cfg) - _meta_value(b_k, h, meta, cfg)

    if sidedness == "two_sided":
        count = int(np.count_nonzero(np.abs(deltas) >= abs(delta_obs)))
    else:
        count = int(np.count_nonzero(deltas >= delta_obs))
    return (1 + count) / (cfg.resamples + 1)


def _pearson_swap_deltas(a: np.ndarray, b: np.ndarray, h: np.ndarray, swaps: np.ndarray) -> np.ndarray:
    """Vectorized swapped-column Pearson deltas for all resamples."""
    s = a.shape[1]
    keep = (1.0 - swaps).T  # (segments, resamples)
    take = swaps.T.astype(np.float64)
    a_means = (a @ keep + b @ take) / s  # (systems, resamples)
    b_means = (b @ keep + a @ take) / s
    h_means = h.mean(axis=1)
    hc = h_means - h_means.mean()
    h_norm = math.sqrt(float(hc @ hc))

    def corr(cols: np.ndarray) -> np.ndarray:
        centered = cols - cols.mean(axis=0, keepdims=True)
        denom = np.sqrt((centered ** 2).sum(axis=0)) * h_norm
        return (hc @ centered) / denom

    return corr(a_means) - corr(b_means)


@dataclass(frozen=True)
class WinTieLoss:
    wins: int
    ties: int
    losses: int
    details: tuple[dict, ...] = ()

    @property
    def total(self) -> int:
        return self.wins + self.ties + self.losses


def win_tie_loss(
    metric_a: ScoreMatrix,
    metric_b: ScoreMatrix,
    human: ScoreMatrix,
    settings: Sequence[tuple[str, str]],
    cfg: TestConfig,
    alpha: float = 0.05,
) -> WinTieLoss:
    """Tally wins/ties/losses of metric_a vs metric_b across settings.

    Each setting is (language pair, level) with level "system" (SPA) or
    "segment" (tie-calibrated accuracy). A failed significance test at
    ``alpha`` is a tie.
    """
    wins = ties = losses = 0
    details = []
    for lang, level in settings:
        meta: MetaMetric = "spa" if level == "system" else "acc_eq"
        a_l = metric_a.restrict_language(lang)
        b_l = metric_b.restrict_language(lang)
        h_l = human.restrict_language(lang)
        av, bv, hv = _aligned_complete([a_l, b_l, h_l])
        delta = _meta_value(av, hv, meta, cfg) - _meta_value(bv, hv, meta, cfg)
        if delta > 0:
            p = metric_significance(a_l, b_l, h_l, meta, cfg, sidedness="greater",
                                    label=f"wtl-{lang}-{level}")
        elif delta < 0:
            p = metric_significance(b_l, a_l, h_l, meta, cfg, sidedness="greater",
                                    label=f"wtl-{lang}-{level}")
        else:
            p = 1.0
        outcome = "tie"
        if p < alpha:
            outcome = "win" if delta > 0 else "loss"
        wins += outcome == "win"
        ties += outcome == "tie"
        losses += outcome == "loss"
        details.append({"language": lang, "level": level, "delta": delta, "p": p, "outcome": outcome})
    return WinTieLoss(wins=wins, ties=ties, losses=losses, details=tuple(details))


# ---------------------------------------------------------------------------
# Aggregate report


@dataclass(frozen=True)
class LanguageMetrics:
    spa: float
    acc_eq_star: float
    epsilon_star: float
    pearson: float | None
    kendall: float | None


@dataclass(frozen=True)
class MetaReport:
    """Per-language meta-metrics plus unweighted averages.

    ``avg_all`` is the unweighted mean of every per-language SPA and
    accuracy value (2 x n_languages numbers), matching the convention of
    averaging all per-language columns.
    """

    per_language: Mapping[str, LanguageMetrics]
    spa: float
    acc_eq_star: float
    epsilon_star: float
    pearson: float | None
    kendall: float | None
    avg_all: float
    resamples: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "per_language": {
                lang: {
                    "spa": lm.spa,
                    "acc_eq_star": lm.acc_eq_star,
                    "epsilon_star": lm.epsilon_star,
                    "pearson": lm.pearson,
                    "kendall": lm.kendall,
                }
                for lang, lm in sorted(self.per_language.items())
            },
            "avg": {
                "spa": self.spa,
                "acc_eq_star": self.acc_eq_star,
                "epsilon_star": self.epsilon_star,
                "pearson": self.pearson,
                "kendall": self.kendall,
                "all": self.avg_all,
            },
            "config": {"resamples": self.resamples, "seed": self.seed},
        }


def _mean(values: list[float]) -> float:
    return math.fsum(values) / len(values)


def meta_report(human: ScoreMatrix, metric: ScoreMatrix, cfg: TestConfig) -> MetaReport:
    """Full per-language meta-evaluation of one metric against human scores."""
    _check_same_systems(human, metric)
    _check_same_segments(human, metric)
    langs = human.language_pairs()
    per_language: dict[str, LanguageMetrics] = {}
    for lang in langs:
        h_l = human.restrict_language(lang)
        m_l = metric.restrict_language(lang)
        spa = soft_pairwise_accuracy(h_l, m_l, cfg)
        hp, mp = segment_pairs(h_l, m_l)
        acc, eps = tie_calibrated_accuracy(hp, mp)
        h_means = list(h_l.system_means().values())
        m_means = list(m_l.system_means().values())
        try:
            r, tau = rank_correlations(h_means, m_means)
        except DataError:
            r, tau = None, None
        per_language[lang] = LanguageMetrics(
            spa=spa, acc_eq_star=acc, epsilon_star=eps, pearson=r, kendall=tau
        )
    spa_avg = _mean([lm.spa for lm in per_language.values()])
    acc_avg = _mean([lm.acc_eq_star for lm in per_language.values()])
    eps_avg = _mean([lm.epsilon_star for lm in per_language.values()])
    pearsons = [lm.pearson for lm in per_language.values() if lm.pearson is not None]
    kendalls = [lm.kendall for lm in per_language.values() if lm.kendall is not None]
    all_vals = [lm.spa for lm in per_language.values()] + [
        lm.acc_eq_star for lm in per_language.values()
    ]
    return MetaReport(
        per_language=per_language,
        spa=spa_avg,
        acc_eq_star=acc_avg,
        epsilon_star=eps_avg,
        pearson=_mean(pearsons) if pearsons else None,
        kendall=_mean(kendalls) if kendalls else None,
        avg_all=_mean(all_vals),
        resamples=cfg.resamples,
        seed=cfg.seed,
    )


def report_table(report: MetaReport) -> str:
    """Aligned plain-text table: one row per language pair plus averages."""
    headers = ["language", "SPA (%)", "Acc*_eq (%)", "eps*", "Pearson", "Kendall"]
    rows = []

    def fmt(v: float | None, scale: float = 1.0) -> str:
        return "-" if v is None else f"{v * scale:.1f}"

    def fmt3(v: float | None) -> str:
        return "-" if v is None else f"{v:.3f}"

    for lang, lm in sorted(report.per_language.items()):
        rows.append([lang, fmt(lm.spa, 100), fmt(lm.acc_eq_star, 100), fmt3(lm.epsilon_star),
                     fmt3(lm.pearson), fmt3(lm.kendall)])
    rows.append(["avg", fmt(report.spa, 100), fmt(report.acc_eq_star, 100),
                 fmt3(report.epsilon_star), fmt3(report.pearson), fmt3(report.kendall)])
    rows.append(["all", fmt(report.avg_all, 100), "", "", "", ""])
    widths = [max(len(headers[c]), *(len(r[c]) for r in rows)) for c in range(len(headers))]
    lines = ["  ".join(h.ljust(widths[c]) for c, h in enumerate(headers))]
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append("  ".join(v.ljust(widths[c]) for c, v in enumerate(r)))
    return "\n".join(lines) + "\n"
