"""Inside-view and outside-view statistics over simulated worlds.

Inside view: concentration (Gini), cross-world unpredictability and how well
latent appeal predicts outcomes before the dynamics unfold.  Outside view:
how early an observer reading the event log can name the eventual winner.
The rigidity index links the two by measuring how much the displayed social
signal tells about which popularity rank gets chosen.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import InsufficientDataError
from .market import InfluenceCondition, RealizationTrace, WorldSet

DEFAULT_FRACTIONS = (0.05, 0.1, 0.15, 0.2, 0.3, 0.5, 0.75, 1.0)


def gini(shares) -> float:
    """Mean absolute difference over all ordered pairs, divided by 2n (shares sum to 1)."""
    m = np.asarray(shares, dtype=np.float64)
    if m.ndim != 1 or m.size == 0:
        raise ValueError("gini needs a non-empty 1-d sequence of shares")
    if np.any(m < 0):
        raise ValueError("shares must be non-negative")
    if abs(m.sum() - 1.0) > 1e-9:
        raise ValueError(f"shares must sum to 1, got {m.sum()!r}")
    n = m.size
    x = np.sort(m)
    # sum_{i,j} |x_i - x_j| = 2 * sum_i (2i - n + 1) x_(i) for ascending x, i from 0
    pair_sum = 2.0 * np.dot(2 * np.arange(n) - n + 1, x)
    return float(pair_sum / (2 * n))


def unpredictability(worlds) -> float:
    """Mean over items of the average absolute share difference across world pairs."""
    m = np.asarray(worlds, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("expected an (R, S) array of share vectors")
    n_worlds, n_items = m.shape
    if n_worlds < 2:
        raise ValueError(f"unpredictability needs R >= 2 worlds, got {n_worlds}")
    j, k = np.triu_indices(n_worlds, 1)
    per_item = np.abs(m[j] - m[k]).mean(axis=0)
    return float(per_item.mean())


def _prefix_length(f: float, n_events: int) -> int:
    # guard against 0.15 * 1200 evaluating to 180.00000000000003
    return math.ceil(f * n_events - 1e-9)


def early_leader_prediction(worlds, condition, f: float) -> tuple[float, int]:
    """Accuracy of the prefix leader as a predictor of the final top item.

    ``worlds`` is a WorldSet or a sequence of traces (``condition`` is then ignored).
    """
    if not 0.0 < f <= 1.0:
        raise ValueError(f"f must lie in (0, 1], got {f}")
    traces = _traces(worlds, condition)
    correct = 0
    for trace in traces:
        n = _prefix_length(f, trace.n_events)
        if n < 1:
            raise ValueError(f"f={f} leaves an empty prefix of a {trace.n_events}-event trace")
        early = int(np.argmax(trace.downloads_after(n)))
        correct += early == trace.top_item
    return correct / len(traces), len(traces)


@dataclass
class PredictionCurve:
    points: list[tuple[float, float, int]]

    @property
    def fractions(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])

    def to_records(self) -> list[dict]:
        return [{"f": f, "accuracy": a, "n": n} for f, a, n in self.points]


def prediction_curve(worlds, condition=None, fractions=DEFAULT_FRACTIONS) -> PredictionCurve:
    fractions = sorted(fractions)
    return PredictionCurve([(f, *early_leader_prediction(worlds, condition, f))
                            for f in fractions])


def _spearman(x: np.ndarray, y: np.ndarray) -> float:
    rx, ry = rankdata(x), rankdata(y)
    rx, ry = rx - rx.mean(), ry - ry.mean()
    denom = math.sqrt(np.dot(rx, rx) * np.dot(ry, ry))
    if denom == 0.0:
        return 0.0
    return float(np.dot(rx, ry) / denom)


def ex_ante_predictability(worlds, condition=None, appeals=None) -> float:
    """Spearman correlation of appeal with final share, averaged over worlds.

    A world whose final shares are all equal contributes 0.
    """
    traces = _traces(worlds, condition)
    if appeals is None:
        appeals = traces[0].appeals
    appeals = np.asarray(appeals, dtype=np.float64)
    if appeals.size < 2 or np.all(appeals == appeals[0]):
        raise ValueError("ex-ante predictability is undefined for constant appeals")
    return float(np.mean([_spearman(appeals, t.final_shares) for t in traces]))


def _quantile_bins(x: np.ndarray, n_bins: int) -> np.ndarray:
    edges = np.quantile(x, np.linspace(0.0, 1.0, n_bins + 1)[1:-1])
    return np.searchsorted(edges, x, side="right")


def _entropy(labels: np.ndarray) -> float:
    _, counts = np.unique(labels, return_counts=True, axis=0)
    p = counts / counts.sum()
    return float(-np.sum(p * np.log(p)))


def rigidity_index(traces: Sequence[RealizationTrace], n_bins: int = 8,
                   min_events: int = 100) -> float:
    """``1 - H(choice_rank_bin | signal_bin) / H(choice_rank_bin)`` over pooled organic events.

    choice_rank_bin is the quantile bin of the chosen item's pre-choice
    popularity rank; signal_bin the quantile bin of the largest signal on
    display before the choice.  Plug-in entropies, no bias correction.
    """
    if n_bins < 2:
        raise ValueError(f"n_bins must be >= 2, got {n_bins}")
    organic = [~t.is_puppet for t in traces]
    rank = np.concatenate([t.popularity_rank[m] for t, m in zip(traces, organic)])
    signal = np.concatenate([t.top_signal[m] for t, m in zip(traces, organic)])
    if rank.size < min_events:
        raise InsufficientDataError(f"rigidity needs >= {min_events} events, got {rank.size}")
    y = _quantile_bins(rank.astype(np.float64), n_bins)
    x = _quantile_bins(signal, n_bins)
    h_y = _entropy(y)
    if h_y == 0.0:
        return 1.0
    h_y_given_x = _entropy(np.column_stack([x, y])) - _entropy(x)
    return float(min(1.0, max(0.0, 1.0 - h_y_given_x / h_y)))


def ks_uniform_statistic(samples) -> float:
    """Kolmogorov-Smirnov distance between the empirical CDF and Uniform(0, 1)."""
    x = np.sort(np.asarray(samples, dtype=np.float64))
    if x.size == 0:
        raise ValueError("need at least one sample")
    if x[0] < 0.0 or x[-1] > 1.0:
        raise ValueError("samples must lie in [0, 1]")
    n = x.size
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - x), np.max(x - (i - 1) / n)))


def ks_two_sample_statistic(a, b) -> float:
    """sup |F_a - F_b| evaluated at every pooled sample point."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def martingale_residual(trajectories) -> float:
    """|mean final share - common initial share| over an ensemble of ShareTrajectory."""
    trajectories = list(trajectories)
    if len(trajectories) < 2:
        raise ValueError("need at least 2 trajectories")
    initial = {t.initial_share for t in trajectories}
    if len(initial) != 1:
        raise ValueError(f"trajectories start from different shares: {sorted(initial)}")
    finals = np.array([t.final_share for t in trajectories])
    return float(abs(finals.mean() - initial.pop()))


@dataclass
class ConditionMetrics:
    gini_mean: float
    unpredictability_U: Optional[float]
    ex_ante_spearman: Optional[float]
    rigidity: Optional[float]
    prediction_curve: PredictionCurve

    def to_dict(self) -> dict:
        return {
            "gini_mean": self.gini_mean,
            "unpredictability_U": self.unpredictability_U,
            "ex_ante_spearman": self.ex_ante_spearman,
            "rigidity": self.rigidity,
            "prediction_curve": self.prediction_curve.to_records(),
        }


@dataclass
class MetricsReport:
    conditions: dict = field(default_factory=dict)
    ks_uniform: Optional[float] = None
    martingale_residual: Optional[float] = None

    def to_dict(self) -> dict:
        out = {c.value if isinstance(c, InfluenceCondition) else c: m.to_dict()
               for c, m in self.conditions.items()}
        if self.ks_uniform is not None:
            out["ks_uniform"] = self.ks_uniform
        if self.martingale_residual is not None:
            out["martingale_residual"] = self.martingale_residual
        return out


def condition_metrics(traces: Sequence[RealizationTrace], fractions=DEFAULT_FRACTIONS,
                      n_bins: int = 8) -> ConditionMetrics:
    shares = np.stack([t.final_shares for t in traces])
    nonempty = [s for s in shares if s.sum() > 0]
    gini_mean = float(np.mean([gini(s) for s in nonempty])) if nonempty else 0.0
    try:
        ex_ante = ex_ante_predictability(traces)
    except ValueError:
        ex_ante = None
    try:
        rig = rigidity_index(traces, n_bins)
    except InsufficientDataError:
        rig = None
    return ConditionMetrics(
        gini_mean=gini_mean,
        unpredictability_U=unpredictability(shares) if len(traces) >= 2 else None,
        ex_ante_spearman=ex_ante,
        rigidity=rig,
        prediction_curve=prediction_curve(traces, None, fractions),
    )


def market_report(worlds: WorldSet, fractions=DEFAULT_FRACTIONS, n_bins: int = 8) -> MetricsReport:
    return MetricsReport({c: condition_metrics(worlds.worlds(c), fractions, n_bins)
                          for c in worlds.config.conditions})


def _traces(worlds, condition) -> list[RealizationTrace]:
    if isinstance(worlds, WorldSet):
        traces = worlds.worlds(condition)
    else:
        traces = list(worlds)
    if not traces:
        raise ValueError("no worlds to evaluate")
    return traces
