"""Sock-puppet injection and burst detection.

Puppets take over organic slots (the horizon does not grow): at each scheduled
step the puppet picks the target, rates it 5 and downloads it.  Organic
uniforms for that slot are drawn and discarded, so a treated world stays
paired with its baseline event for event.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import binom

from .errors import ConfigError
from .market import (InfluenceCondition, MarketConfig, RealizationTrace, _logit_weights,
                     _popularity_ranks, _SignalTables, draw_appeals, simulate_worlds,
                     world_seed)

DEFAULT_WINDOW = 20
DEFAULT_THRESHOLD = 100.0


@dataclass(frozen=True)
class PuppetSchedule:
    target_item: int
    steps: tuple[int, ...] = ()

    def __post_init__(self):
        steps = tuple(int(s) for s in self.steps)
        object.__setattr__(self, "steps", steps)
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ConfigError("puppet steps must be strictly increasing")
        if steps and steps[0] < 1:
            raise ConfigError("puppet steps are 1-based")

    @property
    def k(self) -> int:
        return len(self.steps)

    @classmethod
    def front_loaded(cls, target_item: int, k: int) -> "PuppetSchedule":
        return cls(target_item, tuple(range(1, k + 1)))

    def validate(self, horizon: int) -> None:
        if self.steps and self.steps[-1] > horizon:
            raise ConfigError(f"puppet step {self.steps[-1]} beyond horizon {horizon}")


def apply_puppets(schedule: PuppetSchedule, config: MarketConfig, condition, world_seed: int,
                  appeals) -> RealizationTrace:
    schedule.validate(config.horizon)
    return simulate_worlds(config, condition, [world_seed], appeals, schedule)[0]


@dataclass
class ShiftResult:
    baseline: float
    treated: float
    n_runs: int
    baseline_traces: list = field(default_factory=list, repr=False)
    treated_traces: list = field(default_factory=list, repr=False)

    @property
    def delta(self) -> float:
        return self.treated - self.baseline

    def __iter__(self):
        return iter((self.baseline, self.treated, self.delta))


def paired_runs(config: MarketConfig, schedule: PuppetSchedule, n_runs: int, master_seed: int,
                condition=InfluenceCondition.STRONG, appeals=None):
    """Baseline and treated traces; run r of both arms uses world stream r."""
    schedule.validate(config.horizon)
    if appeals is None:
        appeals = draw_appeals(config, master_seed)
    seeds = [world_seed(master_seed, r) for r in range(n_runs)]
    baseline = simulate_worlds(config, condition, seeds, appeals)
    treated = simulate_worlds(config, condition, seeds, appeals, schedule)
    return baseline, treated


def win_probability_shift(config: MarketConfig, schedule: PuppetSchedule, n_runs: int,
                          master_seed: int, condition=InfluenceCondition.STRONG,
                          appeals=None, keep_traces: bool = False) -> ShiftResult:
    """Probability that the target ends as the top item, without and with puppets."""
    if n_runs < 2:
        raise ValueError(f"n_runs must be >= 2, got {n_runs}")
    baseline, treated = paired_runs(config, schedule, n_runs, master_seed, condition, appeals)
    target = schedule.target_item
    p0 = sum(t.top_item == target for t in baseline) / n_runs
    p1 = sum(t.top_item == target for t in treated) / n_runs
    if keep_traces:
        return ShiftResult(p0, p1, n_runs, baseline, treated)
    return ShiftResult(p0, p1, n_runs)


@dataclass(frozen=True)
class Flag:
    item: int
    start: int  # first step of the window, 1-based
    end: int    # last step of the window, inclusive
    surprise: float


@dataclass
class DetectionReport:
    flagged: list[Flag]
    threshold: float
    window: int

    def items(self) -> set[int]:
        return {f.item for f in self.flagged}

    def covers(self, item: int, steps: Sequence[int]) -> bool:
        """True when some flag on ``item`` overlaps one of ``steps``."""
        steps = np.asarray(steps)
        return any(f.item == item and np.any((steps >= f.start) & (steps <= f.end))
                   for f in self.flagged)


def window_surprise(trace: RealizationTrace, window: int) -> np.ndarray:
    """Surprise (nats) of every (window start, item); shape (n_events - window + 1, S).

    The organic model freezes the choice probabilities of the pre-window state
    and multiplies them by the item's download probability, which is its
    appeal (E[(rating - 1) / 4] = appeal).  The surprise is minus the log of the
    binomial upper tail P(X >= observed downloads), X ~ Bin(window, p).
    """
    n, n_items = trace.n_events, trace.n_items
    history = trace.download_history()  # row t: state before event t + 1
    starts = np.arange(n - window + 1)
    before = history[starts]
    observed = history[starts + window] - before
    tables = _SignalTables(n_items, n, trace.condition, trace.policy.rank_bias)
    signals = tables.signals(before, _popularity_ranks(before))
    w = _logit_weights(trace.appeals, signals, trace.policy)
    p = w / w.sum(axis=1, keepdims=True) * trace.appeals
    tail = binom.logsf(observed - 1, window, np.clip(p, 0.0, 1.0))
    return np.maximum(-tail, 0.0)


def detect_bursts(trace: RealizationTrace, window: int = DEFAULT_WINDOW,
                  threshold: float = DEFAULT_THRESHOLD) -> DetectionReport:
    if window < 5:
        raise ValueError(f"window must be >= 5, got {window}")
    if window > trace.n_events:
        raise ValueError(f"window {window} longer than the {trace.n_events}-event trace")
    flagged = []
    if threshold != math.inf:
        surprise = window_surprise(trace, window)
        hit_start, hit_item = np.nonzero(surprise >= threshold)
        flagged = [Flag(int(i), int(s) + 1, int(s) + window, float(surprise[s, i]))
                   for s, i in zip(hit_start, hit_item)]
    return DetectionReport(flagged, threshold, window)


@dataclass
class DetectionScore:
    recall: float
    false_flag_rate: float
    n_treated: int
    n_null: int


def score_detection(baseline: Sequence[RealizationTrace], treated: Sequence[RealizationTrace],
                    schedule: PuppetSchedule, window: int = DEFAULT_WINDOW,
                    threshold: float = DEFAULT_THRESHOLD) -> DetectionScore:
    """Recall: treated worlds where a flag on the target overlaps a puppet step.
    False-flag rate: puppet-free worlds with any flag at all."""
    hits = sum(detect_bursts(t, window, threshold).covers(schedule.target_item, schedule.steps)
               for t in treated)
    false = sum(bool(detect_bursts(t, window, threshold).flagged) for t in baseline)
    return DetectionScore(hits / len(treated), false / len(baseline), len(treated), len(baseline))
