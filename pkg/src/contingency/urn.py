"""Generalized Polya urn.

A draw picks color ``i`` with probability ``counts[i]**gamma / sum(counts**gamma)``
and adds ``increment`` balls of that color.  ``gamma=1`` is the classical urn
(martingale share, Uniform(0, 1) limit from ``(1, 1)``); ``gamma>1`` drifts to a
monopoly and ``gamma=0`` is a symmetric random walk.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidStateError
from .rng import derive_seed, generator

# Runs simulated together per batch; bounds the memory held by pre-drawn uniforms.
_BATCH_RUNS = 256


@dataclass(frozen=True)
class UrnRule:
    gamma: float = 1.0
    increment: int = 1

    def __post_init__(self):
        if not np.isfinite(self.gamma) or self.gamma < 0:
            raise ValueError(f"gamma must be a finite non-negative real, got {self.gamma}")
        if int(self.increment) != self.increment or self.increment < 1:
            raise ValueError(f"increment must be a positive integer, got {self.increment}")

    @property
    def linear(self) -> bool:
        return self.gamma == 1.0


@dataclass(frozen=True)
class UrnState:
    counts: tuple[int, ...] = (1, 1)
    step: int = 0

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if len(self.counts) == 0:
            raise InvalidStateError("urn state needs at least one color")
        if any(c <= 0 for c in self.counts):
            raise InvalidStateError(f"all counts must be positive, got {self.counts}")
        if self.step < 0:
            raise InvalidStateError(f"step must be non-negative, got {self.step}")

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def share(self) -> float:
        """Share of color 0."""
        return self.counts[0] / self.total


@dataclass(frozen=True)
class ShareTrajectory:
    """Share of color 0 after each recorded step.

    ``initial_share`` is the share before the first draw; ``steps`` and
    ``shares`` hold the recorded (possibly decimated) points.
    """

    steps: np.ndarray
    shares: np.ndarray
    initial_share: float = 0.5

    @property
    def entries(self) -> list[tuple[int, float]]:
        return list(zip(self.steps.tolist(), self.shares.tolist()))

    @property
    def final_share(self) -> float:
        return float(self.shares[-1])

    def decimate(self, every: int) -> "ShareTrajectory":
        """Keep every ``every``-th step (steps k, 2k, ...) plus the final one."""
        if every < 1:
            raise ValueError("decimation factor must be >= 1")
        keep = (self.steps % every == 0)
        keep[-1] = True
        return ShareTrajectory(self.steps[keep], self.shares[keep], self.initial_share)


def _weights(counts: np.ndarray, gamma: float) -> np.ndarray:
    if gamma == 1.0:
        return counts
    return np.power(counts.astype(np.float64), gamma)


def _pick(counts: np.ndarray, gamma: float, u: np.ndarray) -> np.ndarray:
    """Cumulative inversion, row-wise: first color whose cumulative weight >= u * total.

    For gamma=1 the cumulative sums stay integers, so the only rounding is the
    product ``u * total``.
    """
    cum = np.cumsum(_weights(counts, gamma), axis=-1)
    x = u * cum[..., -1]
    chosen = np.sum(cum < x[..., None], axis=-1)
    return np.minimum(chosen, counts.shape[-1] - 1)


def selection_probabilities(state: UrnState, rule: UrnRule) -> np.ndarray:
    w = _weights(np.asarray(state.counts, dtype=np.int64), rule.gamma).astype(np.float64)
    return w / w.sum()


def urn_step(state: UrnState, rule: UrnRule, u: float) -> tuple[UrnState, int]:
    """One draw driven by the uniform ``u``; returns the new state and the chosen color."""
    if not 0.0 <= u < 1.0:
        raise ValueError(f"u must lie in [0, 1), got {u}")
    counts = np.asarray(state.counts, dtype=np.int64)
    chosen = int(_pick(counts, rule.gamma, np.float64(u)))
    counts[chosen] += rule.increment
    return UrnState(tuple(counts.tolist()), state.step + 1), chosen


def _run_batch(initial: UrnState, rule: UrnRule, uniforms: np.ndarray):
    n_runs, steps = uniforms.shape
    counts = np.tile(np.asarray(initial.counts, dtype=np.int64), (n_runs, 1))
    rows = np.arange(n_runs)
    total = counts.sum(axis=1)
    shares = np.empty((n_runs, steps))
    for t in range(steps):
        chosen = _pick(counts, rule.gamma, uniforms[:, t])
        counts[rows, chosen] += rule.increment
        total += rule.increment
        shares[:, t] = counts[:, 0] / total
    return shares, counts


def share_paths(initial: UrnState, rule: UrnRule, uniforms: np.ndarray) -> np.ndarray:
    """Simulate one run per row of ``uniforms``; returns color-0 shares, shape (runs, steps).

    Rows are independent: a row's path depends only on its own uniforms.
    """
    uniforms = np.atleast_2d(np.asarray(uniforms, dtype=np.float64))
    return _run_batch(initial, rule, uniforms)[0]


def _uniforms(seed: int, steps: int) -> np.ndarray:
    return generator(seed).random(steps)


def run_urn(initial: UrnState, rule: UrnRule, steps: int, seed: int) -> ShareTrajectory:
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    shares = share_paths(initial, rule, _uniforms(seed, steps)[None, :])[0]
    return ShareTrajectory(np.arange(1, steps + 1), shares, initial.share)


def _ensemble(initial, rule, steps, n_runs, master_seed, first_run=0):
    if n_runs < 1:
        raise ValueError(f"n_runs must be >= 1, got {n_runs}")
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    for start in range(0, n_runs, _BATCH_RUNS):
        stop = min(start + _BATCH_RUNS, n_runs)
        u = np.stack([_uniforms(derive_seed(master_seed, first_run + r), steps)
                      for r in range(start, stop)])
        yield start, stop, _run_batch(initial, rule, u)


def ensemble_paths(initial: UrnState, rule: UrnRule, steps: int, n_runs: int,
                   master_seed: int, first_run: int = 0) -> np.ndarray:
    """Share paths of runs ``first_run .. first_run + n_runs - 1``; run r uses stream r."""
    out = np.empty((n_runs, steps))
    for start, stop, (shares, _) in _ensemble(initial, rule, steps, n_runs,
                                              master_seed, first_run):
        out[start:stop] = shares
    return out


def final_share_ensemble(initial: UrnState, rule: UrnRule, steps: int, n_runs: int,
                         master_seed: int) -> np.ndarray:
    out = np.empty(n_runs)
    for start, stop, (shares, _) in _ensemble(initial, rule, steps, n_runs, master_seed):
        out[start:stop] = shares[:, -1]
    return out


def max_share_ensemble(initial: UrnState, rule: UrnRule, steps: int, n_runs: int,
                       master_seed: int) -> np.ndarray:
    """Final share of the largest color in each run (any number of colors)."""
    out = np.empty(n_runs)
    for start, stop, (_, counts) in _ensemble(initial, rule, steps, n_runs, master_seed):
        out[start:stop] = counts.max(axis=1) / counts.sum(axis=1)
    return out
