"""Artificial cultural market.

Agents arrive one at a time, pick an item with a multinomial logit over
``alpha * appeal + beta * signal``, listen and rate it (Binomial(4, appeal) + 1),
and download it with probability ``(rating - 1) / 4``.  The social signal
depends on the influence condition:

* independent: no download information, signal 0;
* weak: ``ln(1 + downloads)``, items shown in a fixed random order;
* strong: ``ln(1 + downloads) + rank_bias * ln(S / (1 + rank))``, items ranked by
  downloads (descending, lowest id first on ties).

With ``alpha=0, beta=1`` under the weak condition the choice weight is exactly
``1 + downloads``, i.e. a linear Polya urn over items.

Worlds are simulated in batches: every world pre-draws its own uniforms
(three per step: choice, listen, download) from its own stream, so a world's
trace does not depend on which batch it was simulated in.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from .errors import ConfigError
from .rng import APPEAL_STREAM, derive_seed, generator


class InfluenceCondition(str, enum.Enum):
    INDEPENDENT = "independent"
    WEAK = "weak"
    STRONG = "strong"

    @classmethod
    def parse(cls, value) -> "InfluenceCondition":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


ALL_CONDITIONS = (InfluenceCondition.INDEPENDENT, InfluenceCondition.WEAK,
                  InfluenceCondition.STRONG)


@dataclass(frozen=True)
class AgentPolicy:
    alpha: float = 1.0
    beta: float = 1.0
    rank_bias: float = 1.0
    actions_per_agent: int = 1

    def __post_init__(self):
        for name in ("alpha", "beta", "rank_bias"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if int(self.actions_per_agent) != self.actions_per_agent or self.actions_per_agent < 1:
            raise ValueError(f"actions_per_agent must be a positive integer, got "
                             f"{self.actions_per_agent}")


@dataclass
class Item:
    id: int
    appeal: float
    downloads: int = 0


@dataclass
class MarketState:
    items: list[Item]
    display_order: list[int]
    step: int = 0

    @property
    def appeals(self) -> np.ndarray:
        return np.array([it.appeal for it in self.items], dtype=np.float64)

    @property
    def downloads(self) -> np.ndarray:
        return np.array([it.downloads for it in self.items], dtype=np.int64)

    def display_ranks(self) -> np.ndarray:
        ranks = np.empty(len(self.items), dtype=np.int64)
        ranks[np.asarray(self.display_order)] = np.arange(len(self.items))
        return ranks

    def refresh_display(self, condition: InfluenceCondition) -> None:
        """Re-rank the display under strong influence; other conditions keep their order."""
        if InfluenceCondition.parse(condition) is InfluenceCondition.STRONG:
            self.display_order = popularity_order(self.downloads).tolist()


@dataclass(frozen=True)
class MarketConfig:
    n_items: int = 50
    n_agents: int = 1200
    actions_per_agent: int = 1
    alpha: float = 1.0
    beta: float = 1.0
    rank_bias: float = 1.0
    appeal_low: float = 0.2
    appeal_high: float = 0.8
    conditions: tuple[InfluenceCondition, ...] = ALL_CONDITIONS
    n_worlds: int = 8

    def __post_init__(self):
        object.__setattr__(self, "conditions",
                           tuple(InfluenceCondition.parse(c) for c in self.conditions))
        errors = []
        if self.n_items < 1:
            errors.append(f"n_items must be >= 1, got {self.n_items}")
        if self.n_agents < 1:
            errors.append(f"n_agents must be >= 1, got {self.n_agents}")
        if not 0.0 <= self.appeal_low <= self.appeal_high <= 1.0:
            errors.append("appeal bounds must satisfy 0 <= appeal_low <= appeal_high <= 1, "
                          f"got [{self.appeal_low}, {self.appeal_high}]")
        if self.n_worlds < 1:
            errors.append(f"n_worlds must be >= 1, got {self.n_worlds}")
        if not self.conditions:
            errors.append("at least one condition is required")
        try:
            self.policy
        except ValueError as exc:
            errors.append(str(exc))
        if errors:
            raise ConfigError(errors)

    @property
    def policy(self) -> AgentPolicy:
        return AgentPolicy(self.alpha, self.beta, self.rank_bias, self.actions_per_agent)

    @property
    def horizon(self) -> int:
        return self.n_agents * self.actions_per_agent

    def with_params(self, **kwargs) -> "MarketConfig":
        return replace(self, **kwargs)


def draw_appeals(config: MarketConfig, master_seed: int) -> np.ndarray:
    """Item appeals, i.i.d. Uniform(appeal_low, appeal_high), from the appeal stream."""
    rng = generator(derive_seed(master_seed, APPEAL_STREAM))
    return rng.uniform(config.appeal_low, config.appeal_high, config.n_items)


def popularity_order(downloads) -> np.ndarray:
    """Item ids sorted by downloads descending, ties by id ascending."""
    downloads = np.asarray(downloads, dtype=np.int64)
    return np.lexsort((np.arange(downloads.shape[-1]), -downloads))


def _popularity_ranks(downloads: np.ndarray) -> np.ndarray:
    """Row-wise rank (0 = most downloaded, lowest id on ties) of every item."""
    n = downloads.shape[-1]
    key = downloads * (-n) + np.arange(n)
    return np.argsort(np.argsort(key, axis=-1), axis=-1)


def social_signal(item: Item, condition: InfluenceCondition, display_rank: int,
                  policy: AgentPolicy, n_items: int) -> float:
    condition = InfluenceCondition.parse(condition)
    if condition is InfluenceCondition.INDEPENDENT:
        return 0.0
    if not 0 <= display_rank < n_items:
        raise ValueError(f"display_rank must lie in [0, {n_items}), got {display_rank}")
    signal = math.log1p(item.downloads)
    if condition is InfluenceCondition.STRONG:
        signal += policy.rank_bias * math.log(n_items / (1 + display_rank))
    return signal


class _SignalTables:
    """Lookup tables so that per-step signals cost two gathers."""

    def __init__(self, n_items: int, horizon: int, condition: InfluenceCondition,
                 rank_bias: float):
        self.condition = condition
        self.log_downloads = np.log1p(np.arange(horizon + 1, dtype=np.float64))
        self.rank_term = rank_bias * np.log(n_items / (1.0 + np.arange(n_items)))

    def signals(self, downloads: np.ndarray, ranks: np.ndarray) -> np.ndarray:
        if self.condition is InfluenceCondition.INDEPENDENT:
            return np.zeros(downloads.shape)
        s = self.log_downloads[downloads]
        if self.condition is InfluenceCondition.STRONG:
            s = s + self.rank_term[ranks]
        return s


def _logit_weights(appeals: np.ndarray, signals: np.ndarray, policy: AgentPolicy) -> np.ndarray:
    z = policy.alpha * appeals + policy.beta * signals
    z = z - z.max(axis=-1, keepdims=True)
    return np.exp(z)


def choice_probabilities(state: MarketState, condition: InfluenceCondition,
                         policy: AgentPolicy) -> np.ndarray:
    condition = InfluenceCondition.parse(condition)
    downloads = state.downloads
    if condition is InfluenceCondition.STRONG:
        ranks = _popularity_ranks(downloads)
    else:
        ranks = state.display_ranks()
    tables = _SignalTables(len(state.items), int(downloads.max(initial=0)), condition,
                           policy.rank_bias)
    w = _logit_weights(state.appeals, tables.signals(downloads, ranks), policy)
    return w / w.sum()


def rating_cdf(appeals) -> np.ndarray:
    """CDF of Binomial(4, appeal) at k = 0..4, one row per appeal; last column is exactly 1."""
    p = np.asarray(appeals, dtype=np.float64)[..., None]
    k = np.arange(5)
    comb = np.array([math.comb(4, j) for j in k], dtype=np.float64)
    pmf = comb * p ** k * (1.0 - p) ** (4 - k)
    cdf = np.cumsum(pmf, axis=-1)
    cdf[..., -1] = 1.0
    return cdf


def _ratings_from_cdf(cdf_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    return 1 + np.sum(cdf_rows[..., :4] <= u[..., None], axis=-1)


def simulate_listen(item: Item, u: float) -> int:
    """Rating in 1..5: one plus a Binomial(4, appeal) draw by inverse CDF."""
    if not 0.0 <= u < 1.0:
        raise ValueError(f"u must lie in [0, 1), got {u}")
    return int(_ratings_from_cdf(rating_cdf(item.appeal), np.float64(u)))


def download_decision(rating: int, u: float) -> bool:
    if int(rating) != rating or not 1 <= rating <= 5:
        raise ValueError(f"rating must be an integer in 1..5, got {rating}")
    return bool(u < (rating - 1) / 4)


@dataclass
class RealizationTrace:
    """Event log of one world.

    Per-event arrays are indexed by ``step - 1``.  ``popularity_rank`` and
    ``top_signal`` describe the pre-choice state (rank of the chosen item,
    largest signal on display) and feed the rigidity index.
    """

    condition: InfluenceCondition
    world_seed: int
    appeals: np.ndarray
    policy: AgentPolicy
    agent_id: np.ndarray
    item_id: np.ndarray
    signal_shown: np.ndarray
    rating: np.ndarray
    downloaded: np.ndarray
    is_puppet: np.ndarray
    popularity_rank: np.ndarray
    top_signal: np.ndarray
    display_order: np.ndarray
    world_id: int = 0

    @property
    def n_items(self) -> int:
        return len(self.appeals)

    @property
    def n_events(self) -> int:
        return len(self.item_id)

    @property
    def steps(self) -> np.ndarray:
        return np.arange(1, self.n_events + 1)

    @property
    def events(self) -> list[tuple]:
        return list(zip(self.steps.tolist(), self.agent_id.tolist(), self.item_id.tolist(),
                        self.signal_shown.tolist(), self.rating.tolist(),
                        self.downloaded.tolist()))

    def downloads_after(self, n_events: int) -> np.ndarray:
        """Per-item download counts after the first ``n_events`` events."""
        items = self.item_id[:n_events][self.downloaded[:n_events]]
        return np.bincount(items, minlength=self.n_items)

    def download_history(self) -> np.ndarray:
        """Downloads before each event: row t is the state seen by event t + 1.

        Shape (n_events + 1, n_items); the last row is the final state.
        """
        inc = np.zeros((self.n_events + 1, self.n_items), dtype=np.int64)
        steps = np.nonzero(self.downloaded)[0]
        inc[steps + 1, self.item_id[steps]] = 1
        return np.cumsum(inc, axis=0)

    @property
    def final_downloads(self) -> np.ndarray:
        return self.downloads_after(self.n_events)

    @property
    def final_shares(self) -> np.ndarray:
        d = self.final_downloads
        total = d.sum()
        if total == 0:
            return np.zeros(self.n_items)
        return d / total

    @property
    def top_item(self) -> int:
        return int(np.argmax(self.final_downloads))


@dataclass
class WorldSet:
    config: MarketConfig
    master_seed: int
    appeals: np.ndarray
    traces: dict = field(default_factory=dict)

    def worlds(self, condition) -> list[RealizationTrace]:
        return self.traces[InfluenceCondition.parse(condition)]

    def final_shares(self, condition) -> np.ndarray:
        """Shape (R, S)."""
        return np.stack([t.final_shares for t in self.worlds(condition)])


def _puppet_mask(puppets, horizon: int):
    mask = np.zeros(horizon, dtype=bool)
    if puppets is None:
        return mask, -1
    steps = np.asarray(puppets.steps, dtype=np.int64)
    if len(steps) and (steps.min() < 1 or steps.max() > horizon):
        raise ConfigError(f"puppet steps must lie in 1..{horizon}")
    mask[steps - 1] = True
    return mask, int(puppets.target_item)


def _world_uniforms(seed: int, horizon: int, n_items: int):
    rng = generator(seed)
    u = rng.random((horizon, 3))
    weak_order = rng.permutation(n_items)
    return u, weak_order


def simulate_worlds(config: MarketConfig, condition, seeds: Sequence[int], appeals,
                    puppets=None, world_ids: Optional[Sequence[int]] = None
                    ) -> list[RealizationTrace]:
    """Simulate one world per seed in lockstep; returns traces in seed order."""
    condition = InfluenceCondition.parse(condition)
    appeals = np.asarray(appeals, dtype=np.float64)
    policy = config.policy
    n_items = len(appeals)
    if n_items != config.n_items:
        raise ConfigError(f"expected {config.n_items} appeals, got {n_items}")
    horizon = config.horizon
    mask, target = _puppet_mask(puppets, horizon)
    if puppets is not None and not 0 <= target < n_items:
        raise ConfigError(f"puppet target {target} outside 0..{n_items - 1}")
    seeds = [int(s) for s in seeds]
    if world_ids is None:
        world_ids = range(len(seeds))
    n_worlds = len(seeds)
    draws = [_world_uniforms(s, horizon, n_items) for s in seeds]
    uniforms = np.stack([d[0] for d in draws], axis=1)  # (horizon, R, 3)

    tables = _SignalTables(n_items, horizon, condition, policy.rank_bias)
    cdf = rating_cdf(appeals)
    rows = np.arange(n_worlds)
    downloads = np.zeros((n_worlds, n_items), dtype=np.int64)

    item = np.empty((n_worlds, horizon), dtype=np.int64)
    shown = np.empty((n_worlds, horizon))
    rating = np.empty((n_worlds, horizon), dtype=np.int64)
    got = np.empty((n_worlds, horizon), dtype=bool)
    pop_rank = np.empty((n_worlds, horizon), dtype=np.int64)
    top = np.empty((n_worlds, horizon))

    for t in range(horizon):
        ranks = _popularity_ranks(downloads)
        signals = tables.signals(downloads, ranks)
        u = uniforms[t]
        if mask[t]:
            chosen = np.full(n_worlds, target)
            r = np.full(n_worlds, 5)
            d = np.ones(n_worlds, dtype=bool)
        else:
            cum = np.cumsum(_logit_weights(appeals, signals, policy), axis=1)
            x = u[:, 0] * cum[:, -1]
            chosen = np.minimum(np.sum(cum < x[:, None], axis=1), n_items - 1)
            r = _ratings_from_cdf(cdf[chosen], u[:, 1])
            d = u[:, 2] < (r - 1) / 4
        item[:, t] = chosen
        shown[:, t] = signals[rows, chosen]
        rating[:, t] = r
        got[:, t] = d
        pop_rank[:, t] = ranks[rows, chosen]
        top[:, t] = signals.max(axis=1)
        downloads[rows, chosen] += d

    agent = np.arange(horizon) // policy.actions_per_agent
    agent = np.where(mask, -1, agent)
    traces = []
    for w in range(n_worlds):
        if condition is InfluenceCondition.STRONG:
            order = popularity_order(downloads[w])
        elif condition is InfluenceCondition.WEAK:
            order = draws[w][1]
        else:
            order = np.arange(n_items)
        traces.append(RealizationTrace(
            condition=condition, world_seed=seeds[w], appeals=appeals, policy=policy,
            agent_id=agent, item_id=item[w], signal_shown=shown[w], rating=rating[w],
            downloaded=got[w], is_puppet=mask, popularity_rank=pop_rank[w], top_signal=top[w],
            display_order=order, world_id=int(world_ids[w])))
    return traces


def run_realization(config: MarketConfig, condition, world_seed: int, puppets=None, *,
                    appeals) -> RealizationTrace:
    return simulate_worlds(config, condition, [world_seed], appeals, puppets)[0]


def _chunks(n: int, n_jobs: int) -> list[range]:
    n_jobs = max(1, min(n_jobs, n))
    bounds = np.linspace(0, n, n_jobs + 1).astype(int)
    return [range(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def world_seed(master_seed: int, world: int) -> int:
    """World ``w`` draws from stream ``w`` in every condition (common random numbers)."""
    return derive_seed(master_seed, world)


def run_world_set(config: MarketConfig, master_seed: int, n_jobs: int = 1,
                  require_replicates: bool = True) -> WorldSet:
    if require_replicates and config.n_worlds < 2:
        raise ConfigError("unpredictability needs at least 2 worlds per condition "
                          f"(n_worlds={config.n_worlds})")
    appeals = draw_appeals(config, master_seed)
    units = [(c, chunk) for c in config.conditions
             for chunk in _chunks(config.n_worlds, n_jobs)]
    results = Parallel(n_jobs=n_jobs)(
        delayed(simulate_worlds)(config, c, [world_seed(master_seed, w) for w in chunk],
                                 appeals, None, list(chunk))
        for c, chunk in units)
    ws = WorldSet(config, master_seed, appeals, {c: [] for c in config.conditions})
    for (c, _), traces in zip(units, results):
        ws.traces[c].extend(traces)
    return ws
