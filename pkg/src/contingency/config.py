"""Experiment configuration: one strict JSON document.

Example::

    {"mode": "urn", "master_seed": 42, "n_runs": 1,
     "urn": {"initial": [1, 1], "gamma": 1.0, "steps": 1000}}

Unknown keys are rejected; every field violation is reported, not only the first.
"""
from __future__ import annotations

import json
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError
from .market import InfluenceCondition, MarketConfig
from .urn import UrnRule, UrnState

U64_MAX = (1 << 64) - 1

SWEEPABLE = ("alpha", "beta", "rank_bias", "n_items", "n_agents", "actions_per_agent",
             "appeal_low", "appeal_high", "n_worlds")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class UrnParams(_Strict):
    initial: List[int] = Field(default=[1, 1], min_length=1)
    gamma: float = Field(default=1.0, ge=0, allow_inf_nan=False)
    increment: int = Field(default=1, ge=1)
    steps: int = Field(default=1000, ge=1)

    @model_validator(mode="after")
    def _positive_counts(self):
        if any(c < 1 for c in self.initial):
            raise ValueError(f"initial counts must be positive integers, got {self.initial}")
        return self

    @property
    def state(self) -> UrnState:
        return UrnState(tuple(self.initial))

    @property
    def rule(self) -> UrnRule:
        return UrnRule(self.gamma, self.increment)


class MarketParams(_Strict):
    n_items: int = Field(default=50, ge=1)
    n_agents: int = Field(default=1200, ge=1)
    actions_per_agent: int = Field(default=1, ge=1)
    alpha: float = Field(default=1.0, ge=0, allow_inf_nan=False)
    beta: float = Field(default=1.0, ge=0, allow_inf_nan=False)
    rank_bias: float = Field(default=1.0, ge=0, allow_inf_nan=False)
    appeal_low: float = Field(default=0.2, ge=0, le=1)
    appeal_high: float = Field(default=0.8, ge=0, le=1)
    conditions: List[InfluenceCondition] = Field(
        default=[InfluenceCondition.INDEPENDENT, InfluenceCondition.WEAK,
                 InfluenceCondition.STRONG], min_length=1)
    n_worlds: int = Field(default=8, ge=1)
    unpredictability: bool = True
    fractions: List[float] = Field(default=[0.05, 0.1, 0.15, 0.2, 0.3, 0.5, 0.75, 1.0],
                                   min_length=1)
    n_bins: int = Field(default=8, ge=2)

    @model_validator(mode="after")
    def _cross_fields(self):
        errors = []
        if self.appeal_low > self.appeal_high:
            errors.append(f"appeal_low ({self.appeal_low}) exceeds appeal_high "
                          f"({self.appeal_high})")
        if any(not 0 < f <= 1 for f in self.fractions):
            errors.append(f"fractions must lie in (0, 1], got {self.fractions}")
        if any(b <= a for a, b in zip(self.fractions, self.fractions[1:])):
            errors.append("fractions must be strictly increasing")
        if len(set(self.conditions)) != len(self.conditions):
            errors.append("conditions must not repeat")
        if errors:
            raise ValueError("; ".join(errors))
        return self

    def to_market(self, **overrides) -> MarketConfig:
        fields = {k: getattr(self, k) for k in (
            "n_items", "n_agents", "actions_per_agent", "alpha", "beta", "rank_bias",
            "appeal_low", "appeal_high", "n_worlds")}
        fields.update(overrides)
        return MarketConfig(conditions=tuple(self.conditions), **fields)


class SweepParams(_Strict):
    parameter: Literal[SWEEPABLE]
    values: List[float] = Field(min_length=1)


class PuppetParams(_Strict):
    target: Union[int, Literal["lowest_appeal"]] = "lowest_appeal"
    k: int = Field(default=20, ge=0)
    steps: Optional[List[int]] = None
    condition: InfluenceCondition = InfluenceCondition.STRONG
    window: int = Field(default=20, ge=5)
    threshold: float = Field(default=100.0, ge=0)

    @model_validator(mode="after")
    def _steps_match_k(self):
        if self.steps is not None:
            if len(self.steps) != self.k:
                raise ValueError(f"steps lists {len(self.steps)} entries but k={self.k}")
            if any(b <= a for a, b in zip(self.steps, self.steps[1:])):
                raise ValueError("puppet steps must be strictly increasing")
            if self.steps and self.steps[0] < 1:
                raise ValueError("puppet steps are 1-based")
        return self

    @property
    def schedule_steps(self) -> tuple[int, ...]:
        return tuple(self.steps) if self.steps is not None else tuple(range(1, self.k + 1))


class ExperimentConfig(_Strict):
    mode: Literal["urn", "market", "sweep", "inject"]
    master_seed: int = Field(default=0, ge=0, le=U64_MAX)
    n_runs: int = Field(default=1, ge=1)
    output_dir: str = "out"
    decimation: int = Field(default=1, ge=1)
    urn: UrnParams = UrnParams()
    market: MarketParams = MarketParams()
    sweep: Optional[SweepParams] = None
    puppets: Optional[PuppetParams] = None

    @model_validator(mode="after")
    def _cross_fields(self):
        errors = []
        needs_worlds = self.mode in ("market", "sweep")
        if needs_worlds and self.market.unpredictability and self.market.n_worlds < 2:
            errors.append("market.n_worlds: unpredictability needs at least 2 worlds "
                          f"per condition, got {self.market.n_worlds}")
        if self.mode == "sweep" and self.sweep is None:
            errors.append("sweep: required when mode is 'sweep'")
        if self.mode == "inject":
            if self.puppets is None:
                errors.append("puppets: required when mode is 'inject'")
            else:
                horizon = self.market.n_agents * self.market.actions_per_agent
                steps = self.puppets.schedule_steps
                if steps and steps[-1] > horizon:
                    errors.append(f"puppets.steps: step {steps[-1]} beyond horizon {horizon}")
                t = self.puppets.target
                if isinstance(t, int) and not 0 <= t < self.market.n_items:
                    errors.append(f"puppets.target: {t} outside 0..{self.market.n_items - 1}")
            if self.n_runs < 2:
                errors.append(f"n_runs: inject mode needs at least 2 paired runs, "
                              f"got {self.n_runs}")
        if self.sweep is not None:
            for v in self.sweep.values:
                try:
                    self.market.to_market(**{self.sweep.parameter: _sweep_value(
                        self.sweep.parameter, v)})
                except (ConfigError, ValueError) as exc:
                    errors.append(f"sweep.values: {v} invalid for "
                                  f"{self.sweep.parameter}: {exc}")
        if errors:
            raise ValueError("; ".join(errors))
        return self

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def _sweep_value(parameter: str, value: float):
    if parameter in ("n_items", "n_agents", "actions_per_agent", "n_worlds"):
        if value != int(value):
            raise ValueError(f"{parameter} must be an integer, got {value}")
        return int(value)
    return float(value)


def _format_error(err: dict) -> str:
    loc = ".".join(str(p) for p in err["loc"]) or "config"
    msg = err["msg"].removeprefix("Value error, ")
    if err["type"] == "extra_forbidden":
        return f"{loc}: unknown key"
    if "input" in err and err["type"] not in ("value_error", "missing"):
        return f"{loc}: {msg} (got {err['input']!r})"
    return f"{loc}: {msg}"


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a JSON config; raises ConfigError listing every problem."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"syntax error at line {exc.lineno} column {exc.colno}: {exc.msg}")
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        messages = []
        for err in exc.errors():
            if not err["loc"] and err["type"] == "value_error":
                # cross-field checks join their findings with "; "
                messages.extend(_format_error(err).removeprefix("config: ").split("; "))
            else:
                messages.append(_format_error(err))
        raise ConfigError(messages) from None


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise ConfigError(f"config {path} is not valid UTF-8") from None
    return parse_config(text)
