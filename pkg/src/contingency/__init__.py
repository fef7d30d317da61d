"""Reinforcement urns, artificial cultural markets and predictability metrics."""
from .errors import ConfigError, InsufficientDataError, InvalidStateError
from .intervention import (DetectionReport, PuppetSchedule, apply_puppets, detect_bursts,
                           win_probability_shift)
from .market import (AgentPolicy, InfluenceCondition, Item, MarketConfig, MarketState,
                     RealizationTrace, WorldSet, choice_probabilities, download_decision,
                     run_realization, run_world_set, simulate_listen, social_signal)
from .observers import (MetricsReport, PredictionCurve, early_leader_prediction,
                        ex_ante_predictability, gini, ks_uniform_statistic,
                        martingale_residual, rigidity_index, unpredictability)
from .rng import SeedStream, derive_seed
from .urn import (ShareTrajectory, UrnRule, UrnState, final_share_ensemble, run_urn,
                  urn_step)

__version__ = "0.1.0"
