"""Governance and takeover-resistance analysis for coin-based committee voting."""

from .core import (
    PRESETS,
    Committee,
    PowerSnapshot,
    Rule,
    SystemConfig,
    VotingSnapshot,
    VotingState,
    elect,
    passes,
    preset,
    resolve_delegations,
    stake,
    tally_approval,
    tally_cumulative,
    unstake,
)
from .errors import (
    ConfigError,
    DateOutOfRange,
    DomainError,
    GovernanceError,
    IngestError,
    ResourceBoundError,
    UnsupportedRuleError,
    ValidationError,
)
from .game import (
    active_resistance,
    amplification,
    attacker_best_response,
    brute_force_equilibrium,
    c2c_resistance,
    equilibrium,
    resister_strategy,
    upper_bound_factor,
)
from .metrics import classify_resisters, passive_resistance, risk_index, simulate_takeover
from .store import ingest, load_dataset, replay, save_dataset

__all__ = [name for name in dir() if not name.startswith("_")]
