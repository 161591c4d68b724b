"""Two-stage takeover game between co-resisters and an attacker.

The resisters commit an allocation over their candidate list first; the
attacker observes it and picks the cheapest power plus allocation that wins
``t`` seats. The attacker wins exact ties throughout this module.

Closed forms live next to :func:`brute_force_equilibrium`, an exhaustive
backward-induction oracle that derives the same numbers from raw feasibility
constraints and simulated elections, without using the amplification
coefficients.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

from .core import Rule, SystemConfig, VotingPower, elect, split_evenly
from .errors import ConfigError, ResourceBoundError, UnsupportedRuleError

DEFAULT_MAX_STRATEGIES = 200_000


class Side(str, Enum):
    ATTACKER = "attacker"
    RESISTER = "resister"


@dataclass(frozen=True)
class Amplification:
    zeta_a: int
    zeta_r: int


@dataclass(frozen=True)
class Strategy:
    side: Side
    allocations: tuple[tuple[str, VotingPower], ...]

    @property
    def total(self) -> VotingPower:
        return sum(p for _, p in self.allocations)

    def sorted_powers(self) -> list[VotingPower]:
        return sorted((p for _, p in self.allocations), reverse=True)

    def as_dict(self) -> dict[str, VotingPower]:
        return dict(self.allocations)


@dataclass(frozen=True)
class EquilibriumReport:
    s_a_hat: Strategy
    s_r_hat: Strategy
    R_A: VotingPower
    upper_bound: VotingPower
    amplification: Amplification
    payoffs: tuple[int, int]
    at_upper_bound: bool
    strategies_examined: int = 0


@dataclass(frozen=True)
class UpperBound:
    factor: Fraction
    supermajority: bool
    v_attains: bool


@dataclass(frozen=True)
class C2CResult:
    R_A: VotingPower
    z_attacker: int
    z_resister: int
    upper_factor: int


@dataclass(frozen=True)
class GameInstance:
    config: SystemConfig
    p_r: VotingPower
    max_strategies: int = DEFAULT_MAX_STRATEGIES


def _ids(prefix: str, count: int) -> list[str]:
    width = len(str(count))
    return [f"{prefix}{i:0{width}d}" for i in range(1, count + 1)]


def amplification(config: SystemConfig) -> Amplification:
    if config.rule is Rule.CUMULATIVE:
        return Amplification(1, 1)
    return Amplification(min(config.v, config.t), min(config.v, config.resist_seats))


def resister_strategy(p_r: VotingPower, config: SystemConfig) -> Strategy:
    """Spread the amplified resister power evenly over n - t + 1 candidates."""
    k = config.resist_seats
    if k < 1:
        raise ConfigError("n - t + 1 must be at least 1")
    zeta_r = amplification(config).zeta_r
    shares = [min(s, p_r) for s in split_evenly(zeta_r * p_r, k)]
    return Strategy(Side.RESISTER, tuple(zip(_ids("R", k), shares)))


def weakest_blocking_power(resister: Strategy, config: SystemConfig) -> VotingPower:
    """The (n-t+1)-th largest resister allocation, 0 when there are fewer."""
    ranked = resister.sorted_powers()
    k = config.resist_seats
    return ranked[k - 1] if len(ranked) >= k else 0


def attacker_best_response(
    resister: Strategy, config: SystemConfig
) -> tuple[Strategy, VotingPower]:
    """Match the weakest blocking allocation on exactly t fresh candidates."""
    target = weakest_blocking_power(resister, config)
    zeta_a = amplification(config).zeta_a
    p_a = -(-config.t * target // zeta_a)
    allocs = tuple((c, target) for c in _ids("A", config.t))
    return Strategy(Side.ATTACKER, allocs), p_a


def active_resistance(p_r: VotingPower, config: SystemConfig) -> VotingPower:
    """Equilibrium attacker power against resisters holding ``p_r`` units.

    Computed on whole units: the resisters' weakest share is floored and the
    attacker's requirement is rounded up. Equals the exact rational
    :func:`active_resistance_exact` whenever the shares divide evenly.
    """
    _, p_a = attacker_best_response(resister_strategy(p_r, config), config)
    return p_a


def active_resistance_exact(p_r: VotingPower, config: SystemConfig) -> Fraction:
    amp = amplification(config)
    return Fraction(amp.zeta_r * config.t * p_r, amp.zeta_a * config.resist_seats)


def upper_bound_factor(config: SystemConfig) -> UpperBound:
    """t / (n - t + 1), the best attainable multiple of resister power."""
    if not config.supermajority:
        warnings.warn(
            f"t={config.t}, n={config.n} is not a supermajority (2n/3 < t < n); "
            "the bound is not guaranteed",
            stacklevel=2,
        )
    return UpperBound(
        factor=Fraction(config.t, config.resist_seats),
        supermajority=config.supermajority,
        v_attains=config.v <= config.resist_seats,
    )


def c2c_resistance(p_r: VotingPower, config: SystemConfig) -> C2CResult:
    """Resistance when both sides are communities pooling through simple calls.

    Each pool votes ``v`` candidates, so the attacker needs ceil(t/v) pools and
    the resisters ceil((n-t+1)/v); per-candidate power is the side's power over
    its pool count.
    """
    if config.rule is not Rule.APPROVAL:
        raise UnsupportedRuleError(
            "community-to-community resistance is defined for approval voting only"
        )
    z_a = -(-config.t // config.v)
    z_r = -(-config.resist_seats // config.v)
    return C2CResult(
        R_A=z_a * p_r // z_r,
        z_attacker=z_a,
        z_resister=z_r,
        upper_factor=-(-config.t // config.resist_seats),
    )


def equilibrium(p_r: VotingPower, config: SystemConfig) -> EquilibriumReport:
    """Closed-form equilibrium report."""
    amp = amplification(config)
    s_r = resister_strategy(p_r, config)
    s_a, p_a = attacker_best_response(s_r, config)
    bound = config.t * p_r // config.resist_seats
    return EquilibriumReport(
        s_a_hat=s_a,
        s_r_hat=s_r,
        R_A=p_a,
        upper_bound=bound,
        amplification=amp,
        payoffs=(amp.zeta_a * p_a, -amp.zeta_a * p_a),
        at_upper_bound=p_a == bound,
    )


def takeover_succeeds(attacker: Strategy, resister: Strategy, config: SystemConfig) -> bool:
    """Run the election between both allocations, attacker winning ties."""
    scores = dict(resister.allocations)
    scores.update(attacker.allocations)
    favored = [c for c, _ in attacker.allocations]
    committee = elect(scores, config, favored=favored)
    return len(set(committee.members) & set(favored)) >= config.t


# -- exhaustive oracle ------------------------------------------------------

def _vote_reuse(config: SystemConfig) -> int:
    # How many candidates one power unit may back: v under approval, 1 under
    # cumulative. The oracle works from this raw limit, not from zeta.
    return config.v if config.rule is Rule.APPROVAL else 1


def count_resister_strategies(p_r: VotingPower, config: SystemConfig) -> int:
    """Ordered allocations over n slots with each slot <= p_r, sum <= reuse * p_r."""
    budget = _vote_reuse(config) * p_r
    ways = [1] + [0] * budget
    for _ in range(config.n):
        nxt = [0] * (budget + 1)
        for used, w in enumerate(ways):
            if not w:
                continue
            for x in range(min(p_r, budget - used) + 1):
                nxt[used + x] += w
        ways = nxt
    return sum(ways)


def count_attacker_seats(attacker: tuple[int, ...], resister: tuple[int, ...], n: int) -> int:
    """Attacker candidates among the top n; both inputs sorted descending."""
    i = j = seats = 0
    for _ in range(n):
        if i < len(attacker) and (j >= len(resister) or attacker[i] >= resister[j]):
            seats += 1
            i += 1
        elif j < len(resister):
            j += 1
        else:
            break
    return seats


def cheapest_takeover(
    resister: tuple[int, ...], config: SystemConfig
) -> tuple[VotingPower, tuple[int, ...]]:
    """Minimum attacker power (and an allocation) winning >= t seats.

    Only allocation values equal to 0 or to some resister allocation need to be
    tried: lowering any attacker share to the nearest such value leaves every
    head-to-head comparison unchanged (ties go to the attacker) and never
    raises the power required.
    """
    resister = tuple(sorted(resister, reverse=True))
    reuse = _vote_reuse(config)
    levels = sorted(set(resister) | {0}, reverse=True)
    best: tuple[VotingPower, tuple[int, ...]] | None = None
    for alloc in itertools.combinations_with_replacement(levels, config.n):
        if count_attacker_seats(alloc, resister, config.n) < config.t:
            continue
        need = max(alloc[0], -(-sum(alloc) // reuse))
        if best is None or need < best[0]:
            best = (need, alloc)
    assert best is not None  # all-max allocation always wins
    return best


def brute_force_equilibrium(instance: GameInstance) -> EquilibriumReport:
    """Solve the game by enumerating every resister pure strategy.

    Each subgame (one resister allocation) is solved by searching attacker
    allocations and simulating the election; the resisters then pick the
    allocation that forces the largest attacker power. Ties between resister
    strategies resolve to the lexicographically smallest allocation vector.
    """
    config, p_r = instance.config, instance.p_r
    count = count_resister_strategies(p_r, config)
    if count > instance.max_strategies:
        raise ResourceBoundError(
            f"{count} resister strategies exceed the bound of {instance.max_strategies}",
            count,
        )
    budget = _vote_reuse(config) * p_r
    solved: dict[tuple[int, ...], tuple[VotingPower, tuple[int, ...]]] = {}
    best_value = -1
    best_vec: tuple[int, ...] = ()
    examined = 0
    for vec in itertools.product(range(p_r + 1), repeat=config.n):
        if sum(vec) > budget:
            continue
        examined += 1
        key = tuple(sorted(vec, reverse=True))
        if key not in solved:
            solved[key] = cheapest_takeover(key, config)
        value = solved[key][0]
        if value > best_value:
            best_value, best_vec = value, vec
    attacker_alloc = solved[tuple(sorted(best_vec, reverse=True))][1]

    amp = amplification(config)
    bound = config.t * p_r // config.resist_seats
    s_r = Strategy(
        Side.RESISTER,
        tuple((c, x) for c, x in zip(_ids("R", config.n), best_vec) if x),
    )
    s_a = Strategy(
        Side.ATTACKER,
        tuple((c, y) for c, y in zip(_ids("A", config.n), attacker_alloc) if y),
    )
    return EquilibriumReport(
        s_a_hat=s_a,
        s_r_hat=s_r,
        R_A=best_value,
        upper_bound=bound,
        amplification=amp,
        payoffs=(amp.zeta_a * best_value, -amp.zeta_a * best_value),
        at_upper_bound=best_value == bound,
        strategies_examined=examined,
    )
