"""Three-phase coin-based voting governance: staking, voting, governing.

Voting power is always an ``int`` counting smallest power units (delta).
Nothing in this module touches floats.
"""

from __future__ import annotations

import datetime as dt
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from fractions import Fraction
from types import MappingProxyType

from .errors import ConfigError, DomainError, ValidationError

VoterId = str
CandidateId = str
VotingPower = int

Number = int | Fraction | Decimal | str


class Rule(str, Enum):
    APPROVAL = "approval"
    CUMULATIVE = "cumulative"

    @property
    def short(self) -> str:
        return "AV" if self is Rule.APPROVAL else "CV"

    @classmethod
    def parse(cls, text: str) -> Rule:
        key = text.strip().lower()
        if key in ("av", "approval"):
            return cls.APPROVAL
        if key in ("cv", "cumulative"):
            return cls.CUMULATIVE
        raise ConfigError(f"unknown voting rule {text!r} (expected av or cv)")


def as_fraction(value: Number) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, Decimal)):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise DomainError(f"not a decimal number: {value!r}") from exc
    raise DomainError(f"unsupported numeric type {type(value).__name__}")


@dataclass(frozen=True)
class SystemConfig:
    """One governance design choice: voting rule plus (v, t, n, lambda, delta).

    ``lam`` is the staking coefficient in delta units per coin; ``delta`` is
    the size of one power unit and is carried for reporting only.
    """

    rule: Rule
    v: int
    n: int
    t: int
    lam: Fraction = Fraction(1)
    delta: int = 1
    name: str = "custom"

    def __post_init__(self) -> None:
        object.__setattr__(self, "rule", Rule(self.rule))
        object.__setattr__(self, "lam", as_fraction(self.lam))
        for attr in ("v", "n", "t", "delta"):
            value = getattr(self, attr)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"{attr} must be a positive integer, got {value!r}")
        if not 1 <= self.t <= self.n:
            raise ConfigError(f"need 1 <= t <= n, got t={self.t}, n={self.n}")
        if self.lam <= 0:
            raise ConfigError(f"lambda must be positive, got {self.lam}")

    @property
    def resist_seats(self) -> int:
        """n - t + 1: seats the defenders must hold to block a proposal."""
        return self.n - self.t + 1

    @property
    def supermajority(self) -> bool:
        return 2 * self.n < 3 * self.t and self.t < self.n

    def replace(self, **changes) -> SystemConfig:
        fields = {
            "rule": self.rule, "v": self.v, "n": self.n, "t": self.t,
            "lam": self.lam, "delta": self.delta, "name": self.name,
        }
        fields.update(changes)
        return SystemConfig(**fields)

    def describe(self) -> str:
        return (
            f"rule={self.rule.short} v={self.v} t={self.t} n={self.n} "
            f"lambda={self.lam} delta={self.delta}"
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name, "rule": self.rule.value, "v": self.v, "t": self.t,
            "n": self.n, "lambda": str(self.lam), "delta": self.delta,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> SystemConfig:
        return cls(
            rule=Rule.parse(data["rule"]), v=int(data["v"]), n=int(data["n"]),
            t=int(data["t"]), lam=as_fraction(str(data.get("lambda", "1"))),
            delta=int(data.get("delta", 1)), name=data.get("name", "custom"),
        )


# Steem's 21st seat rotates outside the elected top 20, so only 20 seats count.
PRESETS: Mapping[str, SystemConfig] = MappingProxyType({
    "eosio": SystemConfig(Rule.APPROVAL, v=30, n=21, t=15, lam=Fraction(1), name="eosio"),
    "steem": SystemConfig(Rule.APPROVAL, v=30, n=20, t=17, lam=Fraction(2000), name="steem"),
    "tron": SystemConfig(Rule.CUMULATIVE, v=30, n=27, t=19, lam=Fraction(1), name="tron"),
})


def preset(name: str) -> SystemConfig:
    try:
        return PRESETS[name.lower()]
    except KeyError:
        raise ConfigError(
            f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}"
        ) from None


# -- phase 1: (un)staking -------------------------------------------------

def stake(coins: Number, lam: Number) -> VotingPower:
    """Convert staked coins to voting power, floored to whole units."""
    c = as_fraction(coins)
    if c < 0:
        raise DomainError(f"cannot stake a negative amount of coins ({coins})")
    k = as_fraction(lam)
    if k <= 0:
        raise DomainError(f"lambda must be positive, got {lam}")
    return math.floor(c * k)


def unstake(power: VotingPower, lam: Number) -> Fraction:
    """Inverse of :func:`stake`: the coins backing ``power`` units."""
    if power < 0:
        raise DomainError(f"cannot unstake negative power ({power})")
    k = as_fraction(lam)
    if k <= 0:
        raise DomainError(f"lambda must be positive, got {lam}")
    return Fraction(power) / k


# -- phase 2: liquid democracy + (v, n)-voting ----------------------------

def resolve_delegations(
    powers: Mapping[VoterId, VotingPower],
    delegations: Mapping[VoterId, VoterId],
) -> dict[VoterId, VotingPower]:
    """Aggregate every voter's power at the root (guru) of its delegation chain.

    Voters missing from ``delegations`` vote for themselves. Delegating voters
    do not appear in the result. Raises :class:`ValidationError` on a dangling
    target or a delegation cycle.
    """
    for voter, target in delegations.items():
        if voter not in powers:
            raise ValidationError(f"delegating voter {voter!r} has no power entry")
        if target not in powers:
            raise ValidationError(
                f"voter {voter!r} delegates to unknown voter {target!r}"
            )

    root_of: dict[VoterId, VoterId] = {}
    for start in powers:
        if start in root_of:
            continue
        path: list[VoterId] = []
        on_path: set[VoterId] = set()
        node = start
        while True:
            if node in root_of:
                root = root_of[node]
                break
            nxt = delegations.get(node, node)
            if nxt == node:
                root = node
                break
            if node in on_path:
                cycle = path[path.index(node):]
                raise ValidationError(
                    "delegation cycle: " + " -> ".join(cycle + [node])
                )
            path.append(node)
            on_path.add(node)
            node = nxt
        for member in path:
            root_of[member] = root
        root_of[root] = root

    gurus: dict[VoterId, VotingPower] = {}
    for voter, power in powers.items():
        if power < 0:
            raise ValidationError(f"voter {voter!r} has negative power {power}")
        root = root_of[voter]
        gurus[root] = gurus.get(root, 0) + power
    return gurus


def _check_ballot(voter: VoterId, candidates: Sequence[CandidateId], v: int) -> None:
    if len(candidates) > v:
        raise ValidationError(
            f"voter {voter!r} casts {len(candidates)} votes, more than v={v}"
        )
    if len(set(candidates)) != len(candidates):
        raise ValidationError(f"voter {voter!r} lists a candidate twice")


def tally_approval(
    gurus: Mapping[VoterId, VotingPower],
    profile: Mapping[VoterId, Sequence[CandidateId]],
    config: SystemConfig,
) -> dict[CandidateId, VotingPower]:
    """Each listed candidate receives the voter's full aggregated power."""
    scores: dict[CandidateId, VotingPower] = {}
    for voter, candidates in profile.items():
        if voter not in gurus:
            raise ValidationError(f"approval profile names unknown voter {voter!r}")
        _check_ballot(voter, candidates, config.v)
        weight = gurus[voter]
        for cand in candidates:
            scores[cand] = scores.get(cand, 0) + weight
    return scores


def tally_cumulative(
    gurus: Mapping[VoterId, VotingPower],
    profile: Mapping[VoterId, Sequence[tuple[CandidateId, VotingPower]]],
    config: SystemConfig,
) -> dict[CandidateId, VotingPower]:
    """Each candidate receives exactly the share allocated to it."""
    scores: dict[CandidateId, VotingPower] = {}
    for voter, allocations in profile.items():
        if voter not in gurus:
            raise ValidationError(f"cumulative profile names unknown voter {voter!r}")
        _check_ballot(voter, [c for c, _ in allocations], config.v)
        spent = 0
        for cand, amount in allocations:
            if amount < 0:
                raise ValidationError(
                    f"voter {voter!r} allocates negative power to {cand!r}"
                )
            spent += amount
        if spent > gurus[voter]:
            raise ValidationError(
                f"voter {voter!r} allocates {spent}, exceeding its power "
                f"{gurus[voter]} by {spent - gurus[voter]}"
            )
        for cand, amount in allocations:
            scores[cand] = scores.get(cand, 0) + amount
    return scores


def split_evenly(total: VotingPower, parts: int) -> list[VotingPower]:
    """Floor share per part, remainder one unit at a time to the first parts."""
    if parts < 1:
        raise ValidationError("cannot split power across zero parts")
    base, rem = divmod(total, parts)
    return [base + 1 if i < rem else base for i in range(parts)]


@dataclass(frozen=True)
class Committee:
    """Elected top-n candidates, highest power first."""

    entries: tuple[tuple[CandidateId, VotingPower], ...]

    @property
    def tau(self) -> VotingPower:
        return sum(score for _, score in self.entries)

    @property
    def members(self) -> tuple[CandidateId, ...]:
        return tuple(c for c, _ in self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def rank_candidates(
    scores: Mapping[CandidateId, VotingPower],
    favored: Iterable[CandidateId] = (),
) -> list[tuple[CandidateId, VotingPower]]:
    """Full ranking: score descending, then favored first, then id ascending.

    ``favored`` lets attack simulations apply the attacker-wins-ties rule;
    neutral elections leave it empty.
    """
    fav = frozenset(favored)
    return sorted(scores.items(), key=lambda kv: (-kv[1], kv[0] not in fav, kv[0]))


def elect(
    scores: Mapping[CandidateId, VotingPower],
    config: SystemConfig,
    favored: Iterable[CandidateId] = (),
) -> Committee:
    return Committee(tuple(rank_candidates(scores, favored)[: config.n]))


# -- phase 3: (t, n)-governing --------------------------------------------

def passes(
    approvals: Iterable[CandidateId], committee: Committee, config: SystemConfig
) -> bool:
    return len(set(approvals) & set(committee.members)) >= config.t


# -- snapshot and state types ---------------------------------------------

@dataclass(frozen=True)
class PowerSnapshot:
    """End-of-day voting power per guru (own plus delegated-in)."""

    date: dt.date
    powers: Mapping[VoterId, VotingPower]

    def __post_init__(self) -> None:
        for voter, p in self.powers.items():
            if p < 0:
                raise ValidationError(f"{self.date}: voter {voter!r} has negative power")
        object.__setattr__(self, "powers", MappingProxyType(dict(sorted(self.powers.items()))))

    @property
    def total(self) -> VotingPower:
        return sum(self.powers.values())


@dataclass(frozen=True)
class VotingSnapshot:
    """End-of-day priority-ordered candidate list per voter."""

    date: dt.date
    profiles: Mapping[VoterId, tuple[CandidateId, ...]]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "profiles",
            MappingProxyType({k: tuple(v) for k, v in sorted(self.profiles.items())}),
        )


@dataclass(frozen=True)
class VotingState:
    """Voter powers, delegations and ballots at one point in time.

    ``approvals`` holds priority-ordered candidate lists. For cumulative
    tallies, explicit ``allocations`` are used when given; otherwise each
    guru's power is split evenly over its list.
    """

    powers: Mapping[VoterId, VotingPower]
    approvals: Mapping[VoterId, Sequence[CandidateId]] = field(default_factory=dict)
    delegations: Mapping[VoterId, VoterId] = field(default_factory=dict)
    allocations: Mapping[VoterId, Sequence[tuple[CandidateId, VotingPower]]] | None = None

    def gurus(self) -> dict[VoterId, VotingPower]:
        return resolve_delegations(self.powers, self.delegations)

    def scores(self, config: SystemConfig) -> dict[CandidateId, VotingPower]:
        gurus = self.gurus()
        if config.rule is Rule.APPROVAL:
            ballots = {v: list(c) for v, c in self.approvals.items() if v in gurus}
            return tally_approval(gurus, ballots, config)
        if self.allocations is not None:
            alloc = {v: list(a) for v, a in self.allocations.items() if v in gurus}
        else:
            alloc = {
                v: list(zip(c, split_evenly(gurus[v], len(c))))
                for v, c in self.approvals.items()
                if v in gurus and c
            }
        return tally_cumulative(gurus, alloc, config)

    @classmethod
    def from_snapshots(cls, power: PowerSnapshot, votes: VotingSnapshot) -> VotingState:
        if power.date != votes.date:
            raise ValidationError(
                f"power snapshot {power.date} paired with voting snapshot {votes.date}"
            )
        return cls(powers=dict(power.powers), approvals=dict(votes.profiles))
