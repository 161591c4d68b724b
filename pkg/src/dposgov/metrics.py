"""Passive resistance, the takeover risk index, and resister classification."""

from __future__ import annotations

import datetime as dt
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

from .core import (
    CandidateId,
    Committee,
    PowerSnapshot,
    Rule,
    SystemConfig,
    VoterId,
    VotingPower,
    VotingState,
    elect,
    rank_candidates,
    split_evenly,
)
from .errors import ValidationError
from .game import amplification
from .store import ChainDataset, EventKind, EventLog


def kth_largest(scores: Mapping[CandidateId, VotingPower], k: int) -> VotingPower:
    """Score of the k-th ranked candidate, 0 if fewer than k candidates."""
    ranked = rank_candidates(scores)
    return ranked[k - 1][1] if len(ranked) >= k else 0


def passive_resistance(scores: Mapping[CandidateId, VotingPower], config: SystemConfig) -> VotingPower:
    """Smallest attacker power that beats the (n-t+1)-th candidate on t seats."""
    weakest = kth_largest(scores, config.resist_seats)
    zeta_a = amplification(config).zeta_a
    return -(-config.t * weakest // zeta_a)


class RiskIndex(NamedTuple):
    value: int
    reachable: bool


def risk_index(
    snapshot: PowerSnapshot | Mapping[VoterId, VotingPower], r_p: VotingPower
) -> RiskIndex:
    """Fewest top voters whose combined power reaches ``r_p``.

    Reaching counts (ties go to the attacker). When even every voter together
    falls short, returns ``voter count + 1`` with ``reachable=False``.
    """
    powers = snapshot.powers if isinstance(snapshot, PowerSnapshot) else snapshot
    if r_p <= 0:
        return RiskIndex(0, True)
    ranked = sorted((p for p in powers.values() if p > 0), reverse=True)
    total = 0
    for i, p in enumerate(ranked, start=1):
        total += p
        if total >= r_p:
            return RiskIndex(i, True)
    return RiskIndex(len(ranked) + 1, False)


@dataclass(frozen=True)
class DailyRisk:
    date: dt.date
    weakest_blocking: VotingPower
    r_p: VotingPower
    i_t: int
    reachable: bool


def risk_series(
    dataset: ChainDataset,
    config: SystemConfig | None = None,
    start: dt.date | None = None,
    end: dt.date | None = None,
) -> list[DailyRisk]:
    """Per-day R_P and I_t over the dataset (or a sub-range of it)."""
    config = config or dataset.config
    out = []
    for power, votes in dataset.pairs():
        if (start and power.date < start) or (end and power.date > end):
            continue
        scores = VotingState.from_snapshots(power, votes).scores(config)
        weakest = kth_largest(scores, config.resist_seats)
        r_p = passive_resistance(scores, config)
        idx = risk_index(power, r_p)
        out.append(DailyRisk(power.date, weakest, r_p, idx.value, idx.reachable))
    return out


# -- takeover replay ----------------------------------------------------------

@dataclass(frozen=True)
class TakeoverResult:
    before: Committee
    committee: Committee
    rank_shifts: Mapping[CandidateId, int]
    attacker_allocations: tuple[tuple[CandidateId, VotingPower], ...]
    attacker_seats: int
    success: bool


def attacker_allocation(
    attacker_power: VotingPower, candidates: Sequence[CandidateId], config: SystemConfig
) -> list[tuple[CandidateId, VotingPower]]:
    """Spread the attacker's amplified power evenly over its candidates.

    Under approval voting each unit backs up to v candidates, so at most
    max(v, t) candidates are used and no candidate gets more than the raw
    power. Under cumulative voting the power is split once over t candidates.
    """
    cands = sorted(candidates)
    if not cands:
        return []
    if config.rule is Rule.APPROVAL:
        slots = min(len(cands), max(config.v, config.t))
        shares = split_evenly(min(config.v, slots) * attacker_power, slots)
    else:
        slots = min(len(cands), config.t)
        shares = split_evenly(attacker_power, slots)
    return list(zip(cands[:slots], shares))


def simulate_takeover(
    state: VotingState,
    attacker_power: VotingPower,
    attacker_candidates: Iterable[CandidateId],
    config: SystemConfig,
) -> TakeoverResult:
    """Inject an attacker voter, rerun the election, report the damage."""
    if attacker_power < 0:
        raise ValidationError(f"attacker power must be non-negative, got {attacker_power}")
    fresh = sorted(set(attacker_candidates))
    scores = state.scores(config)
    before_rank = rank_candidates(scores)
    before = Committee(tuple(before_rank[: config.n]))
    clash = set(fresh) & set(before.members)
    if clash:
        raise ValidationError(
            "attacker candidates overlap the elected committee: " + ", ".join(sorted(clash))
        )
    allocs = attacker_allocation(attacker_power, fresh, config)
    after_scores = dict(scores)
    for cand, amount in allocs:
        after_scores[cand] = after_scores.get(cand, 0) + amount
    used = [c for c, _ in allocs]
    after_rank = rank_candidates(after_scores, favored=used)
    new_pos = {c: i for i, (c, _) in enumerate(after_rank)}
    shifts = {c: new_pos[c] - i for i, (c, _) in enumerate(before_rank)}
    committee = elect(after_scores, config, favored=used)
    seats = len(set(committee.members) & set(used))
    return TakeoverResult(
        before=before,
        committee=committee,
        rank_shifts=shifts,
        attacker_allocations=tuple(allocs),
        attacker_seats=seats,
        success=seats >= config.t,
    )


# -- resister classification ------------------------------------------------

class Category(str, Enum):
    CO_RESISTER = "co-resister"
    IND_RESISTER = "ind-resister"
    NON_RESISTER = "non-resister"


@dataclass(frozen=True)
class ResisterClassification:
    leader: VoterId
    leader_set: frozenset[CandidateId]
    categories: Mapping[VoterId, Category]
    event_time: dt.datetime
    window: dt.timedelta

    def counts(self) -> dict[Category, int]:
        out = {c: 0 for c in Category}
        for cat in self.categories.values():
            out[cat] += 1
        return out

    def category_of(self, voter: VoterId) -> Category:
        return self.categories.get(voter, Category.NON_RESISTER)


_BALLOT_KINDS = frozenset(
    {EventKind.VOTE, EventKind.UNVOTE, EventKind.DELEGATE, EventKind.UNDELEGATE}
)


def effective_sets(events: EventLog, moment: dt.datetime) -> dict[VoterId, frozenset[CandidateId]]:
    """Each voter's candidate set at ``moment``; delegators inherit their guru's."""
    lists: dict[VoterId, list[CandidateId]] = {}
    proxy: dict[VoterId, VoterId] = {}
    for rec in events:
        if rec.ts > moment:
            break
        if rec.kind is EventKind.VOTE:
            lists[rec.voter] = list(rec.candidates)
        elif rec.kind is EventKind.UNVOTE:
            if rec.candidates is None:
                lists.pop(rec.voter, None)
            else:
                drop = set(rec.candidates)
                lists[rec.voter] = [c for c in lists.get(rec.voter, []) if c not in drop]
        elif rec.kind is EventKind.DELEGATE:
            if rec.target == rec.voter:
                proxy.pop(rec.voter, None)
            else:
                proxy[rec.voter] = rec.target
        elif rec.kind is EventKind.UNDELEGATE:
            proxy.pop(rec.voter, None)

    def root(voter: VoterId) -> VoterId:
        seen = {voter}
        while voter in proxy:
            voter = proxy[voter]
            if voter in seen:
                raise ValidationError(f"delegation cycle through {voter!r} at {moment}")
            seen.add(voter)
        return voter

    return {v: frozenset(lists.get(root(v), ())) for v in events.voters()}


def classify_resisters(
    events: EventLog,
    event_time: dt.datetime,
    leader: VoterId,
    window: dt.timedelta = dt.timedelta(days=1),
) -> ResisterClassification:
    """Split voters by how they changed their vote after a takeover event.

    A resister sent at least one vote or delegation transaction in
    (event_time, event_time + window] and ends the window with a different
    candidate set; co-resisters share a candidate with the leader's set.
    """
    if window < dt.timedelta(0):
        raise ValidationError("window must be non-negative")
    before = effective_sets(events, event_time)
    leader_set = before.get(leader)
    if not leader_set:
        raise ValidationError(f"leader {leader!r} has no candidate set at {event_time}")
    close = event_time + window
    after = effective_sets(events, close)
    active = {
        r.voter
        for r in events
        if event_time < r.ts <= close and r.kind in _BALLOT_KINDS
    }
    categories: dict[VoterId, Category] = {}
    for voter in sorted(events.voters()):
        new = after.get(voter, frozenset())
        if voter in active and new != before.get(voter, frozenset()):
            categories[voter] = (
                Category.CO_RESISTER if new & leader_set else Category.IND_RESISTER
            )
        else:
            categories[voter] = Category.NON_RESISTER
    return ResisterClassification(leader, leader_set, categories, event_time, window)


@dataclass(frozen=True)
class DailyActivity:
    date: dt.date
    voting: int
    delegating: int


def daily_activity(events: EventLog) -> list[DailyActivity]:
    """Voting and delegating transaction counts per UTC day, zero-filled."""
    if not events.records:
        return []
    voting: dict[dt.date, int] = {}
    delegating: dict[dt.date, int] = {}
    for rec in events:
        if rec.kind in (EventKind.VOTE, EventKind.UNVOTE):
            voting[rec.day] = voting.get(rec.day, 0) + 1
        elif rec.kind in (EventKind.DELEGATE, EventKind.UNDELEGATE):
            delegating[rec.day] = delegating.get(rec.day, 0) + 1
    first, last = events.first_day, events.last_day
    return [
        DailyActivity(d, voting.get(d, 0), delegating.get(d, 0))
        for d in (first + dt.timedelta(days=i) for i in range((last - first).days + 1))
    ]


def category_power_series(
    snapshots: Iterable[PowerSnapshot], classification: ResisterClassification
) -> list[tuple[dt.date, dict[Category, VotingPower]]]:
    """Total snapshot power held by each category, per day."""
    out = []
    for snap in snapshots:
        totals = {c: 0 for c in Category}
        for voter, power in snap.powers.items():
            totals[classification.category_of(voter)] += power
        out.append((snap.date, totals))
    return out
