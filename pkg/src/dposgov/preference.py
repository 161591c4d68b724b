"""What-if simulation of alternative voting designs over recorded snapshots.

Every voter is assumed to follow the same heuristics: when the vote cap
shrinks, the most recently added candidates are dropped first; approval
ballots convert to cumulative ones by splitting power evenly; cumulative
ballots convert to approval ones by giving every listed candidate full weight.
"""

from __future__ import annotations

import datetime as dt
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from fractions import Fraction

from .core import (
    CandidateId,
    PowerSnapshot,
    Rule,
    SystemConfig,
    VotingPower,
    VotingSnapshot,
    rank_candidates,
    split_evenly,
    tally_approval,
    tally_cumulative,
)
from .errors import ValidationError
from .metrics import kth_largest, passive_resistance, risk_index

DEFAULT_TOLERANCE = Fraction(2, 100)


def withdraw_votes(vector: Sequence[CandidateId], v_new: int) -> list[CandidateId]:
    """Keep the ``v_new`` highest-priority (earliest) candidates."""
    if v_new < 1:
        raise ValidationError(f"vote cap must be at least 1, got {v_new}")
    return list(vector[:v_new])


def av_to_cv(
    vector: Sequence[CandidateId], power: VotingPower
) -> list[tuple[CandidateId, VotingPower]]:
    if not vector:
        raise ValidationError("cannot convert an empty approval vector")
    return list(zip(vector, split_evenly(power, len(vector))))


def cv_to_av(allocations: Sequence[tuple[CandidateId, VotingPower]]) -> list[CandidateId]:
    # Residual (unallocated) power is ignored; only the list survives.
    return [cand for cand, _ in allocations]


@dataclass(frozen=True)
class DesignChoice:
    rule: Rule
    v: int

    @property
    def name(self) -> str:
        return f"(AV,{self.v})" if self.rule is Rule.APPROVAL else "CV"

    def apply(self, base: SystemConfig) -> SystemConfig:
        return base.replace(rule=self.rule, v=self.v, name=self.name)

    @classmethod
    def parse(cls, text: str, base: SystemConfig) -> DesignChoice:
        raw = text.strip().upper().replace(" ", "")
        if raw == "CV":
            return cls(Rule.CUMULATIVE, base.v)
        if raw.startswith("(AV,") and raw.endswith(")"):
            raw = raw[4:-1]
        elif raw.startswith("AV"):
            raw = raw[2:].lstrip(",:=")
        try:
            v = int(raw)
        except ValueError:
            raise ValidationError(f"unknown design choice {text!r}") from None
        if v < 1:
            raise ValidationError(f"design choice needs v >= 1, got {text!r}")
        return cls(Rule.APPROVAL, v)


def approval_grid(max_v: int = 30) -> list[DesignChoice]:
    return [DesignChoice(Rule.APPROVAL, v) for v in range(1, max_v + 1)]


def choice_scores(
    power: PowerSnapshot, votes: VotingSnapshot, choice: DesignChoice, base: SystemConfig
) -> dict[CandidateId, VotingPower]:
    """Re-tally one day as if the chain had used ``choice``."""
    config = choice.apply(base)
    gurus = dict(power.powers)
    if choice.rule is Rule.APPROVAL:
        ballots = {
            voter: withdraw_votes(vec, choice.v)
            for voter, vec in votes.profiles.items()
            if voter in gurus and vec
        }
        return tally_approval(gurus, ballots, config)
    allocations = {
        voter: av_to_cv(vec, gurus[voter])
        for voter, vec in votes.profiles.items()
        if voter in gurus and vec
    }
    return tally_cumulative(gurus, allocations, config)


@dataclass(frozen=True)
class DecayPoint:
    choice: DesignChoice
    date: dt.date
    weakest_blocking: VotingPower
    r_p: VotingPower
    i_t: int
    reachable: bool


def simulate_design_grid(
    snapshots: Iterable[tuple[PowerSnapshot, VotingSnapshot]],
    base: SystemConfig,
    choices: Sequence[DesignChoice],
) -> list[DecayPoint]:
    """Decay curve rows, ordered by choice (as given) then date."""
    days = list(snapshots)
    for power, votes in days:
        if power.date != votes.date:
            raise ValidationError(
                f"power snapshot {power.date} paired with voting snapshot {votes.date}"
            )
    rows = []
    for choice in choices:
        config = choice.apply(base)
        for power, votes in days:
            scores = choice_scores(power, votes, choice, base)
            r_p = passive_resistance(scores, config)
            idx = risk_index(power, r_p)
            rows.append(DecayPoint(
                choice, power.date, kth_largest(scores, config.resist_seats),
                r_p, idx.value, idx.reachable,
            ))
    return rows


@dataclass(frozen=True)
class RankedChoice:
    choice: DesignChoice
    mean_r_p: Fraction
    relation: str | None  # relation to the next choice down, None for the last


def _relation(high: Fraction, low: Fraction, tol: Fraction) -> str:
    if high == low:
        return "≈"
    gap = (high - low) / high
    if gap <= tol:
        return "≈"
    if gap <= 2 * tol:
        return "≥"
    return ">"


def rank_choices(
    curve: Sequence[DecayPoint], tolerance: Fraction = DEFAULT_TOLERANCE
) -> list[RankedChoice]:
    """Order design choices by mean daily R_P, strongest first."""
    if not curve:
        raise ValidationError("cannot rank an empty curve")
    order: list[DesignChoice] = []
    sums: dict[DesignChoice, list[int]] = {}
    for point in curve:
        if point.choice not in sums:
            order.append(point.choice)
            sums[point.choice] = [0, 0]
        sums[point.choice][0] += point.r_p
        sums[point.choice][1] += 1
    means = {c: Fraction(s, k) for c, (s, k) in sums.items()}
    ranked = sorted(order, key=lambda c: -means[c])  # stable: ties keep input order
    out = []
    for i, choice in enumerate(ranked):
        rel = None
        if i + 1 < len(ranked):
            rel = _relation(means[choice], means[ranked[i + 1]], Fraction(tolerance))
        out.append(RankedChoice(choice, means[choice], rel))
    return out


def ranking_string(ranking: Sequence[RankedChoice]) -> str:
    parts = []
    for item in ranking:
        parts.append(item.choice.name)
        if item.relation:
            parts.append(item.relation)
    return " ".join(parts)


@dataclass(frozen=True)
class PriorityBreakdown:
    candidate: CandidateId
    total: VotingPower
    segments: tuple[VotingPower, ...]  # segments[i] = power from voters ranking it i+1


def priority_breakdown(
    power: PowerSnapshot | Mapping[str, VotingPower],
    votes: VotingSnapshot | Mapping[str, Sequence[CandidateId]],
    top_k: int,
) -> list[PriorityBreakdown]:
    """Split each top candidate's approval score by the priority it was given."""
    if top_k < 1:
        raise ValidationError(f"top_k must be at least 1, got {top_k}")
    powers = power.powers if isinstance(power, PowerSnapshot) else power
    profiles = votes.profiles if isinstance(votes, VotingSnapshot) else votes
    segments: dict[CandidateId, dict[int, int]] = {}
    totals: dict[CandidateId, int] = {}
    for voter, vec in profiles.items():
        if voter not in powers:
            continue
        weight = powers[voter]
        for pos, cand in enumerate(vec, start=1):
            seg = segments.setdefault(cand, {})
            seg[pos] = seg.get(pos, 0) + weight
            totals[cand] = totals.get(cand, 0) + weight
    out = []
    for cand, total in rank_candidates(totals)[:top_k]:
        seg = segments[cand]
        depth = max(seg)
        out.append(PriorityBreakdown(cand, total, tuple(seg.get(i, 0) for i in range(1, depth + 1))))
    return out
