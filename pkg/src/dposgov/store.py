"""Event-log ingestion, daily replay into snapshots, and on-disk persistence.

An event log is a time-ordered list of staking, delegation and voting
transactions. Replaying it yields one power snapshot and one voting snapshot
per UTC day, taken at the end of the day.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import io
import json
import logging
from collections import Counter
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from enum import Enum
from pathlib import Path

from .core import (
    CandidateId,
    PowerSnapshot,
    SystemConfig,
    VoterId,
    VotingPower,
    VotingSnapshot,
    VotingState,
    resolve_delegations,
    stake,
)
from .errors import DateOutOfRange, IngestError, ValidationError

log = logging.getLogger(__name__)

FIELDS = ("ts", "voter", "kind", "candidates", "target", "coins")
MANIFEST = "manifest.json"


class EventKind(str, Enum):
    VOTE = "vote"
    UNVOTE = "unvote"
    DELEGATE = "delegate"
    UNDELEGATE = "undelegate"
    STAKE = "stake"
    UNSTAKE = "unstake"


# payload fields each kind must carry (required, optional)
_PAYLOAD = {
    EventKind.VOTE: ({"candidates"}, set()),
    EventKind.UNVOTE: (set(), {"candidates"}),
    EventKind.DELEGATE: ({"target"}, set()),
    EventKind.UNDELEGATE: (set(), set()),
    EventKind.STAKE: ({"coins"}, set()),
    EventKind.UNSTAKE: ({"coins"}, set()),
}


@dataclass(frozen=True)
class EventRecord:
    ts: dt.datetime
    voter: VoterId
    kind: EventKind
    candidates: tuple[CandidateId, ...] | None = None
    target: VoterId | None = None
    coins: Decimal | None = None

    @property
    def day(self) -> dt.date:
        return self.ts.date()

    def to_json(self) -> dict:
        out: dict = {
            "ts": self.ts.strftime("%Y-%m-%dT%H:%M:%SZ"),
            "voter": self.voter,
            "kind": self.kind.value,
        }
        if self.candidates is not None:
            out["candidates"] = list(self.candidates)
        if self.target is not None:
            out["target"] = self.target
        if self.coins is not None:
            out["coins"] = str(self.coins)
        return out


@dataclass(frozen=True)
class EventLog:
    records: tuple[EventRecord, ...] = ()

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[EventRecord]:
        return iter(self.records)

    def counts(self) -> dict[str, int]:
        c = Counter(r.kind.value for r in self.records)
        return {k.value: c.get(k.value, 0) for k in EventKind}

    def voters(self) -> set[VoterId]:
        out = {r.voter for r in self.records}
        out.update(r.target for r in self.records if r.target is not None)
        return out

    @property
    def first_day(self) -> dt.date | None:
        return self.records[0].day if self.records else None

    @property
    def last_day(self) -> dt.date | None:
        return self.records[-1].day if self.records else None

    def until(self, moment: dt.datetime) -> EventLog:
        return EventLog(tuple(r for r in self.records if r.ts <= moment))


# -- parsing ----------------------------------------------------------------

def parse_timestamp(text: str) -> dt.datetime:
    """ISO-8601 to an aware UTC datetime. Naive stamps are read as UTC."""
    raw = text.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    stamp = dt.datetime.fromisoformat(raw)
    if stamp.tzinfo is None:
        return stamp.replace(tzinfo=dt.timezone.utc)
    return stamp.astimezone(dt.timezone.utc)


def _build_record(raw: dict, line: int) -> EventRecord:
    unknown = set(raw) - set(FIELDS)
    if unknown:
        raise IngestError("unexpected field", line, sorted(unknown)[0])
    for name in ("ts", "voter", "kind"):
        if not raw.get(name):
            raise IngestError("missing required field", line, name)
    try:
        kind = EventKind(str(raw["kind"]).strip().lower())
    except ValueError:
        raise IngestError(f"unknown kind {raw['kind']!r}", line, "kind") from None
    try:
        ts = parse_timestamp(str(raw["ts"]))
    except ValueError:
        raise IngestError(f"bad timestamp {raw['ts']!r}", line, "ts") from None
    voter = str(raw["voter"])

    present = {k for k in ("candidates", "target", "coins") if raw.get(k) not in (None, "")}
    required, optional = _PAYLOAD[kind]
    for name in sorted(required - present):
        raise IngestError(f"{kind.value} record needs this field", line, name)
    for name in sorted(present - required - optional):
        raise IngestError(f"{kind.value} record must not carry this field", line, name)

    candidates = None
    if "candidates" in present:
        cands = raw["candidates"]
        if not isinstance(cands, list) or not all(isinstance(c, str) and c for c in cands):
            raise IngestError("expected a list of candidate ids", line, "candidates")
        if len(set(cands)) != len(cands):
            raise IngestError("candidate listed twice", line, "candidates")
        if not cands and kind is EventKind.VOTE:
            raise IngestError("vote needs at least one candidate", line, "candidates")
        candidates = tuple(cands) or None  # an empty unvote clears everything
    coins = None
    if "coins" in present:
        try:
            coins = Decimal(str(raw["coins"]).strip())
        except InvalidOperation:
            raise IngestError(f"not a decimal {raw['coins']!r}", line, "coins") from None
        if not coins.is_finite() or coins < 0:
            raise IngestError("coins must be a non-negative decimal", line, "coins")
    target = str(raw["target"]) if "target" in present else None
    return EventRecord(ts, voter, kind, candidates, target, coins)


def _jsonl_rows(text: str) -> Iterator[tuple[int, dict]]:
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise IngestError(f"invalid JSON ({exc.msg})", lineno) from None
        if not isinstance(row, dict):
            raise IngestError("record must be a JSON object", lineno)
        yield lineno, row


def _csv_rows(text: str) -> Iterator[tuple[int, dict]]:
    reader = csv.DictReader(io.StringIO(text))
    missing = set(("ts", "voter", "kind")) - set(reader.fieldnames or ())
    if reader.fieldnames is not None and missing:
        raise IngestError("missing column in header", 1, sorted(missing)[0])
    for row in reader:
        if None in row:
            raise IngestError("too many cells", reader.line_num)
        cleaned = {k: v for k, v in row.items() if v not in (None, "")}
        if "candidates" in cleaned:
            cleaned["candidates"] = [c.strip() for c in cleaned["candidates"].split(";")]
        yield reader.line_num, cleaned


def parse_events(text: str, fmt: str = "jsonl", sort: bool = False) -> EventLog:
    if fmt not in ("jsonl", "csv"):
        raise ValidationError(f"unknown event-log format {fmt!r}")
    rows = _jsonl_rows(text) if fmt == "jsonl" else _csv_rows(text)
    records: list[EventRecord] = []
    for lineno, raw in rows:
        rec = _build_record(raw, lineno)
        if records and rec.ts < records[-1].ts and not sort:
            raise IngestError(
                f"timestamp {raw['ts']} is earlier than the previous record "
                "(pass sort=True / --sort to reorder)",
                lineno,
                "ts",
            )
        records.append(rec)
    if sort:
        records.sort(key=lambda r: r.ts)  # stable: same-second order is kept
    return EventLog(tuple(records))


def ingest(path: str | Path, fmt: str | None = None, sort: bool = False) -> EventLog:
    """Read and validate an event log; format defaults to the file suffix."""
    p = Path(path)
    if fmt is None:
        fmt = "csv" if p.suffix.lower() == ".csv" else "jsonl"
    return parse_events(p.read_text(encoding="utf-8"), fmt, sort=sort)


def dump_events(records: Iterable[EventRecord]) -> str:
    return "".join(_dumps(r.to_json()) + "\n" for r in records)


# -- replay -----------------------------------------------------------------

@dataclass
class _Ledger:
    """Mutable replay state. Never escapes :func:`replay`."""

    config: SystemConfig
    own: dict[VoterId, VotingPower] = field(default_factory=dict)
    delegations: dict[VoterId, VoterId] = field(default_factory=dict)
    vectors: dict[VoterId, list[CandidateId]] = field(default_factory=dict)
    last_stake: dict[VoterId, dt.datetime] = field(default_factory=dict)

    def apply(self, rec: EventRecord, lockup: dt.timedelta | None, warnings: list[str]) -> None:
        self.own.setdefault(rec.voter, 0)
        kind = rec.kind
        if kind is EventKind.STAKE:
            self.own[rec.voter] += stake(rec.coins, self.config.lam)
            self.last_stake[rec.voter] = rec.ts
        elif kind is EventKind.UNSTAKE:
            amount = stake(rec.coins, self.config.lam)
            if amount > self.own[rec.voter]:
                raise ValidationError(
                    f"{rec.ts:%Y-%m-%dT%H:%M:%SZ}: voter {rec.voter!r} unstakes {amount} "
                    f"but holds only {self.own[rec.voter]}"
                )
            self.own[rec.voter] -= amount
            staked_at = self.last_stake.get(rec.voter)
            if lockup is not None and staked_at is not None and rec.ts - staked_at < lockup:
                msg = (f"{rec.ts:%Y-%m-%dT%H:%M:%SZ}: voter {rec.voter!r} unstakes "
                       f"within the {lockup} lockup")
                log.warning(msg)
                warnings.append(msg)
        elif kind is EventKind.DELEGATE:
            self.own.setdefault(rec.target, 0)
            if rec.target == rec.voter:
                self.delegations.pop(rec.voter, None)
            else:
                self.delegations[rec.voter] = rec.target
        elif kind is EventKind.UNDELEGATE:
            self.delegations.pop(rec.voter, None)
        elif kind is EventKind.VOTE:
            self.vectors[rec.voter] = merge_vote(
                rec.voter, self.vectors.get(rec.voter, []), rec.candidates, self.config.v
            )
        elif kind is EventKind.UNVOTE:
            if rec.candidates is None:
                self.vectors.pop(rec.voter, None)
            else:
                drop = set(rec.candidates)
                kept = [c for c in self.vectors.get(rec.voter, []) if c not in drop]
                self.vectors[rec.voter] = kept

    def snapshot(self, day: dt.date) -> tuple[PowerSnapshot, VotingSnapshot]:
        try:
            gurus = resolve_delegations(self.own, self.delegations)
        except ValidationError as exc:
            raise ValidationError(f"{day}: {exc}") from None
        power = PowerSnapshot(day, {v: p for v, p in gurus.items() if p > 0})
        votes = VotingSnapshot(day, {v: tuple(c) for v, c in self.vectors.items() if c})
        return power, votes


def merge_vote(
    voter: VoterId, current: list[CandidateId], new: tuple[CandidateId, ...], v: int
) -> list[CandidateId]:
    """Replace a voter's set, keeping the priority slot of retained candidates."""
    if len(new) > v:
        raise ValidationError(f"voter {voter!r} votes for {len(new)} candidates, more than v={v}")
    wanted = set(new)
    kept = [c for c in current if c in wanted]
    seen = set(kept)
    return kept + [c for c in new if c not in seen]


@dataclass(frozen=True)
class ChainDataset:
    chain: str
    config: SystemConfig
    power: tuple[PowerSnapshot, ...]
    votes: tuple[VotingSnapshot, ...]
    log: EventLog | None = None
    warnings: tuple[str, ...] = ()

    @property
    def dates(self) -> list[dt.date]:
        return [s.date for s in self.power]

    @property
    def start(self) -> dt.date | None:
        return self.power[0].date if self.power else None

    @property
    def end(self) -> dt.date | None:
        return self.power[-1].date if self.power else None

    def query(self, day: dt.date) -> tuple[PowerSnapshot, VotingSnapshot]:
        if not self.power or not (self.start <= day <= self.end):
            raise DateOutOfRange(f"{day} is outside the dataset range {self.start}..{self.end}")
        i = (day - self.start).days
        return self.power[i], self.votes[i]

    def state(self, day: dt.date) -> VotingState:
        return VotingState.from_snapshots(*self.query(day))

    def pairs(self) -> Iterator[tuple[PowerSnapshot, VotingSnapshot]]:
        return zip(self.power, self.votes)


def _days(start: dt.date, end: dt.date) -> Iterator[dt.date]:
    for i in range((end - start).days + 1):
        yield start + dt.timedelta(days=i)


def replay(
    events: EventLog,
    config: SystemConfig,
    start: dt.date | None = None,
    end: dt.date | None = None,
    chain: str | None = None,
    lockup: dt.timedelta | None = None,
) -> ChainDataset:
    """Apply every record in order and snapshot the state at each day's end."""
    name = chain or config.name
    if not events.records:
        if start is not None or end is not None:
            raise DateOutOfRange("empty event log covers no dates")
        return ChainDataset(name, config, (), (), events)
    first, last = events.first_day, events.last_day
    start = first if start is None else start
    end = last if end is None else end
    if start > end:
        raise DateOutOfRange(f"range start {start} is after end {end}")
    if start < first or end > last:
        raise DateOutOfRange(f"range {start}..{end} exceeds log coverage {first}..{last}")
    for a, b in zip(events.records, events.records[1:]):
        if b.ts < a.ts:
            raise ValidationError("event log is not sorted by timestamp")

    ledger = _Ledger(config)
    warnings: list[str] = []
    power: list[PowerSnapshot] = []
    votes: list[VotingSnapshot] = []
    records = events.records
    i = 0
    for day in _days(first, end):
        while i < len(records) and records[i].day <= day:
            ledger.apply(records[i], lockup, warnings)
            i += 1
        if day >= start:
            p, v = ledger.snapshot(day)
            power.append(p)
            votes.append(v)
    return ChainDataset(name, config, tuple(power), tuple(votes), events, tuple(warnings))


# -- persistence ------------------------------------------------------------

def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def save_dataset(dataset: ChainDataset, directory: str | Path) -> Path:
    """Write snapshot JSONL files plus a manifest; returns the manifest path."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    files: dict[str, bytes] = {}
    files[f"{dataset.chain}.power.jsonl"] = "".join(
        _dumps({"date": s.date.isoformat(), "voter": v, "power": p}) + "\n"
        for s in dataset.power
        for v, p in s.powers.items()
    ).encode()
    files[f"{dataset.chain}.votes.jsonl"] = "".join(
        _dumps({"date": s.date.isoformat(), "voter": v, "candidates": list(c)}) + "\n"
        for s in dataset.votes
        for v, c in s.profiles.items()
    ).encode()
    if dataset.log is not None:
        files[f"{dataset.chain}.events.jsonl"] = dump_events(dataset.log).encode()
    for name, data in files.items():
        (out / name).write_bytes(data)
    hashes = {name: _sha256(data) for name, data in sorted(files.items())}
    manifest = {
        "chain": dataset.chain,
        "config": dataset.config.to_dict(),
        "start": dataset.start.isoformat() if dataset.start else None,
        "end": dataset.end.isoformat() if dataset.end else None,
        "files": hashes,
        "content_hash": _sha256("".join(hashes.values()).encode()),
        "warnings": list(dataset.warnings),
    }
    path = out / MANIFEST
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def load_dataset(directory: str | Path) -> ChainDataset:
    """Read a directory written by :func:`save_dataset`, verifying hashes."""
    root = Path(directory)
    try:
        manifest = json.loads((root / MANIFEST).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ValidationError(f"{root} has no {MANIFEST}") from None
    chain = manifest["chain"]
    config = SystemConfig.from_dict(manifest["config"])
    blobs: dict[str, bytes] = {}
    for name, digest in manifest["files"].items():
        data = (root / name).read_bytes()
        if _sha256(data) != digest:
            raise ValidationError(f"{name}: content hash does not match the manifest")
        blobs[name] = data
    if manifest["start"] is None:
        return ChainDataset(chain, config, (), ())
    start = dt.date.fromisoformat(manifest["start"])
    end = dt.date.fromisoformat(manifest["end"])
    days = list(_days(start, end))
    powers: dict[dt.date, dict] = {d: {} for d in days}
    lists: dict[dt.date, dict] = {d: {} for d in days}
    for row in _jsonl_rows(blobs[f"{chain}.power.jsonl"].decode()):
        powers[dt.date.fromisoformat(row[1]["date"])][row[1]["voter"]] = int(row[1]["power"])
    for row in _jsonl_rows(blobs[f"{chain}.votes.jsonl"].decode()):
        lists[dt.date.fromisoformat(row[1]["date"])][row[1]["voter"]] = row[1]["candidates"]
    events_name = f"{chain}.events.jsonl"
    events = parse_events(blobs[events_name].decode()) if events_name in blobs else None
    return ChainDataset(
        chain,
        config,
        tuple(PowerSnapshot(d, powers[d]) for d in days),
        tuple(VotingSnapshot(d, lists[d]) for d in days),
        events,
        tuple(manifest.get("warnings", ())),
    )
