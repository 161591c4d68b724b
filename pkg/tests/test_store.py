import datetime as dt
import json
from collections import Counter

import pytest

from dposgov.core import preset
from dposgov.errors import DateOutOfRange, IngestError, ValidationError
from dposgov.store import (
    EventLog,
    dump_events,
    ingest,
    load_dataset,
    parse_events,
    replay,
    save_dataset,
)

EOS = preset("eosio")


def jsonl(*records) -> str:
    return "".join(json.dumps(r) + "\n" for r in records)


def rec(ts, voter, kind, **payload):
    return {"ts": ts, "voter": voter, "kind": kind, **payload}


class TestIngest:
    def test_empty(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert len(ingest(path)) == 0

    def test_single_stake(self):
        log = parse_events(jsonl(rec("2020-01-01T00:00:00Z", "a", "stake", coins="100")))
        assert len(log) == 1 and log.counts()["stake"] == 1

    def test_counts_match_line_recount(self, fixtures_dir):
        path = fixtures_dir / "events_1000.jsonl"
        log = ingest(path)
        raw = Counter(json.loads(line)["kind"] for line in path.read_text().splitlines())
        assert len(log) == 1000
        assert {k: v for k, v in log.counts().items() if v} == dict(raw)

    def test_csv_matches_jsonl(self, fixtures_dir):
        log = ingest(fixtures_dir / "small.csv")
        assert log.counts() == {
            "vote": 1, "unvote": 0, "delegate": 1, "undelegate": 1, "stake": 2, "unstake": 1,
        }
        assert parse_events(dump_events(log)) == log
        assert log.records[2].candidates == ("c1", "c2")

    @pytest.mark.parametrize("bad,field", [
        (rec("2020-01-01T00:00:00Z", "a", "stake"), "coins"),
        (rec("2020-01-01T00:00:00Z", "a", "vote", candidates=["c"], coins="1"), "coins"),
        (rec("not-a-time", "a", "stake", coins="1"), "ts"),
        (rec("2020-01-01T00:00:00Z", "a", "teleport"), "kind"),
        (rec("2020-01-01T00:00:00Z", "a", "stake", coins="-3"), "coins"),
        (rec("2020-01-01T00:00:00Z", "a", "vote", candidates=["c", "c"]), "candidates"),
        (rec("2020-01-01T00:00:00Z", "a", "delegate"), "target"),
        ({"ts": "2020-01-01T00:00:00Z", "kind": "undelegate"}, "voter"),
    ])
    def test_malformed_reports_line_and_field(self, bad, field):
        good = rec("2020-01-01T00:00:00Z", "a", "stake", coins="1")
        with pytest.raises(IngestError) as err:
            parse_events(jsonl(good, bad))
        assert err.value.line == 2 and err.value.field == field
        assert str(err.value).startswith("line 2: field")

    def test_out_of_order(self):
        text = jsonl(
            rec("2020-01-02T00:00:00Z", "a", "stake", coins="1"),
            rec("2020-01-01T00:00:00Z", "b", "stake", coins="1"),
        )
        with pytest.raises(IngestError, match="line 2"):
            parse_events(text)
        log = parse_events(text, sort=True)
        assert [r.voter for r in log] == ["b", "a"]

    def test_bad_json_line(self):
        with pytest.raises(IngestError, match="line 1"):
            parse_events("{not json}\n")


class TestReplay:
    def test_single_stake(self):
        log = parse_events(jsonl(rec("2020-01-01T05:00:00Z", "v", "stake", coins="100")))
        ds = replay(log, EOS)
        power, votes = ds.query(dt.date(2020, 1, 1))
        assert dict(power.powers) == {"v": 100} and dict(votes.profiles) == {}

    def test_vote_order_is_priority(self):
        log = parse_events(jsonl(
            rec("2020-01-01T00:00:00Z", "v", "vote", candidates=["c1"]),
            rec("2020-01-01T01:00:00Z", "v", "vote", candidates=["c2", "c1"]),
        ))
        _, votes = replay(log, EOS).query(dt.date(2020, 1, 1))
        assert votes.profiles["v"] == ("c1", "c2")

    def test_stake_delegate_unstake_by_hand(self):
        log = parse_events(jsonl(
            rec("2020-01-01T00:00:00Z", "a", "stake", coins="3.5"),
            rec("2020-01-01T01:00:00Z", "b", "stake", coins="10"),
            rec("2020-01-01T02:00:00Z", "a", "delegate", target="b"),
            rec("2020-01-01T03:00:00Z", "a", "unstake", coins="1"),
        ))
        steem = preset("steem")
        power, _ = replay(log, steem).query(dt.date(2020, 1, 1))
        # a: 7000 - 2000 = 5000 flows to b, b holds 20000 of its own
        assert dict(power.powers) == {"b": 25000}

    def test_unstake_too_much(self):
        log = parse_events(jsonl(
            rec("2020-01-01T00:00:00Z", "a", "stake", coins="1"),
            rec("2020-01-01T01:00:00Z", "a", "unstake", coins="2"),
        ))
        with pytest.raises(ValidationError, match="unstakes 2"):
            replay(log, EOS)

    def test_too_many_votes_names_voter(self):
        log = parse_events(jsonl(rec("2020-01-01T00:00:00Z", "zed", "vote", candidates=["a", "b"])))
        with pytest.raises(ValidationError, match="'zed'"):
            replay(log, EOS.replace(v=1))

    def test_delegation_cycle(self):
        log = parse_events(jsonl(
            rec("2020-01-01T00:00:00Z", "a", "delegate", target="b"),
            rec("2020-01-01T00:00:01Z", "b", "delegate", target="a"),
        ))
        with pytest.raises(ValidationError, match="cycle"):
            replay(log, EOS)

    def test_unvote_variants(self):
        log = parse_events(jsonl(
            rec("2020-01-01T00:00:00Z", "a", "vote", candidates=["c1", "c2", "c3"]),
            rec("2020-01-01T00:00:01Z", "a", "unvote", candidates=["c2"]),
            rec("2020-01-02T00:00:00Z", "a", "unvote"),
        ))
        ds = replay(log, EOS)
        assert ds.query(dt.date(2020, 1, 1))[1].profiles["a"] == ("c1", "c3")
        assert "a" not in ds.query(dt.date(2020, 1, 2))[1].profiles

    def test_undelegate_applies_forward(self):
        log = parse_events(jsonl(
            rec("2020-01-01T00:00:00Z", "a", "stake", coins="5"),
            rec("2020-01-01T00:00:00Z", "b", "stake", coins="1"),
            rec("2020-01-01T00:00:01Z", "a", "delegate", target="b"),
            rec("2020-01-02T12:00:00Z", "a", "undelegate"),
        ))
        ds = replay(log, EOS)
        assert dict(ds.query(dt.date(2020, 1, 1))[0].powers) == {"b": 6}
        assert dict(ds.query(dt.date(2020, 1, 2))[0].powers) == {"a": 5, "b": 1}

    def test_lockup_warns_only(self, caplog):
        log = parse_events(jsonl(
            rec("2020-01-01T00:00:00Z", "a", "stake", coins="5"),
            rec("2020-01-01T06:00:00Z", "a", "unstake", coins="5"),
        ))
        ds = replay(log, EOS, lockup=dt.timedelta(days=3))
        assert len(ds.warnings) == 1 and "lockup" in ds.warnings[0]
        assert dict(ds.query(dt.date(2020, 1, 1))[0].powers) == {}

    def test_range_checks(self, fixtures_dir):
        log = ingest(fixtures_dir / "events_1000.jsonl")
        ds = replay(log, EOS)
        with pytest.raises(DateOutOfRange):
            ds.query(ds.end + dt.timedelta(days=1))
        with pytest.raises(DateOutOfRange):
            replay(log, EOS, start=log.first_day - dt.timedelta(days=1))
        with pytest.raises(DateOutOfRange):
            replay(EventLog(), EOS, start=dt.date(2020, 1, 1))
        assert replay(EventLog(), EOS).power == ()

    def test_contiguous_and_prefix_consistent(self, fixtures_dir):
        log = ingest(fixtures_dir / "events_1000.jsonl")
        ds = replay(log, EOS)
        days = ds.dates
        assert days == [days[0] + dt.timedelta(days=i) for i in range(len(days))]
        for day in days:
            cut = dt.datetime.combine(day, dt.time(23, 59, 59), tzinfo=dt.timezone.utc)
            fresh = replay(log.until(cut), EOS, start=day, end=day)
            assert fresh.query(day) == ds.query(day)
            assert ds.query(day) == ds.query(day)

    def test_conservation(self, fixtures_dir):
        log = ingest(fixtures_dir / "events_1000.jsonl")
        ds = replay(log, EOS)
        for day in ds.dates:
            expected = 0
            for r in log:
                if r.day > day:
                    break
                if r.kind.value == "stake":
                    expected += int(r.coins)
                elif r.kind.value == "unstake":
                    expected -= int(r.coins)
            assert ds.query(day)[0].total == expected


class TestPersistence:
    def test_round_trip_and_determinism(self, fixtures_dir, tmp_path):
        log = ingest(fixtures_dir / "events_1000.jsonl")
        first = save_dataset(replay(log, EOS), tmp_path / "one")
        second = save_dataset(replay(ingest(fixtures_dir / "events_1000.jsonl"), EOS), tmp_path / "two")
        for name in sorted(p.name for p in (tmp_path / "one").iterdir()):
            assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()
        loaded = load_dataset(first.parent)
        original = replay(log, EOS)
        assert loaded.power == original.power and loaded.votes == original.votes
        assert loaded.log == log and loaded.config == EOS
        assert second.exists()

    def test_tampering_detected(self, fixtures_dir, tmp_path):
        ds = replay(ingest(fixtures_dir / "small.csv"), EOS)
        save_dataset(ds, tmp_path)
        target = tmp_path / "eosio.power.jsonl"
        target.write_text(target.read_text() + "{}\n")
        with pytest.raises(ValidationError, match="hash"):
            load_dataset(tmp_path)

    def test_snapshot_export_schema(self, fixtures_dir, tmp_path):
        save_dataset(replay(ingest(fixtures_dir / "small.csv"), EOS), tmp_path)
        rows = [json.loads(line) for line in (tmp_path / "eosio.power.jsonl").read_text().splitlines()]
        assert set(rows[0]) == {"date", "voter", "power"}
        rows = [json.loads(line) for line in (tmp_path / "eosio.votes.jsonl").read_text().splitlines()]
        assert set(rows[0]) == {"date", "voter", "candidates"}
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["chain"] == "eosio" and manifest["start"] == "2020-01-01"
        assert len(manifest["content_hash"]) == 64
