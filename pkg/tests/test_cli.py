import json
from fractions import Fraction

import pytest

from dposgov.cli import format_rational, main
from dposgov.core import elect, preset
from dposgov.metrics import risk_series
from dposgov.store import ingest, replay


@pytest.fixture
def run(capsys):
    def invoke(*argv):
        code = main([str(a) for a in argv])
        out, err = capsys.readouterr()
        return code, out, err

    return invoke


@pytest.fixture
def steem_log(fixtures_dir):
    return fixtures_dir / "steem_takeover.jsonl"


@pytest.fixture
def whale_log(fixtures_dir):
    return fixtures_dir / "whale.jsonl"


def field(out: str, key: str) -> str:
    for line in out.splitlines():
        if line.startswith(f"{key} = "):
            return line.split(" = ", 1)[1]
    raise AssertionError(f"{key} not in output")


def test_format_rational():
    assert format_rational(Fraction(15, 7)) == "15/7 (2.14)"
    assert format_rational(Fraction(17, 4)) == "17/4 (4.25)"
    assert format_rational(Fraction(19, 9)) == "19/9 (2.11)"
    assert format_rational(Fraction(1, 8)) == "1/8 (0.13)"
    assert format_rational(3) == "3 (3.00)"


class TestGame:
    def test_steem_v4(self, run):
        code, out, _ = run("game", "--preset", "steem", "--v", "4", "--pr", "100")
        assert code == 0 and field(out, "R_A") == "425"
        assert field(out, "upper_factor") == "17/4 (4.25)"
        assert out.startswith("# command: game")

    def test_c2c(self, run):
        code, out, _ = run("game", "--preset", "eosio", "--c2c", "--v", "7", "--pr", "100")
        assert code == 0 and field(out, "R_A") == "300"
        assert (field(out, "z_a"), field(out, "z_r")) == ("3", "1")

    def test_oracle_match(self, run):
        code, out, _ = run("game", "--rule", "av", "--v", "1", "--t", "2", "--n", "3", "--pr", "6", "--oracle")
        assert code == 0 and "oracle: MATCH, R_A = 6" in out

    def test_oracle_bound_exit_3(self, run):
        code, _, err = run("game", "--preset", "eosio", "--pr", "50", "--oracle")
        assert code == 3 and "exceed" in err

    def test_c2c_cumulative_exit_2(self, run):
        code, _, err = run("game", "--preset", "tron", "--c2c", "--pr", "5")
        assert code == 2 and "approval" in err

    def test_missing_config_exit_2(self, run):
        code, _, err = run("game", "--rule", "av", "--pr", "5")
        assert code == 2 and "--preset" in err

    def test_json_has_run_header(self, run):
        code, out, _ = run("game", "--preset", "tron", "--pr", "900", "--format", "json")
        payload = json.loads(out)
        assert code == 0 and payload["run"]["preset"] == "tron"
        assert payload["fields"]["R_A"] == 1900 and payload["fields"]["upper_factor"] == "19/9"


class TestElect:
    def test_pre_attack_committee(self, run, steem_log):
        code, out, _ = run("elect", steem_log, "--preset", "steem", "--date", "2020-03-01", "--format", "csv")
        assert code == 0
        rows = [line for line in out.splitlines() if not line.startswith("#")][1:]
        steem = preset("steem")
        ds = replay(ingest(steem_log), steem)
        expected = elect(ds.state(ds.dates[0]).scores(steem), steem)
        assert [r.split(",")[1] for r in rows] == list(expected.members)
        assert len(rows) == 20

    def test_empty_log(self, run, tmp_path):
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        code, out, _ = run("elect", empty, "--preset", "eosio")
        assert code == 0 and field(out, "tau") == "0"

    def test_malformed_exit_2(self, run, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"ts": "2020-01-01T00:00:00Z", "voter": "a", "kind": "stake"}\n')
        code, _, err = run("elect", bad, "--preset", "eosio")
        assert code == 2 and "line 1" in err and "coins" in err

    def test_missing_file_exit_2(self, run, tmp_path):
        code, _, _ = run("elect", tmp_path / "nope.jsonl", "--preset", "eosio")
        assert code == 2


class TestResist:
    def test_whale_alert(self, run, whale_log):
        code, out, _ = run("resist", whale_log, "--preset", "eosio")
        assert code == 0
        alerts = [line for line in out.splitlines() if "I_t=1" in line]
        assert alerts[0].startswith("ALERT 2019-10-05")

    def test_values_match_library(self, run, whale_log):
        code, out, _ = run("resist", whale_log, "--preset", "eosio", "--start", "2019-10-02",
                           "--end", "2019-10-04", "--format", "json")
        rows = json.loads(out)["rows"]
        ds = replay(ingest(whale_log), preset("eosio"))
        lib = [r for r in risk_series(ds) if "2019-10-02" <= r.date.isoformat() <= "2019-10-04"]
        assert [(r["R_P"], r["I_t"]) for r in rows] == [(r.r_p, r.i_t) for r in lib]
        assert len(rows) == 3

    def test_range_error_exit_2(self, run, whale_log):
        code, _, _ = run("resist", whale_log, "--preset", "eosio", "--start", "2019-09-01")
        assert code == 2

    def test_empty_range(self, run, tmp_path):
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        code, out, _ = run("resist", empty, "--preset", "eosio", "--format", "json")
        assert code == 0 and json.loads(out)["rows"] == []


class TestDecay:
    def test_identity_matches_resist(self, run, whale_log):
        _, decay_out, _ = run("decay", whale_log, "--preset", "eosio", "--choices", "(AV,30)", "--format", "json")
        _, resist_out, _ = run("resist", whale_log, "--preset", "eosio", "--format", "json")
        decay_r_p = [r["value"] for r in json.loads(decay_out)["rows"] if r["metric"] == "R_P"]
        assert decay_r_p == [r["R_P"] for r in json.loads(resist_out)["rows"]]

    def test_ranking_string(self, run, whale_log):
        code, out, _ = run("decay", whale_log, "--preset", "eosio", "--choices", "CV (AV,30)")
        assert code == 0 and field(out, "ranking") == "(AV,30) > CV"


class TestReplayTakeover:
    def test_overwhelming(self, run, steem_log):
        code, out, _ = run("replay-takeover", steem_log, "--preset", "steem", "--date", "2020-03-01",
                           "--attacker-power", "10000000000", "--format", "json")
        payload = json.loads(out)
        assert code == 0 and payload["fields"]["success"] is True
        assert {r["shift"] for r in payload["rows"]} == {20} and len(payload["rows"]) == 20

    @pytest.mark.parametrize("power,success", [("0", False), ("rp", True), ("rp-1", False)])
    def test_minimality_pair(self, run, steem_log, power, success):
        code, out, _ = run("replay-takeover", steem_log, "--preset", "steem", "--date", "2020-03-01",
                           "--attacker-power", power)
        assert code == 0 and field(out, "success") == str(success).lower()

    def test_overlap_exit_2(self, run, steem_log):
        code, out, _ = run("elect", steem_log, "--preset", "steem", "--date", "2020-03-01", "--format", "json")
        member = json.loads(out)["rows"][0]["candidate"]
        code, _, err = run("replay-takeover", steem_log, "--preset", "steem", "--date", "2020-03-01",
                           "--candidates", f"{member},fresh-1")
        assert code == 2 and member in err


class TestClassify:
    ARGS = ("--preset", "steem", "--event-time", "2020-03-02T10:00:00Z", "--leader", "community-leader")

    def test_counts_and_files(self, run, steem_log, tmp_path):
        code, out, _ = run("classify", steem_log, *self.ARGS, "--out", tmp_path)
        assert code == 0 and "co-resister   15" in out
        assert (tmp_path / "activity.csv").read_text().startswith("date,voting_txs,delegating_txs")
        power = (tmp_path / "category_power.csv").read_text().splitlines()
        assert power[0] == "date,co-resister,ind-resister,non-resister" and len(power) == 5

    def test_zero_window(self, run, steem_log):
        code, out, _ = run("classify", steem_log, *self.ARGS, "--window-hours", "0", "--format", "json")
        rows = {r["category"]: r["voters"] for r in json.loads(out)["rows"]}
        assert rows["co-resister"] == rows["ind-resister"] == 0

    def test_unknown_leader_exit_2(self, run, steem_log):
        code, _, _ = run("classify", steem_log, "--preset", "steem", "--event-time",
                         "2020-03-02T10:00:00Z", "--leader", "ghost")
        assert code == 2


class TestIngest:
    def test_counts(self, run, fixtures_dir):
        code, out, _ = run("ingest", fixtures_dir / "small.csv", "--format", "json")
        counts = {r["kind"]: r["count"] for r in json.loads(out)["rows"]}
        assert code == 0 and counts["stake"] == 2 and counts["unvote"] == 0

    def test_dataset_dir_matches_log(self, run, steem_log, tmp_path):
        code, _, _ = run("ingest", steem_log, "--preset", "steem", "--save", tmp_path / "ds")
        assert code == 0 and (tmp_path / "ds" / "manifest.json").exists()
        _, from_dir, _ = run("elect", tmp_path / "ds", "--date", "2020-03-03", "--format", "csv")
        _, from_log, _ = run("elect", steem_log, "--preset", "steem", "--date", "2020-03-03", "--format", "csv")
        strip = lambda text: [line for line in text.splitlines() if not line.startswith("# data")]
        assert strip(from_dir) == strip(from_log)

    def test_out_of_order_needs_sort(self, run, tmp_path):
        path = tmp_path / "shuffled.jsonl"
        path.write_text(
            '{"ts": "2020-01-02T00:00:00Z", "voter": "a", "kind": "stake", "coins": "1"}\n'
            '{"ts": "2020-01-01T00:00:00Z", "voter": "b", "kind": "stake", "coins": "1"}\n'
        )
        assert run("ingest", path)[0] == 2
        assert run("ingest", path, "--sort")[0] == 0


@pytest.mark.parametrize("argv", [
    ("resist", "whale.jsonl", "--preset", "eosio", "--format", "csv"),
    ("decay", "whale.jsonl", "--preset", "eosio"),
    ("classify", "steem_takeover.jsonl", "--preset", "steem", "--event-time", "2020-03-02T10:00:00Z",
     "--leader", "community-leader", "--format", "json"),
    ("replay-takeover", "steem_takeover.jsonl", "--preset", "steem", "--date", "2020-03-01"),
    ("game", "--preset", "tron", "--pr", "90", "--format", "json"),
])
def test_deterministic_output(run, fixtures_dir, argv):
    argv = [str(fixtures_dir / a) if a.endswith(".jsonl") else a for a in argv]
    first, second = run(*argv), run(*argv)
    assert first[0] == 0 and first == second
