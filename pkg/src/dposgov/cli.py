"""Command-line entry point: ``dposgov <subcommand> [flags]``.

Exit codes: 0 success, 2 bad input or configuration, 3 enumeration bound hit.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import io
import json
import logging
import sys
import warnings
from collections.abc import Sequence
from fractions import Fraction
from pathlib import Path

from . import game, metrics, preference, store
from .core import PRESETS, Rule, SystemConfig, as_fraction, elect, passes, preset
from .errors import ConfigError, GovernanceError, ResourceBoundError, ValidationError

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_BOUND = 3
EXIT_MISMATCH = 1


def format_rational(value: Fraction | int) -> str:
    """Exact form plus two decimals, rounded half up: ``15/7 (2.14)``."""
    f = Fraction(value)
    cents = (f * 100 * 2 + 1) // 2  # floor(x + 1/2)
    sign = "-" if cents < 0 else ""
    whole, frac = divmod(abs(cents), 100)
    return f"{f} ({sign}{whole}.{frac:02d})"


# -- output -----------------------------------------------------------------

class Report:
    """Collects one command's output and renders it as table, csv or json."""

    def __init__(self, command: str, run: dict):
        self.command = command
        self.run = {"command": command, **run}
        self.fields: list[tuple[str, object]] = []
        self.columns: list[str] = []
        self.rows: list[list] = []
        self.notes: list[str] = []
        self.files: dict[str, str] = {}
        self.exit_code = EXIT_OK

    def field(self, key: str, value) -> None:
        self.fields.append((key, value))

    def table(self, columns: Sequence[str], rows: Sequence[Sequence]) -> None:
        self.columns = list(columns)
        self.rows = [list(r) for r in rows]

    def render(self, fmt: str) -> str:
        if fmt == "json":
            payload = {
                "run": self.run,
                "fields": {k: _jsonable(v) for k, v in self.fields},
                "rows": [dict(zip(self.columns, map(_jsonable, r))) for r in self.rows],
                "notes": self.notes,
            }
            return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
        lines = [f"# {k}: {v}" for k, v in self.run.items()]
        if fmt == "csv":
            lines += [f"# {k} = {_text(v)}" for k, v in self.fields]
            lines += [f"# {n}" for n in self.notes]
            if self.columns:
                lines.append(_csv_text(self.columns, self.rows).rstrip("\n"))
            return "\n".join(lines) + "\n"
        lines += [f"{k} = {_text(v)}" for k, v in self.fields]
        if self.columns:
            lines += _aligned(self.columns, self.rows)
        lines += self.notes
        return "\n".join(lines) + "\n"


def _text(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Fraction):
        return format_rational(value)
    if value is None:
        return "-"
    return str(value)


def _jsonable(value):
    if isinstance(value, Fraction):
        return str(value) if value.denominator != 1 else value.numerator
    if isinstance(value, (dt.date, Path)):
        return str(value)
    return value


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_text(c) for c in row])
    return buf.getvalue()


def _aligned(columns, rows) -> list[str]:
    cells = [list(columns)] + [[_text(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(columns))]
    return ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]


# -- argument handling ----------------------------------------------------

def _date(text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a YYYY-MM-DD date: {text!r}") from None


def _timestamp(text: str) -> dt.datetime:
    try:
        return store.parse_timestamp(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO-8601 timestamp: {text!r}") from None


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("system configuration")
    g.add_argument("--preset", choices=sorted(PRESETS), help="chain parameter preset")
    g.add_argument("--rule", help="av | cv (overrides the preset)")
    g.add_argument("--v", type=int, help="max votes per voter")
    g.add_argument("--t", type=int, help="min approvals per proposal")
    g.add_argument("--n", type=int, help="committee size")
    g.add_argument("--lambda", dest="lam", help="staking coefficient (power per coin)")
    g.add_argument("--delta", type=int, help="smallest power unit (reported only)")
    o = p.add_argument_group("output")
    o.add_argument("--format", choices=("table", "csv", "json"), default="table")
    o.add_argument("--out", type=Path, help="directory to write result files into")
    return p


def _data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("data", type=Path, help="event log (.jsonl/.csv) or dataset directory")
    p.add_argument("--sort", action="store_true", help="reorder out-of-order log records")
    p.add_argument("--start", type=_date, help="first day (YYYY-MM-DD)")
    p.add_argument("--end", type=_date, help="last day (YYYY-MM-DD)")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(
        prog="dposgov",
        description="Takeover analysis for coin-based committee voting.",
    )
    parser.add_argument("--verbose", action="store_true", help="log warnings to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("ingest", parents=[common], help="validate an event log; optionally replay and save")
    p.add_argument("log", type=Path)
    p.add_argument("--input-format", choices=("jsonl", "csv"))
    p.add_argument("--sort", action="store_true")
    p.add_argument("--save", type=Path, help="replay and persist snapshots into this directory")
    p.add_argument("--lockup-days", type=float, help="warn on unstakes this soon after staking")

    p = sub.add_parser("elect", parents=[common], help="committee on one day")
    _data_args(p)
    p.add_argument("--date", type=_date, help="day to elect (default: last day)")

    p = sub.add_parser("game", parents=[common], help="equilibrium of the takeover game")
    p.add_argument("--pr", type=int, required=True, help="co-resister power in delta units")
    p.add_argument("--c2c", action="store_true", help="community-to-community variant")
    p.add_argument("--oracle", action="store_true", help="cross-check by exhaustive search")
    p.add_argument("--max-strategies", type=int, default=game.DEFAULT_MAX_STRATEGIES)

    p = sub.add_parser("resist", parents=[common], help="daily passive resistance and risk index")
    _data_args(p)

    p = sub.add_parser("decay", parents=[common], help="simulate alternative design choices")
    _data_args(p)
    p.add_argument("--choices", help="comma-free list like '(AV,30) (AV,1) CV' (default: all AV plus CV)")
    p.add_argument("--tolerance", default="2/100", help="relative gap counted as equal")

    p = sub.add_parser("replay-takeover", parents=[common], help="inject an attacker and rerun the election")
    _data_args(p)
    p.add_argument("--date", type=_date, help="day to attack (default: last day)")
    p.add_argument("--attacker-power", default="rp",
                   help="integer, or rp / rp-N / rp+N relative to passive resistance")
    p.add_argument("--candidates", help="comma-separated attacker candidate ids")
    p.add_argument("--fresh", type=int, help="number of generated attacker candidates")

    p = sub.add_parser("classify", parents=[common], help="classify resisters after an event")
    _data_args(p)
    p.add_argument("--event-time", type=_timestamp, required=True)
    p.add_argument("--leader", required=True)
    p.add_argument("--window-hours", type=float, default=24.0)
    return parser


def resolve_config(args: argparse.Namespace, base: SystemConfig | None = None) -> SystemConfig:
    """Preset (or dataset config) first, explicit flags on top."""
    if args.preset:
        base = preset(args.preset)
    changes = {}
    if args.rule:
        changes["rule"] = Rule.parse(args.rule)
    for attr in ("v", "t", "n", "delta"):
        if getattr(args, attr) is not None:
            changes[attr] = getattr(args, attr)
    if args.lam is not None:
        changes["lam"] = as_fraction(args.lam)
    if base is None:
        missing = [k for k in ("rule", "v", "t", "n") if k not in changes]
        if missing:
            raise ConfigError(
                "no preset given; pass --preset or all of --rule --v --t --n "
                f"(missing {', '.join('--' + m for m in missing)})"
            )
        return SystemConfig(**changes)
    if changes:
        changes.setdefault("name", f"{base.name}*")
        return base.replace(**changes)
    return base


def _run_header(args, config: SystemConfig, **extra) -> dict:
    run = {"config": config.describe(), "preset": config.name}
    for key, value in extra.items():
        if value is not None:
            run[key] = _jsonable(value)
    return run


def load_data(args) -> tuple[store.ChainDataset, SystemConfig]:
    path: Path = args.data
    if path.is_dir():
        ds = store.load_dataset(path)
        config = resolve_config(args, ds.config)
        if args.start or args.end:
            power = [s for s in ds.power if _within(s.date, args)]
            votes = [s for s in ds.votes if _within(s.date, args)]
            ds = store.ChainDataset(ds.chain, ds.config, tuple(power), tuple(votes), ds.log, ds.warnings)
        return ds, config
    if not path.exists():
        raise ValidationError(f"{path}: no such file or directory")
    config = resolve_config(args)
    log = store.ingest(path, sort=args.sort)
    ds = store.replay(log, config, start=args.start, end=args.end)
    return ds, config


def _within(day: dt.date, args) -> bool:
    return (args.start is None or day >= args.start) and (args.end is None or day <= args.end)


def _pick_day(ds: store.ChainDataset, day: dt.date | None) -> dt.date | None:
    return day if day is not None else ds.end


# -- commands ---------------------------------------------------------------

def cmd_ingest(args) -> Report:
    log = store.ingest(args.log, fmt=args.input_format, sort=args.sort)
    run = {"log": args.log.name, "records": len(log)}
    config = None
    if args.save is not None:
        config = resolve_config(args)
        run = {**_run_header(args, config), **run}
    report = Report("ingest", run)
    report.field("first_day", log.first_day)
    report.field("last_day", log.last_day)
    report.table(["kind", "count"], sorted(log.counts().items()))
    if config is not None:
        lockup = dt.timedelta(days=args.lockup_days) if args.lockup_days else None
        ds = store.replay(log, config, chain=config.name, lockup=lockup)
        manifest = store.save_dataset(ds, args.save)
        saved = json.loads(manifest.read_text())
        report.field("days", len(ds.power))
        report.field("content_hash", saved["content_hash"])
        report.notes += [f"warning: {w}" for w in ds.warnings]
    return report


def cmd_elect(args) -> Report:
    ds, config = load_data(args)
    day = _pick_day(ds, args.date)
    report = Report("elect", _run_header(args, config, data=args.data.name, date=day))
    if day is None:
        report.table(["rank", "candidate", "score"], [])
        report.field("tau", 0)
        return report
    committee = elect(ds.state(day).scores(config), config)
    report.table(
        ["rank", "candidate", "score"],
        [[i, c, s] for i, (c, s) in enumerate(committee.entries, start=1)],
    )
    report.field("seats", len(committee))
    report.field("tau", committee.tau)
    return report


def cmd_game(args) -> Report:
    config = resolve_config(args)
    report = Report("game", _run_header(args, config, p_r=args.pr))
    if args.pr < 0:
        raise ValidationError("--pr must be non-negative")
    if args.c2c:
        res = game.c2c_resistance(args.pr, config)
        report.field("z_a", res.z_attacker)
        report.field("z_r", res.z_resister)
        report.field("R_A", res.R_A)
        report.field("upper_factor", res.upper_factor)
        report.field("upper_bound", res.upper_factor * args.pr)
        report.field("at_upper_bound", res.R_A == res.upper_factor * args.pr)
        return report

    eq = game.equilibrium(args.pr, config)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        bound = game.upper_bound_factor(config)
    report.notes += [f"warning: {w.message}" for w in caught]
    report.field("zeta_a", eq.amplification.zeta_a)
    report.field("zeta_r", eq.amplification.zeta_r)
    report.field("s_r", " ".join(f"{c}:{p}" for c, p in eq.s_r_hat.allocations))
    report.field("s_a", " ".join(f"{c}:{p}" for c, p in eq.s_a_hat.allocations))
    report.field("R_A", eq.R_A)
    report.field("R_A_exact", game.active_resistance_exact(args.pr, config))
    report.field("upper_factor", bound.factor)
    report.field("upper_bound", eq.upper_bound)
    report.field("at_upper_bound", eq.at_upper_bound)
    report.field("supermajority", bound.supermajority)
    report.field("v_attains_bound", bound.v_attains)
    report.field("payoffs", f"u_r={eq.payoffs[0]} u_a={eq.payoffs[1]}")
    if args.oracle:
        oracle = game.brute_force_equilibrium(
            game.GameInstance(config, args.pr, args.max_strategies)
        )
        report.field("oracle_strategies", oracle.strategies_examined)
        if oracle.R_A == eq.R_A:
            report.notes.append(f"oracle: MATCH, R_A = {oracle.R_A}")
        else:
            report.notes.append(
                f"oracle: MISMATCH, brute force R_A = {oracle.R_A}, closed form R_A = {eq.R_A}"
            )
            report.exit_code = EXIT_MISMATCH
    return report


def cmd_resist(args) -> Report:
    ds, config = load_data(args)
    report = Report("resist", _run_header(args, config, data=args.data.name))
    series = metrics.risk_series(ds, config)
    report.table(
        ["date", "p_weakest", "R_P", "I_t", "reachable"],
        [[r.date, r.weakest_blocking, r.r_p, r.i_t, r.reachable] for r in series],
    )
    for r in series:
        if r.i_t == 1:
            report.notes.append(f"ALERT {r.date}: I_t=1 (one voter alone reaches R_P={r.r_p})")
    return report


def cmd_decay(args) -> Report:
    ds, config = load_data(args)
    tol = as_fraction(args.tolerance)
    if args.choices:
        choices = [preference.DesignChoice.parse(tok, config) for tok in args.choices.split()]
    else:
        choices = preference.approval_grid(config.v) + [
            preference.DesignChoice(Rule.CUMULATIVE, config.v)
        ]
    report = Report("decay", _run_header(args, config, data=args.data.name, tolerance=tol))
    curve = preference.simulate_design_grid(ds.pairs(), config, choices)
    rows = []
    for pt in curve:
        rows += [
            [pt.choice.name, pt.date, "p_weakest", pt.weakest_blocking],
            [pt.choice.name, pt.date, "R_P", pt.r_p],
            [pt.choice.name, pt.date, "I_t", pt.i_t],
        ]
    report.table(["choice", "date", "metric", "value"], rows)
    if curve:
        ranking = preference.rank_choices(curve, tol)
        report.field("ranking", preference.ranking_string(ranking))
    return report


def _attacker_power(spec: str, r_p: int) -> int:
    text = spec.strip().lower().replace(" ", "")
    if text.startswith("rp"):
        offset = text[2:]
        return r_p + (int(offset) if offset else 0)
    return int(text)


def cmd_replay_takeover(args) -> Report:
    ds, config = load_data(args)
    day = _pick_day(ds, args.date)
    if day is None:
        raise ValidationError("dataset has no days to attack")
    state = ds.state(day)
    scores = state.scores(config)
    r_p = metrics.passive_resistance(scores, config)
    try:
        power = _attacker_power(args.attacker_power, r_p)
    except ValueError:
        raise ValidationError(f"bad --attacker-power {args.attacker_power!r}") from None
    if args.candidates:
        cands = [c.strip() for c in args.candidates.split(",") if c.strip()]
    else:
        count = args.fresh if args.fresh is not None else max(config.t, min(config.v, config.n))
        width = len(str(count))
        cands = [f"attacker-{i:0{width}d}" for i in range(1, count + 1)]
    result = metrics.simulate_takeover(state, power, cands, config)

    report = Report("replay-takeover", _run_header(args, config, data=args.data.name, date=day))
    report.field("R_P", r_p)
    report.field("phase 1 stake", f"attacker stakes {power} units")
    report.field("phase 2 vote", " ".join(f"{c}:{p}" for c, p in result.attacker_allocations))
    report.field("attacker_seats", result.attacker_seats)
    report.field("phase 3 govern", "proposal passes" if passes(cands, result.committee, config)
                 else "proposal blocked")
    report.field("success", result.success)
    old_rank = {c: i for i, c in enumerate(result.before.members, start=1)}
    report.table(
        ["candidate", "old_rank", "new_rank", "shift"],
        [[c, old_rank[c], old_rank[c] + result.rank_shifts[c], result.rank_shifts[c]]
         for c in result.before.members],
    )
    return report


def cmd_classify(args) -> Report:
    ds, config = load_data(args)
    if ds.log is None:
        raise ValidationError(f"{args.data}: dataset carries no event log to classify")
    window = dt.timedelta(hours=args.window_hours)
    cls = metrics.classify_resisters(ds.log, args.event_time, args.leader, window)
    report = Report("classify", _run_header(
        args, config, data=args.data.name, event_time=args.event_time.isoformat(),
        leader=args.leader, window=str(window),
    ))
    report.field("leader_set", " ".join(sorted(cls.leader_set)))
    counts = cls.counts()
    report.table(["category", "voters"], [[c.value, counts[c]] for c in metrics.Category])

    activity = metrics.daily_activity(ds.log)
    report.files["activity.csv"] = _csv_text(
        ["date", "voting_txs", "delegating_txs"],
        [[a.date, a.voting, a.delegating] for a in activity],
    )
    series = metrics.category_power_series(ds.power, cls)
    report.files["category_power.csv"] = _csv_text(
        ["date"] + [c.value for c in metrics.Category],
        [[d] + [totals[c] for c in metrics.Category] for d, totals in series],
    )
    report.files["categories.csv"] = _csv_text(
        ["voter", "category"], [[v, c.value] for v, c in sorted(cls.categories.items())]
    )
    return report


COMMANDS = {
    "ingest": cmd_ingest,
    "elect": cmd_elect,
    "game": cmd_game,
    "resist": cmd_resist,
    "decay": cmd_decay,
    "replay-takeover": cmd_replay_takeover,
    "classify": cmd_classify,
}

_SUFFIX = {"table": "txt", "csv": "csv", "json": "json"}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.verbose else logging.ERROR,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        report = COMMANDS[args.command](args)
        text = report.render(args.format)
        if args.out is not None:
            args.out.mkdir(parents=True, exist_ok=True)
            name = f"{args.command}.{_SUFFIX[args.format]}"
            (args.out / name).write_text(text, encoding="utf-8")
            for fname, content in report.files.items():
                (args.out / fname).write_text(content, encoding="utf-8")
    except ResourceBoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BOUND
    except (GovernanceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    sys.stdout.write(text)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
