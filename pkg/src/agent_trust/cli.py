"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 per-trial failures, 3 analysis error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

from . import backend as be
from . import report
from .errors import DomainError, LookupFailure, RowError, SchemaError, StateError, TrustHarnessError
from .ledger import Ledger
from .paramspace import (
    DEFAULT_MULTIPLIER,
    DEFAULT_Q1_CENTS,
    DEFAULT_Q3_CENTS,
    DEFAULT_RATE_USD_PER_1000,
    DEFAULT_STEP_CENTS,
    TokenRate,
    build_grid,
    cents_to_tokens,
    derive_bounds,
    load_endowment_history,
    load_inflation_table,
)
from .protocol import Wave, build_session, write_manifest
from .records import read_records
from .runner import load_script, run_session, scripted_backend
from .stats import analyze

EXIT_OK, EXIT_USAGE, EXIT_TRIAL_FAILURES, EXIT_ANALYSIS = 0, 1, 2, 3


class UsageError(TrustHarnessError):
    pass


@dataclass
class RunConfig:
    wave: int = 1
    mode: str = "replay"
    seed: int = 0
    archive: str | None = None
    out: str = "out"
    format: str = "csv"
    records: str | None = None
    q1: int = DEFAULT_Q1_CENTS
    q3: int = DEFAULT_Q3_CENTS
    step: int = DEFAULT_STEP_CENTS
    rate_usd_per_1000: str = DEFAULT_RATE_USD_PER_1000
    multiplier: int = DEFAULT_MULTIPLIER
    history: str | None = None
    inflation: str | None = None
    reference_year: int = 2023
    endpoint_url: str = be.DEFAULT_ENDPOINT
    model_name: str = be.DEFAULT_MODEL
    temperature: float = be.DEFAULT_TEMPERATURE
    max_output_tokens: int = be.DEFAULT_MAX_OUTPUT_TOKENS
    requests_per_minute: float = be.DEFAULT_REQUESTS_PER_MINUTE
    max_retries: int = be.DEFAULT_MAX_ATTEMPTS

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    @property
    def records_path(self) -> Path:
        return Path(self.records) if self.records else self.out_dir / "records.jsonl"

    def validate(self) -> None:
        if self.mode not in ("live", "replay", "scripted"):
            raise UsageError(f"unknown mode {self.mode!r}")
        if self.format not in ("csv", "markdown", "svg"):
            raise UsageError(f"unknown format {self.format!r}")
        if str(self.wave) not in ("1", "2", "w1", "w2"):
            raise UsageError(f"wave must be 1 or 2, got {self.wave!r}")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit 2, which is reserved here
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    p.add_argument("--config", help="JSON file with the same keys as the flags")
    p.add_argument("--out", help="output directory")
    p.add_argument("--wave", choices=["1", "2"])
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=["live", "replay", "scripted"])
    p.add_argument("--archive", help="replay archive (replay/live) or decision table (scripted)")
    p.add_argument("--records", help="trial-record file (default OUT/records.jsonl)")
    p.add_argument("--format", choices=["csv", "markdown", "svg"])
    p.add_argument("--q1", type=int, help="lowest stake, cents")
    p.add_argument("--q3", type=int, help="highest stake, cents")
    p.add_argument("--step", type=int, help="stake increment, cents")
    p.add_argument("--rate-usd-per-1000", dest="rate_usd_per_1000")
    p.add_argument("--multiplier", type=int)
    p.add_argument("--history", help="endowment history CSV to derive q1/q3 from")
    p.add_argument("--inflation", help="inflation factor CSV used with --history")
    p.add_argument("--reference-year", dest="reference_year", type=int)
    p.add_argument("--endpoint-url", dest="endpoint_url")
    p.add_argument("--model-name", dest="model_name")
    p.add_argument("--temperature", type=float)
    p.add_argument("--max-output-tokens", dest="max_output_tokens", type=int)
    p.add_argument("--requests-per-minute", dest="requests_per_minute", type=float)
    p.add_argument("--max-retries", dest="max_retries", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="agent-trust", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("params", parents=[common], help="write the stake grid")
    sub.add_parser("run", parents=[common], help="run or replay a session")
    sub.add_parser("analyze", parents=[common], help="proportion tests and logistic fits")
    sub.add_parser("report", parents=[common], help="Table 1 counts and choice-by-stake output")
    ledger = sub.add_parser("ledger", parents=[common], help="inspect or resolve obligations")
    lsub = ledger.add_subparsers(dest="ledger_command", required=True, parser_class=_Parser)
    lsub.add_parser("show", parents=[common])
    resolve = lsub.add_parser("resolve", parents=[common])
    resolve.add_argument("trial_id")
    resolve.add_argument("tokens", type=int)
    return parser


def load_config(args: argparse.Namespace) -> tuple[RunConfig, set[str]]:
    """Defaults, then the JSON config file, then flags. Returns the keys set explicitly."""
    known = {f.name for f in fields(RunConfig)}
    values: dict = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        for key, value in raw.items():
            key = key.replace("-", "_")
            if key not in known:
                raise UsageError(f"unknown config key {key!r}")
            values[key] = value
    values.update({k: v for k, v in vars(args).items() if k in known})
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg, set(values)


def _grid(cfg: RunConfig, explicit: set[str]):
    q1, q3 = cfg.q1, cfg.q3
    if cfg.history:
        if not cfg.inflation:
            raise UsageError("--history needs --inflation")
        with open(cfg.history, encoding="utf-8", newline="") as fh:
            history = load_endowment_history(fh)
        with open(cfg.inflation, encoding="utf-8", newline="") as fh:
            table = load_inflation_table(fh)
        d1, d3 = derive_bounds(history, table, cfg.reference_year)
        q1 = q1 if "q1" in explicit else d1
        q3 = q3 if "q3" in explicit else d3
    try:
        return build_grid(q1, q3, cfg.step)
    except DomainError as exc:
        raise UsageError(str(exc)) from None


def _rate(cfg: RunConfig) -> TokenRate:
    try:
        return TokenRate.parse(cfg.rate_usd_per_1000)
    except (DomainError, ValueError, ArithmeticError) as exc:
        raise UsageError(f"bad token rate: {exc}") from None


def cmd_params(cfg: RunConfig, explicit: set[str]) -> int:
    grid = _grid(cfg, explicit)
    rate = _rate(cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.out_dir / "grid.csv"
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("endowment_cents", "endowment_usd", "x_tokens", "triple_tokens"))
        for cents in grid:
            x = cents_to_tokens(cents, rate)
            w.writerow((cents, f"{cents / 100:.2f}", x, cfg.multiplier * x))
    print(f"wrote {len(grid)} stakes ({grid.q1_cents}..{grid.q3_cents} by {grid.step_cents}) to {path}")
    return EXIT_OK


def _backend(cfg: RunConfig, session):
    if cfg.mode == "scripted":
        if not cfg.archive:
            raise UsageError("scripted mode needs --archive (decision table)")
        return scripted_backend(session, load_script(cfg.archive))
    if cfg.mode == "replay":
        if not cfg.archive or not Path(cfg.archive).exists():
            raise UsageError("replay mode needs an existing --archive")
        return be.ReplayBackend(be.ReplayArchive(cfg.archive))
    archive = be.ReplayArchive(cfg.archive) if cfg.archive else None
    try:
        return be.LiveBackend(
            cfg.endpoint_url,
            requests_per_minute=cfg.requests_per_minute,
            max_attempts=cfg.max_retries,
            archive=archive,
        )
    except be.CredentialError as exc:
        raise UsageError(str(exc)) from None


def cmd_run(cfg: RunConfig, explicit: set[str]) -> int:
    grid = _grid(cfg, explicit)
    session = build_session(grid, cfg.wave, cfg.seed, _rate(cfg), cfg.multiplier)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    with (cfg.out_dir / "manifest.jsonl").open("w", encoding="utf-8") as fh:
        write_manifest(session, fh)
    backend = _backend(cfg, session)
    ledger = Ledger.load(cfg.out_dir / "ledger.jsonl")
    summary = run_session(
        session,
        backend,
        cfg.records_path,
        ledger=ledger,
        model_name=cfg.model_name,
        temperature=cfg.temperature,
        max_output_tokens=cfg.max_output_tokens,
    )
    with (cfg.out_dir / "errors.jsonl").open("w", encoding="utf-8") as fh:
        for err in summary.errors:
            fh.write(json.dumps(asdict(err), sort_keys=True) + "\n")
    print(
        f"{summary.total} trials: {summary.completed} completed, {summary.skipped} already recorded, "
        f"{len(summary.errors)} failed"
    )
    for err in summary.errors[:10]:
        print(f"  {err.trial_id}: {err.error_type}: {err.message}", file=sys.stderr)
    return EXIT_OK if summary.ok else EXIT_TRIAL_FAILURES


def _load_records(cfg: RunConfig):
    if not cfg.records_path.exists():
        raise UsageError(f"no records at {cfg.records_path}")
    return read_records(cfg.records_path)


def cmd_analyze(cfg: RunConfig, explicit: set[str]) -> int:
    records = _load_records(cfg)
    wave = cfg.wave
    if "wave" not in explicit and records:
        wave = records[0].wave
    try:
        result = analyze(records, wave)
    except DomainError as exc:
        print(f"analysis error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    tag = Wave.parse(wave).value
    with (cfg.out_dir / f"analysis_{tag}.json").open("w", encoding="utf-8") as fh:
        json.dump(result.to_records(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    text = result.to_text()
    (cfg.out_dir / f"analysis_{tag}.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def cmd_report(cfg: RunConfig, explicit: set[str]) -> int:
    records = _load_records(cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    if cfg.format == "csv":
        outputs = {"table1.csv": report.counts_csv(records), "choices.csv": report.choices_csv(records)}
    elif cfg.format == "markdown":
        outputs = {"report.md": report.markdown(records)}
    else:
        outputs = {"choices.svg": report.svg(records)}
    for name, body in outputs.items():
        (cfg.out_dir / name).write_text(body, encoding="utf-8")
        print(f"wrote {cfg.out_dir / name}")
    return EXIT_OK


def cmd_ledger(cfg: RunConfig, args: argparse.Namespace) -> int:
    path = cfg.out_dir / "ledger.jsonl"
    if not path.exists():
        raise UsageError(f"no ledger at {path}")
    ledger = Ledger.load(path)
    if args.ledger_command == "resolve":
        try:
            entry = ledger.resolve(args.trial_id, args.tokens)
        except (DomainError, StateError, LookupFailure) as exc:
            raise UsageError(str(exc)) from None
        print(f"{entry.trial_id}: resolved at {entry.resolution_tokens} tokens")
        return EXIT_OK
    for e in ledger:
        state = "resolved" if e.resolved else "pending"
        amount = e.resolution_tokens if e.resolved else f"0..{e.max_tokens}"
        print(f"{e.trial_id}\t{e.kind.value}\t{state}\t{amount}")
    t = ledger.totals()
    print(f"resolved tokens: {t.resolved_tokens}; pending: {t.pending_count} (max exposure {t.pending_max_exposure})")
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg, explicit = load_config(args)
        if args.command == "params":
            return cmd_params(cfg, explicit)
        if args.command == "run":
            return cmd_run(cfg, explicit)
        if args.command == "analyze":
            return cmd_analyze(cfg, explicit)
        if args.command == "report":
            return cmd_report(cfg, explicit)
        return cmd_ledger(cfg, args)
    except (UsageError, SchemaError, RowError, LookupFailure) as exc:
        print(f"agent-trust: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
