"""Command-line entry point: ``forsage-sim {simulate,replay,analyze,visualize}``.

Errors are reported as one JSON object on stderr, e.g.
``{"error": "bad-value", "ordinal": 4, "message": "..."}``. Exit codes:
0 success, 2 bad arguments, 3 I/O or input-format failure, 4 contract error
during strict replay.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

from .analytics import DEFAULT_MEAN_FEE, DEFAULT_MEDIAN_FEE, FeeModel, profit_loss
from .core import ContractError, MatrixKind, new_state, state_digest
from .sim import DEFAULT_OWNER, RecruitmentModel, build_schedule, run
from .txlog import TxLogError, export_dot, export_report, format_events, format_txlog, parse_txlog, replay
from .units import LAST_LEVEL

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_REPLAY = 4

MODEL_FLAGS = {"uniform": "uniform", "preferential": "preferential", "chain": "chain"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunConfig:
    command: str
    input: Path | None = None
    out: Path | None = None
    owner: str = DEFAULT_OWNER
    seed: int | None = None
    arrivals: int = 0
    model: str = "uniform"
    purchase_prob: float = 0.0
    max_level: int = LAST_LEVEL
    fee_model: str = "constant"
    mean_fee_wei: int = DEFAULT_MEAN_FEE
    median_fee_wei: int = DEFAULT_MEDIAN_FEE
    strict: bool = True
    matrix: str = "x3"
    level: int = 1
    focus: str | None = None
    top: int = 10

    def validate(self) -> None:
        if self.command == "simulate":
            if self.seed is None:
                raise UsageError("simulate requires --seed")
            if self.arrivals < 0:
                raise UsageError("--arrivals must be >= 0")
            if not 0.0 <= self.purchase_prob <= 1.0:
                raise UsageError("--purchase-prob must be in [0, 1]")
            if not 1 <= self.max_level <= LAST_LEVEL:
                raise UsageError(f"--max-level must be in [1, {LAST_LEVEL}]")
        elif self.input is None:
            raise UsageError(f"{self.command} requires --in")
        if self.command == "visualize" and not 1 <= self.level <= LAST_LEVEL:
            raise UsageError(f"--level must be in [1, {LAST_LEVEL}]")
        if self.top < 1:
            raise UsageError("--top must be >= 1")
        try:
            self.fee()
        except ValueError as err:
            raise UsageError(str(err)) from None

    def fee(self) -> FeeModel:
        return FeeModel(self.fee_model, self.mean_fee_wei, self.median_fee_wei)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="forsage-sim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, need_in=True):
        if need_in:
            p.add_argument("--in", dest="input", type=Path, help="transaction log CSV")
        p.add_argument("--out", type=Path, help="output path (stdout when omitted)")
        p.add_argument("--owner", default=DEFAULT_OWNER, help="contract owner address")

    def fees(p):
        p.add_argument("--fee-model", choices=["constant", "lognormal"], default="constant")
        p.add_argument("--mean-fee-wei", type=int, default=DEFAULT_MEAN_FEE)
        p.add_argument("--median-fee-wei", type=int, default=DEFAULT_MEDIAN_FEE)

    def strictness(p):
        g = p.add_mutually_exclusive_group()
        g.add_argument("--strict", dest="strict", action="store_true", default=True)
        g.add_argument("--lenient", dest="strict", action="store_false")

    p = sub.add_parser("simulate", help="generate and run a synthetic population")
    common(p, need_in=False)
    p.add_argument("--seed", type=int)
    p.add_argument("--arrivals", type=int, default=0)
    p.add_argument("--model", choices=sorted(MODEL_FLAGS), default="uniform")
    p.add_argument("--purchase-prob", type=float, default=0.0)
    p.add_argument("--max-level", type=int, default=LAST_LEVEL)
    p.add_argument("--top", type=int, default=10)
    fees(p)

    p = sub.add_parser("replay", help="replay a transaction log, print the state digest")
    common(p)
    strictness(p)

    p = sub.add_parser("analyze", help="replay a log and write the profit report")
    common(p)
    strictness(p)
    fees(p)
    p.add_argument("--top", type=int, default=10)

    p = sub.add_parser("visualize", help="write a DOT graph of one matrix level")
    common(p)
    strictness(p)
    p.add_argument("--matrix", choices=["x3", "x4"], default="x3")
    p.add_argument("--level", type=int, default=1)
    p.add_argument("--focus")
    return parser


def parse_config(argv: list[str]) -> RunConfig:
    ns = vars(build_parser().parse_args(argv))
    cfg = RunConfig(**{k: v for k, v in ns.items() if v is not None or k in ("seed", "focus")})
    cfg.validate()
    return cfg


def _write(path: Path | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text, encoding="utf-8")


def _load(cfg: RunConfig):
    with open(cfg.input, encoding="utf-8", newline="") as fh:
        records = parse_txlog(fh)
    return records, replay(new_state(cfg.owner), records, strict=cfg.strict)


def cmd_simulate(cfg: RunConfig) -> None:
    model = RecruitmentModel(
        kind=MODEL_FLAGS[cfg.model],
        arrivals=cfg.arrivals,
        purchase_prob=cfg.purchase_prob,
        max_level=cfg.max_level,
        seed=cfg.seed,
        fee_model=cfg.fee(),
        owner=cfg.owner,
    )
    schedule = build_schedule(model)
    if cfg.out is None:
        _write(None, format_txlog(schedule))
        return
    result = run(schedule, owner=cfg.owner, seed=cfg.seed)
    report = profit_loss(result.events, schedule, cfg.fee(), state=result.state, k=cfg.top)
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / "schedule.csv").write_text(format_txlog(schedule), encoding="utf-8")
    (cfg.out / "events.csv").write_text(format_events(result.events), encoding="utf-8")
    (cfg.out / "report.json").write_text(export_report(report), encoding="utf-8")
    (cfg.out / "digest.txt").write_text(state_digest(result.state) + "\n", encoding="utf-8")


def cmd_replay(cfg: RunConfig) -> None:
    _, result = _load(cfg)
    digest = state_digest(result.state)
    if cfg.out is not None:
        cfg.out.mkdir(parents=True, exist_ok=True)
        (cfg.out / "events.csv").write_text(format_events(result.events), encoding="utf-8")
        (cfg.out / "digest.txt").write_text(digest + "\n", encoding="utf-8")
        if result.skipped:
            (cfg.out / "skipped.csv").write_text(result.sidecar(), encoding="utf-8")
    elif result.skipped:
        sys.stderr.write(result.sidecar())
    sys.stdout.write(digest + "\n")


def cmd_analyze(cfg: RunConfig) -> None:
    _, result = _load(cfg)
    report = profit_loss(result.events, result.applied, cfg.fee(), state=result.state, k=cfg.top)
    _write(cfg.out, export_report(report))


def cmd_visualize(cfg: RunConfig) -> None:
    _, result = _load(cfg)
    _write(cfg.out, export_dot(result.state, MatrixKind(cfg.matrix), cfg.level, cfg.focus))


COMMANDS = {
    "simulate": cmd_simulate,
    "replay": cmd_replay,
    "analyze": cmd_analyze,
    "visualize": cmd_visualize,
}


def _fail(code: str, message: str, status: int, **extra) -> int:
    sys.stderr.write(json.dumps({"error": code, "message": message, **extra}) + "\n")
    return status


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(sys.argv[1:] if argv is None else argv)
    except UsageError as err:
        return _fail("bad-arguments", str(err), EXIT_USAGE)
    try:
        COMMANDS[cfg.command](cfg)
    except ContractError as err:
        if err.code == "unknown-focus":
            return _fail(err.code, err.message, EXIT_USAGE)
        return _fail(err.code, err.message, EXIT_REPLAY, ordinal=err.ordinal)
    except TxLogError as err:
        return _fail(err.code, str(err), EXIT_IO, line=err.line)
    except OSError as err:
        return _fail("io-error", str(err), EXIT_IO)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
