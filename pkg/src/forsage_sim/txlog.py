"""Transaction-log ingestion, replay and export.

Log format (UTF-8 CSV, header required)::

    ordinal,sender,function,referrer,matrix,level,value_wei,fee_wei

``function`` is one of ``register``, ``buyNewLevel``, ``fallback``. Optional
columns are left empty. All wei amounts are decimal integers.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Iterable, TextIO

from .analytics import (
    LevelsDistribution,
    ProfitReport,
    ProfitRow,
    ReferrerDistribution,
    SpilloverStats,
)
from .core import (
    LEVELS,
    Classification,
    ContractError,
    ContractState,
    MatrixKind,
    PaymentEvent,
    buy_new_level,
    register,
)
from .units import REGISTRATION_COST

log = logging.getLogger(__name__)

TXLOG_HEADER = ["ordinal", "sender", "function", "referrer", "matrix", "level", "value_wei", "fee_wei"]
EVENTS_HEADER = ["tx_ordinal", "payer", "payee", "amount_wei", "matrix", "level", "classification"]
FUNCTIONS = ("register", "buyNewLevel", "fallback")


class TxLogError(ValueError):
    def __init__(self, code: str, message: str, line: int | None = None):
        self.code = code
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{code}: {message}{where}")


@dataclass(frozen=True)
class TxRecord:
    ordinal: int
    sender: str
    function: str
    value: int
    referrer: str | None = None
    matrix: MatrixKind | None = None
    level: int | None = None
    fee: int | None = None


def _opt(text: str) -> str | None:
    text = text.strip()
    return text or None


def _wei(text: str, name: str, line: int) -> int:
    try:
        value = int(text)
    except ValueError:
        raise TxLogError("malformed-row", f"{name} {text!r} is not an integer", line) from None
    if value < 0:
        raise TxLogError("malformed-row", f"{name} is negative", line)
    return value


def parse_txlog(stream: TextIO | str) -> list[TxRecord]:
    """Parse and validate a transaction log.

    Raises :class:`TxLogError` with the 1-based file line number on the first
    malformed row, unknown function, or non-increasing ordinal.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None:
        return []
    if [h.strip() for h in header] != TXLOG_HEADER:
        raise TxLogError("bad-header", f"expected {','.join(TXLOG_HEADER)}", 1)

    records: list[TxRecord] = []
    last = None
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(TXLOG_HEADER):
            raise TxLogError("malformed-row", f"expected {len(TXLOG_HEADER)} columns, got {len(row)}", line)
        ordinal_s, sender, function, referrer, matrix, level, value, fee = (c.strip() for c in row)
        try:
            ordinal = int(ordinal_s)
        except ValueError:
            raise TxLogError("malformed-row", f"ordinal {ordinal_s!r} is not an integer", line) from None
        if last is not None and ordinal <= last:
            raise TxLogError("non-monotonic-ordinal", f"ordinal {ordinal} after {last}", line)
        if not sender:
            raise TxLogError("malformed-row", "sender is empty", line)
        if function not in FUNCTIONS:
            raise TxLogError("unknown-function", f"unknown function {function!r}", line)

        kind = None
        lvl = None
        if function == "buyNewLevel":
            if matrix.lower() not in ("x3", "x4"):
                raise TxLogError("malformed-row", f"buyNewLevel needs matrix x3|x4, got {matrix!r}", line)
            kind = MatrixKind(matrix.lower())
            try:
                lvl = int(level)
            except ValueError:
                raise TxLogError("malformed-row", f"level {level!r} is not an integer", line) from None
        elif matrix or level:
            raise TxLogError("malformed-row", f"{function} takes no matrix/level", line)

        records.append(
            TxRecord(
                ordinal=ordinal,
                sender=sender,
                function=function,
                value=_wei(value, "value_wei", line),
                referrer=_opt(referrer),
                matrix=kind,
                level=lvl,
                fee=None if not fee else _wei(fee, "fee_wei", line),
            )
        )
        last = ordinal
    return records


def _record_row(rec: TxRecord) -> list[str]:
    return [
        str(rec.ordinal),
        rec.sender,
        rec.function,
        rec.referrer or "",
        rec.matrix.value if rec.matrix else "",
        "" if rec.level is None else str(rec.level),
        str(rec.value),
        "" if rec.fee is None else str(rec.fee),
    ]


def format_txlog(records: Iterable[TxRecord], extra: dict[int, str] | None = None) -> str:
    """Serialize records; ``extra`` maps ordinal -> error text for sidecar logs."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TXLOG_HEADER + (["error"] if extra is not None else []))
    for rec in records:
        row = _record_row(rec)
        if extra is not None:
            row.append(extra.get(rec.ordinal, ""))
        writer.writerow(row)
    return buf.getvalue()


def format_events(events: Iterable[PaymentEvent]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(EVENTS_HEADER)
    for ev in events:
        writer.writerow(
            [ev.tx_ordinal, ev.payer, ev.payee, ev.amount, ev.matrix.value, ev.level, ev.classification.value]
        )
    return buf.getvalue()


def parse_events(stream: TextIO | str) -> list[PaymentEvent]:
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.DictReader(stream)
    return [
        PaymentEvent(
            payer=row["payer"],
            payee=row["payee"],
            amount=int(row["amount_wei"]),
            matrix=MatrixKind(row["matrix"]),
            level=int(row["level"]),
            classification=Classification(row["classification"]),
            tx_ordinal=int(row["tx_ordinal"]),
        )
        for row in reader
    ]


def apply_tx(state: ContractState, rec: TxRecord) -> list[PaymentEvent]:
    """Dispatch one record to the state machine.

    ``fallback`` (a plain transfer or unknown selector) registers the sender
    under the owner, provided it carries exactly the registration cost.
    """
    try:
        if rec.function == "register":
            return register(state, rec.sender, rec.referrer, rec.value, rec.ordinal)
        if rec.function == "fallback":
            if rec.value != REGISTRATION_COST:
                raise ContractError("bad-value", f"fallback needs exactly {REGISTRATION_COST} wei")
            return register(state, rec.sender, None, rec.value, rec.ordinal)
        if rec.function == "buyNewLevel":
            if rec.matrix is None or rec.level is None:
                raise ContractError("malformed-tx", "buyNewLevel needs matrix and level")
            return buy_new_level(state, rec.sender, rec.matrix, rec.level, rec.value, rec.ordinal)
        raise ContractError("unknown-function", rec.function)
    except ContractError as err:
        raise err.at(rec.ordinal) from None


@dataclass
class ReplayResult:
    state: ContractState
    events: list[PaymentEvent] = field(default_factory=list)
    applied: list[TxRecord] = field(default_factory=list)
    skipped: list[tuple[TxRecord, ContractError]] = field(default_factory=list)

    def sidecar(self) -> str:
        """Skipped records in log format with an extra ``error`` column."""
        errors = {rec.ordinal: f"{err.code}: {err.message}" for rec, err in self.skipped}
        return format_txlog([rec for rec, _ in self.skipped], extra=errors)


def replay(state: ContractState, records: Iterable[TxRecord], *, strict: bool = True) -> ReplayResult:
    """Apply ``records`` in order, mutating ``state``.

    In strict mode the first rejected record raises its :class:`ContractError`
    (annotated with the ordinal). In lenient mode it is recorded in
    ``skipped`` and replay continues.
    """
    result = ReplayResult(state=state)
    for rec in records:
        try:
            evs = apply_tx(state, rec)
        except ContractError as err:
            if strict:
                raise
            log.info("skipping tx %s: %s", rec.ordinal, err)
            result.skipped.append((rec, err))
            continue
        result.events.extend(evs)
        result.applied.append(rec)
    return result


def _dot_id(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _record_label(text: str) -> str:
    for ch in "\\{}|<>\" ":
        text = text.replace(ch, "\\" + ch)
    return text


def export_dot(
    state: ContractState,
    matrix: MatrixKind | str = MatrixKind.X3,
    level: int = 1,
    focus: str | None = None,
) -> str:
    """GraphViz digraph of the slot-referrer tree at one matrix level.

    Each node is a user holding that slot, labelled with its counters and a
    row of its 12 slots in the matrix; unopened slots appear as numbered dots.
    Edges run from slot referrer to referral. With ``focus`` only the focus
    user, its slot-referrer ancestors and its descendants are drawn.
    """
    matrix = MatrixKind(matrix)
    if focus is not None and focus not in state.users:
        raise ContractError("unknown-focus", f"{focus} is not registered")
    if level not in LEVELS:
        raise ContractError("bad-level", f"level must be in [1, 12], got {level}")

    holders = [a for a, rec in state.users.items() if rec.slots(matrix)[level].active]
    holders.sort(key=lambda a: state.users[a].registration_ordinal)
    children: dict[str, list[str]] = {a: [] for a in holders}
    for a in holders:
        parent = state.slot(a, matrix, level).slot_referrer
        if parent is not None and parent != a:
            children[parent].append(a)

    if focus is None:
        shown = holders
    elif focus not in children:
        shown = [focus]
    else:
        keep = set()
        cur = focus
        while cur is not None and cur not in keep:
            keep.add(cur)
            cur = state.slot(cur, matrix, level).slot_referrer
        stack = [focus]
        while stack:
            node = stack.pop()
            keep.add(node)
            stack.extend(c for c in children[node] if c not in keep)
        shown = [a for a in holders if a in keep] or [focus]
    shown_set = set(shown)

    lines = [
        f"digraph {matrix.value}_level_{level} {{",
        "  rankdir=TB;",
        "  node [shape=record, fontname=\"Helvetica\"];",
    ]
    for addr in shown:
        rec = state.users[addr]
        slot = rec.slots(matrix)[level]
        if matrix is MatrixKind.X3:
            members = f"referrals={len(slot.referrals)}"
        else:
            members = f"first={len(slot.first_level)} second={len(slot.second_level)}"
        cells = "|".join(
            str(lv) if rec.slots(matrix)[lv].active else f"\u2022{lv}" for lv in LEVELS
        )
        fields = [
            _record_label(addr + (" (owner)" if addr == state.owner else "")),
            _record_label(f"upline={rec.upline}"),
            _record_label(f"partners={rec.partners_count}"),
            _record_label(f"reinvest={slot.reinvest_count}"),
            _record_label(f"blocked={'yes' if slot.blocked else 'no'}"),
            _record_label(members),
        ]
        label = "{" + "|".join(fields) + "|{" + cells + "}}"
        style = ', style=filled, fillcolor="#f4cccc"' if slot.blocked else ""
        lines.append(f"  {_dot_id(addr)} [label=\"{label}\"{style}];")
    for addr in shown:
        for child in children.get(addr, []):
            if child in shown_set:
                lines.append(f"  {_dot_id(addr)} -> {_dot_id(child)};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _row_json(row: ProfitRow) -> dict:
    return {
        "address": row.address,
        "received": str(row.received),
        "paid_in": str(row.paid_in),
        "fees": str(row.fees),
        "net": str(row.net),
    }


def _row_from(d: dict) -> ProfitRow:
    return ProfitRow(
        address=d["address"],
        received=int(d["received"]),
        paid_in=int(d["paid_in"]),
        fees=int(d["fees"]),
        net=int(d["net"]),
    )


def _int_map(d: dict, wei: bool = False) -> dict:
    return {str(k): str(v) if wei else v for k, v in d.items()}


def export_report(report: ProfitReport) -> str:
    """JSON report with stable key order; every wei value is a decimal string."""
    lv = report.levels
    rf = report.referrers
    doc = {
        "addresses": [_row_json(r) for r in report.rows],
        "aggregates": {
            "address_count": len(report.rows),
            "winners": report.winners,
            "losers": report.losers,
            "break_even": report.break_even,
            "winners_net": str(report.winners_net),
            "losers_net": str(report.losers_net),
            "mean_loss": str(report.mean_loss),
            "total_received": str(report.total_received),
            "total_paid_in": str(report.total_paid_in),
            "total_fees": str(report.total_fees),
            "top": [_row_json(r) for r in report.top],
            "levels": {
                "counts": _int_map(lv.counts),
                "collective_net": _int_map(lv.collective_net, wei=True),
                "mean": lv.mean,
                "median": lv.median,
                "sd": lv.sd,
                "with_registration_mean": lv.with_registration_mean,
                "with_registration_median": lv.with_registration_median,
            },
            "referrers": {
                "counts": _int_map(rf.counts),
                "per_user": dict(rf.per_user),
                "mean": rf.mean,
                "median": rf.median,
                "sd": rf.sd,
                "top_address": rf.top_address,
            },
            "spillover": asdict(report.spillover),
        },
    }
    return json.dumps(doc, separators=(",", ":")) + "\n"


def parse_report(text: str) -> ProfitReport:
    doc = json.loads(text)
    agg = doc["aggregates"]
    lv = agg["levels"]
    rf = agg["referrers"]
    return ProfitReport(
        rows=[_row_from(d) for d in doc["addresses"]],
        winners=agg["winners"],
        losers=agg["losers"],
        break_even=agg["break_even"],
        winners_net=int(agg["winners_net"]),
        losers_net=int(agg["losers_net"]),
        mean_loss=int(agg["mean_loss"]),
        total_received=int(agg["total_received"]),
        total_paid_in=int(agg["total_paid_in"]),
        total_fees=int(agg["total_fees"]),
        top=[_row_from(d) for d in agg["top"]],
        levels=LevelsDistribution(
            counts={int(k): v for k, v in lv["counts"].items()},
            collective_net={int(k): int(v) for k, v in lv["collective_net"].items()},
            mean=lv["mean"],
            median=lv["median"],
            sd=lv["sd"],
            with_registration_mean=lv["with_registration_mean"],
            with_registration_median=lv["with_registration_median"],
        ),
        referrers=ReferrerDistribution(
            counts={int(k): v for k, v in rf["counts"].items()},
            per_user=dict(rf["per_user"]),
            mean=rf["mean"],
            median=rf["median"],
            sd=rf["sd"],
            top_address=rf["top_address"],
        ),
        spillover=SpilloverStats(**agg["spillover"]),
    )
