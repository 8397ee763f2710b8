"""Deterministic state machine for the Forsage Matrix contract.

The contract keeps, for every user, an upline link and two matrices (X3 and
X4) of 12 slots each. Every value-carrying call is routed through the slot
trees and paid out in full within the same transaction, so each applied
transaction emits :class:`PaymentEvent` objects whose amounts sum exactly to
the value sent.

State is mutated in place. All preconditions are validated before any
mutation, so a rejected transaction leaves the state untouched.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum

from .units import LAST_LEVEL, REGISTRATION_COST, slot_price

LEVELS = range(1, LAST_LEVEL + 1)


class MatrixKind(str, Enum):
    X3 = "x3"
    X4 = "x4"


class Classification(str, Enum):
    DIRECT = "direct"
    SPILLOVER = "spillover"  # X4 payment redirected past a blocked slot
    SKIP = "skip"  # X3 payment redirected past a blocked slot
    REINVEST = "reinvest-passthrough"


class ContractError(Exception):
    """A transaction the contract would reject.

    ``code`` is a short stable identifier (``bad-value``, ``unknown-referrer``,
    ...) suitable for machine-readable error output.
    """

    def __init__(self, code: str, message: str = "", ordinal: int | None = None):
        self.code = code
        self.message = message or code
        self.ordinal = ordinal
        super().__init__(f"{code}: {self.message}")

    def at(self, ordinal: int) -> "ContractError":
        return ContractError(self.code, self.message, ordinal)


@dataclass
class X3Slot:
    active: bool = False
    slot_referrer: str | None = None
    referrals: list[str] = field(default_factory=list)
    blocked: bool = False
    reinvest_count: int = 0
    never_block: bool = False


@dataclass
class X4Slot:
    active: bool = False
    slot_referrer: str | None = None
    first_level: list[str] = field(default_factory=list)
    second_level: list[str] = field(default_factory=list)
    blocked: bool = False
    reinvest_count: int = 0
    closed_part: str | None = None
    never_block: bool = False


@dataclass
class UserRecord:
    address: str
    upline: str
    registration_ordinal: int
    partners_count: int = 0
    x3: dict[int, X3Slot] = field(default_factory=lambda: {lv: X3Slot() for lv in LEVELS})
    x4: dict[int, X4Slot] = field(default_factory=lambda: {lv: X4Slot() for lv in LEVELS})

    def slots(self, matrix: MatrixKind) -> dict:
        return self.x3 if matrix is MatrixKind.X3 else self.x4

    def active_levels(self, matrix: MatrixKind) -> int:
        return sum(1 for s in self.slots(matrix).values() if s.active)


@dataclass
class ContractState:
    owner: str
    users: dict[str, UserRecord] = field(default_factory=dict)
    next_ordinal: int = 0
    received: dict[str, int] = field(default_factory=dict)
    sent: dict[str, int] = field(default_factory=dict)
    last_tx_ordinal: int | None = None
    # (holder, matrix, level) for every slot closed so far; not part of the digest.
    closed_slots: list[tuple[str, MatrixKind, int]] = field(default_factory=list, repr=False)

    def slot(self, address: str, matrix: MatrixKind, level: int):
        return self.users[address].slots(matrix)[level]


@dataclass(frozen=True)
class PaymentEvent:
    payer: str
    payee: str
    amount: int
    matrix: MatrixKind
    level: int
    classification: Classification
    tx_ordinal: int


@dataclass
class RoutingTrace:
    """What happened while routing one dividend.

    ``intended`` is the first user the routing tried to pay; ``final`` is who
    was actually paid.
    """

    matrix: MatrixKind
    intended: str | None = None
    final: str | None = None
    reinvest_hops: list[str] = field(default_factory=list)
    blocked_redirects: list[str] = field(default_factory=list)


def classify_payment(trace: RoutingTrace) -> Classification:
    if trace.intended == trace.final:
        return Classification.DIRECT
    if trace.blocked_redirects:
        return Classification.SPILLOVER if trace.matrix is MatrixKind.X4 else Classification.SKIP
    return Classification.REINVEST


def new_state(owner: str) -> ContractState:
    state = ContractState(owner=owner)
    rec = UserRecord(address=owner, upline=owner, registration_ordinal=0)
    for lv in LEVELS:
        rec.x3[lv].active = True
        rec.x4[lv].active = True
    state.users[owner] = rec
    state.next_ordinal = 1
    state.received[owner] = 0
    state.sent[owner] = 0
    return state


def find_free_referrer(state: ContractState, user: str, matrix: MatrixKind, level: int) -> str:
    """Nearest strict ancestor of ``user`` on the upline chain with the slot open.

    The owner has every slot open, so the walk always terminates; it is bounded
    by the number of users as a guard against a corrupted upline graph.
    """
    users = state.users
    cur = user
    for _ in range(len(users) + 1):
        up = users[cur].upline
        if users[up].slots(matrix)[level].active:
            return up
        cur = up
    raise ContractError("upline-cycle", f"upline chain from {user} does not reach an open slot")


def _check_ordinal(state: ContractState, tx_ordinal: int) -> None:
    if state.last_tx_ordinal is not None and tx_ordinal <= state.last_tx_ordinal:
        raise ContractError(
            "ordinal-order", f"ordinal {tx_ordinal} not after {state.last_tx_ordinal}"
        )


def _free_upline(state, start, matrix, level, trace) -> str:
    cur = state.users[start].upline
    for _ in range(len(state.users) + 1):
        slot = state.slot(cur, matrix, level)
        if slot.active and not slot.blocked:
            return cur
        trace.blocked_redirects.append(cur)
        cur = state.users[cur].upline
    raise ContractError("upline-cycle", f"no free upline above {start}")


def _pay(state, trace, holder, sender, matrix, level, amount, tx_ordinal) -> PaymentEvent:
    # Walk slot referrers past blocked slots; the owner is never blocked.
    if trace.intended is None:
        trace.intended = holder
    receiver, seen = holder, set()
    while True:
        slot = state.slot(receiver, matrix, level)
        if not slot.blocked:
            break
        seen.add(receiver)
        trace.blocked_redirects.append(receiver)
        receiver = slot.slot_referrer
        if receiver in seen:
            # X4 re-placement can leave slot referrers in a loop; leave it
            # through upline links, which always end at the owner.
            receiver = _free_upline(state, receiver, matrix, level, trace)
            break
    trace.final = receiver
    state.received[receiver] = state.received.get(receiver, 0) + amount
    state.sent[sender] = state.sent.get(sender, 0) + amount
    return PaymentEvent(
        payer=sender,
        payee=receiver,
        amount=amount,
        matrix=matrix,
        level=level,
        classification=classify_payment(trace),
        tx_ordinal=tx_ordinal,
    )


def _require_active(slot, holder: str, matrix: MatrixKind, level: int) -> None:
    if not slot.active:
        raise ContractError("inactive-slot", f"{holder} has no open {matrix.value} slot {level}")


def _close_slot(state: ContractState, holder: str, slot, level: int, matrix: MatrixKind) -> None:
    state.closed_slots.append((holder, matrix, level))
    if level < LAST_LEVEL and not slot.never_block and holder != state.owner:
        slot.blocked = True
    slot.reinvest_count += 1


def route_x3(
    state: ContractState,
    payer: str,
    slot_holder: str,
    level: int,
    amount: int,
    tx_ordinal: int,
    *,
    sender: str | None = None,
    trace: RoutingTrace | None = None,
) -> list[PaymentEvent]:
    """Place ``payer`` in ``slot_holder``'s X3 slot and route the dividend.

    The third referral closes the slot: it is cleared, possibly blocked, and
    (unless the holder is the owner) the holder is re-placed under its nearest
    open upline, with the same amount flowing on.
    """
    sender = sender or payer
    trace = trace or RoutingTrace(MatrixKind.X3)
    while True:
        slot = state.slot(slot_holder, MatrixKind.X3, level)
        _require_active(slot, slot_holder, MatrixKind.X3, level)
        slot.referrals.append(payer)
        if len(slot.referrals) < 3:
            return [_pay(state, trace, slot_holder, sender, MatrixKind.X3, level, amount, tx_ordinal)]

        slot.referrals = []
        _close_slot(state, slot_holder, slot, level, MatrixKind.X3)
        if trace.intended is None:
            trace.intended = slot_holder
        if slot_holder == state.owner:
            return [_pay(state, trace, slot_holder, sender, MatrixKind.X3, level, amount, tx_ordinal)]

        upper = find_free_referrer(state, slot_holder, MatrixKind.X3, level)
        slot.slot_referrer = upper
        trace.reinvest_hops.append(slot_holder)
        payer, slot_holder = slot_holder, upper


def _downstream(slot: X4Slot) -> int:
    return len(slot.first_level) + len(slot.second_level)


def _pick_child(state: ContractState, holder_slot: X4Slot, payer: str, level: int) -> str | None:
    """First-level child of the holder that takes ``payer``, or None if none can.

    A user is never placed beneath itself and only a child with a free
    first-level spot qualifies. Between two candidates the closed part is
    avoided; failing that the child with fewer members at this slot wins,
    then the earlier-registered one.
    """
    first, second = holder_slot.first_level[0], holder_slot.first_level[1]
    slots = {c: state.slot(c, MatrixKind.X4, level) for c in (first, second) if c != payer}
    cands = [c for c, sl in slots.items() if len(sl.first_level) < 2]
    if len(cands) < 2:
        return cands[0] if cands else None
    if holder_slot.closed_part is not None:
        return second if first == holder_slot.closed_part else first
    n_first, n_second = _downstream(slots[first]), _downstream(slots[second])
    if n_first != n_second:
        return first if n_first < n_second else second
    reg = state.users
    return min(first, second, key=lambda a: reg[a].registration_ordinal)


def route_x4(
    state: ContractState,
    payer: str,
    slot_holder: str,
    level: int,
    amount: int,
    tx_ordinal: int,
    *,
    sender: str | None = None,
    trace: RoutingTrace | None = None,
) -> list[PaymentEvent]:
    """Place ``payer`` in ``slot_holder``'s X4 slot and route the dividend.

    A first-level placement also lands in the second level of the holder's
    slot referrer, who is the one paid. Once the holder's first level is full,
    the payer goes to the holder's second level (beneath one of the two
    first-level children) and the holder is paid. The fourth second-level
    member closes the slot.
    """
    sender = sender or payer
    trace = trace or RoutingTrace(MatrixKind.X4)
    X4 = MatrixKind.X4
    while True:
        hslot = state.slot(slot_holder, X4, level)
        _require_active(hslot, slot_holder, X4, level)
        pslot = state.slot(payer, X4, level)

        if len(hslot.first_level) < 2:
            hslot.first_level.append(payer)
            pslot.slot_referrer = slot_holder
            if slot_holder == state.owner:
                return [_pay(state, trace, slot_holder, sender, X4, level, amount, tx_ordinal)]
            top = hslot.slot_referrer
            state.slot(top, X4, level).second_level.append(payer)
        else:
            hslot.second_level.append(payer)
            child = _pick_child(state, hslot, payer, level)
            if child is None:
                pslot.slot_referrer = slot_holder
            else:
                state.slot(child, X4, level).first_level.append(payer)
                pslot.slot_referrer = child
            top = slot_holder

        tslot = state.slot(top, X4, level)
        if len(tslot.second_level) < 4:
            return [_pay(state, trace, top, sender, X4, level, amount, tx_ordinal)]

        # Six members: close the slot and move its holder upstream.
        if tslot.slot_referrer is not None:
            above = state.slot(tslot.slot_referrer, X4, level)
            if len(above.first_level) == 2 and top in above.first_level:
                above.closed_part = top
        tslot.first_level = []
        tslot.second_level = []
        tslot.closed_part = None
        _close_slot(state, top, tslot, level, X4)
        if trace.intended is None:
            trace.intended = top
        if top == state.owner:
            return [_pay(state, trace, top, sender, X4, level, amount, tx_ordinal)]
        trace.reinvest_hops.append(top)
        payer, slot_holder = top, find_free_referrer(state, top, X4, level)


def register(
    state: ContractState,
    new_user: str,
    referrer: str | None,
    value: int,
    tx_ordinal: int,
) -> list[PaymentEvent]:
    """Register ``new_user`` under ``referrer`` (the owner when absent)."""
    _check_ordinal(state, tx_ordinal)
    if value != REGISTRATION_COST:
        raise ContractError("bad-value", f"registration costs {REGISTRATION_COST} wei, got {value}")
    if new_user in state.users:
        raise ContractError("already-registered", f"{new_user} is already registered")
    upline = state.owner if referrer is None else referrer
    if upline == new_user:
        raise ContractError("self-referral", f"{new_user} cannot refer itself")
    if upline not in state.users:
        raise ContractError("unknown-referrer", f"referrer {upline} is not registered")

    rec = UserRecord(address=new_user, upline=upline, registration_ordinal=state.next_ordinal)
    rec.x3[1].active = True
    rec.x4[1].active = True
    state.users[new_user] = rec
    state.next_ordinal += 1
    state.received.setdefault(new_user, 0)
    state.sent.setdefault(new_user, 0)
    state.users[upline].partners_count += 1
    state.last_tx_ordinal = tx_ordinal

    half = slot_price(1)
    free3 = find_free_referrer(state, new_user, MatrixKind.X3, 1)
    rec.x3[1].slot_referrer = free3
    events = route_x3(state, new_user, free3, 1, half, tx_ordinal)
    free4 = find_free_referrer(state, new_user, MatrixKind.X4, 1)
    events += route_x4(state, new_user, free4, 1, half, tx_ordinal)
    _assert_conserved(events, value)
    return events


def buy_new_level(
    state: ContractState,
    user: str,
    matrix: MatrixKind,
    level: int,
    value: int,
    tx_ordinal: int,
) -> list[PaymentEvent]:
    """Open ``user``'s slot at ``level`` in ``matrix``; the previous level must be open."""
    _check_ordinal(state, tx_ordinal)
    matrix = MatrixKind(matrix)
    if user not in state.users:
        raise ContractError("unknown-user", f"{user} is not registered")
    if not isinstance(level, int) or not 2 <= level <= LAST_LEVEL:
        raise ContractError("bad-level", f"level must be in [2, {LAST_LEVEL}], got {level!r}")
    if value != slot_price(level):
        raise ContractError("bad-value", f"level {level} costs {slot_price(level)} wei, got {value}")
    slots = state.users[user].slots(matrix)
    if slots[level].active:
        raise ContractError("level-active", f"{matrix.value} level {level} already open")
    if not slots[level - 1].active:
        raise ContractError("previous-level-inactive", f"{matrix.value} level {level - 1} not open")

    prev = slots[level - 1]
    prev.blocked = False
    prev.never_block = True
    slots[level].active = True
    state.last_tx_ordinal = tx_ordinal

    free = find_free_referrer(state, user, matrix, level)
    if matrix is MatrixKind.X3:
        slots[level].slot_referrer = free
        events = route_x3(state, user, free, level, value, tx_ordinal)
    else:
        events = route_x4(state, user, free, level, value, tx_ordinal)
    _assert_conserved(events, value)
    return events


def _assert_conserved(events: list[PaymentEvent], value: int) -> None:
    total = sum(e.amount for e in events)
    if total != value:
        raise AssertionError(f"payments {total} do not exhaust value {value}")


def _slot_dict(slot) -> dict:
    d = dict(vars(slot))
    for key in ("referrals", "first_level", "second_level"):
        if key in d:
            d[key] = list(d[key])
    return d


def canonical_state(state: ContractState) -> dict:
    """Plain, JSON-ready view of the full state with deterministic ordering."""
    users = []
    for addr in sorted(state.users):
        rec = state.users[addr]
        users.append(
            {
                "address": rec.address,
                "upline": rec.upline,
                "registration_ordinal": rec.registration_ordinal,
                "partners_count": rec.partners_count,
                "x3": [_slot_dict(rec.x3[lv]) for lv in LEVELS],
                "x4": [_slot_dict(rec.x4[lv]) for lv in LEVELS],
            }
        )
    ledger = [
        [addr, str(state.received.get(addr, 0)), str(state.sent.get(addr, 0))]
        for addr in sorted(set(state.received) | set(state.sent))
    ]
    return {
        "owner": state.owner,
        "next_ordinal": state.next_ordinal,
        "last_tx_ordinal": state.last_tx_ordinal,
        "users": users,
        "ledger": ledger,
    }


def state_digest(state: ContractState) -> str:
    """SHA-256 hex digest of the canonical serialization of ``state``."""
    blob = json.dumps(canonical_state(state), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()
