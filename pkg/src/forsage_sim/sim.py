"""Seeded synthetic populations run through the contract state machine.

A :class:`RecruitmentModel` describes how new users pick an upline and how
eagerly existing users upgrade. :func:`build_schedule` turns it into an
ordered transaction log; :func:`run` replays any such log.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .analytics import FeeModel
from .core import ContractState, MatrixKind, PaymentEvent, new_state, state_digest
from .txlog import TxRecord, apply_tx, replay
from .units import LAST_LEVEL, REGISTRATION_COST, slot_price

RNG_ALGORITHM = "python-random-mt19937"
MODEL_KINDS = ("uniform", "preferential", "chain")


def address_for(n: int) -> str:
    """Deterministic 20-byte hex address; ``address_for(1)`` is the default owner."""
    return f"0x{n:040x}"


DEFAULT_OWNER = address_for(1)


@dataclass(frozen=True)
class RecruitmentModel:
    """Population model.

    ``uniform``: each arrival picks its upline uniformly among registered users.
    ``preferential``: upline chosen with weight ``partners_count + 1``.
    ``chain``: each arrival is referred by the previous one.

    Whenever a non-owner slot fills, its holder buys the next level of that
    matrix with probability ``purchase_prob`` (up to ``max_level``).
    """

    kind: str = "uniform"
    arrivals: int = 0
    purchase_prob: float = 0.0
    max_level: int = LAST_LEVEL
    seed: int = 0
    fee_model: FeeModel = field(default_factory=FeeModel)
    owner: str = DEFAULT_OWNER

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.arrivals < 0:
            raise ValueError("arrivals must be >= 0")
        if not 0.0 <= self.purchase_prob <= 1.0:
            raise ValueError("purchase_prob must be in [0, 1]")
        if not 1 <= self.max_level <= LAST_LEVEL:
            raise ValueError(f"max_level must be in [1, {LAST_LEVEL}]")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass
class SimResult:
    state: ContractState
    events: list[PaymentEvent]
    txlog: list[TxRecord]
    seed: int | None = None
    rng_algorithm: str = RNG_ALGORITHM

    @property
    def digest(self) -> str:
        return state_digest(self.state)


def build_schedule(model: RecruitmentModel) -> list[TxRecord]:
    """Generate the full, replayable transaction schedule for ``model``.

    The contract is run alongside generation so that upgrade purchases can be
    injected right after the slot fill that triggers them.
    """
    rng = random.Random(model.seed)
    state = new_state(model.owner)
    schedule: list[TxRecord] = []
    users = [model.owner]
    tickets = [model.owner]  # preferential: one ticket per user plus one per partner

    def emit(rec: TxRecord) -> None:
        state.closed_slots.clear()
        apply_tx(state, rec)
        schedule.append(rec)
        pending = list(state.closed_slots)
        while pending:
            holder, matrix, level = pending.pop(0)
            if holder == model.owner or level >= model.max_level:
                continue
            if state.slot(holder, matrix, level + 1).active:
                continue
            if rng.random() >= model.purchase_prob:
                continue
            buy = TxRecord(
                ordinal=len(schedule) + 1,
                sender=holder,
                function="buyNewLevel",
                value=slot_price(level + 1),
                matrix=matrix,
                level=level + 1,
                fee=model.fee_model.sample(rng),
            )
            state.closed_slots.clear()
            apply_tx(state, buy)
            schedule.append(buy)
            pending.extend(state.closed_slots)

    for i in range(model.arrivals):
        if model.kind == "chain":
            upline = users[-1]
        elif model.kind == "uniform":
            upline = rng.choice(users)
        else:
            upline = rng.choice(tickets)
        addr = address_for(i + 2)
        emit(
            TxRecord(
                ordinal=len(schedule) + 1,
                sender=addr,
                function="register",
                value=REGISTRATION_COST,
                referrer=upline,
                fee=model.fee_model.sample(rng),
            )
        )
        users.append(addr)
        tickets.append(addr)
        tickets.append(upline)
    return schedule


def run(schedule: list[TxRecord], *, owner: str = DEFAULT_OWNER, seed: int | None = None) -> SimResult:
    """Replay ``schedule`` strictly from a fresh state.

    Contract errors propagate as :class:`~forsage_sim.core.ContractError`
    carrying the offending ordinal.
    """
    result = replay(new_state(owner), schedule, strict=True)
    return SimResult(state=result.state, events=result.events, txlog=list(schedule), seed=seed)


def simulate(model: RecruitmentModel) -> SimResult:
    return run(build_schedule(model), owner=model.owner, seed=model.seed)


__all__ = [
    "DEFAULT_OWNER",
    "MatrixKind",
    "RecruitmentModel",
    "SimResult",
    "address_for",
    "build_schedule",
    "run",
    "simulate",
]
