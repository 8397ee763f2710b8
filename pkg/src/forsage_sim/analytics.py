"""Profitability and structure measurements over payment streams.

Every function here is pure: it reads events, transaction records and/or a
finished :class:`~forsage_sim.core.ContractState` and returns new objects.
Money is integer wei throughout; only summary statistics (means, standard
deviations, fractions) are floats.
"""

from __future__ import annotations

import math
import random
import statistics
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import TYPE_CHECKING, Iterable

from .core import LEVELS, Classification, ContractState, MatrixKind, PaymentEvent
from .units import eth

if TYPE_CHECKING:
    from .txlog import TxRecord

DEFAULT_MEAN_FEE = eth("0.0116")
DEFAULT_MEDIAN_FEE = eth("0.00883")


class AnalyticsError(ValueError):
    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(f"{code}: {message}")


@dataclass(frozen=True)
class FeeModel:
    """Per-transaction gas fee model.

    ``constant`` charges ``mean_fee`` on every transaction. ``lognormal`` draws
    from the log-normal distribution whose median and mean match the two
    configured values, i.e. ``mu = ln(median)`` and
    ``sigma = sqrt(2 * ln(mean / median))``.
    """

    kind: str = "constant"
    mean_fee: int = DEFAULT_MEAN_FEE
    median_fee: int = DEFAULT_MEDIAN_FEE

    def __post_init__(self):
        if self.kind not in ("constant", "lognormal"):
            raise ValueError(f"unknown fee model {self.kind!r}")
        if self.kind == "constant":
            if self.mean_fee < 0:
                raise ValueError("mean_fee must be non-negative")
        elif not self.mean_fee >= self.median_fee > 0:
            raise ValueError("lognormal fees need mean_fee >= median_fee > 0")

    @property
    def mu(self) -> float:
        return math.log(self.median_fee)

    @property
    def sigma(self) -> float:
        return math.sqrt(2.0 * math.log(self.mean_fee / self.median_fee))

    def sample(self, rng: random.Random) -> int:
        if self.kind == "constant":
            return self.mean_fee
        return round(rng.lognormvariate(self.mu, self.sigma))

    def expected(self) -> int:
        return self.mean_fee


@dataclass(frozen=True)
class ProfitRow:
    address: str
    received: int
    paid_in: int
    fees: int
    net: int


@dataclass
class LevelsDistribution:
    """Users bucketed by number of purchased levels (registration slots excluded).

    ``with_registration_*`` report the same statistics counting the two
    registration slots as levels too.
    """

    counts: dict[int, int] = field(default_factory=dict)
    collective_net: dict[int, int] = field(default_factory=dict)
    mean: float = 0.0
    median: float = 0.0
    sd: float = 0.0
    with_registration_mean: float = 0.0
    with_registration_median: float = 0.0


@dataclass
class ReferrerDistribution:
    # slot-referrer count -> number of users with that count
    counts: dict[int, int] = field(default_factory=dict)
    per_user: dict[str, int] = field(default_factory=dict)
    mean: float = 0.0
    median: float = 0.0
    sd: float = 0.0
    top_address: str | None = None


@dataclass
class SpilloverStats:
    transactions: int = 0
    spillover_transactions: int = 0
    spillover_fraction: float = 0.0
    registration_share: float = 0.0
    spillover_payments: int = 0
    skip_transactions: int = 0
    skip_payments: int = 0


@dataclass
class FeeStats:
    count: int
    mean: Fraction
    median: Fraction
    sd: float


@dataclass
class ProfitReport:
    rows: list[ProfitRow] = field(default_factory=list)
    winners: int = 0
    losers: int = 0
    break_even: int = 0
    winners_net: int = 0
    losers_net: int = 0
    mean_loss: int = 0
    total_received: int = 0
    total_paid_in: int = 0
    total_fees: int = 0
    top: list[ProfitRow] = field(default_factory=list)
    levels: LevelsDistribution = field(default_factory=LevelsDistribution)
    referrers: ReferrerDistribution = field(default_factory=ReferrerDistribution)
    spillover: SpilloverStats = field(default_factory=SpilloverStats)

    def net_by_address(self) -> dict[str, int]:
        return {r.address: r.net for r in self.rows}


def _stats(values: list[int]) -> tuple[float, float, float]:
    if not values:
        return 0.0, 0.0, 0.0
    return (
        float(statistics.fmean(values)),
        float(statistics.median(values)),
        float(statistics.pstdev(values)),
    )


def profit_loss(
    events: Iterable[PaymentEvent],
    txlog: Iterable["TxRecord"],
    fee_model: FeeModel | None = None,
    *,
    state: ContractState | None = None,
    k: int = 10,
) -> ProfitReport:
    """Per-address received / paid-in / fees / net, plus aggregate views.

    Fees come from each record's ``fee`` when present and otherwise from
    ``fee_model.expected()``; they are charged to the sender. A logged
    transaction with no payment events counts as failed on chain: its fee is
    charged but its value is not. When ``state`` is given the report also
    carries the levels and referrer distributions and includes users that
    never transacted (the owner, in particular).
    """
    fee_model = fee_model or FeeModel()
    events = list(events)
    records = {r.ordinal: r for r in txlog}

    per_tx: dict[int, int] = defaultdict(int)
    received: dict[str, int] = defaultdict(int)
    for ev in events:
        if ev.tx_ordinal not in records:
            raise AnalyticsError("inconsistent-inputs", f"event references missing tx {ev.tx_ordinal}")
        per_tx[ev.tx_ordinal] += ev.amount
        received[ev.payee] += ev.amount

    paid_in: dict[str, int] = defaultdict(int)
    fees: dict[str, int] = defaultdict(int)
    for ordinal, rec in records.items():
        if ordinal in per_tx:
            if per_tx[ordinal] != rec.value:
                raise AnalyticsError(
                    "inconsistent-inputs",
                    f"tx {ordinal} carries {rec.value} wei but events pay {per_tx[ordinal]}",
                )
            paid_in[rec.sender] += rec.value
        else:
            paid_in[rec.sender] += 0
        fees[rec.sender] += rec.fee if rec.fee is not None else fee_model.expected()

    addresses = set(received) | set(paid_in)
    if state is not None:
        addresses |= set(state.users)

    report = ProfitReport()
    for addr in sorted(addresses):
        row = ProfitRow(
            address=addr,
            received=received.get(addr, 0),
            paid_in=paid_in.get(addr, 0),
            fees=fees.get(addr, 0),
            net=received.get(addr, 0) - paid_in.get(addr, 0) - fees.get(addr, 0),
        )
        report.rows.append(row)
        if row.net > 0:
            report.winners += 1
            report.winners_net += row.net
        elif row.net < 0:
            report.losers += 1
            report.losers_net += row.net
        else:
            report.break_even += 1
        report.total_received += row.received
        report.total_paid_in += row.paid_in
        report.total_fees += row.fees
    if report.losers:
        report.mean_loss = -report.losers_net // report.losers
    report.top = top_k(report, k) if report.rows else []
    report.spillover = spillover_stats(events)
    if state is not None:
        nets = report.net_by_address()
        report.levels = levels_distribution(state, nets)
        report.referrers = referrer_distribution(state)
    return report


def top_k(report: ProfitReport, k: int) -> list[ProfitRow]:
    """Highest-net rows, ties broken by ascending address."""
    if k < 1:
        raise ValueError("k must be at least 1")
    return sorted(report.rows, key=lambda r: (-r.net, r.address))[:k]


def purchased_levels(state: ContractState, address: str) -> int:
    rec = state.users[address]
    return rec.active_levels(MatrixKind.X3) + rec.active_levels(MatrixKind.X4) - 2


def levels_distribution(
    state: ContractState,
    nets: dict[str, int] | None = None,
    *,
    include_owner: bool = True,
) -> LevelsDistribution:
    dist = LevelsDistribution()
    values = []
    for addr in state.users:
        if addr == state.owner and not include_owner:
            continue
        n = purchased_levels(state, addr)
        values.append(n)
        dist.counts[n] = dist.counts.get(n, 0) + 1
        if nets is not None:
            dist.collective_net[n] = dist.collective_net.get(n, 0) + nets.get(addr, 0)
    dist.counts = dict(sorted(dist.counts.items()))
    dist.collective_net = dict(sorted(dist.collective_net.items()))
    dist.mean, dist.median, dist.sd = _stats(values)
    dist.with_registration_mean, dist.with_registration_median, _ = _stats([v + 2 for v in values])
    return dist


def referrer_distribution(state: ContractState, *, include_owner: bool = True) -> ReferrerDistribution:
    """How many slots (any user, level, matrix) name each user as slot referrer."""
    per_user = {addr: 0 for addr in state.users}
    for rec in state.users.values():
        for level in LEVELS:
            for slot in (rec.x3[level], rec.x4[level]):
                if slot.active and slot.slot_referrer is not None:
                    per_user[slot.slot_referrer] += 1
    if not include_owner:
        per_user.pop(state.owner, None)
    dist = ReferrerDistribution(per_user=dict(sorted(per_user.items())))
    dist.counts = dict(sorted(Counter(per_user.values()).items()))
    dist.mean, dist.median, dist.sd = _stats(list(per_user.values()))
    if per_user:
        dist.top_address = min(per_user, key=lambda a: (-per_user[a], a))
    return dist


def spillover_stats(events: Iterable[PaymentEvent]) -> SpilloverStats:
    """Share of transactions carrying a spillover payment.

    A transaction whose payments are all at level 1 is a registration (level 1
    can never be bought separately).
    """
    by_tx: dict[int, list[PaymentEvent]] = defaultdict(list)
    for ev in events:
        by_tx[ev.tx_ordinal].append(ev)
    out = SpilloverStats(transactions=len(by_tx))
    spill_reg = 0
    for evs in by_tx.values():
        kinds = [e.classification for e in evs]
        n_spill = kinds.count(Classification.SPILLOVER)
        n_skip = kinds.count(Classification.SKIP)
        out.spillover_payments += n_spill
        out.skip_payments += n_skip
        if n_skip:
            out.skip_transactions += 1
        if n_spill:
            out.spillover_transactions += 1
            if all(e.level == 1 for e in evs):
                spill_reg += 1
    if out.transactions:
        out.spillover_fraction = out.spillover_transactions / out.transactions
    if out.spillover_transactions:
        out.registration_share = spill_reg / out.spillover_transactions
    return out


def fee_stats(txlog: Iterable["TxRecord"]) -> FeeStats:
    """Exact mean and median fee (as fractions of wei) and population sd."""
    fees = [r.fee for r in txlog if r.fee is not None]
    if not fees:
        raise AnalyticsError("empty-log", "no fees to summarize")
    exact = [Fraction(f) for f in fees]
    return FeeStats(
        count=len(fees),
        mean=statistics.mean(exact),
        median=Fraction(statistics.median(exact)),
        sd=float(statistics.pstdev(exact)),
    )
