import random
from pathlib import Path

import pytest

from forsage_sim.core import MatrixKind, buy_new_level, new_state, register
from forsage_sim.sim import address_for
from forsage_sim.units import REGISTRATION_COST, slot_price

FIXTURES = Path(__file__).parent / "fixtures"
FIXTURE12 = FIXTURES / "fixture12.csv"

# Names used by the 12-transaction fixture, in address order.
NAMES = {name: address_for(i) for i, name in enumerate("OABCDEFGHI", start=1)}


class Driver:
    """Small helper that feeds a ContractState with increasing ordinals."""

    def __init__(self, owner="O"):
        self.state = new_state(owner)
        self.ordinal = 0

    def reg(self, user, referrer=None, value=REGISTRATION_COST):
        self.ordinal += 1
        return register(self.state, user, referrer, value, self.ordinal)

    def buy(self, user, matrix, level, value=None):
        self.ordinal += 1
        value = slot_price(level) if value is None else value
        return buy_new_level(self.state, user, MatrixKind(matrix), level, value, self.ordinal)

    def slot(self, user, matrix, level=1):
        return self.state.slot(user, MatrixKind(matrix), level)


@pytest.fixture
def driver():
    return Driver()


def random_valid_txs(seed, n, reg_prob=0.6):
    """Yield ``(driver, events, value)`` for ``n`` valid transactions over a random tree."""
    rng = random.Random(seed)
    d = Driver()
    users = ["O"]
    next_level = {}
    buyers = []  # users with at least one matrix below level 12
    for i in range(n):
        if rng.random() < reg_prob or not buyers:
            user = f"u{i}"
            ref = rng.choice(users) if rng.random() < 0.9 else None
            yield d, d.reg(user, ref), REGISTRATION_COST
            users.append(user)
            next_level[user] = {"x3": 2, "x4": 2}
            buyers.append(user)
            continue
        k = rng.randrange(len(buyers))
        user = buyers[k]
        options = [m for m, lv in next_level[user].items() if lv <= 12]
        matrix = rng.choice(options)
        level = next_level[user][matrix]
        next_level[user][matrix] += 1
        if all(lv > 12 for lv in next_level[user].values()):
            buyers[k] = buyers[-1]
            buyers.pop()
        yield d, d.buy(user, matrix, level), slot_price(level)


# Acceptance criteria report: one line per criterion in the terminal summary.
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, elapsed, budget, note in ACCEPTANCE_RESULTS:
        status = "PASS" if ok else "FAIL"
        extra = f" {note}" if note else ""
        terminalreporter.write_line(f"{status}  {name}  ({elapsed:.2f}s / budget {budget:g}s){extra}")
