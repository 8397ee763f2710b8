import json

import pydot
import pytest

from forsage_sim.analytics import ProfitReport, profit_loss
from forsage_sim.core import ContractError, MatrixKind, new_state, state_digest
from forsage_sim.sim import RecruitmentModel, build_schedule, run
from forsage_sim.txlog import (
    TXLOG_HEADER,
    TxLogError,
    TxRecord,
    export_dot,
    export_report,
    format_events,
    format_txlog,
    parse_events,
    parse_report,
    parse_txlog,
    replay,
)
from forsage_sim.units import eth

from conftest import FIXTURE12, NAMES, Driver

HEADER = ",".join(TXLOG_HEADER) + "\n"
N = NAMES
Q, H = eth("0.025"), eth("0.05")

# Hand trace of the 12-transaction fixture through both payment flowcharts:
# (ordinal, payer, payee, amount, matrix, level, classification)
FIXTURE12_PAYMENTS = [
    (1, "A", "O", Q, "x3", 1, "direct"),
    (1, "A", "O", Q, "x4", 1, "direct"),
    (2, "B", "A", Q, "x3", 1, "direct"),
    (2, "B", "O", Q, "x4", 1, "direct"),
    (3, "C", "A", Q, "x3", 1, "direct"),
    (3, "C", "O", Q, "x4", 1, "direct"),
    (4, "D", "O", Q, "x3", 1, "reinvest-passthrough"),  # A's X3 slot fills
    (4, "D", "A", Q, "x4", 1, "direct"),
    (5, "A", "O", H, "x3", 2, "direct"),
    (6, "E", "A", Q, "x3", 1, "direct"),
    (6, "E", "A", Q, "x4", 1, "direct"),
    (7, "F", "O", Q, "x3", 1, "direct"),  # fallback: owner upline, owner reinvests
    (7, "F", "O", Q, "x4", 1, "direct"),
    (8, "G", "B", Q, "x3", 1, "direct"),
    (8, "G", "A", Q, "x4", 1, "direct"),
    (9, "B", "O", H, "x4", 2, "direct"),
    (10, "H", "B", Q, "x3", 1, "direct"),
    (10, "H", "B", Q, "x4", 1, "direct"),
    (11, "I", "C", Q, "x3", 1, "direct"),
    (11, "I", "O", Q, "x4", 1, "reinvest-passthrough"),  # A's X4 slot fills
    (12, "A", "O", H, "x4", 2, "direct"),
]


def load_fixture():
    return parse_txlog(FIXTURE12.read_text())


def test_parse_header_only():
    assert parse_txlog(HEADER) == []
    assert parse_txlog("") == []


def test_parse_register_row():
    text = HEADER + "1,0xaa,register,0xowner,,,50000000000000000,11600000000000000\n"
    (rec,) = parse_txlog(text)
    assert rec == TxRecord(1, "0xaa", "register", eth("0.05"), referrer="0xowner", fee=eth("0.0116"))


def test_parse_buy_and_fallback_rows():
    text = HEADER + "1,0xaa,fallback,,,,50000000000000000,\n2,0xaa,buyNewLevel,,X4,2,50000000000000000,7\n"
    a, b = parse_txlog(text)
    assert a.referrer is None and a.fee is None
    assert (b.matrix, b.level, b.fee) == (MatrixKind.X4, 2, 7)


@pytest.mark.parametrize(
    "body, code, line",
    [
        ("1,0xaa,transfer,,,,5,1\n", "unknown-function", 2),
        ("1,0xaa,register,,,,5,1\n1,0xbb,register,,,,5,1\n", "non-monotonic-ordinal", 3),
        ("1,0xaa,register,,,5,1\n", "malformed-row", 2),
        ("x,0xaa,register,,,,5,1\n", "malformed-row", 2),
        ("1,0xaa,register,,,,-5,1\n", "malformed-row", 2),
        ("1,0xaa,buyNewLevel,,x5,2,5,1\n", "malformed-row", 2),
        ("1,0xaa,register,,x3,2,5,1\n", "malformed-row", 2),
        ("1,,register,,,,5,1\n", "malformed-row", 2),
    ],
)
def test_parse_errors(body, code, line):
    with pytest.raises(TxLogError) as err:
        parse_txlog(HEADER + body)
    assert err.value.code == code
    assert err.value.line == line


def test_bad_header():
    with pytest.raises(TxLogError) as err:
        parse_txlog("a,b,c\n")
    assert err.value.code == "bad-header"


def test_txlog_round_trip():
    sched = build_schedule(RecruitmentModel("uniform", arrivals=100, purchase_prob=0.5, seed=9))
    text = format_txlog(sched)
    assert parse_txlog(text) == sched
    assert format_txlog(parse_txlog(text)) == text
    fixture = FIXTURE12.read_text()
    assert format_txlog(parse_txlog(fixture)) == fixture


def test_events_round_trip():
    res = replay(new_state(N["O"]), load_fixture())
    assert parse_events(format_events(res.events)) == res.events


def test_replay_empty_is_noop():
    state = new_state("O")
    before = state_digest(state)
    res = replay(state, [])
    assert res.events == [] and state_digest(res.state) == before


def test_fixture_payments_match_hand_trace():
    res = replay(new_state(N["O"]), load_fixture())
    inv = {v: k for k, v in N.items()}
    got = [
        (e.tx_ordinal, inv[e.payer], inv[e.payee], e.amount, e.matrix.value, e.level, e.classification.value)
        for e in res.events
    ]
    assert got == FIXTURE12_PAYMENTS
    state = res.state
    assert state.users[N["F"]].upline == N["O"]
    assert state.users[N["O"]].x4[1].closed_part == N["A"]
    assert state.users[N["A"]].x4[1].reinvest_count == 1
    assert not state.users[N["A"]].x4[1].blocked  # unblocked by tx 12


def test_replay_of_schedule_matches_simulation():
    model = RecruitmentModel("uniform", arrivals=300, purchase_prob=0.4, seed=21)
    sched = build_schedule(model)
    sim = run(sched)
    again = replay(new_state(model.owner), parse_txlog(format_txlog(sched)))
    assert state_digest(again.state) == sim.digest
    assert again.events == sim.events


def test_strict_replay_raises_with_ordinal():
    recs = load_fixture()
    recs = recs[:3] + [TxRecord(35, N["B"], "register", eth("0.05"), referrer=N["A"])]
    with pytest.raises(ContractError) as err:
        replay(new_state(N["O"]), recs)
    assert err.value.code == "already-registered" and err.value.ordinal == 35


def test_lenient_replay_skips_and_logs():
    text = FIXTURE12.read_text().rstrip("\n").split("\n")
    bad = [
        f"13,{N['A']},fallback,,,,40000000000000000,1",
        f"14,{N['A']},buyNewLevel,,x3,4,200000000000000000,1",
        f"15,0xnew,register,0xghost,,,50000000000000000,1",
    ]
    recs = parse_txlog("\n".join(text + bad) + "\n")
    res = replay(new_state(N["O"]), recs, strict=False)
    assert [r.ordinal for r, _ in res.skipped] == [13, 14, 15]
    assert [e.code for _, e in res.skipped] == ["bad-value", "previous-level-inactive", "unknown-referrer"]
    assert len(res.applied) == 12
    sidecar = res.sidecar().splitlines()
    assert sidecar[0] == HEADER.strip() + ",error"
    assert sidecar[1].endswith("bad-value: fallback needs exactly 50000000000000000 wei")
    clean = replay(new_state(N["O"]), load_fixture())
    assert state_digest(res.state) == state_digest(clean.state)


def parse_dot(text):
    graphs = pydot.graph_from_dot_data(text)
    assert graphs and len(graphs) == 1
    return graphs[0]


def node_names(graph):
    # pydot reports default-attribute statements as nodes named node/edge/graph
    return {n.get_name().strip('"') for n in graph.get_nodes()} - {"node", "edge", "graph"}


def test_dot_fresh_state():
    g = parse_dot(export_dot(new_state("O")))
    assert node_names(g) == {"O"} and g.get_edges() == []


def test_dot_chain():
    d = Driver()
    d.reg("A", "O")
    d.reg("B", "A")
    text = export_dot(d.state, MatrixKind.X3, 1)
    g = parse_dot(text)
    assert node_names(g) == {"O", "A", "B"} and len(g.get_edges()) == 2


def test_dot_placeholders_and_focus():
    d = Driver()
    d.reg("A", "O")
    d.reg("B", "A")
    d.reg("C", "O")
    d.buy("A", "x4", 2)
    text = export_dot(d.state, "x4", 1, focus="A")
    assert "•3" in text and "|2|" in text
    g = parse_dot(text)
    assert node_names(g) == {"O", "A", "B"}
    with pytest.raises(ContractError) as err:
        export_dot(d.state, "x3", 1, focus="nobody")
    assert err.value.code == "unknown-focus"


def test_empty_report_json():
    doc = json.loads(export_report(ProfitReport()))
    assert list(doc) == ["addresses", "aggregates"]
    assert doc["addresses"] == []
    agg = doc["aggregates"]
    assert agg["winners"] == agg["losers"] == agg["break_even"] == 0
    assert agg["total_received"] == "0" and agg["top"] == []
    assert export_report(ProfitReport()).startswith('{"addresses":[],"aggregates":{')


def test_report_wei_as_strings_and_round_trip():
    res = replay(new_state(N["O"]), load_fixture())
    report = profit_loss(res.events, res.applied, state=res.state)
    text = export_report(report)
    doc = json.loads(text)
    row = next(r for r in doc["addresses"] if r["address"] == N["C"])
    assert row["received"] == "25000000000000000"
    assert parse_report(text) == report
    assert export_report(parse_report(text)) == text
