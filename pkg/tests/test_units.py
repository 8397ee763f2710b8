import pytest

from forsage_sim.units import REGISTRATION_COST, eth, format_eth, slot_price


def test_slot_prices_double():
    assert slot_price(1) == eth("0.025") == 25 * 10**15
    assert slot_price(12) == eth("51.2")
    for level in range(2, 13):
        assert slot_price(level) == 2 * slot_price(level - 1)


def test_all_slots_cost():
    assert sum(slot_price(lv) for lv in range(1, 13)) == eth("102.375")


def test_registration_is_two_first_slots():
    assert REGISTRATION_COST == 2 * slot_price(1) == eth("0.05")


@pytest.mark.parametrize("level", [0, 13, -1, 2.0])
def test_slot_price_rejects_out_of_range(level):
    with pytest.raises(ValueError):
        slot_price(level)


def test_eth_rejects_sub_wei():
    with pytest.raises(ValueError):
        eth("0.0000000000000000001")


def test_format_eth():
    assert format_eth(25 * 10**15) == "0.025000000000000000"
    assert format_eth(-eth("1.5")) == "-1.500000000000000000"
