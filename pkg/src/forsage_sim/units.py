"""Exact wei arithmetic helpers.

All monetary values in this package are plain Python ints denominated in
wei. Nothing here ever touches floats except :func:`to_eth_float`, which is
for plotting only.
"""

from decimal import Decimal

WEI_PER_ETH = 10**18
LAST_LEVEL = 12
REGISTRATION_COST = 5 * 10**16  # 0.05 ETH
BASE_SLOT_PRICE = 25 * 10**15  # 0.025 ETH


def eth(amount: str | int) -> int:
    """Convert an ETH amount given as a decimal string (or int) to wei.

    >>> eth("0.025")
    25000000000000000
    """
    wei = Decimal(str(amount)) * WEI_PER_ETH
    if wei != wei.to_integral_value():
        raise ValueError(f"{amount} ETH is not a whole number of wei")
    return int(wei)


def format_eth(wei: int) -> str:
    """Render a wei amount as an ETH decimal string with 18 fractional digits."""
    sign = "-" if wei < 0 else ""
    whole, frac = divmod(abs(wei), WEI_PER_ETH)
    return f"{sign}{whole}.{frac:018d}"


def to_eth_float(wei: int) -> float:
    return wei / WEI_PER_ETH


def slot_price(level: int) -> int:
    """Price in wei of the slot at ``level``: 0.025 ETH doubled per level."""
    if not isinstance(level, int) or not 1 <= level <= LAST_LEVEL:
        raise ValueError(f"level must be in [1, {LAST_LEVEL}], got {level!r}")
    return BASE_SLOT_PRICE << (level - 1)
