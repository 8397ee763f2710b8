"""Off-chain model of the Forsage Matrix pyramid contract.

Submodules: :mod:`.core` (contract state machine), :mod:`.sim` (synthetic
populations), :mod:`.analytics` (profit and structure measurements),
:mod:`.txlog` (log I/O, replay, DOT and JSON export), :mod:`.cli`.
"""

from .core import (
    Classification,
    ContractError,
    ContractState,
    MatrixKind,
    PaymentEvent,
    buy_new_level,
    find_free_referrer,
    new_state,
    register,
    state_digest,
)
from .units import REGISTRATION_COST, eth, format_eth, slot_price

__version__ = "0.1.0"
