"""solsem: an executable semantics for a Solidity subset.

Byte-exact storage/memory layout with slot packing, keccak-derived
dynamic-array and mapping addressing, internal/external call semantics with
caller-context stacks, an atomic transaction harness, and trace-based
reentrancy detection.
"""

from .errors import SolsemError, TxAborted, UnsupportedFeature
from .executor import Executor, Tx, TxResult
from .harness import (
    DEFAULT_SENDER, ReentrancyFinding, Scenario, detect_reentrancy,
    dump_layout, parse_scenario, run_main_contract, run_scenario,
)
from .parser import parse, parse_expression, try_parse
from .state import EngineOptions, Msg, World
from .keccak import keccak256, keccak256_int

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_SENDER", "EngineOptions", "Executor", "Msg", "ReentrancyFinding",
    "Scenario", "SolsemError", "Tx", "TxAborted", "TxResult",
    "UnsupportedFeature", "World", "detect_reentrancy", "dump_layout",
    "keccak256", "keccak256_int", "parse", "parse_expression",
    "parse_scenario", "run_main_contract", "run_scenario", "try_parse",
]
