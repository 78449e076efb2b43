"""Chain state, trace events and raw signals."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from typing import Any

from ..txmodel import address

CONTRACT_ADDRESS = address(0xC0DE)
GENESIS_TIMESTAMP = 1_700_000_000
GENESIS_BLOCK = 1
BLOCK_TIME = 15

RAW_KINDS = (
    "unknown_function",
    "arity_or_type_mismatch",
    "insufficient_balance",
    "bad_nonce",
    "value_to_nonpayable",
    "value_constraint_violation",
    "require_failed",
    "reverted",
)


@dataclass(frozen=True)
class RawSignal:
    tx_index: int
    kind: str
    detail: str = ""
    # Rendered guard expression when the signal comes from a failing require.
    guard: str | None = None

    def __post_init__(self):
        if self.kind not in RAW_KINDS:
            raise ValueError(f"unknown raw signal kind {self.kind!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def _jsonable(v: Any) -> Any:
    if isinstance(v, bytes):
        return "0x" + v.hex()
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    return v


@dataclass
class ChainState:
    """Blockchain-like world state for one deployed contract.

    Treated as a value: the interpreter copies before mutating.
    """

    storage: dict[str, Any]
    contract_balance: int
    balances: dict[str, int]
    nonces: dict[str, int]
    block_number: int = GENESIS_BLOCK
    timestamp: int = GENESIS_TIMESTAMP
    alive: bool = True

    def copy(self) -> "ChainState":
        return ChainState(
            storage={k: dict(v) if isinstance(v, dict) else v for k, v in self.storage.items()},
            contract_balance=self.contract_balance,
            balances=dict(self.balances),
            nonces=dict(self.nonces),
            block_number=self.block_number,
            timestamp=self.timestamp,
            alive=self.alive,
        )

    def total_ether(self) -> int:
        return self.contract_balance + sum(self.balances.values())

    def to_dict(self) -> dict:
        return {
            "storage": _jsonable(self.storage),
            "contract_balance": str(self.contract_balance),
            "balances": {a: str(b) for a, b in self.balances.items()},
            "nonces": dict(self.nonces),
            "block_number": self.block_number,
            "timestamp": self.timestamp,
            "alive": self.alive,
        }

    def canonical(self) -> bytes:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()


# -- trace events -----------------------------------------------------------


@dataclass(frozen=True)
class TxBegin:
    index: int
    sender: str
    function: str
    amount: int


@dataclass(frozen=True)
class TxCommitted:
    index: int


@dataclass(frozen=True)
class Reverted:
    index: int
    cause: str


@dataclass(frozen=True)
class EtherIn:
    sender: str
    amount: int


@dataclass(frozen=True)
class EtherOut:
    to: str
    amount: int
    via: str  # send | call | selfdestruct
    depth: int = 0


@dataclass(frozen=True)
class StorageWrite:
    slot: str
    old: Any
    new: Any


@dataclass(frozen=True)
class SelfDestructed:
    beneficiary: str


@dataclass(frozen=True)
class DelegateCalled:
    target: str
    target_tainted_by_input: bool


@dataclass(frozen=True)
class LowLevelCallFailed:
    result_captured: bool


@dataclass(frozen=True)
class BlockFieldRead:
    field: str
    feeds_branch: bool = False


@dataclass(frozen=True)
class TxOriginRead:
    in_guard: bool


@dataclass(frozen=True)
class ReenteredCall:
    depth: int


TraceEvent = Any


def event_to_dict(ev: TraceEvent) -> dict:
    out = {"event": type(ev).__name__}
    for f in fields(ev):
        v = getattr(ev, f.name)
        if isinstance(v, bytes):
            v = "0x" + v.hex()
        elif isinstance(v, int) and not isinstance(v, bool) and f.name in ("amount", "old", "new"):
            v = str(v)
        out[f.name] = v
    return out


@dataclass(frozen=True)
class ExecutionTrace:
    events: tuple
    final_state: ChainState
    raw_signals: tuple[RawSignal, ...]
    genesis: ChainState = field(compare=False)

    def tx_ranges(self) -> list[tuple[int, int, TxBegin]]:
        """(start, end, TxBegin) per transaction; ``end`` is exclusive."""
        out = []
        starts = [i for i, e in enumerate(self.events) if isinstance(e, TxBegin)]
        for n, s in enumerate(starts):
            end = starts[n + 1] if n + 1 < len(starts) else len(self.events)
            out.append((s, end, self.events[s]))
        return out

    def to_dict(self) -> dict:
        return {
            "events": [event_to_dict(e) for e in self.events],
            "raw_signals": [s.to_dict() for s in self.raw_signals],
            "final_state": self.final_state.to_dict(),
        }

    def canonical(self) -> bytes:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
