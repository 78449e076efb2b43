"""Agent profiles, revise actions and permission enforcement."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any

from ..txmodel import Arg, Transaction, TransactionSequence, decode_value, encode_value, tx_from_dict, tx_to_dict

log = logging.getLogger(__name__)

FIELDS = ("function", "args", "sender", "amount")
STRUCTURE = "structure"
PERMISSION_FIELDS = FIELDS + (STRUCTURE,)


class AgentId(str, Enum):
    TxSeqDrafter = "TxSeqDrafter"
    TxSeqRefiner = "TxSeqRefiner"
    FunChecker = "FunChecker"
    ArgChecker = "ArgChecker"
    SNDChecker = "SNDChecker"
    AMTChecker = "AMTChecker"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class AgentProfile:
    id: AgentId
    goal_text: str
    permissions: frozenset
    actions: tuple[str, ...]


PROFILES = {
    AgentId.TxSeqDrafter: AgentProfile(
        AgentId.TxSeqDrafter,
        "Analyse the contract, find callable functions, pick the ones most likely to be vulnerable "
        "and draft a complete attack transaction sequence.",
        frozenset(PERMISSION_FIELDS),
        ("findFuncs", "pickVulFuncs", "orderCalls", "draftSequence"),
    ),
    AgentId.TxSeqRefiner: AgentProfile(
        AgentId.TxSeqRefiner,
        "Revise the whole transaction sequence using execution feedback: add missing state-setting "
        "calls, reorder dependent calls, or retarget a different vulnerable function.",
        frozenset(PERMISSION_FIELDS),
        ("insertSetter", "reorderCalls", "retarget", "rewriteSequence"),
    ),
    AgentId.FunChecker: AgentProfile(
        AgentId.FunChecker,
        "Make sure every transaction calls a function that exists and is callable.",
        frozenset({"function"}),
        ("checkCallable", "renameFunction"),
    ),
    AgentId.ArgChecker: AgentProfile(
        AgentId.ArgChecker,
        "Make sure every argument has the right count and type, and pick values that satisfy guards.",
        frozenset({"args"}),
        ("checkTypes", "checkArity", "solveGuard"),
    ),
    AgentId.SNDChecker: AgentProfile(
        AgentId.SNDChecker,
        "Make sure every sender comes from the seed pool and can pass sender checks.",
        frozenset({"sender"}),
        ("checkSender", "resampleSender"),
    ),
    AgentId.AMTChecker: AgentProfile(
        AgentId.AMTChecker,
        "Make sure every ether amount comes from the seed pool and fits payability and value checks.",
        frozenset({"amount"}),
        ("checkPayable", "checkValue", "nextAmount"),
    ),
}

CHECKERS = (AgentId.FunChecker, AgentId.ArgChecker, AgentId.SNDChecker, AgentId.AMTChecker)


@dataclass(frozen=True)
class FieldEdit:
    tx_index: int
    field: str
    value: Any

    def to_dict(self) -> dict:
        return {"tx_index": self.tx_index, "field": self.field, "value": encode_field(self.field, self.value)}


@dataclass(frozen=True)
class StructEdit:
    op: str  # insert | delete | move
    index: int
    tx: Transaction | None = None
    to: int | None = None

    def to_dict(self) -> dict:
        d: dict = {"op": self.op, "index": self.index}
        if self.tx is not None:
            d["tx"] = tx_to_dict(self.tx)
        if self.to is not None:
            d["to"] = self.to
        return d


@dataclass(frozen=True)
class AgentAction:
    agent: AgentId
    edits: tuple[FieldEdit, ...] = ()
    structural: tuple[StructEdit, ...] = ()
    rationale: str = ""
    violations: int = 0

    @property
    def empty(self) -> bool:
        return not self.edits and not self.structural

    def to_dict(self) -> dict:
        return {
            "agent": self.agent.value,
            "edits": [e.to_dict() for e in self.edits],
            "structural": [s.to_dict() for s in self.structural],
            "rationale": self.rationale,
            "violations": self.violations,
        }


def encode_field(name: str, value: Any) -> Any:
    if name == "args":
        return [{"type": a.type, "value": encode_value(a.type, a.value)} for a in value]
    if name == "amount":
        return str(value)
    return value


def decode_field(name: str, raw: Any) -> Any:
    if name == "args":
        return tuple(Arg(a["type"], decode_value(a["type"], a["value"])) for a in raw)
    if name == "amount":
        amount = int(raw)
        if amount < 0:
            raise ValueError("negative amount")
        return amount
    if name in ("function", "sender"):
        if not isinstance(raw, str):
            raise ValueError(f"{name} must be a string")
        return raw.lower() if name == "sender" else raw
    raise ValueError(f"unknown field {name!r}")


def action_from_dict(agent: AgentId, doc: dict) -> AgentAction:
    edits = tuple(
        FieldEdit(int(e["tx_index"]), e["field"], decode_field(e["field"], e["value"])) for e in doc.get("edits", [])
    )
    structural = []
    for s in doc.get("structural", []):
        tx = tx_from_dict(s["tx"]) if s.get("tx") is not None else None
        structural.append(StructEdit(s["op"], int(s["index"]), tx, s.get("to")))
    return AgentAction(agent, edits, tuple(structural), str(doc.get("rationale", "")))


def enforce_permissions(action: AgentAction, profile: AgentProfile) -> AgentAction:
    """Strip every edit outside the profile's permission set."""
    if action.agent != profile.id:
        log.warning("action from %s checked against %s profile", action.agent, profile.id)
    kept = tuple(e for e in action.edits if e.field in profile.permissions)
    structural = action.structural if STRUCTURE in profile.permissions else ()
    violations = (len(action.edits) - len(kept)) + (len(action.structural) - len(structural))
    if violations:
        log.info("stripped %d out-of-permission edit(s) from %s", violations, profile.id)
    return replace(action, agent=profile.id, edits=kept, structural=structural, violations=action.violations + violations)


@dataclass
class ApplyResult:
    seq: TransactionSequence
    index_map: dict = field(default_factory=dict)  # old index -> new index or None
    dropped: list = field(default_factory=list)


def apply_action(seq: TransactionSequence, action: AgentAction, max_len: int) -> ApplyResult:
    """Apply one action: field edits first, then structural edits in order.

    Edits that reference a missing transaction, or inserts that would break
    the length bound, are dropped and reported as ``BadIndex``.
    """
    txs = list(seq.txs)
    dropped = []
    for e in action.edits:
        if not 0 <= e.tx_index < len(txs) or e.field not in FIELDS:
            dropped.append(("BadIndex", e))
            log.warning("BadIndex: %s edit on tx %d dropped (sequence length %d)", e.field, e.tx_index, len(txs))
            continue
        txs[e.tx_index] = txs[e.tx_index].replace(**{e.field: e.value})

    # positions[k] = original index of the tx now at position k (None for inserted txs)
    positions: list = list(range(len(seq.txs)))
    for s in action.structural:
        if s.op == "insert" and s.tx is not None and 0 <= s.index <= len(txs) and len(txs) < max_len:
            txs.insert(s.index, s.tx)
            positions.insert(s.index, None)
        elif s.op == "delete" and 0 <= s.index < len(txs):
            del txs[s.index]
            del positions[s.index]
        elif s.op == "move" and 0 <= s.index < len(txs) and s.to is not None and 0 <= s.to < len(txs):
            txs.insert(s.to, txs.pop(s.index))
            positions.insert(s.to, positions.pop(s.index))
        else:
            dropped.append(("BadIndex", s))
            log.warning("BadIndex: structural %s at %d dropped", s.op, s.index)

    index_map = {old: None for old in range(len(seq.txs))}
    for new, old in enumerate(positions):
        if old is not None:
            index_map[old] = new
    if action.empty:
        origin = seq.origin
    elif action.agent in (AgentId.TxSeqRefiner, AgentId.TxSeqDrafter):
        origin = "globally-reflected"
    else:
        origin = "locally-reflected"
    return ApplyResult(TransactionSequence(tuple(txs), origin), index_map, dropped)
