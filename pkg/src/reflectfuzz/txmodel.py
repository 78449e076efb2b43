"""Transactions, sequences, seed pools and interface descriptors.

Everything here is an immutable value. The canonical sequence record is a
JSON document::

    {"txs": [{"function": "setPhase",
              "args": [{"type": "uint", "value": "1"}],
              "sender": "0x...", "amount": "0"}],
     "origin": "drafted"}
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from typing import Any, Iterable

VALUE_TYPES = ("uint", "int", "bool", "address", "bytes", "string")
VISIBILITIES = ("public", "external", "internal", "private")
ORIGINS = ("drafted", "globally-reflected", "locally-reflected")
ROLES = ("deployer", "user", "attacker")

UINT_MAX = 2**256 - 1
INT_MIN = -(2**255)
INT_MAX = 2**255 - 1
ETHER = 10**18

_ADDRESS_RE = re.compile(r"^0x[0-9a-f]{40}$")
_BYTES_RE = re.compile(r"^0x(?:[0-9a-f]{2})*$")
_UINT_RE = re.compile(r"^[0-9]+$")
_INT_RE = re.compile(r"^-?[0-9]+$")


def address(n: int) -> str:
    return "0x" + format(n, "040x")


class DecodeError(ValueError):
    def __init__(self, position: str, cause: str):
        super().__init__(f"{position}: {cause}")
        self.position = position
        self.cause = cause


class EmptyPartition(LookupError):
    pass


def value_matches(vtype: str, value: Any) -> bool:
    """True when ``value`` is a legal Python value for the value-type ``vtype``."""
    if vtype == "bool":
        return isinstance(value, bool)
    if vtype == "uint":
        return isinstance(value, int) and not isinstance(value, bool) and 0 <= value <= UINT_MAX
    if vtype == "int":
        return isinstance(value, int) and not isinstance(value, bool) and INT_MIN <= value <= INT_MAX
    if vtype == "address":
        return isinstance(value, str) and bool(_ADDRESS_RE.match(value))
    if vtype == "bytes":
        return isinstance(value, bytes)
    if vtype == "string":
        return isinstance(value, str)
    return False


def encode_value(vtype: str, value: Any) -> str:
    if vtype == "bool":
        return "true" if value else "false"
    if vtype == "bytes":
        return "0x" + value.hex()
    return str(value)


def decode_value(vtype: str, text: Any, position: str = "value") -> Any:
    if vtype not in VALUE_TYPES:
        raise DecodeError(position, f"unknown value-type {vtype!r}")
    if not isinstance(text, str):
        raise DecodeError(position, "argument values must be strings")
    if vtype == "uint":
        if not _UINT_RE.match(text) or int(text) > UINT_MAX:
            raise DecodeError(position, f"not a uint: {text!r}")
        return int(text)
    if vtype == "int":
        if not _INT_RE.match(text) or not INT_MIN <= int(text) <= INT_MAX:
            raise DecodeError(position, f"not an int: {text!r}")
        return int(text)
    if vtype == "bool":
        if text not in ("true", "false"):
            raise DecodeError(position, f"not a bool: {text!r}")
        return text == "true"
    if vtype == "address":
        if not _ADDRESS_RE.match(text.lower()):
            raise DecodeError(position, f"not an address: {text!r}")
        return text.lower()
    if vtype == "bytes":
        if not _BYTES_RE.match(text.lower()):
            raise DecodeError(position, f"not hex bytes: {text!r}")
        return bytes.fromhex(text[2:])
    return text


@dataclass(frozen=True)
class Arg:
    type: str
    value: Any

    def __str__(self) -> str:
        if self.type == "string":
            return json.dumps(self.value)
        return encode_value(self.type, self.value)


@dataclass(frozen=True)
class FunctionDescriptor:
    name: str
    params: tuple[tuple[str, str], ...] = ()
    payable: bool = False
    visibility: str = "public"

    def __post_init__(self):
        names = [p for p, _ in self.params]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate parameter names in {self.name}")
        for _, t in self.params:
            if t not in VALUE_TYPES:
                raise ValueError(f"unknown value-type {t!r} in {self.name}")
        if self.visibility not in VISIBILITIES:
            raise ValueError(f"bad visibility {self.visibility!r}")

    @property
    def callable(self) -> bool:
        return self.visibility in ("public", "external")

    @property
    def param_types(self) -> tuple[str, ...]:
        return tuple(t for _, t in self.params)

    def signature(self) -> str:
        inner = ", ".join(f"{t} {n}" for n, t in self.params)
        return f"{self.name}({inner})" + (" payable" if self.payable else "")


@dataclass(frozen=True)
class Transaction:
    function: str
    args: tuple[Arg, ...] = ()
    sender: str = ""
    amount: int = 0

    def __post_init__(self):
        if self.amount < 0:
            raise ValueError("amount must be non-negative")
        if not isinstance(self.args, tuple):
            object.__setattr__(self, "args", tuple(self.args))

    def call_text(self) -> str:
        args = ", ".join(str(a) for a in self.args)
        value = f"{{value: {self.amount}}}" if self.amount else ""
        return f"{self.function}{value}({args})"

    def replace(self, **changes) -> "Transaction":
        data = {"function": self.function, "args": self.args, "sender": self.sender, "amount": self.amount}
        data.update(changes)
        return Transaction(**data)


@dataclass(frozen=True)
class TransactionSequence:
    txs: tuple[Transaction, ...] = ()
    origin: str = "drafted"

    def __post_init__(self):
        if not isinstance(self.txs, tuple):
            object.__setattr__(self, "txs", tuple(self.txs))
        if self.origin not in ORIGINS:
            raise ValueError(f"bad origin {self.origin!r}")

    def __len__(self) -> int:
        return len(self.txs)

    def __iter__(self):
        return iter(self.txs)

    def __getitem__(self, i):
        return self.txs[i]

    def with_txs(self, txs: Iterable[Transaction], origin: str | None = None) -> "TransactionSequence":
        return TransactionSequence(tuple(txs), origin or self.origin)


DEFAULT_AMOUNTS = (0, 1, ETHER, 10 * ETHER, 100 * ETHER)
DEFAULT_FUNDING = 1000 * ETHER


@dataclass(frozen=True)
class SeedPool:
    deployer: str
    users: tuple[str, ...]
    attackers: tuple[str, ...]
    amounts: tuple[int, ...] = DEFAULT_AMOUNTS
    # External balance per address at genesis; addresses missing here get DEFAULT_FUNDING.
    funding: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        if not self.attackers:
            raise ValueError("attacker partition must be non-empty")
        if not self.amounts or any(a < 0 for a in self.amounts):
            raise ValueError("amounts must be a non-empty set of non-negative integers")
        object.__setattr__(self, "amounts", tuple(sorted(set(self.amounts))))

    @classmethod
    def default(cls) -> "SeedPool":
        return cls(
            deployer=address(0xD0),
            users=(address(0x101), address(0x102), address(0x103)),
            attackers=(address(0xA11), address(0xA12)),
        )

    @property
    def senders(self) -> tuple[str, ...]:
        return (self.deployer,) + self.users + self.attackers

    def partition(self, role: str) -> tuple[str, ...]:
        if role == "deployer":
            return (self.deployer,) if self.deployer else ()
        if role == "user":
            return self.users
        if role == "attacker":
            return self.attackers
        raise ValueError(f"unknown role {role!r}")

    def role_of(self, addr: str) -> str | None:
        for role in ROLES:
            if addr in self.partition(role):
                return role
        return None

    def balances(self) -> dict[str, int]:
        extra = dict(self.funding)
        return {a: extra.get(a, DEFAULT_FUNDING) for a in self.senders}

    def to_dict(self) -> dict:
        return {
            "deployer": self.deployer,
            "users": list(self.users),
            "attackers": list(self.attackers),
            "amounts": [str(a) for a in self.amounts],
            "funding": {a: str(b) for a, b in self.balances().items()},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SeedPool":
        return cls(
            deployer=doc["deployer"],
            users=tuple(doc.get("users", ())),
            attackers=tuple(doc["attackers"]),
            amounts=tuple(int(a) for a in doc.get("amounts", DEFAULT_AMOUNTS)),
            funding=tuple((a, int(b)) for a, b in doc.get("funding", {}).items()),
        )


def sample_sender(pool: SeedPool, role: str, rng_seed: int) -> str:
    members = pool.partition(role)
    if not members:
        raise EmptyPartition(f"seed pool has no {role} addresses")
    return random.Random(rng_seed).choice(sorted(members))


def sample_amount(pool: SeedPool, rng_seed: int) -> int:
    return random.Random(rng_seed).choice(pool.amounts)


@dataclass(frozen=True)
class ProgramContext:
    source_text: str
    interface: tuple[FunctionDescriptor, ...]
    seed_pool: SeedPool = field(default_factory=SeedPool.default)

    def descriptor(self, name: str) -> FunctionDescriptor | None:
        for d in self.interface:
            if d.name == name:
                return d
        return None


@dataclass(frozen=True)
class ElementFault:
    kind: str
    tx_index: int
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.kind}@{self.tx_index}"


FAULT_KINDS = (
    "UnknownFunction",
    "ArgArityMismatch",
    "ArgTypeMismatch",
    "SenderNotInPool",
    "AmountNotInPool",
    "ValueToNonPayable",
)


def validate_sequence(seq: TransactionSequence, ctx: ProgramContext) -> list[ElementFault]:
    faults = []
    pool = ctx.seed_pool
    for i, tx in enumerate(seq.txs):
        desc = ctx.descriptor(tx.function)
        if desc is None or not desc.callable:
            faults.append(ElementFault("UnknownFunction", i, tx.function))
        else:
            if len(tx.args) != len(desc.params):
                faults.append(
                    ElementFault("ArgArityMismatch", i, f"expected {len(desc.params)} args, got {len(tx.args)}")
                )
            else:
                for j, (arg, (pname, ptype)) in enumerate(zip(tx.args, desc.params)):
                    if arg.type != ptype or not value_matches(ptype, arg.value):
                        faults.append(ElementFault("ArgTypeMismatch", i, f"arg {j} ({pname}) expects {ptype}"))
                        break
            if tx.amount > 0 and not desc.payable:
                faults.append(ElementFault("ValueToNonPayable", i, tx.function))
        if tx.sender not in pool.senders:
            faults.append(ElementFault("SenderNotInPool", i, tx.sender))
        if tx.amount not in pool.amounts:
            faults.append(ElementFault("AmountNotInPool", i, str(tx.amount)))
    return faults


# -- canonical record -------------------------------------------------------


def tx_to_dict(tx: Transaction) -> dict:
    return {
        "function": tx.function,
        "args": [{"type": a.type, "value": encode_value(a.type, a.value)} for a in tx.args],
        "sender": tx.sender,
        "amount": str(tx.amount),
    }


def sequence_to_dict(seq: TransactionSequence) -> dict:
    return {"txs": [tx_to_dict(t) for t in seq.txs], "origin": seq.origin}


def encode_sequence(seq: TransactionSequence) -> str:
    return json.dumps(sequence_to_dict(seq), sort_keys=True, separators=(",", ":"))


_TX_KEYS = {"function", "args", "sender", "amount"}


def tx_from_dict(doc: Any, position: str = "tx") -> Transaction:
    if not isinstance(doc, dict):
        raise DecodeError(position, "transaction must be an object")
    missing = _TX_KEYS - doc.keys()
    if missing:
        raise DecodeError(position, f"missing field(s) {sorted(missing)}")
    extra = doc.keys() - _TX_KEYS
    if extra:
        raise DecodeError(position, f"unknown field(s) {sorted(extra)}")
    if not isinstance(doc["function"], str) or not doc["function"]:
        raise DecodeError(f"{position}.function", "must be a non-empty string")
    if not isinstance(doc["args"], list):
        raise DecodeError(f"{position}.args", "must be a list")
    args = []
    for j, a in enumerate(doc["args"]):
        apos = f"{position}.args[{j}]"
        if not isinstance(a, dict) or set(a) != {"type", "value"}:
            raise DecodeError(apos, "argument must be {type, value}")
        args.append(Arg(a["type"], decode_value(a["type"], a["value"], apos)))
    sender = doc["sender"]
    if not isinstance(sender, str) or not _ADDRESS_RE.match(sender.lower()):
        raise DecodeError(f"{position}.sender", f"not an address: {sender!r}")
    amount = doc["amount"]
    if isinstance(amount, bool) or not isinstance(amount, (str, int)):
        raise DecodeError(f"{position}.amount", "must be a decimal string")
    amount_text = str(amount)
    if amount_text.startswith("-") and amount_text[1:].isdigit():
        raise DecodeError(f"{position}.amount", "negative amount")
    if not _UINT_RE.match(amount_text):
        raise DecodeError(f"{position}.amount", f"not a decimal amount: {amount!r}")
    return Transaction(doc["function"], tuple(args), sender.lower(), int(amount_text))


def sequence_from_dict(doc: Any) -> TransactionSequence:
    if not isinstance(doc, dict):
        raise DecodeError("$", "record must be an object")
    if "txs" not in doc:
        raise DecodeError("$", "missing field 'txs'")
    if not isinstance(doc["txs"], list):
        raise DecodeError("txs", "must be a list")
    origin = doc.get("origin", "drafted")
    if origin not in ORIGINS:
        raise DecodeError("origin", f"unknown origin {origin!r}")
    txs = tuple(tx_from_dict(t, f"txs[{i}]") for i, t in enumerate(doc["txs"]))
    return TransactionSequence(txs, origin)


def decode_sequence(text: str) -> TransactionSequence:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DecodeError(f"char {exc.pos}", exc.msg) from None
    return sequence_from_dict(doc)
