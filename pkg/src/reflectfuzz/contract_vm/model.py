"""Contract models: storage layout, function descriptors and mini-IR bodies.

A contract-model document is JSON::

    {"name": "Crowdsale",
     "storage": [{"name": "owner", "type": "address", "init": "0x..."},
                 {"name": "deposits", "type": "uint", "key": "address"}],
     "balance": "0",
     "deployer_slot": "owner",
     "functions": [{"descriptor": {"name": "invest", "params": [], "payable": true},
                    "body": [{"stmt": "require", "cond": ...}, ...]}],
     "attacker_callbacks": [{"function": "withdraw", "args": []}],
     "source": "optional contract text used in prompts"}

Expressions are tagged objects: ``{"const": 1}``, ``{"var": "phase"}``,
``{"index": "deposits", "key": <expr>}``, ``{"env": "msg.sender"}``,
``{"op": "==", "args": [<expr>, <expr>]}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Union

from ..txmodel import (
    VALUE_TYPES,
    Arg,
    FunctionDescriptor,
    ProgramContext,
    SeedPool,
    decode_value,
    DecodeError,
)


class ModelError(ValueError):
    def __init__(self, position: str, cause: str):
        super().__init__(f"{position}: {cause}")
        self.position = position
        self.cause = cause


ENV_TYPES = {
    "msg.sender": "address",
    "msg.value": "uint",
    "tx.origin": "address",
    "block.timestamp": "uint",
    "block.number": "uint",
    "this.balance": "uint",
    "this": "address",
}
BLOCK_FIELDS = ("timestamp", "number")
ARITH_OPS = ("+", "-", "*", "/", "%")
CMP_OPS = ("<", "<=", ">", ">=")
EQ_OPS = ("==", "!=")
BOOL_OPS = ("&&", "||")


# -- expressions ------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: Any
    type: str


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Index:
    slot: str
    key: "Expr"


@dataclass(frozen=True)
class Env:
    name: str


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Not:
    operand: "Expr"


Expr = Union[Const, Var, Index, Env, BinOp, Not]


# -- statements -------------------------------------------------------------


@dataclass(frozen=True)
class Require:
    cond: Expr


@dataclass(frozen=True)
class Assign:
    slot: str
    value: Expr
    key: Expr | None = None


@dataclass(frozen=True)
class Send:
    to: Expr
    amount: Expr


@dataclass(frozen=True)
class LowLevelCall:
    to: Expr
    amount: Expr
    capture: str | None = None


@dataclass(frozen=True)
class DelegateCall:
    target: Expr


@dataclass(frozen=True)
class SelfDestruct:
    beneficiary: Expr


@dataclass(frozen=True)
class If:
    cond: Expr
    then: tuple
    orelse: tuple = ()


@dataclass(frozen=True)
class ReadBlockField:
    field: str
    into: str


@dataclass(frozen=True)
class Revert:
    pass


Statement = Union[Require, Assign, Send, LowLevelCall, DelegateCall, SelfDestruct, If, ReadBlockField, Revert]


@dataclass(frozen=True)
class StorageSlot:
    name: str
    type: str
    init: Any
    key_type: str | None = None

    @property
    def is_map(self) -> bool:
        return self.key_type is not None


@dataclass(frozen=True)
class Function:
    descriptor: FunctionDescriptor
    body: tuple

    @property
    def name(self) -> str:
        return self.descriptor.name


@dataclass(frozen=True)
class ContractModel:
    name: str
    storage: tuple[StorageSlot, ...]
    balance: int
    functions: tuple[Function, ...]
    deployer_slot: str | None = None
    attacker_callbacks: tuple[tuple[str, tuple[Arg, ...]], ...] = ()
    source: str = ""
    metadata: dict = field(default_factory=dict, compare=False, hash=False)

    def slot(self, name: str) -> StorageSlot | None:
        for s in self.storage:
            if s.name == name:
                return s
        return None

    def function(self, name: str) -> Function | None:
        for f in self.functions:
            if f.name == name:
                return f
        return None

    def interface(self) -> tuple[FunctionDescriptor, ...]:
        return tuple(f.descriptor for f in self.functions if f.descriptor.callable)

    def context(self, pool: SeedPool | None = None) -> ProgramContext:
        return ProgramContext(self.source or render_model(self), self.interface(), pool or SeedPool.default())


# -- rendering --------------------------------------------------------------


def render_expr(e: Expr) -> str:
    if isinstance(e, Const):
        if e.type == "bool":
            return "true" if e.value else "false"
        if e.type == "string":
            return json.dumps(e.value)
        if e.type == "bytes":
            return "0x" + e.value.hex()
        return str(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Index):
        return f"{e.slot}[{render_expr(e.key)}]"
    if isinstance(e, Env):
        return e.name
    if isinstance(e, Not):
        return f"!{_paren(e.operand)}"
    return f"{_paren(e.left)} {e.op} {_paren(e.right)}"


def _paren(e: Expr) -> str:
    text = render_expr(e)
    return f"({text})" if isinstance(e, BinOp) else text


def render_block(stmts, indent: int = 1) -> list[str]:
    pad = "    " * indent
    lines = []
    for s in stmts:
        if isinstance(s, Require):
            lines.append(f"{pad}require({render_expr(s.cond)});")
        elif isinstance(s, Assign):
            target = s.slot if s.key is None else f"{s.slot}[{render_expr(s.key)}]"
            lines.append(f"{pad}{target} = {render_expr(s.value)};")
        elif isinstance(s, Send):
            lines.append(f"{pad}payable({render_expr(s.to)}).transfer({render_expr(s.amount)});")
        elif isinstance(s, LowLevelCall):
            call = f'{render_expr(s.to)}.call{{value: {render_expr(s.amount)}}}("")'
            lines.append(f"{pad}{s.capture} = {call};" if s.capture else f"{pad}{call};")
        elif isinstance(s, DelegateCall):
            lines.append(f'{pad}{render_expr(s.target)}.delegatecall("");')
        elif isinstance(s, SelfDestruct):
            lines.append(f"{pad}selfdestruct({render_expr(s.beneficiary)});")
        elif isinstance(s, If):
            lines.append(f"{pad}if ({render_expr(s.cond)}) {{")
            lines.extend(render_block(s.then, indent + 1))
            if s.orelse:
                lines.append(f"{pad}}} else {{")
                lines.extend(render_block(s.orelse, indent + 1))
            lines.append(f"{pad}}}")
        elif isinstance(s, ReadBlockField):
            lines.append(f"{pad}{s.into} = block.{s.field};")
        elif isinstance(s, Revert):
            lines.append(f"{pad}revert();")
    return lines


def render_model(model: ContractModel) -> str:
    lines = [f"contract {model.name} {{"]
    for s in model.storage:
        if s.is_map:
            lines.append(f"    mapping({s.key_type} => {s.type}) {s.name};")
        else:
            lines.append(f"    {s.type} {s.name};")
    for f in model.functions:
        d = f.descriptor
        params = ", ".join(f"{t} {n}" for n, t in d.params)
        mods = d.visibility + (" payable" if d.payable else "")
        lines.append(f"    function {d.name}({params}) {mods} {{")
        lines.extend(render_block(f.body, 2))
        lines.append("    }")
    lines.append("}")
    return "\n".join(lines)


# -- loading ----------------------------------------------------------------


def _numeric(t: str) -> bool:
    return t in ("uint", "int")


def _compatible(target: str, source: str) -> bool:
    return target == source or (target == "int" and source == "uint")


def _const_type(value: Any) -> str:
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "uint" if value >= 0 else "int"
    if isinstance(value, str) and value.startswith("0x") and len(value) == 42:
        return "address"
    return "string"


def _parse_const(raw: Any, vtype: str | None, pos: str) -> Const:
    if vtype is None:
        vtype = _const_type(raw)
    if vtype not in VALUE_TYPES:
        raise ModelError(pos, f"unknown value-type {vtype!r}")
    if isinstance(raw, str) and vtype not in ("string",):
        try:
            return Const(decode_value(vtype, raw, pos), vtype)
        except DecodeError as exc:
            raise ModelError(pos, exc.cause) from None
    if vtype in ("uint", "int") and (isinstance(raw, bool) or not isinstance(raw, int)):
        raise ModelError(pos, f"{raw!r} is not a {vtype}")
    if vtype == "uint" and raw < 0:
        raise ModelError(pos, f"{raw!r} is not a uint")
    if vtype == "bool" and not isinstance(raw, bool):
        raise ModelError(pos, f"{raw!r} is not a bool")
    return Const(raw, vtype)


class _Loader:
    def __init__(self, storage: dict[str, StorageSlot]):
        self.storage = storage
        self.params: dict[str, str] = {}

    def expr(self, doc: Any, pos: str) -> tuple[Expr, str]:
        """Parse an expression and return it with its static type."""
        if not isinstance(doc, dict):
            raise ModelError(pos, "expression must be an object")
        if "const" in doc:
            c = _parse_const(doc["const"], doc.get("type"), pos)
            return c, c.type
        if "var" in doc:
            name = doc["var"]
            if name in self.params:
                return Var(name), self.params[name]
            slot = self.storage.get(name)
            if slot is None:
                raise ModelError(pos, f"unresolved identifier {name!r}")
            if slot.is_map:
                raise ModelError(pos, f"mapping {name!r} must be indexed")
            return Var(name), slot.type
        if "index" in doc:
            slot = self.storage.get(doc["index"])
            if slot is None:
                raise ModelError(pos, f"unresolved identifier {doc['index']!r}")
            if not slot.is_map:
                raise ModelError(pos, f"{slot.name!r} is not a mapping")
            key, ktype = self.expr(doc.get("key"), pos + ".key")
            if not _compatible(slot.key_type, ktype):
                raise ModelError(pos + ".key", f"key type {ktype} does not match {slot.key_type}")
            return Index(slot.name, key), slot.type
        if "env" in doc:
            if doc["env"] not in ENV_TYPES:
                raise ModelError(pos, f"unknown builtin {doc['env']!r}")
            return Env(doc["env"]), ENV_TYPES[doc["env"]]
        if "op" in doc:
            op, args = doc["op"], doc.get("args")
            if not isinstance(args, list):
                raise ModelError(pos, "operator args must be a list")
            if op == "!":
                if len(args) != 1:
                    raise ModelError(pos, "'!' takes one operand")
                e, t = self.expr(args[0], pos + ".args[0]")
                if t != "bool":
                    raise ModelError(pos, "'!' needs a bool operand")
                return Not(e), "bool"
            if len(args) != 2:
                raise ModelError(pos, f"{op!r} takes two operands")
            (l, lt), (r, rt) = self.expr(args[0], pos + ".args[0]"), self.expr(args[1], pos + ".args[1]")
            if op in ARITH_OPS:
                if not (_numeric(lt) and _numeric(rt)):
                    raise ModelError(pos, f"{op!r} needs numeric operands, got {lt}/{rt}")
                return BinOp(op, l, r), "uint" if lt == rt == "uint" else "int"
            if op in CMP_OPS:
                if not (_numeric(lt) and _numeric(rt)):
                    raise ModelError(pos, f"{op!r} needs numeric operands, got {lt}/{rt}")
                return BinOp(op, l, r), "bool"
            if op in EQ_OPS:
                if not (lt == rt or (_numeric(lt) and _numeric(rt))):
                    raise ModelError(pos, f"cannot compare {lt} with {rt}")
                return BinOp(op, l, r), "bool"
            if op in BOOL_OPS:
                if lt != "bool" or rt != "bool":
                    raise ModelError(pos, f"{op!r} needs bool operands")
                return BinOp(op, l, r), "bool"
            raise ModelError(pos, f"unknown operator {op!r}")
        raise ModelError(pos, "unrecognised expression")

    def typed(self, doc: Any, pos: str, want: str) -> Expr:
        e, t = self.expr(doc, pos)
        if not _compatible(want, t):
            raise ModelError(pos, f"expected {want}, got {t}")
        return e

    def slot_for_write(self, name: Any, pos: str) -> StorageSlot:
        slot = self.storage.get(name)
        if slot is None:
            raise ModelError(pos, f"unresolved identifier {name!r}")
        return slot

    def block(self, docs: Any, pos: str) -> tuple:
        if not isinstance(docs, list):
            raise ModelError(pos, "body must be a list")
        return tuple(self.stmt(d, f"{pos}[{i}]") for i, d in enumerate(docs))

    def stmt(self, doc: Any, pos: str) -> Statement:
        if not isinstance(doc, dict) or "stmt" not in doc:
            raise ModelError(pos, "statement must be an object with a 'stmt' tag")
        kind = doc["stmt"]
        if kind == "require":
            return Require(self.typed(doc.get("cond"), pos + ".cond", "bool"))
        if kind == "assign":
            slot = self.slot_for_write(doc.get("slot"), pos + ".slot")
            key = None
            if slot.is_map:
                if "key" not in doc:
                    raise ModelError(pos, f"mapping {slot.name!r} needs a key")
                key = self.typed(doc["key"], pos + ".key", slot.key_type)
            elif "key" in doc:
                raise ModelError(pos, f"{slot.name!r} is not a mapping")
            return Assign(slot.name, self.typed(doc.get("value"), pos + ".value", slot.type), key)
        if kind == "send":
            return Send(self.typed(doc.get("to"), pos + ".to", "address"), self.typed(doc.get("amount"), pos + ".amount", "uint"))
        if kind == "call":
            capture = doc.get("capture")
            if capture is not None:
                slot = self.slot_for_write(capture, pos + ".capture")
                if slot.type != "bool" or slot.is_map:
                    raise ModelError(pos + ".capture", "capture slot must be a plain bool")
            amount = doc.get("amount", {"const": 0})
            return LowLevelCall(
                self.typed(doc.get("to"), pos + ".to", "address"), self.typed(amount, pos + ".amount", "uint"), capture
            )
        if kind == "delegatecall":
            return DelegateCall(self.typed(doc.get("target"), pos + ".target", "address"))
        if kind == "selfdestruct":
            return SelfDestruct(self.typed(doc.get("beneficiary"), pos + ".beneficiary", "address"))
        if kind == "if":
            return If(
                self.typed(doc.get("cond"), pos + ".cond", "bool"),
                self.block(doc.get("then", []), pos + ".then"),
                self.block(doc.get("else", []), pos + ".else"),
            )
        if kind == "read_block":
            if doc.get("field") not in BLOCK_FIELDS:
                raise ModelError(pos + ".field", f"unknown block field {doc.get('field')!r}")
            slot = self.slot_for_write(doc.get("into"), pos + ".into")
            if slot.type != "uint" or slot.is_map:
                raise ModelError(pos + ".into", "block fields are read into a plain uint slot")
            return ReadBlockField(doc["field"], slot.name)
        if kind == "revert":
            return Revert()
        raise ModelError(pos, f"unknown statement {kind!r}")


_TOP_KEYS = {"name", "storage", "balance", "deployer_slot", "functions", "attacker_callbacks", "source", "attack", "expect"}


def load_model(document: str | dict) -> ContractModel:
    if isinstance(document, str):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ModelError(f"char {exc.pos}", exc.msg) from None
    else:
        doc = document
    if not isinstance(doc, dict):
        raise ModelError("$", "document must be an object")
    unknown = doc.keys() - _TOP_KEYS
    if unknown:
        raise ModelError("$", f"unknown field(s) {sorted(unknown)}")
    name = doc.get("name")
    if not isinstance(name, str) or not name:
        raise ModelError("name", "contract name required")

    storage: dict[str, StorageSlot] = {}
    for i, s in enumerate(doc.get("storage", [])):
        pos = f"storage[{i}]"
        if not isinstance(s, dict) or "name" not in s or "type" not in s:
            raise ModelError(pos, "slot needs name and type")
        if s["name"] in storage:
            raise ModelError(pos, f"duplicate storage slot {s['name']!r}")
        if s["type"] not in VALUE_TYPES:
            raise ModelError(pos, f"unknown value-type {s['type']!r}")
        key_type = s.get("key")
        if key_type is not None:
            if key_type not in VALUE_TYPES:
                raise ModelError(pos, f"unknown key type {key_type!r}")
            storage[s["name"]] = StorageSlot(s["name"], s["type"], {}, key_type)
            continue
        init = s.get("init", _zero(s["type"]))
        storage[s["name"]] = StorageSlot(s["name"], s["type"], _parse_const(init, s["type"], pos + ".init").value)

    deployer_slot = doc.get("deployer_slot")
    if deployer_slot is not None:
        slot = storage.get(deployer_slot)
        if slot is None or slot.type != "address" or slot.is_map:
            raise ModelError("deployer_slot", f"{deployer_slot!r} is not a plain address slot")

    balance = doc.get("balance", "0")
    try:
        balance = int(balance)
    except (TypeError, ValueError):
        raise ModelError("balance", f"not an integer: {balance!r}") from None
    if balance < 0:
        raise ModelError("balance", "negative balance")

    functions = []
    seen = set()
    for i, f in enumerate(doc.get("functions", [])):
        pos = f"functions[{i}]"
        if not isinstance(f, dict) or "descriptor" not in f:
            raise ModelError(pos, "function needs a descriptor")
        d = f["descriptor"]
        try:
            desc = FunctionDescriptor(
                name=d["name"],
                params=tuple((p["name"], p["type"]) for p in d.get("params", [])),
                payable=bool(d.get("payable", False)),
                visibility=d.get("visibility", "public"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelError(pos + ".descriptor", str(exc)) from None
        if desc.name in seen:
            raise ModelError(pos, f"duplicate function {desc.name!r}")
        seen.add(desc.name)
        clash = [p for p, _ in desc.params if p in storage]
        if clash:
            raise ModelError(pos, f"parameter {clash[0]!r} shadows a storage slot")
        loader = _Loader(storage)
        loader.params = dict(desc.params)
        functions.append(Function(desc, loader.block(f.get("body", []), pos + ".body")))

    callbacks = []
    for i, cb in enumerate(doc.get("attacker_callbacks", [])):
        pos = f"attacker_callbacks[{i}]"
        target = next((fn for fn in functions if fn.name == cb.get("function")), None)
        if target is None:
            raise ModelError(pos, f"unresolved function {cb.get('function')!r}")
        try:
            args = tuple(Arg(a["type"], decode_value(a["type"], a["value"])) for a in cb.get("args", []))
        except (KeyError, DecodeError) as exc:
            raise ModelError(pos, str(exc)) from None
        callbacks.append((target.name, args))

    metadata = {k: doc[k] for k in ("attack", "expect") if k in doc}
    return ContractModel(
        name=name,
        storage=tuple(storage.values()),
        balance=balance,
        functions=tuple(functions),
        deployer_slot=deployer_slot,
        attacker_callbacks=tuple(callbacks),
        source=doc.get("source", ""),
        metadata=metadata,
    )


def load_model_file(path) -> ContractModel:
    with open(path, encoding="utf-8") as fh:
        return load_model(fh.read())


def _zero(vtype: str) -> Any:
    return {
        "uint": 0,
        "int": 0,
        "bool": False,
        "address": "0x" + "0" * 40,
        "bytes": "0x",
        "string": "",
    }[vtype]
