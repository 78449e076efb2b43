"""Static helpers over contract models used by the heuristic policy."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

from .model import (
    Assign,
    BinOp,
    Const,
    ContractModel,
    DelegateCall,
    Env,
    Expr,
    Function,
    If,
    Index,
    LowLevelCall,
    Not,
    ReadBlockField,
    Require,
    SelfDestruct,
    Send,
    Var,
    render_expr,
)

SENDER_ENVS = (Env("msg.sender"), Env("tx.origin"))
MSG_VALUE = Env("msg.value")

_MIRROR = {"==": "==", "!=": "!=", "<": ">", "<=": ">=", ">": "<", ">=": "<="}


def walk(stmts) -> Iterator:
    for s in stmts:
        yield s
        if isinstance(s, If):
            yield from walk(s.then)
            yield from walk(s.orelse)


def sub_exprs(e: Expr) -> Iterator[Expr]:
    yield e
    if isinstance(e, BinOp):
        yield from sub_exprs(e.left)
        yield from sub_exprs(e.right)
    elif isinstance(e, Not):
        yield from sub_exprs(e.operand)
    elif isinstance(e, Index):
        yield from sub_exprs(e.key)


def mentions(e: Expr, name: str) -> bool:
    return any((isinstance(x, Var) and x.name == name) or (isinstance(x, Index) and x.slot == name) for x in sub_exprs(e))


def slots_read(e: Expr, model: ContractModel) -> list[str]:
    out = []
    for x in sub_exprs(e):
        name = x.name if isinstance(x, Var) else x.slot if isinstance(x, Index) else None
        if name is not None and model.slot(name) is not None and name not in out:
            out.append(name)
    return out


def params_read(e: Expr, fn: Function) -> list[str]:
    names = [p for p, _ in fn.descriptor.params]
    out = []
    for x in sub_exprs(e):
        if isinstance(x, Var) and x.name in names and x.name not in out:
            out.append(x.name)
    return out


def writes(fn: Function) -> set[str]:
    out = set()
    for s in walk(fn.body):
        if isinstance(s, Assign):
            out.add(s.slot)
        elif isinstance(s, ReadBlockField):
            out.add(s.into)
        elif isinstance(s, LowLevelCall) and s.capture:
            out.add(s.capture)
    return out


def assignments(fn: Function, slot: str) -> list[Assign]:
    return [s for s in walk(fn.body) if isinstance(s, Assign) and s.slot == slot]


def setters(model: ContractModel, slot: str, exclude: tuple[str, ...] = ()) -> list[Function]:
    """Callable functions that write ``slot``, in declaration order."""
    return [
        f for f in model.functions
        if f.descriptor.callable and f.name not in exclude and slot in writes(f)
    ]


def requires(fn: Function) -> list[Require]:
    return [s for s in walk(fn.body) if isinstance(s, Require)]


def find_require(fn: Function, guard_text: str | None) -> Require | None:
    for r in requires(fn):
        if render_expr(r.cond) == guard_text:
            return r
    return None


def recipient_slots(fn: Function, model: ContractModel) -> list[str]:
    out = []
    for s in walk(fn.body):
        target = s.to if isinstance(s, (Send, LowLevelCall)) else s.beneficiary if isinstance(s, SelfDestruct) else None
        if target is not None:
            out.extend(x for x in slots_read(target, model) if x not in out)
    return out


def vuln_score(fn: Function, model: ContractModel) -> int:
    score = 0
    for s in walk(fn.body):
        if isinstance(s, SelfDestruct):
            score = max(score, 4)
        elif isinstance(s, (Send, LowLevelCall)):
            score = max(score, 3)
        elif isinstance(s, DelegateCall):
            score = max(score, 2)
        elif isinstance(s, Assign) and model.deployer_slot and s.slot == model.deployer_slot:
            score = max(score, 1)
    return score


def rank_targets(model: ContractModel) -> list[str]:
    """Callable functions ordered by how dangerous their bodies look.

    Falls back to every callable function when none scores.
    """
    callable_fns = [f for f in model.functions if f.descriptor.callable]
    scored = [(vuln_score(f, model), i, f.name) for i, f in enumerate(callable_fns)]
    ranked = [name for score, _, name in sorted(scored, key=lambda t: (-t[0], t[1])) if score > 0]
    return ranked or [f.name for f in callable_fns]


def accumulators(model: ContractModel) -> dict[str, list[str]]:
    """Slots that payable functions grow from ``msg.value``."""
    out: dict[str, list[str]] = {}
    for f in model.functions:
        if not (f.descriptor.callable and f.descriptor.payable):
            continue
        for a in (s for s in walk(f.body) if isinstance(s, Assign)):
            if any(x == MSG_VALUE for x in sub_exprs(a.value)):
                out.setdefault(a.slot, [])
                if f.name not in out[a.slot]:
                    out[a.slot].append(f.name)
    return out


def sender_slots(cond: Expr, model: ContractModel) -> list[str]:
    """Slots compared for equality with msg.sender or tx.origin."""
    out = []
    for x in sub_exprs(cond):
        if isinstance(x, BinOp) and x.op == "==":
            for a, b in ((x.left, x.right), (x.right, x.left)):
                if a in SENDER_ENVS and isinstance(b, Var) and model.slot(b.name) and b.name not in out:
                    out.append(b.name)
    return out


@dataclass(frozen=True)
class Constraint:
    op: str  # comparison operator, "truthy", "falsy" or "sender"
    value: object = None


def _conjuncts(e: Expr) -> list[Expr]:
    if isinstance(e, BinOp) and e.op == "&&":
        return _conjuncts(e.left) + _conjuncts(e.right)
    return [e]


def solve(cond: Expr, target: Expr) -> Constraint | None:
    """First simple constraint ``cond`` places on ``target``.

    Only conjunctions of comparisons against literals (or the sender) are
    understood; for a disjunction the first mentioning branch wins.
    """
    def hit(x):
        if x == target:
            return True
        return isinstance(target, Var) and isinstance(x, Index) and x.slot == target.name

    for c in _conjuncts(cond):
        if isinstance(c, BinOp) and c.op == "||":
            for branch in (c.left, c.right):
                if any(hit(x) for x in sub_exprs(branch)):
                    found = solve(branch, target)
                    if found is not None:
                        return found
            continue
        if hit(c):
            return Constraint("truthy")
        if isinstance(c, Not) and hit(c.operand):
            return Constraint("falsy")
        if isinstance(c, BinOp) and c.op in _MIRROR:
            for a, b, op in ((c.left, c.right, c.op), (c.right, c.left, _MIRROR[c.op])):
                if not hit(a):
                    continue
                if isinstance(b, Const):
                    return Constraint(op, b.value)
                if b in SENDER_ENVS and op == "==":
                    return Constraint("sender")
    return None


def satisfy(constraint: Constraint, vtype: str, sender: str):
    """A concrete value of ``vtype`` meeting ``constraint`` (or None)."""
    op, v = constraint.op, constraint.value
    if op == "sender":
        return sender if vtype == "address" else None
    if vtype == "bool":
        if op == "truthy":
            return True
        if op == "falsy":
            return False
        return (not v) if op == "!=" else v if op == "==" else None
    if op == "truthy":
        return 1 if vtype in ("uint", "int") else None
    if op in ("==", ">=", "<="):
        return v
    if vtype in ("uint", "int") and isinstance(v, int):
        if op in (">", "!="):
            return v + 1
        if op == "<":
            return v - 1 if v > 0 or vtype == "int" else None
    return None


def admissible_amounts(constraint: Constraint | None, amounts, positive: bool = True) -> list[int]:
    """Pool amounts meeting a msg.value constraint, smallest first."""
    checks = {
        "==": lambda a, v: a == v,
        "!=": lambda a, v: a != v,
        ">=": lambda a, v: a >= v,
        ">": lambda a, v: a > v,
        "<=": lambda a, v: a <= v,
        "<": lambda a, v: a < v,
    }
    out = []
    for a in sorted(amounts):
        if positive and a == 0:
            continue
        if constraint is not None and constraint.op in checks and not checks[constraint.op](a, constraint.value):
            continue
        out.append(a)
    return out


def value_constraint(fn: Function) -> Constraint | None:
    for r in requires(fn):
        c = solve(r.cond, MSG_VALUE)
        if c is not None:
            return c
    return None
