"""Deterministic interpreter for the contract mini-IR.

The executor surface is ``deploy`` / ``execute_transaction`` /
``execute_sequence``; a real-EVM backend can stand in behind the same three
calls as long as it produces ``ExecutionTrace`` values.
"""

from __future__ import annotations

from ..txmodel import UINT_MAX, INT_MIN, INT_MAX, SeedPool, Transaction, TransactionSequence, value_matches
from .chain import (
    BLOCK_TIME,
    CONTRACT_ADDRESS,
    GENESIS_BLOCK,
    GENESIS_TIMESTAMP,
    BlockFieldRead,
    ChainState,
    DelegateCalled,
    EtherIn,
    EtherOut,
    ExecutionTrace,
    LowLevelCallFailed,
    RawSignal,
    ReenteredCall,
    Reverted,
    SelfDestructed,
    StorageWrite,
    TxBegin,
    TxCommitted,
    TxOriginRead,
)
from .model import (
    Assign,
    BinOp,
    Const,
    ContractModel,
    DelegateCall,
    Env,
    Function,
    If,
    Index,
    LowLevelCall,
    Not,
    ReadBlockField,
    Require,
    Revert,
    SelfDestruct,
    Send,
    Var,
    render_expr,
)

REENTRANCY_BOUND = 2


class _Revert(Exception):
    def __init__(self, kind: str, detail: str, guard: str | None = None):
        super().__init__(detail)
        self.kind = kind
        self.detail = detail
        self.guard = guard


class _Stop(Exception):
    """Frame ended by selfdestruct."""


def deploy(model: ContractModel, pool: SeedPool) -> ChainState:
    storage = {}
    for slot in model.storage:
        storage[slot.name] = {} if slot.is_map else slot.init
    if model.deployer_slot:
        storage[model.deployer_slot] = pool.deployer
    balances = pool.balances()
    return ChainState(
        storage=storage,
        contract_balance=model.balance,
        balances=balances,
        nonces={a: 0 for a in balances},
        block_number=GENESIS_BLOCK,
        timestamp=GENESIS_TIMESTAMP,
    )


def _reads(expr, pred) -> bool:
    if pred(expr):
        return True
    if isinstance(expr, Index):
        return _reads(expr.key, pred)
    if isinstance(expr, BinOp):
        return _reads(expr.left, pred) or _reads(expr.right, pred)
    if isinstance(expr, Not):
        return _reads(expr.operand, pred)
    return False


class _Frame:
    __slots__ = ("fn", "params", "sender", "value", "depth")

    def __init__(self, fn: Function, params: dict, sender: str, value: int, depth: int):
        self.fn = fn
        self.params = params
        self.sender = sender
        self.value = value
        self.depth = depth


class _Execution:
    def __init__(self, model: ContractModel, pool: SeedPool | None, state: ChainState, origin: str,
                 block: tuple[int, int], reentrancy_bound: int):
        self.model = model
        self.pool = pool
        self.state = state
        self.origin = origin
        self.block_number, self.timestamp = block
        self.events: list = []
        self.bound = reentrancy_bound
        # slot -> block field it was derived from during this transaction
        self.tainted: dict[str, str] = {}

    # expressions

    def eval(self, e, frame: _Frame, ctx: str = "plain"):
        if isinstance(e, Const):
            return e.value
        if isinstance(e, Var):
            if e.name in frame.params:
                return frame.params[e.name]
            if ctx == "branch" and e.name in self.tainted:
                self.events.append(BlockFieldRead(self.tainted[e.name], True))
            return self.state.storage[e.name]
        if isinstance(e, Index):
            key = self.eval(e.key, frame, ctx)
            return self.state.storage[e.slot].get(key, _zero_of(self.model.slot(e.slot).type))
        if isinstance(e, Env):
            return self.env(e.name, frame, ctx)
        if isinstance(e, Not):
            return not self.eval(e.operand, frame, ctx)
        op = e.op
        if op == "&&":
            return bool(self.eval(e.left, frame, ctx)) and bool(self.eval(e.right, frame, ctx))
        if op == "||":
            return bool(self.eval(e.left, frame, ctx)) or bool(self.eval(e.right, frame, ctx))
        left = self.eval(e.left, frame, ctx)
        right = self.eval(e.right, frame, ctx)
        if op == "==":
            return left == right
        if op == "!=":
            return left != right
        if op == "<":
            return left < right
        if op == "<=":
            return left <= right
        if op == ">":
            return left > right
        if op == ">=":
            return left >= right
        if op in ("/", "%") and right == 0:
            raise _Revert("reverted", "division by zero")
        if op == "+":
            result = left + right
        elif op == "-":
            result = left - right
        elif op == "*":
            result = left * right
        elif op == "/":
            result = abs(left) // abs(right) * (1 if (left >= 0) == (right >= 0) else -1)
        else:
            result = abs(left) % abs(right) * (1 if left >= 0 else -1)
        unsigned = _is_unsigned(e, self.model, frame)
        if unsigned and not 0 <= result <= UINT_MAX:
            raise _Revert("reverted", f"arithmetic {'underflow' if result < 0 else 'overflow'}")
        if not unsigned and not INT_MIN <= result <= INT_MAX:
            raise _Revert("reverted", "arithmetic overflow")
        return result

    def env(self, name: str, frame: _Frame, ctx: str):
        if name == "msg.sender":
            return frame.sender
        if name == "msg.value":
            return frame.value
        if name == "tx.origin":
            self.events.append(TxOriginRead(ctx in ("guard", "branch")))
            return self.origin
        if name == "block.timestamp":
            self.events.append(BlockFieldRead("timestamp", ctx == "branch"))
            return self.timestamp
        if name == "block.number":
            self.events.append(BlockFieldRead("number", ctx == "branch"))
            return self.block_number
        if name == "this.balance":
            return self.state.contract_balance
        return CONTRACT_ADDRESS

    # state helpers

    def write(self, slot: str, value, key=None):
        store = self.state.storage
        if key is None:
            old = store[slot]
            store[slot] = value
            name = slot
        else:
            old = store[slot].get(key, _zero_of(self.model.slot(slot).type))
            store[slot][key] = value
            name = f"{slot}[{key if not isinstance(key, bytes) else '0x' + key.hex()}]"
        self.events.append(StorageWrite(name, old, value))

    def pay_out(self, to: str, amount: int, via: str, depth: int):
        self.state.contract_balance -= amount
        if to == CONTRACT_ADDRESS:
            self.state.contract_balance += amount
        else:
            self.state.balances[to] = self.state.balances.get(to, 0) + amount
        if amount > 0:
            self.events.append(EtherOut(to, amount, via, depth))

    # statements

    def run(self, stmts, frame: _Frame):
        for s in stmts:
            self.step(s, frame)

    def step(self, s, frame: _Frame):
        if isinstance(s, Require):
            if not self.eval(s.cond, frame, "guard"):
                guard = render_expr(s.cond)
                value_guard = frame.fn.descriptor.payable and _reads(s.cond, lambda x: x == Env("msg.value"))
                kind = "value_constraint_violation" if value_guard else "require_failed"
                raise _Revert(kind, f"require({guard}) in {frame.fn.name}", guard)
        elif isinstance(s, Assign):
            value = self.eval(s.value, frame)
            key = self.eval(s.key, frame) if s.key is not None else None
            if s.key is None:
                if _reads(s.value, lambda x: isinstance(x, Env) and x.name.startswith("block.")):
                    self.tainted[s.slot] = "timestamp" if _reads(s.value, lambda x: x == Env("block.timestamp")) else "number"
                else:
                    self.tainted.pop(s.slot, None)
            self.write(s.slot, value, key)
        elif isinstance(s, Send):
            to = self.eval(s.to, frame)
            amount = self.eval(s.amount, frame)
            if amount > self.state.contract_balance:
                raise _Revert("reverted", f"transfer of {amount} exceeds balance in {frame.fn.name}")
            self.pay_out(to, amount, "send", frame.depth)
        elif isinstance(s, LowLevelCall):
            self.low_level_call(s, frame)
        elif isinstance(s, DelegateCall):
            target = self.eval(s.target, frame)
            tainted = _reads(s.target, lambda x: isinstance(x, Var) and x.name in frame.params)
            self.events.append(DelegateCalled(target, tainted))
        elif isinstance(s, SelfDestruct):
            to = self.eval(s.beneficiary, frame)
            self.pay_out(to, self.state.contract_balance, "selfdestruct", frame.depth)
            self.events.append(SelfDestructed(to))
            self.state.alive = False
            raise _Stop()
        elif isinstance(s, If):
            if self.eval(s.cond, frame, "branch"):
                self.run(s.then, frame)
            else:
                self.run(s.orelse, frame)
        elif isinstance(s, ReadBlockField):
            value = self.block_number if s.field == "number" else self.timestamp
            self.events.append(BlockFieldRead(s.field, False))
            self.tainted[s.into] = s.field
            self.write(s.into, value)
        elif isinstance(s, Revert):
            raise _Revert("reverted", f"revert() in {frame.fn.name}")

    def low_level_call(self, s: LowLevelCall, frame: _Frame):
        to = self.eval(s.to, frame)
        amount = self.eval(s.amount, frame)
        ok = amount <= self.state.contract_balance
        if ok:
            self.pay_out(to, amount, "call", frame.depth)
            if self.should_reenter(to, frame.depth):
                self.reenter(to, frame.depth + 1)
        else:
            self.events.append(LowLevelCallFailed(s.capture is not None))
        if s.capture is not None:
            self.tainted.pop(s.capture, None)
            self.write(s.capture, ok)

    def should_reenter(self, to: str, depth: int) -> bool:
        return (
            self.pool is not None
            and bool(self.model.attacker_callbacks)
            and to in self.pool.attackers
            and depth < self.bound
            and self.state.alive
        )

    def reenter(self, attacker: str, depth: int):
        self.events.append(ReenteredCall(depth))
        for fname, args in self.model.attacker_callbacks:
            fn = self.model.function(fname)
            if not self.state.alive or not fn.descriptor.callable:
                continue
            if not all(a.type == t and value_matches(t, a.value) for a, t in zip(args, fn.descriptor.param_types)):
                continue
            snapshot = self.state.copy()
            mark = len(self.events)
            tainted = dict(self.tainted)
            params = {name: a.value for (name, _), a in zip(fn.descriptor.params, args)}
            try:
                self.run(fn.body, _Frame(fn, params, attacker, 0, depth))
            except _Stop:
                pass
            except _Revert:
                # the attacker contract swallows the failure of its re-entrant call
                self.state = snapshot
                self.tainted = tainted
                del self.events[mark:]


def _zero_of(vtype: str):
    return {"uint": 0, "int": 0, "bool": False, "address": "0x" + "0" * 40, "bytes": b"", "string": ""}[vtype]


def _is_unsigned(e: BinOp, model: ContractModel, frame: _Frame) -> bool:
    def typ(x):
        if isinstance(x, Const):
            return x.type
        if isinstance(x, Var):
            if x.name in frame.params:
                return dict(frame.fn.descriptor.params)[x.name]
            return model.slot(x.name).type
        if isinstance(x, Index):
            return model.slot(x.slot).type
        if isinstance(x, Env):
            return "uint"
        if isinstance(x, BinOp):
            return "uint" if typ(x.left) == typ(x.right) == "uint" else "int"
        return "bool"

    return typ(e) == "uint"


def _precheck(state: ChainState, tx: Transaction, model: ContractModel, pool: SeedPool | None, index: int):
    signals = []
    fn = model.function(tx.function)
    if not state.alive:
        signals.append(RawSignal(index, "unknown_function", f"contract is destroyed; {tx.function} unavailable"))
        fn = None
    elif fn is None or not fn.descriptor.callable:
        signals.append(RawSignal(index, "unknown_function", f"no callable function {tx.function!r}"))
        fn = None
    if fn is not None:
        desc = fn.descriptor
        if len(tx.args) != len(desc.params):
            signals.append(RawSignal(index, "arity_or_type_mismatch", f"{desc.name} takes {len(desc.params)} args, got {len(tx.args)}"))
        else:
            for j, (a, t) in enumerate(zip(tx.args, desc.param_types)):
                if a.type != t or not value_matches(t, a.value):
                    signals.append(RawSignal(index, "arity_or_type_mismatch", f"arg {j} of {desc.name} expects {t}, got {a.type}"))
                    break
    if tx.sender not in state.nonces:
        signals.append(RawSignal(index, "bad_nonce", f"no account state (nonce) for sender {tx.sender}"))
    elif state.balances.get(tx.sender, 0) < tx.amount:
        signals.append(RawSignal(index, "insufficient_balance", f"sender {tx.sender} cannot cover {tx.amount}"))
    if pool is not None and tx.amount not in pool.amounts:
        signals.append(RawSignal(index, "value_constraint_violation", f"amount {tx.amount} is not an admissible seed amount"))
    if fn is not None and tx.amount > 0 and not fn.descriptor.payable:
        signals.append(RawSignal(index, "value_to_nonpayable", f"{fn.name} is not payable"))
    return fn, signals


def execute_transaction(state: ChainState, tx: Transaction, model: ContractModel, pool: SeedPool | None = None,
                        *, index: int = 0, reentrancy_bound: int = REENTRANCY_BOUND):
    """Run one transaction; returns ``(new_state, events, raw_signals)``.

    ``state`` is never mutated. A rejected or reverted transaction returns
    ``state`` itself.
    """
    begin = TxBegin(index, tx.sender, tx.function, tx.amount)
    fn, signals = _precheck(state, tx, model, pool, index)
    if signals:
        return state, [begin, Reverted(index, "rejected: " + "; ".join(s.detail for s in signals))], signals

    work = state.copy()
    block = (state.block_number + 1, state.timestamp + BLOCK_TIME)
    ex = _Execution(model, pool, work, tx.sender, block, reentrancy_bound)
    if tx.amount:
        work.balances[tx.sender] -= tx.amount
        work.contract_balance += tx.amount
        ex.events.append(EtherIn(tx.sender, tx.amount))
    params = {name: a.value for (name, _), a in zip(fn.descriptor.params, tx.args)}
    try:
        ex.run(fn.body, _Frame(fn, params, tx.sender, tx.amount, 0))
    except _Stop:
        pass
    except _Revert as r:
        return state, [begin, Reverted(index, r.detail)], [RawSignal(index, r.kind, r.detail, r.guard)]

    final = ex.state
    final.block_number, final.timestamp = block
    final.nonces[tx.sender] += 1
    return final, [begin, *ex.events, TxCommitted(index)], []


def execute_sequence(model: ContractModel, pool: SeedPool, seq: TransactionSequence,
                     *, reentrancy_bound: int = REENTRANCY_BOUND) -> ExecutionTrace:
    genesis = deploy(model, pool)
    state = genesis
    events: list = []
    signals: list = []
    for i, tx in enumerate(seq.txs):
        state, evs, sigs = execute_transaction(state, tx, model, pool, index=i, reentrancy_bound=reentrancy_bound)
        events.extend(evs)
        signals.extend(sigs)
    return ExecutionTrace(tuple(events), state, tuple(signals), genesis)
