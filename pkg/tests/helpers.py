"""Independent reference implementations used as test oracles."""

from __future__ import annotations

import itertools

from reflectfuzz.contract_vm.interpreter import execute_sequence
from reflectfuzz.oracles import run_all
from reflectfuzz.txmodel import ETHER, Arg, Transaction, TransactionSequence

ARG_GRID = {"uint": [0, 1], "bool": [False, True]}


def grid_calls(model, pool):
    """Every call over the small grid: deployer/user/attacker, amounts {0, 1 ether}, args {0, 1}."""
    senders = [pool.deployer, pool.users[0], pool.attackers[0]]
    grid = dict(ARG_GRID, address=[pool.deployer, pool.attackers[0]])
    for f in model.functions:
        d = f.descriptor
        if not d.callable:
            continue
        for values in itertools.product(*(grid[t] for t in d.param_types)):
            args = tuple(Arg(t, v) for t, v in zip(d.param_types, values))
            for s in senders:
                for amount in ([0, ETHER] if d.payable else [0]):
                    yield Transaction(d.name, args, s, amount)


def brute_force_classes(model, pool, max_len: int = 3) -> set[str]:
    calls = list(grid_calls(model, pool))
    found: set[str] = set()
    for n in range(1, max_len + 1):
        for txs in itertools.product(calls, repeat=n):
            trace = execute_sequence(model, pool, TransactionSequence(txs))
            found |= {c.value for c in run_all(model, trace, pool).found}
    return found


def reference_apply(txs: list, action, max_len: int) -> list:
    """Plain-list applier written independently of the library one."""
    out = list(txs)
    for e in action.edits:
        if 0 <= e.tx_index < len(out):
            out[e.tx_index] = out[e.tx_index].replace(**{e.field: e.value})
    for s in action.structural:
        if s.op == "insert":
            if s.tx is not None and s.index <= len(out) and s.index >= 0 and len(out) < max_len:
                out = out[: s.index] + [s.tx] + out[s.index:]
        elif s.op == "delete":
            if 0 <= s.index < len(out):
                out = out[: s.index] + out[s.index + 1:]
        elif s.op == "move":
            if 0 <= s.index < len(out) and s.to is not None and 0 <= s.to < len(out):
                item = out[s.index]
                rest = out[: s.index] + out[s.index + 1:]
                out = rest[: s.to] + [item] + rest[s.to:]
    return out


def levenshtein(a: str, b: str) -> int:
    """Recursive textbook definition, memoised."""
    from functools import lru_cache

    @lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] != b[j - 1]))

    return d(len(a), len(b))
