"""Vulnerability oracles over execution traces.

Each checker returns a :class:`Verdict`; witnesses are indices into
``trace.events``.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

from .contract_vm.chain import (
    BlockFieldRead,
    DelegateCalled,
    EtherIn,
    EtherOut,
    ExecutionTrace,
    LowLevelCallFailed,
    ReenteredCall,
    SelfDestructed,
    StorageWrite,
    TxOriginRead,
)
from .contract_vm.model import ContractModel, If, LowLevelCall, SelfDestruct, Send, Const
from .txmodel import SeedPool


class VulnClass(str, Enum):
    EL = "EL"  # ether leaking
    SC = "SC"  # suicidal contract
    BD = "BD"  # block dependency
    UE = "UE"  # unhandled exception
    UD = "UD"  # unsafe delegatecall
    EF = "EF"  # ether freezing
    RE = "RE"  # reentrancy
    TO = "TO"  # tx.origin misuse

    def __str__(self) -> str:
        return self.value


# Order used when several classes fire in one report.
VERDICT_ORDER = (VulnClass.EL, VulnClass.SC, VulnClass.RE, VulnClass.UD, VulnClass.UE, VulnClass.BD, VulnClass.TO, VulnClass.EF)

SEVERITY = {
    VulnClass.EL: "High",
    VulnClass.SC: "High",
    VulnClass.RE: "High",
    VulnClass.UD: "High",
    VulnClass.BD: "Medium",
    VulnClass.EF: "Medium",
    VulnClass.UE: "Medium",
    VulnClass.TO: "Medium",
}


@dataclass(frozen=True)
class Verdict:
    found: bool
    witness: tuple[int, ...] = ()

    @classmethod
    def hit(cls, witness: Iterable[int]) -> "Verdict":
        return cls(True, tuple(witness))


NOT_FOUND = Verdict(False)


@dataclass(frozen=True)
class OracleReport:
    verdicts: dict = field(default_factory=dict)

    @property
    def any_found(self) -> bool:
        return any(v.found for v in self.verdicts.values())

    @property
    def found(self) -> list[VulnClass]:
        return [c for c in VERDICT_ORDER if self.verdicts.get(c, NOT_FOUND).found]

    @property
    def first(self) -> VulnClass | None:
        found = self.found
        return found[0] if found else None

    def to_dict(self) -> dict:
        return {
            c.value: {"found": v.found, "witness": list(v.witness)}
            for c, v in sorted(self.verdicts.items(), key=lambda kv: VERDICT_ORDER.index(kv[0]))
        }


def _per_tx(trace: ExecutionTrace):
    for start, end, begin in trace.tx_ranges():
        yield begin, range(start, end)


def check_EL(trace: ExecutionTrace, pool: SeedPool) -> Verdict:
    paid_in: dict[str, int] = defaultdict(int)
    witness = []
    for i, ev in enumerate(trace.events):
        if isinstance(ev, EtherIn):
            paid_in[ev.sender] += ev.amount
        elif isinstance(ev, EtherOut) and ev.amount > 0 and ev.to in pool.attackers:
            if paid_in[ev.to] < ev.amount:
                witness.append(i)
    return Verdict.hit(witness) if witness else NOT_FOUND


def check_SC(trace: ExecutionTrace, pool: SeedPool) -> Verdict:
    witness = [
        i
        for begin, idx in _per_tx(trace)
        if begin.sender != pool.deployer
        for i in idx
        if isinstance(trace.events[i], SelfDestructed)
    ]
    return Verdict.hit(witness) if witness else NOT_FOUND


def check_BD(trace: ExecutionTrace, pool: SeedPool | None = None) -> Verdict:
    witness = []
    for _, idx in _per_tx(trace):
        branch_read = False
        for i in idx:
            ev = trace.events[i]
            if isinstance(ev, BlockFieldRead) and ev.feeds_branch:
                branch_read = True
            elif isinstance(ev, EtherOut) and branch_read:
                witness.append(i)
    return Verdict.hit(witness) if witness else NOT_FOUND


def check_UE(trace: ExecutionTrace, pool: SeedPool | None = None) -> Verdict:
    witness = [i for i, ev in enumerate(trace.events) if isinstance(ev, LowLevelCallFailed) and not ev.result_captured]
    return Verdict.hit(witness) if witness else NOT_FOUND


def check_UD(trace: ExecutionTrace, pool: SeedPool) -> Verdict:
    witness = [
        i
        for begin, idx in _per_tx(trace)
        if begin.sender != pool.deployer
        for i in idx
        if isinstance(trace.events[i], DelegateCalled) and trace.events[i].target_tainted_by_input
    ]
    return Verdict.hit(witness) if witness else NOT_FOUND


def check_RE(trace: ExecutionTrace, pool: SeedPool | None = None) -> Verdict:
    paid_in: dict[str, int] = defaultdict(int)
    paid_out: dict[str, int] = defaultdict(int)
    witness = []
    for _, idx in _per_tx(trace):
        reentered = False
        for i in idx:
            ev = trace.events[i]
            if isinstance(ev, EtherIn):
                paid_in[ev.sender] += ev.amount
            elif isinstance(ev, ReenteredCall) and ev.depth >= 1:
                reentered = True
            elif isinstance(ev, EtherOut):
                paid_out[ev.to] += ev.amount
                if reentered and ev.depth >= 1 and paid_out[ev.to] > paid_in[ev.to]:
                    witness.append(i)
    return Verdict.hit(witness) if witness else NOT_FOUND


def check_TO(trace: ExecutionTrace, pool: SeedPool | None = None) -> Verdict:
    witness = []
    for _, idx in _per_tx(trace):
        origin_guard = False
        for i in idx:
            ev = trace.events[i]
            if isinstance(ev, TxOriginRead) and ev.in_guard:
                origin_guard = True
            elif origin_guard and isinstance(ev, (StorageWrite, EtherOut)):
                witness.append(i)
    return Verdict.hit(witness) if witness else NOT_FOUND


def _has_outflow(stmts) -> bool:
    for s in stmts:
        if isinstance(s, (Send, SelfDestruct)):
            return True
        if isinstance(s, LowLevelCall) and not (isinstance(s.amount, Const) and s.amount.value == 0):
            return True
        if isinstance(s, If) and (_has_outflow(s.then) or _has_outflow(s.orelse)):
            return True
    return False


def can_freeze(model: ContractModel) -> bool:
    """Static half of the ether-freezing check."""
    payable = any(f.descriptor.payable and f.descriptor.callable for f in model.functions)
    return payable and not any(_has_outflow(f.body) for f in model.functions)


def check_EF(model: ContractModel, campaign_traces: Iterable[ExecutionTrace], current: ExecutionTrace | None = None) -> Verdict:
    if not can_freeze(model):
        return NOT_FOUND
    if current is not None:
        witness = [i for i, ev in enumerate(current.events) if isinstance(ev, EtherIn) and ev.amount > 0]
        if witness:
            return Verdict.hit(witness)
    for tr in campaign_traces:
        if any(isinstance(ev, EtherIn) and ev.amount > 0 for ev in tr.events):
            return Verdict(True, ())
    return NOT_FOUND


def run_all(model: ContractModel, trace: ExecutionTrace, pool: SeedPool,
            history: Iterable[ExecutionTrace] = ()) -> OracleReport:
    verdicts = {
        VulnClass.EL: check_EL(trace, pool),
        VulnClass.SC: check_SC(trace, pool),
        VulnClass.RE: check_RE(trace, pool),
        VulnClass.UD: check_UD(trace, pool),
        VulnClass.UE: check_UE(trace, pool),
        VulnClass.BD: check_BD(trace, pool),
        VulnClass.TO: check_TO(trace, pool),
        VulnClass.EF: check_EF(model, history, trace),
    }
    return OracleReport(verdicts)
