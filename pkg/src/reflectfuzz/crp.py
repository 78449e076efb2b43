"""The reflection loop: draft, test, reflect globally, reflect locally, repeat."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterable

from .agents.actions import CHECKERS, PROFILES, AgentAction, AgentId, apply_action, enforce_permissions
from .agents.base import EmptyInterface, NoRepairAvailable, PolicyBackend
from .contract_vm.chain import ExecutionTrace
from .contract_vm.interpreter import execute_sequence
from .contract_vm.model import ContractModel
from .feedback import Feedback, translate
from .oracles import OracleReport, VulnClass, run_all
from .txmodel import ProgramContext, TransactionSequence, sequence_to_dict

log = logging.getLogger(__name__)


class Phase(str, Enum):
    Drafting = "Drafting"
    Testing = "Testing"
    GlobalReflection = "GlobalReflection"
    LocalReflection = "LocalReflection"


# Which agents act in which phase, in acting order.
SCHEDULE = {
    Phase.Drafting: (AgentId.TxSeqDrafter,),
    Phase.Testing: (),
    Phase.GlobalReflection: (AgentId.TxSeqRefiner,),
    Phase.LocalReflection: CHECKERS,
}

STATUSES = ("vulnerability_found", "exhausted_rounds", "budget_exceeded", "no_repair")


@dataclass(frozen=True)
class CrpConfig:
    max_reflection_rounds: int = 10
    max_sequence_len: int = 10
    per_contract_budget: float = 600.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.max_reflection_rounds < 0:
            raise ValueError("max_reflection_rounds must be >= 0")
        if self.max_sequence_len < 1:
            raise ValueError("max_sequence_len must be >= 1")


@dataclass(frozen=True)
class ReflectionRecord:
    round: int
    state_before: TransactionSequence
    actions: tuple[AgentAction, ...]
    feedback: Feedback
    state_after: TransactionSequence
    dropped_edits: int = 0
    no_repair: bool = False

    @property
    def violations(self) -> int:
        return sum(a.violations for a in self.actions)

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "state_before": sequence_to_dict(self.state_before),
            "actions": [a.to_dict() for a in self.actions],
            "feedback": self.feedback.to_dict(),
            "state_after": sequence_to_dict(self.state_after),
            "dropped_edits": self.dropped_edits,
            "no_repair": self.no_repair,
        }


@dataclass
class CrpOutcome:
    status: str
    found_class: VulnClass | None = None
    found_round: int | None = None
    witness: TransactionSequence | None = None
    report: OracleReport | None = None
    history: list[ReflectionRecord] = field(default_factory=list)
    final_sequence: TransactionSequence | None = None
    wall_time: float = 0.0
    executions: int = 0

    @property
    def found(self) -> bool:
        return self.status == "vulnerability_found"

    @property
    def violations(self) -> int:
        return sum(r.violations for r in self.history)

    @property
    def reflection_records(self) -> list[ReflectionRecord]:
        """History without the round-0 draft record."""
        return [r for r in self.history if r.round > 0]

    @property
    def rounds_used(self) -> int:
        return self.found_round if self.found_round is not None else len(self.reflection_records)


def remap_feedback(feedback: Feedback, index_map: dict) -> Feedback:
    """Re-key per-transaction feedback after structural edits; deleted txs drop out."""
    if all(old == new for old, new in index_map.items()):
        return feedback
    per_tx = {index_map[i]: kinds for i, kinds in feedback.per_tx.items() if index_map.get(i) is not None}
    signals = tuple(
        replace(s, tx_index=index_map[s.tx_index]) for s in feedback.signals if index_map.get(s.tx_index) is not None
    )
    return replace(feedback, per_tx=per_tx, signals=signals)


def apply(seq: TransactionSequence, actions: Iterable[AgentAction], max_len: int) -> TransactionSequence:
    """Fold actions over ``seq`` in order."""
    for a in actions:
        seq = apply_action(seq, a, max_len).seq
    return seq


class _Tester:
    """Runs the Testing phase; every execution starts from a fresh deployment."""

    def __init__(self, model: ContractModel, ctx: ProgramContext):
        self.model = model
        self.ctx = ctx
        self.history: list[ExecutionTrace] = []
        self.executions = 0
        self._last = None

    def __call__(self, seq: TransactionSequence) -> tuple[ExecutionTrace, OracleReport, Feedback]:
        # round 1 re-tests the draft: reuse the result instead of executing again
        if self._last is not None and self._last[0] == seq.txs:
            return self._last[1]
        pool = self.ctx.seed_pool
        trace = execute_sequence(self.model, pool, seq)
        report = run_all(self.model, trace, pool, self.history)
        self.history.append(trace)
        self.executions += 1
        result = (trace, report, translate(trace.raw_signals, report, seq))
        self._last = (seq.txs, result)
        return result


def run_round(index: int, seq: TransactionSequence, ctx: ProgramContext, backend: PolicyBackend,
              cfg: CrpConfig, tester: _Tester) -> tuple[ReflectionRecord, OracleReport]:
    """One reflection round: Testing, then global, then local reflection."""
    _, report, fb = tester(seq)
    if fb.stop:
        return ReflectionRecord(index, seq, (), fb, seq), report

    actions = []
    dropped = 0
    try:
        raw = backend.reflect_global(ctx, seq, fb, round_index=index)
    except NoRepairAvailable as e:
        raw = AgentAction(AgentId.TxSeqRefiner, rationale=f"no repair: {e}")
    action = enforce_permissions(raw, PROFILES[AgentId.TxSeqRefiner])
    result = apply_action(seq, action, cfg.max_sequence_len)
    actions.append(action)
    dropped += len(result.dropped)
    current = result.seq
    local_fb = remap_feedback(fb, result.index_map)

    for agent in SCHEDULE[Phase.LocalReflection]:
        action = enforce_permissions(backend.check_element(agent, ctx, current, local_fb, round_index=index), PROFILES[agent])
        result = apply_action(current, action, cfg.max_sequence_len)
        actions.append(action)
        dropped += len(result.dropped)
        current = result.seq
        local_fb = remap_feedback(local_fb, result.index_map)

    no_repair = current.txs == seq.txs
    return ReflectionRecord(index, seq, tuple(actions), fb, current, dropped, no_repair), report


def run_crp(model: ContractModel, backend: PolicyBackend, cfg: CrpConfig = CrpConfig(),
            ctx: ProgramContext | None = None, clock: Callable[[], float] = time.perf_counter) -> CrpOutcome:
    ctx = ctx or model.context()
    start = clock()
    tester = _Tester(model, ctx)

    def done(status, **kw) -> CrpOutcome:
        return CrpOutcome(status, history=history, wall_time=clock() - start, executions=tester.executions, **kw)

    def found(round_index: int, seq: TransactionSequence, report: OracleReport) -> CrpOutcome:
        return done("vulnerability_found", found_class=report.first, found_round=round_index, witness=seq,
                    report=report, final_sequence=seq)

    history: list[ReflectionRecord] = []
    try:
        seq = backend.draft(ctx)
    except EmptyInterface:
        return done("no_repair")
    if len(seq) > cfg.max_sequence_len:
        seq = seq.with_txs(seq.txs[: cfg.max_sequence_len])

    # round 0: drafting and its testing
    _, report, fb = tester(seq)
    history.append(ReflectionRecord(0, seq, (), fb, seq))
    if fb.stop:
        return found(0, seq, report)

    for index in range(1, cfg.max_reflection_rounds + 1):
        if clock() - start > cfg.per_contract_budget:
            return done("budget_exceeded", final_sequence=seq)
        record, report = run_round(index, seq, ctx, backend, cfg, tester)
        history.append(record)
        if record.feedback.stop:
            return found(index, seq, report)
        if record.no_repair:
            return done("no_repair", final_sequence=seq)
        seq = record.state_after

    if clock() - start > cfg.per_contract_budget:
        return done("budget_exceeded", final_sequence=seq)
    # the last revision has not been executed yet
    if cfg.max_reflection_rounds > 0:
        _, report, fb = tester(seq)
        if fb.stop:
            return found(cfg.max_reflection_rounds, seq, report)
    return done("exhausted_rounds", final_sequence=seq)
