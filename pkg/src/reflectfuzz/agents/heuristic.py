"""Deterministic rule-based policy for all six agents.

It reads the contract model directly (the LLM backend reads the rendered
source instead) and produces the same action records.
"""

from __future__ import annotations

import random
from collections import defaultdict

from ..contract_vm import analysis as an
from ..contract_vm.interpreter import deploy
from ..contract_vm.model import ContractModel, Function, Var
from ..feedback import Feedback, FeedbackKind
from ..txmodel import (
    INT_MIN,
    UINT_MAX,
    Arg,
    EmptyPartition,
    ProgramContext,
    SeedPool,
    Transaction,
    TransactionSequence,
    sample_sender,
    validate_sequence,
)
from .actions import AgentAction, AgentId, FieldEdit, StructEdit
from .base import EmptyInterface, NoRepairAvailable


def edit_distance(a: str, b: str) -> int:
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def boundary_values(vtype: str, pool: SeedPool, attacker: str) -> list:
    return {
        "uint": [0, 1, UINT_MAX],
        "int": [0, 1, -1, INT_MIN],
        "bool": [True, False],
        "address": [pool.deployer, attacker],
        "bytes": [b"", b"\x00"],
        "string": ["", "a"],
    }[vtype]


def _role(pool: SeedPool, role: str, seed: int, fallback: str) -> str:
    try:
        return sample_sender(pool, role, seed)
    except EmptyPartition:
        return sample_sender(pool, fallback, seed)


class _Policy:
    def __init__(self, model: ContractModel, ctx: ProgramContext, rng_seed: int = 0, max_len: int = 10):
        self.model = model
        self.ctx = ctx
        self.pool = ctx.seed_pool
        self.seed = rng_seed
        self.max_len = max_len
        self.attacker = _role(self.pool, "attacker", rng_seed, "attacker")
        self.user = _role(self.pool, "user", rng_seed, "attacker")
        self._genesis = None

    @property
    def genesis(self):
        if self._genesis is None:
            self._genesis = deploy(self.model, self.pool)
        return self._genesis

    # -- building blocks ----------------------------------------------------

    def args_for(self, fn: Function, sender: str, rng: random.Random, wanted: dict | None = None) -> tuple[Arg, ...]:
        """Arguments for ``fn``: explicit wishes, then the function's own guards, then boundary values."""
        wanted = wanted or {}
        out = []
        for pname, ptype in fn.descriptor.params:
            value = wanted.get(pname)
            if value is None:
                for r in an.requires(fn):
                    c = an.solve(r.cond, Var(pname))
                    if c is not None:
                        value = an.satisfy(c, ptype, sender)
                        if value is not None:
                            break
            if value is None:
                value = rng.choice(boundary_values(ptype, self.pool, self.attacker))
            out.append(Arg(ptype, value))
        return tuple(out)

    def funding_amount(self, fn: Function) -> int:
        if not fn.descriptor.payable:
            return 0
        options = an.admissible_amounts(an.value_constraint(fn), self.pool.amounts)
        return options[0] if options else 0

    def setter_call(self, setter: Function, slot: str, constraint, sender: str, rng: random.Random) -> Transaction:
        wanted = {}
        stype = self.model.slot(slot).type
        for a in an.assignments(setter, slot):
            if isinstance(a.value, Var) and a.value.name in dict(setter.descriptor.params):
                if constraint is not None:
                    value = an.satisfy(constraint, stype, sender)
                else:
                    value = sender if stype == "address" else None
                if value is not None:
                    wanted[a.value.name] = value
        return Transaction(setter.name, self.args_for(setter, sender, rng, wanted), sender, self.funding_amount(setter))

    def build(self, target: str, salt: int = 0) -> TransactionSequence:
        rng = random.Random(f"{self.seed}:{salt}:{target}")
        fn = self.model.function(target)
        txs: list[Transaction] = []
        seen = set()

        def add(tx):
            if (tx.function, tx.sender) not in seen:
                seen.add((tx.function, tx.sender))
                txs.append(tx)

        # put some ether in the contract through every payable entry point
        for f in self.model.functions:
            if f.descriptor.callable and f.descriptor.payable and f.name != target:
                add(Transaction(f.name, self.args_for(f, self.user, rng), self.user, self.funding_amount(f)))
        # make the attacker the recipient of outgoing transfers
        for slot in an.recipient_slots(fn, self.model):
            if self.model.slot(slot).type == "address":
                for setter in an.setters(self.model, slot, (target,))[:1]:
                    add(self.setter_call(setter, slot, None, self.attacker, rng))
        # satisfy the target's guards where a setter exists
        for r in an.requires(fn):
            for slot in an.slots_read(r.cond, self.model):
                sts = an.setters(self.model, slot, (target,))
                if sts:
                    add(self.setter_call(sts[0], slot, an.solve(r.cond, Var(slot)), self.attacker, rng))
        add(Transaction(target, self.args_for(fn, self.attacker, rng), self.attacker, self.funding_amount(fn)))
        if len(txs) > self.max_len:
            txs = txs[: self.max_len - 1] + [txs[-1]]
        return TransactionSequence(tuple(txs), "drafted")

    def draft(self) -> TransactionSequence:
        ranking = an.rank_targets(self.model)
        if not ranking:
            raise EmptyInterface(self.model.name)
        return self.build(ranking[0])

    def _failing_require(self, seq, feedback: Feedback, i: int):
        if FeedbackKind.RequireFailed not in feedback.kinds_at(i):
            return None, None
        fn = self.model.function(seq[i].function)
        if fn is None:
            return None, None
        for sig in feedback.signals_at(i):
            req = an.find_require(fn, sig.guard)
            if req is not None:
                return fn, req
        return fn, None

    # -- global reflection ----------------------------------------------------

    def refine(self, seq: TransactionSequence, feedback: Feedback, round_index: int) -> AgentAction:
        agent = AgentId.TxSeqRefiner
        if feedback.stop:
            return AgentAction(agent, rationale="vulnerability already found")
        # element-level faults come first; the checkers own those fields
        local = any(k != FeedbackKind.RequireFailed for kinds in feedback.per_tx.values() for k in kinds)
        if local or validate_sequence(seq, self.ctx):
            return AgentAction(agent, rationale="element faults left to the checkers")
        k = feedback.first_index(FeedbackKind.RequireFailed)
        if k is not None:
            action = self._repair_guard(seq, feedback, k)
            return action or AgentAction(agent, rationale=f"no state-setting call helps tx{k}")

        ranking = an.rank_targets(self.model)
        current = next((tx.function for tx in reversed(seq.txs) if tx.function in ranking), None)
        start = ranking.index(current) + 1 if current else 0
        for step in range(len(ranking)):
            target = ranking[(start + step) % len(ranking)]
            candidate = self.build(target, salt=round_index if step == len(ranking) - 1 else 0)
            if candidate.txs != seq.txs:
                structural = [StructEdit("delete", i) for i in reversed(range(len(seq)))]
                structural += [StructEdit("insert", i, tx) for i, tx in enumerate(candidate.txs)]
                return AgentAction(agent, (), tuple(structural), f"retarget to {target}")
        raise NoRepairAvailable(f"every target of {self.model.name} already tried")

    def _repair_guard(self, seq: TransactionSequence, feedback: Feedback, k: int) -> AgentAction | None:
        fn, req = self._failing_require(seq, feedback, k)
        if req is None:
            return None
        for slot in an.slots_read(req.cond, self.model):
            names = {f.name for f in an.setters(self.model, slot, (fn.name,))}
            if not names or any(seq[j].function in names for j in range(k)):
                continue
            later = [j for j in range(k + 1, len(seq)) if seq[j].function in names]
            if later:
                return AgentAction(AgentId.TxSeqRefiner, (), (StructEdit("move", later[0], to=k),),
                                   f"move {seq[later[0]].function} before tx{k} to set {slot}")
            if len(seq) >= self.max_len:
                continue
            setter = an.setters(self.model, slot, (fn.name,))[0]
            rng = random.Random(f"{self.seed}:setter:{k}:{slot}")
            tx = self.setter_call(setter, slot, an.solve(req.cond, Var(slot)), seq[k].sender, rng)
            return AgentAction(AgentId.TxSeqRefiner, (), (StructEdit("insert", k, tx),),
                               f"insert {setter.name} before tx{k} to set {slot}")
        return None

    # -- local reflection -----------------------------------------------------

    def check(self, agent: AgentId, seq: TransactionSequence, feedback: Feedback, round_index: int) -> AgentAction:
        faults = defaultdict(set)
        for f in validate_sequence(seq, self.ctx):
            faults[f.tx_index].add(f.kind)
        handler = {
            AgentId.FunChecker: self._check_function,
            AgentId.ArgChecker: self._check_args,
            AgentId.SNDChecker: self._check_sender,
            AgentId.AMTChecker: self._check_amount,
        }[agent]
        edits = handler(seq, feedback, faults, round_index)
        rationale = "; ".join(f"tx{e.tx_index}.{e.field}" for e in edits) or "nothing to fix"
        return AgentAction(agent, tuple(edits), (), rationale)

    def _check_function(self, seq, feedback, faults, round_index):
        names = sorted(d.name for d in self.ctx.interface if d.callable)
        edits = []
        for i, tx in enumerate(seq):
            if "UnknownFunction" in faults[i] and names:
                best = min(names, key=lambda n: (edit_distance(tx.function, n), n))
                edits.append(FieldEdit(i, "function", best))
        return edits

    def _check_args(self, seq, feedback, faults, round_index):
        edits = []
        for i, tx in enumerate(seq):
            fn = self.model.function(tx.function)
            if fn is None or not fn.descriptor.callable:
                continue
            rng = random.Random(f"{self.seed}:{round_index}:args:{i}")
            if faults[i] & {"ArgArityMismatch", "ArgTypeMismatch"} or FeedbackKind.ArgumentMismatch in feedback.kinds_at(i):
                edits.append(FieldEdit(i, "args", self.args_for(fn, tx.sender, rng)))
                continue
            _, req = self._failing_require(seq, feedback, i)
            if req is None:
                continue
            args = list(tx.args)
            for pname in an.params_read(req.cond, fn):
                pos = [p for p, _ in fn.descriptor.params].index(pname)
                c = an.solve(req.cond, Var(pname))
                value = an.satisfy(c, args[pos].type, tx.sender) if c else None
                if value is not None and value != args[pos].value:
                    args[pos] = Arg(args[pos].type, value)
            if tuple(args) != tx.args:
                edits.append(FieldEdit(i, "args", tuple(args)))
        return edits

    def _check_sender(self, seq, feedback, faults, round_index):
        edits = []
        funding = self.pool.balances()
        for i, tx in enumerate(seq):
            if "SenderNotInPool" in faults[i] or FeedbackKind.SenderError in feedback.kinds_at(i):
                rng = random.Random(f"{self.seed}:{round_index}:sender:{i}")
                options = [a for a in sorted(self.pool.attackers) + sorted(self.pool.users)
                           if a != tx.sender and funding[a] >= tx.amount]
                if options:
                    edits.append(FieldEdit(i, "sender", rng.choice(options)))
                continue
            fn, req = self._failing_require(seq, feedback, i)
            if req is None:
                continue
            for slot in an.sender_slots(req.cond, self.model):
                if an.setters(self.model, slot, (fn.name,)):
                    continue
                holder = self.genesis.storage.get(slot)
                if holder in self.pool.senders and holder != tx.sender:
                    edits.append(FieldEdit(i, "sender", holder))
                    break
        return edits

    def _check_amount(self, seq, feedback, faults, round_index):
        amounts = sorted(self.pool.amounts)
        funding = self.pool.balances()
        edits: dict[int, int] = {}
        feeders = an.accumulators(self.model)
        for i, tx in enumerate(seq):
            fn = self.model.function(tx.function)
            kinds = feedback.kinds_at(i)
            if fn is not None and tx.amount > 0 and not fn.descriptor.payable:
                edits[i] = 0
            elif "AmountNotInPool" in faults[i]:
                edits[i] = min(amounts, key=lambda a: (abs(a - tx.amount), a))
            elif FeedbackKind.IncorrectTransactionValue in kinds and fn is not None:
                options = [a for a in an.admissible_amounts(an.value_constraint(fn), amounts, positive=False)
                           if a != tx.amount and a <= funding.get(tx.sender, 0)]
                higher = [a for a in options if a > tx.amount]
                if higher or options:
                    edits[i] = (higher or options)[0]
            else:
                _, req = self._failing_require(seq, feedback, i)
                if req is None:
                    continue
                for slot in an.slots_read(req.cond, self.model):
                    # only funding calls that went through in the tested run
                    earlier = [j for j in range(i) if seq[j].function in feeders.get(slot, ())
                               and not feedback.kinds_at(j) and not faults[j]]
                    if not earlier:
                        continue
                    j = earlier[-1]
                    current = edits.get(j, seq[j].amount)
                    bigger = [a for a in amounts if a > current and a <= funding.get(seq[j].sender, 0)]
                    if bigger:
                        edits[j] = bigger[0]
                        break
        return [FieldEdit(i, "amount", a) for i, a in sorted(edits.items()) if a != seq[i].amount]


def heuristic_draft(ctx: ProgramContext, model: ContractModel, rng_seed: int = 0, max_len: int = 10) -> TransactionSequence:
    return _Policy(model, ctx, rng_seed, max_len).draft()


def heuristic_repair(agent: AgentId, ctx: ProgramContext, model: ContractModel, seq: TransactionSequence,
                     feedback: Feedback, rng_seed: int = 0, round_index: int = 0, max_len: int = 10) -> AgentAction:
    policy = _Policy(model, ctx, rng_seed, max_len)
    if agent == AgentId.TxSeqRefiner:
        return policy.refine(seq, feedback, round_index)
    if agent == AgentId.TxSeqDrafter:
        raise ValueError("the drafter does not repair; use heuristic_draft")
    return policy.check(agent, seq, feedback, round_index)


class HeuristicBackend:
    name = "heuristic"

    def __init__(self, model: ContractModel, rng_seed: int = 0, max_len: int = 10):
        self.model = model
        self.rng_seed = rng_seed
        self.max_len = max_len
        self._policy: _Policy | None = None

    def _for(self, ctx: ProgramContext) -> _Policy:
        if self._policy is None or self._policy.ctx is not ctx:
            self._policy = _Policy(self.model, ctx, self.rng_seed, self.max_len)
        return self._policy

    def draft(self, ctx: ProgramContext) -> TransactionSequence:
        return self._for(ctx).draft()

    def reflect_global(self, ctx, seq, feedback, round_index: int = 0) -> AgentAction:
        return self._for(ctx).refine(seq, feedback, round_index)

    def check_element(self, agent, ctx, seq, feedback, round_index: int = 0) -> AgentAction:
        return self._for(ctx).check(agent, seq, feedback, round_index)
