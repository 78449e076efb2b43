import itertools

import pytest

from conftest import attack, load
from reflectfuzz.agents.actions import CHECKERS, AgentAction, AgentId, FieldEdit
from reflectfuzz.agents.heuristic import HeuristicBackend
from reflectfuzz.contract_vm import interpreter
from reflectfuzz.contract_vm.interpreter import deploy
from reflectfuzz.crp import CrpConfig, _Tester, apply, run_crp, run_round
from reflectfuzz.txmodel import ETHER, Arg, Transaction, TransactionSequence


def run(model, **cfg):
    return run_crp(model, HeuristicBackend(model), CrpConfig(**cfg))


def test_crowdsale_found(crowdsale):
    out = run(crowdsale)
    assert out.status == "vulnerability_found" and out.found_class.value == "EL"
    assert out.found_round == 3
    assert [t.function for t in out.witness] == ["invest", "setOwner", "setPhase", "withdraw"]
    assert out.witness[0].amount == 10 * ETHER


@pytest.mark.parametrize("rounds", [0, 1, 3, 10])
def test_never_vulnerable_round_bound(rounds):
    out = run(load("never_vulnerable"), max_reflection_rounds=rounds)
    assert out.status == "exhausted_rounds"
    assert len(out.reflection_records) == rounds
    assert [r.round for r in out.history] == list(range(rounds + 1))


def test_stop_signal_immediacy(crowdsale):
    out = run(crowdsale)
    last = out.history[-1]
    assert last.round == out.found_round
    assert last.actions == () and last.state_after == last.state_before
    assert all(r.round <= out.found_round for r in out.history)


def test_phase_order_in_every_record(crowdsale):
    out = run(crowdsale)
    order = [AgentId.TxSeqRefiner, *CHECKERS]
    for r in out.reflection_records:
        if r.actions:
            assert [a.agent for a in r.actions] == order


def test_history_is_chained(crowdsale):
    out = run(crowdsale)
    for prev, cur in itertools.pairwise(out.history) if hasattr(itertools, "pairwise") else zip(out.history, out.history[1:]):
        assert cur.state_before == prev.state_after


def test_fresh_genesis_each_execution(crowdsale, monkeypatch):
    seen = []
    real = interpreter.deploy

    def spy(model, pool):
        state = real(model, pool)
        seen.append(state.canonical())
        return state

    monkeypatch.setattr(interpreter, "deploy", spy)
    run(crowdsale)
    expected = real(crowdsale, crowdsale.context().seed_pool).canonical()
    assert len(seen) >= 3 and all(s == expected for s in seen)


def test_budget_exceeded():
    out = run(load("never_vulnerable"), max_reflection_rounds=10_000, per_contract_budget=0.001)
    assert out.status == "budget_exceeded"
    assert 1 <= len(out.history) < 10_001


def test_budget_with_fake_clock():
    ticks = iter(range(100))
    model = load("never_vulnerable")
    out = run_crp(model, HeuristicBackend(model), CrpConfig(per_contract_budget=2.5), clock=lambda: next(ticks))
    assert out.status == "budget_exceeded"


def test_no_repair_stops_early():
    out = run(load("ue_negative"))
    assert out.status == "no_repair"
    assert out.history[-1].no_repair


def test_no_reflection_ablation_keeps_draft(crowdsale):
    out = run(crowdsale, max_reflection_rounds=0)
    assert out.status == "exhausted_rounds"
    assert out.reflection_records == []
    assert out.final_sequence == out.history[0].state_before


def test_function_not_found_round_touches_only_that_field(crowdsale, pool):
    seq = attack(crowdsale)
    broken = seq.with_txs((seq[0].replace(function="invset"),) + seq.txs[1:])
    ctx = crowdsale.context()
    record, _ = run_round(1, broken, ctx, HeuristicBackend(crowdsale), CrpConfig(), _Tester(crowdsale, ctx))
    diffs = [(i, f) for i, (a, b) in enumerate(zip(broken, record.state_after))
             for f in ("function", "args", "sender", "amount") if getattr(a, f) != getattr(b, f)]
    assert diffs == [(0, "function")]
    assert len(record.state_after) == len(broken)
    assert record.state_after[0].function == "invest"


def test_apply_folds_in_order(pool):
    tx = Transaction("f", (), pool.users[0], 0)
    seq = TransactionSequence((tx,))
    actions = [AgentAction(AgentId.AMTChecker, (FieldEdit(0, "amount", 1),)),
               AgentAction(AgentId.AMTChecker, (FieldEdit(0, "amount", ETHER),))]
    assert apply(seq, actions, 10)[0].amount == ETHER


def test_determinism(crowdsale):
    a, b = run(crowdsale), run(crowdsale)
    assert [r.to_dict() for r in a.history] == [r.to_dict() for r in b.history]


def test_positives_found_and_negatives_not():
    from conftest import NEGATIVE, POSITIVE
    for cls, name in POSITIVE.items():
        out = run(load(name))
        assert out.found and out.found_class.value == cls, name
    for name in NEGATIVE.values():
        assert not run(load(name)).found, name
