from dataclasses import replace

import pytest

from conftest import NEGATIVE, POSITIVE, attack, load
from helpers import brute_force_classes
from reflectfuzz.contract_vm.chain import EtherOut, ExecutionTrace
from reflectfuzz.contract_vm.interpreter import deploy, execute_sequence
from reflectfuzz.oracles import (
    SEVERITY,
    VERDICT_ORDER,
    VulnClass,
    can_freeze,
    check_EF,
    check_EL,
    check_RE,
    check_SC,
    run_all,
)
from reflectfuzz.txmodel import ETHER, Transaction, TransactionSequence


def trace_of(name, pool):
    model = load(name)
    return model, execute_sequence(model, pool, attack(model))


@pytest.mark.parametrize("cls", list(POSITIVE))
def test_positive_fires_only_its_class(cls, pool):
    model, trace = trace_of(POSITIVE[cls], pool)
    report = run_all(model, trace, pool)
    assert [c.value for c in report.found] == [cls]
    for c, v in report.verdicts.items():
        assert all(0 <= i < len(trace.events) for i in v.witness)


@pytest.mark.parametrize("cls", list(NEGATIVE))
def test_negative_fires_nothing(cls, pool):
    model, trace = trace_of(NEGATIVE[cls], pool)
    assert not run_all(model, trace, pool).any_found


def test_empty_trace_fires_nothing(crowdsale, pool):
    trace = execute_sequence(crowdsale, pool, TransactionSequence(()))
    report = run_all(crowdsale, trace, pool)
    assert not report.any_found and report.first is None


def test_crowdsale_attack_is_exactly_el(crowdsale, pool):
    trace = execute_sequence(crowdsale, pool, attack(crowdsale))
    report = run_all(crowdsale, trace, pool)
    assert report.found == [VulnClass.EL]
    (w,) = report.verdicts[VulnClass.EL].witness
    assert trace.events[w] == EtherOut(pool.attackers[0], 10 * ETHER, "send", 0)


@pytest.mark.parametrize("name,check,cls", [("el_positive", check_EL, "EL"), ("re_positive", check_RE, "RE")])
def test_removing_witness_flips_verdict(name, check, cls, pool):
    model, trace = trace_of(name, pool)
    verdict = check(trace, pool)
    assert verdict.found
    keep = tuple(e for i, e in enumerate(trace.events) if i not in verdict.witness)
    stripped = ExecutionTrace(keep, trace.final_state, trace.raw_signals, trace.genesis)
    assert not check(stripped, pool).found


def test_refund_fixture_never_flags_el(pool):
    # deposits are paid back in full; no sequence may look like a leak
    model = load("re_negative")
    found = brute_force_classes(model, pool)
    assert "EL" not in found
    assert found == set()


def test_attacker_deposit_then_withdraw_is_not_a_leak(pool):
    model = load("re_negative")
    a = pool.attackers[0]
    seq = TransactionSequence((Transaction("deposit", (), a, 10 * ETHER), Transaction("withdraw", (), a, 0)))
    trace = execute_sequence(model, pool, seq)
    assert any(isinstance(e, EtherOut) for e in trace.events)
    assert not check_EL(trace, pool).found


def test_sc_by_deployer_is_authorized(pool):
    model = load("sc_negative")
    seq = TransactionSequence((Transaction("kill", (), pool.deployer, 0),))
    trace = execute_sequence(model, pool, seq)
    assert not check_SC(trace, pool).found


def test_ef_needs_ether_in(pool):
    model = load("ef_positive")
    empty = execute_sequence(model, pool, TransactionSequence(()))
    assert can_freeze(model)
    assert not check_EF(model, [], empty).found
    deposited = execute_sequence(model, pool, attack(model))
    assert check_EF(model, [], deposited).found
    # confirmed from campaign history alone, with an empty witness
    verdict = check_EF(model, [deposited], empty)
    assert verdict.found and verdict.witness == ()


def test_ef_not_for_crowdsale(crowdsale, pool):
    trace = execute_sequence(crowdsale, pool, attack(crowdsale))
    assert not can_freeze(crowdsale)
    assert not check_EF(crowdsale, [trace], trace).found


def test_ef_not_without_payable(pool):
    model = load("el_positive")
    assert not can_freeze(model)


def test_verdict_order_and_severity():
    assert [c.value for c in VERDICT_ORDER] == ["EL", "SC", "RE", "UD", "UE", "BD", "TO", "EF"]
    assert {c.value for c, s in SEVERITY.items() if s == "High"} == {"EL", "SC", "RE", "UD"}
    assert {c.value for c, s in SEVERITY.items() if s == "Medium"} == {"BD", "EF", "UE", "TO"}


def test_run_all_is_pure(crowdsale, pool):
    trace = execute_sequence(crowdsale, pool, attack(crowdsale))
    assert run_all(crowdsale, trace, pool) == run_all(crowdsale, trace, pool)
    assert trace.final_state.canonical() == execute_sequence(crowdsale, pool, attack(crowdsale)).final_state.canonical()
