import copy

import pytest
from hypothesis import given, settings, strategies as st

from conftest import FIXTURES, attack, load
from reflectfuzz.contract_vm.chain import (
    EtherIn,
    EtherOut,
    ReenteredCall,
    Reverted,
    StorageWrite,
    TxBegin,
    TxCommitted,
)
from reflectfuzz.contract_vm.interpreter import deploy, execute_sequence, execute_transaction
from reflectfuzz.contract_vm.model import ModelError, load_model, render_model
from reflectfuzz.txmodel import ETHER, Arg, SeedPool, Transaction, TransactionSequence, address

FIXTURE_NAMES = sorted(p.stem for p in FIXTURES.glob("*.json"))


def test_crowdsale_loads(crowdsale):
    assert [f.name for f in crowdsale.functions] == ["invest", "setPhase", "setOwner", "withdraw", "refund"]
    assert crowdsale.deployer_slot == "owner"
    assert "function withdraw()" in render_model(crowdsale)


def test_empty_model_is_valid():
    model = load_model({"name": "Empty", "storage": [], "functions": []})
    assert model.interface() == ()


@pytest.mark.parametrize("doc,cause", [
    ({"name": "X", "storage": [], "functions": [
        {"descriptor": {"name": "f", "params": []}, "body": [{"stmt": "assign", "slot": "ghost", "value": {"const": "1", "type": "uint"}}]}]},
     "ghost"),
    ({"name": "X", "storage": [], "functions": [
        {"descriptor": {"name": "f", "params": []}, "body": [{"stmt": "require", "cond": {"var": "ghost"}}]}]},
     "ghost"),
    ({"name": "X", "storage": [{"name": "a", "type": "uint"}, {"name": "a", "type": "uint"}], "functions": []}, "duplicate"),
    ({"name": "X", "storage": [{"name": "a", "type": "uint"}], "functions": [
        {"descriptor": {"name": "f", "params": []}, "body": [{"stmt": "require", "cond": {"var": "a"}}]}]},
     "bool"),
])
def test_model_errors(doc, cause):
    with pytest.raises(ModelError) as err:
        load_model(doc)
    assert cause in str(err.value)


def test_deploy_crowdsale(crowdsale, pool):
    g = deploy(crowdsale, pool)
    assert g.storage["owner"] == pool.deployer
    assert g.storage["phase"] == 0 and g.storage["raised"] == 0
    assert g.block_number == 1
    assert deploy(crowdsale, pool).canonical() == g.canonical()


def test_deploy_custom_funding(crowdsale):
    custom = SeedPool(address(0xD0), (address(0x101),), (address(0xA11),),
                      funding=((address(0xD0), 5), (address(0x101), 7 * ETHER), (address(0xA11), 0)))
    g = deploy(crowdsale, custom)
    assert g.balances == {address(0xD0): 5, address(0x101): 7 * ETHER, address(0xA11): 0}
    assert sum(g.balances.values()) == 5 + 7 * ETHER


def test_invest_goal(crowdsale, pool):
    g = deploy(crowdsale, pool)
    s, events, signals = execute_transaction(g, Transaction("invest", (), pool.users[0], 10 * ETHER), crowdsale, pool)
    assert signals == []
    assert s.storage["raised"] == 10 * ETHER
    assert EtherIn(pool.users[0], 10 * ETHER) in events


def test_set_owner_by_attacker(crowdsale, pool):
    a = pool.attackers[0]
    g = deploy(crowdsale, pool)
    s, events, signals = execute_transaction(g, Transaction("setOwner", (Arg("address", a),), a, 0), crowdsale, pool)
    assert signals == [] and StorageWrite("owner", pool.deployer, a) in events


def test_withdraw_before_phase_reverts(crowdsale, pool):
    g = deploy(crowdsale, pool)
    before = g.canonical()
    s, events, signals = execute_transaction(g, Transaction("withdraw", (), pool.attackers[0], 0), crowdsale, pool)
    assert [sig.kind for sig in signals] == ["require_failed"]
    assert isinstance(events[-1], Reverted)
    assert s.canonical() == before == g.canonical()


def test_crowdsale_attack_trace(crowdsale, pool):
    trace = execute_sequence(crowdsale, pool, attack(crowdsale))
    outs = [e for e in trace.events if isinstance(e, EtherOut)]
    assert outs[-1] == EtherOut(pool.attackers[0], 10 * ETHER, "send", 0)
    assert isinstance(trace.events[-1], TxCommitted)


def test_empty_sequence(crowdsale, pool):
    trace = execute_sequence(crowdsale, pool, TransactionSequence(()))
    assert not any(isinstance(e, TxBegin) for e in trace.events)
    assert trace.final_state.canonical() == deploy(crowdsale, pool).canonical()


def test_nonce_bookkeeping(crowdsale, pool):
    a = pool.attackers[0]
    tx = Transaction("setOwner", (Arg("address", a),), a, 0)
    trace = execute_sequence(crowdsale, pool, TransactionSequence((tx, tx)))
    assert trace.final_state.nonces[a] == 2


def test_dead_contract_answers_unknown_function(pool):
    model = load("sc_positive")
    kill = Transaction("kill", (), pool.attackers[0], 0)
    trace = execute_sequence(model, pool, TransactionSequence((kill, kill)))
    assert [(s.tx_index, s.kind) for s in trace.raw_signals] == [(1, "unknown_function")]


def test_reentrancy_bound(pool):
    model = load("re_positive")
    trace = execute_sequence(model, pool, attack(model))
    depths = [e.depth for e in trace.events if isinstance(e, ReenteredCall)]
    assert depths and max(depths) <= 2
    shallow = execute_sequence(model, pool, attack(model), reentrancy_bound=1)
    assert max(e.depth for e in shallow.events if isinstance(e, ReenteredCall)) == 1


@pytest.mark.parametrize("name", FIXTURE_NAMES)
def test_trace_determinism_and_isolation(name, pool):
    model = load(name)
    frozen = copy.deepcopy(model)
    seq = attack(model)
    first = execute_sequence(model, pool, seq)
    second = execute_sequence(model, pool, seq)
    assert first.canonical() == second.canonical()
    assert model == frozen
    assert model.storage == frozen.storage


# -- conservation and atomicity over random sequences -------------------------

_pool = SeedPool.default()
_models = {name: load(name) for name in FIXTURE_NAMES}


@st.composite
def model_and_sequence(draw):
    name = draw(st.sampled_from(FIXTURE_NAMES))
    model = _models[name]
    names = [f.name for f in model.functions] + ["ghost"]
    values = {
        "uint": st.sampled_from([0, 1, 2, ETHER, 10 * ETHER, 2**256 - 1]),
        "int": st.sampled_from([0, 1, -1]),
        "bool": st.booleans(),
        "address": st.sampled_from(list(_pool.senders) + [address(0x999)]),
        "bytes": st.just(b""),
        "string": st.just(""),
    }
    txs = []
    for _ in range(draw(st.integers(0, 6))):
        fname = draw(st.sampled_from(names))
        fn = model.function(fname)
        if fn is not None and draw(st.booleans()):
            args = tuple(Arg(t, draw(values[t])) for t in fn.descriptor.param_types)
        else:
            args = tuple(draw(st.lists(st.sampled_from([Arg("uint", 1), Arg("address", _pool.attackers[0])]), max_size=2)))
        sender = draw(st.sampled_from(list(_pool.senders) + [address(0x999)]))
        amount = draw(st.sampled_from(list(_pool.amounts) + [3, 2000 * ETHER]))
        txs.append(Transaction(fname, args, sender, amount))
    return model, TransactionSequence(tuple(txs))


def check_conservation_and_atomicity(model, seq, pool):
    """Returns the number of reverted transactions seen."""
    state = deploy(model, pool)
    total = state.total_ether()
    reverted = 0
    for i, tx in enumerate(seq.txs):
        before = state.canonical()
        state, events, signals = execute_transaction(state, tx, model, pool, index=i)
        assert state.total_ether() == total
        if isinstance(events[-1], Reverted):
            reverted += 1
            assert signals
            assert state.canonical() == before
            assert len(events) == 2
        else:
            assert not signals
    return reverted


@given(model_and_sequence())
@settings(max_examples=1000, deadline=None)
def test_conservation_and_atomicity(case):
    model, seq = case
    check_conservation_and_atomicity(model, seq, _pool)
