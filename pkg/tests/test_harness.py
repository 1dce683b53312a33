"""Scenario running, reentrancy detection, and layout reports."""

import pytest

from solsem.errors import SolsemError
from solsem.executor import Executor, Tx
from solsem.harness import (
    Scenario, detect_reentrancy, dump_layout, parse_scenario,
    run_main_contract, run_scenario,
)
from solsem.state import World

from conftest import deploy, make_world, scenario_source, world_from_source


def _run(contract_file, scenario_file):
    world = make_world(contract_file)
    outcome = run_scenario(world, parse_scenario(scenario_source(scenario_file)))
    return world, outcome


# -- scenarios ----------------------------------------------------------------

def test_dao_scenario_drains_the_bank():
    world, outcome = _run("dao.sol", "dao.scn")
    assert not outcome.halted
    assert outcome.assertions_ok, [r for r in outcome.results if not r.ok]
    bank = outcome.handles["bank"]
    attack = outcome.handles["attack"]
    assert world.instance(bank).balance == 0
    assert world.instance(attack).balance == 12


def test_empty_scenario_changes_nothing():
    world = make_world("coin.sol")
    outcome = run_scenario(world, parse_scenario(scenario_source("empty.scn")))
    assert outcome.results == []
    assert world.instances == {}
    assert len(world.trace.events) == 0


def test_coin_scenario_matches_hand_simulation():
    # hand-simulated: mint 5 to B0B, B0B sends 3 to CA7 -> 2 and 3
    world, outcome = _run("coin.sol", "coin.scn")
    assert outcome.assertions_ok
    coin = outcome.handles["coin"]
    ev = Executor(world).evaluator(coin)
    from solsem.parser import parse_expression
    with world.trace.mute():
        assert ev.eval_rvalue(parse_expression("balances[0xB0B]")) == 2
        assert ev.eval_rvalue(parse_expression("balances[0xCA7]")) == 3


def test_scenario_halts_on_hard_error():
    world = make_world("coin.sol")
    scn = parse_scenario("""
    deploy coin Coin () from 0xA
    tx coin.nosuch() from 0xA
    assert coin.balances[0xB] == 0
    """)
    outcome = run_scenario(world, scn)
    assert outcome.halted
    assert len(outcome.results) == 2  # the assert after the failure never ran
    assert not outcome.results[-1].ok


def test_assert_failures_are_recorded_not_fatal():
    world = make_world("coin.sol")
    scn = parse_scenario("""
    deploy coin Coin () from 0xA
    assert coin.balances[0xB] == 999
    assert coin.balances[0xB] == 0
    """)
    outcome = run_scenario(world, scn)
    assert not outcome.halted
    assert [r.ok for r in outcome.results] == [True, False, True]


def test_assert_rejects_calls():
    world = make_world("dao.sol")
    scn = parse_scenario("""
    deploy bank Bank () from 0xA
    assert bank.getUserBalance(0xB) == 0
    """)
    outcome = run_scenario(world, scn)
    assert not outcome.results[-1].ok
    assert "calls are not allowed" in outcome.results[-1].detail


def test_main_contract_mode():
    world = make_world("coverage.sol")
    outcome = run_main_contract(world)
    assert outcome.assertions_ok
    assert not outcome.halted
    main = outcome.handles["main"]
    ev = Executor(world).evaluator(main)
    from solsem.parser import parse_expression
    with world.trace.mute():
        assert ev.eval_rvalue(parse_expression("m2[7]")) == 4
        assert ev.eval_rvalue(parse_expression("m2[8]")) == 5
        assert ev.eval_rvalue(parse_expression("arr[1]")) == 5
        assert ev.eval_rvalue(parse_expression("arr[2]")) == 6
        assert ev.eval_rvalue(parse_expression("da[0]")) == 41
        assert ev.eval_rvalue(parse_expression("da[1]")) == 42
        assert ev.eval_rvalue(parse_expression("s.x")) == 3
        assert ev.eval_rvalue(parse_expression("s.y")) == 4
        assert ev.eval_rvalue(parse_expression("blob.big")) == 9
        assert ev.eval_rvalue(parse_expression("blob.lanes[2]")) == 11
        assert ev.eval_rvalue(parse_expression("flag")) is True


def test_scenario_parse_errors_are_located():
    with pytest.raises(SolsemError) as exc:
        parse_scenario("deploy ???")
    assert "line 1" in str(exc.value)


# -- reentrancy detection -----------------------------------------------------------

def test_dao_detected_with_single_victim():
    world, outcome = _run("dao.sol", "dao.scn")
    findings = detect_reentrancy(world.trace.events)
    assert len(findings) >= 1
    victims = {(f.victim, f.fn) for f in findings}
    assert victims == {(outcome.handles["bank"], "withdraw")}
    f = findings[0]
    assert f.outer_seq < f.reentrant_seq
    assert f.writes_after
    assert f.path[0][1] == "withdrawBalance"


def test_fixed_bank_is_clean():
    world, outcome = _run("dao_fixed.sol", "dao_fixed.scn")
    assert outcome.assertions_ok
    findings = detect_reentrancy(world.trace.events)
    assert findings == []
    # drains at most the attacker's own 2 wei
    assert world.instance(outcome.handles["bank"]).balance == 10


def test_trace_without_external_calls_has_no_findings():
    world = make_world("coin.sol")
    outcome = run_scenario(world, parse_scenario(scenario_source("coin.scn")))
    assert outcome.assertions_ok
    assert detect_reentrancy(world.trace.events) == []


def test_depth_one_variant_detected():
    world = make_world("dao_depth1.sol")
    scn = parse_scenario("""
    deploy bank Bank () from 0xA value 10
    deploy attack Attack (bank) from 0xB value 2
    tx attack.addToBalance() from 0xB
    tx attack.withdrawBalance() from 0xB
    """)
    outcome = run_scenario(world, scn)
    assert not outcome.halted
    findings = detect_reentrancy(world.trace.events)
    assert len(findings) >= 1
    assert all(f.fn == "withdraw" for f in findings)
    # one reentrant level: 2 wei stolen on top of the attacker's own 2
    assert world.instance(outcome.handles["bank"]).balance == 8
    assert world.instance(outcome.handles["attack"]).balance == 4


def test_proxy_variant_detected_even_without_theft():
    world = make_world("dao_proxy.sol")
    scn = parse_scenario("""
    deploy bank Bank () from 0xA value 10
    deploy proxy Proxy (bank) from 0xB
    deploy attack Attack (bank, proxy) from 0xB value 2
    tx attack.addToBalance() from 0xB
    tx attack.withdrawBalance() from 0xB
    """)
    outcome = run_scenario(world, scn)
    assert not outcome.halted
    findings = detect_reentrancy(world.trace.events)
    assert len(findings) >= 1
    bank = outcome.handles["bank"]
    assert {(f.victim, f.fn) for f in findings} == {(bank, "withdraw")}
    # the proxy has no credit, so only the attacker's own deposit moved
    assert world.instance(bank).balance == 10


def test_detector_ignores_sibling_calls_to_same_instance():
    # two sequential (not nested) calls into the same contract are benign
    world = world_from_source("""
    contract Emitter {
      Sink target;
      function Emitter(address a) { target = Sink(a); }
      function go() public { target.hit(); target.hit(); }
    }
    contract Sink {
      uint hits;
      function hit() public { hits = hits + 1; }
    }""")
    ex = Executor(world)
    sink = ex.deploy("Sink")
    emitter = ex.deploy("Emitter", args=(sink,))
    assert ex.run_transaction(Tx(sender=1, to=emitter, fname="go")).ok
    assert detect_reentrancy(world.trace.events) == []


# -- layout reports -----------------------------------------------------------------

def test_layout_of_test_contract():
    world = make_world("test.sol")
    address = deploy(world, "Test")
    rep = dump_layout(world, address)
    assert rep.lam == 64
    by_name = {v.name: v for v in rep.vars}
    assert (by_name["a"].slot, by_name["a"].offset, by_name["a"].size) == (0, 0, 16)
    assert (by_name["b"].slot, by_name["b"].offset, by_name["b"].size) == (1, 0, 32)


def test_layout_of_test2_spans_four_slots():
    world = make_world("test2.sol")
    address = deploy(world, "Test2")
    rep = dump_layout(world, address)
    assert rep.lam == 160
    b = {v.name: v for v in rep.vars}["b"]
    assert b.byte_addr == 32 and b.size == 128
    assert b.slot == 1 and (b.byte_addr + b.size) // 32 - 1 == 4
    assert b.value == [[1, 2, 3], [4, 5, 6]]


def test_layout_of_empty_contract():
    world = world_from_source("contract Empty { function f() public { } }")
    address = deploy(world, "Empty")
    rep = dump_layout(world, address)
    assert rep.vars == [] and rep.lam == 0 and rep.hashed_regions == []


def test_layout_includes_hashed_regions():
    world = make_world("test4.sol")
    address = deploy(world, "Test4")
    Executor(world).run_transaction(Tx(sender=1, to=address, fname="foo4"))
    rep = dump_layout(world, address)
    kinds = {r["kind"] for r in rep.hashed_regions}
    assert kinds == {"mapping"}
    keys = {r["key"] for r in rep.hashed_regions}
    assert keys == {"100", "200"}
    values = {r["value"] for r in rep.hashed_regions}
    assert values == {"10", "11"}


def test_layout_is_pure():
    world = make_world("test4.sol")
    address = deploy(world, "Test4")
    Executor(world).run_transaction(Tx(sender=1, to=address, fname="foo4"))
    before = world.storage_fingerprint()
    regions_before = dict(world.instance(address).config.storage.hashed)
    events_before = len(world.trace.events)
    dump_layout(world, address)
    assert world.storage_fingerprint() == before
    assert world.instance(address).config.storage.hashed == regions_before
    assert len(world.trace.events) == events_before


# -- determinism ----------------------------------------------------------------------

def test_identical_scenarios_yield_identical_traces():
    def trace_text():
        world, _ = _run("dao.sol", "dao.scn")
        return world.trace.to_ndjson()
    assert trace_text() == trace_text()


def test_external_frames_open_with_a_call_marker():
    # the E-FUN1/E-FUN2 event precedes every event of its callee frame
    world, _ = _run("dao.sol", "dao.scn")
    first_rule_by_frame = {}
    for e in world.trace.events:
        if e.frame is not None and e.frame not in first_rule_by_frame:
            first_rule_by_frame[e.frame] = e.rule
    assert first_rule_by_frame
    assert set(first_rule_by_frame.values()) <= {"TX-START", "E-FUN1", "E-FUN2"}


def test_handles_resolve_in_sender_and_arg_positions():
    world = make_world("dao.sol")
    scn = parse_scenario("""
    deploy bank Bank () from 0xA value 4
    deploy attack Attack (bank) from 0xB value 2
    # a handle used as the tx sender resolves to the instance address
    tx bank.deposit() from attack value 0
    assert bank.credit[attack] == 0
    """)
    outcome = run_scenario(world, scn)
    assert not outcome.halted
    assert outcome.assertions_ok


def test_two_instances_in_one_world_have_identical_storage():
    world = make_world("test2.sol")
    a1 = deploy(world, "Test2")
    a2 = deploy(world, "Test2")
    s1 = world.instance(a1).config.storage
    s2 = world.instance(a2).config.storage
    assert s1.bytes == s2.bytes
    assert s1.lam == s2.lam
    assert s1.names == s2.names
