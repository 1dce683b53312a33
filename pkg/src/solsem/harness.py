"""Whole-program driving: scenario files, reentrancy detection, layout dumps.

A scenario is a line-oriented script:

    deploy <handle> <Contract> (args...) from <addr> [value <n>]
    tx <handle>.<fn>(args...) from <addr> [value <n>] [gas <n>]
    assert <handle>.<expr> == <literal>

Handles name deployed instances; argument positions accept decimal or hex
integers, true/false, or a handle (which resolves to its address). A
contract named `Main` with a function `main()` can drive a run instead of a
scenario file: the implicit script is `deploy main Main () ...; tx main()`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from . import ast, typesys
from .errors import SolsemError, TxAborted, UnknownIdentifier
from .evaluator import read_value
from .executor import Executor, Tx
from .parser import parse_expression
from .state import World

DEFAULT_SENDER = 0xC0DE


# ---------------------------------------------------------------------------
# scenario files
# ---------------------------------------------------------------------------

@dataclass
class DeployAction:
    handle: str
    contract: str
    args: list
    sender: object
    value: int = 0
    line: int = 0


@dataclass
class TxAction:
    handle: str
    fname: str
    args: list
    sender: object
    value: int = 0
    gas: int = 0
    line: int = 0


@dataclass
class AssertAction:
    handle: str
    expr: ast.Expr
    expr_text: str
    expected: object
    line: int = 0


@dataclass
class Scenario:
    actions: list = field(default_factory=list)


class ScenarioError(SolsemError):
    pass


_DEPLOY_RE = re.compile(
    r"^deploy\s+(\w+)\s+(\w+)\s*\((.*?)\)\s*from\s+(\S+)"
    r"(?:\s+value\s+(\S+))?$")
_TX_RE = re.compile(
    r"^tx\s+(\w+)\.(\w+)\s*\((.*?)\)\s*from\s+(\S+)"
    r"(?:\s+value\s+(\S+))?(?:\s+gas\s+(\S+))?$")
_ASSERT_RE = re.compile(r"^assert\s+(\w+)\.(.+?)\s*==\s*(\S+)$")


def _literal(tok: str, line: int):
    tok = tok.strip()
    if tok in ("true", "false"):
        return tok == "true"
    if re.fullmatch(r"0[xX][0-9a-fA-F]+", tok):
        return int(tok, 16)
    if re.fullmatch(r"-?\d+", tok):
        return int(tok)
    if re.fullmatch(r"\w+", tok):
        return HandleRef(tok)
    raise ScenarioError(f"line {line}: cannot parse literal {tok!r}")


@dataclass(frozen=True)
class HandleRef:
    name: str


def _arg_list(raw: str, line: int) -> list:
    raw = raw.strip()
    if not raw:
        return []
    return [_literal(part, line) for part in raw.split(",")]


def parse_scenario(text: str) -> Scenario:
    actions = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _DEPLOY_RE.match(line)
        if m:
            handle, contract, args, sender, value = m.groups()
            actions.append(DeployAction(
                handle=handle, contract=contract,
                args=_arg_list(args, lineno), sender=_literal(sender, lineno),
                value=int(value, 0) if value else 0, line=lineno))
            continue
        m = _TX_RE.match(line)
        if m:
            handle, fname, args, sender, value, gas = m.groups()
            actions.append(TxAction(
                handle=handle, fname=fname, args=_arg_list(args, lineno),
                sender=_literal(sender, lineno),
                value=int(value, 0) if value else 0,
                gas=int(gas, 0) if gas else 0, line=lineno))
            continue
        m = _ASSERT_RE.match(line)
        if m:
            handle, expr_text, expected = m.groups()
            expr = parse_expression(expr_text)
            actions.append(AssertAction(
                handle=handle, expr=expr, expr_text=expr_text,
                expected=_literal(expected, lineno), line=lineno))
            continue
        raise ScenarioError(f"line {lineno}: cannot parse scenario line {line!r}")
    return Scenario(actions=actions)


@dataclass
class ActionResult:
    description: str
    ok: bool
    detail: str = ""


@dataclass
class ScenarioOutcome:
    handles: dict
    results: list
    halted: bool = False

    @property
    def assertions_ok(self) -> bool:
        return all(r.ok for r in self.results)


def _contains_call(e: ast.Expr) -> bool:
    if isinstance(e, (ast.Call, ast.ExternalCall, ast.LowLevelCallValue, ast.Push)):
        return True
    children = []
    if isinstance(e, ast.Index):
        children = [e.base, e.index]
    elif isinstance(e, (ast.Member, ast.ArrayLength)):
        children = [e.base]
    elif isinstance(e, ast.Binary):
        children = [e.lhs, e.rhs]
    elif isinstance(e, ast.Unary):
        children = [e.operand]
    elif isinstance(e, ast.ArrayLit):
        children = e.elements
    return any(_contains_call(c) for c in children)


def _substitute_handles(world: World, address: int, expr: ast.Expr,
                        handles: dict) -> ast.Expr:
    """Replace free identifiers that name scenario handles (and are not
    bound in the instance) with their deployed addresses."""
    config = world.instance(address).config

    def walk(e):
        if isinstance(e, ast.Ident):
            if e.name in handles and not config.has_name(e.name):
                return ast.IntLit(value=handles[e.name], span=e.span)
            return e
        if isinstance(e, ast.Index):
            return ast.Index(base=walk(e.base), index=walk(e.index), span=e.span)
        if isinstance(e, ast.Member):
            return ast.Member(base=walk(e.base), name=e.name, span=e.span)
        if isinstance(e, ast.ArrayLength):
            return ast.ArrayLength(base=walk(e.base), span=e.span)
        if isinstance(e, ast.Binary):
            return ast.Binary(op=e.op, lhs=walk(e.lhs), rhs=walk(e.rhs),
                              span=e.span)
        if isinstance(e, ast.Unary):
            return ast.Unary(op=e.op, operand=walk(e.operand), span=e.span)
        if isinstance(e, ast.ArrayLit):
            return ast.ArrayLit(elements=[walk(x) for x in e.elements],
                                span=e.span)
        return e

    return walk(expr)


def eval_readonly(world: World, address: int, expr: ast.Expr,
                  handles: Optional[dict] = None):
    """Evaluate a state expression against one instance without tracing or
    state changes; calls are rejected."""
    if _contains_call(expr):
        raise ScenarioError("calls are not allowed in assert expressions")
    if handles:
        expr = _substitute_handles(world, address, expr, handles)
    instance = world.instance(address)
    if isinstance(expr, ast.Ident) and expr.name == "balance" \
            and not instance.config.has_name("balance"):
        return instance.balance
    ex = Executor(world)
    ev = ex.evaluator(address)
    with world.trace.mute():
        return ev.eval_rvalue(expr)


def run_scenario(world: World, scenario: Scenario) -> ScenarioOutcome:
    """Execute actions in order; deploy/tx hard errors halt the run, assert
    failures are recorded and execution continues."""
    ex = Executor(world)
    handles: dict = {}
    results: list = []

    def resolve(v):
        if isinstance(v, HandleRef):
            if v.name not in handles:
                raise ScenarioError(f"unknown handle {v.name}")
            return handles[v.name]
        return v

    for action in scenario.actions:
        if isinstance(action, DeployAction):
            desc = f"deploy {action.handle} = {action.contract}"
            try:
                address = ex.deploy(action.contract,
                                    args=[resolve(a) for a in action.args],
                                    sender=resolve(action.sender),
                                    value=action.value)
            except (TxAborted, SolsemError) as err:
                results.append(ActionResult(desc, False, str(err)))
                return ScenarioOutcome(handles, results, halted=True)
            handles[action.handle] = address
            results.append(ActionResult(desc, True, f"at {address:#x}"))
        elif isinstance(action, TxAction):
            desc = f"tx {action.handle}.{action.fname}"
            try:
                to = handles[action.handle]
            except KeyError:
                results.append(ActionResult(desc, False,
                                            f"unknown handle {action.handle}"))
                return ScenarioOutcome(handles, results, halted=True)
            res = ex.run_transaction(Tx(
                sender=resolve(action.sender), to=to, fname=action.fname,
                args=tuple(resolve(a) for a in action.args),
                value=action.value, gas=action.gas))
            if not res.ok:
                results.append(ActionResult(desc, False, str(res.error)))
                return ScenarioOutcome(handles, results, halted=True)
            detail = "" if res.value is None else f"returned {res.value}"
            results.append(ActionResult(desc, True, detail))
        elif isinstance(action, AssertAction):
            desc = f"assert {action.handle}.{action.expr_text}"
            try:
                address = handles[action.handle]
                actual = eval_readonly(world, address, action.expr, handles)
            except (SolsemError, KeyError) as err:
                results.append(ActionResult(desc, False, str(err)))
                continue
            expected = resolve(action.expected)
            ok = actual == expected
            results.append(ActionResult(
                desc, ok, f"actual {actual!r}" if not ok else ""))
        else:
            raise ScenarioError(f"unknown action {action!r}")
    return ScenarioOutcome(handles, results)


def run_main_contract(world: World, contract: str = "Main",
                      sender: int = DEFAULT_SENDER) -> ScenarioOutcome:
    """Implicit scenario: deploy the driver contract and invoke main()."""
    info = world.contract_info(contract)
    if "main" not in info.functions:
        raise UnknownIdentifier(f"contract {contract} has no function main()")
    scenario = Scenario(actions=[
        DeployAction(handle="main", contract=contract, args=[], sender=sender),
        TxAction(handle="main", fname="main", args=[], sender=sender),
    ])
    return run_scenario(world, scenario)


# ---------------------------------------------------------------------------
# reentrancy detection
# ---------------------------------------------------------------------------

_FRAME_OPEN = ("TX-START", "E-FUN1", "E-FUN2")
_FRAME_CLOSE = ("TX-END", "TX-ABORT", "SKIP2")


@dataclass
class ReentrancyFinding:
    victim: int
    fn: str
    outer_seq: int  # entry of the frame that was still open
    reentrant_seq: int  # entry of the nested frame on the same instance
    path: tuple  # call chain at reentry: ((address, fn), ...)
    writes_after: list  # victim storage writes by the outer frame after reentry

    def to_json(self) -> dict:
        return {
            "victim": hex(self.victim),
            "fn": self.fn,
            "outerSeq": self.outer_seq,
            "reentrantSeq": self.reentrant_seq,
            "path": [[hex(a), f] for a, f in self.path],
            "writesAfterReentry": [
                {"seq": seq, **w.to_json()} for seq, w in self.writes_after],
        }


class _OpenFrame:
    __slots__ = ("frame", "addr", "fn", "entry_seq")

    def __init__(self, frame, addr, fn, entry_seq):
        self.frame = frame
        self.addr = addr
        self.fn = fn
        self.entry_seq = entry_seq


def detect_reentrancy(events) -> list:
    """Scan a trace for frames entered on an instance that already has an
    open frame, where the outer frame still writes storage afterwards (the
    state-update-after-external-call shape)."""
    stack: list = []
    by_addr: dict = {}
    candidates: list = []  # [outer frame, inner frame info, writes]
    findings: list = []
    for ev in events:
        if ev.rule in _FRAME_OPEN and ev.call is not None:
            fr = _OpenFrame(ev.frame, ev.addr, ev.fn, ev.seq)
            open_same = by_addr.get(ev.addr)
            if open_same:
                outer = open_same[-1]
                candidates.append({
                    "outer": outer,
                    "inner": fr,
                    "path": tuple((f.addr, f.fn) for f in stack) + ((fr.addr, fr.fn),),
                    "writes": [],
                })
            stack.append(fr)
            by_addr.setdefault(ev.addr, []).append(fr)
        elif ev.rule in _FRAME_CLOSE:
            if stack:
                fr = stack.pop()
                frames = by_addr.get(fr.addr)
                if frames and frames[-1] is fr:
                    frames.pop()
        else:
            if not ev.writes or ev.frame is None:
                continue
            for cand in candidates:
                if ev.frame == cand["outer"].frame \
                        and ev.seq > cand["inner"].entry_seq:
                    for w in ev.writes:
                        if w.space == typesys.STORAGE:
                            cand["writes"].append((ev.seq, w))
    for cand in candidates:
        if cand["writes"]:
            findings.append(ReentrancyFinding(
                victim=cand["outer"].addr,
                fn=cand["outer"].fn,
                outer_seq=cand["outer"].entry_seq,
                reentrant_seq=cand["inner"].entry_seq,
                path=cand["path"],
                writes_after=cand["writes"]))
    return findings


# ---------------------------------------------------------------------------
# layout reports
# ---------------------------------------------------------------------------

@dataclass
class LayoutVar:
    name: str
    type_str: str
    byte_addr: int
    slot: int
    offset: int
    size: int
    value: object

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "type": self.type_str,
            "byteAddr": self.byte_addr,
            "slot": self.slot,
            "offset": self.offset,
            "size": self.size,
            "value": _render_value(self.value),
        }


@dataclass
class LayoutReport:
    contract: str
    address: int
    lam: int
    vars: list
    hashed_regions: list

    def to_json(self) -> dict:
        return {
            "contract": self.contract,
            "address": hex(self.address),
            "lambda": self.lam,
            "vars": [v.to_json() for v in self.vars],
            "hashedRegions": self.hashed_regions,
        }


def _render_value(v) -> Optional[str]:
    if v is None:
        return None
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, str):
        return v
    if isinstance(v, list):
        return "[" + ",".join(_render_value(x) or "null" for x in v) + "]"
    if isinstance(v, dict):
        return "{" + ",".join(f"{k}:{_render_value(x) or 'null'}"
                              for k, x in v.items()) + "}"
    return str(v)


def dump_layout(world: World, address: int) -> LayoutReport:
    """Static-variable layout plus hash-derived regions touched so far.

    A pure read of the world: no bytes, names, or regions are modified.
    """
    instance = world.instance(address)
    storage = instance.config.storage
    vars_out = []
    for name, addr in storage.names.items():
        located = storage.types[name]
        sem = located.sem
        size = typesys.size_of(sem)
        value = read_value(world, instance.config, typesys.STORAGE, addr, sem)
        vars_out.append(LayoutVar(
            name=name, type_str=typesys.type_to_str(sem), byte_addr=addr,
            slot=addr // typesys.SLOT, offset=addr % typesys.SLOT,
            size=size, value=value))
    regions = []
    for region in storage.hashed.values():
        entry = {
            "kind": region.kind,
            "baseSlot": region.base_slot,
            "slot": hex(region.slot),
        }
        if region.kind == "mapping":
            entry["key"] = str(region.key)
        else:
            entry["index"] = region.key
        if region.value_type is not None:
            entry["value"] = _render_value(read_value(
                world, instance.config, typesys.STORAGE,
                region.slot * typesys.SLOT, region.value_type))
        regions.append(entry)
    return LayoutReport(contract=instance.contract_name, address=address,
                        lam=storage.lam, vars=vars_out, hashed_regions=regions)
