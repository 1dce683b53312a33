"""Expression evaluation: L-values (addresses) and R-values (decoded values).

Identifiers resolve through the scope stack with memory shadowing storage;
the byte store an access touches is selected by the expression's location
class, not by which name space resolved it. Local reference variables bind
directly to the address they alias, so the pointer value of a ref-typed
expression is its binding.

Dynamic-array and mapping addresses are hash-derived at slot granularity:
element i of an array based at slot p lives at slot keccak256(bytes32(p))+i,
and key k of a mapping based at slot p lives at slot
keccak256(bytes32(p) || bytes32(k)). The concatenation order puts the base
slot first by default; `evm_hash_order` flips it for differential runs
against real-chain layouts.
"""

from __future__ import annotations

from typing import NamedTuple, Optional

from . import ast, typesys
from .errors import (
    DivisionByZero, IndexOutOfBounds, SolTypeError, SolsemError,
    UnknownIdentifier,
)
from .keccak import keccak256_int
from .state import (
    HashedRegion, decode_value, encode_key32, encode_value,
)
from .trace import Write

_CAST_TARGETS = {
    "uint": typesys.UInt(256), "uint8": typesys.UInt(8),
    "uint16": typesys.UInt(16), "uint32": typesys.UInt(32),
    "uint64": typesys.UInt(64), "uint128": typesys.UInt(128),
    "uint256": typesys.UInt(256), "int": typesys.Int256(),
    "int256": typesys.Int256(), "address": typesys.Address(),
}


def slot_of_dyn(p: int, i: int) -> int:
    """Slot of element i of a dynamic array whose base slot is p."""
    return keccak256_int(p.to_bytes(32, "big")) + i


def slot_of_map(p: int, key32: bytes, evm_hash_order: bool = False) -> int:
    """Slot of the value under `key32` in a mapping whose base slot is p."""
    base32 = p.to_bytes(32, "big")
    data = key32 + base32 if evm_hash_order else base32 + key32
    return keccak256_int(data)


def _slot_stride(elem: typesys.SemType) -> int:
    """Slots consumed per element inside a hashed region (at least one)."""
    return max(1, typesys.size_of(elem) // typesys.SLOT)


def apply_binop(op: str, lhs, rhs, t: typesys.SemType):
    """Arithmetic and comparison at type t; unsigned ops wrap modulo 2^w."""
    if op in ("==", "!="):
        eq = lhs == rhs
        return eq if op == "==" else not eq
    if op in ("<", "<=", ">", ">="):
        return {"<": lhs < rhs, "<=": lhs <= rhs,
                ">": lhs > rhs, ">=": lhs >= rhs}[op]
    if isinstance(t, typesys.UInt):
        mod = 1 << t.width
        if op == "+":
            return (lhs + rhs) % mod
        if op == "-":
            return (lhs - rhs) % mod
        if op == "*":
            return (lhs * rhs) % mod
        if op in ("/", "%"):
            if rhs == 0:
                raise DivisionByZero(f"{op} by zero")
            return (lhs // rhs) % mod if op == "/" else (lhs % rhs)
    if isinstance(t, typesys.Int256):
        if op in ("/", "%") and rhs == 0:
            raise DivisionByZero(f"{op} by zero")
        if op == "+":
            raw = lhs + rhs
        elif op == "-":
            raw = lhs - rhs
        elif op == "*":
            raw = lhs * rhs
        elif op == "/":
            raw = abs(lhs) // abs(rhs) * (1 if (lhs < 0) == (rhs < 0) else -1)
        else:
            raw = lhs - (abs(lhs) // abs(rhs) * (1 if (lhs < 0) == (rhs < 0)
                                                 else -1)) * rhs
        return (raw + (1 << 255)) % (1 << 256) - (1 << 255)
    raise SolTypeError(f"operator {op} not defined at {typesys.type_to_str(t)}")


class LValue(NamedTuple):
    addr: int
    located: typesys.Located


class Evaluator(typesys.TypeEnv):
    """Evaluation within one contract instance; calls delegate to the executor."""

    def __init__(self, executor, address: int):
        self.executor = executor
        self.world = executor.world
        self.address = address

    @property
    def config(self):
        return self.world.instance(self.address).config

    @property
    def info(self):
        return self.world.contract_info(
            self.world.instance(self.address).contract_name)

    @property
    def trace(self):
        return self.world.trace

    # -- TypeEnv ---------------------------------------------------------------

    def binding(self, name: str) -> Optional[typesys.Located]:
        try:
            return self.config.lookup(name).located
        except UnknownIdentifier:
            return None

    def function_return(self, name: str) -> Optional[typesys.SemType]:
        fn = self.info.functions.get(name)
        if fn is None or fn.ret is None:
            return None
        return fn.ret[1]

    def cast_target(self, name: str) -> Optional[typesys.SemType]:
        if name in self.info.functions:
            return None  # a local function wins over a cast
        if name in _CAST_TARGETS:
            return _CAST_TARGETS[name]
        if name in self.world.registry:
            return typesys.Contract(name)
        return None

    def external_return(self, contract_name: str, fn: str):
        info = self.world.registry.get(contract_name)
        if info is None:
            return None
        f = info.functions.get(fn)
        return f.ret[1] if f is not None and f.ret is not None else None

    def type_of(self, e: ast.Expr) -> typesys.Located:
        return typesys.type_of(self, e)

    # -- L-values ---------------------------------------------------------------

    def eval_lvalue(self, e: ast.Expr) -> LValue:
        if isinstance(e, ast.Ident):
            b = self.config.lookup(e.name)
            self.trace.rule("E-ID2" if b.space == typesys.MEMORY else "E-ID1")
            return LValue(b.addr, b.located)
        if isinstance(e, ast.Index):
            return self._index_lvalue(e)
        if isinstance(e, ast.Member):
            return self._member_lvalue(e)
        raise SolTypeError(f"expression is not addressable", getattr(e, "span", None))

    def _base_address(self, base: ast.Expr, is_ref: bool, rule: str) -> int:
        """Base address for an indexed/member access; ref bases dereference
        the pointer binding (their R-value is the address they alias)."""
        if is_ref:
            if isinstance(base, ast.Ident):
                b = self.config.lookup(base.name)
                self.trace.rule("E-ID2" if b.space == typesys.MEMORY else "E-ID1")
                typesys.size_of(typesys.Ref(typesys.UINT256), self.trace)
                addr = b.addr
            else:
                addr = self.eval_lvalue(base).addr
        else:
            addr = self.eval_lvalue(base).addr
        self.trace.rule(rule)
        return addr

    def _index_lvalue(self, e: ast.Index) -> LValue:
        base_t = self.type_of(e.base)
        sem, is_ref = typesys._strip_ref(base_t.sem)
        if isinstance(sem, typesys.StaticArray):
            self.trace.rule("Type7" if is_ref else "Type1")
            i = self._numeric_index(e.index)
            addr_b = self._base_address(e.base, is_ref,
                                        "E-ARRAY-REF" if is_ref else "E-ARRAY")
            if i >= sem.length:
                raise IndexOutOfBounds(
                    f"index {i} out of bounds for {typesys.type_to_str(sem)}",
                    e.span)
            addr = addr_b + i * typesys.size_of(sem.elem, self.trace)
            return LValue(addr, typesys.Located(sem.elem, base_t.loc))
        if isinstance(sem, typesys.DynArray):
            self.trace.rule("Type7" if is_ref else "Type1")
            i = self._numeric_index(e.index)
            addr_b = self._base_address(e.base, is_ref,
                                        "E-D-ARRAY-ref" if is_ref else "E-D-ARRAY")
            length = decode_value(
                self.config.read_bytes(base_t.loc, addr_b, typesys.SLOT),
                typesys.UINT256)
            if i > length - 1:
                raise IndexOutOfBounds(
                    f"index {i} out of bounds for dynamic array of length "
                    f"{length}", e.span)
            p = addr_b // typesys.SLOT
            slot = slot_of_dyn(p, i * _slot_stride(sem.elem))
            self.config.storage.record_hashed(HashedRegion(
                slot=slot, kind="dynarray", base_slot=p, key=i,
                value_type=sem.elem))
            return LValue(slot * typesys.SLOT,
                          typesys.Located(sem.elem, base_t.loc))
        if isinstance(sem, typesys.Mapping):
            self.trace.rule("Type6" if is_ref else "Type4")
            key = self.eval_rvalue(e.index)
            key_t = self.type_of(e.index).sem
            if not typesys.mapping_key_ok(sem.key, key_t, e.index):
                raise SolTypeError(
                    f"mapping key must be {typesys.type_to_str(sem.key)}",
                    e.span)
            key32 = encode_key32(key, sem.key)
            addr_b = self._base_address(e.base, is_ref,
                                        "E-MAPPING-REF" if is_ref else "E-MAPPING")
            p = addr_b // typesys.SLOT
            slot = slot_of_map(p, key32, self.world.options.evm_hash_order)
            self.config.storage.record_hashed(HashedRegion(
                slot=slot, kind="mapping", base_slot=p, key=key,
                value_type=sem.value))
            return LValue(slot * typesys.SLOT,
                          typesys.Located(sem.value, base_t.loc))
        raise SolTypeError(
            f"cannot index a value of type {typesys.type_to_str(base_t.sem)}",
            e.span)

    def _member_lvalue(self, e: ast.Member) -> LValue:
        base_t = self.type_of(e.base)
        sem, is_ref = typesys._strip_ref(base_t.sem)
        if not isinstance(sem, typesys.Struct):
            raise SolTypeError(
                f"no member {e.name} on {typesys.type_to_str(base_t.sem)}", e.span)
        self.trace.rule("Type8" if is_ref else "Type2")
        k = typesys.field_index(sem, e.name)
        addr_b = self._base_address(e.base, is_ref,
                                    "E-STRUCT-ref" if is_ref else "E-STRUCT")
        offset = typesys.field_offset(sem, k, self.trace)
        return LValue(addr_b + offset,
                      typesys.Located(sem.fields[k][1], base_t.loc))

    def _numeric_index(self, e: ast.Expr) -> int:
        t = self.type_of(e).sem
        if not isinstance(t, (typesys.UInt, typesys.Int256)):
            raise SolTypeError("array index must be an integer",
                               getattr(e, "span", None))
        i = self.eval_rvalue(e)
        if i < 0:
            raise IndexOutOfBounds(f"negative index {i}", getattr(e, "span", None))
        return i

    # -- R-values ---------------------------------------------------------------

    def eval_rvalue(self, e: ast.Expr):
        if isinstance(e, ast.IntLit):
            return e.value
        if isinstance(e, ast.BoolLit):
            return e.value
        if isinstance(e, ast.StringLit):
            return e.value
        if isinstance(e, ast.ArrayLit):
            return [self.eval_rvalue(x) for x in e.elements]
        if isinstance(e, ast.MsgSender):
            return self._msg().sender
        if isinstance(e, ast.MsgValue):
            return self._msg().value
        if isinstance(e, ast.Unary):
            return self._unary(e)
        if isinstance(e, ast.Binary):
            return self._binary(e)
        if isinstance(e, ast.ArrayLength):
            return self._array_length(e)
        if isinstance(e, ast.Call):
            return self._call_rvalue(e)
        if isinstance(e, ast.ExternalCall):
            return self.executor.eval_external_call(self.address, e,
                                                    expression=True)
        if isinstance(e, (ast.Ident, ast.Index, ast.Member)):
            located = self.type_of(e)
            if isinstance(located.sem, typesys.Ref):
                # the pointer value of a ref binding is the address it aliases
                lv = self.eval_lvalue(e)
                typesys.size_of(located.sem, self.trace)
                return lv.addr
            lv = self.eval_lvalue(e)
            self.trace.rule("E-RV")
            return self.read_value(lv.located.loc, lv.addr, lv.located.sem)
        raise SolTypeError(f"cannot evaluate {e!r}", getattr(e, "span", None))

    def _msg(self):
        if self.world.msg is None:
            raise SolsemError("no transaction context (msg) is active")
        return self.world.msg

    def _unary(self, e: ast.Unary):
        t = self.type_of(e.operand).sem
        v = self.eval_rvalue(e.operand)
        if e.op == "!":
            if not isinstance(t, typesys.Bool):
                raise SolTypeError("! requires a bool operand", e.span)
            return not v
        if isinstance(e.operand, ast.IntLit):
            return -v  # a signed literal, not modular negation
        if isinstance(t, typesys.UInt):
            return (-v) % (1 << t.width)
        if isinstance(t, typesys.Int256):
            return apply_binop("-", 0, v, t)
        raise SolTypeError("unary - requires a numeric operand", e.span)

    def _binary(self, e: ast.Binary):
        if e.op in ("&&", "||"):
            lt = self.type_of(e.lhs).sem
            if not isinstance(lt, typesys.Bool):
                raise SolTypeError(f"{e.op} requires bool operands", e.span)
            left = self.eval_rvalue(e.lhs)
            if e.op == "&&" and not left:
                return False
            if e.op == "||" and left:
                return True
            rt = self.type_of(e.rhs).sem
            if not isinstance(rt, typesys.Bool):
                raise SolTypeError(f"{e.op} requires bool operands", e.span)
            return bool(self.eval_rvalue(e.rhs))
        lt = self.type_of(e.lhs).sem
        rt = self.type_of(e.rhs).sem
        lhs = self.eval_rvalue(e.lhs)
        rhs = self.eval_rvalue(e.rhs)
        if e.op in ("==", "!=", "<", "<=", ">", ">="):
            if not typesys._comparable(lt, rt):
                raise SolTypeError(
                    f"cannot compare {typesys.type_to_str(lt)} with "
                    f"{typesys.type_to_str(rt)}", e.span)
            return apply_binop(e.op, lhs, rhs, lt)
        t = typesys.arith_result_type(lt, rt, e.lhs, e.rhs, e.span)
        return apply_binop(e.op, lhs, rhs, t)

    def _array_length(self, e: ast.ArrayLength):
        base_t = self.type_of(e.base)
        sem, is_ref = typesys._strip_ref(base_t.sem)
        if not isinstance(sem, typesys.DynArray):
            raise SolTypeError(".length requires a dynamic array", e.span)
        addr_b = self._base_address(e.base, is_ref,
                                    "E-ARRAY-LEN-ref" if is_ref else "E-ARRAY-LEN")
        return decode_value(
            self.config.read_bytes(base_t.loc, addr_b, typesys.SLOT),
            typesys.UINT256)

    def _call_rvalue(self, e: ast.Call):
        cast = self.cast_target(e.name)
        if cast is not None:
            if len(e.args) != 1:
                raise SolTypeError(f"cast to {e.name} takes one argument", e.span)
            v = self.eval_rvalue(e.args[0])
            return self._convert(v, cast, e.span)
        value = self.executor.eval_internal_call(self.address, e,
                                                 expression=True)
        ret = self.function_return(e.name)
        if ret is not None:
            self.trace.rule("Type5")
            typesys.size_of(ret, None)
            self.trace.rule("Size6")
        return value

    def _convert(self, v, t: typesys.SemType, span):
        if isinstance(t, typesys.UInt):
            return int(v) % (1 << t.width)
        if isinstance(t, (typesys.Address, typesys.Contract)):
            return int(v) % (1 << 160)
        if isinstance(t, typesys.Int256):
            return (int(v) + (1 << 255)) % (1 << 256) - (1 << 255)
        raise SolTypeError(f"unsupported cast to {typesys.type_to_str(t)}", span)

    # -- typed reads and writes ---------------------------------------------------

    def read_value(self, loc: str, addr: int, sem: typesys.SemType):
        return read_value(self.world, self.config, loc, addr, sem)

    def write_value(self, loc: str, addr: int, sem: typesys.SemType, v) -> list:
        """Encode and store `v` at addr; returns the Write records."""
        if isinstance(sem, typesys.String):
            return self._write_string(loc, addr, v)
        if isinstance(sem, typesys.StaticArray):
            if not isinstance(v, (list, tuple)) or len(v) != sem.length:
                raise SolTypeError(
                    f"expected {sem.length} elements for "
                    f"{typesys.type_to_str(sem)}")
            writes = []
            stride = typesys.size_of(sem.elem)
            for i, x in enumerate(v):
                writes += self.write_value(loc, addr + i * stride, sem.elem, x)
            return writes
        if isinstance(sem, (typesys.DynArray, typesys.Mapping, typesys.Struct,
                            typesys.Ref)):
            raise SolTypeError(
                f"cannot assign a whole {typesys.type_to_str(sem)}")
        data = encode_value(v, sem)
        self.config.write_bytes(loc, addr, data)
        return [Write(space=loc, at=addr, data=data)]

    def _write_string(self, loc: str, addr: int, v) -> list:
        if not isinstance(v, str):
            raise SolTypeError("expected a string value")
        raw = v.encode("utf-8")
        writes = [Write(space=loc, at=addr,
                        data=len(raw).to_bytes(typesys.SLOT, "big"))]
        self.config.write_bytes(loc, addr, writes[0].data)
        if loc == typesys.MEMORY:
            self.config.write_bytes(loc, addr + typesys.SLOT, raw)
            if raw:
                writes.append(Write(space=loc, at=addr + typesys.SLOT, data=raw))
            return writes
        p = addr // typesys.SLOT
        h = slot_of_dyn(p, 0)
        for j in range(0, len(raw), typesys.SLOT):
            chunk = raw[j:j + typesys.SLOT].ljust(typesys.SLOT, b"\x00")
            at = (h + j // typesys.SLOT) * typesys.SLOT
            self.config.write_bytes(loc, at, chunk)
            writes.append(Write(space=loc, at=at, data=chunk))
            self.config.storage.record_hashed(HashedRegion(
                slot=h + j // typesys.SLOT, kind="string", base_slot=p,
                key=j // typesys.SLOT))
        return writes


def read_value(world, config, loc: str, addr: int, sem: typesys.SemType):
    """Decode the value of type `sem` stored at addr (composites nest)."""
    if isinstance(sem, typesys.StaticArray):
        stride = typesys.size_of(sem.elem)
        return [read_value(world, config, loc, addr + i * stride, sem.elem)
                for i in range(sem.length)]
    if isinstance(sem, typesys.Struct):
        return {name: read_value(world, config, loc,
                                 addr + typesys.field_offset(sem, k), t)
                for k, (name, t) in enumerate(sem.fields)}
    if isinstance(sem, typesys.DynArray):
        length = decode_value(config.read_bytes(loc, addr, typesys.SLOT),
                              typesys.UINT256)
        p = addr // typesys.SLOT
        stride = _slot_stride(sem.elem)
        return [read_value(world, config, loc,
                           slot_of_dyn(p, i * stride) * typesys.SLOT, sem.elem)
                for i in range(length)]
    if isinstance(sem, typesys.Mapping):
        return None  # not enumerable
    if isinstance(sem, typesys.String):
        length = decode_value(config.read_bytes(loc, addr, typesys.SLOT),
                              typesys.UINT256)
        if loc == typesys.MEMORY:
            raw = config.read_bytes(loc, addr + typesys.SLOT, length)
        else:
            p = addr // typesys.SLOT
            h = slot_of_dyn(p, 0)
            raw = b"".join(
                config.read_bytes(loc, (h + j) * typesys.SLOT, typesys.SLOT)
                for j in range((length + typesys.SLOT - 1) // typesys.SLOT)
            )[:length]
        return raw.decode("utf-8", errors="replace")
    if isinstance(sem, typesys.Ref):
        raise SolTypeError("a ref has no stored value; read through it instead")
    return decode_value(config.read_bytes(loc, addr, typesys.size_of(sem)), sem)
