"""Semantic types, byte sizing, slot alignment, and static expression typing.

The slot width is fixed at 32 bytes for the whole engine. Primitives pack
into the current slot when they fit before the next 32-byte boundary;
complex types (arrays, structs, mappings, dynamic arrays, refs, strings)
always start slot-aligned and occupy a multiple of 32 bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

from . import ast
from .errors import SolTypeError, UnsizedType

SLOT = 32  # byte alignment `l`

STORAGE = "storage"
MEMORY = "memory"


# ---------------------------------------------------------------------------
# type grammar
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SemType:
    pass


@dataclass(frozen=True)
class UInt(SemType):
    width: int  # bits, power of two in [8, 256]


@dataclass(frozen=True)
class Int256(SemType):
    pass


@dataclass(frozen=True)
class Bool(SemType):
    pass


@dataclass(frozen=True)
class Address(SemType):
    pass


@dataclass(frozen=True)
class String(SemType):
    pass


@dataclass(frozen=True)
class StaticArray(SemType):
    elem: SemType
    length: int


@dataclass(frozen=True)
class DynArray(SemType):
    elem: SemType


@dataclass(frozen=True)
class Mapping(SemType):
    key: SemType
    value: SemType


@dataclass(frozen=True)
class Struct(SemType):
    name: str
    fields: tuple  # tuple[(field name, SemType), ...]

    def field_names(self):
        return [n for n, _ in self.fields]

    def field_types(self):
        return [t for _, t in self.fields]


@dataclass(frozen=True)
class Contract(SemType):
    name: str


@dataclass(frozen=True)
class Ref(SemType):
    inner: SemType


UINT256 = UInt(256)


def make_ref(t: SemType) -> Ref:
    # Ref never wraps Ref
    return t if isinstance(t, Ref) else Ref(t)


class Located(NamedTuple):
    """A semantic type paired with its location class."""
    sem: SemType
    loc: str  # STORAGE | MEMORY


PRIMITIVES = (UInt, Int256, Bool, Address, Contract)


def is_primitive(t: SemType) -> bool:
    return isinstance(t, PRIMITIVES)


def is_reference_kind(t: SemType) -> bool:
    """Types that, declared locally without `memory`, bind as storage pointers."""
    return isinstance(t, (StaticArray, DynArray, Mapping, Struct))


def type_to_str(t: SemType) -> str:
    if isinstance(t, UInt):
        return f"uint{t.width}"
    if isinstance(t, Int256):
        return "int256"
    if isinstance(t, Bool):
        return "bool"
    if isinstance(t, Address):
        return "address"
    if isinstance(t, String):
        return "string"
    if isinstance(t, StaticArray):
        return f"{type_to_str(t.elem)}[{t.length}]"
    if isinstance(t, DynArray):
        return f"{type_to_str(t.elem)}[]"
    if isinstance(t, Mapping):
        return f"mapping({type_to_str(t.key)}=>{type_to_str(t.value)})"
    if isinstance(t, Struct):
        return f"struct {t.name}"
    if isinstance(t, Contract):
        return f"contract {t.name}"
    if isinstance(t, Ref):
        return f"{type_to_str(t.inner)} ref"
    raise SolTypeError(f"unknown type {t!r}")


def _valid_mapping_key(t: SemType) -> bool:
    if isinstance(t, (UInt, Address)):
        return True
    if isinstance(t, StaticArray):
        return _valid_mapping_key(t.elem)
    return False


def resolve_type(tn: ast.TypeName, structs: dict, contract_names) -> SemType:
    """Resolve a syntactic type name against the enclosing unit's declarations."""
    if isinstance(tn, ast.ElementaryTypeName):
        name = tn.name
        if name.startswith("uint"):
            return UInt(int(name[4:]))
        if name == "int256":
            return Int256()
        if name == "bool":
            return Bool()
        if name == "address":
            return Address()
        if name == "string":
            return String()
        raise SolTypeError(f"unknown elementary type {name}", tn.span)
    if isinstance(tn, ast.ArrayTypeName):
        base = resolve_type(tn.base, structs, contract_names)
        if tn.length is None:
            return DynArray(base)
        if tn.length <= 0:
            raise SolTypeError("static array length must be positive", tn.span)
        return StaticArray(base, tn.length)
    if isinstance(tn, ast.MappingTypeName):
        key = resolve_type(tn.key, structs, contract_names)
        if not _valid_mapping_key(key):
            raise SolTypeError(
                f"{type_to_str(key)} cannot be a mapping key", tn.span)
        value = resolve_type(tn.value, structs, contract_names)
        return Mapping(key, value)
    if isinstance(tn, ast.UserTypeName):
        if tn.name in structs:
            return structs[tn.name]
        if tn.name in contract_names:
            return Contract(tn.name)
        raise SolTypeError(f"unknown type name {tn.name}", tn.span)
    raise SolTypeError(f"unresolvable type {tn!r}", getattr(tn, "span", None))


# ---------------------------------------------------------------------------
# sizing and alignment
# ---------------------------------------------------------------------------

def _check_packable(t: SemType, context: str):
    if isinstance(t, (Contract, String)):
        raise UnsizedType(f"{type_to_str(t)} cannot be packed inside {context}")


def size_of(t: SemType, trace=None) -> int:
    """Byte extent of a type, including padding for complex types."""
    if isinstance(t, UInt):
        if trace:
            trace.rule("Size1")
        return t.width // 8
    if isinstance(t, Int256):
        return 32
    if isinstance(t, Bool):
        return 1
    if isinstance(t, (Address, Contract)):
        # contract-typed variables hold a 20-byte reference, like an address
        return 20
    if isinstance(t, String):
        return SLOT  # base slot only; content lives in a hashed region
    if isinstance(t, StaticArray):
        _check_packable(t.elem, "a static array")
        inner = size_of(t.elem, trace)
        total = _ceil_to_slot(t.length * inner)
        if trace:
            trace.rule("Size2")
        return total
    if isinstance(t, Struct):
        extent = size_packed(0, t.field_types(), trace)
        if trace:
            trace.rule("Size3")
        return _ceil_to_slot(extent)
    if isinstance(t, DynArray):
        if trace:
            trace.rule("Size4")
        return SLOT
    if isinstance(t, Mapping):
        if trace:
            trace.rule("Size5")
        return SLOT
    if isinstance(t, Ref):
        if trace:
            trace.rule("Size7")
        return SLOT
    raise UnsizedType(f"type {t!r} has no size")


def _ceil_to_slot(n: int) -> int:
    return (n + SLOT - 1) // SLOT * SLOT


def _next_boundary(addr: int) -> int:
    return (addr // SLOT + 1) * SLOT


def align_up(addr: int, t: SemType, trace=None) -> int:
    """Smallest admissible address >= addr for a value of type t.

    Primitives stay in place when they fit before the next slot boundary;
    complex types round up to a slot boundary.
    """
    if is_primitive(t):
        if addr + size_of(t) <= _next_boundary(addr):
            return addr
        return _next_boundary(addr)
    return _ceil_to_slot(addr)


def bump(addr: int, t: SemType, trace=None) -> int:
    """align_up then advance by the type's size (the allocation step)."""
    return align_up(addr, t, trace) + size_of(t, trace)


def size_packed(start: int, fields, trace=None) -> int:
    """Fold packing over a field list starting at byte offset `start`.

    Returns the byte extent after placing every field: primitives pack,
    complex fields first align to the slot boundary.
    """
    n = start
    for t in fields:
        if is_primitive(t):
            _check_packable(t, "a struct")
            n = align_up(n, t) + size_of(t)
            if trace:
                trace.rule("SR2")
        else:
            _check_packable(t, "a struct")
            n = _ceil_to_slot(n) + size_of(t, trace)
            if trace:
                trace.rule("SR3")
    if trace:
        trace.rule("SR1")
    return n


def field_offset(struct_t: Struct, k: int, trace=None) -> int:
    """Packed byte offset of field k within its struct."""
    types = struct_t.field_types()
    if k >= len(types):
        raise SolTypeError(f"struct {struct_t.name} has no field index {k}")
    return align_up(size_packed(0, types[:k], trace), types[k])


def field_index(struct_t: Struct, name: str) -> int:
    for i, (fname, _) in enumerate(struct_t.fields):
        if fname == name:
            return i
    raise SolTypeError(f"struct {struct_t.name} has no field {name}")


# ---------------------------------------------------------------------------
# static expression typing
# ---------------------------------------------------------------------------

class TypeEnv:
    """What typing needs from the evaluation context."""

    def binding(self, name: str) -> Optional[Located]:
        raise NotImplementedError

    def function_return(self, name: str) -> Optional[SemType]:
        raise NotImplementedError

    def cast_target(self, name: str) -> Optional[SemType]:
        raise NotImplementedError

    def external_return(self, contract_name: str, fn: str) -> Optional[SemType]:
        raise NotImplementedError

    trace = None


def _unify_arith(a: SemType, b: SemType, span) -> SemType:
    if isinstance(a, UInt) and isinstance(b, UInt):
        return a if a.width >= b.width else b
    if isinstance(a, Int256) and isinstance(b, Int256):
        return a
    if isinstance(a, UInt) and isinstance(b, Int256):
        raise SolTypeError("cannot mix signed and unsigned arithmetic", span)
    if isinstance(a, Int256) and isinstance(b, UInt):
        raise SolTypeError("cannot mix signed and unsigned arithmetic", span)
    raise SolTypeError(
        f"arithmetic on non-numeric types {type_to_str(a)}/{type_to_str(b)}", span)


def _is_int_literal(e) -> bool:
    return isinstance(e, ast.IntLit) or (
        isinstance(e, ast.Unary) and e.op == "-"
        and isinstance(e.operand, ast.IntLit))


def arith_result_type(lt: SemType, rt: SemType, lhs_expr, rhs_expr,
                      span) -> SemType:
    """Operand unification; an integer literal adapts to a signed operand."""
    if isinstance(lt, Int256) and isinstance(rt, UInt) \
            and _is_int_literal(rhs_expr):
        return lt
    if isinstance(rt, Int256) and isinstance(lt, UInt) \
            and _is_int_literal(lhs_expr):
        return rt
    return _unify_arith(lt, rt, span)


def _comparable(a: SemType, b: SemType) -> bool:
    if isinstance(a, (UInt, Int256)) and isinstance(b, (UInt, Int256)):
        return True
    kinds = (Address, Contract)
    if isinstance(a, kinds) and isinstance(b, kinds):
        return True
    if isinstance(a, Bool) and isinstance(b, Bool):
        return True
    if isinstance(a, String) and isinstance(b, String):
        return True
    return False


def type_of(env: TypeEnv, e: ast.Expr) -> Located:
    """Static type with location class; mirrors the typing judgement rules."""
    trace = env.trace
    if isinstance(e, ast.Ident):
        found = env.binding(e.name)
        if found is None:
            from .errors import UnknownIdentifier
            raise UnknownIdentifier(f"unknown identifier {e.name}", e.span)
        if trace:
            trace.rule("Type3")
        return found
    if isinstance(e, ast.IntLit):
        return Located(UINT256, MEMORY)
    if isinstance(e, ast.BoolLit):
        return Located(Bool(), MEMORY)
    if isinstance(e, ast.StringLit):
        return Located(String(), MEMORY)
    if isinstance(e, (ast.MsgSender,)):
        return Located(Address(), MEMORY)
    if isinstance(e, (ast.MsgValue,)):
        return Located(UINT256, MEMORY)
    if isinstance(e, ast.Index):
        base = type_of(env, e.base)
        sem, is_ref = _strip_ref(base.sem)
        if isinstance(sem, (StaticArray, DynArray)):
            if trace:
                trace.rule("Type7" if is_ref else "Type1")
            return Located(sem.elem, base.loc)
        if isinstance(sem, Mapping):
            key_t = type_of(env, e.index).sem
            if not mapping_key_ok(sem.key, key_t, e.index):
                raise SolTypeError(
                    f"mapping key must be {type_to_str(sem.key)}, got "
                    f"{type_to_str(key_t)}", e.span)
            if trace:
                trace.rule("Type6" if is_ref else "Type4")
            return Located(sem.value, base.loc)
        raise SolTypeError(
            f"cannot index a value of type {type_to_str(base.sem)}", e.span)
    if isinstance(e, ast.Member):
        base = type_of(env, e.base)
        sem, is_ref = _strip_ref(base.sem)
        if isinstance(sem, Struct):
            k = field_index(sem, e.name)
            if trace:
                trace.rule("Type8" if is_ref else "Type2")
            return Located(sem.fields[k][1], base.loc)
        raise SolTypeError(
            f"no member {e.name} on type {type_to_str(base.sem)}", e.span)
    if isinstance(e, ast.ArrayLength):
        base = type_of(env, e.base)
        sem, _ = _strip_ref(base.sem)
        if not isinstance(sem, DynArray):
            raise SolTypeError(".length requires a dynamic array", e.span)
        return Located(UINT256, MEMORY)
    if isinstance(e, ast.Call):
        cast = env.cast_target(e.name)
        if cast is not None:
            return Located(cast, MEMORY)
        ret = env.function_return(e.name)
        if ret is None:
            raise SolTypeError(
                f"function {e.name} has no return value", e.span)
        if trace:
            trace.rule("Type5")
        return Located(ret, MEMORY)
    if isinstance(e, ast.ExternalCall):
        target = type_of(env, e.target)
        sem, _ = _strip_ref(target.sem)
        if isinstance(sem, Contract):
            ret = env.external_return(sem.name, e.name)
            if ret is None:
                raise SolTypeError(
                    f"function {e.name} of {sem.name} has no return value", e.span)
            if trace:
                trace.rule("Type5")
            return Located(ret, MEMORY)
        raise SolTypeError(
            "cannot statically type an external call on a plain address", e.span)
    if isinstance(e, ast.Binary):
        lt = type_of(env, e.lhs).sem
        rt = type_of(env, e.rhs).sem
        if e.op in ("&&", "||"):
            if not (isinstance(lt, Bool) and isinstance(rt, Bool)):
                raise SolTypeError(f"{e.op} requires bool operands", e.span)
            return Located(Bool(), MEMORY)
        if e.op in ("==", "!=", "<", "<=", ">", ">="):
            if not _comparable(lt, rt):
                raise SolTypeError(
                    f"cannot compare {type_to_str(lt)} with {type_to_str(rt)}",
                    e.span)
            return Located(Bool(), MEMORY)
        return Located(arith_result_type(lt, rt, e.lhs, e.rhs, e.span), MEMORY)
    if isinstance(e, ast.Unary):
        it = type_of(env, e.operand).sem
        if e.op == "!":
            if not isinstance(it, Bool):
                raise SolTypeError("! requires a bool operand", e.span)
            return Located(Bool(), MEMORY)
        if not isinstance(it, (UInt, Int256)):
            raise SolTypeError("unary - requires a numeric operand", e.span)
        return Located(it, MEMORY)
    raise SolTypeError(f"expression has no type: {e!r}", getattr(e, "span", None))


def _strip_ref(t: SemType):
    if isinstance(t, Ref):
        return t.inner, True
    return t, False


def _mapping_key_compatible(declared: SemType, actual: SemType) -> bool:
    if isinstance(declared, UInt) and isinstance(actual, UInt):
        return True
    if isinstance(declared, Address) and isinstance(actual, (Address, Contract)):
        return True
    if isinstance(declared, StaticArray) and isinstance(actual, StaticArray):
        return declared.length == actual.length and \
            _mapping_key_compatible(declared.elem, actual.elem)
    return False


def mapping_key_ok(declared: SemType, actual: SemType, index_expr) -> bool:
    """Key compatibility; an integer literal may stand for an address key."""
    if _mapping_key_compatible(declared, actual):
        return True
    return isinstance(declared, Address) and isinstance(index_expr, ast.IntLit)


def storage_class(env: TypeEnv, e: ast.Expr) -> str:
    """Which byte store (storage or memory) accesses through `e` touch."""
    return type_of(env, e).loc
