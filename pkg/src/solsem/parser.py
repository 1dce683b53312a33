"""Recursive-descent parser for the covered Solidity subset.

Accepts the pre-0.5 dialect the fixtures use (constructors named after the
contract, `function() payable` fallbacks). Constructs outside the subset are
rejected with an `UnsupportedFeature` diagnostic naming the construct rather
than a generic syntax error. `for` and `do-while` are lowered to `while`
during parsing, so the AST only carries the statement forms the semantics
rules consume.
"""

from __future__ import annotations

import re

from . import ast
from .errors import DuplicateDeclaration, SolSyntaxError, SolsemError, UnsupportedFeature
from .lexer import Token, tokenize

_ELEMENTARY = {"address", "bool", "string"}
_UINT_RE = re.compile(r"^uint(\d+)?$")
_INT_RE = re.compile(r"^int(\d+)?$")
_REJECT_TYPE_RE = re.compile(r"^(bytes\d*|byte|fixed\d*x?\d*|ufixed\d*x?\d*)$")
_VALID_UINT_WIDTHS = {8, 16, 32, 64, 128, 256}

_UNSUPPORTED_KEYWORDS = {
    "assembly": "assembly",
    "event": "event",
    "using": "using for",
    "is": "inheritance",
    "continue": "continue",
    "break": "break",
    "throw": "throw",
    "new": "contract creation with new",
    "enum": "enum",
    "emit": "emit",
    "delete": "delete",
    "import": "import",
    "var": "var type inference",
}


def _elementary_name(word: str):
    """Normalized elementary type name, or None if `word` is not one.

    Raises UnsupportedFeature for integer widths outside the covered set and
    for byte/fixed type families.
    """
    if word in _ELEMENTARY:
        return word
    m = _UINT_RE.match(word)
    if m:
        width = int(m.group(1)) if m.group(1) else 256
        if width not in _VALID_UINT_WIDTHS:
            raise UnsupportedFeature(word)
        return f"uint{width}"
    m = _INT_RE.match(word)
    if m:
        width = int(m.group(1)) if m.group(1) else 256
        if width != 256:
            raise UnsupportedFeature(word)
        return "int256"
    if _REJECT_TYPE_RE.match(word):
        raise UnsupportedFeature(word)
    return None


class Parser:
    def __init__(self, tokens: list, allow_post_050: bool = False,
                 allow_hex: bool = False):
        self.tokens = tokens
        self.pos = 0
        self.allow_post_050 = allow_post_050
        self.allow_hex = allow_hex  # scenario expressions accept hex literals
        self.in_modifier = False

    # -- token helpers ------------------------------------------------------

    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def at(self, kind: str, value: str | None = None) -> bool:
        t = self.peek()
        return t.kind == kind and (value is None or t.value == value)

    def at_punct(self, value: str) -> bool:
        return self.at("punct", value)

    def at_kw(self, value: str) -> bool:
        return self.at("keyword", value)

    def advance(self) -> Token:
        t = self.tokens[self.pos]
        if self.pos < len(self.tokens) - 1:
            self.pos += 1
        return t

    def expect(self, kind: str, value: str | None = None) -> Token:
        t = self.peek()
        if t.kind != kind or (value is not None and t.value != value):
            want = value if value is not None else kind
            raise SolSyntaxError(
                f"expected {want!r}, found {t.value or t.kind!r}", t.span,
                expected=(want,))
        return self.advance()

    def _reject_unsupported(self):
        t = self.peek()
        if t.kind == "keyword" and t.value in _UNSUPPORTED_KEYWORDS:
            raise UnsupportedFeature(_UNSUPPORTED_KEYWORDS[t.value], t.span)
        if t.kind == "keyword" and t.value in ("constructor", "fallback") \
                and not self.allow_post_050:
            raise UnsupportedFeature(
                f"{t.value} keyword (post-0.5 dialect; this parser accepts the "
                f"pre-0.5 form)", t.span)
        if t.kind == "hexnumber" and not self.allow_hex:
            raise UnsupportedFeature("hex literal", t.span)

    # -- unit / contract ----------------------------------------------------

    def parse_unit(self) -> ast.SourceUnit:
        contracts = []
        names = set()
        while not self.at("eof"):
            if self.at_kw("pragma"):
                # version pragmas carry no semantics here; skip the directive
                while not self.at_punct(";") and not self.at("eof"):
                    self.advance()
                self.expect("punct", ";")
                continue
            self._reject_unsupported()
            if self.at_kw("contract"):
                c = self.parse_contract()
                if c.name in names:
                    raise DuplicateDeclaration(
                        f"contract {c.name} declared twice", c.span)
                names.add(c.name)
                contracts.append(c)
                continue
            t = self.peek()
            raise SolSyntaxError(
                f"expected contract definition, found {t.value!r}", t.span,
                expected=("contract",))
        return ast.SourceUnit(contracts=contracts)

    def parse_contract(self) -> ast.ContractDef:
        kw = self.expect("keyword", "contract")
        name = self.expect("ident").value
        self._reject_unsupported()  # `is` inheritance clauses
        self.expect("punct", "{")
        contract = ast.ContractDef(name=name, span=kw.span)
        fn_names = set()
        while not self.at_punct("}"):
            self._reject_unsupported()
            if self.at_kw("struct"):
                contract.structs.append(self.parse_struct())
            elif self.at_kw("modifier"):
                contract.modifiers.append(self.parse_modifier())
            elif self.at_kw("function") or (
                    self.allow_post_050
                    and (self.at_kw("constructor") or self.at_kw("fallback"))):
                f = self.parse_function(contract_name=name)
                key = f.name or "()"
                if key in fn_names:
                    raise DuplicateDeclaration(
                        f"function {key} declared twice in {name}"
                        if f.name else f"contract {name} has more than one fallback",
                        f.span)
                fn_names.add(key)
                contract.functions.append(f)
            else:
                contract.state_vars.append(self.parse_state_var())
        self.expect("punct", "}")
        return contract

    def parse_struct(self) -> ast.StructDef:
        kw = self.expect("keyword", "struct")
        name = self.expect("ident").value
        self.expect("punct", "{")
        fields = []
        while not self.at_punct("}"):
            tname = self.parse_type()
            fname = self.expect("ident").value
            self.expect("punct", ";")
            fields.append(ast.Param(type_name=tname, name=fname))
        self.expect("punct", "}")
        return ast.StructDef(name=name, fields=fields, span=kw.span)

    def parse_modifier(self) -> ast.ModifierDef:
        kw = self.expect("keyword", "modifier")
        name = self.expect("ident").value
        if self.at_punct("("):
            self.advance()
            if not self.at_punct(")"):
                raise UnsupportedFeature("modifier parameters", self.peek().span)
            self.expect("punct", ")")
        self.in_modifier = True
        try:
            body = self.parse_block()
        finally:
            self.in_modifier = False
        return ast.ModifierDef(name=name, body=body, span=kw.span)

    def parse_state_var(self) -> ast.StateVarDecl:
        tname = self.parse_type()
        specifiers = []
        while self.peek().kind == "keyword" and self.peek().value in (
                "public", "private", "internal", "constant", "payable"):
            specifiers.append(self.advance().value)
        name_tok = self.expect("ident")
        init = None
        if self.at_punct("="):
            self.advance()
            init = self.parse_expression()
        self.expect("punct", ";")
        return ast.StateVarDecl(type_name=tname, name=name_tok.value, init=init,
                                specifiers=tuple(specifiers), span=name_tok.span)

    def parse_function(self, contract_name: str) -> ast.FunctionDef:
        # post-0.5 dialect spellings, only behind the flag
        forced = None
        if self.allow_post_050 and (self.at_kw("constructor")
                                    or self.at_kw("fallback")):
            forced = self.advance().value
            kw = self.tokens[self.pos - 1]
        else:
            kw = self.expect("keyword", "function")
        name = ""
        if forced == "constructor":
            name = contract_name
        elif forced is None and self.at("ident"):
            name = self.advance().value
        self.expect("punct", "(")
        params = []
        while not self.at_punct(")"):
            if params:
                self.expect("punct", ",")
            ptype = self.parse_type()
            if self.at_kw("memory") or self.at_kw("storage") or self.at_kw("calldata"):
                self.advance()  # parameters always bind in memory
            pname = self.expect("ident")
            params.append(ast.Param(type_name=ptype, name=pname.value, span=pname.span))
        self.expect("punct", ")")

        specifiers = []
        modifiers = []
        returns = None
        while True:
            t = self.peek()
            if t.kind == "keyword" and t.value in (
                    "public", "private", "internal", "external", "payable",
                    "constant", "view", "pure"):
                specifiers.append(self.advance().value)
            elif t.kind == "keyword" and t.value == "returns":
                self.advance()
                self.expect("punct", "(")
                rtype = self.parse_type()
                rname = self.advance().value if self.at("ident") else ""
                if self.at_punct(","):
                    raise UnsupportedFeature(
                        "multiple return values", self.peek().span)
                self.expect("punct", ")")
                returns = ast.Param(type_name=rtype, name=rname)
            elif t.kind == "ident":
                # modifier invocation; only parameterless modifiers are covered
                modifiers.append(self.advance().value)
                if self.at_punct("("):
                    self.advance()
                    if not self.at_punct(")"):
                        raise UnsupportedFeature("modifier arguments", self.peek().span)
                    self.expect("punct", ")")
            else:
                break
        body = self.parse_block()

        is_constructor = name == contract_name
        is_fallback = name == ""
        if is_fallback and (params or returns is not None):
            raise SolSyntaxError("fallback function takes no parameters and "
                                 "returns nothing", kw.span)
        if is_constructor and returns is not None:
            raise SolSyntaxError("constructor cannot declare a return value", kw.span)
        return ast.FunctionDef(
            name=name, params=params, returns=returns, body=body,
            specifiers=tuple(specifiers), modifiers=tuple(modifiers),
            is_constructor=is_constructor, is_fallback=is_fallback, span=kw.span)

    # -- types --------------------------------------------------------------

    def parse_type(self) -> ast.TypeName:
        t = self.peek()
        self._reject_unsupported()
        if t.kind == "keyword" and t.value == "mapping":
            self.advance()
            self.expect("punct", "(")
            key = self.parse_type()
            self.expect("punct", "=>")
            value = self.parse_type()
            self.expect("punct", ")")
            base: ast.TypeName = ast.MappingTypeName(key=key, value=value, span=t.span)
        elif t.kind == "keyword" and t.value == "function":
            raise UnsupportedFeature("function type", t.span)
        elif t.kind == "ident":
            self.advance()
            elem = _elementary_name(t.value)
            if elem is not None:
                base = ast.ElementaryTypeName(name=elem, span=t.span)
            else:
                base = ast.UserTypeName(name=t.value, span=t.span)
        else:
            raise SolSyntaxError(f"expected type, found {t.value or t.kind!r}", t.span,
                                 expected=("type",))
        while self.at_punct("["):
            self.advance()
            length = None
            if not self.at_punct("]"):
                if self.peek().kind == "hexnumber":
                    raise UnsupportedFeature("hex literal", self.peek().span)
                num = self.expect("number")
                length = int(num.value)
            self.expect("punct", "]")
            base = ast.ArrayTypeName(base=base, length=length, span=t.span)
        return base

    def _looks_like_declaration(self) -> bool:
        """Statement-level lookahead: `<Type> <name>` vs an expression."""
        t = self.peek()
        if t.kind == "keyword" and t.value == "mapping":
            return True
        if t.kind != "ident":
            return False
        try:
            if _elementary_name(t.value) is not None:
                return True
        except UnsupportedFeature:
            return True  # let parse_type raise the named diagnostic
        # user type: ident ([num])* ident
        i = self.pos + 1
        while self.tokens[i].kind == "punct" and self.tokens[i].value == "[":
            depth = 1
            i += 1
            while depth and self.tokens[i].kind != "eof":
                if self.tokens[i].value == "[":
                    depth += 1
                elif self.tokens[i].value == "]":
                    depth -= 1
                i += 1
        tok = self.tokens[i]
        return tok.kind == "ident" or (tok.kind == "keyword"
                                       and tok.value in ("memory", "storage"))

    # -- statements ---------------------------------------------------------

    def parse_block(self) -> list:
        self.expect("punct", "{")
        stmts = []
        while not self.at_punct("}"):
            stmts.extend(self.parse_statement())
        self.expect("punct", "}")
        return stmts

    def _body(self) -> list:
        if self.at_punct("{"):
            return self.parse_block()
        return self.parse_statement()

    def parse_statement(self) -> list:
        """One source statement; a list because loop lowering can yield two."""
        t = self.peek()
        if t.kind == "keyword":
            if t.value in _UNSUPPORTED_KEYWORDS:
                raise UnsupportedFeature(_UNSUPPORTED_KEYWORDS[t.value], t.span)
            if t.value == "if":
                return [self.parse_if()]
            if t.value == "while":
                return [self.parse_while()]
            if t.value == "for":
                return self.parse_for()
            if t.value == "do":
                return self.parse_do_while()
            if t.value == "return":
                self.advance()
                expr = None
                if not self.at_punct(";"):
                    expr = self.parse_expression()
                self.expect("punct", ";")
                return [ast.Return(expr=expr, span=t.span)]
            if t.value == "mapping":
                return [self.parse_var_decl()]
        if t.kind == "ident" and t.value == "_" \
                and self.peek(1).kind == "punct" and self.peek(1).value == ";":
            if not self.in_modifier:
                raise SolSyntaxError(
                    "placeholder `_;` is only valid inside a modifier body", t.span)
            self.advance()
            self.expect("punct", ";")
            return [ast.Placeholder(span=t.span)]
        if self._looks_like_declaration():
            return [self.parse_var_decl()]
        return [self.parse_expr_statement()]

    def parse_var_decl(self) -> ast.VarDecl:
        t = self.peek()
        tname = self.parse_type()
        location = None
        if self.at_kw("memory") or self.at_kw("storage"):
            location = self.advance().value
        name = self.expect("ident").value
        init = None
        if self.at_punct("="):
            self.advance()
            init = self.parse_expression()
        self.expect("punct", ";")
        return ast.VarDecl(type_name=tname, name=name, init=init,
                           location=location, span=t.span)

    def _finish_assignment(self, lhs: ast.Expr, span) -> ast.Stmt:
        t = self.peek()
        if t.kind == "punct" and t.value in ("=", "+=", "-=", "*=", "/=", "%="):
            self.advance()
            rhs = self.parse_expression()
            if not isinstance(lhs, (ast.Ident, ast.Index, ast.Member)):
                raise SolSyntaxError("left side of assignment is not assignable",
                                     span)
            if t.value != "=":
                rhs = ast.Binary(op=t.value[0], lhs=lhs, rhs=rhs, span=t.span)
            return ast.Assign(lhs=lhs, rhs=rhs, span=span)
        return ast.ExprStmt(expr=lhs, span=span)

    def parse_expr_statement(self) -> ast.Stmt:
        t = self.peek()
        expr = self.parse_expression()
        stmt = self._finish_assignment(expr, t.span)
        self.expect("punct", ";")
        return stmt

    def parse_if(self) -> ast.If:
        kw = self.expect("keyword", "if")
        self.expect("punct", "(")
        cond = self.parse_expression()
        self.expect("punct", ")")
        then = self._body()
        otherwise = None
        if self.at_kw("else"):
            self.advance()
            otherwise = self._body()
        return ast.If(cond=cond, then=then, otherwise=otherwise, span=kw.span)

    def parse_while(self) -> ast.While:
        kw = self.expect("keyword", "while")
        self.expect("punct", "(")
        cond = self.parse_expression()
        self.expect("punct", ")")
        body = self._body()
        return ast.While(cond=cond, body=body, span=kw.span)

    def parse_for(self) -> list:
        """`for (init; cond; post) body` lowers to `init; while (cond) {body; post}`."""
        kw = self.expect("keyword", "for")
        self.expect("punct", "(")
        out = []
        if self.at_punct(";"):
            self.advance()
        elif self._looks_like_declaration():
            out.append(self.parse_var_decl())
        else:
            t = self.peek()
            lhs = self.parse_expression()
            out.append(self._finish_assignment(lhs, t.span))
            self.expect("punct", ";")
        cond = ast.BoolLit(value=True, span=kw.span)
        if not self.at_punct(";"):
            cond = self.parse_expression()
        self.expect("punct", ";")
        post = None
        if not self.at_punct(")"):
            t = self.peek()
            lhs = self.parse_expression()
            post = self._finish_assignment(lhs, t.span)
        self.expect("punct", ")")
        body = self._body()
        if post is not None:
            body = body + [post]
        out.append(ast.While(cond=cond, body=body, span=kw.span))
        return out

    def parse_do_while(self) -> list:
        """`do body while (cond);` lowers to `body; while (cond) body`."""
        kw = self.expect("keyword", "do")
        body = self._body()
        self.expect("keyword", "while")
        self.expect("punct", "(")
        cond = self.parse_expression()
        self.expect("punct", ")")
        self.expect("punct", ";")
        return list(body) + [ast.While(cond=cond, body=body, span=kw.span)]

    # -- expressions --------------------------------------------------------

    _BIN_LEVELS = [
        ("||",),
        ("&&",),
        ("==", "!="),
        ("<", "<=", ">", ">="),
        ("+", "-"),
        ("*", "/", "%"),
    ]

    def parse_expression(self, level: int = 0) -> ast.Expr:
        if level >= len(self._BIN_LEVELS):
            return self.parse_unary()
        lhs = self.parse_expression(level + 1)
        while True:
            t = self.peek()
            if t.kind == "punct" and t.value in self._BIN_LEVELS[level]:
                self.advance()
                rhs = self.parse_expression(level + 1)
                lhs = ast.Binary(op=t.value, lhs=lhs, rhs=rhs, span=t.span)
            elif t.kind == "punct" and t.value in ("&", "|", "^", "~", "<<", ">>"):
                raise UnsupportedFeature("bitwise operator", t.span)
            else:
                return lhs

    def parse_unary(self) -> ast.Expr:
        t = self.peek()
        if t.kind == "punct" and t.value in ("!", "-"):
            self.advance()
            return ast.Unary(op=t.value, operand=self.parse_unary(), span=t.span)
        if t.kind == "punct" and t.value in ("++", "--", "~"):
            raise UnsupportedFeature(f"{t.value} operator", t.span)
        return self.parse_postfix()

    def parse_call_args(self) -> list:
        self.expect("punct", "(")
        args = []
        while not self.at_punct(")"):
            if args:
                self.expect("punct", ",")
            args.append(self.parse_expression())
        self.expect("punct", ")")
        return args

    def _parse_value_gas_suffix(self):
        value = None
        gas = None
        while self.at_punct(".") and self.peek(1).kind == "ident" \
                and self.peek(1).value in ("value", "gas") \
                and self.peek(2).kind == "punct" and self.peek(2).value == "(":
            self.advance()
            which = self.advance().value
            self.expect("punct", "(")
            expr = self.parse_expression()
            self.expect("punct", ")")
            if which == "value":
                value = expr
            else:
                gas = expr
        return value, gas

    def parse_postfix(self) -> ast.Expr:
        expr = self.parse_primary()
        while True:
            t = self.peek()
            if self.at_punct("["):
                self.advance()
                idx = self.parse_expression()
                self.expect("punct", "]")
                expr = ast.Index(base=expr, index=idx, span=t.span)
            elif self.at_punct("."):
                name_tok = self.peek(1)
                if name_tok.kind not in ("ident", "keyword"):
                    raise SolSyntaxError("expected member name after '.'",
                                         name_tok.span)
                name = name_tok.value
                if name == "length" and not (self.peek(2).kind == "punct"
                                             and self.peek(2).value == "("):
                    self.advance(); self.advance()
                    expr = ast.ArrayLength(base=expr, span=t.span)
                elif name == "push":
                    self.advance(); self.advance()
                    args = self.parse_call_args()
                    if len(args) != 1:
                        raise SolSyntaxError("push takes exactly one argument",
                                             t.span)
                    expr = ast.Push(base=expr, arg=args[0], span=t.span)
                elif name == "call":
                    self.advance(); self.advance()
                    value, gas = self._parse_value_gas_suffix()
                    if value is None:
                        raise UnsupportedFeature(
                            "low-level call without .value", t.span)
                    self.expect("punct", "(")
                    self.expect("punct", ")")
                    expr = ast.LowLevelCallValue(target=expr, value=value,
                                                 gas=gas, span=t.span)
                else:
                    self.advance(); self.advance()
                    if self.at_punct("(") or (
                            self.at_punct(".") and self.peek(1).kind == "ident"
                            and self.peek(1).value in ("value", "gas")
                            and self.peek(2).kind == "punct"
                            and self.peek(2).value == "("):
                        value, gas = self._parse_value_gas_suffix()
                        args = self.parse_call_args()
                        expr = ast.ExternalCall(target=expr, name=name, args=args,
                                                value=value, gas=gas, span=t.span)
                    else:
                        expr = ast.Member(base=expr, name=name, span=t.span)
            else:
                return expr

    def parse_primary(self) -> ast.Expr:
        t = self.peek()
        self._reject_unsupported()
        if t.kind == "number":
            self.advance()
            return ast.IntLit(value=int(t.value), span=t.span)
        if t.kind == "hexnumber":
            self.advance()
            return ast.IntLit(value=int(t.value, 16), span=t.span)
        if t.kind == "string":
            self.advance()
            return ast.StringLit(value=t.value, span=t.span)
        if t.kind == "keyword" and t.value in ("true", "false"):
            self.advance()
            return ast.BoolLit(value=t.value == "true", span=t.span)
        if t.kind == "keyword" and t.value == "msg":
            self.advance()
            self.expect("punct", ".")
            field = self.expect("ident")
            if field.value == "sender":
                return ast.MsgSender(span=t.span)
            if field.value == "value":
                return ast.MsgValue(span=t.span)
            raise UnsupportedFeature(f"msg.{field.value}", field.span)
        if self.at_punct("("):
            self.advance()
            expr = self.parse_expression()
            self.expect("punct", ")")
            return expr
        if self.at_punct("["):
            self.advance()
            elems = []
            while not self.at_punct("]"):
                if elems:
                    self.expect("punct", ",")
                elems.append(self.parse_expression())
            self.expect("punct", "]")
            return ast.ArrayLit(elements=elems, span=t.span)
        if t.kind == "ident" or (t.kind == "keyword"
                                 and _elementary_name(t.value) is not None):
            self.advance()
            if self.at_punct("("):
                args = self.parse_call_args()
                return ast.Call(name=t.value, args=args, span=t.span)
            return ast.Ident(name=t.value, span=t.span)
        raise SolSyntaxError(f"unexpected token {t.value or t.kind!r}", t.span,
                             expected=("expression",))


def parse(source: str, filename: str = "<input>",
          allow_post_050: bool = False) -> ast.SourceUnit:
    """Parse source text; raises a SolsemError diagnostic on the first problem."""
    tokens = tokenize(source)
    return Parser(tokens, allow_post_050=allow_post_050).parse_unit()


def try_parse(source: str, filename: str = "<input>", allow_post_050: bool = False):
    """(unit, diagnostics) — unit is None when diagnostics are non-empty."""
    try:
        return parse(source, filename, allow_post_050), []
    except SolsemError as e:
        return None, [e]


def parse_expression(text: str) -> ast.Expr:
    """Parse a standalone expression (used by the scenario assert syntax,
    which allows hex literals)."""
    tokens = tokenize(text)
    p = Parser(tokens, allow_hex=True)
    expr = p.parse_expression()
    if not p.at("eof"):
        raise SolSyntaxError(f"trailing input after expression: {p.peek().value!r}",
                             p.peek().span)
    return expr
