"""Concrete grammar, parser and AST for scene programs.

The language is a small Python-like subset: one statement per line,
assignments, calls, tuples, lists, arithmetic, ``def`` blocks with
``for i in a..b { ... }`` loops and a final ``return`` of a list
expression. ``#`` starts a comment. Files use the ``.scene`` extension.

Variable names match ``[a-z_]+(_[0-9]+)?``; the object category of a
variable is its name with any trailing ``_<digits>`` stripped
(``chair_2`` -> ``chair``). All numeric literals are 64-bit floats.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

from .errors import ParseError

STDLIB_NAMES = (
    "furniture",
    "parallel",
    "align",
    "grid",
    "grid_with_offset",
    "symmetrical",
    "cluster_placement",
)

KEYWORDS = {"def", "for", "in", "return"}

NAME_RE = re.compile(r"[a-z_]+(_[0-9]+)?\Z")

_TOKEN_RE = re.compile(
    r"""
    (?P<number>(\d+(\.(?!\.)\d*)?|\.\d+)([eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<range>\.\.)
  | (?P<punct>[()\[\]{},=+\-*/])
    """,
    re.VERBOSE,
)

_CLOSERS = {")", "]", "}"}


def category_of(name: str) -> str:
    """Object category of a variable name: strip one trailing ``_<digits>``."""
    return re.sub(r"_[0-9]+\Z", "", name)


@dataclass(frozen=True)
class Token:
    kind: str  # "number" | "name" | "punct" | "range" | "newline" | "eof"
    text: str
    line: int
    col: int


def lex(text: str) -> list[Token]:
    tokens: list[Token] = []
    depth = 0
    line = 1
    col = 1
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            if depth == 0 and tokens and tokens[-1].kind != "newline":
                tokens.append(Token("newline", "\n", line, col))
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        m = _TOKEN_RE.match(text, i)
        if m is None:
            raise ParseError(f"unexpected character {ch!r}", line, col)
        kind = m.lastgroup
        tok_text = m.group()
        tokens.append(Token(kind, tok_text, line, col))
        # newlines stay significant inside {} blocks but not inside () / []
        if tok_text in "([":
            depth += 1
        elif tok_text in ")]":
            depth = max(0, depth - 1)
        col += len(tok_text)
        i = m.end()
    if tokens and tokens[-1].kind != "newline":
        tokens.append(Token("newline", "\n", line, col))
    tokens.append(Token("eof", "", line, col))
    return tokens


def count_tokens(text: str) -> int:
    """Description-length token count: every lexer token except newlines and
    closing delimiters (which carry no information given their openers)."""
    return sum(
        1 for t in lex(text) if t.kind not in {"newline", "eof"} and t.text not in _CLOSERS
    )


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Number:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class TupleLit:
    items: tuple


@dataclass(frozen=True)
class ListLit:
    items: tuple


@dataclass(frozen=True)
class Call:
    callee: str
    args: tuple


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Number, Var, TupleLit, ListLit, Call, BinOp]


@dataclass(frozen=True)
class Assign:
    name: str
    value: Expr


@dataclass(frozen=True)
class ExprStmt:
    value: Expr


@dataclass(frozen=True)
class RangeFor:
    var: str
    start: Expr
    stop: Expr
    body: tuple


@dataclass(frozen=True)
class Return:
    value: Expr


Stmt = Union[Assign, ExprStmt, RangeFor, Return]


@dataclass(frozen=True)
class FuncDef:
    name: str
    params: tuple
    body: tuple
    # Native defs are signatures for interpreter built-ins; they carry no
    # parseable body and defer to the native implementation at execution.
    native: bool = False


@dataclass(frozen=True)
class Program:
    statements: tuple
    defs: tuple = ()


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

_MAX_DEPTH = 100


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0
        self.depth = 0
        # scope stack for define-before-use / single-assignment checks;
        # scopes[0] is the top level or the enclosing def's scope
        self.scopes: list[set] = [set()]
        self.current_def: str | None = None

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def error(self, message: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.peek()
        return ParseError(message, tok.line, tok.col)

    def expect(self, text: str) -> Token:
        tok = self.peek()
        if tok.text != text or tok.kind == "eof":
            raise self.error(f"expected {text!r}, found {tok.text!r}")
        return self.advance()

    def skip_newlines(self):
        while self.peek().kind == "newline":
            self.advance()

    def end_statement(self):
        tok = self.peek()
        if tok.kind == "newline":
            self.advance()
        elif tok.kind != "eof" and tok.text != "}":
            raise self.error(f"expected end of statement, found {tok.text!r}")

    # --- statements -------------------------------------------------------

    def parse_program(self) -> Program:
        statements = []
        defs = []
        self.skip_newlines()
        while self.peek().kind != "eof":
            if self.peek().text == "def":
                defs.append(self.parse_def())
            else:
                statements.append(self.parse_simple_stmt())
            self.skip_newlines()
        return Program(tuple(statements), tuple(defs))

    def parse_simple_stmt(self) -> Stmt:
        tok = self.peek()
        if tok.kind == "name" and tok.text in KEYWORDS:
            raise self.error(f"{tok.text!r} is only allowed inside a function body")
        if tok.kind == "name" and self.tokens[self.pos + 1].text == "=":
            name_tok = self.advance()
            self.check_name(name_tok)
            self.advance()  # "="
            value = self.parse_expr()
            self.end_statement()
            self.bind(name_tok)
            return Assign(name_tok.text, value)
        value = self.parse_expr()
        self.end_statement()
        return ExprStmt(value)

    def bind(self, name_tok: Token):
        name = name_tok.text
        if name in self.scopes[-1]:
            raise self.error(f"name {name!r} rebound in the same scope", name_tok)
        # assigning a name bound in an enclosing scope updates it in place
        # (loop-carried accumulators); otherwise it binds locally
        if not any(name in s for s in self.scopes[:-1]):
            self.scopes[-1].add(name)

    def check_name(self, tok: Token):
        if tok.text in KEYWORDS:
            raise self.error(f"keyword {tok.text!r} cannot be used as a name", tok)
        if not NAME_RE.match(tok.text):
            raise self.error(f"invalid name {tok.text!r} (expected [a-z_]+(_[0-9]+)?)", tok)

    def parse_def(self) -> FuncDef:
        self.expect("def")
        name_tok = self.advance()
        if name_tok.kind != "name":
            raise self.error("expected function name", name_tok)
        self.check_name(name_tok)
        self.expect("(")
        params = []
        if self.peek().text != ")":
            while True:
                p = self.advance()
                if p.kind != "name":
                    raise self.error("expected parameter name", p)
                self.check_name(p)
                params.append(p.text)
                if self.peek().text == ",":
                    self.advance()
                    continue
                break
        self.expect(")")
        if len(set(params)) != len(params):
            raise self.error(f"duplicate parameter in def {name_tok.text!r}", name_tok)
        outer_scopes, outer_def = self.scopes, self.current_def
        self.scopes = [set(params)]
        self.current_def = name_tok.text
        try:
            body = self.parse_block(top=True)
        finally:
            self.scopes, self.current_def = outer_scopes, outer_def
        self.end_statement()
        return FuncDef(name_tok.text, tuple(params), body)

    def parse_block(self, top: bool = False) -> tuple:
        self.expect("{")
        stmts = []
        self.skip_newlines()
        while self.peek().text != "}":
            if self.peek().kind == "eof":
                raise self.error("unterminated block")
            tok = self.peek()
            if tok.text == "for":
                stmts.append(self.parse_for())
            elif tok.text == "return":
                ret_tok = self.advance()
                value = self.parse_expr()
                self.end_statement()
                if not top:
                    raise self.error("'return' must be the last statement of a def body", ret_tok)
                stmts.append(Return(value))
            else:
                stmts.append(self.parse_simple_stmt())
            self.skip_newlines()
        self.expect("}")
        if top:
            if not stmts or not isinstance(stmts[-1], Return):
                raise self.error("def body must end with a 'return' statement")
            if any(isinstance(s, Return) for s in stmts[:-1]):
                raise self.error("'return' must be the last statement of a def body")
        return tuple(stmts)

    def parse_for(self) -> RangeFor:
        self.expect("for")
        var_tok = self.advance()
        if var_tok.kind != "name":
            raise self.error("expected loop variable", var_tok)
        self.check_name(var_tok)
        self.expect("in")
        start = self.parse_expr()
        if self.peek().kind != "range":
            raise self.error("expected '..' in loop range")
        self.advance()
        stop = self.parse_expr()
        self.scopes.append({var_tok.text})
        try:
            body = self.parse_block(top=False)
        finally:
            self.scopes.pop()
        self.end_statement()
        return RangeFor(var_tok.text, start, stop, body)

    # --- expressions ------------------------------------------------------

    def parse_expr(self) -> Expr:
        self.depth += 1
        if self.depth > _MAX_DEPTH:
            raise self.error("expression nesting too deep")
        try:
            left = self.parse_term()
            while self.peek().text in {"+", "-"} and self.peek().kind == "punct":
                op = self.advance().text
                right = self.parse_term()
                left = BinOp(op, left, right)
            return left
        finally:
            self.depth -= 1

    def parse_term(self) -> Expr:
        left = self.parse_unary()
        while self.peek().text in {"*", "/"} and self.peek().kind == "punct":
            op = self.advance().text
            right = self.parse_unary()
            left = BinOp(op, left, right)
        return left

    def parse_unary(self) -> Expr:
        if self.peek().text == "-" and self.peek().kind == "punct":
            self.advance()
            operand = self.parse_unary()
            if isinstance(operand, Number):
                return Number(-operand.value)
            return BinOp("-", Number(0.0), operand)
        return self.parse_atom()

    def parse_atom(self) -> Expr:
        tok = self.peek()
        if tok.kind == "number":
            self.advance()
            return Number(float(tok.text))
        if tok.kind == "name":
            if tok.text in KEYWORDS:
                raise self.error(f"unexpected keyword {tok.text!r}")
            self.advance()
            if self.peek().text == "(":
                if self.current_def is not None:
                    if tok.text == self.current_def:
                        raise self.error(f"recursive call to {tok.text!r}", tok)
                    if tok.text not in STDLIB_NAMES:
                        raise self.error(
                            f"def bodies may only call the standard library, not {tok.text!r}",
                            tok,
                        )
                self.advance()
                args = []
                if self.peek().text != ")":
                    while True:
                        args.append(self.parse_expr())
                        if self.peek().text == ",":
                            self.advance()
                            continue
                        break
                self.expect(")")
                return Call(tok.text, tuple(args))
            self.check_name(tok)
            if not any(tok.text in s for s in self.scopes):
                raise self.error(f"use of undefined name {tok.text!r}", tok)
            return Var(tok.text)
        if tok.text == "(":
            self.advance()
            first = self.parse_expr()
            if self.peek().text == ",":
                items = [first]
                while self.peek().text == ",":
                    self.advance()
                    if self.peek().text == ")":
                        break
                    items.append(self.parse_expr())
                self.expect(")")
                return TupleLit(tuple(items))
            self.expect(")")
            return first
        if tok.text == "[":
            self.advance()
            items = []
            if self.peek().text != "]":
                while True:
                    items.append(self.parse_expr())
                    if self.peek().text == ",":
                        self.advance()
                        continue
                    break
            self.expect("]")
            return ListLit(tuple(items))
        raise self.error(f"unexpected token {tok.text!r}" if tok.text else "unexpected end of input")


def parse(text: str) -> Program:
    """Parse program source into an AST.

    Scope rules (define-before-use, single assignment per scope, no
    recursion, stdlib-only calls inside def bodies) are enforced during
    parsing so every error carries a source position.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    return _Parser(lex(text)).parse_program()


def validate_def(fd: FuncDef) -> FuncDef:
    """Check a programmatically built FuncDef by formatting and reparsing."""
    if fd.native:
        return fd
    reparsed = parse(format_def(fd) + "\n")
    if len(reparsed.defs) != 1 or reparsed.defs[0] != fd:
        raise ParseError(f"function {fd.name!r} does not round-trip", 1, 1)
    return fd


# ---------------------------------------------------------------------------
# formatter
# ---------------------------------------------------------------------------

def format_number(value: float) -> str:
    # repr gives the shortest round-trip form; floats keep a decimal point
    # ("2.0" never collapses to "2")
    return repr(float(value))


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def format_expr(expr: Expr) -> str:
    return _format_expr(expr, 0)


def _format_expr(expr: Expr, parent_prec: int) -> str:
    if isinstance(expr, Number):
        return format_number(expr.value)
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, Call):
        args = ", ".join(_format_expr(a, 0) for a in expr.args)
        return f"{expr.callee}({args})"
    if isinstance(expr, TupleLit):
        inner = ", ".join(_format_expr(a, 0) for a in expr.items)
        if len(expr.items) == 1:
            inner += ","
        return f"({inner})"
    if isinstance(expr, ListLit):
        return "[" + ", ".join(_format_expr(a, 0) for a in expr.items) + "]"
    if isinstance(expr, BinOp):
        prec = _PREC[expr.op]
        left = _format_expr(expr.left, prec - 1)
        right = _format_expr(expr.right, prec)
        text = f"{left} {expr.op} {right}"
        if prec <= parent_prec:
            text = f"({text})"
        return text
    raise TypeError(f"not an expression node: {expr!r}")


def _format_stmt(stmt: Stmt, indent: int) -> list[str]:
    pad = "    " * indent
    if isinstance(stmt, Assign):
        return [f"{pad}{stmt.name} = {format_expr(stmt.value)}"]
    if isinstance(stmt, ExprStmt):
        return [f"{pad}{format_expr(stmt.value)}"]
    if isinstance(stmt, Return):
        return [f"{pad}return {format_expr(stmt.value)}"]
    if isinstance(stmt, RangeFor):
        lines = [
            f"{pad}for {stmt.var} in {format_expr(stmt.start)}..{format_expr(stmt.stop)} {{"
        ]
        for inner in stmt.body:
            lines.extend(_format_stmt(inner, indent + 1))
        lines.append(f"{pad}}}")
        return lines
    raise TypeError(f"not a statement node: {stmt!r}")


def format_def(fd: FuncDef) -> str:
    if fd.native:
        raise ValueError(f"native function {fd.name!r} has no formattable body")
    lines = [f"def {fd.name}({', '.join(fd.params)}) {{"]
    for stmt in fd.body:
        lines.extend(_format_stmt(stmt, 1))
    lines.append("}")
    return "\n".join(lines)


def format_program(program: Program) -> str:
    """Canonical pretty-print; ``parse(format_program(p))`` equals ``p``
    up to def/statement ordering (defs print first)."""
    chunks = [format_def(fd) for fd in program.defs if not fd.native]
    for stmt in program.statements:
        chunks.extend(_format_stmt(stmt, 0))
    return "\n".join(chunks) + ("\n" if chunks else "")
