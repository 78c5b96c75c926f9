"""ML0: a closed integer language with statement coverage and fuel-limited execution.

Grammar::

    program  := stmt* ;
    stmt     := ident "=" expr ";" | ident "=" "read" "(" ")" ";" | "print" expr ";"
              | "if" expr block ("else" block)? | "while" expr block ;
    block    := "{" stmt* "}" ;
    expr     := term (("+"|"-"|"*"|"/"|"%") term)* | term (("<"|">"|"<="|">="|"=="|"!=") term) ;
    term     := integer-literal | ident | "(" expr ")" ;
"""
import os
import re
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Optional, Sequence, Union

MAX_SOURCE = int(os.getenv("ML0_MAX_SOURCE", "4096"))
DEFAULT_FUEL = int(os.getenv("ML0_FUEL", "10000"))

INT_MIN = -(2 ** 63)
INT_MAX = 2 ** 63 - 1

KEYWORDS = ("if", "else", "while", "print", "read")
OPERATORS = ("=", "+", "-", "*", "/", "%", "<", ">", "<=", ">=", "==", "!=")
PUNCTUATION = (";", "{", "}", "(", ")")
ARITH_OPS = ("+", "-", "*", "/", "%")
COMPARE_OPS = ("<", ">", "<=", ">=", "==", "!=")

_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t\r\n]+)"
    r"|(?P<integer>[0-9]+)"
    r"|(?P<word>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<operator><=|>=|==|!=|[-+*/%<>=])"
    r"|(?P<punctuation>[;{}()])"
)
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_CODE_PIECES = frozenset(KEYWORDS + OPERATORS + PUNCTUATION)


class ErrorKind(str, Enum):
    LEXICAL = "lexical"
    PARSE = "parse failure"
    UNDEFINED = "undefined variable"
    DIV_ZERO = "division by zero"
    INPUT_END = "read past input end"
    FUEL = "fuel exhausted"
    OVERFLOW = "overflow"
    DEPTH = "nesting too deep"


class Category(str, Enum):
    COMPLETED = "completed"
    COMPILE_ERROR = "compile-error"
    RUNTIME_ERROR = "runtime-error"


class CompileError(ValueError):
    """Lexical or syntactic rejection; ``span`` is the offending character range."""

    def __init__(self, message: str, detail: ErrorKind = ErrorKind.PARSE, span: tuple = (0, 0)):
        super().__init__(message)
        self.detail = detail
        self.span = span


@dataclass(frozen=True)
class Token:
    kind: str  # keyword | identifier | integer | operator | punctuation
    lexeme: str
    span: tuple


# ---------------- AST ----------------
@dataclass
class Node:
    span: tuple    # character range in the source
    tokens: tuple  # token index range [first, last + 1)


@dataclass
class Num(Node):
    value: int


@dataclass
class Var(Node):
    name: str


@dataclass
class Group(Node):
    inner: "Expr"


@dataclass
class Chain(Node):
    """Arithmetic chain; ``operators[i]`` sits between ``operands[i]`` and ``operands[i + 1]``."""
    operands: list
    operators: list


@dataclass
class Compare(Node):
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Num, Var, Group, Chain, Compare]


@dataclass
class Stmt(Node):
    sid: int


@dataclass
class Assign(Stmt):
    target: str
    value: Expr


@dataclass
class Read(Stmt):
    target: str


@dataclass
class Print(Stmt):
    value: Expr


@dataclass
class If(Stmt):
    cond: Expr
    then_body: list
    else_body: Optional[list]


@dataclass
class While(Stmt):
    cond: Expr
    body: list


@dataclass(frozen=True)
class Program:
    source: str
    tokens: tuple
    body: tuple
    stmt_table: tuple  # statements indexed by sid, pre-order


@dataclass(frozen=True)
class ExecStatus:
    category: Category
    detail: Optional[ErrorKind] = None
    output: Optional[tuple] = None

    def __post_init__(self):
        if (self.output is not None) != (self.category is Category.COMPLETED):
            raise ValueError("output is present exactly when execution completed")
        if (self.detail is not None) == (self.category is Category.COMPLETED):
            raise ValueError("detail is present exactly when execution did not complete")


@dataclass(frozen=True)
class CoverageTrace:
    executed_stmt_ids: frozenset


# ---------------- Lexing ----------------
def tokenize(source: str) -> list:
    if len(source.encode("utf-8")) > MAX_SOURCE:
        raise CompileError(f"source exceeds {MAX_SOURCE} bytes", ErrorKind.LEXICAL, (MAX_SOURCE, len(source)))
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if not m:
            raise CompileError(f"unexpected character {source[pos]!r} at {pos}", ErrorKind.LEXICAL, (pos, pos + 1))
        kind, text = m.lastgroup, m.group()
        if kind == "word":
            kind = "keyword" if text in KEYWORDS else "identifier"
        elif kind == "integer" and int(text) > INT_MAX:
            raise CompileError(f"integer literal {text} out of range", ErrorKind.LEXICAL, m.span())
        if kind != "ws":
            tokens.append(Token(kind, text, m.span()))
        pos = m.end()
    return tokens


# ---------------- Parsing ----------------
class _Parser:
    def __init__(self, tokens: Sequence[Token], source: str):
        self.tokens = tokens
        self.source = source
        self.pos = 0
        self.table: list = []

    def peek(self) -> Optional[Token]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def fail(self, expected: str):
        tok = self.peek()
        if tok is None:
            end = len(self.source)
            raise CompileError(f"expected {expected}, found end of input", ErrorKind.PARSE, (end, end))
        raise CompileError(f"expected {expected}, found {tok.lexeme!r}", ErrorKind.PARSE, tok.span)

    def at(self, lexeme: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.kind not in ("identifier", "integer") and tok.lexeme == lexeme

    def accept(self, lexeme: str) -> bool:
        if self.at(lexeme):
            self.pos += 1
            return True
        return False

    def expect(self, lexeme: str) -> None:
        if not self.accept(lexeme):
            self.fail(repr(lexeme))

    def spans(self, first: int) -> dict:
        return {
            "span": (self.tokens[first].span[0], self.tokens[self.pos - 1].span[1]),
            "tokens": (first, self.pos),
        }

    def program(self) -> list:
        body = []
        while self.peek() is not None:
            body.append(self.statement())
        return body

    def block(self) -> list:
        self.expect("{")
        body = []
        while not self.at("}"):
            if self.peek() is None:
                self.fail("'}'")
            body.append(self.statement())
        self.pos += 1
        return body

    def statement(self) -> Stmt:
        tok = self.peek()
        first = self.pos
        # Reserve the ordinal before children so ids follow pre-order.
        sid = len(self.table)
        self.table.append(None)
        if tok is not None and tok.kind == "identifier":
            self.pos += 1
            self.expect("=")
            if self.accept("read"):
                self.expect("(")
                self.expect(")")
                self.expect(";")
                node = Read(sid=sid, target=tok.lexeme, **self.spans(first))
            else:
                value = self.expression()
                self.expect(";")
                node = Assign(sid=sid, target=tok.lexeme, value=value, **self.spans(first))
        elif self.accept("print"):
            value = self.expression()
            self.expect(";")
            node = Print(sid=sid, value=value, **self.spans(first))
        elif self.accept("if"):
            cond = self.expression()
            then_body = self.block()
            else_body = self.block() if self.accept("else") else None
            node = If(sid=sid, cond=cond, then_body=then_body, else_body=else_body, **self.spans(first))
        elif self.accept("while"):
            cond = self.expression()
            body = self.block()
            node = While(sid=sid, cond=cond, body=body, **self.spans(first))
        else:
            self.fail("statement")
        self.table[sid] = node
        return node

    def expression(self) -> Expr:
        first = self.pos
        left = self.term()
        tok = self.peek()
        if tok is not None and tok.kind == "operator" and tok.lexeme in COMPARE_OPS:
            self.pos += 1
            right = self.term()
            return Compare(op=tok.lexeme, left=left, right=right, **self.spans(first))
        operands, operators = [left], []
        while tok is not None and tok.kind == "operator" and tok.lexeme in ARITH_OPS:
            self.pos += 1
            operators.append(tok.lexeme)
            operands.append(self.term())
            tok = self.peek()
        if not operators:
            return left
        return Chain(operands=operands, operators=operators, **self.spans(first))

    def term(self) -> Expr:
        tok = self.peek()
        first = self.pos
        if tok is not None and tok.kind == "integer":
            self.pos += 1
            return Num(value=int(tok.lexeme), **self.spans(first))
        if tok is not None and tok.kind == "identifier":
            self.pos += 1
            return Var(name=tok.lexeme, **self.spans(first))
        if self.accept("("):
            inner = self.expression()
            self.expect(")")
            return Group(inner=inner, **self.spans(first))
        self.fail("expression")


def parse(tokens: Sequence[Token], source: str) -> Program:
    parser = _Parser(list(tokens), source)
    try:
        body = parser.program()
    except RecursionError:
        raise CompileError("program nested too deeply", ErrorKind.PARSE, (0, len(source))) from None
    return Program(source=source, tokens=tuple(parser.tokens), body=tuple(body), stmt_table=tuple(parser.table))


def compile_source(source: str) -> Program:
    return parse(tokenize(source), source)


# ---------------- Unparse ----------------
def _expr_lexemes(expr: Expr) -> Iterator[str]:
    if isinstance(expr, Num):
        yield str(expr.value)
    elif isinstance(expr, Var):
        yield expr.name
    elif isinstance(expr, Group):
        yield "("
        yield from _expr_lexemes(expr.inner)
        yield ")"
    elif isinstance(expr, Compare):
        yield from _expr_lexemes(expr.left)
        yield expr.op
        yield from _expr_lexemes(expr.right)
    else:
        yield from _expr_lexemes(expr.operands[0])
        for op, operand in zip(expr.operators, expr.operands[1:]):
            yield op
            yield from _expr_lexemes(operand)


def _block_lexemes(body: Sequence[Stmt]) -> Iterator[str]:
    yield "{"
    for stmt in body:
        yield from _stmt_lexemes(stmt)
    yield "}"


def _stmt_lexemes(stmt: Stmt) -> Iterator[str]:
    if isinstance(stmt, Read):
        yield from (stmt.target, "=", "read", "(", ")", ";")
    elif isinstance(stmt, Assign):
        yield from (stmt.target, "=")
        yield from _expr_lexemes(stmt.value)
        yield ";"
    elif isinstance(stmt, Print):
        yield "print"
        yield from _expr_lexemes(stmt.value)
        yield ";"
    elif isinstance(stmt, If):
        yield "if"
        yield from _expr_lexemes(stmt.cond)
        yield from _block_lexemes(stmt.then_body)
        if stmt.else_body is not None:
            yield "else"
            yield from _block_lexemes(stmt.else_body)
    else:
        yield "while"
        yield from _expr_lexemes(stmt.cond)
        yield from _block_lexemes(stmt.body)


def unparse(program: Program) -> str:
    """Canonical text of the AST, one space between tokens."""
    return " ".join(lexeme for stmt in program.body for lexeme in _stmt_lexemes(stmt))


# ---------------- Pieces (policy surface) ----------------
def is_code_piece(piece: str) -> bool:
    return piece in _CODE_PIECES or (piece.isascii() and piece.isdigit()) or bool(_IDENT_RE.fullmatch(piece))


def split_pieces(tokens: Sequence[Token]) -> tuple:
    """Break integer literals into single digits.

    Returns (pieces, starts) where starts[i] is the index of token i's first piece.
    """
    pieces, starts = [], []
    for tok in tokens:
        starts.append(len(pieces))
        if tok.kind == "integer":
            pieces.extend(tok.lexeme)
        else:
            pieces.append(tok.lexeme)
    return pieces, starts


def render(pieces: Sequence[str]) -> tuple:
    """Join pieces into source text; digit runs are glued, everything else space-separated.

    Returns (text, spans) with the character span of every piece.
    """
    parts, spans = [], []
    pos = 0
    prev_digit = False
    for piece in pieces:
        if not is_code_piece(piece):
            raise CompileError(f"{piece!r} is not ML0 text", ErrorKind.LEXICAL, (pos, pos))
        digit = piece.isdigit()
        if parts and not (digit and prev_digit):
            parts.append(" ")
            pos += 1
        spans.append((pos, pos + len(piece)))
        parts.append(piece)
        pos += len(piece)
        prev_digit = digit
    return "".join(parts), spans


def canonical_text(source: str) -> str:
    return render(split_pieces(tokenize(source))[0])[0]


# ---------------- Execution ----------------
class _Trap(Exception):
    def __init__(self, kind: ErrorKind):
        super().__init__(kind.value)
        self.kind = kind


def _checked(value: int) -> int:
    if value < INT_MIN or value > INT_MAX:
        raise _Trap(ErrorKind.OVERFLOW)
    return value


def _trunc_div(a: int, b: int) -> int:
    if b == 0:
        raise _Trap(ErrorKind.DIV_ZERO)
    q = abs(a) // abs(b)
    return -q if (a < 0) != (b < 0) else q


def _apply(op: str, a: int, b: int) -> int:
    if op == "+":
        return _checked(a + b)
    if op == "-":
        return _checked(a - b)
    if op == "*":
        return _checked(a * b)
    if op == "/":
        return _checked(_trunc_div(a, b))
    return _checked(a - b * _trunc_div(a, b))


_COMPARE = {
    "<": lambda a, b: a < b,
    ">": lambda a, b: a > b,
    "<=": lambda a, b: a <= b,
    ">=": lambda a, b: a >= b,
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
}


def _fold(values: list, operators: list) -> int:
    # * / % bind tighter than + -, both left associative
    terms, signs = [values[0]], []
    for op, value in zip(operators, values[1:]):
        if op in ("*", "/", "%"):
            terms[-1] = _apply(op, terms[-1], value)
        else:
            signs.append(op)
            terms.append(value)
    result = terms[0]
    for op, value in zip(signs, terms[1:]):
        result = _apply(op, result, value)
    return result


class Interpreter:
    """One execution of a program. ``hits`` counts entries per statement id."""

    def __init__(self, program: Program, inputs: Sequence[int], fuel: int):
        self.program = program
        self.inputs = list(inputs)
        self.cursor = 0
        self.fuel = fuel
        self.env: dict = {}
        self.output: list = []
        self.hits: Counter = Counter()

    def run(self) -> tuple:
        try:
            self.block(self.program.body)
        except _Trap as trap:
            status = ExecStatus(Category.RUNTIME_ERROR, trap.kind)
        except RecursionError:
            status = ExecStatus(Category.RUNTIME_ERROR, ErrorKind.DEPTH)
        else:
            status = ExecStatus(Category.COMPLETED, output=tuple(self.output))
        return status, CoverageTrace(frozenset(self.hits))

    def charge(self, stmt: Stmt) -> None:
        if self.fuel <= 0:
            raise _Trap(ErrorKind.FUEL)
        self.fuel -= 1
        self.hits[stmt.sid] += 1

    def block(self, body: Sequence[Stmt]) -> None:
        for stmt in body:
            self.execute(stmt)

    def execute(self, stmt: Stmt) -> None:
        self.charge(stmt)
        if isinstance(stmt, Read):
            if self.cursor >= len(self.inputs):
                raise _Trap(ErrorKind.INPUT_END)
            self.env[stmt.target] = _checked(int(self.inputs[self.cursor]))
            self.cursor += 1
        elif isinstance(stmt, Assign):
            self.env[stmt.target] = self.evaluate(stmt.value)
        elif isinstance(stmt, Print):
            self.output.append(self.evaluate(stmt.value))
        elif isinstance(stmt, If):
            if self.evaluate(stmt.cond) != 0:
                self.block(stmt.then_body)
            elif stmt.else_body is not None:
                self.block(stmt.else_body)
        else:
            # the loop statement is charged once per condition test
            while self.evaluate(stmt.cond) != 0:
                self.block(stmt.body)
                self.charge(stmt)

    def evaluate(self, expr: Expr) -> int:
        if isinstance(expr, Num):
            return expr.value
        if isinstance(expr, Var):
            if expr.name not in self.env:
                raise _Trap(ErrorKind.UNDEFINED)
            return self.env[expr.name]
        if isinstance(expr, Group):
            return self.evaluate(expr.inner)
        if isinstance(expr, Compare):
            return int(_COMPARE[expr.op](self.evaluate(expr.left), self.evaluate(expr.right)))
        return _fold([self.evaluate(o) for o in expr.operands], expr.operators)


def execute(program: Program, inputs: Sequence[int], fuel: int = DEFAULT_FUEL) -> tuple:
    """Run ``program`` on ``inputs``; returns (ExecStatus, CoverageTrace)."""
    if fuel < 1:
        raise ValueError("fuel must be at least 1")
    return Interpreter(program, inputs, fuel).run()
