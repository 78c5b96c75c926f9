"""Conditional-statement spans and coverage-derived token masks."""
from bisect import bisect_right
from dataclasses import dataclass
from typing import Optional, Sequence

from minilang import CoverageTrace, If, Program, While, render


@dataclass(frozen=True)
class CondSpan:
    st: int  # token index of the conditional's first token
    en: int  # one past its last token
    stmt_id: int


@dataclass(frozen=True)
class TokenMask:
    flags: tuple

    def __len__(self) -> int:
        return len(self.flags)

    @property
    def density(self) -> float:
        return sum(self.flags) / len(self.flags) if self.flags else 1.0


def extract_conditionals(program: Program) -> list:
    """One span per if/while node, ascending by start token (nested spans allowed)."""
    spans = [
        CondSpan(stmt.tokens[0], stmt.tokens[1], stmt.sid)
        for stmt in program.stmt_table
        if isinstance(stmt, (If, While))
    ]
    return sorted(spans, key=lambda span: span.st)


def statement_owners(program: Program) -> list:
    """Innermost statement id owning each token, or None for tokens outside every statement."""
    owners: list = [None] * len(program.tokens)
    # stmt_table is pre-order, so nested statements overwrite their parents
    for stmt in program.stmt_table:
        for j in range(*stmt.tokens):
            owners[j] = stmt.sid
    return owners


def fgo_mask(generated_tokens: Sequence[str], program: Optional[Program], traces: Sequence[CoverageTrace]) -> TokenMask:
    """Flag each generated piece 1 iff its owning statement ran under some trace.

    ``program`` is None for completions that failed to compile; every piece is then kept.
    """
    if program is None:
        return TokenMask((1,) * len(generated_tokens))
    text, spans = render(generated_tokens)
    if text != program.source:
        raise ValueError("generated tokens do not render to the program source")
    executed = set().union(*(trace.executed_stmt_ids for trace in traces))
    owners = statement_owners(program)
    starts = [tok.span[0] for tok in program.tokens]
    flags = []
    for start, _ in spans:
        owner = owners[bisect_right(starts, start) - 1]
        flags.append(1 if owner is not None and owner in executed else 0)
    return TokenMask(tuple(flags))


def cut_offset(program: Program, e: Sequence[CondSpan], c: int, s: int) -> int:
    """Token offset where a curriculum prompt stops; 0 means full generation."""
    if c < 0 or s < 1:
        raise ValueError(f"invalid curriculum position c={c}, s={s}")
    if c == 0:
        return 0
    if not e:
        raise ValueError("a solution without conditionals only has stage 0")
    offset = e[min(s * c, len(e) - 1)].st
    if offset >= len(program.tokens):
        raise ValueError("conditional span lies outside the program")
    return offset
