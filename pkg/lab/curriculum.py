"""Per-sample curriculum of code-completion subtasks."""
import math
from dataclasses import asdict, dataclass, replace
from typing import Optional, Sequence

from analysis import cut_offset
from corpus import TaskInstance
from minilang import Program, compile_source, split_pieces
from policy import Vocab


@dataclass(frozen=True)
class CurriculumState:
    E: int
    s: int      # stride in conditionals
    c: int      # stage; 0 means full generation
    rho: float  # moving pass rate

    def __post_init__(self):
        if self.E < 0 or self.s < 1:
            raise ValueError(f"invalid curriculum state E={self.E}, s={self.s}")
        if not 0 <= self.c <= max(stage_count(self.E) - 1, 0):
            raise ValueError(f"stage {self.c} out of range for E={self.E}")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"pass rate {self.rho} outside [0, 1]")


@dataclass
class CccsConfig:
    alpha: float = 0.5
    threshold: float = 0.8

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")


def stage_count(E: int) -> int:
    """ceil(sqrt(E)) in exact integer arithmetic; a single stage when E is 0."""
    return math.isqrt(E - 1) + 1 if E > 0 else 1


def init_state(E: int) -> CurriculumState:
    if E < 0:
        raise ValueError("E must be non-negative")
    if E == 0:
        return CurriculumState(0, 1, 0, 0.0)
    stages = stage_count(E)
    return CurriculumState(E, -(-E // stages), stages - 1, 0.0)


def build_prompt(instance: TaskInstance, state: CurriculumState, vocab: Vocab,
                 program: Optional[Program] = None) -> tuple:
    """[BOS] + x + the canonical solution up to the stage's cut point; returns (ids, prompt_len)."""
    if state.E != instance.E:
        raise ValueError(f"state for E={state.E} used with instance {instance.id} (E={instance.E})")
    ids = [vocab.bos_id] + vocab.encode(instance.x)
    if state.c > 0:
        program = program or compile_source(instance.y)
        offset = cut_offset(program, instance.cond_spans, state.c, state.s)
        pieces, starts = split_pieces(program.tokens)
        ids += vocab.encode(pieces[:starts[offset]])
    return ids, len(ids)


def record_outcome(state: CurriculumState, passed: bool, cfg: CccsConfig) -> CurriculumState:
    if passed:
        rho = cfg.alpha + (1 - cfg.alpha) * state.rho
    else:
        rho = (1 - cfg.alpha) * state.rho
    if rho > cfg.threshold:
        return replace(state, rho=0.0, c=max(state.c - 1, 0))
    return replace(state, rho=rho)


def full_generation(state: CurriculumState) -> bool:
    return state.c == 0


def snapshot_states(states: dict) -> dict:
    return {key: asdict(state) for key, state in sorted(states.items())}


def restore_states(snapshot: dict, instances: Sequence[TaskInstance]) -> dict:
    states = {key: CurriculumState(**value) for key, value in snapshot.items()}
    missing = sorted({inst.id for inst in instances} - set(states))
    if missing:
        raise ValueError(f"curriculum snapshot lacks {len(missing)} samples, e.g. {missing[0]}")
    for inst in instances:
        if states[inst.id].E != inst.E:
            raise ValueError(f"curriculum snapshot disagrees with sample {inst.id}")
    return states
