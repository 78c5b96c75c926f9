"""
Tests for the per-sample curriculum: stage setup, prompts and pass-rate tracking.
"""

import math
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from curriculum import (
    CccsConfig, CurriculumState, build_prompt, full_generation, init_state, record_outcome, restore_states,
    snapshot_states, stage_count,
)
from corpus import GeneratorConfig, generate_corpus
from minilang import compile_source, render, split_pieces
from policy import build_vocab

VOCAB = build_vocab()
CFG = CccsConfig()


def _instance_with(E, template="sum"):
    cfg = GeneratorConfig(min_conditionals=E, max_conditionals=E)
    return generate_corpus(11, 1, {template: 1}, cfg)[0]


# ---------------------------------------------------------------------------
# init_state
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("E,s,c", [(3, 2, 1), (1, 1, 0), (9, 3, 2), (0, 1, 0), (10, 3, 3), (16, 4, 3)])
def test_init_state_fixtures(E, s, c):
    state = init_state(E)
    assert (state.E, state.s, state.c, state.rho) == (E, s, c, 0.0)


def test_stage_and_stride_formulas_up_to_sixteen():
    for E in range(1, 17):
        stages = math.ceil(math.sqrt(E))
        assert stage_count(E) == stages
        state = init_state(E)
        assert state.s == math.ceil(E / stages)
        assert state.c == stages - 1

        visited = {state.c}
        for _ in range(10 * stages):
            state = record_outcome(state, True, CFG)
            visited.add(state.c)
        assert len(visited) == stages
        assert state.c == 0


def test_negative_conditional_count_rejected():
    with pytest.raises(ValueError):
        init_state(-1)


# ---------------------------------------------------------------------------
# record_outcome
# ---------------------------------------------------------------------------

def test_moving_average_formulas():
    state = init_state(4)
    passed = record_outcome(state, True, CFG)
    assert passed.rho == 0.5
    assert record_outcome(passed, False, CFG).rho == 0.25


def test_three_passes_advance_one_stage():
    state = init_state(9)
    rhos = []
    for _ in range(3):
        state = record_outcome(state, True, CFG)
        rhos.append(state.rho)
    assert rhos == [0.5, 0.75, 0.0]
    assert state.c == 1


def test_failure_breaks_the_streak():
    state = init_state(9)
    for passed in (True, True, False, True):
        state = record_outcome(state, passed, CFG)
    assert state.c == 2
    assert state.rho == pytest.approx(0.6875)


def test_random_outcomes_keep_invariants():
    rng = np.random.default_rng(0)
    for E in range(0, 17):
        state = init_state(E)
        cfg = CccsConfig(alpha=float(rng.uniform(0.05, 1.0)), threshold=float(rng.uniform(0.05, 0.95)))
        for passed in rng.random(300) < 0.6:
            nxt = record_outcome(state, bool(passed), cfg)
            assert 0.0 <= nxt.rho <= 1.0
            assert nxt.c <= state.c
            state = nxt


def test_full_generation_is_absorbing():
    state = init_state(1)
    assert full_generation(state)
    for passed in (True, True, True, True, False):
        state = record_outcome(state, passed, CFG)
        assert state.c == 0


# ---------------------------------------------------------------------------
# build_prompt
# ---------------------------------------------------------------------------

def test_full_generation_prompt_is_requirement_only():
    inst = _instance_with(1)
    ids, prompt_len = build_prompt(inst, init_state(inst.E), VOCAB)
    assert prompt_len == len(inst.x) + 1
    assert ids == [VOCAB.bos_id] + VOCAB.encode(inst.x)


def _closed(pieces):
    """Render a statement-boundary prefix and close any blocks it leaves open."""
    depth = pieces.count("{") - pieces.count("}")
    return render(list(pieces) + ["}"] * depth)[0]


def test_prompt_ends_at_the_stage_conditional():
    inst = _instance_with(3)
    state = init_state(3)
    assert (state.s, state.c) == (2, 1)
    program = compile_source(inst.y)
    ids, prompt_len = build_prompt(inst, state, VOCAB)
    pieces, starts = split_pieces(program.tokens)
    assert prompt_len == len(ids)
    prefix = VOCAB.decode(ids[len(inst.x) + 1:])
    assert prefix == pieces[:starts[inst.cond_spans[2].st]]
    assert compile_source(_closed(prefix)).stmt_table


def test_prompts_shrink_toward_the_requirement():
    for inst in generate_corpus(5, 30):
        state = init_state(inst.E)
        lengths = []
        while True:
            ids, prompt_len = build_prompt(inst, state, VOCAB)
            lengths.append(prompt_len)
            if state.c == 0:
                break
            assert prompt_len > len(inst.x) + 1
            compile_source(_closed(VOCAB.decode(ids[len(inst.x) + 1:])))
            for _ in range(3):
                state = record_outcome(state, True, CFG)
        assert lengths == sorted(lengths, reverse=True)
        assert len(set(lengths)) == len(lengths)
        assert lengths[-1] == len(inst.x) + 1


def test_mismatched_state_rejected():
    inst = _instance_with(3)
    with pytest.raises(ValueError):
        build_prompt(inst, init_state(4), VOCAB)


# ---------------------------------------------------------------------------
# state validation and snapshots
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("fields", [(3, 2, 2, 0.0), (3, 0, 1, 0.0), (3, 2, 1, 1.5), (-1, 1, 0, 0.0)])
def test_invalid_states_rejected(fields):
    with pytest.raises(ValueError):
        CurriculumState(*fields)


@pytest.mark.parametrize("kwargs", [{"alpha": 0.0}, {"alpha": 1.5}, {"threshold": 1.0}, {"threshold": 0.0}])
def test_invalid_config_rejected(kwargs):
    with pytest.raises(ValueError):
        CccsConfig(**kwargs)


def test_snapshot_round_trip():
    insts = generate_corpus(3, 12)
    states = {inst.id: record_outcome(init_state(inst.E), True, CFG) for inst in insts}
    snap = snapshot_states(states)
    assert list(snap) == sorted(snap)
    assert restore_states(snap, insts) == states


def test_restore_rejects_missing_or_stale_samples():
    insts = generate_corpus(3, 6)
    snap = snapshot_states({inst.id: init_state(inst.E) for inst in insts})
    with pytest.raises(ValueError):
        restore_states({k: v for k, v in list(snap.items())[1:]}, insts)
    key = insts[0].id
    stale = dict(snap, **{key: dict(snap[key], E=snap[key]["E"] + 1, s=1, c=0)})
    with pytest.raises(ValueError):
        restore_states(stale, insts)
