"""
Tests for the recurrent policy: vocabulary, forward pass, sampling, gradients, SFT and checkpoints.
"""

import os
import sys

import numpy as np
import pytest
import torch

sys.path.insert(0, os.path.dirname(__file__))

from corpus import generate_corpus
from policy import (
    EOS, PAD, PolicyConfig, SampleConfig, Vocab, batch_logprobs_and_values, build_vocab, forward, freeze,
    greedy_decode, grads, init_params, load_checkpoint, logprobs_and_values, make_optimizer, nucleus_probs,
    params_hash, sample, save_checkpoint, sft_example, sft_loss, sft_train,
)

VOCAB = build_vocab()
TINY = PolicyConfig(embed=2, hidden=3)


def _prompt(*pieces):
    return [VOCAB.bos_id] + VOCAB.encode(pieces)


def _jitter(model, seed, scale=0.3):
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in model.parameters():
            p.add_(torch.randn(p.shape, generator=gen, dtype=torch.float64) * scale)
    return model


# ---------------------------------------------------------------------------
# Vocab
# ---------------------------------------------------------------------------

def test_vocab_is_a_bijection():
    assert len(set(VOCAB.itos)) == len(VOCAB)
    assert all(VOCAB.stoi[tok] == i for i, tok in enumerate(VOCAB.itos))
    assert VOCAB.pad_id == VOCAB.stoi[PAD] == 0
    assert VOCAB.eos_id == VOCAB.stoi[EOS] != VOCAB.pad_id


def test_vocab_covers_corpus_pieces():
    for inst in generate_corpus(0, 60):
        ids, _ = sft_example(VOCAB, inst)
        assert VOCAB.decode(VOCAB.encode(VOCAB.decode(ids))) == VOCAB.decode(ids)


def test_vocab_rejects_unknown_and_duplicates():
    with pytest.raises(ValueError):
        VOCAB.encode(["while", "@"])
    with pytest.raises(ValueError):
        Vocab(("<pad>", "a", "a"))


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------

def test_zero_output_head_gives_uniform_softmax():
    model = init_params(VOCAB, seed=1)
    with torch.no_grad():
        model.lm_head.weight.zero_()
        model.lm_head.bias.zero_()
    logits, _ = forward(model, _prompt("T:max", "P:a", "V:3"))
    probs = torch.softmax(logits, dim=-1)
    assert torch.allclose(probs, torch.full_like(probs, 1 / len(VOCAB)), atol=1e-15)


def test_distributions_normalize():
    model = _jitter(init_params(VOCAB, seed=2), 5)
    logits, _ = forward(model, _prompt("T:sum", "P:c", "V:9", "n", "="))
    assert torch.allclose(torch.softmax(logits, dim=-1).sum(-1), torch.ones(logits.shape[0], dtype=torch.float64),
                          atol=1e-6)


def test_causality():
    model = _jitter(init_params(VOCAB, seed=3), 6)
    ids = _prompt("T:clamp", "P:lo", "V:2", "x", "=")
    changed = list(ids)
    changed[4] = VOCAB.stoi["while"]
    a_logits, a_values = forward(model, ids)
    b_logits, b_values = forward(model, changed)
    assert torch.equal(a_logits[:4], b_logits[:4]) and torch.equal(a_values[:4], b_values[:4])
    assert not torch.equal(a_logits[4], b_logits[4])


def test_forward_matches_scalar_recomputation():
    model = _jitter(init_params(VOCAB, PolicyConfig(embed=4, hidden=5), seed=3), 1)
    ids = _prompt("T:max", "x")
    logits, values = forward(model, ids)
    w = {name: t.detach().numpy() for name, t in model.state_dict().items()}
    H = 5
    h = np.zeros(H)

    def sigmoid(v):
        return 1.0 / (1.0 + np.exp(-v))

    for t, tok in enumerate(ids):
        gi = w["rnn.weight_ih_l0"] @ w["embed.weight"][tok] + w["rnn.bias_ih_l0"]
        gh = w["rnn.weight_hh_l0"] @ h + w["rnn.bias_hh_l0"]
        r = sigmoid(gi[:H] + gh[:H])
        z = sigmoid(gi[H:2 * H] + gh[H:2 * H])
        n = np.tanh(gi[2 * H:] + r * gh[2 * H:])
        h = (1 - z) * n + z * h
        np.testing.assert_allclose(logits[t].detach().numpy(), w["lm_head.weight"] @ h + w["lm_head.bias"],
                                   rtol=1e-10, atol=1e-12)
        assert values[t].item() == pytest.approx(float(w["value_head.weight"][0] @ h + w["value_head.bias"][0]),
                                                 abs=1e-12)


def test_out_of_vocabulary_id_rejected():
    with pytest.raises(ValueError):
        forward(init_params(VOCAB), [VOCAB.bos_id, len(VOCAB)])


def test_initialization():
    model = init_params(VOCAB, seed=0)
    assert float(model.embed.weight.abs().max()) <= 0.08
    assert float(model.value_head.weight.abs().max()) == 0.0
    assert float(model.rnn.bias_hh_l0.abs().max()) == 0.0
    assert params_hash(init_params(VOCAB, seed=0)) == params_hash(model)
    assert params_hash(init_params(VOCAB, seed=1)) != params_hash(model)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def test_sampling_is_reproducible_and_stops():
    model = _jitter(init_params(VOCAB, seed=4), 2, scale=0.2)
    cfg = SampleConfig(temperature=0.8, top_p=0.9, max_new_tokens=10, seed=11)
    first = sample(model, _prompt("T:linear"), cfg, n=6)
    assert first == sample(model, _prompt("T:linear"), cfg, n=6)
    for traj in first:
        completion = traj.completion
        assert len(traj.logprobs) == len(completion) == len(traj.values)
        assert completion[-1] == VOCAB.eos_id or len(completion) == 10
        assert VOCAB.eos_id not in completion[:-1]


def test_cold_temperature_is_greedy():
    model = init_params(VOCAB, PolicyConfig(init_scale=0.5), seed=5)
    prompt = _prompt("T:abs_diff")
    cfg = SampleConfig(temperature=1e-6, top_p=1.0, max_new_tokens=12)
    traj = sample(model, prompt, cfg)[0]
    assert list(traj.completion) == greedy_decode(model, prompt, 12)


def test_tiny_nucleus_keeps_only_the_argmax():
    model = init_params(VOCAB, PolicyConfig(init_scale=0.5), seed=6)
    prompt = _prompt("T:sum")
    traj = sample(model, prompt, SampleConfig(temperature=1.0, top_p=1e-9, max_new_tokens=8))[0]
    assert list(traj.completion) == greedy_decode(model, prompt, 8)
    assert all(lp == 0.0 for lp in traj.logprobs)


def test_nucleus_truncation_and_renormalization():
    probs = nucleus_probs(torch.tensor([2.0, 1.0, 0.0, -1.0], dtype=torch.float64), 1.0, 0.7)
    full = torch.softmax(torch.tensor([2.0, 1.0], dtype=torch.float64), dim=0)
    assert torch.allclose(probs[:2], full, atol=1e-12)
    assert probs[2] == 0 and probs[3] == 0


def test_first_token_frequencies_match_softmax():
    model = init_params(VOCAB, PolicyConfig(embed=4, hidden=4, init_scale=1.0), seed=7)
    prompt = _prompt("T:max")
    draws = 50_000
    trajs = sample(model, prompt, SampleConfig(temperature=1.0, top_p=1.0, max_new_tokens=1), n=draws,
                   generator=torch.Generator().manual_seed(0))
    counts = np.bincount([traj.completion[0] for traj in trajs], minlength=len(VOCAB))
    logits, _ = forward(model, prompt)
    p = torch.softmax(logits[-1], dim=-1).detach().numpy()
    sigma = np.sqrt(p * (1 - p) / draws)
    assert np.all(np.abs(counts / draws - p) <= 5 * sigma + 1e-9)


def test_teacher_forced_logprobs_agree_with_sampling():
    model = _jitter(init_params(VOCAB, seed=8), 3, scale=0.2)
    cfg = SampleConfig(temperature=0.8, top_p=1.0, max_new_tokens=15, seed=1)
    for traj in sample(model, _prompt("T:count_above", "P:t", "V:4"), cfg, n=4):
        lp, values = logprobs_and_values(model, traj.ids, temperature=0.8)
        assert len(lp) == len(traj.ids) - 1
        start = traj.prompt_len - 1
        assert np.allclose(lp[start:].detach().numpy(), traj.logprobs, atol=1e-10)
        assert np.allclose(values[start:].detach().numpy(), traj.values, atol=1e-10)


def test_batched_scores_match_single_sequences():
    model = _jitter(init_params(VOCAB, seed=9), 4, scale=0.2)
    seqs = [_prompt("T:max", "n"), _prompt("T:sum", "P:c", "V:7", "n", "=")]
    lp, values = batch_logprobs_and_values(model, seqs, 1.0)
    for i, seq in enumerate(seqs):
        one_lp, one_v = logprobs_and_values(model, seq)
        assert torch.allclose(lp[i, :len(seq) - 1], one_lp, atol=1e-12)
        assert torch.allclose(values[i, :len(seq) - 1], one_v, atol=1e-12)


@pytest.mark.parametrize("kwargs", [{"temperature": 0}, {"top_p": 0}, {"top_p": 1.5}, {"max_new_tokens": 0}])
def test_sample_config_validation(kwargs):
    with pytest.raises(ValueError):
        SampleConfig(**kwargs)


# ---------------------------------------------------------------------------
# reference copy
# ---------------------------------------------------------------------------

def test_frozen_copy_matches_then_stays_fixed():
    model = _jitter(init_params(VOCAB, seed=10), 5, scale=0.1)
    ref = freeze(model)
    ids = _prompt("T:clamp", "x", "=", "read")
    assert torch.equal(logprobs_and_values(model, ids)[0], logprobs_and_values(ref, ids)[0])
    before = params_hash(ref)
    opt = make_optimizer(model, 1e-2, 3e-2)
    loss = -logprobs_and_values(model, ids)[0].sum()
    opt.zero_grad()
    loss.backward()
    opt.step()
    assert params_hash(ref) == before != params_hash(model)
    assert not any(p.requires_grad for p in ref.parameters())


def test_value_head_has_its_own_learning_rate():
    model = init_params(VOCAB)
    opt = make_optimizer(model, 2e-4, 6e-4)
    policy_group, value_group = opt.param_groups
    assert (policy_group["lr"], value_group["lr"]) == (2e-4, 6e-4)
    assert {id(p) for p in value_group["params"]} == {id(p) for p in model.value_head.parameters()}
    assert len(policy_group["params"]) + len(value_group["params"]) == len(list(model.parameters()))


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------

def _probe_loss(model, ids, weights):
    lp, values = logprobs_and_values(model, ids, temperature=0.9)
    return (lp * weights).sum() + 0.1 * (values ** 2).sum()


def test_gradients_match_central_differences():
    model = _jitter(init_params(VOCAB, TINY, seed=0), 12, scale=0.5)
    assert sum(p.numel() for p in model.parameters()) <= 1000
    ids = _prompt("T:max", "n", "=", "read", "(", ")", ";")
    weights = torch.linspace(-1.0, 1.0, len(ids) - 1, dtype=torch.float64)
    analytic = grads(model, _probe_loss(model, ids, weights))
    eps = 1e-4
    worst = 0.0
    with torch.no_grad():
        for name, param in model.named_parameters():
            flat = param.view(-1)
            for i in range(flat.numel()):
                saved = float(flat[i])
                flat[i] = saved + eps
                up = float(_probe_loss(model, ids, weights))
                flat[i] = saved - eps
                down = float(_probe_loss(model, ids, weights))
                flat[i] = saved
                numeric = (up - down) / (2 * eps)
                a = float(analytic[name].view(-1)[i])
                worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), 1e-2))
    assert worst < 1e-4


def test_masked_position_contributes_no_gradient():
    model = _jitter(init_params(VOCAB, TINY, seed=1), 2)
    ids = _prompt("T:linear", "x", "=")
    lp, _ = logprobs_and_values(model, ids)
    zero = grads(model, (lp * torch.zeros_like(lp)).sum())
    assert all(float(g.abs().max()) == 0.0 for g in zero.values())
    first_only = grads(model, logprobs_and_values(model, ids)[0][0])
    assert float(first_only["embed.weight"][ids[-1]].abs().max()) == 0.0


def test_constant_loss_has_zero_gradient():
    model = init_params(VOCAB, TINY, seed=2)
    logits, _ = forward(model, _prompt("T:sum"))
    result = grads(model, (logits * 0).sum() + 3.0)
    assert set(result) == {name for name, _ in model.named_parameters()}
    assert all(float(g.abs().max()) == 0.0 for g in result.values())


# ---------------------------------------------------------------------------
# SFT
# ---------------------------------------------------------------------------

def test_sft_nll_decreases_over_three_epochs():
    model = init_params(VOCAB, seed=0)
    _, losses = sft_train(model, generate_corpus(0, 50), epochs=3, lr=1e-3, seed=0)
    assert len(losses) == 3
    assert losses[0] > losses[1] > losses[2]


def test_sft_memorizes_a_repeated_sample():
    inst = generate_corpus(1, 1, {"linear": 1})[0]
    model = init_params(VOCAB, PolicyConfig(embed=16, hidden=32), seed=0)
    _, losses = sft_train(model, [inst] * 8, epochs=150, lr=1e-2, batch_size=8, seed=0)
    assert losses[-1] < 0.05
    ids, start = sft_example(VOCAB, inst)
    prompt = ids[:start + 1]
    assert greedy_decode(model, prompt, 40) == ids[start + 1:]


def test_descriptor_positions_are_excluded_from_sft_loss():
    inst = generate_corpus(2, 1, {"clamp": 1})[0]
    model = _jitter(init_params(VOCAB, seed=3), 7, scale=0.1)
    ids, start = sft_example(VOCAB, inst)
    assert start == len(inst.x)
    nll, count = sft_loss(model, [(ids, start)])
    lp, _ = logprobs_and_values(model, ids)
    assert float(count) == len(ids) - 1 - start
    assert float(nll) == pytest.approx(float(-lp[start:].sum()), abs=1e-10)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    model = _jitter(init_params(VOCAB, PolicyConfig(embed=8, hidden=12), seed=4), 9)
    path = str(tmp_path / "policy.pt")
    save_checkpoint(path, model)
    loaded = load_checkpoint(path)
    assert params_hash(loaded) == params_hash(model)
    assert loaded.vocab == model.vocab
    assert loaded.config == model.config
    blob = torch.load(path, weights_only=True)
    assert blob["shapes"]["embed.weight"] == [len(VOCAB), 8]


def test_checkpoint_version_is_checked(tmp_path):
    path = str(tmp_path / "policy.pt")
    save_checkpoint(path, init_params(VOCAB, TINY))
    blob = torch.load(path, weights_only=True)
    blob["version"] = 99
    torch.save(blob, path)
    with pytest.raises(ValueError):
        load_checkpoint(path)
