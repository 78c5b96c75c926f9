"""Tiny recurrent policy with a value head, nucleus sampling, SFT and checkpoints."""
import copy
import hashlib
import logging
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import torch
import torch.nn.functional as F
from torch import nn

from corpus import VARIABLES, TaskInstance, descriptor_vocabulary
from minilang import KEYWORDS, OPERATORS, PUNCTUATION, split_pieces, tokenize

log = logging.getLogger(__name__)

PAD, BOS, EOS = "<pad>", "<bos>", "<eos>"
DIGITS = tuple("0123456789")
CHECKPOINT_VERSION = 1
DTYPE = torch.float64


# ---------------- Vocabulary ----------------
@dataclass(frozen=True)
class Vocab:
    itos: tuple
    stoi: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.itos)) != len(self.itos):
            raise ValueError("vocabulary entries must be unique")
        object.__setattr__(self, "stoi", {tok: i for i, tok in enumerate(self.itos)})

    def __len__(self) -> int:
        return len(self.itos)

    @property
    def pad_id(self) -> int:
        return self.stoi[PAD]

    @property
    def bos_id(self) -> int:
        return self.stoi[BOS]

    @property
    def eos_id(self) -> int:
        return self.stoi[EOS]

    def encode(self, pieces: Sequence[str]) -> list:
        try:
            return [self.stoi[p] for p in pieces]
        except KeyError as exc:
            raise ValueError(f"piece {exc.args[0]!r} is not in the vocabulary") from None

    def decode(self, ids: Sequence[int]) -> list:
        return [self.itos[i] for i in ids]

    def encode_code(self, source: str) -> list:
        return self.encode(split_pieces(tokenize(source))[0])


def build_vocab() -> Vocab:
    return Vocab(tuple(
        [PAD, BOS, EOS]
        + list(KEYWORDS) + list(OPERATORS) + list(PUNCTUATION)
        + list(VARIABLES) + list(DIGITS)
        + descriptor_vocabulary()
    ))


# ---------------- Configs ----------------
@dataclass
class PolicyConfig:
    embed: int = 48
    hidden: int = 96
    init_scale: float = 0.08


@dataclass
class SampleConfig:
    temperature: float = 0.8
    top_p: float = 0.9
    max_new_tokens: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must lie in (0, 1]")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be at least 1")


# ---------------- Model ----------------
class PolicyNet(nn.Module):
    """Embedding -> single-layer GRU trunk -> logits head and value head."""

    def __init__(self, vocab: Vocab, config: Optional[PolicyConfig] = None):
        super().__init__()
        self.vocab = vocab
        self.config = config or PolicyConfig()
        self.embed = nn.Embedding(len(vocab), self.config.embed)
        self.rnn = nn.GRU(self.config.embed, self.config.hidden, batch_first=True)
        self.lm_head = nn.Linear(self.config.hidden, len(vocab))
        self.value_head = nn.Linear(self.config.hidden, 1)
        self.to(DTYPE)

    def forward(self, ids: torch.Tensor, hidden: Optional[torch.Tensor] = None):
        out, hidden = self.rnn(self.embed(ids), hidden)
        return self.lm_head(out), self.value_head(out).squeeze(-1), hidden


def init_params(vocab: Vocab, config: Optional[PolicyConfig] = None, seed: int = 0) -> PolicyNet:
    """Weights uniform in +-init_scale; biases and the value head start at zero."""
    model = PolicyNet(vocab, config)
    gen = torch.Generator().manual_seed(seed)
    scale = model.config.init_scale
    with torch.no_grad():
        for name, param in model.named_parameters():
            if "bias" in name or name.startswith("value_head"):
                param.zero_()
            else:
                param.copy_((torch.rand(param.shape, generator=gen, dtype=DTYPE) * 2 - 1) * scale)
    return model


def _as_ids(model: PolicyNet, ids) -> torch.Tensor:
    ids = torch.as_tensor(ids, dtype=torch.long)
    if ids.numel() and (int(ids.min()) < 0 or int(ids.max()) >= len(model.vocab)):
        raise ValueError("token id outside the vocabulary")
    return ids


def forward(model: PolicyNet, token_ids) -> tuple:
    """Per-position (logits, values); accepts one sequence or a batch."""
    ids = _as_ids(model, token_ids)
    single = ids.dim() == 1
    logits, values, _ = model(ids.unsqueeze(0) if single else ids)
    return (logits[0], values[0]) if single else (logits, values)


def _padded(model: PolicyNet, sequences: Sequence[Sequence[int]]) -> torch.Tensor:
    width = max(len(s) for s in sequences)
    batch = torch.full((len(sequences), width), model.vocab.pad_id, dtype=torch.long)
    for i, seq in enumerate(sequences):
        batch[i, :len(seq)] = torch.as_tensor(list(seq), dtype=torch.long)
    return _as_ids(model, batch)


def batch_logprobs_and_values(model: PolicyNet, sequences: Sequence[Sequence[int]], temperature: float = 1.0) -> tuple:
    """Teacher-forced scores, right-padded: entry t scores token t+1; values[t] is the state before it."""
    if any(len(s) < 2 for s in sequences):
        raise ValueError("each sequence needs at least two tokens")
    ids = _padded(model, sequences)
    logits, values, _ = model(ids)
    logp = F.log_softmax(logits[:, :-1] / temperature, dim=-1)
    return logp.gather(-1, ids[:, 1:, None]).squeeze(-1), values[:, :-1]


def logprobs_and_values(model: PolicyNet, full_ids: Sequence[int], temperature: float = 1.0) -> tuple:
    logp, values = batch_logprobs_and_values(model, [list(full_ids)], temperature)
    return logp[0], values[0]


# ---------------- Sampling ----------------
@dataclass(frozen=True)
class Trajectory:
    ids: tuple
    prompt_len: int
    logprobs: tuple  # log-prob under the truncated distribution actually sampled from
    values: tuple

    @property
    def completion(self) -> tuple:
        return self.ids[self.prompt_len:]


def nucleus_probs(logits: torch.Tensor, temperature: float, top_p: float) -> torch.Tensor:
    probs = torch.softmax(logits / temperature, dim=-1)
    if top_p >= 1.0:
        return probs
    sorted_p, order = torch.sort(probs, dim=-1, descending=True, stable=True)
    keep_sorted = (sorted_p.cumsum(dim=-1) - sorted_p) < top_p
    keep = torch.zeros_like(keep_sorted).scatter(-1, order, keep_sorted)
    probs = probs * keep
    return probs / probs.sum(dim=-1, keepdim=True)


@torch.no_grad()
def sample(model: PolicyNet, prompt_ids: Sequence[int], cfg: SampleConfig, n: int = 1,
           generator: Optional[torch.Generator] = None) -> list:
    """Draw ``n`` completions of one prompt; stops per row at EOS or max_new_tokens."""
    if not prompt_ids:
        raise ValueError("prompt must contain at least BOS")
    gen = generator if generator is not None else torch.Generator().manual_seed(cfg.seed)
    eos = model.vocab.eos_id
    prompt = _as_ids(model, list(prompt_ids)).unsqueeze(0).expand(n, -1).contiguous()
    logits, values, hidden = model(prompt)
    step_logits, step_values = logits[:, -1], values[:, -1]
    done = [False] * n
    tokens = [[] for _ in range(n)]
    logprobs = [[] for _ in range(n)]
    vals = [[] for _ in range(n)]
    for _ in range(cfg.max_new_tokens):
        probs = nucleus_probs(step_logits, cfg.temperature, cfg.top_p)
        choice = torch.multinomial(probs, 1, generator=gen)
        chosen_lp = torch.log(probs.gather(1, choice)).squeeze(1)
        for i in range(n):
            if done[i]:
                continue
            tok = int(choice[i, 0])
            tokens[i].append(tok)
            logprobs[i].append(float(chosen_lp[i]))
            vals[i].append(float(step_values[i]))
            done[i] = tok == eos
        if all(done):
            break
        logits, values, hidden = model(choice, hidden)
        step_logits, step_values = logits[:, -1], values[:, -1]
    return [
        Trajectory(tuple(prompt_ids) + tuple(tokens[i]), len(prompt_ids), tuple(logprobs[i]), tuple(vals[i]))
        for i in range(n)
    ]


@torch.no_grad()
def greedy_decode(model: PolicyNet, prompt_ids: Sequence[int], max_new_tokens: int) -> list:
    logits, _, hidden = model(_as_ids(model, list(prompt_ids)).unsqueeze(0))
    out = []
    for _ in range(max_new_tokens):
        tok = int(torch.argmax(logits[0, -1]))
        out.append(tok)
        if tok == model.vocab.eos_id:
            break
        logits, _, hidden = model(torch.tensor([[tok]]), hidden)
    return out


# ---------------- Gradients / reference ----------------
def grads(model: PolicyNet, loss: torch.Tensor) -> dict:
    """Exact reverse-mode gradients of ``loss`` for every named parameter."""
    names, params = zip(*model.named_parameters())
    result = torch.autograd.grad(loss, params, allow_unused=True)
    return {name: torch.zeros_like(p) if g is None else g for name, p, g in zip(names, params, result)}


def freeze(model: PolicyNet) -> PolicyNet:
    ref = copy.deepcopy(model)
    ref.requires_grad_(False)
    return ref.eval()


def params_hash(model: PolicyNet) -> str:
    digest = hashlib.sha256()
    for name, tensor in sorted(model.state_dict().items()):
        digest.update(name.encode("utf-8"))
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


def make_optimizer(model: PolicyNet, policy_lr: float, value_lr: float) -> torch.optim.Optimizer:
    """Adam with the value head on its own learning rate."""
    value_params = list(model.value_head.parameters())
    value_ids = {id(p) for p in value_params}
    policy_params = [p for p in model.parameters() if id(p) not in value_ids]
    return torch.optim.Adam([
        {"params": policy_params, "lr": policy_lr},
        {"params": value_params, "lr": value_lr},
    ])


# ---------------- Supervised warm start ----------------
def sft_example(vocab: Vocab, instance: TaskInstance) -> tuple:
    """Returns (ids, loss_start): targets at shifted index >= loss_start are scored."""
    ids = [vocab.bos_id] + vocab.encode(instance.x) + vocab.encode_code(instance.y) + [vocab.eos_id]
    return ids, len(instance.x)


def sft_loss(model: PolicyNet, examples: Sequence[tuple]) -> tuple:
    """Summed NLL over solution tokens and their count."""
    ids = _padded(model, [seq for seq, _ in examples])
    logits, _, _ = model(ids)
    logp = F.log_softmax(logits[:, :-1], dim=-1).gather(-1, ids[:, 1:, None]).squeeze(-1)
    mask = torch.zeros_like(logp)
    for i, (seq, start) in enumerate(examples):
        mask[i, start:len(seq) - 1] = 1.0
    return -(logp * mask).sum(), mask.sum()


def sft_train(model: PolicyNet, corpus: Sequence[TaskInstance], epochs: int, lr: float = 1e-3,
              batch_size: int = 4, seed: int = 0) -> tuple:
    """Next-token training on (x, y) with x excluded from the loss; returns (model, epoch mean NLLs)."""
    examples = [sft_example(model.vocab, inst) for inst in corpus]
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    gen = torch.Generator().manual_seed(seed)
    history = []
    for epoch in range(epochs):
        order = torch.randperm(len(examples), generator=gen).tolist()
        total, count = 0.0, 0.0
        for start in range(0, len(order), batch_size):
            batch = [examples[i] for i in order[start:start + batch_size]]
            nll, tokens = sft_loss(model, batch)
            optimizer.zero_grad()
            (nll / tokens).backward()
            optimizer.step()
            total += float(nll)
            count += float(tokens)
        history.append(total / count)
        log.info("sft epoch %d: nll %.4f", epoch + 1, history[-1])
    return model, history


# ---------------- Checkpoints ----------------
def save_checkpoint(path: str, model: PolicyNet) -> None:
    """Layout: version, policy config, vocab listing, named tensors and their shapes."""
    state = model.state_dict()
    torch.save({
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "vocab": list(model.vocab.itos),
        "tensors": state,
        "shapes": {name: list(t.shape) for name, t in state.items()},
    }, path)


def load_checkpoint(path: str) -> PolicyNet:
    blob = torch.load(path, map_location="cpu", weights_only=True)
    if blob.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {blob.get('version')!r}")
    model = PolicyNet(Vocab(tuple(blob["vocab"])), PolicyConfig(**blob["config"]))
    model.load_state_dict(blob["tensors"])
    return model
