"""PPO pieces: KL-shaped rewards, GAE, masked clipped surrogate and the update loop."""
import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import torch
from torch.nn.utils import clip_grad_norm_
from torch.nn.utils.rnn import pad_sequence

from policy import DTYPE, PolicyNet, batch_logprobs_and_values

log = logging.getLogger(__name__)

ADV_EPS = 1e-8
KL_MODES = ("reward", "loss")


@dataclass
class PpoConfig:
    gamma: float = 1.0
    lam: float = 0.95
    beta: float = 0.05
    clip_eps: float = 0.2
    value_coef: float = 0.5
    epochs_per_batch: int = 2
    minibatch_size: int = 32
    rollouts_per_sample: int = 16
    policy_lr: float = 2e-4
    value_lr: float = 6e-4
    max_grad_norm: float = 1.0
    kl_mode: str = "reward"

    def __post_init__(self):
        if not 0 <= self.gamma <= 1 or not 0 <= self.lam <= 1:
            raise ValueError("gamma and lam must lie in [0, 1]")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be positive")
        if self.epochs_per_batch < 1 or self.minibatch_size < 1 or self.rollouts_per_sample < 1:
            raise ValueError("epochs_per_batch, minibatch_size and rollouts_per_sample must be at least 1")
        if self.kl_mode not in KL_MODES:
            raise ValueError(f"kl_mode must be one of {', '.join(KL_MODES)}")


@dataclass(frozen=True)
class Rollout:
    """One sampled completion; every per-token field is aligned with ``ids[prompt_len:]``."""
    prompt_len: int
    ids: tuple
    logprobs_old: tuple
    ref_logprobs: tuple
    values: tuple
    mask: tuple
    terminal_reward: float
    advantages: Optional[tuple] = None
    returns: Optional[tuple] = None

    def __post_init__(self):
        n = len(self.ids) - self.prompt_len
        if self.prompt_len < 1 or n < 1:
            raise ValueError("rollout needs a non-empty prompt and completion")
        for name in ("logprobs_old", "ref_logprobs", "values", "mask"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has {len(getattr(self, name))} entries, completion has {n}")

    @property
    def length(self) -> int:
        return len(self.ids) - self.prompt_len


def shaped_rewards(logprobs_old: Sequence[float], ref_logprobs: Sequence[float], terminal_reward: float,
                   beta: float) -> list:
    """Per-token KL penalty with the outcome reward added on the last token."""
    rewards = [-beta * (old - ref) for old, ref in zip(logprobs_old, ref_logprobs)]
    rewards[-1] += terminal_reward
    return rewards


def gae(rewards: Sequence[float], values: Sequence[float], gamma: float, lam: float) -> tuple:
    """Generalized advantage estimation with a zero value after the final token."""
    advantages = [0.0] * len(rewards)
    running = 0.0
    for t in reversed(range(len(rewards))):
        next_value = values[t + 1] if t + 1 < len(rewards) else 0.0
        delta = rewards[t] + gamma * next_value - values[t]
        running = delta + gamma * lam * running
        advantages[t] = running
    returns = [a + v for a, v in zip(advantages, values)]
    return advantages, returns


def prepare_rollout(rollout: Rollout, cfg: PpoConfig) -> Rollout:
    beta = cfg.beta if cfg.kl_mode == "reward" else 0.0
    rewards = shaped_rewards(rollout.logprobs_old, rollout.ref_logprobs, rollout.terminal_reward, beta)
    advantages, returns = gae(rewards, rollout.values, cfg.gamma, cfg.lam)
    return replace(rollout, advantages=tuple(advantages), returns=tuple(returns))


def normalize_advantages(rollouts: Sequence[Rollout]) -> Optional[list]:
    """Standardize advantages using statistics over masked-in tokens only.

    Returns one tensor per rollout, or None when no token is masked in.
    """
    advs = [torch.tensor(r.advantages, dtype=DTYPE) for r in rollouts]
    masks = [torch.tensor(r.mask, dtype=torch.bool) for r in rollouts]
    included = torch.cat([a[m] for a, m in zip(advs, masks)])
    if included.numel() == 0:
        return None
    mean = included.mean()
    std = included.std(unbiased=False)
    return [(a - mean) / (std + ADV_EPS) for a in advs]


def clipped_surrogate(ratio: torch.Tensor, adv: torch.Tensor, clip_eps: float) -> torch.Tensor:
    """Per-token min(ratio * A, clip(ratio) * A)."""
    return torch.minimum(ratio * adv, torch.clamp(ratio, 1 - clip_eps, 1 + clip_eps) * adv)


def ppo_loss(model: PolicyNet, batch: Sequence[Rollout], norm_advs: Sequence[torch.Tensor], cfg: PpoConfig,
             temperature: float) -> tuple:
    """Clipped surrogate plus value regression, both averaged over masked-in tokens."""
    logp, values = batch_logprobs_and_values(model, [r.ids for r in batch], temperature)
    new_lp, new_v = [], []
    for i, r in enumerate(batch):
        start = r.prompt_len - 1
        new_lp.append(logp[i, start:start + r.length])
        new_v.append(values[i, start:start + r.length])
    new_lp = pad_sequence(new_lp, batch_first=True)
    new_v = pad_sequence(new_v, batch_first=True)

    def stack(field):
        return pad_sequence([torch.tensor(getattr(r, field), dtype=DTYPE) for r in batch], batch_first=True)

    old_lp, ref_lp, returns, mask = stack("logprobs_old"), stack("ref_logprobs"), stack("returns"), stack("mask")
    adv = pad_sequence(list(norm_advs), batch_first=True)
    count = mask.sum()
    if count == 0:
        raise ValueError("minibatch has no masked-in tokens")

    ratio = torch.exp(new_lp - old_lp)
    policy_loss = -(clipped_surrogate(ratio, adv, cfg.clip_eps) * mask).sum() / count
    value_loss = (((new_v - returns) ** 2) * mask).sum() / count
    kl = ((new_lp - ref_lp) * mask).sum() / count
    loss = policy_loss + cfg.value_coef * value_loss
    if cfg.kl_mode == "loss":
        loss = loss + cfg.beta * kl

    with torch.no_grad():
        outside = ((ratio - 1).abs() > cfg.clip_eps).to(DTYPE)
        stats = {
            "policy_loss": float(policy_loss),
            "value_loss": float(value_loss),
            "clip_fraction": float((outside * mask).sum() / count),
            "kl_mean": float(kl),
        }
    return loss, stats


def ppo_update(model: PolicyNet, optimizer: torch.optim.Optimizer, rollouts: Sequence[Rollout], cfg: PpoConfig,
               temperature: float, generator: torch.Generator) -> dict:
    """Run ``epochs_per_batch`` passes of shuffled minibatch steps; a batch with no masked-in token is skipped."""
    prepared = [prepare_rollout(r, cfg) if r.advantages is None else r for r in rollouts]
    total_tokens = sum(r.length for r in prepared)
    included_tokens = sum(sum(r.mask) for r in prepared)
    stats = {
        "policy_loss": 0.0,
        "value_loss": 0.0,
        "clip_fraction": 0.0,
        "kl_mean": 0.0,
        "masked_fraction": 1.0 - included_tokens / total_tokens if total_tokens else 0.0,
        "included_tokens": int(included_tokens),
        "skipped": False,
    }
    norm = normalize_advantages(prepared)
    if norm is None:
        log.warning("every token of the batch is masked out; skipping the update")
        stats["skipped"] = True
        return stats

    steps = 0
    for _ in range(cfg.epochs_per_batch):
        order = torch.randperm(len(prepared), generator=generator).tolist()
        for start in range(0, len(order), cfg.minibatch_size):
            idx = [i for i in order[start:start + cfg.minibatch_size] if any(prepared[i].mask)]
            if not idx:
                continue
            loss, step_stats = ppo_loss(model, [prepared[i] for i in idx], [norm[i] for i in idx], cfg, temperature)
            optimizer.zero_grad()
            loss.backward()
            clip_grad_norm_(model.parameters(), cfg.max_grad_norm)
            optimizer.step()
            for key in ("policy_loss", "value_loss", "clip_fraction", "kl_mean"):
                stats[key] += step_stats[key]
            steps += 1
    for key in ("policy_loss", "value_loss", "clip_fraction", "kl_mean"):
        stats[key] /= max(steps, 1)
    return stats
