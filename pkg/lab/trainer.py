"""Training orchestration: SFT warm start, curriculum rollouts, PPO updates, evaluation and run reports."""
import dataclasses
import hashlib
import json
import logging
import os
import time
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import torch
import yaml

from analysis import fgo_mask
from corpus import BUCKETS, TaskInstance, load_corpus, validate_instance
from curriculum import (
    CccsConfig, CurriculumState, build_prompt, full_generation, init_state, record_outcome, restore_states,
    snapshot_states,
)
from minilang import DEFAULT_FUEL, CompileError, compile_source, render
from policy import (
    CHECKPOINT_VERSION, PolicyConfig, PolicyNet, SampleConfig, Vocab, batch_logprobs_and_values, build_vocab, freeze,
    init_params, load_checkpoint, make_optimizer, params_hash, sample, save_checkpoint, sft_train,
)
from rl import PpoConfig, Rollout, ppo_update
from runner import ExecReport, Outcome, compile_error_report, mean_pass_at_k, run_tests

log = logging.getLogger(__name__)

OUT_DIR = os.getenv("STEPLAB_OUT_DIR", "runs")
METRICS_FILE = "metrics.jsonl"
TIMING_FILE = "timing.jsonl"
CHECKPOINT_DIR = "checkpoint"
ABORT_DIR = "abort"
SECTIONS = ("policy", "sample", "eval_sample", "ppo", "cccs")
_TRACED = (Outcome.PASSED_ALL, Outcome.FAILED)


class ConfigError(ValueError):
    pass


class TrainingAborted(RuntimeError):
    pass


class CorpusRejected(TrainingAborted):
    pass


# ---------------- Config ----------------
@dataclass
class RunConfig:
    train_path: str = ""
    eval_path: str = ""
    out_dir: str = OUT_DIR
    seed: int = 0
    sft_epochs: int = 3
    sft_lr: float = 1e-3
    sft_batch_size: int = 4
    init_checkpoint: str = ""
    updates: int = 300
    samples_per_update: int = 8
    fuel: int = DEFAULT_FUEL
    disable_cccs: bool = False
    disable_fgo: bool = False
    eval_every: int = 25
    eval_samples: int = 4
    checkpoint_every: int = 25
    resume: bool = False
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    sample: SampleConfig = field(default_factory=SampleConfig)
    eval_sample: SampleConfig = field(default_factory=lambda: SampleConfig(temperature=0.2, top_p=0.95))
    ppo: PpoConfig = field(default_factory=PpoConfig)
    cccs: CccsConfig = field(default_factory=CccsConfig)

    def __post_init__(self):
        if self.updates < 0 or self.sft_epochs < 0:
            raise ValueError("updates and sft_epochs must be non-negative")
        if self.samples_per_update < 1 or self.eval_samples < 1 or self.fuel < 1:
            raise ValueError("samples_per_update, eval_samples and fuel must be at least 1")
        if self.eval_every < 0 or self.checkpoint_every < 0:
            raise ValueError("eval_every and checkpoint_every must be non-negative")

    @property
    def arm(self) -> str:
        if self.disable_cccs and self.disable_fgo:
            return "vanilla"
        if self.disable_cccs:
            return "fgo-only"
        if self.disable_fgo:
            return "cccs-only"
        return "full"


def _coerce(key: str, current, value):
    if isinstance(value, (dict, list)):
        raise ConfigError(f"{key}: nested values are not supported")
    if isinstance(current, bool):
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    try:
        if isinstance(current, int):
            return int(value)
        if isinstance(current, float):
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected {type(current).__name__}, got {value!r}") from None
    return "" if value is None else str(value)


def apply_overrides(config: RunConfig, overrides: dict) -> RunConfig:
    """Apply flat ``key`` / ``section.key`` overrides; None values are ignored."""
    top = {}
    nested = {section: {} for section in SECTIONS}
    for key, value in overrides.items():
        if value is None:
            continue
        section, _, name = key.rpartition(".")
        if section and section not in SECTIONS:
            raise ConfigError(f"unknown config key {key}")
        if not section and name in SECTIONS:
            raise ConfigError(f"{key} is a section; set {key}.<field> instead")
        target = getattr(config, section) if section else config
        if name not in {f.name for f in dataclasses.fields(target)}:
            raise ConfigError(f"unknown config key {key}")
        (nested[section] if section else top)[name] = _coerce(key, getattr(target, name), value)
    try:
        sections = {section: replace(getattr(config, section), **nested[section]) for section in SECTIONS}
        return replace(config, **top, **sections)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a flat key-value mapping")
    for key, value in raw.items():
        if isinstance(value, (dict, list)):
            raise ConfigError(f"{path}: {key} must be a scalar")
    return {str(k): v for k, v in raw.items()}


def config_to_dict(config: RunConfig) -> dict:
    return dataclasses.asdict(config)


def config_from_dict(data: dict) -> RunConfig:
    flat = {}
    for key, value in data.items():
        if isinstance(value, dict):
            flat.update({f"{key}.{name}": v for name, v in value.items()})
        else:
            flat[key] = value
    return apply_overrides(RunConfig(), flat)


# ---------------- Records ----------------
@dataclass(frozen=True)
class MetricsRecord:
    update: int
    categories: dict
    rollouts: int
    mean_reward: float
    pass1_train: float
    pass1_eval: Optional[float]
    mean_stage: float
    full_generation_fraction: float
    masked_fraction: float
    kl_mean: float
    clip_fraction: float
    policy_loss: float
    value_loss: float
    skipped: bool

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)


@dataclass(frozen=True)
class EvalReport:
    n: int
    pass_at_k: dict       # k -> mean pass@k
    by_difficulty: dict   # bucket -> {k -> mean pass@k}
    categories: dict
    per_task: tuple       # (id, n, c)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "pass_at_k": {str(k): v for k, v in self.pass_at_k.items()},
            "by_difficulty": {b: {str(k): v for k, v in d.items()} for b, d in self.by_difficulty.items()},
            "categories": dict(self.categories),
            "per_task": [list(row) for row in self.per_task],
        }


@dataclass
class TrainResult:
    model: PolicyNet
    records: list
    states: dict
    out_dir: str


def _empty_categories() -> dict:
    return {outcome.value: 0 for outcome in Outcome}


# ---------------- Scoring ----------------
def score_completion(vocab: Vocab, prefix_pieces: Sequence[str], completion_ids: Sequence[int], tests: Sequence,
                     fuel: int, use_fgo: bool) -> tuple:
    """Run prefix + completion against the tests; returns (ExecReport, mask over completion ids).

    Only programs that ran every test to completion get trace-based masks; the closing
    EOS is always kept.
    """
    ended = bool(completion_ids) and completion_ids[-1] == vocab.eos_id
    body = list(completion_ids[:-1] if ended else completion_ids)
    pieces = list(prefix_pieces) + vocab.decode(body)
    try:
        text, _ = render(pieces)
    except CompileError:
        report = compile_error_report()
    else:
        report = run_tests(text, tests, fuel)
    if use_fgo and report.category in _TRACED:
        flags = fgo_mask(pieces, report.program, report.traces).flags[len(prefix_pieces):]
    else:
        flags = (1,) * len(body)
    return report, tuple(flags) + ((1,) if ended else ())


def _prefix_pieces(vocab: Vocab, instance: TaskInstance, prompt_ids: Sequence[int]) -> list:
    return vocab.decode(prompt_ids[1 + len(instance.x):])


# ---------------- Evaluation ----------------
def evaluate(model: PolicyNet, instances: Sequence[TaskInstance], ks: Sequence[int] = (1,), n: int = 4,
             sample_cfg: Optional[SampleConfig] = None, fuel: int = DEFAULT_FUEL, seed: int = 0) -> EvalReport:
    """Sample n full generations per task and estimate pass@k; the policy is left untouched."""
    ks = tuple(sorted(set(ks)))
    if not ks or ks[0] < 1 or ks[-1] > n:
        raise ValueError(f"need 1 <= k <= n for every k, got ks={ks}, n={n}")
    cfg = sample_cfg or SampleConfig(temperature=0.2, top_p=0.95)
    vocab = model.vocab
    before = params_hash(model)
    gen = torch.Generator().manual_seed(seed)
    categories = _empty_categories()
    counts, per_bucket, per_task = [], {bucket: [] for bucket in BUCKETS}, []
    for inst in instances:
        prompt = [vocab.bos_id] + vocab.encode(inst.x)
        correct = 0
        for traj in sample(model, prompt, cfg, n=n, generator=gen):
            report, _ = score_completion(vocab, [], traj.completion, inst.tests, fuel, use_fgo=False)
            categories[report.category.value] += 1
            correct += report.category is Outcome.PASSED_ALL
        counts.append((n, correct))
        per_bucket[inst.difficulty].append((n, correct))
        per_task.append((inst.id, n, correct))
    if params_hash(model) != before:
        raise RuntimeError("evaluation modified the policy parameters")
    return EvalReport(
        n=n,
        pass_at_k={k: mean_pass_at_k(counts, k) for k in ks},
        by_difficulty={b: {k: mean_pass_at_k(c, k) for k in ks} for b, c in per_bucket.items() if c},
        categories=categories,
        per_task=tuple(per_task),
    )


def eval_seed(seed: int, update: int) -> int:
    return int(np.random.SeedSequence([seed, update]).generate_state(1)[0])


# ---------------- Checkpoints ----------------
def _write_json(path: str, data) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, sort_keys=True, indent=2)


def _read_json(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class _RunState:
    model: PolicyNet
    ref: PolicyNet
    optimizer: torch.optim.Optimizer
    generator: torch.Generator
    np_rng: np.random.Generator
    states: dict
    update: int


def save_run_state(directory: str, config: RunConfig, run: _RunState) -> None:
    """Layout: params.pt, reference.pt, optimizer.pt, curriculum.json, run_config.json, manifest.json."""
    os.makedirs(directory, exist_ok=True)
    params_path = os.path.join(directory, "params.pt")
    save_checkpoint(params_path, run.model)
    save_checkpoint(os.path.join(directory, "reference.pt"), run.ref)
    torch.save({"optimizer": run.optimizer.state_dict(), "generator": run.generator.get_state()},
               os.path.join(directory, "optimizer.pt"))
    _write_json(os.path.join(directory, "curriculum.json"), snapshot_states(run.states))
    _write_json(os.path.join(directory, "run_config.json"), config_to_dict(config))
    _write_json(os.path.join(directory, "manifest.json"), {
        "version": CHECKPOINT_VERSION,
        "seed": config.seed,
        "update": run.update,
        "params_sha256": _file_sha256(params_path),
        "numpy_rng": run.np_rng.bit_generator.state,
    })
    log.info("checkpoint at update %d -> %s", run.update, directory)


def load_run_state(directory: str, config: RunConfig, instances: Sequence[TaskInstance]) -> _RunState:
    manifest = _read_json(os.path.join(directory, "manifest.json"))
    params_path = os.path.join(directory, "params.pt")
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{directory}: unsupported checkpoint version {manifest.get('version')!r}")
    if _file_sha256(params_path) != manifest["params_sha256"]:
        raise ValueError(f"{params_path}: content hash does not match the manifest")
    model = load_checkpoint(params_path)
    ref = freeze(load_checkpoint(os.path.join(directory, "reference.pt")))
    blob = torch.load(os.path.join(directory, "optimizer.pt"), map_location="cpu", weights_only=True)
    optimizer = make_optimizer(model, config.ppo.policy_lr, config.ppo.value_lr)
    optimizer.load_state_dict(blob["optimizer"])
    generator = torch.Generator()
    generator.set_state(blob["generator"])
    np_rng = np.random.default_rng()
    np_rng.bit_generator.state = manifest["numpy_rng"]
    states = restore_states(_read_json(os.path.join(directory, "curriculum.json")), instances)
    return _RunState(model, ref, optimizer, generator, np_rng, states, int(manifest["update"]))


def load_run_config(out_dir: str) -> RunConfig:
    return config_from_dict(_read_json(os.path.join(out_dir, CHECKPOINT_DIR, "run_config.json")))


# ---------------- Training ----------------
def load_checked_corpus(path: str, fuel: int) -> list:
    """Load a split and refuse it if any instance fails validation."""
    instances = load_corpus(path)
    if not instances:
        raise CorpusRejected(f"{path}: corpus is empty")
    for inst in instances:
        report = validate_instance(inst, fuel)
        if not report.accepted:
            raise CorpusRejected(f"{path}: instance {inst.id} rejected ({report.reason})")
    return instances


def _initial_states(instances: Sequence[TaskInstance], disable_cccs: bool) -> dict:
    states = {}
    for inst in instances:
        state = init_state(inst.E)
        states[inst.id] = replace(state, c=0) if disable_cccs else state
    return states


def _fresh_run(config: RunConfig, train_set: Sequence[TaskInstance]) -> _RunState:
    if config.init_checkpoint:
        model = load_checkpoint(config.init_checkpoint)
        log.info("warm start from %s", config.init_checkpoint)
    else:
        model = init_params(build_vocab(), config.policy, config.seed)
        if config.sft_epochs:
            sft_train(model, train_set, config.sft_epochs, config.sft_lr, config.sft_batch_size, config.seed)
    return _RunState(
        model=model,
        ref=freeze(model),
        optimizer=make_optimizer(model, config.ppo.policy_lr, config.ppo.value_lr),
        generator=torch.Generator().manual_seed(config.seed),
        np_rng=np.random.default_rng(config.seed),
        states=_initial_states(train_set, config.disable_cccs),
        update=0,
    )


def _truncate_lines(path: str, keep: int) -> list:
    lines = []
    if os.path.exists(path):
        with open(path, "r", encoding="utf-8") as fh:
            lines = [line for line in fh.read().splitlines() if line.strip()][:keep]
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(line + "\n" for line in lines)
    return lines


def _collect(run: _RunState, config: RunConfig, batch: Sequence[TaskInstance], programs: dict) -> tuple:
    """Sample every rollout of the update and score it; returns (pending rollouts, per-sample results)."""
    vocab = run.model.vocab
    pending, results = [], []
    for inst in batch:
        prompt, prompt_len = build_prompt(inst, run.states[inst.id], vocab, programs[inst.id])
        prefix = _prefix_pieces(vocab, inst, prompt)
        trajs = sample(run.model, prompt, config.sample, n=config.ppo.rollouts_per_sample, generator=run.generator)
        for traj in trajs:
            report, mask = score_completion(vocab, prefix, traj.completion, inst.tests, config.fuel,
                                            use_fgo=not config.disable_fgo)
            pending.append((traj, mask, report))
            results.append((inst.id, report))
    return pending, results


@torch.no_grad()
def _score_tokens(model: PolicyNet, pending: Sequence[tuple], temperature: float) -> list:
    logp, values = batch_logprobs_and_values(model, [traj.ids for traj, _, _ in pending], temperature)
    rows = []
    for i, (traj, _, _) in enumerate(pending):
        start, length = traj.prompt_len - 1, len(traj.completion)
        rows.append((logp[i, start:start + length].tolist(), values[i, start:start + length].tolist()))
    return rows


def _to_rollouts(run: _RunState, pending: Sequence[tuple], temperature: float) -> list:
    policy_rows = _score_tokens(run.model, pending, temperature)
    ref_rows = _score_tokens(run.ref, pending, temperature)
    rollouts = []
    for (traj, mask, report), (old_lp, values), (ref_lp, _) in zip(pending, policy_rows, ref_rows):
        rollouts.append(Rollout(
            prompt_len=traj.prompt_len,
            ids=traj.ids,
            logprobs_old=tuple(old_lp),
            ref_logprobs=tuple(ref_lp),
            values=tuple(values),
            mask=mask,
            terminal_reward=report.reward,
        ))
    return rollouts


def _step(run: _RunState, config: RunConfig, train_set: Sequence[TaskInstance], programs: dict,
          eval_set: Sequence[TaskInstance]) -> MetricsRecord:
    update = run.update + 1
    size = min(config.samples_per_update, len(train_set))
    batch = [train_set[int(i)] for i in run.np_rng.choice(len(train_set), size=size, replace=False)]
    pending, results = _collect(run, config, batch, programs)
    rollouts = _to_rollouts(run, pending, config.sample.temperature)
    stats = ppo_update(run.model, run.optimizer, rollouts, config.ppo, config.sample.temperature, run.generator)

    for sample_id, report in results:
        run.states[sample_id] = record_outcome(run.states[sample_id], report.category is Outcome.PASSED_ALL,
                                               config.cccs)
    run.update = update

    categories = _empty_categories()
    per_sample = Counter()
    for sample_id, report in results:
        categories[report.category.value] += 1
        per_sample[sample_id] += report.category is Outcome.PASSED_ALL
    n = config.ppo.rollouts_per_sample
    pass1_eval = None
    if eval_set and config.eval_every and (update % config.eval_every == 0 or update == config.updates):
        report = evaluate(run.model, eval_set, (1,), config.eval_samples, config.eval_sample, config.fuel,
                          eval_seed(config.seed, update))
        pass1_eval = report.pass_at_k[1]
    stages = [state.c for state in run.states.values()]
    return MetricsRecord(
        update=update,
        categories=categories,
        rollouts=len(results),
        mean_reward=float(np.mean([report.reward for _, report in results])),
        pass1_train=mean_pass_at_k([(n, per_sample[inst.id]) for inst in batch], 1),
        pass1_eval=pass1_eval,
        mean_stage=float(np.mean(stages)),
        full_generation_fraction=sum(full_generation(s) for s in run.states.values()) / len(run.states),
        masked_fraction=stats["masked_fraction"],
        kl_mean=stats["kl_mean"],
        clip_fraction=stats["clip_fraction"],
        policy_loss=stats["policy_loss"],
        value_loss=stats["value_loss"],
        skipped=stats["skipped"],
    )


def train(config: RunConfig) -> TrainResult:
    """SFT warm start, freeze the reference, then curriculum PPO for ``config.updates`` updates."""
    train_set = load_checked_corpus(config.train_path, config.fuel)
    eval_set = load_checked_corpus(config.eval_path, config.fuel) if config.eval_path else []
    programs = {inst.id: compile_source(inst.y) for inst in train_set}
    if len(programs) != len(train_set):
        raise CorpusRejected(f"{config.train_path}: duplicate instance ids")
    os.makedirs(config.out_dir, exist_ok=True)
    metrics_path = os.path.join(config.out_dir, METRICS_FILE)
    timing_path = os.path.join(config.out_dir, TIMING_FILE)
    checkpoint_dir = os.path.join(config.out_dir, CHECKPOINT_DIR)

    if config.resume:
        run = load_run_state(checkpoint_dir, config, train_set)
        records = [json.loads(line) for line in _truncate_lines(metrics_path, run.update)]
        _truncate_lines(timing_path, run.update)
        log.info("resuming %s at update %d", config.out_dir, run.update)
    else:
        run = _fresh_run(config, train_set)
        records = []
        _truncate_lines(metrics_path, 0)
        _truncate_lines(timing_path, 0)
    ref_hash = params_hash(run.ref)
    log.info("training arm %s: %d samples, %d updates, seed %d",
             config.arm, len(train_set), config.updates, config.seed)

    try:
        while run.update < config.updates:
            started = time.perf_counter()
            record = _step(run, config, train_set, programs, eval_set)
            elapsed = time.perf_counter() - started
            with open(metrics_path, "a", encoding="utf-8") as fh:
                fh.write(record.to_json() + "\n")
            with open(timing_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps({"update": record.update, "seconds": round(elapsed, 6)}) + "\n")
            records.append(dataclasses.asdict(record))
            log.info("update %d: reward %.3f pass@1 %.3f stage %.2f masked %.3f (%.2fs)", record.update,
                     record.mean_reward, record.pass1_train, record.mean_stage, record.masked_fraction, elapsed)
            if config.checkpoint_every and record.update % config.checkpoint_every == 0:
                save_run_state(checkpoint_dir, config, run)
    except Exception as exc:
        abort_dir = os.path.join(config.out_dir, ABORT_DIR)
        try:
            save_run_state(abort_dir, config, run)
        except Exception:
            log.exception("could not write the abort checkpoint")
        raise TrainingAborted(f"training failed at update {run.update + 1}: {exc}") from exc

    if params_hash(run.ref) != ref_hash:
        raise TrainingAborted("reference policy changed during training")
    save_run_state(checkpoint_dir, config, run)
    return TrainResult(run.model, records, run.states, config.out_dir)


# ---------------- Reports ----------------
def read_metrics(path: str) -> list:
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def format_report(records: Sequence[dict]) -> str:
    """Per-update outcome breakdown as a fixed-width table."""
    names = [outcome.value for outcome in Outcome]
    header = ["update"] + names + ["reward", "pass@1", "eval@1", "stage", "masked", "kl"]
    rows = [header]
    for rec in records:
        eval_cell = "-" if rec.get("pass1_eval") is None else f"{rec['pass1_eval']:.3f}"
        rows.append(
            [str(rec["update"])]
            + [str(rec["categories"].get(name, 0)) for name in names]
            + [f"{rec['mean_reward']:.3f}", f"{rec['pass1_train']:.3f}", eval_cell,
               f"{rec['mean_stage']:.2f}", f"{rec['masked_fraction']:.3f}", f"{rec['kl_mean']:.4f}"]
        )
    return _table(rows)


def _table(rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in rows)


def summarize_run(run_dir: str) -> dict:
    records = read_metrics(os.path.join(run_dir, METRICS_FILE))
    try:
        config = load_run_config(run_dir)
        arm, seed = config.arm, config.seed
    except (OSError, ValueError):
        arm, seed = "?", None
    evals = [rec["pass1_eval"] for rec in records if rec.get("pass1_eval") is not None]
    return {
        "run": run_dir,
        "arm": arm,
        "seed": seed,
        "updates": records[-1]["update"] if records else 0,
        "final_eval_pass1": evals[-1] if evals else None,
        "full_generation_fraction": records[-1]["full_generation_fraction"] if records else None,
    }


def compare_runs(run_dirs: Sequence[str]) -> tuple:
    """Summaries per run plus, per seed, whether the full arm matched or beat vanilla PPO."""
    summaries = [summarize_run(d) for d in run_dirs]
    by_seed = {}
    for summary in summaries:
        by_seed.setdefault(summary["seed"], {})[summary["arm"]] = summary["final_eval_pass1"]
    wins = {}
    for seed, arms in sorted(by_seed.items(), key=lambda item: str(item[0])):
        full, vanilla = arms.get("full"), arms.get("vanilla")
        if full is not None and vanilla is not None:
            wins[seed] = full >= vanilla
    return summaries, wins


def format_comparison(summaries: Sequence[dict], wins: dict) -> str:
    rows = [["run", "arm", "seed", "updates", "eval@1", "full-gen"]]
    for s in summaries:
        rows.append([
            s["run"], s["arm"], str(s["seed"]), str(s["updates"]),
            "-" if s["final_eval_pass1"] is None else f"{s['final_eval_pass1']:.3f}",
            "-" if s["full_generation_fraction"] is None else f"{s['full_generation_fraction']:.2f}",
        ])
    text = _table(rows)
    if wins:
        text += f"\nfull >= vanilla in {sum(wins.values())} of {len(wins)} seeds"
    return text
