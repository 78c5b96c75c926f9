"""Desk-scale curriculum PPO lab for ML0 program synthesis.

Usage:
    python app.py gen-corpus --seed 0 --size 100 --out-dir corpus
    python app.py validate corpus/train.jsonl
    python app.py sft --train corpus/train.jsonl --out sft.pt
    python app.py train --train corpus/train.jsonl --eval corpus/valid.jsonl --out-dir runs/full-0
    python app.py train --config run.yaml --disable-fgo --set ppo.clip_eps=0.8
    python app.py eval --checkpoint runs/full-0/checkpoint/params.pt --corpus corpus/test.jsonl --k 1,5 --n 10
    python app.py report runs/full-0 runs/vanilla-0 --compare
"""
import argparse
import json
import logging
import os
import sys
from typing import Optional, Sequence

from corpus import (
    TEMPLATES, CorpusFormatError, GeneratorConfig, generate_corpus, load_corpus, load_generator_config, save_corpus,
    split_corpus, validate_instance,
)
from minilang import DEFAULT_FUEL
from policy import PolicyConfig, SampleConfig, build_vocab, init_params, load_checkpoint, save_checkpoint, sft_train
from trainer import (
    CHECKPOINT_DIR, METRICS_FILE, OUT_DIR, ConfigError, RunConfig, TrainingAborted, apply_overrides, compare_runs,
    evaluate, format_comparison, format_report, load_config_file, load_run_config, read_metrics, train,
)

log = logging.getLogger("steplab")

LOG_LEVEL = os.getenv("STEPLAB_LOG_LEVEL", "INFO").upper()

# (flag, dotted config key, type, help); help gets the effective default appended.
TRAIN_FLAGS = (
    ("--train", "train_path", str, "training split (JSONL)"),
    ("--eval", "eval_path", str, "evaluation split (JSONL); empty disables evaluation"),
    ("--out-dir", "out_dir", str, "run directory for metrics and checkpoints"),
    ("--seed", "seed", int, "seed for every stochastic component"),
    ("--sft-epochs", "sft_epochs", int, "supervised warm-start epochs"),
    ("--sft-lr", "sft_lr", float, "supervised warm-start learning rate"),
    ("--init-checkpoint", "init_checkpoint", str, "start from this policy checkpoint instead of SFT"),
    ("--updates", "updates", int, "number of PPO updates"),
    ("--samples-per-update", "samples_per_update", int, "tasks sampled per update (M)"),
    ("--rollouts-per-sample", "ppo.rollouts_per_sample", int, "completions drawn per task; published setting 16"),
    ("--fuel", "fuel", int, "statement budget per test execution"),
    ("--eval-every", "eval_every", int, "evaluation cadence in updates; 0 disables"),
    ("--eval-samples", "eval_samples", int, "completions per task during evaluation"),
    ("--checkpoint-every", "checkpoint_every", int, "checkpoint cadence in updates; 0 only at the end"),
    ("--temperature", "sample.temperature", float, "rollout sampling temperature; published setting 0.8"),
    ("--top-p", "sample.top_p", float, "rollout nucleus mass; published setting 0.9"),
    ("--max-new-tokens", "sample.max_new_tokens", int,
     "completion length cap; published setting 1024, shortened for ML0 programs"),
    ("--beta", "ppo.beta", float, "KL coefficient against the frozen reference; published setting 0.05"),
    ("--clip-eps", "ppo.clip_eps", float, "PPO ratio clip; published setting 0.8, kept runnable but not the default"),
    ("--gamma", "ppo.gamma", float, "discount"),
    ("--lam", "ppo.lam", float, "GAE lambda"),
    ("--kl-mode", "ppo.kl_mode", str, "where the KL term lives: reward | loss"),
    ("--policy-lr", "ppo.policy_lr", float, "policy learning rate"),
    ("--value-lr", "ppo.value_lr", float, "value-head learning rate"),
    ("--alpha", "cccs.alpha", float, "moving pass-rate weight; no published value"),
    ("--threshold", "cccs.threshold", float, "pass rate needed to move one stage back; no published value"),
)
SWITCHES = (
    ("--disable-cccs", "disable_cccs", "always generate from the requirement alone"),
    ("--disable-fgo", "disable_fgo", "keep every generated token in the loss"),
    ("--resume", "resume", "continue the run stored in --out-dir"),
)


def _default_of(config: RunConfig, key: str):
    section, _, name = key.rpartition(".")
    return getattr(getattr(config, section) if section else config, name)


def _parse_set(values: Sequence[str]) -> dict:
    overrides = {}
    for item in values or ():
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value.strip()
    return overrides


# ---------------- Parser ----------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="app.py", description="Curriculum PPO lab for ML0 program synthesis")
    parser.add_argument("--log-level", default=LOG_LEVEL, help="logging level (default: %(default)s)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="generate a seeded task corpus and split it 50/25/25")
    p.add_argument("--seed", type=int, default=0, help="corpus seed (default: %(default)s)")
    p.add_argument("--size", type=int, default=100, help="number of instances (default: %(default)s)")
    p.add_argument("--out-dir", default="corpus", help="where train/valid/test.jsonl go (default: %(default)s)")
    p.add_argument("--config", help="flat YAML generator config")
    p.add_argument("--mix", help="template weights, e.g. clamp=1,sum=2 (templates: %s)" % ", ".join(TEMPLATES))

    p = sub.add_parser("validate", help="run the acceptance checks over a corpus file")
    p.add_argument("corpus", help="JSONL corpus file")
    p.add_argument("--fuel", type=int, default=DEFAULT_FUEL, help="statement budget (default: %(default)s)")

    defaults_sft = RunConfig()
    p = sub.add_parser("sft", help="supervised warm start only; writes a policy checkpoint")
    p.add_argument("--train", required=True, help="training split (JSONL)")
    p.add_argument("--out", required=True, help="checkpoint file to write")
    p.add_argument("--epochs", type=int, default=defaults_sft.sft_epochs, help="epochs (default: %(default)s)")
    p.add_argument("--lr", type=float, default=defaults_sft.sft_lr, help="learning rate (default: %(default)s)")
    p.add_argument("--batch-size", type=int, default=defaults_sft.sft_batch_size, help="batch size (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="initialization and shuffle seed (default: %(default)s)")
    p.add_argument("--embed", type=int, default=defaults_sft.policy.embed, help="embedding width (default: %(default)s)")
    p.add_argument("--hidden", type=int, default=defaults_sft.policy.hidden,
                   help="recurrent width (default: %(default)s)")

    defaults = RunConfig()
    p = sub.add_parser("train", help="SFT warm start followed by curriculum PPO")
    p.add_argument("--config", help="flat YAML with RunConfig keys (section.field for nested ones)")
    for flag, key, kind, text in TRAIN_FLAGS:
        p.add_argument(flag, dest=key, type=kind, default=None,
                       help=f"{text} (default: {_default_of(defaults, key)!r})")
    for flag, key, text in SWITCHES:
        p.add_argument(flag, dest=key, action="store_const", const=True, default=None, help=text)
    p.add_argument("--set", dest="assignments", action="append", metavar="KEY=VALUE",
                   help="override any RunConfig key, e.g. ppo.minibatch_size=16")

    p = sub.add_parser("eval", help="estimate pass@k of a checkpoint on a corpus split")
    p.add_argument("--checkpoint", required=True, help="policy checkpoint (params.pt)")
    p.add_argument("--corpus", required=True, help="JSONL corpus split")
    p.add_argument("--k", default="1", help="comma-separated k values (default: %(default)s)")
    p.add_argument("--n", type=int, default=10, help="samples per task (default: %(default)s)")
    p.add_argument("--temperature", type=float, default=defaults.eval_sample.temperature,
                   help="sampling temperature; published setting 0.2 (default: %(default)s)")
    p.add_argument("--top-p", type=float, default=defaults.eval_sample.top_p,
                   help="nucleus mass; published setting 0.95 (default: %(default)s)")
    p.add_argument("--max-new-tokens", type=int, default=defaults.eval_sample.max_new_tokens,
                   help="completion length cap; published setting 1024 (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="sampling seed (default: %(default)s)")
    p.add_argument("--fuel", type=int, default=DEFAULT_FUEL, help="statement budget (default: %(default)s)")

    p = sub.add_parser("report", help="summarize metrics streams")
    p.add_argument("runs", nargs="+", help="run directories")
    p.add_argument("--compare", action="store_true", help="compare final evaluation across runs")
    return parser


# ---------------- Commands ----------------
def _parse_mix(text: str) -> dict:
    mix = {}
    for item in text.split(","):
        name, sep, weight = item.partition("=")
        if not sep:
            raise ConfigError(f"--mix expects name=weight pairs, got {item!r}")
        try:
            mix[name.strip()] = float(weight)
        except ValueError:
            raise ConfigError(f"--mix weight for {name.strip()} is not a number") from None
    return mix


def cmd_gen_corpus(args) -> int:
    try:
        config = load_generator_config(args.config) if args.config else GeneratorConfig()
        mix = _parse_mix(args.mix) if args.mix else None
        instances = generate_corpus(args.seed, args.size, mix, config)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    os.makedirs(args.out_dir, exist_ok=True)
    for name, split in zip(("train", "valid", "test"), split_corpus(instances, args.seed)):
        path = os.path.join(args.out_dir, f"{name}.jsonl")
        save_corpus(split, path)
        log.info("wrote %d instances to %s", len(split), path)
    return 0


def cmd_validate(args) -> int:
    try:
        instances = load_corpus(args.corpus)
    except (OSError, CorpusFormatError) as exc:
        log.error("%s", exc)
        return 1
    rejected = 0
    for inst in instances:
        report = validate_instance(inst, args.fuel)
        if not report.accepted:
            rejected += 1
            print(f"{inst.id}: reject ({report.reason})")
    print(f"{len(instances) - rejected} accepted, {rejected} rejected")
    return 1 if rejected else 0


def cmd_sft(args) -> int:
    try:
        instances = load_corpus(args.train)
    except (OSError, CorpusFormatError) as exc:
        log.error("%s", exc)
        return 1
    model = init_params(build_vocab(), PolicyConfig(embed=args.embed, hidden=args.hidden), args.seed)
    _, losses = sft_train(model, instances, args.epochs, args.lr, args.batch_size, args.seed)
    save_checkpoint(args.out, model)
    print(json.dumps({"checkpoint": args.out, "nll": losses}))
    return 0


def resolve_train_config(args) -> RunConfig:
    """Defaults < config file < flags; a resumed run starts from its stored config."""
    overrides = load_config_file(args.config) if args.config else {}
    flags = {key: getattr(args, key) for _, key, _, _ in TRAIN_FLAGS}
    flags.update({key: getattr(args, key) for _, key, _ in SWITCHES})
    overrides.update({k: v for k, v in flags.items() if v is not None})
    overrides.update(_parse_set(args.assignments))
    base = RunConfig()
    if str(overrides.get("resume", "")).lower() in ("1", "true", "yes", "on"):
        out_dir = str(overrides.get("out_dir") or base.out_dir)
        try:
            base = load_run_config(out_dir)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot resume {out_dir}: {exc}") from None
    config = apply_overrides(base, overrides)
    if not config.train_path:
        raise ConfigError("a training split is required (--train)")
    for path in (config.train_path, config.eval_path, config.init_checkpoint):
        if path and not os.path.exists(path):
            raise ConfigError(f"{path} does not exist")
    if config.resume and not os.path.isdir(os.path.join(config.out_dir, CHECKPOINT_DIR)):
        raise ConfigError(f"{config.out_dir} has no checkpoint to resume")
    return config


def cmd_train(args) -> int:
    config = resolve_train_config(args)
    result = train(config)
    last = result.records[-1] if result.records else {}
    print(json.dumps({"out_dir": result.out_dir, "updates": last.get("update", 0),
                      "pass1_eval": last.get("pass1_eval")}))
    return 0


def cmd_eval(args) -> int:
    try:
        ks = [int(k) for k in args.k.split(",") if k.strip()]
        cfg = SampleConfig(args.temperature, args.top_p, args.max_new_tokens, args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    try:
        model = load_checkpoint(args.checkpoint)
        instances = load_corpus(args.corpus)
    except (OSError, ValueError) as exc:
        log.error("%s", exc)
        return 1
    try:
        report = evaluate(model, instances, ks, args.n, cfg, args.fuel, args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    print(json.dumps(report.to_dict(), sort_keys=True))
    return 0


def cmd_report(args) -> int:
    try:
        if len(args.runs) == 1 and not args.compare:
            print(format_report(read_metrics(os.path.join(args.runs[0], METRICS_FILE))))
        else:
            print(format_comparison(*compare_runs(args.runs)))
    except (OSError, ValueError) as exc:
        log.error("%s", exc)
        return 1
    return 0


COMMANDS = {
    "gen-corpus": cmd_gen_corpus,
    "validate": cmd_validate,
    "sft": cmd_sft,
    "train": cmd_train,
    "eval": cmd_eval,
    "report": cmd_report,
}


def cli(argv: Optional[Sequence[str]] = None) -> int:
    """Exit status: 0 success, 1 aborted run or rejected input, 2 usage error."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        logging.getLogger().setLevel(str(args.log_level).upper())
    except ValueError:
        log.error("usage error: unknown log level %s", args.log_level)
        return 2
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        log.error("usage error: %s", exc)
        return 2
    except (TrainingAborted, CorpusFormatError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    logging.basicConfig(level=LOG_LEVEL, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    sys.exit(cli())
