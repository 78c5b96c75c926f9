"""Synthetic task corpus: templated ML0 solutions, unit tests, validation and JSONL storage."""
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import yaml

from analysis import CondSpan, extract_conditionals
from minilang import DEFAULT_FUEL, Category, CompileError, canonical_text, compile_source, execute

log = logging.getLogger(__name__)

TESTS_PER_TASK = int(os.getenv("STEPLAB_TESTS_PER_TASK", "3"))

# Closed vocabularies shared with the policy.
VARIABLES = ("a", "b", "c", "d", "i", "k", "m", "n", "r", "s", "x")
PARAM_NAMES = ("a", "b", "c", "t", "lo", "hi", "r", "m", "w")
MAX_PARAM = 20
BUCKETS = ("0-1", "2-3", "4+")
CHECK_NAMES = ("parses", "executes-within-fuel", "has-tests", "outputs-match", "spans-consistent")


class CorpusFormatError(ValueError):
    def __init__(self, message: str, lineno: int = 0):
        super().__init__(message)
        self.lineno = lineno


@dataclass(frozen=True)
class UnitTest:
    input: tuple
    expected: tuple


@dataclass(frozen=True)
class TaskInstance:
    id: str
    x: tuple      # descriptor tokens
    y: str        # canonical solution, canonical spacing
    tests: tuple  # UnitTest
    cond_spans: tuple  # CondSpan
    difficulty: str

    @property
    def E(self) -> int:
        return len(self.cond_spans)


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple  # (name, passed) in CHECK_NAMES order
    verdict: str   # accept | reject
    reason: Optional[str] = None

    @property
    def accepted(self) -> bool:
        return self.verdict == "accept"


@dataclass
class GeneratorConfig:
    tests_per_task: int = TESTS_PER_TASK
    value_low: int = -9
    value_high: int = 20
    max_len: int = 6
    min_conditionals: int = 0
    max_conditionals: int = 8
    weights: dict = field(default_factory=lambda: {name: 1.0 for name in TEMPLATES})

    def __post_init__(self):
        if self.tests_per_task < 1:
            raise ValueError("tests_per_task must be at least 1")
        if self.value_low > self.value_high:
            raise ValueError("value_low must not exceed value_high")
        if self.max_len < 1:
            raise ValueError("max_len must be at least 1")


def bucket_of(e: int) -> str:
    if e <= 1:
        return BUCKETS[0]
    if e <= 3:
        return BUCKETS[1]
    return BUCKETS[2]


def descriptor_vocabulary() -> list:
    return (
        [f"T:{name}" for name in TEMPLATES]
        + [f"P:{name}" for name in PARAM_NAMES]
        + [f"V:{v}" for v in range(MAX_PARAM + 1)]
    )


# ---------------- Templates ----------------
@dataclass(frozen=True)
class Template:
    name: str
    base: int        # conditionals before guards
    max_guards: int
    inputs: str      # list | pair | single | count
    build: Callable  # (rng, guards) -> (params, source)


def _ints(rng: np.random.Generator, low: int, high: int, size: int) -> list:
    return [int(v) for v in rng.integers(low, high + 1, size=size)]


def _linear(rng, guards):
    a, b = _ints(rng, 1, 5, 1)[0], _ints(rng, 0, 9, 1)[0]
    return [("a", a), ("b", b)], f"x = read ( ) ; r = x * {a} + {b} ; print r ;"


def _sum(rng, guards):
    caps = _ints(rng, 5, MAX_PARAM, guards)
    source = "n = read ( ) ; s = 0 ; while n > 0 { x = read ( ) ; s = s + x ; n = n - 1 ; } "
    source += "".join(f"if s > {cap} {{ s = {cap} ; }} " for cap in caps)
    return [("c", cap) for cap in caps], source + "print s ;"


def _max(rng, guards):
    return [], ("n = read ( ) ; m = read ( ) ; n = n - 1 ; "
                "while n > 0 { x = read ( ) ; if x > m { m = x ; } n = n - 1 ; } print m ;")


def _count_above(rng, guards):
    thresholds = _ints(rng, 0, 15, guards + 1)
    source = "n = read ( ) ; c = 0 ; while n > 0 { x = read ( ) ; "
    source += "".join(f"if x > {t} {{ c = c + 1 ; }} " for t in thresholds)
    return [("t", t) for t in thresholds], source + "n = n - 1 ; } print c ;"


def _abs_diff(rng, guards):
    return [], "a = read ( ) ; b = read ( ) ; d = a - b ; if d < 0 { d = 0 - d ; } print d ;"


def _clamp(rng, guards):
    lo = _ints(rng, 0, 9, 1)[0]
    hi = lo + _ints(rng, 1, 11, 1)[0]
    return [("lo", lo), ("hi", hi)], (f"x = read ( ) ; if x < {lo} {{ x = {lo} ; }} "
                                      f"if x > {hi} {{ x = {hi} ; }} print x ;")


def _parity_filter(rng, guards):
    r = _ints(rng, 0, 1, 1)[0]
    return [("r", r)], ("n = read ( ) ; while n > 0 { x = read ( ) ; "
                        f"if ( x % 2 ) == {r} {{ print x ; }} n = n - 1 ; }}")


def _running_min(rng, guards):
    return [], ("n = read ( ) ; m = read ( ) ; print m ; n = n - 1 ; "
                "while n > 0 { x = read ( ) ; if x < m { m = x ; } print m ; n = n - 1 ; }")


def _bounded_loop(rng, guards):
    m = _ints(rng, 1, 3, 1)[0]
    thresholds = _ints(rng, 0, 5, guards)
    weights = _ints(rng, 1, 9, guards)
    source = f"k = read ( ) ; i = 0 ; s = 0 ; while i < k {{ s = s + i * {m} ; "
    source += "".join(f"if i > {t} {{ s = s + {w} ; }} " for t, w in zip(thresholds, weights))
    params = [("m", m)] + [p for t, w in zip(thresholds, weights) for p in (("t", t), ("w", w))]
    return params, source + "i = i + 1 ; } print s ;"


TEMPLATES = {
    t.name: t
    for t in (
        Template("linear", 0, 0, "single", _linear),
        Template("sum", 1, 3, "list", _sum),
        Template("max", 2, 0, "list", _max),
        Template("count_above", 2, 3, "list", _count_above),
        Template("abs_diff", 1, 0, "pair", _abs_diff),
        Template("clamp", 2, 0, "single", _clamp),
        Template("parity_filter", 2, 0, "list", _parity_filter),
        Template("running_min", 2, 0, "list", _running_min),
        Template("bounded_loop", 1, 7, "count", _bounded_loop),
    )
}


def _draw_input(rng: np.random.Generator, kind: str, cfg: GeneratorConfig) -> tuple:
    if kind == "list":
        n = _ints(rng, 1, cfg.max_len, 1)[0]
        return tuple([n] + _ints(rng, cfg.value_low, cfg.value_high, n))
    if kind == "pair":
        return tuple(_ints(rng, cfg.value_low, cfg.value_high, 2))
    if kind == "single":
        return tuple(_ints(rng, cfg.value_low, cfg.value_high, 1))
    return tuple(_ints(rng, 0, cfg.max_len, 1))


def _reachable(template: Template, cfg: GeneratorConfig) -> list:
    top = template.base + template.max_guards
    return [e for e in range(template.base, top + 1) if cfg.min_conditionals <= e <= cfg.max_conditionals]


def generate_corpus(seed: int, size: int, template_mix: Optional[dict] = None,
                    config: Optional[GeneratorConfig] = None) -> list:
    """Deterministic in ``seed``; instance i targets difficulty bucket i mod (reachable buckets)."""
    if size < 1:
        raise ValueError("size must be at least 1")
    cfg = config or GeneratorConfig()
    weights = dict(template_mix if template_mix is not None else cfg.weights)
    unknown = sorted(set(weights) - set(TEMPLATES))
    if unknown:
        raise ValueError(f"unknown templates: {', '.join(unknown)}")
    active = [TEMPLATES[name] for name in TEMPLATES if weights.get(name, 0) > 0]
    by_bucket = {
        bucket: [t for t in active if any(bucket_of(e) == bucket for e in _reachable(t, cfg))]
        for bucket in BUCKETS
    }
    attainable = [bucket for bucket in BUCKETS if by_bucket[bucket]]
    if not attainable:
        raise ValueError("no template can reach the requested conditional range")

    rng = np.random.default_rng(seed)
    instances = []
    for i in range(size):
        bucket = attainable[i % len(attainable)]
        options = by_bucket[bucket]
        p = np.array([weights[t.name] for t in options], dtype=float)
        template = options[int(rng.choice(len(options), p=p / p.sum()))]
        targets = [e for e in _reachable(template, cfg) if bucket_of(e) == bucket]
        e = targets[int(rng.integers(len(targets)))]
        params, source = template.build(rng, e - template.base)
        y = canonical_text(source)
        program = compile_source(y)
        tests = []
        for _ in range(cfg.tests_per_task):
            inputs = _draw_input(rng, template.inputs, cfg)
            status, _ = execute(program, inputs)
            tests.append(UnitTest(inputs, status.output))
        x = [f"T:{template.name}"] + [tok for name, value in params for tok in (f"P:{name}", f"V:{value}")]
        instances.append(TaskInstance(
            id=f"{seed}-{i:04d}",
            x=tuple(x),
            y=y,
            tests=tuple(tests),
            cond_spans=tuple(extract_conditionals(program)),
            difficulty=bucket,
        ))
    log.info("generated %d instances (seed %d)", size, seed)
    return instances


def split_corpus(instances: Sequence[TaskInstance], seed: int) -> tuple:
    """Seeded 50/25/25 train/valid/test split."""
    order = np.random.default_rng(seed).permutation(len(instances))
    shuffled = [instances[int(i)] for i in order]
    a = len(shuffled) // 2
    b = a + len(shuffled) // 4
    return shuffled[:a], shuffled[a:b], shuffled[b:]


def load_generator_config(path: str) -> GeneratorConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: expected a flat key-value mapping")
    cfg = GeneratorConfig()
    weights = dict(cfg.weights)
    kwargs = {}
    for key, value in raw.items():
        if isinstance(value, (dict, list)):
            raise ValueError(f"{path}: {key} must be a scalar")
        if key.startswith("weight_"):
            name = key[len("weight_"):]
            if name not in TEMPLATES:
                raise ValueError(f"{path}: unknown template {name}")
            weights[name] = float(value)
        elif key in ("tests_per_task", "value_low", "value_high", "max_len", "min_conditionals", "max_conditionals"):
            kwargs[key] = int(value)
        else:
            raise ValueError(f"{path}: unknown key {key}")
    return GeneratorConfig(weights=weights, **kwargs)


# ---------------- Validation ----------------
def validate_instance(instance: TaskInstance, fuel: int = DEFAULT_FUEL) -> ValidationReport:
    try:
        program = compile_source(instance.y)
    except CompileError:
        program = None
    runs = [execute(program, test.input, fuel)[0] for test in instance.tests] if program is not None else []
    checks = {
        "parses": program is not None,
        "executes-within-fuel": program is not None and all(s.category is Category.COMPLETED for s in runs),
        "has-tests": len(instance.tests) > 0,
        "outputs-match": program is not None and all(
            s.output == tuple(test.expected) for s, test in zip(runs, instance.tests)
        ),
        "spans-consistent": program is not None and [
            (span.st, span.en) for span in extract_conditionals(program)
        ] == [(span.st, span.en) for span in instance.cond_spans],
    }
    failed = [name for name in CHECK_NAMES if not checks[name]]
    return ValidationReport(
        checks=tuple((name, checks[name]) for name in CHECK_NAMES),
        verdict="reject" if failed else "accept",
        reason=failed[0] if failed else None,
    )


# ---------------- Storage ----------------
def instance_to_record(instance: TaskInstance) -> dict:
    return {
        "id": instance.id,
        "x": list(instance.x),
        "y": instance.y,
        "tests": [{"input": list(t.input), "expected": list(t.expected)} for t in instance.tests],
        "cond_spans": [{"st": s.st, "en": s.en} for s in instance.cond_spans],
        "difficulty": instance.difficulty,
    }


def instance_from_record(record: dict) -> TaskInstance:
    program = compile_source(record["y"])
    spans = extract_conditionals(program)
    stored = [(int(s["st"]), int(s["en"])) for s in record["cond_spans"]]
    if stored != [(s.st, s.en) for s in spans]:
        raise ValueError("cond_spans disagree with the canonical solution")
    if record["difficulty"] not in BUCKETS:
        raise ValueError(f"unknown difficulty {record['difficulty']!r}")
    return TaskInstance(
        id=str(record["id"]),
        x=tuple(str(tok) for tok in record["x"]),
        y=record["y"],
        tests=tuple(
            UnitTest(tuple(int(v) for v in t["input"]), tuple(int(v) for v in t["expected"]))
            for t in record["tests"]
        ),
        cond_spans=tuple(spans),
        difficulty=record["difficulty"],
    )


def save_corpus(instances: Sequence[TaskInstance], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for instance in instances:
            fh.write(json.dumps(instance_to_record(instance)) + "\n")


def load_corpus(path: str) -> list:
    instances = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                instances.append(instance_from_record(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise CorpusFormatError(f"{path}: line {lineno}: {exc}", lineno) from exc
    return instances
