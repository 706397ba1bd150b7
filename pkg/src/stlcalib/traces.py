"""Confidence traces: data model, JSONL/CSV ingestion, splitting and synthesis."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import IO, Iterable

import numpy as np

from .errors import DatasetError

SOURCES = ("logit", "self_eval", "internal")
SPLITS = ("train", "validation", "test")
PROFILES = ("rising", "flat_high", "spiky", "collapsing")

META_KEY = "_meta"
CSV_HEADER = ["id", "step_index", "confidence", "correct", "source", "split"]


@dataclass(frozen=True)
class ConfidenceTrace:
    """One problem instance: per-step confidences plus the final-answer label."""

    id: str
    steps: tuple[float, ...]
    correct: bool
    source: str = "logit"
    split: str = "test"

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(float(c) for c in self.steps))
        problem = trace_problem(self)
        if problem is not None:
            raise DatasetError(f"trace {self.id!r}: {problem}")

    def __len__(self) -> int:
        return len(self.steps)


def trace_problem(trace: ConfidenceTrace) -> str | None:
    """Return a description of the first invariant violation, or None."""
    if not isinstance(trace.id, str) or not trace.id:
        return "id must be a non-empty string"
    if len(trace.steps) == 0:
        return "empty steps list"
    for c in trace.steps:
        if not math.isfinite(c) or c < 0.0 or c > 1.0:
            return "confidence out of range"
    if not isinstance(trace.correct, bool):
        return "correct must be a boolean"
    if trace.source not in SOURCES:
        return f"unknown source {trace.source!r}"
    if trace.split not in SPLITS:
        return f"unknown split {trace.split!r}"
    return None


@dataclass(frozen=True)
class Dataset:
    traces: tuple[ConfidenceTrace, ...]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "traces", tuple(self.traces))
        seen = set()
        for t in self.traces:
            if t.id in seen:
                raise DatasetError(f"duplicate id {t.id!r}")
            seen.add(t.id)

    def __len__(self) -> int:
        return len(self.traces)

    def __iter__(self):
        return iter(self.traces)

    def select(self, split: str | None = None, source: str | None = None) -> "Dataset":
        kept = [
            t
            for t in self.traces
            if (split is None or t.split == split) and (source is None or t.source == source)
        ]
        return Dataset(kept, dict(self.metadata))

    def sources(self) -> list[str]:
        """Sources present, in canonical order."""
        present = {t.source for t in self.traces}
        return [s for s in SOURCES if s in present]


# -- parsing -----------------------------------------------------------------


def _record_to_trace(rec: object, where: str) -> ConfidenceTrace:
    if not isinstance(rec, dict):
        raise DatasetError(f"malformed record {where}: expected a JSON object")
    for key in ("id", "steps", "correct", "source"):
        if key not in rec:
            raise DatasetError(f"malformed record {where}: missing field '{key}'")
    tid = rec["id"]
    if not isinstance(tid, str) or not tid:
        raise DatasetError(f"malformed record {where}: field 'id' must be a non-empty string")
    steps = rec["steps"]
    if not isinstance(steps, list):
        raise DatasetError(f"malformed record {where}: field 'steps' must be an array")
    if not steps:
        raise DatasetError(f"empty steps list {where} (id {tid!r})")
    for c in steps:
        if isinstance(c, bool) or not isinstance(c, (int, float)):
            raise DatasetError(f"malformed record {where}: field 'steps' must hold numbers")
        if not math.isfinite(c) or c < 0 or c > 1:
            raise DatasetError(f"confidence out of range {where} (id {tid!r})")
    if not isinstance(rec["correct"], bool):
        raise DatasetError(f"malformed record {where}: field 'correct' must be a boolean")
    if rec["source"] not in SOURCES:
        raise DatasetError(f"malformed record {where}: field 'source' must be one of {', '.join(SOURCES)}")
    split = rec.get("split", "test")
    if split not in SPLITS:
        raise DatasetError(f"malformed record {where}: field 'split' must be one of {', '.join(SPLITS)}")
    return ConfidenceTrace(tid, tuple(float(c) for c in steps), rec["correct"], rec["source"], split)


def _check_unique(traces: list[ConfidenceTrace], where: list[str]) -> None:
    seen: dict[str, str] = {}
    for t, w in zip(traces, where):
        if t.id in seen:
            raise DatasetError(f"duplicate id {t.id!r} {w} (first seen {seen[t.id]})")
        seen[t.id] = w


def _parse_jsonl(text: str) -> Dataset:
    traces: list[ConfidenceTrace] = []
    where: list[str] = []
    metadata: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        loc = f"at line {lineno}"
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"malformed record {loc}: {exc.msg}") from None
        if isinstance(rec, dict) and META_KEY in rec:
            if traces or metadata:
                raise DatasetError(f"malformed record {loc}: metadata header must be the first record")
            if not isinstance(rec[META_KEY], dict):
                raise DatasetError(f"malformed record {loc}: metadata must be an object")
            metadata = rec[META_KEY]
            continue
        traces.append(_record_to_trace(rec, loc))
        where.append(loc)
    _check_unique(traces, where)
    return Dataset(traces, metadata)


def _parse_bool(value: str, loc: str) -> bool:
    v = value.strip().lower()
    if v in ("true", "1"):
        return True
    if v in ("false", "0"):
        return False
    raise DatasetError(f"malformed record {loc}: field 'correct' must be true/false")


def _parse_csv(text: str) -> Dataset:
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        return Dataset([])
    if header != CSV_HEADER:
        raise DatasetError(f"malformed record at line 1: header must be {','.join(CSV_HEADER)}")

    groups: list[tuple[str, list[tuple[int, list[str]]]]] = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(CSV_HEADER):
            raise DatasetError(f"malformed record at line {lineno}: expected {len(CSV_HEADER)} fields")
        tid = row[0].strip()
        if groups and groups[-1][0] == tid:
            groups[-1][1].append((lineno, row))
        else:
            if any(g[0] == tid for g in groups):
                raise DatasetError(f"duplicate id {tid!r} at line {lineno} (rows for one id must be contiguous)")
            groups.append((tid, [(lineno, row)]))

    traces = []
    where = []
    for tid, rows in groups:
        first_line, first = rows[0]
        steps = []
        for expected, (lineno, row) in enumerate(rows, start=1):
            loc = f"at line {lineno}"
            try:
                idx = int(row[1])
            except ValueError:
                raise DatasetError(f"malformed record {loc}: field 'step_index' must be an integer") from None
            if idx != expected:
                raise DatasetError(f"malformed record {loc}: field 'step_index' must run 1..T (got {idx})")
            try:
                c = float(row[2])
            except ValueError:
                raise DatasetError(f"malformed record {loc}: field 'confidence' must be a number") from None
            if not math.isfinite(c) or c < 0 or c > 1:
                raise DatasetError(f"confidence out of range {loc} (id {tid!r})")
            for col in (3, 4, 5):
                if row[col].strip() != first[col].strip():
                    raise DatasetError(f"malformed record {loc}: field '{CSV_HEADER[col]}' differs within id {tid!r}")
            steps.append(c)
        loc = f"at line {first_line}"
        rec = {
            "id": tid,
            "steps": steps,
            "correct": _parse_bool(first[3], loc),
            "source": first[4].strip(),
        }
        if first[5].strip():
            rec["split"] = first[5].strip()
        traces.append(_record_to_trace(rec, loc))
        where.append(loc)
    _check_unique(traces, where)
    return Dataset(traces)


def parse_dataset(data: bytes | str | IO, format: str = "jsonl") -> Dataset:
    """Parse a trace file.

    ``data`` may be raw bytes, text, or a readable stream.  Any violation
    aborts ingestion with a :class:`DatasetError` naming the line.
    """
    if hasattr(data, "read"):
        data = data.read()
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DatasetError(f"input is not UTF-8: {exc}") from None
    if format == "jsonl":
        return _parse_jsonl(data)
    if format == "csv":
        return _parse_csv(data)
    raise DatasetError(f"unknown format {format!r}")


def trace_record(t: ConfidenceTrace) -> dict:
    return {"id": t.id, "steps": list(t.steps), "correct": t.correct, "source": t.source, "split": t.split}


def serialize_dataset(d: Dataset, format: str = "jsonl") -> str:
    if format == "jsonl":
        lines = []
        if d.metadata:
            lines.append(json.dumps({META_KEY: d.metadata}, sort_keys=True))
        lines.extend(json.dumps(trace_record(t)) for t in d.traces)
        return "".join(line + "\n" for line in lines)
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for t in d.traces:
            for i, c in enumerate(t.steps, start=1):
                w.writerow([t.id, i, repr(c), "true" if t.correct else "false", t.source, t.split])
        return buf.getvalue()
    raise DatasetError(f"unknown format {format!r}")


# -- splitting ---------------------------------------------------------------


def _split_key(seed: int, tid: str) -> bytes:
    return hashlib.sha256(f"{seed}\x00{tid}".encode("utf-8")).digest()


def split_dataset(d: Dataset, val_fraction: float, seed: int) -> Dataset:
    """Retag traces as validation/test.

    The ``floor(val_fraction * n)`` traces with the smallest
    ``sha256(seed, id)`` become validation, so the assignment depends only on
    the seed and the ids, not on input order.
    """
    n = len(d)
    if not 0.0 < val_fraction < 1.0:
        raise DatasetError(f"val_fraction must lie in (0, 1), got {val_fraction}")
    n_val = math.floor(val_fraction * n)
    if n_val == 0 or n_val == n:
        raise DatasetError(
            f"val_fraction={val_fraction} on {n} traces leaves an empty "
            f"{'validation' if n_val == 0 else 'test'} partition"
        )
    ranked = sorted(d.traces, key=lambda t: _split_key(seed, t.id))
    val_ids = {t.id for t in ranked[:n_val]}
    traces = [replace(t, split="validation" if t.id in val_ids else "test") for t in d.traces]
    return Dataset(traces, dict(d.metadata))


# -- synthesis ---------------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    count: int = 200
    min_steps: int = 3
    max_steps: int = 8
    accuracy: float = 0.5
    correct_profile: str = "rising"
    incorrect_profile: str = "spiky"
    noise_sd: float = 0.05
    seed: int = 0

    def validate(self) -> None:
        if self.count <= 0:
            raise DatasetError("count must be positive")
        if self.min_steps < 1 or self.max_steps < 1:
            raise DatasetError("min_steps and max_steps must be positive")
        if self.min_steps > self.max_steps:
            raise DatasetError(f"min_steps ({self.min_steps}) exceeds max_steps ({self.max_steps})")
        if not 0.0 <= self.accuracy <= 1.0:
            raise DatasetError("accuracy must lie in [0, 1]")
        for p in (self.correct_profile, self.incorrect_profile):
            if p not in PROFILES:
                raise DatasetError(f"unknown profile {p!r}; expected one of {', '.join(PROFILES)}")
        if not (self.noise_sd >= 0.0 and math.isfinite(self.noise_sd)):
            raise DatasetError("noise_sd must be a finite non-negative number")
        if self.seed < 0:
            raise DatasetError("seed must be non-negative")


LOW, HIGH = 0.3, 0.9


def profile_base(profile: str, length: int) -> np.ndarray:
    """Noise-free shape of a profile over ``length`` steps."""
    if profile == "rising":
        return np.linspace(LOW, HIGH, length)
    if profile == "collapsing":
        return np.linspace(HIGH, LOW, length)
    if profile == "flat_high":
        return np.full(length, HIGH)
    if profile == "spiky":
        return np.where(np.arange(length) % 2 == 0, LOW, HIGH)
    raise DatasetError(f"unknown profile {profile!r}")


def synthesize(cfg: SynthConfig) -> Dataset:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n_correct = math.floor(cfg.accuracy * cfg.count + 0.5)
    labels = np.zeros(cfg.count, dtype=bool)
    labels[:n_correct] = True
    rng.shuffle(labels)
    lengths = rng.integers(cfg.min_steps, cfg.max_steps + 1, size=cfg.count)
    width = len(str(cfg.count - 1))
    traces = []
    for i, (ok, length) in enumerate(zip(labels, lengths)):
        base = profile_base(cfg.correct_profile if ok else cfg.incorrect_profile, int(length))
        if cfg.noise_sd > 0:
            base = base + rng.normal(0.0, cfg.noise_sd, size=base.shape)
        steps = np.clip(base, 0.0, 1.0)
        traces.append(ConfidenceTrace(f"syn-{i:0{width}d}", tuple(steps.tolist()), bool(ok), "logit", "test"))
    meta = {"generator": "synthesize", "config": _config_dict(cfg)}
    return Dataset(traces, meta)


def _config_dict(cfg: SynthConfig) -> dict:
    return {k: getattr(cfg, k) for k in cfg.__dataclass_fields__}


def summarize(d: Dataset) -> str:
    """One-line human summary: count, length range, sources."""
    n = len(d)
    if n == 0:
        return "0 traces"
    lengths = [len(t) for t in d.traces]
    noun = "trace" if n == 1 else "traces"
    return f"{n} {noun}, T∈[{min(lengths)},{max(lengths)}], sources: {', '.join(d.sources())}"


def from_confidences(rows: Iterable[tuple[str, Iterable[float], bool, str]], split: str = "test") -> Dataset:
    """Build a dataset from ``(id, steps, correct, source)`` tuples."""
    return Dataset([ConfidenceTrace(i, tuple(s), c, src, split) for i, s, c, src in rows])
