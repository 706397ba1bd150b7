"""Calibration metrics and the classical baselines.

Bins are equal-width over [0, 1].  Bin ``m`` (1-based) covers
``[(m-1)/M, m/M)`` and the top bin is closed at 1, so a confidence sitting
exactly on an interior edge belongs to the bin above it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import CalibrationError, ParameterError
from .traces import ConfidenceTrace

SQUASH_LO = 1e-6
SQUASH_HI = 1.0 - 1e-6
LOG_T_BOUNDS = (math.log(0.05), math.log(20.0))


@dataclass(frozen=True)
class Prediction:
    confidence: float
    correct: bool
    trace_id: str = ""

    def __post_init__(self):
        c = self.confidence
        if not (math.isfinite(c) and 0.0 <= c <= 1.0):
            raise CalibrationError(f"confidence {c!r} for {self.trace_id or 'prediction'} is not in [0, 1]")


@dataclass(frozen=True)
class Bin:
    lower: float
    upper: float
    count: int
    mean_confidence: float | None
    accuracy: float | None


@dataclass(frozen=True)
class BinTable:
    M: int
    bins: tuple[Bin, ...]

    def rows(self) -> list[tuple]:
        """``(bin_lo, bin_hi, count, conf, acc)`` rows; empty bins carry blanks."""
        return [(b.lower, b.upper, b.count, b.mean_confidence, b.accuracy) for b in self.bins]


def _arrays(preds: Sequence[Prediction]) -> tuple[np.ndarray, np.ndarray]:
    if len(preds) == 0:
        raise CalibrationError("no predictions to evaluate")
    conf = np.array([p.confidence for p in preds], dtype=float)
    hit = np.array([p.correct for p in preds], dtype=float)
    return conf, hit


def _check_bins(M: int) -> None:
    if not isinstance(M, (int, np.integer)) or M < 1:
        raise ParameterError(f"bin count must be a positive integer, got {M!r}")


def bin_index(conf, M: int) -> np.ndarray:
    """0-based bin of each confidence."""
    _check_bins(M)
    inner = np.arange(1, M) / M
    return np.searchsorted(inner, np.asarray(conf, dtype=float), side="right")


def bin_table(preds: Sequence[Prediction], M: int) -> BinTable:
    conf, hit = _arrays(preds)
    idx = bin_index(conf, M)
    bins = []
    for m in range(M):
        mask = idx == m
        k = int(mask.sum())
        bins.append(
            Bin(
                lower=m / M,
                upper=(m + 1) / M,
                count=k,
                mean_confidence=float(conf[mask].mean()) if k else None,
                accuracy=float(hit[mask].mean()) if k else None,
            )
        )
    return BinTable(M, tuple(bins))


def ece(preds: Sequence[Prediction], M: int = 10) -> tuple[float, BinTable]:
    """Expected calibration error over ``M`` equal-width bins, plus the bin table."""
    table = bin_table(preds, M)
    n = len(preds)
    total = 0.0
    for b in table.bins:
        if b.count:
            total += (b.count / n) * abs(b.accuracy - b.mean_confidence)
    return total, table


def brier(preds: Sequence[Prediction]) -> float:
    conf, hit = _arrays(preds)
    return float(np.mean((conf - hit) ** 2))


# -- aggregation baselines ---------------------------------------------------


def one_step(trace: ConfidenceTrace) -> Prediction:
    """Final-step confidence."""
    return Prediction(trace.steps[-1], trace.correct, trace.id)


def cot_average(trace: ConfidenceTrace) -> Prediction:
    """Mean confidence over all reasoning steps."""
    return Prediction(math.fsum(trace.steps) / len(trace.steps), trace.correct, trace.id)


# -- temperature scaling -----------------------------------------------------


def _logit(c):
    c = np.clip(np.asarray(c, dtype=float), SQUASH_LO, SQUASH_HI)
    return np.log(c) - np.log1p(-c)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def apply_temperature(c: float, T: float) -> float:
    """``sigmoid(logit(c) / T)`` with ``c`` squashed into ``[1e-6, 1 - 1e-6]``.

    ``T = 1`` returns ``c`` untouched.
    """
    if not (math.isfinite(T) and T > 0):
        raise ParameterError(f"temperature must be positive, got {T}")
    if T == 1.0:
        return float(c)
    return float(_sigmoid(_logit(c) / T))


def temperature_nll(val: Sequence[Prediction], T: float) -> float:
    """Mean binary negative log-likelihood of the temperature-scaled confidences."""
    conf, hit = _arrays(val)
    z = _logit(conf) / T
    # log sigmoid(z) = -log(1 + e^-z), log(1 - sigmoid(z)) = -log(1 + e^z)
    return float(np.mean(hit * np.logaddexp(0.0, -z) + (1.0 - hit) * np.logaddexp(0.0, z)))


def golden_section(fn, lo: float, hi: float, tol: float) -> float:
    """Minimise a unimodal ``fn`` on ``[lo, hi]`` to bracket width ``tol``."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = fn(d)
    return (a + b) / 2.0


def fit_temperature(val: Sequence[Prediction], tol: float = 1e-4) -> float:
    """Temperature minimising validation NLL, searched over log T in [log 0.05, log 20]."""
    _, hit = _arrays(val)
    if hit.min() == hit.max():
        which = "correct" if hit[0] else "incorrect"
        raise CalibrationError(f"cannot fit a temperature: every validation prediction is {which}")
    log_t = golden_section(lambda u: temperature_nll(val, math.exp(u)), *LOG_T_BOUNDS, tol)
    return math.exp(log_t)


# -- histogram binning -------------------------------------------------------


@dataclass(frozen=True)
class HistogramBinning:
    """Per-bin validation accuracy; bins unseen during fitting map to the global accuracy."""

    M: int
    bin_accuracy: tuple[float | None, ...]
    global_accuracy: float

    def __call__(self, c: float) -> float:
        return apply_histogram_binning(c, self)


def fit_histogram_binning(val: Sequence[Prediction], M: int = 10) -> HistogramBinning:
    if len(val) == 0:
        raise CalibrationError("cannot fit histogram binning on an empty validation set")
    table = bin_table(val, M)
    _, hit = _arrays(val)
    return HistogramBinning(M, tuple(b.accuracy for b in table.bins), float(hit.mean()))


def apply_histogram_binning(c: float, hb: HistogramBinning) -> float:
    acc = hb.bin_accuracy[int(bin_index([c], hb.M)[0])]
    return hb.global_accuracy if acc is None else acc


# -- reports -----------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationReport:
    method: str
    ece: float
    brier: float
    n: int
    bin_table: BinTable
    strategy: str = "-"
    source: str = "all"
    params: dict = field(default_factory=dict)
    excluded: tuple[tuple[str, str], ...] = ()

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "strategy": self.strategy,
            "source": self.source,
            "params": dict(self.params),
            "ece": self.ece,
            "brier": self.brier,
            "n": self.n,
            "excluded": [{"id": i, "reason": r} for i, r in self.excluded],
            "bins": {
                "M": self.bin_table.M,
                "rows": [
                    {"bin_lo": lo, "bin_hi": hi, "count": k, "conf": c, "acc": a}
                    for lo, hi, k, c, a in self.bin_table.rows()
                ],
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationReport":
        rows = d["bins"]["rows"]
        table = BinTable(
            int(d["bins"]["M"]),
            tuple(Bin(r["bin_lo"], r["bin_hi"], r["count"], r["conf"], r["acc"]) for r in rows),
        )
        return cls(
            method=d["method"],
            ece=d["ece"],
            brier=d["brier"],
            n=d["n"],
            bin_table=table,
            strategy=d.get("strategy", "-"),
            source=d.get("source", "all"),
            params=d.get("params", {}),
            excluded=tuple((e["id"], e["reason"]) for e in d.get("excluded", [])),
        )


def report(method: str, preds: Sequence[Prediction], M: int, **extra) -> CalibrationReport:
    e, table = ece(preds, M)
    return CalibrationReport(method=method, ece=e, brier=brier(preds), n=len(preds), bin_table=table, **extra)


def predictions(traces: Iterable[ConfidenceTrace], how) -> list[Prediction]:
    return [how(t) for t in traces]
