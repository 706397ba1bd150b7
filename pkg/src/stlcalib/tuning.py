"""Grid search over reshaping and formula thresholds, minimising validation ECE."""

from __future__ import annotations

import itertools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import calibration, stl
from .calibration import BinTable, Bin, CalibrationReport, Prediction
from .errors import CalibrationError, EvaluationError, ParameterError
from .reshape import ReshapeParams, apply
from .traces import Dataset

DEFAULT_TAU = (0.5, 0.6, 0.7, 0.8, 0.9)
DEFAULT_EPSILON = (0.01, 0.05, 0.1, 0.2)
DEFAULT_DELTA = (0.05, 0.1, 0.2, 0.3)
DEFAULT_ALPHA = (0.3, 0.5, 0.7, 0.9)

# enumeration order of the Cartesian product
GRID_FIELDS = ("tau", "epsilon", "delta", "alpha", "window_lo", "window_hi")

_STRATEGY_USES = {"identity": (), "cms": ("delta",), "eds": ("alpha",), "mps": ("tau",), "gs": ("tau", "epsilon")}
_FORMULA_USES = {"stl1": "tau", "stl2": "epsilon", "stl3": "delta"}


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("STLCALIB_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class GridSpec:
    """Grids for one (formula, strategy) pair.

    The symbols are shared between reshaping and the formula: ``tau`` drives
    both MPS/GS and STL1, ``epsilon`` both GS and STL2, ``delta`` both CMS and
    STL3.  Window grids are optional; ``None`` keeps the preset's full window
    and a ``window_hi`` entry of ``None`` means END.
    """

    formula: str = "stl1"
    strategy: str = "identity"
    M: int = 10
    tau_grid: tuple = DEFAULT_TAU
    epsilon_grid: tuple = DEFAULT_EPSILON
    delta_grid: tuple = DEFAULT_DELTA
    alpha_grid: tuple = DEFAULT_ALPHA
    window_lo_grid: tuple | None = None
    window_hi_grid: tuple | None = None
    recursive: bool = False

    def consumed(self) -> list[str]:
        if self.formula not in _FORMULA_USES:
            raise ParameterError(f"unknown formula {self.formula!r}; expected one of {', '.join(_FORMULA_USES)}")
        if self.strategy not in _STRATEGY_USES:
            raise ParameterError(f"unknown strategy {self.strategy!r}")
        used = set(_STRATEGY_USES[self.strategy]) | {_FORMULA_USES[self.formula]}
        if self.window_lo_grid is not None:
            used.add("window_lo")
        if self.window_hi_grid is not None:
            used.add("window_hi")
        return [f for f in GRID_FIELDS if f in used]

    def grid(self, name: str) -> tuple:
        return tuple(_plain(x) for x in getattr(self, f"{name}_grid"))

    def points(self) -> list[dict]:
        names = self.consumed()
        grids = [self.grid(n) for n in names]
        for n, g in zip(names, grids):
            if len(g) == 0:
                raise ParameterError(f"{n} grid is empty")
        return [dict(zip(names, combo)) for combo in itertools.product(*grids)]


def _plain(x):
    if x is None or isinstance(x, (int, np.integer)):
        return x if x is None else int(x)
    return float(x)


def build_config(formula: str, strategy: str, params: dict, recursive: bool = False):
    """Resolve a parameter assignment into ``(ReshapeParams, Formula)``; raises on illegal values."""
    rp = ReshapeParams(strategy=strategy, recursive=recursive, **{k: params[k] for k in _STRATEGY_USES[strategy]})
    rp.validate()
    f = stl.preset(formula, params[_FORMULA_USES[formula]])
    if "window_lo" in params or "window_hi" in params:
        f = replace(f, lo=params.get("window_lo", f.lo), hi=params.get("window_hi", f.hi))
    return rp, f


def evaluate_config(
    data: Dataset,
    reshape: ReshapeParams,
    formula: stl.Formula,
    M: int = 10,
    split: str | None = None,
    method: str | None = None,
    params: dict | None = None,
) -> CalibrationReport:
    """Reshape and score every trace, then report ECE and Brier.

    Traces whose robustness is undefined are excluded and listed with the
    reason.  When nothing is left the report has ``n = 0`` and no ECE.
    """
    reshape.validate()
    if split is not None:
        data = data.select(split=split)
    if len(data) == 0:
        raise CalibrationError(f"no traces in split {split!r}" if split else "no traces to evaluate")
    preds: list[Prediction] = []
    excluded = []
    for t in data.traces:
        try:
            c = stl.score(formula, apply(t.steps, reshape))
        except EvaluationError as exc:
            excluded.append((t.id, str(exc)))
            continue
        preds.append(Prediction(c, t.correct, t.id))
    sources = data.sources()
    extra = dict(
        strategy=reshape.strategy,
        source=sources[0] if len(sources) == 1 else "mixed",
        params=dict(params) if params is not None else {**reshape.used(), "formula": stl.pretty(formula)},
        excluded=tuple(excluded),
    )
    label = method or "stl"
    if not preds:
        empty = BinTable(M, tuple(Bin(m / M, (m + 1) / M, 0, None, None) for m in range(M)))
        return CalibrationReport(label, None, None, 0, empty, **extra)
    return calibration.report(label, preds, M, **extra)


@dataclass(frozen=True)
class Evaluation:
    params: dict
    ece: float | None
    skipped: str | None = None


@dataclass(frozen=True)
class TuneResult:
    formula: str
    strategy: str
    M: int
    best_params: dict
    best_ece: float
    evaluations: tuple[Evaluation, ...] = field(default_factory=tuple)

    def param_names(self) -> list[str]:
        return list(self.best_params)

    def to_dict(self) -> dict:
        return {
            "formula": self.formula,
            "strategy": self.strategy,
            "M": self.M,
            "best_params": self.best_params,
            "best_ece": self.best_ece,
            "evaluations": [
                {"params": e.params, "ece": e.ece, **({"skipped": e.skipped} if e.skipped else {})}
                for e in self.evaluations
            ],
        }

    def csv_rows(self) -> list[list]:
        names = self.param_names()
        rows = [names + ["ece"]]
        for e in self.evaluations:
            rows.append([e.params[n] if e.params[n] is not None else "END" for n in names] + ["" if e.ece is None else e.ece])
        return rows


def grid_search(val: Dataset, spec: GridSpec, threads: int | None = None) -> TuneResult:
    """Exhaustive search; ties go to the earliest point in enumeration order.

    Illegal points (e.g. ``tau + epsilon > 1`` under GS) and points where no
    trace could be scored are recorded as skipped rather than aborting.
    """
    if len(val) == 0:
        raise CalibrationError("validation split is empty")
    points = spec.points()

    def run(params: dict) -> Evaluation:
        try:
            rp, f = build_config(spec.formula, spec.strategy, params, spec.recursive)
        except ParameterError as exc:
            return Evaluation(params, None, str(exc))
        rep = evaluate_config(val, rp, f, spec.M, params=params)
        if rep.n == 0:
            return Evaluation(params, None, "no trace could be scored")
        return Evaluation(params, rep.ece)

    threads = default_threads() if threads is None else threads
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            evaluations = list(pool.map(run, points))
    else:
        evaluations = [run(p) for p in points]

    best = None
    for e in evaluations:
        if e.ece is not None and (best is None or e.ece < best.ece):
            best = e
    if best is None:
        raise CalibrationError("every grid point was skipped; nothing to select")
    return TuneResult(spec.formula, spec.strategy, spec.M, dict(best.params), best.ece, tuple(evaluations))
