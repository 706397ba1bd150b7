"""Command-line entry point: ``stlcalib <command> [flags]``.

Settings resolve as built-in defaults < ``--config`` file < flags.  The
config file is either flat ``key = value`` lines or an artifact previously
written by this tool, in which case its embedded configuration is reused.
Every artifact embeds the resolved configuration and the tool version.

Exit status: 0 on success, 1 on input or validation errors, 2 on an internal
failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import __version__, calibration, report, stl
from .calibration import CalibrationReport
from .errors import CalibrationError, EvaluationError, ParameterError, StlCalibError
from .reshape import STRATEGIES, ReshapeParams, apply
from .traces import (
    META_KEY,
    PROFILES,
    Dataset,
    SynthConfig,
    parse_dataset,
    serialize_dataset,
    split_dataset,
    summarize,
    synthesize,
    trace_record,
)
from .tuning import (
    DEFAULT_ALPHA,
    DEFAULT_DELTA,
    DEFAULT_EPSILON,
    DEFAULT_TAU,
    GridSpec,
    build_config,
    default_threads,
    evaluate_config,
    grid_search,
)

COMMANDS = ("validate", "synth", "reshape", "score", "calibrate", "tune", "report")
METHODS = ("one-step", "cot-average", "temperature", "histogram", "stl1", "stl2", "stl3", "formula")
EMITS = ("json", "text", "csv")

DEFAULTS = {
    "input": None,
    "output": None,
    "format": "jsonl",
    "strategy": "identity",
    "delta": 0.1,
    "alpha": 0.5,
    "tau": 0.5,
    "epsilon": 0.05,
    "formula": "stl1",
    "formula_text": None,
    "bins": 10,
    "val_fraction": 0.2,
    "seed": 0,
    "emit": ["json", "text"],
    "split": "test",
    "method": ["one-step", "cot-average"],
    "count": 200,
    "min_steps": 3,
    "max_steps": 8,
    "accuracy": 0.5,
    "correct_profile": "rising",
    "incorrect_profile": "spiky",
    "noise_sd": 0.05,
    "tau_grid": list(DEFAULT_TAU),
    "epsilon_grid": list(DEFAULT_EPSILON),
    "delta_grid": list(DEFAULT_DELTA),
    "alpha_grid": list(DEFAULT_ALPHA),
}

_IO = ("input", "output", "emit")
_SHAPE = ("strategy", "delta", "alpha", "tau", "epsilon")
_FORMULA = ("formula", "formula_text")
KEYS = {
    "validate": ("input", "format", "emit", "output"),
    "synth": ("output", "format", "count", "min_steps", "max_steps", "accuracy", "correct_profile",
              "incorrect_profile", "noise_sd", "seed", "val_fraction"),
    "reshape": (*_IO, "format", *_SHAPE),
    "score": (*_IO, "format", *_SHAPE, *_FORMULA),
    "calibrate": (*_IO, "format", "method", *_SHAPE, *_FORMULA, "bins", "split", "val_fraction", "seed"),
    "tune": (*_IO, "format", "strategy", "formula", "bins", "tau_grid", "epsilon_grid", "delta_grid",
             "alpha_grid", "val_fraction", "seed"),
    "report": (*_IO,),
}


def _floats(v):
    items = v if isinstance(v, list) else [x for x in str(v).split(",") if x.strip()]
    return [float(x) for x in items]


def _names(allowed):
    def conv(v):
        items = v if isinstance(v, list) else [x.strip() for x in str(v).split(",") if x.strip()]
        bad = [x for x in items if x not in allowed]
        if bad:
            raise ParameterError(f"unknown value(s) {', '.join(bad)}; expected {', '.join(allowed)}")
        return list(items)

    return conv


def _choice(allowed):
    def conv(v):
        if v not in allowed:
            raise ParameterError(f"unknown value {v!r}; expected one of {', '.join(allowed)}")
        return v

    return conv


def _opt_str(v):
    return None if v is None or v == "" else str(v)


def _inputs(v):
    if v is None:
        return None
    if isinstance(v, list):
        return [str(x) for x in v]
    return str(v)


CONVERT = {
    "input": _inputs,
    "output": _opt_str,
    "format": _choice(("jsonl", "csv")),
    "strategy": _choice(STRATEGIES),
    "delta": float,
    "alpha": float,
    "tau": float,
    "epsilon": float,
    "formula": _choice(tuple(stl.PRESETS)),
    "formula_text": _opt_str,
    "bins": int,
    "val_fraction": float,
    "seed": int,
    "emit": _names(EMITS),
    "split": _choice(("train", "validation", "test")),
    "method": _names(METHODS),
    "count": int,
    "min_steps": int,
    "max_steps": int,
    "accuracy": float,
    "correct_profile": _choice(PROFILES),
    "incorrect_profile": _choice(PROFILES),
    "noise_sd": float,
    "tau_grid": _floats,
    "epsilon_grid": _floats,
    "delta_grid": _floats,
    "alpha_grid": _floats,
}


HELP = {
    "format": "trace file format: jsonl or csv",
    "emit": "comma-separated outputs: json, text, csv",
    "method": "comma-separated methods: " + ", ".join(METHODS),
    "strategy": "reshaping strategy: " + ", ".join(STRATEGIES),
    "delta": "CMS margin, also the stl3 bound",
    "alpha": "EDS blend weight",
    "tau": "MPS/GS threshold, also the stl1 threshold",
    "epsilon": "GS tolerance, also the stl2 bound",
    "formula": "preset formula: stl1, stl2 or stl3",
    "formula_text": "formula in the DSL, e.g. 'F[1,END](sig > 0.7)'",
    "bins": "number of equal-width ECE bins",
    "split": "split to evaluate: train, validation or test",
    "val_fraction": "validation share when a split has to be made",
    "seed": "seed for synthesis and splitting",
    "count": "number of synthetic traces",
    "min_steps": "shortest synthetic trace",
    "max_steps": "longest synthetic trace",
    "accuracy": "share of correct synthetic traces",
    "correct_profile": "base shape of correct traces: " + ", ".join(PROFILES),
    "incorrect_profile": "base shape of incorrect traces: " + ", ".join(PROFILES),
    "noise_sd": "standard deviation of the Gaussian noise added per step",
    "tau_grid": "comma-separated tau values to search",
    "epsilon_grid": "comma-separated epsilon values to search",
    "delta_grid": "comma-separated delta values to search",
    "alpha_grid": "comma-separated alpha values to search",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stlcalib", description="Temporal-logic confidence scoring and calibration.")
    parser.add_argument("--version", action="version", version=f"stlcalib {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "validate": "check a trace file and print a summary",
        "synth": "write a seeded synthetic dataset",
        "reshape": "write reshaped traces",
        "score": "write per-trace STL confidence scores",
        "calibrate": "compute calibration reports",
        "tune": "grid-search thresholds on the validation split",
        "report": "compare saved calibration reports",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name], argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="flat key=value file or a previous artifact")
        keys = KEYS[name]
        if "input" in keys:
            if name == "report":
                p.add_argument("--input", nargs="+", help="calibration report JSON files")
            else:
                p.add_argument("--input", help="trace file (default: stdin)")
        if "output" in keys:
            p.add_argument("--output", help="artifact path (default: stdout)")
        for key in keys:
            if key in ("input", "output"):
                continue
            flag = "--" + key.replace("_", "-")
            p.add_argument(flag, dest=key, metavar=key.upper(), help=f"{HELP[key]} (default: {_show(DEFAULTS[key])})")
    return parser


def _show(value) -> str:
    if isinstance(value, list):
        return ",".join(str(v) for v in value)
    return "none" if value is None else str(value)


def read_config_file(path: str) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("{"):
        first = stripped.splitlines()[0]
        try:
            obj = json.loads(first)
            if META_KEY in obj:
                return dict(obj[META_KEY].get("config", {}))
        except json.JSONDecodeError:
            pass
        obj = json.loads(text)
        return dict(obj.get("config", obj))
    cfg = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        cut = min((i for i in (line.find("="), line.find(":")) if i >= 0), default=-1)
        if cut < 0:
            raise ParameterError(f"config line {lineno}: expected key = value")
        key, value = line[:cut].strip(), line[cut + 1 :].strip()
        cfg[key.replace("-", "_")] = value
    return cfg


def resolve(command: str, cli: dict) -> dict:
    """Merge defaults, config file and flags into the resolved run configuration."""
    file_cfg = read_config_file(cli["config"]) if "config" in cli else {}
    cfg = {"command": command}
    for key in KEYS[command]:
        if key in cli:
            value = cli[key]
        elif key in file_cfg:
            value = file_cfg[key]
        else:
            value = DEFAULTS[key]
        cfg[key] = value if value is None else CONVERT[key](value)
    return cfg


# -- io helpers --------------------------------------------------------------


def header(cfg: dict) -> dict:
    return {"tool": {"name": "stlcalib", "version": __version__}, "config": cfg}


def load_input(cfg: dict) -> Dataset:
    src = cfg.get("input")
    if src is None:
        return parse_dataset(sys.stdin.buffer.read(), cfg.get("format", "jsonl"))
    return parse_dataset(Path(src).read_bytes(), cfg.get("format", "jsonl"))


def write_text(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def json_text(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def sidecar(cfg: dict, suffix: str) -> Path:
    out = Path(cfg["output"])
    side = out.with_suffix(suffix)
    return side if side != out else out.with_name(out.name + suffix)


def emit(cfg: dict, payload: dict, text: str, csv_text: str | None = None) -> None:
    """Write the JSON artifact, the text table and the CSV sidecar as requested.

    Without ``--output`` only one stream can own stdout: text wins, then
    JSON, then CSV.
    """
    kinds = cfg.get("emit", ["json"])
    out = cfg.get("output")
    if "json" in kinds:
        if out is not None:
            write_text(out, json_text(payload))
        elif "text" not in kinds:
            sys.stdout.write(json_text(payload))
    if "csv" in kinds and csv_text is not None:
        if out is not None:
            sidecar(cfg, ".csv").write_text(csv_text, encoding="utf-8")
        elif kinds == ["csv"]:
            sys.stdout.write(csv_text)
    if "text" in kinds:
        sys.stdout.write(text)


def write_dataset(cfg: dict, d: Dataset, extra: list[dict] | None = None) -> None:
    """Write traces as JSONL (or CSV); ``extra`` adds per-record fields in JSONL."""
    fmt = cfg.get("format", "jsonl")
    if fmt == "csv" or extra is None:
        text = serialize_dataset(d, fmt)
    else:
        lines = [json.dumps({META_KEY: d.metadata}, sort_keys=True)]
        for t, more in zip(d.traces, extra):
            lines.append(json.dumps({**trace_record(t), **more}))
        text = "".join(line + "\n" for line in lines)
    write_text(cfg.get("output"), text)


def _meta(cfg: dict, upstream: dict | None = None, **more) -> dict:
    meta = header(cfg)
    if upstream:
        meta["upstream"] = upstream
    meta.update(more)
    return meta


def formula_from(cfg: dict) -> tuple[str, stl.Formula]:
    if cfg.get("formula_text"):
        return "formula", stl.parse_formula(cfg["formula_text"])
    name = cfg["formula"]
    param = stl.PRESETS[name][0]
    return name, stl.preset(name, cfg[param])


def reshape_params(cfg: dict) -> ReshapeParams:
    rp = ReshapeParams(cfg["strategy"], cfg["delta"], cfg["alpha"], cfg["tau"], cfg["epsilon"])
    rp.validate()
    return rp


def _map(fn, items):
    threads = default_threads()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# -- commands ----------------------------------------------------------------


def cmd_validate(cfg: dict) -> None:
    d = load_input(cfg)
    splits = {s: sum(t.split == s for t in d.traces) for s in ("train", "validation", "test")}
    n_ok = sum(t.correct for t in d.traces)
    text = summarize(d) + "\n"
    text += f"correct: {n_ok}/{len(d)}; splits: " + ", ".join(f"{k}={v}" for k, v in splits.items() if v) + "\n"
    payload = {**header(cfg), "summary": summarize(d), "n": len(d), "correct": n_ok, "splits": splits}
    emit(cfg, payload, text)


def cmd_synth(cfg: dict) -> None:
    sc = SynthConfig(
        count=cfg["count"],
        min_steps=cfg["min_steps"],
        max_steps=cfg["max_steps"],
        accuracy=cfg["accuracy"],
        correct_profile=cfg["correct_profile"],
        incorrect_profile=cfg["incorrect_profile"],
        noise_sd=cfg["noise_sd"],
        seed=cfg["seed"],
    )
    d = synthesize(sc)
    d = split_dataset(d, cfg["val_fraction"], cfg["seed"])
    write_dataset(cfg, Dataset(d.traces, _meta(cfg)))


def cmd_reshape(cfg: dict) -> None:
    d = load_input(cfg)
    rp = reshape_params(cfg)
    traces = _map(lambda t: replace(t, steps=tuple(apply(t.steps, rp).tolist())), d.traces)
    write_dataset(cfg, Dataset(traces, _meta(cfg, d.metadata)))


def cmd_score(cfg: dict) -> None:
    d = load_input(cfg)
    rp = reshape_params(cfg)
    _, f = formula_from(cfg)

    def one(t):
        try:
            rho = stl.robustness(f, apply(t.steps, rp)).value
        except EvaluationError as exc:
            return t, None, str(exc)
        return t, rho, None

    results = _map(one, d.traces)
    kept, extra, skipped = [], [], []
    for t, rho, why in results:
        if rho is None:
            skipped.append({"id": t.id, "reason": why})
            continue
        kept.append(replace(t, steps=(min(max(rho, 0.0), 1.0),)))
        extra.append({"rho": rho})
    meta = _meta(cfg, d.metadata, formula=stl.pretty(f), skipped=skipped)
    write_dataset(cfg, Dataset(kept, meta), extra)
    for s in skipped:
        print(f"skipped {s['id']}: {s['reason']}", file=sys.stderr)


def _needs_validation(methods) -> bool:
    return any(m in ("temperature", "histogram") for m in methods)


def calibrate_reports(cfg: dict, d: Dataset) -> tuple[list[CalibrationReport], bool]:
    """All requested reports, one per (method, source); returns whether an automatic split was applied."""
    methods = cfg["method"]
    auto_split = False
    if _needs_validation(methods) and not any(t.split == "validation" for t in d.traces):
        d = split_dataset(d, cfg["val_fraction"], cfg["seed"])
        auto_split = True
    data = d.select(split=cfg["split"])
    if len(data) == 0:
        raise CalibrationError(f"no traces in split {cfg['split']!r}")
    M = cfg["bins"]
    out = []
    for source in data.sources():
        group = data.select(source=source)
        val = d.select(split="validation", source=source)
        for method in methods:
            if method == "one-step":
                out.append(calibration.report(method, calibration.predictions(group, calibration.one_step), M, source=source))
            elif method == "cot-average":
                out.append(calibration.report(method, calibration.predictions(group, calibration.cot_average), M, source=source))
            elif method == "temperature":
                T = calibration.fit_temperature(calibration.predictions(val, calibration.one_step))
                preds = [
                    calibration.Prediction(calibration.apply_temperature(p.confidence, T), p.correct, p.trace_id)
                    for p in calibration.predictions(group, calibration.one_step)
                ]
                out.append(calibration.report(method, preds, M, source=source, params={"T": T}))
            elif method == "histogram":
                hb = calibration.fit_histogram_binning(calibration.predictions(val, calibration.one_step), M)
                preds = [
                    calibration.Prediction(hb(p.confidence), p.correct, p.trace_id)
                    for p in calibration.predictions(group, calibration.one_step)
                ]
                out.append(calibration.report(method, preds, M, source=source, params={"M": M}))
            else:
                if method == "formula":
                    if not cfg.get("formula_text"):
                        raise ParameterError("method 'formula' needs --formula-text")
                    rp = reshape_params(cfg)
                    f = stl.parse_formula(cfg["formula_text"])
                    params = {**rp.used(), "formula": stl.pretty(f)}
                else:
                    params = stl_params(method, cfg)
                    rp, f = build_config(method, cfg["strategy"], params)
                out.append(evaluate_config(group, rp, f, M, method=method, params=params))
    return out, auto_split


def stl_params(formula: str, cfg: dict) -> dict:
    spec = GridSpec(formula=formula, strategy=cfg["strategy"])
    return {k: cfg[k] for k in spec.consumed()}


def cmd_calibrate(cfg: dict) -> None:
    d = load_input(cfg)
    reports, auto_split = calibrate_reports(cfg, d)
    payload = {**header(cfg), "auto_split": auto_split, "reports": [r.to_dict() for r in reports]}
    emit(cfg, payload, report.reports_text(reports), report.bins_csv(reports))


def cmd_tune(cfg: dict) -> None:
    d = load_input(cfg)
    auto_split = False
    if not any(t.split == "validation" for t in d.traces):
        d = split_dataset(d, cfg["val_fraction"], cfg["seed"])
        auto_split = True
    spec = GridSpec(
        formula=cfg["formula"],
        strategy=cfg["strategy"],
        M=cfg["bins"],
        tau_grid=tuple(cfg["tau_grid"]),
        epsilon_grid=tuple(cfg["epsilon_grid"]),
        delta_grid=tuple(cfg["delta_grid"]),
        alpha_grid=tuple(cfg["alpha_grid"]),
    )
    result = grid_search(d.select(split="validation"), spec)
    test = d.select(split="test")
    test_report = None
    if len(test):
        rp, f = build_config(spec.formula, spec.strategy, result.best_params)
        test_report = evaluate_config(test, rp, f, spec.M, method=spec.formula, params=result.best_params)
    payload = {
        **header(cfg),
        "auto_split": auto_split,
        "result": result.to_dict(),
        "test_report": None if test_report is None else test_report.to_dict(),
    }
    names = result.param_names()
    text = f"best {spec.formula} x {spec.strategy}: " + ", ".join(f"{k}={result.best_params[k]}" for k in names)
    text += f"  validation ECE {report.fmt(result.best_ece)}\n"
    skipped = sum(e.skipped is not None for e in result.evaluations)
    text += f"{len(result.evaluations)} grid points evaluated, {skipped} skipped\n"
    if test_report is not None:
        text += report.reports_text([test_report])
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(result.csv_rows())
    emit(cfg, payload, text, buf.getvalue())


def load_reports(paths) -> list[CalibrationReport]:
    out = []
    for path in paths:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        if "reports" in obj:
            out.extend(CalibrationReport.from_dict(r) for r in obj["reports"])
        elif obj.get("test_report"):
            out.append(CalibrationReport.from_dict(obj["test_report"]))
        else:
            raise ParameterError(f"{path}: not a calibrate or tune artifact")
    return out


def cmd_report(cfg: dict) -> None:
    paths = cfg.get("input")
    if not paths:
        raise ParameterError("report needs --input with one or more report files")
    if isinstance(paths, str):
        paths = [paths]
    reports = load_reports(paths)
    payload = {**header(cfg), "rows": report.comparison_rows(reports)}
    emit(cfg, payload, report.comparison_text(reports), report.comparison_csv(reports))


HANDLERS = {
    "validate": cmd_validate,
    "synth": cmd_synth,
    "reshape": cmd_reshape,
    "score": cmd_score,
    "calibrate": cmd_calibrate,
    "tune": cmd_tune,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cli = {k: v for k, v in vars(args).items() if k != "command"}
    try:
        cfg = resolve(args.command, cli)
        HANDLERS[args.command](cfg)
    except (StlCalibError, OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        print(f"stlcalib {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, TypeError) as exc:
        # flag or config values that fail conversion
        print(f"stlcalib {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        print(f"stlcalib {args.command}: internal error", file=sys.stderr)
        traceback.print_exc(file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
