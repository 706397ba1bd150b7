"""Signal temporal logic over a single confidence signal.

Formulas are small immutable ASTs built from four predicate shapes,
bounded ``G`` (always) / ``F`` (eventually), and ``and`` / ``or`` / ``not``.

Time is 1-based: sample ``t`` of a length-``T`` signal lives at ``t = 1..T``
and the step change ``delta(t) = s[t] - s[t-1]`` lives at ``t = 2..T``.  The
root of a formula is evaluated at ``t = 0``.  A temporal operator at time ``t``
looks at ``[t + lo, min(t + hi, T)]`` and skips the times where its operand is
undefined, so ``F[1,END]`` at the root spans the whole trace.  A window with
no defined operand value makes the operator itself undefined at ``t``.  A bare
predicate at the root therefore has nothing to look at; wrap it in a temporal
operator.

Quantitative semantics are the usual min/max space robustness.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import EvaluationError, FormulaSyntaxError, ParameterError
from .reshape import as_signal

# -- AST ---------------------------------------------------------------------


@dataclass(frozen=True)
class Pred:
    """``sig > k``, ``sig >= k``, ``delta >= k`` or ``|delta| <= k``."""

    kind: str  # "sig" | "delta" | "absdelta"
    op: str  # ">" | ">=" | "<="
    const: float

    def __post_init__(self):
        legal = {("sig", ">"), ("sig", ">="), ("delta", ">="), ("absdelta", "<=")}
        if (self.kind, self.op) not in legal:
            raise ParameterError(f"illegal predicate shape {self.kind} {self.op}")
        if not math.isfinite(self.const):
            raise ParameterError("predicate constant must be finite")


@dataclass(frozen=True)
class Not:
    child: "Formula"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


def _check_bounds(lo, hi):
    if not isinstance(lo, int) or lo < 0:
        raise ParameterError(f"lower bound must be a non-negative integer, got {lo!r}")
    if hi is not None and (not isinstance(hi, int) or hi < lo):
        raise ParameterError(f"malformed interval [{lo},{hi}]")


@dataclass(frozen=True)
class Always:
    """``G[lo,hi]``; ``hi=None`` is END."""

    lo: int
    hi: int | None
    child: "Formula"

    def __post_init__(self):
        _check_bounds(self.lo, self.hi)


@dataclass(frozen=True)
class Eventually:
    lo: int
    hi: int | None
    child: "Formula"

    def __post_init__(self):
        _check_bounds(self.lo, self.hi)


Formula = Union[Pred, Not, And, Or, Always, Eventually]


def children(f: Formula) -> tuple:
    if isinstance(f, Pred):
        return ()
    if isinstance(f, (Not, Always, Eventually)):
        return (f.child,)
    return (f.left, f.right)


def depth(f: Formula) -> int:
    return 1 + max((depth(c) for c in children(f)), default=0)


def uses_delta(f: Formula) -> bool:
    if isinstance(f, Pred):
        return f.kind != "sig"
    return any(uses_delta(c) for c in children(f))


# -- presets -----------------------------------------------------------------


def stl1(tau: float) -> Formula:
    """Eventually confident: ``F[1,END](sig > tau)``."""
    if not (math.isfinite(tau) and 0.0 <= tau <= 1.0):
        raise ParameterError(f"tau must lie in [0, 1], got {tau}")
    return Eventually(1, None, Pred("sig", ">", float(tau)))


def stl2(epsilon: float) -> Formula:
    """Always stable or increasing: ``G[2,END](delta >= -epsilon)``."""
    if not (math.isfinite(epsilon) and epsilon >= 0.0):
        raise ParameterError(f"epsilon must be non-negative, got {epsilon}")
    return Always(2, None, Pred("delta", ">=", -float(epsilon)))


def stl3(delta: float) -> Formula:
    """Locally smooth: ``G[2,END](|delta| <= delta)``."""
    if not (math.isfinite(delta) and delta >= 0.0):
        raise ParameterError(f"delta must be non-negative, got {delta}")
    return Always(2, None, Pred("absdelta", "<=", float(delta)))


PRESETS = {"stl1": ("tau", stl1), "stl2": ("epsilon", stl2), "stl3": ("delta", stl3)}


def preset(name: str, value: float) -> Formula:
    try:
        _, build = PRESETS[name]
    except KeyError:
        raise ParameterError(f"unknown formula {name!r}; expected one of {', '.join(PRESETS)}") from None
    return build(value)


# -- concrete syntax ---------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<absdelta>\|delta\|)
  | (?P<num>-?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)
  | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>>=|<=|>)
  | (?P<punct>[()\[\],])
    """,
    re.VERBOSE,
)
_KEYWORDS = {"and", "or", "not", "G", "F", "END", "sig", "delta"}


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise FormulaSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        value = m.group()
        if kind == "word":
            if value not in _KEYWORDS:
                raise FormulaSyntaxError(f"unknown word {value!r}", pos)
            kind = value
        elif kind in ("op", "punct", "absdelta"):
            kind = value
        if kind != "ws":
            tokens.append((kind, value, pos))
        pos = m.end()
    tokens.append(("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, *kinds: str):
        tok = self.peek()
        if tok[0] not in kinds:
            found = "end of input" if tok[0] == "eof" else repr(tok[1])
            raise FormulaSyntaxError(f"unexpected {found}", tok[2], tuple(repr(k) for k in kinds))
        return self.advance()

    def formula(self) -> Formula:
        node = self.term()
        while self.peek()[0] in ("and", "or"):
            op = self.advance()[0]
            right = self.term()
            node = And(node, right) if op == "and" else Or(node, right)
        return node

    def term(self) -> Formula:
        kind, _, pos = self.peek()
        if kind == "not":
            self.advance()
            return Not(self.term())
        if kind == "(":
            self.advance()
            node = self.formula()
            self.expect(")")
            return node
        if kind in ("G", "F"):
            return self.temporal()
        if kind in ("sig", "delta", "|delta|"):
            return self.pred()
        self.expect("not", "(", "G", "F", "sig", "delta", "|delta|")
        raise AssertionError("unreachable")

    def bound(self, allow_end: bool):
        kinds = ("num", "END") if allow_end else ("num",)
        kind, value, pos = self.expect(*kinds)
        if kind == "END":
            return None
        if not value.isdigit():
            raise FormulaSyntaxError(f"bound {value!r} is not a non-negative integer", pos)
        return int(value)

    def temporal(self) -> Formula:
        op, _, start = self.advance()
        self.expect("[")
        lo_pos = self.peek()[2]
        if self.peek()[0] == "END":
            raise FormulaSyntaxError("malformed interval: lower bound cannot be END", lo_pos)
        lo = self.bound(allow_end=False)
        self.expect(",")
        hi = self.bound(allow_end=True)
        self.expect("]")
        if hi is not None and lo > hi:
            raise FormulaSyntaxError(f"malformed interval [{lo},{hi}]: lower bound exceeds upper", lo_pos)
        self.expect("(")
        child = self.formula()
        self.expect(")")
        return Always(lo, hi, child) if op == "G" else Eventually(lo, hi, child)

    def number(self) -> float:
        kind, value, pos = self.peek()
        if kind != "num":
            found = "end of input" if kind == "eof" else repr(value)
            raise FormulaSyntaxError(f"non-numeric constant {found}", pos, ("number",))
        self.advance()
        x = float(value)
        if not math.isfinite(x):
            raise FormulaSyntaxError(f"constant {value} is not finite", pos)
        return x

    def pred(self) -> Formula:
        kind = self.advance()[0]
        if kind == "sig":
            op = self.expect(">", ">=")[0]
            return Pred("sig", op, self.number())
        if kind == "delta":
            self.expect(">=")
            return Pred("delta", ">=", self.number())
        self.expect("<=")
        return Pred("absdelta", "<=", self.number())


def parse_formula(text: str) -> Formula:
    """Parse the formula DSL; raises :class:`FormulaSyntaxError` with a character position."""
    p = _Parser(text)
    node = p.formula()
    kind, value, pos = p.peek()
    if kind != "eof":
        raise FormulaSyntaxError(f"unexpected {value!r}", pos, ("'and'", "'or'", "end of input"))
    return node


def _num(x: float) -> str:
    return repr(float(x))


def pretty(f: Formula) -> str:
    """Canonical text form; ``parse_formula(pretty(f)) == f``."""
    if isinstance(f, Pred):
        name = "|delta|" if f.kind == "absdelta" else f.kind
        return f"{name} {f.op} {_num(f.const)}"
    if isinstance(f, Not):
        return f"not {_wrap(f.child)}"
    if isinstance(f, (And, Or)):
        op = "and" if isinstance(f, And) else "or"
        return f"{pretty(f.left)} {op} {_wrap(f.right)}"
    op = "G" if isinstance(f, Always) else "F"
    hi = "END" if f.hi is None else str(f.hi)
    return f"{op}[{f.lo},{hi}]({pretty(f.child)})"


def _wrap(f: Formula) -> str:
    return f"({pretty(f)})" if isinstance(f, (And, Or)) else pretty(f)


# -- robustness --------------------------------------------------------------


@dataclass(frozen=True)
class Robustness:
    value: float

    @property
    def satisfied(self) -> bool:
        return self.value >= 0.0


class _Evaluator:
    def __init__(self, s: np.ndarray):
        self.T = len(s)
        self.s = s
        self.d = np.diff(s)
        self.memo: dict = {}
        self.pred_cache: dict = {}

    def pred_values(self, p: Pred) -> tuple[np.ndarray, int]:
        """Robustness of ``p`` on its whole domain and the first time of that domain."""
        key = id(p)
        hit = self.pred_cache.get(key)
        if hit is None:
            if p.kind == "sig":
                hit = (self.s - p.const, 1)
            elif p.kind == "delta":
                hit = (self.d - p.const, 2)
            else:
                hit = (p.const - np.abs(self.d), 2)
            self.pred_cache[key] = hit
        return hit

    def window(self, f, t: int) -> tuple[int, int]:
        lo = t + f.lo
        hi = self.T if f.hi is None else min(t + f.hi, self.T)
        return lo, hi

    def rho(self, f: Formula, t: int):
        key = (id(f), t)
        if key in self.memo:
            return self.memo[key]
        val = self._rho(f, t)
        self.memo[key] = val
        return val

    def _rho(self, f: Formula, t: int):
        if isinstance(f, Pred):
            vals, first = self.pred_values(f)
            i = t - first
            return float(vals[i]) if 0 <= i < len(vals) else None
        if isinstance(f, Not):
            v = self.rho(f.child, t)
            return None if v is None else -v
        if isinstance(f, (And, Or)):
            a = self.rho(f.left, t)
            b = self.rho(f.right, t)
            if a is None or b is None:
                return None
            return min(a, b) if isinstance(f, And) else max(a, b)
        lo, hi = self.window(f, t)
        if isinstance(f.child, Pred):
            vals, first = self.pred_values(f.child)
            seg = vals[max(lo - first, 0) : max(hi - first + 1, 0)]
            if seg.size == 0:
                return None
            return float(seg.min() if isinstance(f, Always) else seg.max())
        got = [v for u in range(lo, hi + 1) if (v := self.rho(f.child, u)) is not None]
        if not got:
            return None
        return min(got) if isinstance(f, Always) else max(got)


def robustness(f: Formula, s) -> Robustness:
    """Robustness of ``f`` on ``s`` at the root time 0.

    Raises :class:`EvaluationError` when some window needed at the root is
    empty after clipping, e.g. a delta predicate on a length-1 signal.
    """
    sig = as_signal(s)
    value = _Evaluator(sig).rho(f, 0)
    if value is None:
        if uses_delta(f) and len(sig) < 2:
            raise EvaluationError("no delta samples")
        raise EvaluationError(f"robustness undefined: an evaluation window of {pretty(f)} misses the signal (T={len(sig)})")
    return Robustness(value)


def score(f: Formula, s) -> float:
    """Robustness passed through ReLU and clamped to at most 1."""
    return min(max(robustness(f, s).value, 0.0), 1.0)
