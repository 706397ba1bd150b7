"""Causal reshaping of per-step confidence signals.

Each strategy maps a signal ``s[1..T]`` to a reshaped signal of the same
length.  The first sample passes through unchanged, and every condition or
prefix statistic is taken over the *original* signal.  Passing
``recursive=True`` instead feeds already-reshaped samples back in; that
variant is for experimentation only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ParameterError

STRATEGIES = ("identity", "cms", "eds", "mps", "gs")


def as_signal(samples: Sequence[float]) -> np.ndarray:
    """Validate and copy ``samples`` into a float64 array."""
    s = np.array(samples, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise ParameterError("signal must be a non-empty 1-D sequence")
    # NaN fails both comparisons
    if not (s.min() >= 0.0 and s.max() <= 1.0):
        raise ParameterError("signal samples must be finite and in [0, 1]")
    return s


def _check_unit(name: str, value: float) -> None:
    if not (math.isfinite(value) and 0.0 <= value <= 1.0):
        raise ParameterError(f"{name} must lie in [0, 1], got {value}")


def _check_nonneg(name: str, value: float) -> None:
    if not (math.isfinite(value) and value >= 0.0):
        raise ParameterError(f"{name} must be a finite non-negative number, got {value}")


def cms(s, delta: float, recursive: bool = False) -> np.ndarray:
    """Causal minimum smoothing: cap each step at the running minimum of earlier steps plus ``delta``."""
    _check_nonneg("delta", delta)
    s = as_signal(s)
    if recursive:
        out = s.copy()
        for t in range(1, len(s)):
            out[t] = min(s[t], out[:t].min() + delta)
        return out
    out = s.copy()
    out[1:] = np.minimum(s[1:], np.minimum.accumulate(s)[:-1] + delta)
    return out


def eds(s, alpha: float, recursive: bool = False) -> np.ndarray:
    """Blend each step with the sum of earlier steps divided by ``t``.

    The divisor is the 1-based step index ``t`` although only ``t - 1``
    earlier values are summed, so the history term is biased low.
    """
    _check_unit("alpha", alpha)
    s = as_signal(s)
    out = s.copy()
    if recursive:
        for t in range(1, len(s)):
            out[t] = alpha * s[t] + (1.0 - alpha) * out[:t].sum() / (t + 1)
        return out
    t = np.arange(2, len(s) + 1, dtype=float)
    out[1:] = alpha * s[1:] + (1.0 - alpha) * np.cumsum(s)[:-1] / t
    return out


def mps(s, tau: float, recursive: bool = False) -> np.ndarray:
    """Replace an upward move out of a sub-``tau`` step with the midpoint of the two steps."""
    _check_unit("tau", tau)
    s = as_signal(s)
    out = s.copy()
    if recursive:
        for t in range(1, len(s)):
            prev = out[t - 1]
            if prev < tau and s[t] > prev:
                out[t] = (prev + s[t]) / 2.0
        return out
    prev, cur = s[:-1], s[1:]
    hit = (prev < tau) & (cur > prev)
    out[1:] = np.where(hit, (prev + cur) / 2.0, cur)
    return out


def gs(s, tau: float, epsilon: float, recursive: bool = False) -> np.ndarray:
    """Cap a jump out of a sub-``tau`` step at ``tau + epsilon``."""
    _check_unit("tau", tau)
    _check_nonneg("epsilon", epsilon)
    cap = tau + epsilon
    if cap > 1.0:
        raise ParameterError(f"tau + epsilon must not exceed 1 (got {tau} + {epsilon})")
    s = as_signal(s)
    out = s.copy()
    if recursive:
        for t in range(1, len(s)):
            if out[t - 1] < tau and s[t] > cap:
                out[t] = cap
        return out
    prev, cur = s[:-1], s[1:]
    out[1:] = np.where((prev < tau) & (cur > cap), cap, cur)
    return out


@dataclass(frozen=True)
class ReshapeParams:
    """Strategy name plus its parameters; a strategy only reads the fields it uses."""

    strategy: str = "identity"
    delta: float = 0.1
    alpha: float = 0.5
    tau: float = 0.5
    epsilon: float = 0.05
    recursive: bool = False

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ParameterError(f"unknown strategy {self.strategy!r}; expected one of {', '.join(STRATEGIES)}")
        if self.strategy == "cms":
            _check_nonneg("delta", self.delta)
        elif self.strategy == "eds":
            _check_unit("alpha", self.alpha)
        elif self.strategy == "mps":
            _check_unit("tau", self.tau)
        elif self.strategy == "gs":
            _check_unit("tau", self.tau)
            _check_nonneg("epsilon", self.epsilon)
            if self.tau + self.epsilon > 1.0:
                raise ParameterError(f"tau + epsilon must not exceed 1 (got {self.tau} + {self.epsilon})")

    def used(self) -> dict:
        """The parameters this strategy actually reads."""
        names = {"identity": (), "cms": ("delta",), "eds": ("alpha",), "mps": ("tau",), "gs": ("tau", "epsilon")}
        return {k: getattr(self, k) for k in names[self.strategy]}


def apply(s, p: ReshapeParams) -> np.ndarray:
    p.validate()
    if p.strategy == "identity":
        return as_signal(s)
    if p.strategy == "cms":
        return cms(s, p.delta, p.recursive)
    if p.strategy == "eds":
        return eds(s, p.alpha, p.recursive)
    if p.strategy == "mps":
        return mps(s, p.tau, p.recursive)
    return gs(s, p.tau, p.epsilon, p.recursive)
