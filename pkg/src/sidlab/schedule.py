"""Noise schedules: the keep-probability alpha as a function of time.

Convention throughout the package: t=0 is pure noise with alpha(0)=0 and
t=1 is clean data with alpha(1)=1. Sampling walks t upward in steps of
1/T.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable


def _check_time(t: float) -> None:
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"time must lie in [0, 1], got {t}")


def cosine_alpha(t: float) -> float:
    """cos^2((1-t) * pi/2), smooth with both endpoints exact."""
    _check_time(t)
    c = math.cos((1.0 - t) * math.pi / 2.0)
    return c * c


def cosine_alpha_dot(t: float) -> float:
    _check_time(t)
    return (math.pi / 2.0) * math.sin(math.pi * t)


def linear_alpha(t: float) -> float:
    _check_time(t)
    return t


def linear_alpha_dot(t: float) -> float:
    _check_time(t)
    return 1.0


@dataclass(frozen=True)
class Schedule:
    """The mapping t -> alpha_t with its time derivative."""

    kind: str
    alpha: Callable[[float], float]
    alpha_dot: Callable[[float], float]

    @classmethod
    def make(cls, kind: str) -> "Schedule":
        if kind == "cosine":
            return cls("cosine", cosine_alpha, cosine_alpha_dot)
        if kind == "linear-alpha":
            return cls("linear-alpha", linear_alpha, linear_alpha_dot)
        raise ValueError(f"unknown schedule kind: {kind!r}")
