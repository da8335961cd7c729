"""Feedback control of the rotation parameter and adaptive event skipping.

The displacement histogram collects accepted match offsets between slice
rotations; its mean Euclidean match distance D is compared against the
target r/2 at each rotation. Bang-bang control nudges the active policy
parameter by a fixed +/-5%: too-long slices (D above target) shrink it,
too-brief slices grow it. Results are clamped to the policy's bounds.

Event skipping trades flow density for throughput: only every p-th event
gets a flow computation, but every event is still accumulated, so slices
and rotation times are unaffected by p.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .search import MatchResult
from .slices import RotationPolicy


class OFHistogram:
    """Counts of accepted match offsets over [-r, r]^2, all scales pooled
    at their native grid. Reset at every slice rotation."""

    def __init__(self, radius: int):
        self.radius = radius
        side = 2 * radius + 1
        self.counts = np.zeros((side, side), dtype=np.int64)
        self.n = 0
        dy, dx = np.mgrid[-radius:radius + 1, -radius:radius + 1]
        self._dist = np.hypot(dx, dy)

    def update(self, match: MatchResult) -> None:
        if not match.valid:
            raise ValueError("histogram only collects valid matches")
        self.counts[match.dy + self.radius, match.dx + self.radius] += 1
        self.n += 1

    def mean_match_distance(self) -> float:
        """Mean Euclidean offset magnitude; requires at least one sample."""
        if self.n < 1:
            raise ValueError("empty histogram")
        return float((self.counts * self._dist).sum() / self.n)

    def mean_or_none(self) -> Optional[float]:
        return self.mean_match_distance() if self.n else None

    def reset(self) -> None:
        self.counts[:] = 0
        self.n = 0


@dataclass
class ControllerState:
    """Bang-bang adaptation toward a target mean match distance (r/2)."""

    target: float
    adjust_factor: float = 0.05
    d_last: Optional[float] = None

    def adapt(self, hist: OFHistogram, policy: RotationPolicy) -> None:
        """Apply one control step; call at each rotation, before the
        histogram reset. Empty histogram or D exactly on target: no change."""
        d = hist.mean_or_none()
        self.d_last = d
        if d is None or d == self.target:
            return
        if d > self.target:
            new = policy.param * (1.0 - self.adjust_factor)
        else:
            new = policy.param * (1.0 + self.adjust_factor)
        policy.param = policy.clamp(new)


def adapt_parameter(ctrl: ControllerState, hist: OFHistogram,
                    policy: RotationPolicy) -> None:
    ctrl.adapt(hist, policy)


@dataclass
class SkipState:
    """Skip parameter p with optional cost-budget adaptation.

    Fixed-p mode (budget_us is None) ignores measurements entirely. In
    adaptive mode the smoothed per-event cost is compared against the
    budget: falling behind doubles p immediately, headroom walks it back
    down one step at a time.
    """

    p: int = 1
    p_max: int = 1000
    budget_us: Optional[float] = None
    ema_cost: float = 0.0
    ema_alpha: float = 0.1

    def __post_init__(self):
        if self.p < 1 or self.p > self.p_max:
            raise ValueError("p must be in [1, p_max]")

    @property
    def adaptive(self) -> bool:
        return self.budget_us is not None

    def update(self, measured_cost_us: float) -> None:
        if not self.adaptive:
            return
        self.ema_cost += self.ema_alpha * (measured_cost_us - self.ema_cost)
        if self.ema_cost > self.budget_us:
            self.p = min(self.p * 2, self.p_max)
        else:
            self.p = max(self.p - 1, 1)

    def should_skip(self, event_index: int) -> bool:
        """True for all but every p-th event (0, p, 2p, ... are processed)."""
        return event_index % self.p != 0


def update_skip(state: SkipState, measured_cost_us: float) -> None:
    state.update(measured_cost_us)


def should_skip(state: SkipState, event_index: int) -> bool:
    return state.should_skip(event_index)
