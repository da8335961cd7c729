"""Three-deep ring of multi-scale time-slice histograms and rotation policies.

The ring holds slices for the current accumulation interval ("t") and the two
previous intervals ("t-d", "t-2d"). Rotation recycles the oldest buffer as the
new current slice. Each ring position is a stack of per-scale 2D arrays of
g-bit saturating counters; scale m subsamples event addresses by ``>> m``.

Rotation triggers are checked *before* the incoming event is accumulated, and
a triggering event lands in the fresh slice after rotation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .events import SensorGeometry

CURRENT = "t"
PREV = "t-d"
PREV2 = "t-2d"
_RING_OFFSET = {CURRENT: 0, PREV: -1, PREV2: -2}


class RotationPolicy:
    """Decides when the slice ring rotates. Subclasses hold the one live
    parameter that the feedback controller adapts, exposed as ``param``."""

    param_name: str = ""
    bounds: tuple[float, float] = (0.0, math.inf)

    @property
    def param(self) -> float:
        raise NotImplementedError

    @param.setter
    def param(self, value: float) -> None:
        raise NotImplementedError

    def clamp(self, value: float) -> float:
        lo, hi = self.bounds
        return min(max(value, lo), hi)

    def bind(self, geometry: SensorGeometry) -> None:
        """Called once when the pyramid is built; default needs nothing."""

    def should_rotate(self, pyramid: "SlicePyramid", t: int, x: int, y: int) -> bool:
        raise NotImplementedError

    def on_accumulate(self, x: int, y: int) -> None:
        """Per-event bookkeeping after the event joins the current slice."""

    def on_rotate(self) -> None:
        """Reset per-slice trigger state after a rotation."""


class ConstantDuration(RotationPolicy):
    """Rotate on the first event at or beyond each duration deadline.

    Deadlines advance on a fixed grid anchored at the first event's
    timestamp (start += d per rotation), so uniform slice durations survive
    sparse stretches; after a gap each event triggers one catch-up rotation
    until the grid catches up. No wall-clock timers: empty periods produce
    no rotations.
    """

    param_name = "d_us"

    def __init__(self, duration_us: float = 50_000.0,
                 bounds: tuple[float, float] = (1_000.0, 100_000.0)):
        self.duration_us = float(duration_us)
        self.bounds = bounds
        self._start_us: Optional[float] = None
        self._pending_step = 0.0

    @property
    def param(self) -> float:
        return self.duration_us

    @param.setter
    def param(self, value: float) -> None:
        self.duration_us = float(value)

    def should_rotate(self, pyramid, t, x, y) -> bool:
        if self._start_us is None:
            self._start_us = float(t)
        if t - self._start_us >= self.duration_us:
            # The step uses the duration in effect when the trigger fired,
            # even if the controller adapts it before on_rotate runs.
            self._pending_step = self.duration_us
            return True
        return False

    def on_rotate(self) -> None:
        if self._start_us is not None:
            self._start_us += self._pending_step


class ConstantEventNumber(RotationPolicy):
    """Rotate once the current slice holds `threshold` events (the trigger
    event then opens the next slice, so completed slices hold exactly
    `threshold` events)."""

    param_name = "K"

    def __init__(self, threshold: float = 10_000.0,
                 bounds: tuple[float, float] = (1_000.0, 50_000.0)):
        self.threshold = float(threshold)
        self.bounds = bounds

    @property
    def param(self) -> float:
        return self.threshold

    @param.setter
    def param(self, value: float) -> None:
        self.threshold = float(value)

    def should_rotate(self, pyramid, t, x, y) -> bool:
        return pyramid.count(CURRENT) >= self.threshold


class AreaEventNumber(RotationPolicy):
    """Rotate when any spatial sub-area's event count would reach `threshold`.

    Areas are square cells of side 2^area_shift pixels indexed by coordinate
    right-shift (a pure shift in hardware). Counters reset at every rotation.
    """

    param_name = "k"

    def __init__(self, threshold: float = 1_000.0, area_shift: int = 5,
                 bounds: tuple[float, float] = (100.0, 1_000.0)):
        if area_shift < 0:
            raise ValueError("area_shift must be >= 0")
        self.threshold = float(threshold)
        self.area_shift = int(area_shift)
        self.bounds = bounds
        self.counters: np.ndarray = np.zeros((1, 1), dtype=np.int64)

    @property
    def param(self) -> float:
        return self.threshold

    @param.setter
    def param(self, value: float) -> None:
        self.threshold = float(value)

    def bind(self, geometry: SensorGeometry) -> None:
        aw = (geometry.width + (1 << self.area_shift) - 1) >> self.area_shift
        ah = (geometry.height + (1 << self.area_shift) - 1) >> self.area_shift
        self.counters = np.zeros((ah, aw), dtype=np.int64)

    def should_rotate(self, pyramid, t, x, y) -> bool:
        return self.counters[y >> self.area_shift, x >> self.area_shift] + 1 >= self.threshold

    def on_accumulate(self, x: int, y: int) -> None:
        self.counters[y >> self.area_shift, x >> self.area_shift] += 1

    def on_rotate(self) -> None:
        self.counters[:] = 0


@dataclass
class SliceConfig:
    geometry: SensorGeometry = SensorGeometry()
    num_scales: int = 2          # s, 1..3 typical
    counter_bits: int = 3        # g, 1..7
    use_polarity: bool = False   # signed accumulation when True
    policy: RotationPolicy = field(default_factory=AreaEventNumber)

    def __post_init__(self):
        if self.num_scales < 1:
            raise ValueError("num_scales must be >= 1")
        if not 1 <= self.counter_bits <= 7:
            raise ValueError("counter_bits must be in 1..7")
        if self.use_polarity and self.counter_bits < 2:
            raise ValueError("signed counters need at least 2 bits")

    @property
    def cell_max(self) -> int:
        """Upper saturation bound: 2^g - 1 unsigned, 2^(g-1) - 1 signed."""
        if self.use_polarity:
            return (1 << (self.counter_bits - 1)) - 1
        return (1 << self.counter_bits) - 1

    @property
    def cell_min(self) -> int:
        return -self.cell_max if self.use_polarity else 0

    def scale_shape(self, m: int) -> tuple[int, int]:
        """(rows, cols) at scale m; ceil division so no event is dropped."""
        w = -(-self.geometry.width // (1 << m))
        h = -(-self.geometry.height // (1 << m))
        return h, w


class UndefinedDeltaT(ValueError):
    """Raised when the inter-slice interval is not yet defined."""


class SlicePyramid:
    """Single-owner sequential object; mutated only by the engine loop."""

    def __init__(self, cfg: SliceConfig):
        self.cfg = cfg
        self.policy = cfg.policy
        self.policy.bind(cfg.geometry)
        self._bufs = [
            [np.zeros(cfg.scale_shape(m), dtype=np.int16) for m in range(cfg.num_scales)]
            for _ in range(3)
        ]
        self._first_ts: list[Optional[int]] = [None, None, None]
        self._last_ts: list[Optional[int]] = [None, None, None]
        self._counts = [0, 0, 0]
        self._t = 0
        self.saturated_increments = 0

    # -- ring addressing ---------------------------------------------------

    def _idx(self, which: str) -> int:
        return (self._t + _RING_OFFSET[which]) % 3

    def scale_array(self, which: str, scale: int) -> np.ndarray:
        """Backing counter array for one ring position and scale."""
        return self._bufs[self._idx(which)][scale]

    def count(self, which: str) -> int:
        return self._counts[self._idx(which)]

    def first_ts(self, which: str) -> Optional[int]:
        return self._first_ts[self._idx(which)]

    def last_ts(self, which: str) -> Optional[int]:
        return self._last_ts[self._idx(which)]

    def slice_time(self, which: str) -> float:
        """Midpoint timestamp: average of first and last event timestamps."""
        i = self._idx(which)
        if self._first_ts[i] is None:
            raise UndefinedDeltaT(f"slice {which} holds no events")
        return (self._first_ts[i] + self._last_ts[i]) / 2

    # -- spec operations ---------------------------------------------------

    def accumulate(self, t: int, x: int, y: int, pol: int) -> None:
        """Add one event to the current slice at every scale (saturating)."""
        i = self._t
        inc = pol if self.cfg.use_polarity else 1
        hi = self.cfg.cell_max
        lo = self.cfg.cell_min
        for m, arr in enumerate(self._bufs[i]):
            cy = y >> m
            cx = x >> m
            v = arr[cy, cx] + inc
            if v > hi:
                v = hi
                self.saturated_increments += 1
            elif v < lo:
                v = lo
                self.saturated_increments += 1
            arr[cy, cx] = v
        if self._first_ts[i] is None:
            self._first_ts[i] = t
        self._last_ts[i] = t
        self._counts[i] += 1
        self.policy.on_accumulate(x, y)

    def should_rotate(self, t: int, x: int, y: int) -> bool:
        """Ask the policy whether this (not yet accumulated) event triggers."""
        return self.policy.should_rotate(self, t, x, y)

    def rotate(self) -> None:
        """Advance the ring: t -> t-d -> t-2d; oldest buffer becomes new t."""
        new_t = (self._t + 1) % 3  # == (t - 2) mod 3: the old t-2d buffer
        for arr in self._bufs[new_t]:
            arr.fill(0)
        self._first_ts[new_t] = None
        self._last_ts[new_t] = None
        self._counts[new_t] = 0
        self._t = new_t
        self.policy.on_rotate()

    def slice_dt_us(self) -> float:
        """Interval between the midpoints of slices t-d and t-2d.

        Raises UndefinedDeltaT when either slice is empty; callers suppress
        flow output for such periods.
        """
        return self.slice_time(PREV) - self.slice_time(PREV2)

    def dt_or_none(self) -> Optional[float]:
        """slice_dt_us, or None when undefined or non-positive."""
        i1 = self._idx(PREV)
        i0 = self._idx(PREV2)
        if self._first_ts[i1] is None or self._first_ts[i0] is None:
            return None
        dt = (self._first_ts[i1] + self._last_ts[i1]
              - self._first_ts[i0] - self._last_ts[i0]) / 2
        return dt if dt > 0 else None

    # -- introspection -----------------------------------------------------

    def storage_bits(self) -> int:
        """Total counter storage: 3 ring positions x g bits x cells/scale."""
        g = self.cfg.counter_bits
        cells = sum(h * w for h, w in (self.cfg.scale_shape(m)
                                       for m in range(self.cfg.num_scales)))
        return 3 * g * cells
