"""Per-event pipeline: rotation check, adaptation, accumulation, skip gate,
multi-scale matching, outlier gates, histogram update, flow output.

Order per incoming event (matching the hardware-oriented dataflow):

1. rotation trigger test (on pre-accumulation state); on trigger: adapt the
   policy parameter from the displacement histogram, apply any scripted
   perturbation, rotate the ring, reset the histogram;
2. accumulate the event into all scales of the fresh/current slice;
3. skip gate (every p-th event proceeds; the rest only accumulated);
4. flow computation: requires both past slices populated with a positive
   inter-slice interval, an in-bounds reference window, occupancy and SAD
   gates; survivors update the histogram and are emitted.

Every event lands in exactly one accounting bucket, so the run statistics
partition the input count.
"""

from __future__ import annotations

import copy
import time
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence, Union

import numpy as np

from .control import ControllerState, OFHistogram, SkipState
from .events import EVENT_DTYPE, Event, FlowEvent, events_array
from .search import BORDER, OCCUPANCY, OK, SAD, SearchConfig, match_scales, to_flow
from .slices import SliceConfig, SlicePyramid


@dataclass
class PipelineConfig:
    slices: SliceConfig = field(default_factory=SliceConfig)
    search: SearchConfig = field(default_factory=SearchConfig)
    feedback_enabled: bool = True
    target_distance: Optional[float] = None  # default r/2
    adjust_factor: float = 0.05
    skip_p: int = 1
    skip_p_max: int = 1000
    skip_budget_us: Optional[float] = None   # adaptive skipping when set
    scripted_costs: Optional[Sequence[float]] = None
    # rotation index -> multiplier applied to the active parameter, for
    # reproducing manual-perturbation experiments.
    perturbations: dict[int, float] = field(default_factory=dict)


@dataclass
class RunStats:
    events_in: int = 0
    of_events_out: int = 0
    per_scale: list[int] = field(default_factory=list)
    rejected_occupancy: int = 0
    rejected_sad: int = 0
    skipped: int = 0
    border_skipped: int = 0
    pre_warmup: int = 0
    rotations: int = 0
    final_parameter: float = 0.0
    last_slice_duration_us: float = 0.0
    saturated_increments: int = 0
    gf_vx: float = float("nan")
    gf_vy: float = float("nan")

    @property
    def ed(self) -> float:
        """Fraction of input events that produced a flow result."""
        return self.of_events_out / self.events_in if self.events_in else 0.0

    def partition_total(self) -> int:
        return (self.of_events_out + self.rejected_occupancy + self.rejected_sad
                + self.skipped + self.border_skipped + self.pre_warmup)

    def to_dict(self) -> dict:
        return {
            "events_in": self.events_in,
            "of_events_out": self.of_events_out,
            "per_scale": list(self.per_scale),
            "rejected_occupancy": self.rejected_occupancy,
            "rejected_sad": self.rejected_sad,
            "skipped": self.skipped,
            "border_skipped": self.border_skipped,
            "pre_warmup": self.pre_warmup,
            "rotations": self.rotations,
            "final_parameter": self.final_parameter,
            "last_slice_duration_us": self.last_slice_duration_us,
            "saturated_increments": self.saturated_increments,
            "ed": self.ed,
            "gf_vx": self.gf_vx,
            "gf_vy": self.gf_vy,
        }


#: One controller-trace row per rotation.
TraceRow = tuple  # (rotation_index, mean_match_distance | nan, parameter, p)

TRACE_HEADER = "rotation,mean_match_distance,parameter,p"


def write_trace(path, rows: Iterable[TraceRow]) -> None:
    with open(path, "w") as fh:
        fh.write(TRACE_HEADER + "\n")
        for rot, d, param, p in rows:
            dtxt = "nan" if d is None else repr(float(d))
            fh.write(f"{rot},{dtxt},{param!r},{p}\n")


class Engine:
    """One engine per stream; strictly sequential in stream order."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        # Policies carry live trigger state; a private copy keeps one config
        # reusable across runs (and runs bit-for-bit repeatable).
        self.slice_cfg = copy.deepcopy(cfg.slices)
        self.pyramid = SlicePyramid(self.slice_cfg)
        self.policy = self.slice_cfg.policy
        radius = cfg.search.radius
        self.histogram = OFHistogram(radius)
        target = cfg.target_distance if cfg.target_distance is not None else radius / 2
        self.controller = ControllerState(target=target, adjust_factor=cfg.adjust_factor)
        self.skip = SkipState(p=cfg.skip_p, p_max=cfg.skip_p_max,
                              budget_us=cfg.skip_budget_us)
        self.stats = RunStats(per_scale=[0] * cfg.slices.num_scales)
        self.trace: list[TraceRow] = []
        self._event_index = 0
        self._prev_rotation_t: Optional[int] = None
        self._first_event_t: Optional[int] = None
        self._vx_sum = 0.0
        self._vy_sum = 0.0
        self._cost_iter: Optional[Iterator[float]] = (
            iter(cfg.scripted_costs) if cfg.scripted_costs is not None else None
        )

    # -- pipeline steps ----------------------------------------------------

    def _rotate(self, t: int) -> None:
        d = self.histogram.mean_or_none()
        if self.cfg.feedback_enabled:
            self.controller.adapt(self.histogram, self.policy)
        else:
            self.controller.d_last = d
        rot = self.stats.rotations
        if rot in self.cfg.perturbations:
            self.policy.param = self.policy.clamp(
                self.policy.param * self.cfg.perturbations[rot])
        self.pyramid.rotate()
        self.histogram.reset()
        prev = self._prev_rotation_t if self._prev_rotation_t is not None \
            else self._first_event_t
        self.stats.last_slice_duration_us = float(t - prev) if prev is not None else 0.0
        self._prev_rotation_t = t
        self.stats.rotations += 1
        self.trace.append((rot, d, self.policy.param, self.skip.p))

    def process_event(self, t: int, x: int, y: int, pol: int) -> Optional[FlowEvent]:
        """Run the full pipeline for one event; returns its flow, if any."""
        if self._first_event_t is None:
            self._first_event_t = t
        self.stats.events_in += 1
        idx = self._event_index
        self._event_index += 1

        if self.pyramid.should_rotate(t, x, y):
            self._rotate(t)
        self.pyramid.accumulate(t, x, y, pol)

        if self.skip.should_skip(idx):
            self.stats.skipped += 1
            return None

        started = time.perf_counter_ns() if (self.skip.adaptive
                                             and self._cost_iter is None) else 0
        flow = self._compute_flow(t, x, y, pol)
        if self.skip.adaptive:
            if self._cost_iter is not None:
                cost = next(self._cost_iter, None)
                if cost is not None:
                    self.skip.update(cost)
            else:
                self.skip.update((time.perf_counter_ns() - started) / 1e3)
        return flow

    def _compute_flow(self, t: int, x: int, y: int, pol: int) -> Optional[FlowEvent]:
        dt = self.pyramid.dt_or_none()
        if dt is None:
            self.stats.pre_warmup += 1
            return None
        best, reasons = match_scales(self.pyramid, x, y, self.cfg.search)
        if best is None:
            # Most advanced failure wins the accounting bucket.
            if SAD in reasons:
                self.stats.rejected_sad += 1
            elif OCCUPANCY in reasons:
                self.stats.rejected_occupancy += 1
            else:
                self.stats.border_skipped += 1
            return None
        self.histogram.update(best)
        flow = to_flow(Event(t, x, y, pol), best, dt)
        self.stats.of_events_out += 1
        self.stats.per_scale[best.scale] += 1
        self._vx_sum += flow.vx
        self._vy_sum += flow.vy
        return flow

    def finalize(self) -> RunStats:
        self.stats.final_parameter = self.policy.param
        self.stats.saturated_increments = self.pyramid.saturated_increments
        if self.stats.of_events_out:
            self.stats.gf_vx = self._vx_sum / self.stats.of_events_out
            self.stats.gf_vy = self._vy_sum / self.stats.of_events_out
        return self.stats


EventsLike = Union[np.ndarray, Iterable[Event]]


def process_stream(
    events: EventsLike,
    cfg: PipelineConfig,
) -> tuple[list[FlowEvent], RunStats, list[TraceRow]]:
    """Process a time-ordered stream; deterministic for fixed-p or
    scripted-cost configurations."""
    engine = Engine(cfg)
    flows: list[FlowEvent] = []
    append = flows.append
    step = engine.process_event
    if isinstance(events, np.ndarray):
        if events.dtype != EVENT_DTYPE:
            events = events_array(events)
        n = len(events)
        chunk = 1 << 16
        for lo in range(0, n, chunk):
            hi = min(lo + chunk, n)
            ts = events["t"][lo:hi].tolist()
            xs = events["x"][lo:hi].tolist()
            ys = events["y"][lo:hi].tolist()
            ps = events["p"][lo:hi].tolist()
            for t, x, y, p in zip(ts, xs, ys, ps):
                f = step(t, x, y, p)
                if f is not None:
                    append(f)
    else:
        for e in events:
            f = step(e[0], e[1], e[2], e[3])
            if f is not None:
                append(f)
    stats = engine.finalize()
    return flows, stats, engine.trace
