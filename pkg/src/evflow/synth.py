"""Synthetic event streams with analytic ground-truth flow.

A binary pattern translates across the sensor at constant velocity on a
torus (patterns wrap, so flow is uniform everywhere for the full duration).
Pixel (x, y) samples the pattern at its center, so its brightness at time
tau is P[(y + 0.5 - vy*tau) mod H, (x + 0.5 - vx*tau) mod W] (floor
sampling). Each unit brightness step at a pixel emits exactly one event at
the analytically exact crossing time, with polarity equal to the step sign.
There is no refractory period and no threshold mismatch; sensor
non-idealities are modeled only by the Poisson noise term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .events import EVENT_DTYPE, SensorGeometry


class GroundTruth(NamedTuple):
    """Constant global translation, pixels/second."""

    vx: float
    vy: float


@dataclass(frozen=True)
class RandomDots:
    """Each pattern cell is ON independently with probability `density`."""

    density: float = 0.05


@dataclass(frozen=True)
class Bar:
    """A stripe of the given width whose long axis lies at `angle_deg`.

    angle_deg=90 is a vertical bar; the stripe passes through the pattern
    center.
    """

    width: float = 2.0
    angle_deg: float = 90.0


@dataclass(frozen=True)
class Grid:
    """One-pixel lines every `pitch` pixels along both axes."""

    pitch: int = 16


Pattern = RandomDots | Bar | Grid


@dataclass(frozen=True)
class SceneSpec:
    geometry: SensorGeometry = SensorGeometry()
    pattern: Pattern = field(default_factory=RandomDots)
    velocity: tuple[float, float] = (90.0, 0.0)
    duration_s: float = 1.0
    seed: int = 0
    noise_rate: float = 0.0  # background events / pixel / second
    phase: tuple[int, int] = (0, 0)  # integer start shift of the pattern, pixels

    def __post_init__(self):
        if self.geometry.width < 1 or self.geometry.height < 1:
            raise ValueError("zero-area geometry")
        if self.duration_s <= 0:
            raise ValueError("duration must be positive")
        if self.noise_rate < 0:
            raise ValueError("noise_rate must be >= 0")
        if isinstance(self.pattern, RandomDots) and not 0 < self.pattern.density <= 1:
            raise ValueError("density must be in (0, 1]")
        # Zero velocity is legal (with noise_rate=0 it yields an empty
        # stream); degenerate patterns are rejected in make_pattern.


def make_pattern(spec: SceneSpec) -> np.ndarray:
    """Binary (H, W) pattern array for the scene, already phase-shifted."""
    w, h = spec.geometry.width, spec.geometry.height
    p = spec.pattern
    if isinstance(p, RandomDots):
        rng = np.random.default_rng(spec.seed)
        pat = rng.random((h, w)) < p.density
    elif isinstance(p, Bar):
        if p.width <= 0:
            raise ValueError("bar width must be positive")
        ang = math.radians(p.angle_deg)
        nx, ny = -math.sin(ang), math.cos(ang)  # unit normal of the long axis
        ys, xs = np.mgrid[0:h, 0:w]
        d = (xs + 0.5 - w / 2) * nx + (ys + 0.5 - h / 2) * ny
        pat = np.abs(d) < p.width / 2
    elif isinstance(p, Grid):
        if p.pitch < 2:
            raise ValueError("grid pitch must be >= 2")
        ys, xs = np.mgrid[0:h, 0:w]
        pat = (xs % p.pitch == 0) | (ys % p.pitch == 0)
    else:
        raise ValueError(f"unknown pattern {p!r}")
    if not pat.any():
        raise ValueError("pattern is empty for this geometry")
    px, py = spec.phase
    if px or py:
        pat = np.roll(pat, (py, px), axis=(0, 1))
    return pat.astype(np.int8)


def _crossing_times(speed: float, duration_s: float) -> np.ndarray:
    """Boundary-crossing times (j - 0.5)/|v| for j = 1.. within the stream."""
    if speed == 0:
        return np.empty(0)
    n = int(math.floor(abs(speed) * duration_s + 0.5))
    j = np.arange(1, n + 1, dtype=np.float64)
    return (j - 0.5) / abs(speed)


def generate(spec: SceneSpec) -> tuple[np.ndarray, GroundTruth]:
    """Generate the event stream and its ground truth.

    Returns events globally sorted by (t, y, x) as an EVENT_DTYPE array.
    Identical spec (same seed) produces a byte-identical stream.
    """
    pat = make_pattern(spec)
    h, w = pat.shape
    vx, vy = spec.velocity

    tx = _crossing_times(vx, spec.duration_s)
    ty = _crossing_times(vy, spec.duration_s)

    # Merge the two crossing schedules. Simultaneous x/y crossings (exactly
    # equal times) are handled as one combined diagonal transition so no
    # intermediate-state events are fabricated.
    sched: list[tuple[float, int, int]] = []  # (time, dcols, drows)
    sx = 1 if vx > 0 else -1
    sy = 1 if vy > 0 else -1
    i = j = 0
    while i < len(tx) or j < len(ty):
        if j >= len(ty) or (i < len(tx) and tx[i] < ty[j]):
            sched.append((tx[i], sx, 0))
            i += 1
        elif i >= len(tx) or ty[j] < tx[i]:
            sched.append((ty[j], 0, sy))
            j += 1
        else:  # equal: corner crossing
            sched.append((tx[i], sx, sy))
            i += 1
            j += 1

    chunks_t: list[np.ndarray] = []
    chunks_x: list[np.ndarray] = []
    chunks_y: list[np.ndarray] = []
    chunks_p: list[np.ndarray] = []

    # Cumulative shifts: after c column-crossings the sampled column for
    # pixel x is (x - c*sign) mod W, i.e. the pattern as seen on the sensor
    # is np.roll(pat, (r*sy, c*sx)).
    c = r = 0
    old = pat
    for tau, dc, dr in sched:
        c += dc
        r += dr
        new = np.roll(pat, (r, c), axis=(0, 1))
        diff = new.astype(np.int8) - old.astype(np.int8)
        ys, xs = np.nonzero(diff)
        if ys.size:
            t_us = np.uint64(round(tau * 1e6))
            chunks_t.append(np.full(ys.size, t_us, dtype=np.uint64))
            chunks_x.append(xs.astype(np.uint16))
            chunks_y.append(ys.astype(np.uint16))
            chunks_p.append(diff[ys, xs])
        old = new

    if chunks_t:
        t_all = np.concatenate(chunks_t)
        x_all = np.concatenate(chunks_x)
        y_all = np.concatenate(chunks_y)
        p_all = np.concatenate(chunks_p)
    else:
        t_all = np.empty(0, dtype=np.uint64)
        x_all = np.empty(0, dtype=np.uint16)
        y_all = np.empty(0, dtype=np.uint16)
        p_all = np.empty(0, dtype=np.int8)

    if spec.noise_rate > 0:
        # Noise drawn from the same seeded generator family as the pattern;
        # a distinct child stream keeps pattern content independent of it.
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0xBADD]))
        n_noise = int(rng.poisson(spec.noise_rate * w * h * spec.duration_s))
        if n_noise:
            nt = rng.integers(0, int(spec.duration_s * 1e6), n_noise, dtype=np.uint64)
            nx = rng.integers(0, w, n_noise).astype(np.uint16)
            ny = rng.integers(0, h, n_noise).astype(np.uint16)
            npol = (rng.integers(0, 2, n_noise).astype(np.int8) * 2 - 1)
            t_all = np.concatenate([t_all, nt])
            x_all = np.concatenate([x_all, nx])
            y_all = np.concatenate([y_all, ny])
            p_all = np.concatenate([p_all, npol])

    order = np.lexsort((x_all, y_all, t_all))
    out = np.empty(order.size, dtype=EVENT_DTYPE)
    out["t"] = t_all[order]
    out["x"] = x_all[order]
    out["y"] = y_all[order]
    out["p"] = p_all[order]
    return out, GroundTruth(float(vx), float(vy))
