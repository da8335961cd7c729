"""Flow-field and slice rendering to portable pixmaps (P6/P5).

Flow frames use the HSV color wheel: hue encodes direction (atan2 of the
velocity), value encodes speed relative to ``max_speed`` (clipped at 1),
saturation is fixed at 1. Pixels without samples render black; when several
flow events hit one pixel inside a window the latest sample wins.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .events import FlowEvent, SensorGeometry
from .slices import SlicePyramid


def hsv_to_rgb(h: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Vectorized HSV (all in [0,1]) to uint8 RGB."""
    i = np.floor(h * 6.0).astype(np.int64) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    rgb = np.stack([r, g, b], axis=-1)
    return (np.clip(rgb, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def render_flow(
    flows: Sequence[FlowEvent],
    geometry: SensorGeometry,
    window_us: int,
    max_speed: float,
    t0: int | None = None,
) -> list[np.ndarray]:
    """One (H, W, 3) uint8 frame per accumulation window."""
    if window_us <= 0:
        raise ValueError("window must be positive")
    if max_speed <= 0:
        raise ValueError("max_speed must be positive")
    if not flows:
        return []
    h, w = geometry.height, geometry.width
    start = flows[0].t if t0 is None else t0
    end = max(f.t for f in flows)
    n_frames = int((end - start) // window_us) + 1
    frames = []
    vx = np.zeros((h, w))
    vy = np.zeros((h, w))
    filled = np.zeros((h, w), dtype=bool)
    fi = 0
    for f in sorted(flows, key=lambda f: f.t):
        while f.t >= start + (fi + 1) * window_us:
            frames.append(_flow_frame(vx, vy, filled, max_speed))
            vx[:] = 0.0
            vy[:] = 0.0
            filled[:] = False
            fi += 1
        vx[f.y, f.x] = f.vx
        vy[f.y, f.x] = f.vy
        filled[f.y, f.x] = True
    frames.append(_flow_frame(vx, vy, filled, max_speed))
    while len(frames) < n_frames:
        frames.append(np.zeros((h, w, 3), dtype=np.uint8))
    return frames


def _flow_frame(vx, vy, filled, max_speed) -> np.ndarray:
    hue = (np.arctan2(vy, vx) / (2.0 * np.pi)) % 1.0
    speed = np.hypot(vx, vy)
    value = np.minimum(speed / max_speed, 1.0)
    value[~filled] = 0.0
    sat = np.ones_like(hue)
    return hsv_to_rgb(hue, sat, value)


def render_slice(pyramid: SlicePyramid, which: str, scale: int) -> np.ndarray:
    """Grayscale (H, W) uint8 view of one slice: linear map by max count."""
    arr = np.abs(pyramid.scale_array(which, scale)).astype(np.float64)
    peak = arr.max()
    if peak == 0:
        return np.zeros(arr.shape, dtype=np.uint8)
    return (arr / peak * 255.0 + 0.5).astype(np.uint8)


def write_ppm(path: str | Path, image: np.ndarray) -> None:
    """Binary P6 pixmap; image is (H, W, 3) uint8."""
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ValueError("write_ppm wants an (H, W, 3) uint8 array")
    h, w = image.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(image.tobytes())


def write_pgm(path: str | Path, image: np.ndarray) -> None:
    """Binary P5 graymap; image is (H, W) uint8."""
    if image.ndim != 2 or image.dtype != np.uint8:
        raise ValueError("write_pgm wants an (H, W) uint8 array")
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(image.tobytes())


def read_ppm(path: str | Path) -> np.ndarray:
    """Read back a binary P6 file (round-trip checks and demos)."""
    data = Path(path).read_bytes()
    if not data.startswith(b"P6"):
        raise ValueError("not a binary P6 pixmap")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(int(data[start:pos]))
    pos += 1
    w, h, maxval = fields
    if maxval != 255:
        raise ValueError("only 8-bit pixmaps supported")
    return np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=pos).reshape(h, w, 3)
