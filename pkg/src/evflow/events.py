"""Event records and bit-exact stream I/O.

Two on-disk encodings carry the same information:

* CSV: one event per line ``t_us,x,y,p`` with p in {0,1} (0=OFF, 1=ON).
* Binary: 16-byte preamble (magic ``EVT0``, u16 width, u16 height, 8 reserved
  zero bytes) followed by packed little-endian records (u64 t_us, u16 x,
  u16 y, u8 p). Constant-size records allow seeking; geometry travels with
  the data.

In memory, polarity is -1/+1.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence, Union

import numpy as np


class SensorGeometry(NamedTuple):
    """Pixel-array dimensions. Default is the 346x260 sensor."""

    width: int = 346
    height: int = 260


DAVIS346 = SensorGeometry(346, 260)


class Event(NamedTuple):
    """One brightness-change event: timestamp (us), pixel, polarity (+1/-1)."""

    t: int
    x: int
    y: int
    pol: int


class FlowEvent(NamedTuple):
    """One optical-flow output sample.

    dx, dy are the matched displacement in scale-`scale` grid units;
    vx, vy are pixels/second at full resolution; sad is the normalized
    match distance in [0, 1].
    """

    t: int
    x: int
    y: int
    dx: int
    dy: int
    scale: int
    vx: float
    vy: float
    sad: float


# In-memory column layout; 'p' holds -1/+1.
EVENT_DTYPE = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1")])
# On-disk binary record; 'p' holds 0/1.
_DISK_DTYPE = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1")])
_MAGIC = b"EVT0"
_HEADER_LEN = 16

FLOW_HEADER = "t,x,y,dx,dy,scale,vx,vy,sad"


class StreamError(ValueError):
    """Malformed or invariant-violating event stream.

    `record` is the 1-based index of the offending record, when known.
    """

    def __init__(self, message: str, record: int | None = None):
        super().__init__(message)
        self.record = record


EventsLike = Union[np.ndarray, Iterable[Event]]


def events_array(events: EventsLike) -> np.ndarray:
    """Coerce an iterable of Event tuples (or an existing array) to EVENT_DTYPE."""
    if isinstance(events, np.ndarray) and events.dtype == EVENT_DTYPE:
        return events
    rows = list(events)
    out = np.empty(len(rows), dtype=EVENT_DTYPE)
    for i, (t, x, y, pol) in enumerate(rows):
        out[i] = (t, x, y, pol)
    return out


def as_events(arr: np.ndarray) -> list[Event]:
    """Expand an EVENT_DTYPE array into Event tuples (test/debug helper)."""
    return [
        Event(int(t), int(x), int(y), int(p))
        for t, x, y, p in zip(arr["t"], arr["x"], arr["y"], arr["p"])
    ]


def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in ("csv", "bin"):
            raise ValueError(f"unknown event format {fmt!r}")
        return fmt
    return "csv" if path.suffix.lower() == ".csv" else "bin"


def _check_stream(arr: np.ndarray, geometry: SensorGeometry | None) -> None:
    """Strict-mode invariants: coordinate bounds and non-decreasing timestamps."""
    if geometry is not None and arr.size:
        bad = (arr["x"] >= geometry.width) | (arr["y"] >= geometry.height)
        if bad.any():
            i = int(np.argmax(bad))
            raise StreamError(
                f"record {i + 1}: coordinate ({arr['x'][i]}, {arr['y'][i]}) "
                f"outside {geometry.width}x{geometry.height}",
                record=i + 1,
            )
    if arr.size > 1:
        t = arr["t"]
        reg = t[1:] < t[:-1]
        if reg.any():
            i = int(np.argmax(reg)) + 1
            raise StreamError(
                f"record {i + 1}: timestamp {t[i]} regresses below {t[i - 1]}",
                record=i + 1,
            )


def read_events(
    path: str | Path,
    fmt: str | None = None,
    geometry: SensorGeometry | None = None,
    strict: bool = True,
) -> np.ndarray:
    """Read an event stream into an EVENT_DTYPE array, in file order.

    For binary files the geometry in the preamble is authoritative; a
    caller-supplied geometry that disagrees is a StreamError. In strict mode,
    bounds and monotonicity violations raise StreamError naming the offending
    record (1-based).
    """
    path = Path(path)
    fmt = _infer_format(path, fmt)
    if fmt == "bin":
        raw = path.read_bytes()
        if len(raw) < _HEADER_LEN or raw[:4] != _MAGIC:
            raise StreamError(f"{path}: missing {_MAGIC!r} preamble")
        w, h = struct.unpack_from("<HH", raw, 4)
        file_geom = SensorGeometry(w, h)
        if geometry is not None and geometry != file_geom:
            raise StreamError(
                f"{path}: declared geometry {geometry} != file geometry {file_geom}"
            )
        body = raw[_HEADER_LEN:]
        if len(body) % _DISK_DTYPE.itemsize:
            raise StreamError(f"{path}: truncated record at end of file")
        disk = np.frombuffer(body, dtype=_DISK_DTYPE)
        arr = np.empty(len(disk), dtype=EVENT_DTYPE)
        arr["t"] = disk["t"]
        arr["x"] = disk["x"]
        arr["y"] = disk["y"]
        if strict and disk.size:
            badp = disk["p"] > 1
            if badp.any():
                i = int(np.argmax(badp))
                raise StreamError(
                    f"record {i + 1}: polarity byte {disk['p'][i]} not in {{0,1}}",
                    record=i + 1,
                )
        arr["p"] = disk["p"].astype(np.int8) * 2 - 1
        if strict:
            _check_stream(arr, file_geom)
        return arr

    rows = []
    with open(path, "r") as fh:
        for i, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            try:
                t, x, y, p = (int(v) for v in parts)
            except ValueError:
                raise StreamError(f"record {i}: malformed line {line!r}", record=i)
            if p not in (0, 1):
                raise StreamError(f"record {i}: polarity {p} not in {{0,1}}", record=i)
            if t < 0:
                raise StreamError(f"record {i}: negative timestamp {t}", record=i)
            rows.append((t, x, y, 2 * p - 1))
    arr = np.array(rows, dtype=EVENT_DTYPE) if rows else np.empty(0, dtype=EVENT_DTYPE)
    if strict:
        _check_stream(arr, geometry)
    return arr


def write_events(
    path: str | Path,
    events: EventsLike,
    geometry: SensorGeometry,
    fmt: str | None = None,
) -> None:
    """Write an event stream in the requested (or extension-inferred) format."""
    path = Path(path)
    fmt = _infer_format(path, fmt)
    arr = events_array(events)
    if fmt == "bin":
        disk = np.empty(len(arr), dtype=_DISK_DTYPE)
        disk["t"] = arr["t"]
        disk["x"] = arr["x"]
        disk["y"] = arr["y"]
        disk["p"] = (arr["p"].astype(np.int16) + 1) // 2
        header = _MAGIC + struct.pack("<HH", geometry.width, geometry.height) + b"\x00" * 8
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(disk.tobytes())
    else:
        with open(path, "w") as fh:
            for t, x, y, p in zip(arr["t"], arr["x"], arr["y"], arr["p"]):
                fh.write(f"{t},{x},{y},{(int(p) + 1) // 2}\n")


def read_binary_geometry(path: str | Path) -> SensorGeometry:
    """Read just the geometry from a binary event file's preamble."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER_LEN)
    if len(head) < _HEADER_LEN or head[:4] != _MAGIC:
        raise StreamError(f"{path}: missing {_MAGIC!r} preamble")
    w, h = struct.unpack_from("<HH", head, 4)
    return SensorGeometry(w, h)


def _fmt_float(v: float) -> str:
    # Fixed 6 decimals when that is exact, else full precision so the
    # write/read round trip reproduces the value bit-for-bit.
    s = f"{v:.6f}"
    return s if float(s) == v else repr(v)


def write_flow(path: str | Path, flows: Sequence[FlowEvent]) -> None:
    """Write flow events as CSV: one row per event, header always present."""
    with open(path, "w") as fh:
        fh.write(FLOW_HEADER + "\n")
        for f in flows:
            fh.write(
                f"{f.t},{f.x},{f.y},{f.dx},{f.dy},{f.scale},"
                f"{_fmt_float(f.vx)},{_fmt_float(f.vy)},{_fmt_float(f.sad)}\n"
            )


def read_flow(path: str | Path) -> list[FlowEvent]:
    """Read a flow CSV written by write_flow."""
    flows: list[FlowEvent] = []
    with open(path, "r") as fh:
        header = fh.readline().strip()
        if header != FLOW_HEADER:
            raise StreamError(f"{path}: unexpected flow header {header!r}")
        for i, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 9:
                raise StreamError(f"flow record {i}: malformed line {line!r}", record=i)
            t, x, y, dx, dy, scale = (int(v) for v in parts[:6])
            vx, vy, sad = (float(v) for v in parts[6:])
            flows.append(FlowEvent(t, x, y, dx, dy, scale, vx, vy, sad))
    return flows


def write_truth(path: str | Path, velocity: tuple[float, float]) -> None:
    """Write the ground-truth sidecar: a single line ``vx vy`` in pps."""
    with open(path, "w") as fh:
        fh.write(f"{velocity[0]!r} {velocity[1]!r}\n")


def read_truth(path: str | Path) -> tuple[float, float]:
    text = Path(path).read_text().split()
    if len(text) != 2:
        raise StreamError(f"{path}: truth sidecar must hold exactly 'vx vy'")
    return float(text[0]), float(text[1])
