"""Block matching between the two past slices.

The reference block is centered on the incoming event's location in the
slice one rotation back; candidates live in the slice two rotations back,
offset by (dx, dy) within the search box [-r, r]^2. The matching cost is a
masked SAD: pixel pairs where both operands are zero contribute nothing to
either the sum or the valid-pair count, and the winner minimizes

    sad_norm = sad / (valid_count * (2^g - 1))

which is resolution-independent and bounded in [0, 1]. Ties break toward the
smaller Chebyshev offset (zero-motion bias), then row-major scan order
(dy then dx, ascending), so results are exactly reproducible. Candidate
ranking compares sad/valid_count as exact integer cross-products; floats
appear only in the reported sad_norm and threshold tests.

Outlier gates: a window is usable only if its nonzero-cell fraction reaches
``valid_pix_occupancy`` (checked on both the reference and each candidate
window), and a winning match is discarded if its sad_norm exceeds
``max_allowed_sad``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .events import Event, FlowEvent
from .slices import PREV, PREV2, SlicePyramid

FULL = "full"
DIAMOND = "diamond"

# Search outcome classes, from least to most advanced failure.
BORDER = "border"        # reference window overhangs the slice edge
OCCUPANCY = "occupancy"  # no candidate passed the occupancy test
SAD = "sad"              # best candidate exceeded max_allowed_sad
OK = "ok"

_STATUS_TO_REASON = {0: OK, 2: OCCUPANCY}


@dataclass(frozen=True)
class SearchConfig:
    block_dim: int = 21            # b: odd, pixels
    radius: int = 4                # r: search radius, pixels
    strategy: str = DIAMOND
    valid_pix_occupancy: float = 0.01
    max_allowed_sad: float = 0.5

    def __post_init__(self):
        if self.block_dim % 2 == 0 or self.block_dim < 1:
            raise ValueError("block_dim must be odd and positive")
        if self.radius < 1:
            raise ValueError("radius must be >= 1")
        if self.strategy not in (FULL, DIAMOND):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if not 0.0 <= self.valid_pix_occupancy <= 1.0:
            raise ValueError("valid_pix_occupancy must be in [0, 1]")
        if not 0.0 <= self.max_allowed_sad <= 1.0:
            raise ValueError("max_allowed_sad must be in [0, 1]")


@dataclass(frozen=True)
class MatchResult:
    dx: int
    dy: int
    sad_norm: float
    scale: int
    valid: bool
    sad_evals: int
    reason: str = OK


_INVALID = dict(dx=0, dy=0, sad_norm=float("nan"), valid=False)


@njit(cache=True)
def _sad_one(ref, cand, cx, cy, dx, dy, half):
    """Masked SAD for one offset: (sad, valid_pairs, cand_nonzero)."""
    sad = 0
    vc = 0
    cnnz = 0
    for yy in range(-half, half + 1):
        ry = cy + yy
        qy = cy + dy + yy
        for xx in range(-half, half + 1):
            a = ref[ry, cx + xx]
            c = cand[qy, cx + dx + xx]
            if c != 0:
                cnnz += 1
            if a != 0 or c != 0:
                vc += 1
                d = a - c
                if d < 0:
                    d = -d
                sad += d
    return sad, vc, cnnz


@njit(cache=True)
def _better(sad, vc, dx, dy, bsad, bvc, bdx, bdy):
    """True if (sad/vc, cheb, dx^2+dy^2, dy, dx) orders strictly before the
    incumbent. The squared-Euclidean middle term keeps the zero-motion bias
    meaningful among equal-Chebyshev candidates (without it, aperture-
    degenerate scenes drift diagonally by scan order)."""
    lhs = sad * bvc
    rhs = bsad * vc
    if lhs != rhs:
        return lhs < rhs
    cheb = max(abs(dx), abs(dy))
    bcheb = max(abs(bdx), abs(bdy))
    if cheb != bcheb:
        return cheb < bcheb
    rad = dx * dx + dy * dy
    brad = bdx * bdx + bdy * bdy
    if rad != brad:
        return rad < brad
    if dy != bdy:
        return dy < bdy
    return dx < bdx


@njit(cache=True)
def _full_kernel(ref, cand, cx, cy, b, r, occ_cells):
    half = b // 2
    h, w = cand.shape
    bsad = np.int64(0)
    bvc = np.int64(0)
    bdx = 0
    bdy = 0
    found = False
    evals = 0
    for dy in range(-r, r + 1):
        qy = cy + dy
        if qy - half < 0 or qy + half >= h:
            continue
        for dx in range(-r, r + 1):
            qx = cx + dx
            if qx - half < 0 or qx + half >= w:
                continue
            sad, vc, cnnz = _sad_one(ref, cand, cx, cy, dx, dy, half)
            evals += 1
            if vc == 0 or cnnz < occ_cells:
                continue
            if not found or _better(sad, vc, dx, dy, bsad, bvc, bdx, bdy):
                bsad, bvc, bdx, bdy = np.int64(sad), np.int64(vc), dx, dy
                found = True
    status = 0 if found else 2
    return status, bdx, bdy, bsad, bvc, evals


@njit(cache=True)
def _diamond_kernel(ref, cand, cx, cy, b, r, occ_cells):
    half = b // 2
    h, w = cand.shape
    side = 2 * r + 1
    # Per-offset memo: 0 unvisited, 1 valid, 2 evaluated-but-unusable,
    # 3 out of box/slice (not an evaluation).
    state = np.zeros((side, side), dtype=np.int8)
    sads = np.zeros((side, side), dtype=np.int64)
    vcs = np.zeros((side, side), dtype=np.int64)

    ldsp_x = np.array([0, 2, -2, 0, 0, 1, 1, -1, -1], dtype=np.int64)
    ldsp_y = np.array([0, 0, 0, 2, -2, 1, -1, 1, -1], dtype=np.int64)
    sdsp_x = np.array([1, -1, 0, 0], dtype=np.int64)
    sdsp_y = np.array([0, 0, 1, -1], dtype=np.int64)

    bsad = np.int64(0)
    bvc = np.int64(0)
    bdx = 0
    bdy = 0
    found = False
    evals = 0

    ccx = 0
    ccy = 0
    max_steps = side * side + 8
    for _step in range(max_steps):
        psad = np.int64(0)
        pvc = np.int64(0)
        pdx = 0
        pdy = 0
        pfound = False
        for i in range(9):
            dx = ccx + int(ldsp_x[i])
            dy = ccy + int(ldsp_y[i])
            if dx < -r or dx > r or dy < -r or dy > r:
                continue
            st = state[dy + r, dx + r]
            if st == 0:
                qx = cx + dx
                qy = cy + dy
                if qx - half < 0 or qx + half >= w or qy - half < 0 or qy + half >= h:
                    st = 3
                else:
                    sad, vc, cnnz = _sad_one(ref, cand, cx, cy, dx, dy, half)
                    evals += 1
                    if vc == 0 or cnnz < occ_cells:
                        st = 2
                    else:
                        st = 1
                        sads[dy + r, dx + r] = sad
                        vcs[dy + r, dx + r] = vc
                state[dy + r, dx + r] = st
            if st != 1:
                continue
            sad = sads[dy + r, dx + r]
            vc = vcs[dy + r, dx + r]
            if not found or _better(sad, vc, dx, dy, bsad, bvc, bdx, bdy):
                bsad, bvc, bdx, bdy = sad, vc, dx, dy
                found = True
            if not pfound or _better(sad, vc, dx, dy, psad, pvc, pdx, pdy):
                psad, pvc, pdx, pdy = sad, vc, dx, dy
                pfound = True
        if not pfound or (pdx == ccx and pdy == ccy):
            break
        ccx = pdx
        ccy = pdy

    # Small-diamond refinement around the final center.
    for i in range(4):
        dx = ccx + int(sdsp_x[i])
        dy = ccy + int(sdsp_y[i])
        if dx < -r or dx > r or dy < -r or dy > r:
            continue
        if state[dy + r, dx + r] != 0:
            if state[dy + r, dx + r] == 1:
                sad = sads[dy + r, dx + r]
                vc = vcs[dy + r, dx + r]
                if not found or _better(sad, vc, dx, dy, bsad, bvc, bdx, bdy):
                    bsad, bvc, bdx, bdy = sad, vc, dx, dy
                    found = True
            continue
        qx = cx + dx
        qy = cy + dy
        if qx - half < 0 or qx + half >= w or qy - half < 0 or qy + half >= h:
            state[dy + r, dx + r] = 3
            continue
        sad, vc, cnnz = _sad_one(ref, cand, cx, cy, dx, dy, half)
        evals += 1
        if vc == 0 or cnnz < occ_cells:
            state[dy + r, dx + r] = 2
            continue
        state[dy + r, dx + r] = 1
        sads[dy + r, dx + r] = sad
        vcs[dy + r, dx + r] = vc
        if not found or _better(sad, vc, dx, dy, bsad, bvc, bdx, bdy):
            bsad, bvc, bdx, bdy = sad, vc, dx, dy
            found = True

    status = 0 if found else 2
    return status, bdx, bdy, bsad, bvc, evals


def block_sad(
    ref: np.ndarray,
    cand: np.ndarray,
    center: tuple[int, int],
    offset: tuple[int, int],
    block_dim: int,
) -> tuple[int, int]:
    """Masked SAD between one reference/candidate window pair.

    Returns (sad, valid_count) where valid pairs have at least one nonzero
    operand; both-zero pairs contribute to neither. Both windows must lie
    fully inside their slices.
    """
    half = block_dim // 2
    cx, cy = center
    dx, dy = offset
    h, w = ref.shape
    if not (half <= cx < w - half and half <= cy < h - half):
        raise ValueError("reference window overhangs the slice")
    ch, cw = cand.shape
    if not (half <= cx + dx < cw - half and half <= cy + dy < ch - half):
        raise ValueError("candidate window overhangs the slice")
    sad, vc, _ = _sad_one(
        np.ascontiguousarray(ref, dtype=np.int16),
        np.ascontiguousarray(cand, dtype=np.int16),
        cx, cy, dx, dy, half,
    )
    return int(sad), int(vc)


def _ref_in_bounds(shape: tuple[int, int], cx: int, cy: int, half: int) -> bool:
    h, w = shape
    return half <= cx < w - half and half <= cy < h - half


def _search_pair(
    ref: np.ndarray,
    cand: np.ndarray,
    center: tuple[int, int],
    cfg: SearchConfig,
    counter_bits: int,
    scale: int = 0,
) -> MatchResult:
    """Run the configured strategy on one slice pair; never raises for
    geometric/occupancy failures, encoding them in MatchResult.reason."""
    b = cfg.block_dim
    half = b // 2
    cx, cy = center
    if not _ref_in_bounds(ref.shape, cx, cy, half):
        return MatchResult(scale=scale, sad_evals=0, reason=BORDER, **_INVALID)
    occ_cells = cfg.valid_pix_occupancy * b * b
    window = ref[cy - half:cy + half + 1, cx - half:cx + half + 1]
    if np.count_nonzero(window) < occ_cells:
        return MatchResult(scale=scale, sad_evals=0, reason=OCCUPANCY, **_INVALID)
    kernel = _full_kernel if cfg.strategy == FULL else _diamond_kernel
    status, dx, dy, sad, vc, evals = kernel(ref, cand, cx, cy, b, cfg.radius, occ_cells)
    if status != 0:
        return MatchResult(scale=scale, sad_evals=int(evals),
                           reason=_STATUS_TO_REASON[status], **_INVALID)
    sad_norm = float(sad) / (float(vc) * ((1 << counter_bits) - 1))
    if sad_norm > cfg.max_allowed_sad:
        return MatchResult(dx=int(dx), dy=int(dy), sad_norm=sad_norm, scale=scale,
                           valid=False, sad_evals=int(evals), reason=SAD)
    return MatchResult(dx=int(dx), dy=int(dy), sad_norm=sad_norm, scale=scale,
                       valid=True, sad_evals=int(evals), reason=OK)


def full_search(
    ref: np.ndarray,
    cand: np.ndarray,
    center: tuple[int, int],
    cfg: SearchConfig,
    counter_bits: int = 3,
    scale: int = 0,
) -> MatchResult:
    """Exhaustive argmin over every in-bounds offset in [-r, r]^2."""
    return _search_pair(ref, cand, center,
                        SearchConfig(cfg.block_dim, cfg.radius, FULL,
                                     cfg.valid_pix_occupancy, cfg.max_allowed_sad),
                        counter_bits, scale)


def diamond_search(
    ref: np.ndarray,
    cand: np.ndarray,
    center: tuple[int, int],
    cfg: SearchConfig,
    counter_bits: int = 3,
    scale: int = 0,
) -> MatchResult:
    """Two-pattern diamond descent (large pattern until the minimum sits at
    the center, then one small-pattern refinement), each unique offset
    evaluated at most once."""
    return _search_pair(ref, cand, center,
                        SearchConfig(cfg.block_dim, cfg.radius, DIAMOND,
                                     cfg.valid_pix_occupancy, cfg.max_allowed_sad),
                        counter_bits, scale)


def match_scales(
    pyramid: SlicePyramid,
    x: int,
    y: int,
    cfg: SearchConfig,
) -> tuple[Optional[MatchResult], list[str]]:
    """Run the search at every scale; return (winner, per-scale reasons).

    The winner is the valid result with minimum sad_norm (ties prefer the
    finer scale). Reasons list one entry per scale for callers that account
    for rejection classes.
    """
    bits = pyramid.cfg.counter_bits
    best: Optional[MatchResult] = None
    reasons: list[str] = []
    for m in range(pyramid.cfg.num_scales):
        ref = pyramid.scale_array(PREV, m)
        cand = pyramid.scale_array(PREV2, m)
        res = _search_pair(ref, cand, (x >> m, y >> m), cfg, bits, scale=m)
        reasons.append(res.reason)
        if res.valid and (best is None or res.sad_norm < best.sad_norm):
            best = res
    return best, reasons


def match_multiscale(
    pyramid: SlicePyramid,
    event: Event,
    cfg: SearchConfig,
) -> Optional[MatchResult]:
    """Best valid match across scales for one event, or None."""
    best, _ = match_scales(pyramid, event.x, event.y, cfg)
    return best


def to_flow(event: Event, match: MatchResult, dt_us: float) -> FlowEvent:
    """Convert a valid match into a flow event.

    The matched offset locates the feature's *old* position, so velocity is
    the negated offset (scaled to full resolution) over the slice interval.
    """
    if not match.valid:
        raise ValueError("cannot convert an invalid match to flow")
    if dt_us <= 0:
        raise ValueError("dt must be positive")
    factor = (1 << match.scale) * 1e6 / dt_us
    return FlowEvent(
        t=event.t, x=event.x, y=event.y,
        dx=match.dx, dy=match.dy, scale=match.scale,
        vx=-match.dx * factor, vy=-match.dy * factor,
        sad=match.sad_norm,
    )
