"""Diamond-vs-full search comparison on a live slice stream.

Feeds events through the slice ring (no feedback, no flow output) and at a
regular event stride runs both strategies on the same slice pair and
reference center, counting how often diamond lands on the exhaustive
optimum and how many SAD evaluations each spends.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .events import EVENT_DTYPE
from .search import DIAMOND, FULL, SearchConfig, _search_pair
from .slices import PREV, PREV2, SliceConfig, SlicePyramid


@dataclass(frozen=True)
class BenchResult:
    matches: int            # instances where full search found a valid match
    agreements: int         # diamond returned the same offset (and validity)
    full_evals_mean: float
    diamond_evals_mean: float

    @property
    def agreement_rate(self) -> float:
        return self.agreements / self.matches if self.matches else 0.0

    @property
    def eval_ratio(self) -> float:
        return (self.full_evals_mean / self.diamond_evals_mean
                if self.diamond_evals_mean else 0.0)

    def to_dict(self) -> dict:
        return {
            "matches": self.matches,
            "agreement_rate": self.agreement_rate,
            "full_evals_mean": self.full_evals_mean,
            "diamond_evals_mean": self.diamond_evals_mean,
            "eval_ratio": self.eval_ratio,
        }


def compare_strategies(
    events: np.ndarray,
    slice_cfg: SliceConfig,
    search_cfg: SearchConfig,
    stride: int = 16,
    max_matches: int | None = None,
) -> BenchResult:
    """Run both strategies at scale 0 on every stride-th warm event."""
    if events.dtype != EVENT_DTYPE:
        raise ValueError("expected an EVENT_DTYPE array")
    full_cfg = SearchConfig(search_cfg.block_dim, search_cfg.radius, FULL,
                            search_cfg.valid_pix_occupancy, search_cfg.max_allowed_sad)
    dia_cfg = SearchConfig(search_cfg.block_dim, search_cfg.radius, DIAMOND,
                           search_cfg.valid_pix_occupancy, search_cfg.max_allowed_sad)
    pyr = SlicePyramid(slice_cfg)
    bits = slice_cfg.counter_bits
    matches = agreements = 0
    full_evals = 0
    dia_evals = 0
    evaluated = 0
    for i, (t, x, y, p) in enumerate(
            zip(events["t"].tolist(), events["x"].tolist(),
                events["y"].tolist(), events["p"].tolist())):
        if pyr.should_rotate(t, x, y):
            pyr.rotate()
        pyr.accumulate(t, x, y, p)
        if i % stride or pyr.dt_or_none() is None:
            continue
        ref = pyr.scale_array(PREV, 0)
        cand = pyr.scale_array(PREV2, 0)
        fr = _search_pair(ref, cand, (x, y), full_cfg, bits)
        dr = _search_pair(ref, cand, (x, y), dia_cfg, bits)
        if fr.sad_evals or dr.sad_evals:
            evaluated += 1
            full_evals += fr.sad_evals
            dia_evals += dr.sad_evals
        if fr.valid:
            matches += 1
            if dr.valid and (dr.dx, dr.dy) == (fr.dx, fr.dy):
                agreements += 1
            if max_matches is not None and matches >= max_matches:
                break
    return BenchResult(
        matches=matches,
        agreements=agreements,
        full_evals_mean=full_evals / evaluated if evaluated else 0.0,
        diamond_evals_mean=dia_evals / evaluated if evaluated else 0.0,
    )
