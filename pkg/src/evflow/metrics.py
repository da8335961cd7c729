"""Flow-quality metrics against constant global ground truth.

Reported per run: event density (fraction of input events that produced
flow), global flow (componentwise mean +/- std of the velocity estimates),
average endpoint error (Euclidean distance between estimated and true
velocity), and average angular error (planar 2D angle between the vectors,
degrees). Standard deviations are population (ddof=0).

Zero vectors have no direction: the angular error is 0 deg when both
vectors are zero, 90 deg when exactly one is, and such cases are counted
separately in the report.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .events import FlowEvent
from .synth import GroundTruth


@dataclass(frozen=True)
class EvalReport:
    ed: float
    gf_mean: tuple[float, float]
    gf_std: tuple[float, float]
    aee_mean: float
    aee_std: float
    aae_mean: float
    aae_std: float
    n: int
    degenerate_angles: int  # samples where a zero vector forced the 0/90 rule

    def to_dict(self) -> dict:
        return {
            "ed": self.ed,
            "gf_vx": self.gf_mean[0], "gf_vy": self.gf_mean[1],
            "gf_vx_std": self.gf_std[0], "gf_vy_std": self.gf_std[1],
            "aee_pps": self.aee_mean, "aee_std": self.aee_std,
            "aae_deg": self.aae_mean, "aae_std": self.aae_std,
            "n": self.n, "degenerate_angles": self.degenerate_angles,
        }


def angular_errors_deg(vel: np.ndarray, truth: tuple[float, float]) -> tuple[np.ndarray, int]:
    """Per-sample planar angles between estimates and the truth vector."""
    gt = np.asarray(truth, dtype=np.float64)
    norms = np.hypot(vel[:, 0], vel[:, 1])
    gt_norm = float(np.hypot(gt[0], gt[1]))
    out = np.empty(len(vel))
    if gt_norm == 0.0:
        degenerate = len(vel)
        out[:] = np.where(norms == 0.0, 0.0, 90.0)
        return out, degenerate
    zero = norms == 0.0
    degenerate = int(zero.sum())
    safe = np.where(zero, 1.0, norms)
    cosang = (vel @ gt) / (safe * gt_norm)
    out = np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0)))
    out[zero] = 90.0
    return out, degenerate


def evaluate(
    flows: Sequence[FlowEvent],
    truth: GroundTruth | tuple[float, float],
    events_in: int,
) -> EvalReport:
    """Score a completed run. Empty flow sets yield ed=0 and NaN errors."""
    n = len(flows)
    ed = n / events_in if events_in else 0.0
    if n == 0:
        nan = float("nan")
        return EvalReport(ed, (nan, nan), (0.0, 0.0), nan, 0.0, nan, 0.0, 0, 0)
    vel = np.array([(f.vx, f.vy) for f in flows], dtype=np.float64)
    gt = (float(truth[0]), float(truth[1]))
    gf_mean = (float(vel[:, 0].mean()), float(vel[:, 1].mean()))
    gf_std = (float(vel[:, 0].std()), float(vel[:, 1].std()))
    ep = np.hypot(vel[:, 0] - gt[0], vel[:, 1] - gt[1])
    ang, degenerate = angular_errors_deg(vel, gt)
    return EvalReport(
        ed=ed,
        gf_mean=gf_mean,
        gf_std=gf_std,
        aee_mean=float(ep.mean()),
        aee_std=float(ep.std()),
        aae_mean=float(ang.mean()),
        aae_std=float(ang.std()),
        n=n,
        degenerate_angles=degenerate,
    )


def speedometer(mark_a: tuple[float, float, float],
                mark_b: tuple[float, float, float]) -> float:
    """Manual ground-truth speed from two (t_seconds, x, y) feature marks."""
    ta, xa, ya = mark_a
    tb, xb, yb = mark_b
    if tb <= ta:
        raise ValueError("second mark must be later than the first")
    return float(np.hypot(xb - xa, yb - ya) / (tb - ta))


def report_table(report: EvalReport, label: str = "run") -> str:
    """Aligned text table with the standard comparison columns."""
    header = f"{'method':<12}{'event density':>15}{'global flow (pps)':>34}{'AEE (pps)':>18}{'AAE (deg)':>16}"
    gf = (f"[{report.gf_mean[0]:.2f}, {report.gf_mean[1]:.2f}]"
          f"+/-[{report.gf_std[0]:.2f}, {report.gf_std[1]:.2f}]")
    row = (f"{label:<12}{report.ed * 100:>14.2f}%{gf:>34}"
           f"{report.aee_mean:>10.2f}+/-{report.aee_std:<6.2f}"
           f"{report.aae_mean:>8.2f}+/-{report.aae_std:<6.2f}")
    return header + "\n" + row
