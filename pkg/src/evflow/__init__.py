"""Event-camera optical flow by adaptive-slice block matching.

Brightness-change events accumulate into a three-deep ring of multi-scale
time slices; per event, a SAD block search between the two past slices
yields a displacement that converts to velocity. Slice rotation is driven by
duration, global event count, or per-area event count, with bang-bang
feedback holding the mean match distance at half the search radius.
"""

from .events import (DAVIS346, EVENT_DTYPE, Event, FlowEvent, SensorGeometry,
                     StreamError, read_events, read_flow, read_truth,
                     write_events, write_flow, write_truth)
from .synth import Bar, Grid, GroundTruth, RandomDots, SceneSpec, generate
from .slices import (AreaEventNumber, ConstantDuration, ConstantEventNumber,
                     CURRENT, PREV, PREV2, RotationPolicy, SliceConfig,
                     SlicePyramid, UndefinedDeltaT)
from .search import (DIAMOND, FULL, MatchResult, SearchConfig, block_sad,
                     diamond_search, full_search, match_multiscale, to_flow)
from .control import (ControllerState, OFHistogram, SkipState,
                      adapt_parameter, should_skip, update_skip)
from .engine import Engine, PipelineConfig, RunStats, process_stream, write_trace
from .metrics import EvalReport, evaluate, report_table, speedometer
from .bench import BenchResult, compare_strategies
from .viz import render_flow, render_slice, write_pgm, write_ppm

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
