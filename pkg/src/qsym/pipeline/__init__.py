"""Streaming runtime: bus, replay source, inference/analytics nodes, stitching, synthesis."""
from .bus import Bus, EndOfStream, Node
from .nodes import (
    BEST_OF_K,
    MEAN_OF_K,
    OBSERVED,
    PREDICTIONS,
    TRACKS,
    AnalyticsNode,
    InferenceNode,
    Windower,
    advertise_topics,
    replay,
    replay_steps,
    write_plot_data,
)
from .runner import SEQUENTIAL, THREADED, PipelineResult, run_pipeline
from .stitch import Merge, StitchConfig, stitch_tracks
from .synth import Scenario, SynthParams, synthesize

__all__ = [
    "AnalyticsNode", "BEST_OF_K", "Bus", "EndOfStream", "InferenceNode", "MEAN_OF_K", "Merge",
    "Node", "OBSERVED", "PREDICTIONS", "PipelineResult", "SEQUENTIAL", "Scenario",
    "StitchConfig", "SynthParams", "THREADED", "TRACKS", "Windower", "advertise_topics",
    "replay", "replay_steps", "run_pipeline", "stitch_tracks", "synthesize", "write_plot_data",
]
