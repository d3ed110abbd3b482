"""Per-window inference latency for both pooling modes on one parameter set."""
from __future__ import annotations

import statistics
import time

import numpy as np

from .core import ObservationWindow
from .data import recording_to_scene
from .pipeline.synth import Scenario, SynthParams, synthesize
from .predictor import Mode, PredictorModel, predict


def bench_window(model: PredictorModel, n_agents: int, seed: int = 0) -> ObservationWindow:
    cfg = model.config
    rec = synthesize(
        Scenario.CROSS_PATH,
        SynthParams(n_agents=n_agents, duration=(cfg.obs_len - 1) / cfg.rate_hz,
                    seed=seed, rate_hz=cfg.rate_hz, noise_sd=0.02),
    )
    scene = recording_to_scene(rec)
    ids = tuple(tr.id for tr in scene.tracks)
    pos = np.stack([tr.xy[: cfg.obs_len] for tr in scene.tracks])
    return ObservationWindow(ids, pos, float(scene.tracks[0].t[cfg.obs_len - 1]))


def benchmark(
    model: PredictorModel, n_agents: int = 2, k: int = 20, repeats: int = 50, seed: int = 0, warmup: int = 3
) -> dict:
    """Wall-clock statistics of ``predict`` for baseline and neuro-symbolic pooling."""
    window = bench_window(model, n_agents, seed)
    out = {"agents": n_agents, "k": k, "repeats": repeats,
           "obs_len": model.config.obs_len, "pred_len": model.config.pred_len}
    for mode in Mode:
        m = model.with_mode(mode)
        for i in range(warmup):
            predict(m, window, k, (seed, i))
        times = []
        for i in range(repeats):
            start = time.perf_counter()
            predict(m, window, k, (seed, i))
            times.append(time.perf_counter() - start)
        out[mode.value] = {
            "mean_s": statistics.fmean(times),
            "median_s": statistics.median(times),
            "max_s": max(times),
        }
    out["overhead_ratio"] = out["neurosym"]["median_s"] / out["baseline"]["median_s"]
    return out
