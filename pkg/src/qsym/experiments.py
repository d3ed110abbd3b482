"""Fixed synthetic protocols for training and comparing the two pooling modes."""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import recording_to_scene
from .pipeline.synth import Scenario, SynthParams, synthesize
from .predictor import Mode, PredictorConfig, PredictorModel, evaluate, train, training_windows


@dataclass(frozen=True)
class OverfitProtocol:
    """Many short AllForward walks with varied speeds, scored on the training set."""

    n_sequences: int = 50
    steps: int = 20  # obs_len + pred_len: one window per sequence
    room_length: float = 30.0
    epochs: int = 600
    lr: float = 3e-3
    batch_size: int = 16
    seed: int = 0


def overfit_scenes(p: OverfitProtocol, cfg: PredictorConfig):
    scenes = []
    for s in range(p.n_sequences):
        speed = 0.8 + 0.6 * np.random.default_rng(1000 + s).random()
        params = SynthParams(
            n_agents=2, speed=speed, duration=(p.steps - 1) / cfg.rate_hz,
            seed=s, rate_hz=cfg.rate_hz, room_length=p.room_length,
        )
        scenes.append(recording_to_scene(synthesize(Scenario.ALL_FORWARD, params)))
    return scenes


def run_overfit(mode: Mode | str, p: OverfitProtocol = OverfitProtocol()) -> dict:
    """Train one model and report its best-of-k_train ADE/FDE on the training windows."""
    cfg = PredictorConfig(mode=Mode(mode), seed=p.seed)
    windows = training_windows(overfit_scenes(p, cfg), cfg)
    start = time.perf_counter()
    result = train(PredictorModel.init(cfg), [], p.epochs, p.lr, batch_size=p.batch_size, windows=windows)
    seconds = time.perf_counter() - start
    ade, fde = evaluate(result.model, k=cfg.k_train, seed=0, windows=windows)
    return {"mode": cfg.mode.value, "windows": len(windows), "train_seconds": seconds,
            "final_loss": result.losses[-1], "ade": ade, "fde": fde}


@dataclass(frozen=True)
class CrossPathProtocol:
    """Train on CrossPath episodes, score best-of-k on disjoint held-out episodes."""

    n_train: int = 30
    train_duration: float = 16.0
    n_test: int = 200
    test_seed_offset: int = 10_000
    noise_sd: float = 0.0
    epochs: int = 60
    lr: float = 3e-3
    batch_size: int = 32
    k: int = 20
    training_seeds: tuple[int, ...] = field(default=(0, 1, 2, 3, 4))


def crosspath_scenes(p: CrossPathProtocol, cfg: PredictorConfig):
    def scene(seed: int, duration: float):
        params = SynthParams(n_agents=2, noise_sd=p.noise_sd, duration=duration, seed=seed, rate_hz=cfg.rate_hz)
        return recording_to_scene(synthesize(Scenario.CROSS_PATH, params))

    test_duration = (cfg.obs_len + cfg.pred_len - 1) / cfg.rate_hz
    train_scenes = [scene(s, p.train_duration) for s in range(p.n_train)]
    test_scenes = [scene(p.test_seed_offset + s, test_duration) for s in range(p.n_test)]
    return train_scenes, test_scenes


def run_crosspath(p: CrossPathProtocol = CrossPathProtocol()) -> dict:
    """Per-seed and mean held-out ADE/FDE for both modes."""
    table: dict = {"protocol": {**asdict(p), "training_seeds": list(p.training_seeds)}}
    for mode in (Mode.BASELINE, Mode.NEUROSYM):
        cfg = PredictorConfig(mode=mode)
        train_scenes, test_scenes = crosspath_scenes(p, cfg)
        tw, ew = training_windows(train_scenes, cfg), training_windows(test_scenes, cfg)
        runs = []
        for seed in p.training_seeds:
            model = PredictorModel.init(cfg, seed=seed)
            result = train(model, [], p.epochs, p.lr, batch_size=p.batch_size, seed=seed, windows=tw)
            ade, fde = evaluate(result.model, k=p.k, seed=0, windows=ew)
            runs.append({"seed": seed, "ade": ade, "fde": fde, "final_loss": result.losses[-1]})
        table[mode.value] = {
            "runs": runs,
            "test_windows": len(ew),
            "mean_ade": math.fsum(r["ade"] for r in runs) / len(runs),
            "mean_fde": math.fsum(r["fde"] for r in runs) / len(runs),
        }
    return table
