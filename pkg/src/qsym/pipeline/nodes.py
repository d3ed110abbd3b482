"""Replay source, inference node and analytics node."""
from __future__ import annotations

import csv
import math
import time
from collections import defaultdict, deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from ..cnd import CndTable
from ..core import (
    GRID_TOL,
    ContractError,
    DataError,
    MetricsReport,
    ObservationWindow,
    Recording,
    RuntimeStats,
    TrackSample,
    ade,
    fde,
)
from ..predictor import PredictionBatch, PredictorModel, predict
from .bus import DEFAULT_QUEUE_SIZE, Bus, EndOfStream, Node

TRACKS = "tracks"
PREDICTIONS = "predictions"
OBSERVED = "observed"

BEST_OF_K = "best"
MEAN_OF_K = "mean"


def advertise_topics(bus: Bus) -> None:
    bus.advertise(TRACKS, TrackSample)
    bus.advertise(PREDICTIONS, PredictionBatch)
    bus.advertise(OBSERVED, ObservationWindow)


def replay_steps(
    recording: Recording,
    bus: Bus,
    speed: str = "max",
    topic: str = TRACKS,
    clock=time.monotonic,
    sleep=time.sleep,
) -> Iterator[TrackSample | EndOfStream]:
    """Publish the recording one event per iteration, ending with an end-of-stream marker."""
    if speed not in ("max", "realtime"):
        raise ContractError(f"unknown replay speed {speed!r}")
    events = recording.events
    for i in range(1, len(events)):
        if events[i].t < events[i - 1].t:
            raise DataError(f"recording timestamps decrease at event {i}")
    start = clock()
    t0 = events[0].t if events else 0.0
    for ev in events:
        if speed == "realtime":
            delay = (ev.t - t0) - (clock() - start)
            if delay > 0:
                sleep(delay)
        bus.publish(topic, ev)
        yield ev
    eos = EndOfStream(recording.header.source)
    bus.publish(topic, eos)
    yield eos


def replay(recording: Recording, bus: Bus, speed: str = "max", topic: str = TRACKS) -> None:
    for _ in replay_steps(recording, bus, speed, topic):
        pass


class Windower:
    """Turns a time-ordered sample stream into sliding observation windows.

    A grid step is closed when a sample from a later step (or ``flush``)
    arrives. At each closed step the active agents are those with a sample
    in it; a window is emitted when every active agent has ``length``
    consecutive on-grid samples. Gaps of up to ``gap_tolerance`` steps are
    bridged by linear interpolation; longer gaps reset the agent's buffer.
    """

    def __init__(self, rate_hz: float, length: int, gap_tolerance: int = 1) -> None:
        if length < 2 or gap_tolerance < 1:
            raise ContractError("window length must be >= 2 and gap_tolerance >= 1")
        self.rate_hz = rate_hz
        self.length = length
        self.gap_tolerance = gap_tolerance
        self.buffers: dict[int, deque] = {}
        self.pending: dict[int, tuple[float, float]] = {}
        self.step: int | None = None
        self.emitted = 0
        self.dropped = 0
        self.resets = 0

    def push(self, s: TrackSample) -> list[ObservationWindow]:
        scaled = s.t * self.rate_hz
        g = round(scaled)
        if abs(scaled - g) > GRID_TOL or (self.step is not None and g < self.step):
            self.dropped += 1
            return []
        out = []
        if self.step is not None and g > self.step:
            out = self._close()
        self.step = g
        if s.id in self.pending:
            self.dropped += 1
        else:
            self.pending[s.id] = (s.x, s.y)
        return out

    def flush(self) -> list[ObservationWindow]:
        return self._close() if self.step is not None else []

    def _close(self) -> list[ObservationWindow]:
        k = self.step
        for aid in sorted(self.pending):
            x, y = self.pending[aid]
            buf = self.buffers.get(aid)
            gap = k - buf[-1][0] if buf else None
            if buf is None or gap > self.gap_tolerance:
                if buf is not None:
                    self.resets += 1
                buf = self.buffers[aid] = deque(maxlen=self.length)
            elif gap > 1:
                g0, x0, y0 = buf[-1]
                for j in range(1, gap):
                    w = j / gap
                    buf.append((g0 + j, x0 + w * (x - x0), y0 + w * (y - y0)))
            buf.append((k, x, y))
        active = sorted(self.pending)
        self.pending = {}
        if not active or any(len(self.buffers[a]) < self.length for a in active):
            return []
        pos = np.array([[(x, y) for _, x, y in self.buffers[a]] for a in active])
        win = ObservationWindow(tuple(active), pos, k / self.rate_hz, self.emitted)
        self.emitted += 1
        return [win]


class InferenceNode(Node):
    """Two subscriptions to the track topic: one feeds the predictor, one the ground-truth feed."""

    name = "inference"

    def __init__(
        self,
        bus: Bus,
        model: PredictorModel,
        stream_rate_hz: float,
        *,
        k: int = 20,
        seed: int = 0,
        gap_tolerance: int = 1,
        cnd: CndTable | None = None,
        alpha_override: float | None = None,
        queue_size: int = DEFAULT_QUEUE_SIZE,
    ) -> None:
        super().__init__(bus, queue_size)
        cfg = model.config
        if not math.isclose(stream_rate_hz, cfg.rate_hz):
            raise ContractError(
                f"incoming stream is sampled at {stream_rate_hz} Hz but the model expects {cfg.rate_hz} Hz"
            )
        self.model = model
        self.k, self.seed = k, seed
        self.cnd, self.alpha_override = cnd, alpha_override
        self.windowers = {
            "predict": Windower(cfg.rate_hz, cfg.obs_len, gap_tolerance),
            "ground_truth": Windower(cfg.rate_hz, cfg.obs_len, gap_tolerance),
        }
        self.inference_seconds: list[float] = []
        self.subscribe(TRACKS, "predict")
        self.subscribe(TRACKS, "ground_truth")

    def handle(self, tag: str, msg: TrackSample) -> None:
        self._emit(tag, self.windowers[tag].push(msg))

    def on_eos(self, tag: str) -> None:
        self._emit(tag, self.windowers[tag].flush())

    def on_end(self) -> None:
        self.bus.publish(PREDICTIONS, EndOfStream(self.name))
        self.bus.publish(OBSERVED, EndOfStream(self.name))

    def _emit(self, tag: str, windows: list[ObservationWindow]) -> None:
        for w in windows:
            if tag == "ground_truth":
                self.bus.publish(OBSERVED, w)
                continue
            batch = predict(
                self.model, w, self.k, (self.seed, w.window_id), self.cnd, self.alpha_override
            )
            self.inference_seconds.append(batch.inference_seconds)
            self.bus.publish(PREDICTIONS, batch)


@dataclass(frozen=True)
class ScoredEntry:
    window_id: int
    agent_id: int
    ade: float
    fde: float
    gt: np.ndarray  # (T, 2)
    pred: np.ndarray  # (k, T, 2)


PLOT_COLUMNS = ("window_id", "agent_id", "step", "gt_x", "gt_y", "pred_x", "pred_y", "sample_index")


class AnalyticsNode(Node):
    """Aligns predictions with future ground truth and keeps displacement metrics."""

    name = "analytics"

    def __init__(
        self,
        bus: Bus,
        pred_len: int,
        rate_hz: float,
        *,
        scoring: str = BEST_OF_K,
        queue_size: int = DEFAULT_QUEUE_SIZE,
    ) -> None:
        super().__init__(bus, queue_size)
        if scoring not in (BEST_OF_K, MEAN_OF_K):
            raise ContractError(f"unknown scoring rule {scoring!r}")
        self.pred_len, self.rate_hz, self.scoring = pred_len, rate_hz, scoring
        self.gt: dict[int, dict[int, tuple[float, float]]] = defaultdict(dict)
        self.pending: dict[tuple[int, int], tuple[int, np.ndarray]] = {}
        self.pending_by_agent: dict[int, set[tuple[int, int]]] = defaultdict(set)
        self.scored: dict[tuple[int, int], ScoredEntry] = {}
        self.runtimes: dict[int, float] = {}
        self.running_ade = 0.0
        self.running_fde = 0.0
        self.report: MetricsReport | None = None
        self.subscribe(PREDICTIONS)
        self.subscribe(TRACKS)

    def handle(self, tag: str, msg) -> None:
        if tag == PREDICTIONS:
            self.runtimes[msg.window_id] = msg.inference_seconds
            k_last = round(msg.t_last * self.rate_hz)
            for i, aid in enumerate(msg.agent_ids):
                key = (msg.window_id, aid)
                self.pending[key] = (k_last, msg.trajectories[i])
                self.pending_by_agent[aid].add(key)
                self._try_score(key)
        else:
            scaled = msg.t * self.rate_hz
            g = round(scaled)
            if abs(scaled - g) > GRID_TOL:
                return
            self.gt[msg.id][g] = (msg.x, msg.y)
            for key in sorted(self.pending_by_agent.get(msg.id, ())):
                if self.pending[key][0] + self.pred_len <= g:
                    self._try_score(key)

    def _try_score(self, key: tuple[int, int]) -> None:
        k_last, traj = self.pending[key]
        track = self.gt.get(key[1], {})
        steps = range(k_last + 1, k_last + self.pred_len + 1)
        if not all(s in track for s in steps):
            return
        gt = np.array([track[s] for s in steps])
        ades = [ade(p, gt) for p in traj]
        fdes = [fde(p, gt) for p in traj]
        if self.scoring == BEST_OF_K:
            a, f = min(ades), min(fdes)
        else:
            a, f = math.fsum(ades) / len(ades), math.fsum(fdes) / len(fdes)
        del self.pending[key]
        self.pending_by_agent[key[1]].discard(key)
        self.scored[key] = ScoredEntry(key[0], key[1], a, f, gt, traj)
        n = len(self.scored)
        self.running_ade += (a - self.running_ade) / n
        self.running_fde += (f - self.running_fde) / n

    def on_end(self) -> None:
        self.report = self.build_report()

    def build_report(self, include_runtime: bool = True) -> MetricsReport:
        entries = [self.scored[k] for k in sorted(self.scored)]
        n = len(entries)
        runtime = (
            RuntimeStats.from_samples(self.runtimes[w] for w in sorted(self.runtimes))
            if include_runtime
            else RuntimeStats()
        )
        return MetricsReport(
            ade=math.fsum(e.ade for e in entries) / n if n else 0.0,
            fde=math.fsum(e.fde for e in entries) / n if n else 0.0,
            n_sequences=len({e.window_id for e in entries}),
            n_agents=len({e.agent_id for e in entries}),
            unscored=len(self.pending),
            runtime=runtime,
        )

    def plot_rows(self) -> list[tuple]:
        rows = []
        for key in sorted(self.scored):
            e = self.scored[key]
            for j, sample in enumerate(e.pred):
                for step in range(len(e.gt)):
                    rows.append((
                        e.window_id, e.agent_id, step + 1,
                        float(e.gt[step, 0]), float(e.gt[step, 1]),
                        float(sample[step, 0]), float(sample[step, 1]), j,
                    ))
        return rows


def write_plot_data(rows: list[tuple], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLOT_COLUMNS)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])
