"""Shared domain types, resampling and displacement metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

# Tolerance (in grid steps) for deciding that a timestamp lies on a sampling grid.
GRID_TOL = 1e-6

CANONICAL_RATE_HZ = 2.5


class ContractError(ValueError):
    """An argument violates an operation's documented preconditions."""


class InsufficientDataError(ContractError):
    pass


class DataError(ValueError):
    """Malformed or inconsistent input data (files, recordings)."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TrackSample:
    t: float
    id: int
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.t) and math.isfinite(self.x) and math.isfinite(self.y)):
            raise ContractError(f"non-finite sample {self!r}")
        if self.t < 0:
            raise ContractError(f"negative timestamp {self.t}")
        if self.id < 0:
            raise ContractError(f"negative agent id {self.id}")


@dataclass(frozen=True, eq=False)
class Track:
    """Time-ordered positions of one agent, stored as arrays."""

    id: int
    t: np.ndarray
    xy: np.ndarray

    def __post_init__(self) -> None:
        t = np.array(self.t, dtype=np.float64).reshape(-1)
        xy = np.array(self.xy, dtype=np.float64).reshape(-1, 2)
        if len(t) != len(xy):
            raise ContractError("track times and positions differ in length")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(xy))):
            raise ContractError(f"track {self.id} has non-finite values")
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            raise ContractError(f"track {self.id} timestamps not strictly increasing")
        object.__setattr__(self, "t", _frozen(t))
        object.__setattr__(self, "xy", _frozen(xy))

    @classmethod
    def from_samples(cls, samples: Sequence[TrackSample]) -> Track:
        if not samples:
            raise InsufficientDataError("a track needs at least one sample")
        ids = {s.id for s in samples}
        if len(ids) != 1:
            raise ContractError(f"samples carry several ids: {sorted(ids)}")
        return cls(
            samples[0].id,
            np.array([s.t for s in samples]),
            np.array([[s.x, s.y] for s in samples]).reshape(-1, 2),
        )

    @property
    def samples(self) -> tuple[TrackSample, ...]:
        return tuple(
            TrackSample(float(t), self.id, float(p[0]), float(p[1]))
            for t, p in zip(self.t, self.xy)
        )

    def __len__(self) -> int:
        return len(self.t)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Track):
            return NotImplemented
        return (
            self.id == other.id
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.xy, other.xy)
        )


@dataclass(frozen=True)
class Scene:
    tracks: tuple[Track, ...]
    rate_hz: float = CANONICAL_RATE_HZ

    def __post_init__(self) -> None:
        if not self.rate_hz > 0:
            raise ContractError("rate_hz must be positive")
        object.__setattr__(self, "tracks", tuple(sorted(self.tracks, key=lambda tr: tr.id)))
        ids = [tr.id for tr in self.tracks]
        if len(set(ids)) != len(ids):
            raise ContractError("duplicate track ids in scene")
        for tr in self.tracks:
            if len(tr) and not on_grid(tr.t, self.rate_hz):
                raise ContractError(f"track {tr.id} is not on the {self.rate_hz} Hz grid")

    def track(self, agent_id: int) -> Track:
        for tr in self.tracks:
            if tr.id == agent_id:
                return tr
        raise KeyError(agent_id)


@dataclass(frozen=True)
class RecordingHeader:
    source: str
    rate_hz: float


@dataclass(frozen=True)
class Recording:
    """Timestamped stream of track samples, the rosbag analogue."""

    header: RecordingHeader
    events: tuple[TrackSample, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "events", tuple(self.events))
        for i in range(1, len(self.events)):
            if self.events[i].t < self.events[i - 1].t:
                raise DataError(
                    f"timestamps decrease at event {i}: "
                    f"{self.events[i].t} < {self.events[i - 1].t}"
                )

    def __iter__(self) -> Iterator[TrackSample]:
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    def ids(self) -> list[int]:
        return sorted({e.id for e in self.events})


@dataclass(frozen=True, eq=False)
class ObservationWindow:
    """W consecutive on-grid positions for each agent present."""

    agent_ids: tuple[int, ...]
    positions: np.ndarray  # (n_agents, W, 2)
    t_last: float
    window_id: int = 0

    def __post_init__(self) -> None:
        pos = np.array(self.positions, dtype=np.float64)
        if pos.ndim != 3 or pos.shape[2] != 2 or pos.shape[0] != len(self.agent_ids):
            raise ContractError(
                f"window positions must be (n_agents, W, 2), got {pos.shape}"
            )
        if pos.shape[0] < 1 or pos.shape[1] < 2:
            raise ContractError("window needs at least one agent and two steps")
        if len(set(self.agent_ids)) != len(self.agent_ids):
            raise ContractError("duplicate agent ids in window")
        if not np.all(np.isfinite(pos)):
            raise ContractError("non-finite window positions")
        object.__setattr__(self, "agent_ids", tuple(int(a) for a in self.agent_ids))
        object.__setattr__(self, "positions", _frozen(pos))

    @property
    def length(self) -> int:
        return self.positions.shape[1]

    def translated(self, offset: Sequence[float]) -> ObservationWindow:
        return ObservationWindow(
            self.agent_ids, self.positions + np.asarray(offset, float), self.t_last, self.window_id
        )


@dataclass(frozen=True)
class RuntimeStats:
    mean_s: float | None = None
    max_s: float | None = None

    @classmethod
    def from_samples(cls, seconds: Iterable[float]) -> RuntimeStats:
        s = list(seconds)
        if not s:
            return cls(0.0, 0.0)
        return cls(math.fsum(s) / len(s), max(s))


@dataclass(frozen=True)
class MetricsReport:
    ade: float
    fde: float
    n_sequences: int
    n_agents: int
    unscored: int = 0
    runtime: RuntimeStats = field(default_factory=RuntimeStats)

    def __post_init__(self) -> None:
        if self.ade < 0 or self.fde < 0 or self.n_sequences < 0:
            raise ContractError("metrics must be non-negative")

    def to_dict(self) -> dict:
        return {
            "ade": self.ade,
            "fde": self.fde,
            "n_sequences": self.n_sequences,
            "n_agents": self.n_agents,
            "unscored": self.unscored,
            "runtime": {"mean_s": self.runtime.mean_s, "max_s": self.runtime.max_s},
        }


def grid_index(t: float | np.ndarray, rate_hz: float):
    return np.rint(np.asarray(t) * rate_hz).astype(np.int64)


def on_grid(t: float | np.ndarray, rate_hz: float) -> bool:
    scaled = np.asarray(t, dtype=np.float64) * rate_hz
    return bool(np.all(np.abs(scaled - np.rint(scaled)) <= GRID_TOL))


def resample_track(track: Track, rate_hz: float, origin: float | None = None) -> Track:
    """Linearly interpolate ``track`` onto a uniform grid ``origin + n / rate_hz``.

    ``origin`` defaults to the first sample time. Grid points outside the
    track's time span are dropped, so nothing is extrapolated.
    """
    if not rate_hz > 0:
        raise ContractError("rate_hz must be positive")
    if len(track) < 2:
        raise InsufficientDataError(f"track {track.id} has {len(track)} sample(s); need 2")
    t0, t1 = float(track.t[0]), float(track.t[-1])
    if origin is None:
        origin = t0
    n_lo = math.ceil((t0 - origin) * rate_hz - GRID_TOL)
    n_hi = math.floor((t1 - origin) * rate_hz + GRID_TOL)
    n = np.arange(n_lo, n_hi + 1)
    grid = origin + n / rate_hz
    # snap endpoints that sit within tolerance outside the span
    grid = np.clip(grid, t0, t1)
    x = np.interp(grid, track.t, track.xy[:, 0])
    y = np.interp(grid, track.t, track.xy[:, 1])
    return Track(track.id, grid, np.column_stack([x, y]))


def _paired(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64).reshape(-1, 2)
    g = np.asarray(gt, dtype=np.float64).reshape(-1, 2)
    if len(p) != len(g):
        raise ContractError(f"length mismatch: pred {len(p)} vs gt {len(g)}")
    if len(p) == 0:
        raise ContractError("ADE/FDE need at least one step")
    return p, g


def ade(pred, gt) -> float:
    """Mean Euclidean distance between matching steps."""
    p, g = _paired(pred, gt)
    return float(np.mean(np.hypot(p[:, 0] - g[:, 0], p[:, 1] - g[:, 1])))


def fde(pred, gt) -> float:
    """Euclidean distance between the final steps."""
    p, g = _paired(pred, gt)
    return float(math.hypot(p[-1, 0] - g[-1, 0], p[-1, 1] - g[-1, 1]))


def scene_windows(scene: Scene, length: int, stride: int = 1) -> list[ObservationWindow]:
    """Sliding windows of ``length`` consecutive grid steps.

    Each window holds every agent with a sample at all of its steps; windows
    with no such agent are skipped.
    """
    if length < 2:
        raise ContractError("window length must be at least 2")
    rate = scene.rate_hz
    per_agent: dict[int, dict[int, np.ndarray]] = {}
    lo, hi = None, None
    for tr in scene.tracks:
        if not len(tr):
            continue
        g = grid_index(tr.t, rate)
        per_agent[tr.id] = {int(k): tr.xy[i] for i, k in enumerate(g)}
        lo = int(g[0]) if lo is None else min(lo, int(g[0]))
        hi = int(g[-1]) if hi is None else max(hi, int(g[-1]))
    windows: list[ObservationWindow] = []
    if lo is None:
        return windows
    for start in range(lo, hi - length + 2, stride):
        steps = range(start, start + length)
        ids = [a for a, pts in per_agent.items() if all(s in pts for s in steps)]
        if not ids:
            continue
        pos = np.array([[per_agent[a][s] for s in steps] for a in ids])
        windows.append(
            ObservationWindow(tuple(ids), pos, (start + length - 1) / rate, len(windows))
        )
    return windows
