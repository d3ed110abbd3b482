"""Synthetic two-scenario recordings: parallel walking and crossing paths."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from ..core import CANONICAL_RATE_HZ, ContractError, Recording, RecordingHeader, TrackSample


class Scenario(str, enum.Enum):
    ALL_FORWARD = "all-forward"
    CROSS_PATH = "cross-path"


@dataclass(frozen=True)
class SynthParams:
    n_agents: int = 2
    speed: float = 1.0
    noise_sd: float = 0.0
    duration: float = 60.0
    seed: int = 0
    rate_hz: float = CANONICAL_RATE_HZ
    # all-forward layout
    room_length: float = 8.2
    lane_spacing: float = 1.0
    # cross-path layout
    radius: float = 3.0
    clearance: float = 0.6

    def __post_init__(self) -> None:
        if self.n_agents < 1:
            raise ContractError("n_agents must be >= 1")
        for name in ("speed", "duration", "rate_hz", "room_length", "lane_spacing", "radius", "clearance"):
            if not getattr(self, name) > 0:
                raise ContractError(f"{name} must be positive")
        if not self.noise_sd >= 0:
            raise ContractError("noise_sd must be >= 0")


def _fold(s: np.ndarray, length: float) -> tuple[np.ndarray, np.ndarray]:
    """Back-and-forth position in [0, length] and the direction of travel (+1/-1)."""
    p = np.mod(s, 2 * length)
    forward = p <= length
    return np.where(forward, p, 2 * length - p), np.where(forward, 1.0, -1.0)


def _rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def _all_forward(p: SynthParams, t: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    rot = _rotation(rng.uniform(0.0, 2 * math.pi))
    start = rng.uniform(0.0, 0.5)
    along, _ = _fold(start + p.speed * t, p.room_length)
    pos = np.empty((p.n_agents, len(t), 2))
    for i in range(p.n_agents):
        lane = (i - (p.n_agents - 1) / 2) * p.lane_spacing
        pos[i] = np.column_stack([along, np.full_like(along, lane)]) @ rot.T
    return pos


def _avoid(pos: np.ndarray, vel: np.ndarray, clearance: float) -> np.ndarray:
    """Push each close pair apart perpendicular to its relative velocity.

    Along the relative-velocity axis the pair keeps its nominal separation
    ``s``; the perpendicular miss distance is raised to at least
    ``c * cos(pi * s / 4c)`` while ``|s| < 2c``, which is never below
    ``sqrt(c^2 - s^2)`` and keeps every pair at least ``c`` apart.
    """
    out = pos.copy()
    n = pos.shape[0]
    c = clearance
    for i in range(n):
        for j in range(i + 1, n):
            r = out[i] - out[j]
            w = vel[i] - vel[j]
            wn = np.linalg.norm(w, axis=1)
            moving = wn > 1e-12
            w_hat = np.zeros_like(w)
            w_hat[moving] = w[moving] / wn[moving, None]
            n_hat = np.column_stack([-w_hat[:, 1], w_hat[:, 0]])
            s = np.sum(r * w_hat, axis=1)
            perp = np.sum(r * n_hat, axis=1)
            near = moving & (np.abs(s) < 2 * c)
            floor = np.where(near, c * np.cos(np.pi * np.clip(s, -2 * c, 2 * c) / (4 * c)), 0.0)
            side = np.where(perp >= 0, 1.0, -1.0)
            shift = side * np.maximum(np.abs(perp), floor) - perp
            out[i] += 0.5 * shift[:, None] * n_hat
            out[j] -= 0.5 * shift[:, None] * n_hat
    return out


def _cross_path(p: SynthParams, t: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    theta0 = rng.uniform(0.0, 2 * math.pi)
    span = 2 * p.radius
    pos = np.empty((p.n_agents, len(t), 2))
    vel = np.empty_like(pos)
    for i in range(p.n_agents):
        phi = theta0 + i * math.pi / p.n_agents + rng.uniform(-math.pi / 8, math.pi / 8)
        a = p.radius * np.array([math.cos(phi), math.sin(phi)])
        u = (a * -2.0) / span  # unit direction from goal a to goal -a
        start = rng.uniform(0.0, 0.3 * span)
        along, direction = _fold(start + p.speed * t, span)
        pos[i] = a + along[:, None] * u
        vel[i] = (p.speed * direction)[:, None] * u
    return _avoid(pos, vel, p.clearance)


def synthesize(scenario: Scenario | str, params: SynthParams | None = None) -> Recording:
    """Deterministic (given ``params.seed``) recording of one motion scenario."""
    p = params or SynthParams()
    scenario = Scenario(scenario)
    n_steps = int(math.floor(p.duration * p.rate_hz + 1e-9)) + 1
    t = np.arange(n_steps) / p.rate_hz
    rng = np.random.default_rng(p.seed)
    if scenario is Scenario.ALL_FORWARD:
        pos = _all_forward(p, t, rng)
    else:
        pos = _cross_path(p, t, rng)
    if p.noise_sd > 0:
        pos = pos + rng.normal(0.0, p.noise_sd, size=pos.shape)
    events = [
        TrackSample(float(t[k]), i + 1, float(pos[i, k, 0]), float(pos[i, k, 1]))
        for k in range(n_steps)
        for i in range(p.n_agents)
    ]
    return Recording(RecordingHeader(f"synthetic:{scenario.value}", p.rate_hz), tuple(events))
