from __future__ import annotations

import numpy as np
import pytest

from qsym.core import ObservationWindow, Recording, RecordingHeader, TrackSample
from qsym.predictor import PredictorConfig, PredictorModel

TINY = dict(
    obs_len=3, pred_len=2, encoder_hidden=4, decoder_hidden=4, embed_dim=3,
    pool_mlp_dim=5, noise_dim=2, k_train=3,
)


def tiny_config(**overrides) -> PredictorConfig:
    return PredictorConfig(**{**TINY, **overrides})


def random_window(rng: np.random.Generator, n_agents: int, length: int, window_id: int = 0) -> ObservationWindow:
    start = rng.uniform(-4, 4, size=(n_agents, 1, 2))
    steps = rng.normal(0.0, 0.4, size=(n_agents, length - 1, 2))
    pos = np.concatenate([start, start + np.cumsum(steps, axis=1)], axis=1)
    return ObservationWindow(tuple(range(1, n_agents + 1)), pos, 10.0, window_id)


def recording_from(rows, source: str = "test", rate_hz: float = 2.5) -> Recording:
    """Build a recording from ``(t, id, x, y)`` rows, sorted by time then id."""
    events = sorted((TrackSample(float(t), int(i), float(x), float(y)) for t, i, x, y in rows),
                    key=lambda e: (e.t, e.id))
    return Recording(RecordingHeader(source, rate_hz), tuple(events))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def default_model() -> PredictorModel:
    return PredictorModel.init(PredictorConfig(), seed=3)


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, title: str, ok: bool, detail: str) -> bool:
    ACCEPTANCE_LINES[number] = f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}: {detail}"
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
