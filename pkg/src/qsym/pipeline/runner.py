"""Wire source, inference and analytics nodes together and run them."""
from __future__ import annotations

import threading
from dataclasses import dataclass

from ..cnd import CndTable
from ..core import MetricsReport, Recording
from ..predictor import PredictorModel
from .bus import DEFAULT_QUEUE_SIZE, Bus
from .nodes import BEST_OF_K, AnalyticsNode, InferenceNode, advertise_topics, replay_steps

SEQUENTIAL = "sequential"
THREADED = "threaded"


@dataclass
class PipelineResult:
    report: MetricsReport
    plot_rows: list[tuple]
    n_batches: int
    dropped_samples: int


def run_pipeline(
    recording: Recording,
    model: PredictorModel,
    *,
    k: int = 20,
    seed: int = 0,
    scheduler: str = SEQUENTIAL,
    speed: str = "max",
    gap_tolerance: int = 1,
    scoring: str = BEST_OF_K,
    include_runtime: bool = True,
    cnd: CndTable | None = None,
    queue_size: int = DEFAULT_QUEUE_SIZE,
) -> PipelineResult:
    """Replay ``recording`` through inference and analytics and collect the results.

    ``sequential`` runs every node on the calling thread with a round-robin
    drain after each published event; ``threaded`` gives each node its own
    thread with bounded inboxes.
    """
    if scheduler not in (SEQUENTIAL, THREADED):
        raise ValueError(f"unknown scheduler {scheduler!r}")
    bus = Bus()
    advertise_topics(bus)
    # the round-robin scheduler drains between publishes, so inboxes are unbounded there
    qsize = queue_size if scheduler == THREADED else 0
    inference = InferenceNode(
        bus, model, recording.header.rate_hz, k=k, seed=seed,
        gap_tolerance=gap_tolerance, cnd=cnd, queue_size=qsize,
    )
    analytics = AnalyticsNode(
        bus, model.config.pred_len, model.config.rate_hz, scoring=scoring, queue_size=qsize
    )
    nodes = [inference, analytics]

    if scheduler == SEQUENTIAL:
        for _ in replay_steps(recording, bus, speed):
            progress = True
            while progress:
                progress = False
                for node in nodes:
                    while node.step():
                        progress = True
    else:
        errors: list[BaseException] = []

        def guarded(target, inbox=None):
            try:
                target()
            except BaseException as exc:
                errors.append(exc)
                # keep consuming so upstream publishers never block on a dead node
                while inbox is not None:
                    inbox.get()

        def source():
            for _ in replay_steps(recording, bus, speed):
                pass

        threads = [
            threading.Thread(target=guarded, args=(n.run, n.inbox), name=n.name, daemon=True)
            for n in nodes
        ]
        threads.append(threading.Thread(target=guarded, args=(source,), name="source", daemon=True))
        for t in threads:
            t.start()
        while any(t.is_alive() for t in threads) and not errors:
            for t in threads:
                t.join(timeout=0.05)
        if errors:
            raise errors[0]

    report = analytics.build_report(include_runtime)
    return PipelineResult(
        report=report,
        plot_rows=analytics.plot_rows(),
        n_batches=len(inference.inference_seconds),
        dropped_samples=sum(w.dropped for w in inference.windowers.values()),
    )
