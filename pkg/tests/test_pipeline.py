import queue
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import recording_from
from qsym.core import ContractError, DataError, ObservationWindow, Recording, RecordingHeader, TrackSample
from qsym.data import read_recording, sample_path
from qsym.predictor import PredictionBatch, PredictorConfig, PredictorModel
from qsym.pipeline import (
    MEAN_OF_K,
    OBSERVED,
    PREDICTIONS,
    SEQUENTIAL,
    THREADED,
    TRACKS,
    AnalyticsNode,
    Bus,
    EndOfStream,
    InferenceNode,
    Node,
    Scenario,
    SynthParams,
    Windower,
    advertise_topics,
    replay,
    replay_steps,
    run_pipeline,
    synthesize,
    write_plot_data,
)


class Collector(Node):
    name = "collector"

    def __init__(self, bus, *topics):
        super().__init__(bus, queue_size=0)
        self.got = []
        for t in topics:
            self.subscribe(t)

    def handle(self, tag, msg):
        self.got.append((tag, msg))

    def drain(self):
        while self.step():
            pass
        return self.got


def walk(agent, steps, start=0, x0=0.0, y=0.0, v=0.4):
    return [((start + k) / 2.5, agent, x0 + v * k, y) for k in range(steps)]


def feed(windower, rows):
    out = []
    for e in recording_from(rows).events:
        out += windower.push(e)
    return out + windower.flush()


# bus ---------------------------------------------------------------------


def test_bus_type_checks():
    bus = Bus()
    bus.advertise("a", int)
    bus.advertise("a", int)
    with pytest.raises(TypeError):
        bus.advertise("a", str)
    with pytest.raises(TypeError):
        bus.publish("a", "text")
    with pytest.raises(KeyError):
        bus.publish("missing", 1)
    bus.publish("a", EndOfStream())


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 1000)), max_size=60), st.integers(1, 4))
def test_fifo_per_subscriber_under_concurrent_publishers(schedule, n_subs):
    bus = Bus()
    bus.advertise("t", tuple)
    inboxes = [queue.Queue() for _ in range(n_subs)]
    for i, q in enumerate(inboxes):
        bus.subscribe("t", q, f"s{i}")
    per_pub = {p: [(p, seq, v) for seq, (pp, v) in enumerate(schedule) if pp == p] for p in range(4)}

    def publisher(msgs):
        for m in msgs:
            bus.publish("t", m)

    threads = [threading.Thread(target=publisher, args=(m,)) for m in per_pub.values()]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    views = [[q.get_nowait()[1] for _ in range(q.qsize())] for q in inboxes]
    # all subscribers see one common order, and each publisher's messages stay in order
    assert all(v == views[0] for v in views)
    assert sorted(views[0], key=lambda m: m[1]) == [(p, s, v) for s, (p, v) in enumerate(schedule)]
    for p, msgs in per_pub.items():
        assert [m for m in views[0] if m[0] == p] == msgs


def test_bounded_inbox_applies_backpressure():
    bus = Bus()
    bus.advertise("t", int)
    q = queue.Queue(maxsize=1)
    bus.subscribe("t", q, "x")
    bus.publish("t", 1)
    done = threading.Event()

    def publish():
        bus.publish("t", 2)
        done.set()

    th = threading.Thread(target=publish)
    th.start()
    assert not done.wait(0.1)
    assert q.get() == ("x", 1)
    assert done.wait(2)
    th.join()


# replay ------------------------------------------------------------------


def test_replay_empty_recording():
    bus = Bus()
    advertise_topics(bus)
    c = Collector(bus, TRACKS)
    replay(Recording(RecordingHeader("e", 2.5)), bus)
    assert c.drain() == []
    assert c.done


def test_replay_ten_event_sample():
    rec = read_recording(sample_path("ten_events.jsonl"))
    bus = Bus()
    advertise_topics(bus)
    c = Collector(bus, TRACKS)
    replay(rec, bus)
    got = [m for _, m in c.drain()]
    assert len(got) == 10 and all(isinstance(m, TrackSample) for m in got)
    assert got == list(rec.events)


def test_replay_realtime_paces_by_timestamps():
    rec = recording_from([(0.0, 1, 0, 0), (0.4, 1, 1, 0), (1.2, 1, 2, 0)])
    now = [0.0]
    sleeps = []

    def sleep(d):
        sleeps.append(d)
        now[0] += d

    bus = Bus()
    advertise_topics(bus)
    list(replay_steps(rec, bus, "realtime", clock=lambda: now[0], sleep=sleep))
    assert sleeps == pytest.approx([0.4, 0.8])


def test_replay_rejects_decreasing_timestamps():
    rec = object.__new__(Recording)
    object.__setattr__(rec, "header", RecordingHeader("x", 2.5))
    object.__setattr__(rec, "events", (TrackSample(1.0, 1, 0, 0), TrackSample(0.0, 1, 0, 0)))
    bus = Bus()
    advertise_topics(bus)
    with pytest.raises(DataError):
        replay(rec, bus)
    with pytest.raises(DataError):
        Recording(RecordingHeader("x", 2.5), rec.events)


# windower ----------------------------------------------------------------


def test_exactly_w_samples_give_one_window():
    wins = feed(Windower(2.5, 8), walk(1, 8))
    assert len(wins) == 1
    assert wins[0].t_last == pytest.approx(7 / 2.5)
    np.testing.assert_allclose(wins[0].positions[0, :, 0], 0.4 * np.arange(8))


def test_window_closes_when_next_step_arrives():
    w = Windower(2.5, 3)
    events = recording_from(walk(1, 4)).events
    assert [len(w.push(e)) for e in events] == [0, 0, 0, 1]


def test_gap_beyond_tolerance_resets_buffer():
    rows = walk(1, 5) + walk(1, 8, start=8, x0=10.0)
    w = Windower(2.5, 8, gap_tolerance=1)
    wins = feed(w, rows)
    assert w.resets == 1
    assert len(wins) == 1
    assert wins[0].t_last == pytest.approx(15 / 2.5)


def test_gap_within_tolerance_is_interpolated():
    rows = walk(1, 5) + walk(1, 3, start=6, x0=2.4)
    wins = feed(Windower(2.5, 8, gap_tolerance=2), rows)
    # steps 0-4 and 6-8 with step 5 filled in: nine steps, two windows
    assert len(wins) == 2
    np.testing.assert_allclose(wins[0].positions[0, :, 0], 0.4 * np.arange(8))
    np.testing.assert_allclose(wins[1].positions[0, :, 0], 0.4 * np.arange(1, 9))


def test_two_agent_stream_of_w_plus_5_gives_6_windows():
    rec = synthesize(Scenario.ALL_FORWARD, SynthParams(n_agents=2, duration=12 / 2.5, seed=2))
    assert len(rec.events) == 2 * 13
    w = Windower(2.5, 8)
    wins = [x for e in rec.events for x in w.push(e)] + w.flush()
    assert len(wins) == 6
    assert [x.window_id for x in wins] == list(range(6))
    assert all(x.agent_ids == (1, 2) for x in wins)


def test_off_grid_and_late_samples_dropped():
    rows = walk(1, 8) + [(0.5, 1, 9.0, 9.0)]
    w = Windower(2.5, 8)
    events = sorted((TrackSample(*r[:1], r[1], *r[2:]) for r in rows), key=lambda e: e.t)
    wins = [x for e in events for x in w.push(e)] + w.flush()
    assert w.dropped == 1 and len(wins) == 1
    assert 9.0 not in wins[0].positions


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 3), st.integers(0, 30)), max_size=80))
def test_windows_never_contain_off_grid_or_gap_samples(points):
    rows = sorted({(k, a) for a, k in points})
    rec = recording_from([(k / 2.5, a, float(k), float(a)) for k, a in rows])
    w = Windower(2.5, 4, gap_tolerance=1)
    present = {(a, k) for k, a in rows}
    for win in [x for e in rec.events for x in w.push(e)] + w.flush():
        k_last = round(win.t_last * 2.5)
        for aid, pos in zip(win.agent_ids, win.positions):
            for j, k in enumerate(range(k_last - 3, k_last + 1)):
                assert (aid, k) in present
                np.testing.assert_array_equal(pos[j], [k, aid])


# inference and analytics ---------------------------------------------------


def small_model(**kw):
    return PredictorModel.init(PredictorConfig(obs_len=4, pred_len=3, **kw), seed=0)


def test_inference_node_publishes_batches_and_windows():
    bus = Bus()
    advertise_topics(bus)
    node = InferenceNode(bus, small_model(), 2.5, k=2, queue_size=0)
    c = Collector(bus, PREDICTIONS, OBSERVED)
    replay(recording_from(walk(1, 6) + walk(2, 6, y=1.0)), bus)
    while node.step():
        pass
    got = c.drain()
    preds = [m for t, m in got if t == PREDICTIONS]
    obs = [m for t, m in got if t == OBSERVED]
    assert len(preds) == len(obs) == 3
    assert all(isinstance(p, PredictionBatch) and p.trajectories.shape == (2, 2, 3, 2) for p in preds)
    assert all(isinstance(o, ObservationWindow) for o in obs)
    assert c.done and node.done


def test_inference_rate_mismatch():
    with pytest.raises(ContractError, match="Hz"):
        InferenceNode(Bus(), small_model(), 10.0)


def analytics_with(pred_len=3):
    bus = Bus()
    advertise_topics(bus)
    return bus, AnalyticsNode(bus, pred_len, 2.5, queue_size=0)


def gt_rows(agent, n, dx=0.0):
    return [TrackSample(k / 2.5, agent, float(k) + dx, 0.0) for k in range(n)]


def test_analytics_perfect_prediction():
    bus, node = analytics_with()
    future = np.array([[k, 0.0] for k in range(4, 7)], float)
    bus.publish(PREDICTIONS, PredictionBatch(0, 3 / 2.5, (1,), future[None, None], 0.01, "baseline"))
    for s in gt_rows(1, 8):
        bus.publish(TRACKS, s)
    bus.publish(PREDICTIONS, EndOfStream())
    bus.publish(TRACKS, EndOfStream())
    while node.step():
        pass
    r = node.report
    assert (r.ade, r.fde, r.n_sequences, r.n_agents, r.unscored) == (0.0, 0.0, 1, 1, 0)
    assert r.runtime.mean_s == 0.01


def test_analytics_constant_offset():
    bus, node = analytics_with()
    future = np.array([[k + 0.3, 0.4] for k in range(4, 7)], float)
    for s in gt_rows(1, 8):
        bus.publish(TRACKS, s)
    bus.publish(PREDICTIONS, PredictionBatch(0, 3 / 2.5, (1,), future[None, None], 0.0, "baseline"))
    while node.step():
        pass
    assert node.running_ade == pytest.approx(0.5) and node.running_fde == pytest.approx(0.5)
    rows = node.plot_rows()
    assert len(rows) == 3 and rows[0] == (0, 1, 1, 4.0, 0.0, 4.3, 0.4, 0)


def test_analytics_best_and_mean_of_k():
    for scoring, expected in (("best", 0.5), (MEAN_OF_K, 1.0)):
        bus = Bus()
        advertise_topics(bus)
        node = AnalyticsNode(bus, 3, 2.5, scoring=scoring, queue_size=0)
        base = np.array([[k, 0.0] for k in range(4, 7)], float)
        traj = np.stack([base + [0.5, 0], base + [1.5, 0]])[None]
        bus.publish(PREDICTIONS, PredictionBatch(0, 3 / 2.5, (1,), traj, 0.0, "baseline"))
        for s in gt_rows(1, 7):
            bus.publish(TRACKS, s)
        while node.step():
            pass
        assert node.build_report().ade == pytest.approx(expected)


def test_analytics_counts_unscored():
    bus, node = analytics_with()
    traj = np.zeros((2, 1, 3, 2))
    bus.publish(PREDICTIONS, PredictionBatch(0, 3 / 2.5, (1, 2), traj, 0.0, "baseline"))
    for s in gt_rows(1, 7) + gt_rows(2, 5):
        bus.publish(TRACKS, s)
    while node.step():
        pass
    r = node.build_report()
    assert r.unscored == 1 and r.n_agents == 1


def test_plot_data_file(tmp_path):
    path = tmp_path / "p.csv"
    write_plot_data([(0, 1, 1, 0.1, 0.2, 0.3, 0.4, 0)], path)
    assert path.read_text().splitlines() == [
        "window_id,agent_id,step,gt_x,gt_y,pred_x,pred_y,sample_index",
        "0,1,1,0.1,0.2,0.3,0.4,0",
    ]


# end to end ----------------------------------------------------------------


def test_full_replay_counts():
    rec = synthesize("all-forward", SynthParams(n_agents=2, duration=24 / 2.5, seed=1))
    res = run_pipeline(rec, small_model(), k=3, include_runtime=False)
    # 25 steps: windows end at steps 3..24, each needs 3 future steps
    assert res.n_batches == 22
    assert res.report.n_sequences == 19
    assert res.report.unscored == 2 * 3
    assert len(res.plot_rows) == 19 * 2 * 3 * 3


@pytest.mark.parametrize("scheduler", [SEQUENTIAL, THREADED])
def test_replay_determinism(scheduler):
    rec = read_recording(sample_path("all_forward.jsonl"))
    model = small_model(mode="neurosym")
    ref = run_pipeline(rec, model, k=4, seed=3, include_runtime=False)
    again = run_pipeline(rec, model, k=4, seed=3, scheduler=scheduler, queue_size=2, include_runtime=False)
    assert again.report == ref.report
    assert again.plot_rows == ref.plot_rows


def test_runtime_stats_reported_when_requested():
    rec = read_recording(sample_path("all_forward.jsonl"))
    r = run_pipeline(rec, small_model(), k=2).report
    assert r.runtime.mean_s > 0 and r.runtime.max_s >= r.runtime.mean_s


def test_threaded_failure_propagates():
    rec = read_recording(sample_path("all_forward.jsonl"))
    model = PredictorModel.init(PredictorConfig(obs_len=4, pred_len=3, rate_hz=5.0))
    with pytest.raises(ContractError):
        run_pipeline(rec, model, scheduler=THREADED)
