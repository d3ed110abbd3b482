"""Command-line entry point.

Machine-readable results (CSV/JSON) go to stdout or to the files named by
flags; human-readable summaries go to stderr. Exit codes: 0 success, 1 usage
error, 2 data error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .bench import benchmark
from .cnd import build_cnd
from .core import ContractError, DataError
from .data import load_scenes, read_recording, recording_to_scene, write_recording
from .experiments import CrossPathProtocol, run_crosspath
from .pipeline import (
    BEST_OF_K,
    MEAN_OF_K,
    SEQUENTIAL,
    THREADED,
    Scenario,
    StitchConfig,
    SynthParams,
    run_pipeline,
    stitch_tracks,
    synthesize,
    write_plot_data,
)
from .predictor import Mode, ModelFormatError, PredictorConfig, PredictorModel, load_model, save_model, train
from .qtc import DEFAULT_EPS, qtc_timeline

log = logging.getLogger("qsym")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def default_seed() -> int:
    raw = os.environ.get("QSYM_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"QSYM_SEED must be an integer, got {raw!r}") from None


def _positive(kind):
    def parse(text: str):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a valid {kind.__name__}: {text!r}") from None
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
        return v

    return parse


def _non_negative_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0: {text!r}")
    return v


def _pair(text: str) -> tuple[int, int]:
    sep = "," if "," in text else ":"
    try:
        a, b = (int(p) for p in text.split(sep))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two integer ids like 1{sep}2, got {text!r}") from None
    return a, b


def _json_out(obj, path: str | None) -> None:
    text = json.dumps(obj, indent=2) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- commands


def cmd_qtc(args) -> int:
    rec = read_recording(args.recording)
    scene = recording_to_scene(rec)
    a, b = args.pair
    try:
        ta, tb = scene.track(a), scene.track(b)
    except KeyError as exc:
        raise DataError(f"no track with id {exc.args[0]} in {args.recording}") from None
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["t", "state"])
    for t, state in qtc_timeline(ta, tb, args.eps, scene.rate_hz):
        w.writerow([repr(t), str(state)])
    return EXIT_OK


def cmd_cnd(args) -> int:
    table = build_cnd()
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["index", "state", "n_tr", "alpha"])
    for idx, state, n_tr, alpha in table.rows():
        w.writerow([idx, state, n_tr, repr(alpha)])
    return EXIT_OK


def cmd_synth(args) -> int:
    params = SynthParams(
        n_agents=args.agents, speed=args.speed, noise_sd=args.noise_sd, duration=args.duration,
        seed=args.seed, rate_hz=args.rate, room_length=args.room_length,
        lane_spacing=args.lane_spacing, radius=args.radius, clearance=args.clearance,
    )
    rec = synthesize(args.scenario, params)
    write_recording(rec, args.output)
    print(f"wrote {len(rec)} events for {args.agents} agent(s) to {args.output}", file=sys.stderr)
    return EXIT_OK


def cmd_train(args) -> int:
    if not args.scenes:
        raise DataError("no scenes given to train on")
    scenes = load_scenes(args.scenes)
    cfg = PredictorConfig(
        obs_len=args.obs_len, pred_len=args.pred_len, encoder_hidden=args.encoder_hidden,
        decoder_hidden=args.decoder_hidden, embed_dim=args.embed_dim, pool_mlp_dim=args.pool_mlp_dim,
        noise_dim=args.noise_dim, k_train=args.k, mode=Mode(args.mode), seed=args.seed,
    )
    model = PredictorModel.init(cfg)
    result = train(model, scenes, epochs=args.epochs, lr=args.lr, batch_size=args.batch_size)
    save_model(result.model, args.output)
    if args.loss_trace:
        _json_out({"losses": result.losses}, args.loss_trace)
    final = result.losses[-1] if result.losses else float("nan")
    print(f"trained {cfg.mode.value} model for {args.epochs} epoch(s); final loss {final:.6g}", file=sys.stderr)
    return EXIT_OK


def _replay_report(args, model, path):
    return run_pipeline(
        read_recording(path), model, k=args.k, seed=args.seed,
        scheduler=THREADED if args.threaded else SEQUENTIAL,
        speed="realtime" if getattr(args, "realtime", False) else "max",
        gap_tolerance=args.gap_tolerance, scoring=args.scoring,
        include_runtime=args.runtime,
    )


def cmd_replay(args) -> int:
    result = _replay_report(args, load_model(args.model), args.recording)
    _json_out(result.report.to_dict(), args.report)
    if args.plots:
        write_plot_data(result.plot_rows, args.plots)
    r = result.report
    print(
        f"{result.n_batches} prediction batch(es); ADE {r.ade:.4f} m, FDE {r.fde:.4f} m "
        f"over {r.n_sequences} sequence(s); {r.unscored} unscored",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    if args.crosspath:
        if args.recordings or args.model_a or args.model_b:
            raise UsageError("--crosspath trains its own models; drop recordings and --model-a/--model-b")
        return _eval_crosspath(args)
    if not (args.recordings and args.model_a and args.model_b):
        raise UsageError("eval needs recordings, --model-a and --model-b (or --crosspath)")
    out = {}
    for label, path in (("model_a", args.model_a), ("model_b", args.model_b)):
        model = load_model(path)
        reports = [_replay_report(args, model, rec).report.to_dict() for rec in args.recordings]
        scored = [r for r in reports if r["n_sequences"]]
        out[label] = {
            "path": str(path),
            "mode": model.config.mode.value,
            "mean_ade": math.fsum(r["ade"] for r in scored) / len(scored) if scored else None,
            "mean_fde": math.fsum(r["fde"] for r in scored) / len(scored) if scored else None,
            "reports": dict(zip(args.recordings, reports)),
        }
    _json_out(out, args.report)
    for label in ("model_a", "model_b"):
        e = out[label]
        if e["mean_ade"] is None:
            print(f"{label} ({e['mode']}): nothing scored", file=sys.stderr)
        else:
            print(f"{label} ({e['mode']}): mean ADE {e['mean_ade']:.4f} m, mean FDE {e['mean_fde']:.4f} m "
                  f"over {len(args.recordings)} recording(s)", file=sys.stderr)
    return EXIT_OK


def _eval_crosspath(args) -> int:
    overrides = {}
    if args.epochs:
        overrides["epochs"] = args.epochs
    if args.training_seeds:
        overrides["training_seeds"] = tuple(range(args.training_seeds))
    table = run_crosspath(replace(CrossPathProtocol(k=args.k), **overrides))
    _json_out(table, args.report)
    for mode in (Mode.BASELINE, Mode.NEUROSYM):
        e = table[mode.value]
        print(f"{mode.value}: mean ADE {e['mean_ade']:.4f} m, mean FDE {e['mean_fde']:.4f} m "
              f"over {len(e['runs'])} seed(s), {e['test_windows']} held-out windows", file=sys.stderr)
    return EXIT_OK


def cmd_stitch(args) -> int:
    rec = read_recording(args.recording)
    cfg = StitchConfig(args.max_gap, args.max_dist, tuple(args.merge))
    clean, merges = stitch_tracks(rec, cfg)
    write_recording(clean, args.output)
    _json_out(
        {"merges": [
            {"from_id": m.from_id, "to_id": m.to_id, "gap": m.gap, "distance": m.distance, "manual": m.manual}
            for m in merges
        ]},
        args.report,
    )
    print(f"{len(merges)} merge(s); {len(rec.ids())} -> {len(clean.ids())} ids", file=sys.stderr)
    return EXIT_OK


def cmd_bench(args) -> int:
    model = load_model(args.model)
    stats = benchmark(model, n_agents=args.agents, k=args.k, repeats=args.repeats, seed=args.seed)
    _json_out(stats, None)
    print(
        f"median per-window latency: baseline {stats['baseline']['median_s'] * 1e3:.2f} ms, "
        f"neurosym {stats['neurosym']['median_s'] * 1e3:.2f} ms (ratio {stats['overhead_ratio']:.2f})",
        file=sys.stderr,
    )
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser(seed: int) -> argparse.ArgumentParser:
    p = _Parser(prog="qsym", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    q = sub.add_parser("qtc", help="print the QTC_C1 state sequence of two agents")
    q.add_argument("recording")
    q.add_argument("--pair", type=_pair, required=True, metavar="A,B")
    q.add_argument("--eps", type=_non_negative_float, default=DEFAULT_EPS)
    q.set_defaults(func=cmd_qtc)

    c = sub.add_parser("cnd", help="dump the conceptual neighbourhood table")
    c.add_argument("what", choices=["table"])
    c.set_defaults(func=cmd_cnd)

    s = sub.add_parser("synth", help="write a synthetic scenario recording")
    s.add_argument("scenario", choices=[sc.value for sc in Scenario])
    s.add_argument("-o", "--output", required=True)
    d = SynthParams()
    s.add_argument("--agents", type=_positive(int), default=d.n_agents)
    s.add_argument("--speed", type=_positive(float), default=d.speed)
    s.add_argument("--noise-sd", type=_non_negative_float, default=d.noise_sd)
    s.add_argument("--duration", type=_positive(float), default=d.duration)
    s.add_argument("--rate", type=_positive(float), default=d.rate_hz)
    s.add_argument("--room-length", type=_positive(float), default=d.room_length)
    s.add_argument("--lane-spacing", type=_positive(float), default=d.lane_spacing)
    s.add_argument("--radius", type=_positive(float), default=d.radius)
    s.add_argument("--clearance", type=_positive(float), default=d.clearance)
    s.add_argument("--seed", type=int, default=seed)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train a predictor on recordings or dataset files")
    t.add_argument("scenes", nargs="*")
    t.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.NEUROSYM.value)
    t.add_argument("-o", "--output", required=True)
    t.add_argument("--epochs", type=int, default=200)
    t.add_argument("--lr", type=_positive(float), default=3e-3)
    t.add_argument("--batch-size", type=_positive(int), default=32)
    t.add_argument("--seed", type=int, default=seed)
    cfg = PredictorConfig()
    t.add_argument("--obs-len", type=int, default=cfg.obs_len)
    t.add_argument("--pred-len", type=_positive(int), default=cfg.pred_len)
    t.add_argument("--encoder-hidden", type=_positive(int), default=cfg.encoder_hidden)
    t.add_argument("--decoder-hidden", type=_positive(int), default=cfg.decoder_hidden)
    t.add_argument("--embed-dim", type=_positive(int), default=cfg.embed_dim)
    t.add_argument("--pool-mlp-dim", type=_positive(int), default=cfg.pool_mlp_dim)
    t.add_argument("--noise-dim", type=_positive(int), default=cfg.noise_dim)
    t.add_argument("--k", type=_positive(int), default=cfg.k_train, help="variety-loss samples")
    t.add_argument("--loss-trace", help="write per-epoch losses as JSON")
    t.set_defaults(func=cmd_train)

    def replay_flags(sp):
        sp.add_argument("--k", type=_positive(int), default=20)
        sp.add_argument("--seed", type=int, default=seed)
        sp.add_argument("--scoring", choices=[BEST_OF_K, MEAN_OF_K], default=BEST_OF_K)
        sp.add_argument("--gap-tolerance", type=_positive(int), default=1)
        sp.add_argument("--threaded", action="store_true", help="one thread per node")
        sp.add_argument("--runtime", action="store_true", help="include wall-clock latency stats (not reproducible)")
        sp.add_argument("--report")

    r = sub.add_parser("replay", help="replay a recording through the inference pipeline")
    r.add_argument("recording")
    replay_flags(r)
    r.add_argument("--model", required=True)
    r.add_argument("--plots")
    r.add_argument("--realtime", action="store_true")
    r.set_defaults(func=cmd_replay)

    e = sub.add_parser("eval", help="compare two models on the same recordings")
    e.add_argument("recordings", nargs="*")
    replay_flags(e)
    e.add_argument("--model-a")
    e.add_argument("--model-b")
    e.add_argument("--crosspath", action="store_true",
                   help="train both modes on the synthetic CrossPath protocol and emit the comparison table")
    e.add_argument("--epochs", type=_positive(int), help="CrossPath training epochs override")
    e.add_argument("--training-seeds", type=_positive(int), help="CrossPath: use seeds 0..N-1")
    e.set_defaults(func=cmd_eval)

    st = sub.add_parser("stitch", help="merge track fragments split by tracking dropouts")
    st.add_argument("recording")
    st.add_argument("-o", "--output", required=True)
    sd = StitchConfig()
    st.add_argument("--merge", type=_pair, action="append", default=[], metavar="SRC:DST")
    st.add_argument("--max-gap", type=_positive(float), default=sd.max_gap)
    st.add_argument("--max-dist", type=_positive(float), default=sd.max_dist)
    st.add_argument("--report", help="write the merge report here instead of stdout")
    st.set_defaults(func=cmd_stitch)

    b = sub.add_parser("bench", help="measure per-window inference latency")
    b.add_argument("--model", required=True)
    b.add_argument("--agents", type=_positive(int), default=2)
    b.add_argument("--k", type=_positive(int), default=20)
    b.add_argument("--repeats", type=_positive(int), default=50)
    b.add_argument("--seed", type=int, default=seed)
    b.set_defaults(func=cmd_bench)
    return p


def run(argv: list[str] | None = None) -> int:
    try:
        parser = build_parser(default_seed())
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ContractError, ModelFormatError, OSError) as exc:
        print(f"qsym {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
