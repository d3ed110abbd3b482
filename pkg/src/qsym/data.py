"""Dataset loaders (UCY-style text, normalised THOR CSV) and recording conversion."""
from __future__ import annotations

import csv
import json
import logging
import math
from collections import defaultdict
from pathlib import Path
from typing import Iterable

import numpy as np

from .core import (
    CANONICAL_RATE_HZ,
    ContractError,
    DataError,
    InsufficientDataError,
    Recording,
    RecordingHeader,
    Scene,
    Track,
    TrackSample,
    on_grid,
    resample_track,
)

log = logging.getLogger(__name__)


def _finite(value: str, what: str, line: int) -> float:
    try:
        v = float(value)
    except ValueError:
        raise DataError(f"{what} is not a number: {value!r}", line) from None
    if not math.isfinite(v):
        raise DataError(f"{what} is not finite: {value!r}", line)
    return v


def _integer(value: str, what: str, line: int) -> int:
    v = _finite(value, what, line)
    if v != int(v) or v < 0:
        raise DataError(f"{what} must be a non-negative integer, got {value!r}", line)
    return int(v)


def load_ucy(path: str | Path, frame_rate_hz: float = CANONICAL_RATE_HZ, frame_step: int = 1) -> Scene:
    """Read whitespace-separated ``frame ped_id x y`` rows.

    ``t = frame / frame_step / frame_rate_hz``; use ``frame_step=10`` for the
    common files that number frames in steps of ten.
    """
    rows: dict[int, list[tuple[float, float, float]]] = defaultdict(list)
    seen: set[tuple[int, int]] = set()
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            text = raw.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) != 4:
                raise DataError(f"expected 4 fields (frame ped_id x y), got {len(parts)}", lineno)
            frame = _integer(parts[0], "frame", lineno)
            pid = _integer(parts[1], "ped_id", lineno)
            x = _finite(parts[2], "x", lineno)
            y = _finite(parts[3], "y", lineno)
            if (frame, pid) in seen:
                raise DataError(f"duplicate row for frame {frame}, ped {pid}", lineno)
            seen.add((frame, pid))
            if frame % frame_step:
                raise DataError(f"frame {frame} is not a multiple of frame_step {frame_step}", lineno)
            rows[pid].append((frame // frame_step / frame_rate_hz, x, y))
    tracks = []
    for pid, pts in rows.items():
        pts.sort()
        arr = np.array(pts)
        tracks.append(Track(pid, arr[:, 0], arr[:, 1:]))
    return Scene(tuple(tracks), frame_rate_hz)


def load_thor(path: str | Path, rate_hz: float = CANONICAL_RATE_HZ) -> Scene:
    """Read a ``t,subject_id,x,y`` CSV and resample every subject onto the ``rate_hz`` grid."""
    rows: dict[int, list[tuple[float, float, float]]] = defaultdict(list)
    seen: set[tuple[float, int]] = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t", "subject_id", "x", "y"]:
            raise DataError(f"expected header t,subject_id,x,y, got {header}", 1)
        for lineno, parts in enumerate(reader, 2):
            if not parts or all(not p.strip() for p in parts):
                continue
            if len(parts) != 4:
                raise DataError(f"expected 4 fields, got {len(parts)}", lineno)
            t = _finite(parts[0], "t", lineno)
            if t < 0:
                raise DataError(f"negative timestamp {t}", lineno)
            sid = _integer(parts[1], "subject_id", lineno)
            x = _finite(parts[2], "x", lineno)
            y = _finite(parts[3], "y", lineno)
            if (t, sid) in seen:
                raise DataError(f"duplicate row for t={t}, subject {sid}", lineno)
            seen.add((t, sid))
            rows[sid].append((t, x, y))
    tracks = []
    for sid, pts in rows.items():
        pts.sort()
        arr = np.array(pts)
        raw = Track(sid, arr[:, 0], arr[:, 1:])
        try:
            tr = resample_track(raw, rate_hz, origin=0.0)
        except InsufficientDataError:
            log.warning("subject %d has a single sample; dropped", sid)
            continue
        if len(tr):
            tracks.append(tr)
    return Scene(tuple(tracks), rate_hz)


def scene_to_recording(scene: Scene, source: str = "scene") -> Recording:
    events = [s for tr in scene.tracks for s in tr.samples]
    events.sort(key=lambda e: (e.t, e.id))
    return Recording(RecordingHeader(source, scene.rate_hz), tuple(events))


def recording_to_scene(recording: Recording, rate_hz: float | None = None) -> Scene:
    """Group events per id; tracks are resampled when ``rate_hz`` differs or data are off-grid."""
    rate = recording.header.rate_hz if rate_hz is None else rate_hz
    per_id: dict[int, list[TrackSample]] = defaultdict(list)
    for e in recording.events:
        per_id[e.id].append(e)
    tracks = []
    for aid, samples in per_id.items():
        tr = Track.from_samples(samples)
        if not on_grid(tr.t, rate):
            if len(tr) < 2:
                log.warning("agent %d: single off-grid sample dropped", aid)
                continue
            tr = resample_track(tr, rate, origin=0.0)
            if not len(tr):
                continue
        tracks.append(tr)
    return Scene(tuple(tracks), rate)


# Recording files: JSON lines, a header object first, then one event per line.


def write_recording(recording: Recording, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps({"header": {"source": recording.header.source,
                                        "rate_hz": recording.header.rate_hz}}) + "\n")
        for e in recording.events:
            fh.write(json.dumps({"t": e.t, "id": e.id, "x": e.x, "y": e.y}) + "\n")


def _parse_event(obj, lineno: int) -> TrackSample:
    if not isinstance(obj, dict) or set(obj) != {"t", "id", "x", "y"}:
        raise DataError("event must have exactly the keys t, id, x, y", lineno)
    if not isinstance(obj["id"], int) or isinstance(obj["id"], bool) or obj["id"] < 0:
        raise DataError(f"id must be a non-negative integer, got {obj['id']!r}", lineno)
    vals = []
    for key in ("t", "x", "y"):
        v = obj[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise DataError(f"{key} must be a finite number, got {v!r}", lineno)
        vals.append(float(v))
    try:
        return TrackSample(vals[0], obj["id"], vals[1], vals[2])
    except ContractError as exc:
        raise DataError(str(exc), lineno) from None


def read_recording(path: str | Path) -> Recording:
    header = None
    events: list[TrackSample] = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise DataError(f"invalid JSON: {exc.msg}", lineno) from None
            if header is None:
                h = obj.get("header") if isinstance(obj, dict) else None
                if not isinstance(h, dict) or "rate_hz" not in h:
                    raise DataError("first line must be a header object with rate_hz", lineno)
                rate = h["rate_hz"]
                if isinstance(rate, bool) or not isinstance(rate, (int, float)) or not rate > 0:
                    raise DataError(f"header rate_hz must be positive, got {rate!r}", lineno)
                header = RecordingHeader(str(h.get("source", "")), float(rate))
                continue
            ev = _parse_event(obj, lineno)
            if events and ev.t < events[-1].t:
                raise DataError(f"timestamps decrease ({ev.t} < {events[-1].t})", lineno)
            events.append(ev)
    if header is None:
        raise DataError("empty recording file (missing header)")
    return Recording(header, tuple(events))


def load_scene(path: str | Path, rate_hz: float = CANONICAL_RATE_HZ) -> Scene:
    """Load any supported file by extension: ``.jsonl`` recording, ``.csv`` THOR, else UCY."""
    p = Path(path)
    suffix = p.suffix.lower()
    if suffix == ".jsonl":
        return recording_to_scene(read_recording(p), rate_hz)
    if suffix == ".csv":
        return load_thor(p, rate_hz)
    return load_ucy(p, rate_hz)


def load_scenes(paths: Iterable[str | Path], rate_hz: float = CANONICAL_RATE_HZ) -> list[Scene]:
    return [load_scene(p, rate_hz) for p in paths]


SAMPLES_DIR = Path(__file__).parent / "samples"


def sample_names() -> list[str]:
    return sorted(p.name for p in SAMPLES_DIR.iterdir() if p.suffix in (".jsonl", ".csv", ".txt"))


def sample_path(name: str = "all_forward.jsonl") -> Path:
    """Location of a data file shipped with the package."""
    if name not in sample_names():
        raise KeyError(f"unknown sample {name!r}; choose from {', '.join(sample_names())}")
    return SAMPLES_DIR / name
