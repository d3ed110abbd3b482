"""Offline repair of identity switches: merge track fragments of one person."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from ..core import ContractError, DataError, Recording, TrackSample


@dataclass(frozen=True)
class StitchConfig:
    max_gap: float = 1.0
    max_dist: float = 0.5
    manual_merges: tuple[tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        if not (self.max_gap > 0 and self.max_dist > 0):
            raise ContractError("max_gap and max_dist must be positive")
        merges = self.manual_merges
        if isinstance(merges, dict):
            merges = tuple(merges.items())
        object.__setattr__(self, "manual_merges", tuple((int(a), int(b)) for a, b in merges))


@dataclass(frozen=True)
class Merge:
    from_id: int
    to_id: int
    gap: float
    distance: float
    manual: bool = False


@dataclass
class _Fragment:
    """A manual group or single track, handled as one unit by the greedy pass."""

    root: int
    start: float
    end: float
    first: np.ndarray
    tail: np.ndarray  # last two samples as rows (t, x, y)


@dataclass
class _Chain:
    root: int
    end: float
    tail: np.ndarray
    members: list[int] = field(default_factory=list)

    def extrapolate(self, t: float) -> np.ndarray:
        if len(self.tail) < 2:
            return self.tail[-1, 1:]
        (t0, x0, y0), (t1, x1, y1) = self.tail[-2], self.tail[-1]
        v = np.array([x1 - x0, y1 - y0]) / (t1 - t0)
        return self.tail[-1, 1:] + v * (t - t1)


def _resolve_manual(merges, ids: set[int]) -> dict[int, int]:
    parent: dict[int, int] = {}
    for src, dst in merges:
        if src == dst:
            raise DataError(f"manual merge {src}->{dst} maps an id onto itself")
        for i in (src, dst):
            if i not in ids:
                raise DataError(f"manual merge refers to unknown id {i}")
        if src in parent and parent[src] != dst:
            raise DataError(f"id {src} has conflicting manual merges ({parent[src]} and {dst})")
        parent[src] = dst
    root = {}
    for start in parent:
        seen = [start]
        node = start
        while node in parent:
            node = parent[node]
            if node in seen:
                cycle = " -> ".join(map(str, seen + [node]))
                raise DataError(f"manual merges form a cycle: {cycle}")
            seen.append(node)
        root[start] = node
    return root


def stitch_tracks(recording: Recording, cfg: StitchConfig | None = None) -> tuple[Recording, list[Merge]]:
    """Greedy chronological merging of fragments; manual merges are applied first."""
    cfg = cfg or StitchConfig()
    per_id: dict[int, list[TrackSample]] = defaultdict(list)
    for e in recording.events:
        per_id[e.id].append(e)
    for aid, samples in per_id.items():
        for a, b in zip(samples, samples[1:]):
            if b.t <= a.t:
                raise DataError(f"track {aid} has non-increasing timestamps at t={b.t}")
    arrays = {
        aid: np.array([(s.t, s.x, s.y) for s in samples]) for aid, samples in per_id.items()
    }

    manual_root = _resolve_manual(cfg.manual_merges, set(arrays))
    groups: dict[int, list[int]] = defaultdict(list)
    for aid in arrays:
        groups[manual_root.get(aid, aid)].append(aid)

    merges: list[Merge] = []
    fragments = []
    for root, members in groups.items():
        members.sort(key=lambda a: arrays[a][0, 0])
        for prev, nxt in zip(members, members[1:]):
            pa, na = arrays[prev], arrays[nxt]
            if na[0, 0] <= pa[-1, 0]:
                raise DataError(
                    f"manual merge joins tracks {prev} and {nxt} which overlap in time "
                    f"([{pa[0, 0]}, {pa[-1, 0]}] vs [{na[0, 0]}, {na[-1, 0]}])"
                )
        for aid in members:
            if aid != root:
                other = [m for m in members if m != aid]
                # report against the temporally adjacent member for context
                merges.append(_manual_record(aid, manual_root[aid], arrays, other))
        data = np.concatenate([arrays[m] for m in members])
        fragments.append(_Fragment(root, data[0, 0], data[-1, 0], data[0, 1:], data[-2:]))

    fragments.sort(key=lambda f: (f.start, f.root))
    chains: list[_Chain] = []
    chain_of: dict[int, _Chain] = {}
    for frag in fragments:
        best = None
        for ch in chains:
            gap = frag.start - ch.end
            if gap <= 0 or gap > cfg.max_gap:
                continue
            dist = float(np.linalg.norm(ch.extrapolate(frag.start) - frag.first))
            if dist > cfg.max_dist:
                continue
            score = (dist, gap, ch.root)
            if best is None or score < best[0]:
                best = (score, ch)
        if best is None:
            ch = _Chain(frag.root, frag.end, frag.tail, [frag.root])
            chains.append(ch)
        else:
            (dist, gap, _), ch = best
            merges.append(Merge(frag.root, ch.root, gap, dist))
            ch.end, ch.tail = frag.end, frag.tail
            ch.members.append(frag.root)
        chain_of[frag.root] = ch

    relabel = {aid: chain_of[manual_root.get(aid, aid)].root for aid in arrays}
    events = tuple(TrackSample(e.t, relabel[e.id], e.x, e.y) for e in recording.events)
    return Recording(recording.header, events), merges


def _manual_record(aid: int, root: int, arrays, others: list[int]) -> Merge:
    a = arrays[aid]
    best = (math.inf, 0.0)
    for o in others:
        b = arrays[o]
        if b[-1, 0] < a[0, 0]:
            gap, d = a[0, 0] - b[-1, 0], float(np.linalg.norm(a[0, 1:] - b[-1, 1:]))
        else:
            gap, d = b[0, 0] - a[-1, 0], float(np.linalg.norm(b[0, 1:] - a[-1, 1:]))
        if gap < best[0]:
            best = (gap, d)
    return Merge(aid, root, float(best[0]), best[1], manual=True)
