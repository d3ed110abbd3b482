"""QTC_C1 (double-cross) qualitative relations between two moving points."""
from __future__ import annotations

import enum
import math
from typing import Iterator, NamedTuple

import numpy as np

from .core import ContractError, Track, grid_index

DEFAULT_EPS = 1e-3


class QtcSymbol(enum.IntEnum):
    MINUS = 0
    ZERO = 1
    PLUS = 2

    @property
    def char(self) -> str:
        return "-0+"[self.value]

    @classmethod
    def from_char(cls, c: str) -> QtcSymbol:
        try:
            return cls("-0+".index(c))
        except ValueError:
            raise ContractError(f"not a QTC symbol: {c!r}") from None

    def flipped(self) -> QtcSymbol:
        return QtcSymbol(2 - self.value)


class QtcState(NamedTuple):
    q1: QtcSymbol
    q2: QtcSymbol
    q3: QtcSymbol
    q4: QtcSymbol

    def __str__(self) -> str:
        return "".join(q.char for q in self)

    @classmethod
    def parse(cls, text: str) -> QtcState:
        if len(text) != 4:
            raise ContractError(f"QTC state needs 4 symbols, got {text!r}")
        return cls(*(QtcSymbol.from_char(c) for c in text))

    def swapped(self) -> QtcState:
        """The same relation seen with the two agents' roles exchanged."""
        return QtcState(self.q2, self.q1, self.q4, self.q3)

    @property
    def index(self) -> int:
        return state_index(self)


N_STATES = 3**4


def state_index(state: QtcState) -> int:
    """Base-3 code with q1 most significant (MINUS=0, ZERO=1, PLUS=2)."""
    idx = 0
    for q in state:
        idx = idx * 3 + int(q)
    return idx


def index_state(index: int) -> QtcState:
    if not 0 <= index < N_STATES:
        raise ContractError(f"QTC state index out of range: {index}")
    digits = []
    for _ in range(4):
        index, r = divmod(index, 3)
        digits.append(QtcSymbol(r))
    return QtcState(*reversed(digits))


def all_states() -> Iterator[QtcState]:
    return (index_state(i) for i in range(N_STATES))


def _sign(value: float, band: float) -> QtcSymbol:
    if value > band:
        return QtcSymbol.PLUS
    if value < -band:
        return QtcSymbol.MINUS
    return QtcSymbol.ZERO


def _distance_symbol(k_prev, k_curr, l_curr, eps: float) -> QtcSymbol:
    before = math.hypot(l_curr[0] - k_prev[0], l_curr[1] - k_prev[1])
    now = math.hypot(l_curr[0] - k_curr[0], l_curr[1] - k_curr[1])
    # k approaches l when its move shrinks the distance to l's current position
    return _sign(now - before, eps)


def _side_symbol(k_prev, k_curr, l_curr, eps: float) -> QtcSymbol:
    dx, dy = k_curr[0] - k_prev[0], k_curr[1] - k_prev[1]
    cx, cy = l_curr[0] - k_curr[0], l_curr[1] - k_curr[1]
    move, link = math.hypot(dx, dy), math.hypot(cx, cy)
    if move == 0.0 or link == 0.0:
        return QtcSymbol.ZERO
    # positive cross product: k moves to the right of the k->l line
    return _sign(dx * cy - dy * cx, eps * move * link)


def qtc_c1_state(a_prev, a_curr, b_prev, b_curr, eps: float = DEFAULT_EPS) -> QtcState:
    """QTC_C1 state of the pair (A, B) over one sampling interval."""
    pts = [tuple(map(float, p)) for p in (a_prev, a_curr, b_prev, b_curr)]
    if any(len(p) != 2 for p in pts):
        raise ContractError("positions must be 2-D")
    if not all(math.isfinite(v) for p in pts for v in p):
        raise ContractError("non-finite position")
    if not (eps >= 0 and math.isfinite(eps)):
        raise ContractError(f"eps must be a finite non-negative number, got {eps}")
    ap, ac, bp, bc = pts
    return QtcState(
        _distance_symbol(ap, ac, bc, eps),
        _distance_symbol(bp, bc, ac, eps),
        _side_symbol(ap, ac, bc, eps),
        _side_symbol(bp, bc, ac, eps),
    )


def qtc_timeline(
    track_a: Track, track_b: Track, eps: float = DEFAULT_EPS, rate_hz: float | None = None
) -> list[tuple[float, QtcState]]:
    """Like :func:`qtc_sequence`, paired with the time of the later sample of each step."""
    if rate_hz is None:
        if len(track_a) < 2:
            raise ContractError("cannot infer the grid rate from a single-sample track")
        rate_hz = 1.0 / float(np.median(np.diff(track_a.t)))
    ga = {int(g): i for i, g in enumerate(grid_index(track_a.t, rate_hz))}
    gb = {int(g): i for i, g in enumerate(grid_index(track_b.t, rate_hz))}
    common = sorted(ga.keys() & gb.keys())
    if len(common) < 2:
        raise ContractError(
            f"tracks {track_a.id} and {track_b.id} overlap on {len(common)} grid sample(s)"
        )
    out = []
    for g0, g1 in zip(common, common[1:]):
        state = qtc_c1_state(
            track_a.xy[ga[g0]], track_a.xy[ga[g1]],
            track_b.xy[gb[g0]], track_b.xy[gb[g1]],
            eps,
        )
        out.append((float(track_a.t[ga[g1]]), state))
    return out


def qtc_sequence(
    track_a: Track, track_b: Track, eps: float = DEFAULT_EPS, rate_hz: float | None = None
) -> list[QtcState]:
    """One state per consecutive pair of common grid samples, in time order.

    Tracks are matched on their shared grid; ``rate_hz`` is inferred from the
    first track when omitted.
    """
    return [state for _, state in qtc_timeline(track_a, track_b, eps, rate_hz)]
