"""Independent reference implementations used as test oracles."""
from __future__ import annotations

import itertools
import math


def qtc_oracle(a_prev, a_curr, b_prev, b_curr, eps=1e-3) -> str:
    """Re-derive the four QTC_C1 symbols as a string over '-', '0', '+'."""

    def approach(k0, k1, l1):
        d_before = math.sqrt((k0[0] - l1[0]) ** 2 + (k0[1] - l1[1]) ** 2)
        d_after = math.sqrt((k1[0] - l1[0]) ** 2 + (k1[1] - l1[1]) ** 2)
        if d_before - d_after > eps:
            return "-"
        if d_after - d_before > eps:
            return "+"
        return "0"

    def side(k0, k1, l1):
        mx, my = k1[0] - k0[0], k1[1] - k0[1]
        lx, ly = l1[0] - k1[0], l1[1] - k1[1]
        if (mx, my) == (0.0, 0.0) or (lx, ly) == (0.0, 0.0):
            return "0"
        # heading of the move relative to the link direction; a clockwise
        # turn (negative sine) means the move goes to the right of the link
        s = math.sin(math.atan2(my, mx) - math.atan2(ly, lx))
        if s < -eps:
            return "+"
        if s > eps:
            return "-"
        return "0"

    return (
        approach(a_prev, a_curr, b_curr)
        + approach(b_prev, b_curr, a_curr)
        + side(a_prev, a_curr, b_curr)
        + side(b_prev, b_curr, a_curr)
    )


STEPS = {"-": ("-", "0"), "0": ("-", "0", "+"), "+": ("0", "+")}


def cnd_neighbours(state: str) -> set[str]:
    """All successors of a 4-symbol state under the one-step rule, self excluded."""
    return {"".join(c) for c in itertools.product(*(STEPS[s] for s in state))} - {state}


def all_state_strings() -> list[str]:
    return ["".join(c) for c in itertools.product("-0+", repeat=4)]
