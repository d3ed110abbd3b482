"""Conceptual neighbourhood diagram over QTC_C1 states and transition labels."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

from .core import ContractError
from .qtc import N_STATES, QtcState, all_states, index_state, state_index

EdgeRule = Callable[[QtcState, QtcState], bool]


def one_step_rule(a: QtcState, b: QtcState) -> bool:
    """Every symbol stays or moves one conceptual step; at least one moves."""
    return a != b and all(abs(int(x) - int(y)) <= 1 for x, y in zip(a, b))


@dataclass(frozen=True)
class CndTable:
    neighbors: tuple[frozenset[int], ...]
    n_tr: tuple[int, ...]
    alpha: tuple[float, ...]

    def __post_init__(self) -> None:
        if not len(self.neighbors) == len(self.n_tr) == len(self.alpha) == N_STATES:
            raise ContractError("CND table must cover all 81 states")
        for i, nb in enumerate(self.neighbors):
            if self.n_tr[i] != len(nb) or self.n_tr[i] < 1:
                raise ContractError(f"state {i}: n_tr inconsistent with neighbours")
            if self.alpha[i] != 1.0 / self.n_tr[i]:
                raise ContractError(f"state {i}: alpha must equal 1/n_tr")
            for j in nb:
                if i not in self.neighbors[j]:
                    raise ContractError(f"neighbour relation not symmetric at ({i}, {j})")

    def neighbors_of(self, state: QtcState) -> frozenset[int]:
        return self.neighbors[state_index(state)]

    def rows(self) -> list[tuple[int, str, int, float]]:
        return [
            (i, str(index_state(i)), self.n_tr[i], self.alpha[i]) for i in range(N_STATES)
        ]


def build_cnd(rule: EdgeRule = one_step_rule) -> CndTable:
    states = list(all_states())
    neighbors = tuple(
        frozenset(state_index(b) for b in states if rule(a, b)) for a in states
    )
    n_tr = tuple(len(nb) for nb in neighbors)
    return CndTable(neighbors, n_tr, tuple(1.0 / n for n in n_tr))


@lru_cache(maxsize=1)
def default_cnd() -> CndTable:
    return build_cnd()


def alpha_of(table: CndTable, state: QtcState) -> float:
    """Uniform transition likelihood 1 / N_Tr of ``state``."""
    return table.alpha[state_index(state)]


def alpha_sequence(states: Sequence[QtcState], table: CndTable) -> list[float]:
    """Attach the label of the interaction at t to step t + 1; the first step gets 1."""
    if len(states) == 0:
        raise ContractError("alpha_sequence needs at least one state")
    return [1.0] + [alpha_of(table, s) for s in states[:-1]]

