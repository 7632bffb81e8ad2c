"""Active/inactive splitting of the pairwise constraints.

Each outer iteration the pairwise inequalities are split by sign at the
current states: h >= 0 goes to the active/violated set H+ (handled with an
explicit dual variable and a residual row), h < 0 goes to the inactive set
H- (maintained with a log barrier).  Obstacle partners (negative handles)
are partitioned the same way but never produce mirror entries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import GameSpec, Iterate, other_sort_key


@dataclass
class Partition:
    """Index sets H+/H- keyed by (agent, step); members are partner handles.

    ``active_triplets`` enumerates H+ as (i, j, k) tuples in canonical order:
    agent ascending, then step ascending, then partner (agents before
    obstacles).  Residual rows and dual columns follow this enumeration.
    """

    active: dict = field(default_factory=dict)
    inactive: dict = field(default_factory=dict)
    active_triplets: list = field(default_factory=list)
    inactive_triplets: list = field(default_factory=list)

    def active_set(self, i: int, k: int):
        return self.active.get((i, k), ())

    def inactive_set(self, i: int, k: int):
        return self.inactive.get((i, k), ())


def ordered_pairs(spec: GameSpec) -> list[tuple[int, int]]:
    """All ordered (agent, partner) pairs in canonical order."""
    return [
        (i, j)
        for i in range(spec.agent_count)
        for j in sorted(spec.others(i), key=other_sort_key)
    ]


def pair_values(x: np.ndarray, spec: GameSpec):
    """h for every ordered pair at every step, shape (P, T); one batched call."""
    pairs = ordered_pairs(spec)
    if not pairs or spec.constraint is None:
        return pairs, np.zeros((0, x.shape[0]))
    xi = np.stack([x[:, i, :] for i, _ in pairs])
    xj = np.stack([spec.other_states(j, x) for _, j in pairs])
    return pairs, np.asarray(spec.constraint.value(xi, xj), dtype=float)


def partition_constraints(x: np.ndarray, spec: GameSpec) -> Partition:
    """Split all constraints by the sign rule h >= 0 -> H+, h < 0 -> H-."""
    part = Partition()
    T = spec.horizon
    pairs, values = pair_values(x, spec)
    js_by_agent = {i: [] for i in range(spec.agent_count)}
    rows_by_agent = {i: [] for i in range(spec.agent_count)}
    for p, (i, j) in enumerate(pairs):
        js_by_agent[i].append(j)
        rows_by_agent[i].append(p)
    for i in range(spec.agent_count):
        js = js_by_agent[i]
        mask = values[rows_by_agent[i], :] >= 0.0 if js else np.zeros((0, T), bool)
        for k in range(1, T + 1):
            act = tuple(j for j, a in zip(js, mask[:, k - 1]) if a)
            inact = tuple(j for j, a in zip(js, mask[:, k - 1]) if not a)
            part.active[(i, k)] = act
            part.inactive[(i, k)] = inact
            part.active_triplets += [(i, j, k) for j in act]
            part.inactive_triplets += [(i, j, k) for j in inact]
    return part


def sync_duals(partition: Partition, iterate: Iterate) -> Iterate:
    """Retain duals of surviving active triplets, init entering ones to 0."""
    out = iterate.copy()
    out.mu = {t: iterate.mu.get(t, 0.0) for t in partition.active_triplets}
    return out


def violation_sum(x: np.ndarray, spec: GameSpec) -> float:
    """Total violated constraint residual: sum of h over all h > 0.

    Agent-agent pairs are counted from both ordered sides; obstacle pairs
    once.  Zero exactly iff the trajectory is feasible.
    """
    if spec.constraint is None:
        return 0.0
    _, values = pair_values(x, spec)
    return float(np.sum(values[values > 0.0]))
