import math
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from ghcm.divergence import PhaseConstants
from ghcm.geometry import BlockGrid, block_of, build_block_grid
from ghcm.instance import PublicInstance
from ghcm.util import (
    DEFAULT2,
    MAP_ENUMERATION_GUARD,
    MAP_SEED,
    PROPAGATED,
    REFINED,
    TIE_TOLERANCE,
    ConfigurationError,
    ContractError,
    DegenerateInstanceError,
    logger,
    require,
    requires_asymmetric_kernel,
)

DATA_DRIVEN = "data_driven"
OCCUPANCY = "occupancy"
EXPLORATIONS = (DATA_DRIVEN, OCCUPANCY)

_CHUNK = 1 << 16


@dataclass
class Labeling:
    labels: np.ndarray
    provenance: np.ndarray
    timings: Dict[str, float] = field(default_factory=dict)
    visited_blocks: Optional[np.ndarray] = None
    explored_blocks: Optional[np.ndarray] = None
    phase1: Optional["Labeling"] = None

    def __len__(self):
        return len(self.labels)

    def label_of(self, v):
        return int(self.labels[v])

    def provenance_of(self, v):
        return str(self.provenance[v])

    def check(self, vertex_count):
        require(len(self.labels) == vertex_count, "RECOVERY: labeling is not total")
        require(
            np.isin(self.labels, (1, 2)).all(), "RECOVERY: labels must be 1 or 2"
        )
        require(
            (self.labels[self.provenance == DEFAULT2] == 2).all(),
            "RECOVERY: default2 vertices must carry label 2",
        )


@dataclass
class ExplorationState:
    """Active FIFO queue, explored set and per-block bookkeeping."""

    grid: BlockGrid
    vertex_block: np.ndarray
    counts: np.ndarray
    order: np.ndarray
    starts: np.ndarray
    labeled: np.ndarray
    label1_counts: np.ndarray
    active: deque = field(default_factory=deque)
    explored: set = field(default_factory=set)

    @staticmethod
    def build(inst: PublicInstance, grid: BlockGrid):
        vertex_block = (
            block_of(inst.positions, grid)
            if inst.vertex_count
            else np.empty(0, dtype=np.int64)
        )
        counts = np.bincount(vertex_block, minlength=grid.block_count)
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        return ExplorationState(
            grid=grid,
            vertex_block=vertex_block,
            counts=counts,
            order=np.argsort(vertex_block, kind="stable"),
            starts=starts,
            labeled=np.zeros(grid.block_count, dtype=bool),
            label1_counts=np.zeros(grid.block_count, dtype=np.int64),
        )

    def members(self, block):
        """Vertex ids of ``block`` in ascending order."""
        start = self.starts[block]
        return self.order[start : start + self.counts[block]]


def _as_public(inst):
    if not isinstance(inst, PublicInstance):
        raise ContractError("RECOVERY: recovery operates on PublicInstance only")
    return inst


def occupied_blocks(inst: PublicInstance, grid: BlockGrid, delta: float):
    counts = np.bincount(
        block_of(inst.positions, grid) if inst.vertex_count else np.empty(0, dtype=np.int64),
        minlength=grid.block_count,
    )
    return set(np.flatnonzero(counts > delta * inst.params.log_n).tolist())


def _log_prior(pi):
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(pi, dtype=float))


def map_seed(inst: PublicInstance, V0, pi, kernel) -> Dict[int, int]:
    """Exhaustive MAP labeling of ``V0`` from the prior and the pairs inside ``V0``.

    Ties go to the lexicographically smallest label vector, vertices in
    ascending id order and label 1 before label 2.
    """
    vertices = sorted(int(v) for v in V0)
    size = len(vertices)
    if size > MAP_ENUMERATION_GUARD:
        raise ConfigurationError(
            f"RECOVERY: |V0|={size} exceeds the MAP enumeration guard {MAP_ENUMERATION_GUARD}"
        )
    if size == 0:
        return {}

    left, right, ys = [], [], []
    for a in range(size):
        for b in range(a + 1, size):
            y = inst.observation(vertices[a], vertices[b])
            if y is None:
                raise ContractError(
                    f"RECOVERY: V0 vertices {vertices[a]} and {vertices[b]} are not mutually visible"
                )
            left.append(a)
            right.append(b)
            ys.append(y)
    left, right, ys = np.array(left, dtype=np.int64), np.array(right, dtype=np.int64), np.array(ys)
    table = np.vstack(
        [kernel.p11.log_density(ys), kernel.p12.log_density(ys), kernel.p22.log_density(ys)]
    )
    prior = _log_prior(pi)
    shifts = np.arange(size - 1, -1, -1, dtype=np.int64)

    def scores(codes):
        second = ((codes[:, None] >> shifts[None, :]) & 1).astype(np.int64)
        total = np.where(second == 1, prior[1], prior[0]).sum(axis=1)
        if len(ys):
            entry = second[:, left] + second[:, right]
            total = total + table[entry, np.arange(len(ys))[None, :]].sum(axis=1)
        return total

    count = 1 << size
    best, code = -np.inf, 0
    for start in range(0, count, _CHUNK):
        codes = np.arange(start, min(start + _CHUNK, count), dtype=np.int64)
        best = max(best, float(scores(codes).max()))
    threshold = best - TIE_TOLERANCE * max(1.0, abs(best)) if np.isfinite(best) else best
    for start in range(0, count, _CHUNK):
        codes = np.arange(start, min(start + _CHUNK, count), dtype=np.int64)
        hits = np.flatnonzero(scores(codes) >= threshold)
        if len(hits):
            code = int(codes[hits[0]])
            break
    return {v: 1 + ((code >> int(shifts[a])) & 1) for a, v in enumerate(vertices)}


def _source_observations(inst, sources):
    parts = [inst.neighbors(int(v)) for v in sources]
    if not parts:
        return np.empty(0, dtype=np.int64), np.empty(0)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def _propagation_scores(inst, sources, is_target):
    """Per target vertex: (ids, s1, s2, number of sources seen)."""
    ids, ys = _source_observations(inst, sources)
    keep = is_target(ids)
    ids, ys = ids[keep], ys[keep]
    targets, inverse = np.unique(ids, return_inverse=True)
    kernel = inst.params.kernel
    s1 = np.bincount(inverse, weights=kernel.p11.log_density(ys), minlength=len(targets))
    s2 = np.bincount(inverse, weights=kernel.p12.log_density(ys), minlength=len(targets))
    seen = np.bincount(inverse, minlength=len(targets))
    return targets, s1, s2, seen


def propagate(inst: PublicInstance, T, labels_T, Tprime) -> Dict[int, int]:
    """Label ``Tprime`` by likelihood against the label-1 part of ``T``.

    Empty sums and exact ties give label 2.
    """
    inst = _as_public(inst)
    T = np.asarray(T, dtype=np.int64)
    labels_T = np.asarray(labels_T)
    Tprime = np.asarray(Tprime, dtype=np.int64)
    if np.intersect1d(T, Tprime).size:
        raise ContractError("RECOVERY: T and T' must be disjoint")

    in_target = np.zeros(inst.vertex_count, dtype=bool)
    in_target[Tprime] = True
    _, _, _, seen_all = _propagation_scores(inst, T, lambda ids: in_target[ids])
    if len(Tprime) and len(T) and (len(seen_all) < len(Tprime) or (seen_all != len(T)).any()):
        raise ContractError("RECOVERY: T and T' are not mutually visible")

    sources = T[labels_T == 1]
    targets, s1, s2, _ = _propagation_scores(inst, sources, lambda ids: in_target[ids])
    result = {int(u): 2 for u in Tprime}
    for u, a, b in zip(targets, s1, s2):
        if a > b:
            result[int(u)] = 1
    return result


@requires_asymmetric_kernel
def phase1(
    inst: PublicInstance,
    consts: PhaseConstants,
    exploration: str = DATA_DRIVEN,
    oracle_labels=None,
) -> Labeling:
    """Seed by MAP in the fullest occupied block, then explore visible blocks FIFO.

    A newly labeled block is queued when at least delta*ln(n)/2 of its vertices
    are estimated in C* (``exploration="occupancy"`` queues every
    delta-occupied block instead). With ``oracle_labels`` the true labels replace
    every estimate, which isolates the exploration from labeling errors.
    """
    inst = _as_public(inst)
    require(exploration in EXPLORATIONS, f"RECOVERY: unknown exploration {exploration!r}", ConfigurationError)
    params = inst.params
    log_n = params.log_n
    grid = build_block_grid(params, consts.chi)
    state = ExplorationState.build(inst, grid)
    occupied = state.counts > consts.delta * log_n
    if not occupied.any():
        raise DegenerateInstanceError("RECOVERY: no delta-occupied block")

    labels = np.full(inst.vertex_count, 2, dtype=np.int8)
    oracle = None if oracle_labels is None else np.asarray(oracle_labels, dtype=np.int8)

    first = int(np.argmax(np.where(occupied, state.counts, -1)))
    V1 = state.members(first)
    size0 = min(int(math.ceil(consts.epsilon0 * log_n)), len(V1), MAP_ENUMERATION_GUARD)
    V0, V1_rest = V1[:size0], V1[size0:]
    if oracle is None:
        for v, label in map_seed(inst, V0, params.pi, params.kernel).items():
            labels[v] = label
        if len(V1_rest):
            for v, label in propagate(inst, V0, labels[V0], V1_rest).items():
                labels[v] = label
    else:
        labels[V1] = oracle[V1]
    state.labeled[first] = True
    state.label1_counts[first] = int((labels[V1] == 1).sum())
    state.active.append(first)

    threshold = consts.delta * log_n / 2.0
    is_target_block = np.zeros(grid.block_count, dtype=bool)
    while state.active:
        i = state.active.popleft()
        targets = grid.visible_blocks(i)
        targets = targets[~state.labeled[targets]]
        if len(targets):
            state.labeled[targets] = True
            if oracle is None:
                members = state.members(i)
                sources = members[labels[members] == 1]
                is_target_block[targets] = True
                winners, s1, s2, _ = _propagation_scores(
                    inst, sources, lambda ids: is_target_block[state.vertex_block[ids]]
                )
                is_target_block[targets] = False
                winners = winners[s1 > s2]
            else:
                block_members = np.concatenate([state.members(j) for j in targets])
                winners = block_members[oracle[block_members] == 1]
            labels[winners] = 1
            blocks, hits = np.unique(state.vertex_block[winners], return_counts=True)
            state.label1_counts[blocks] = hits
            if exploration == DATA_DRIVEN:
                push = state.label1_counts[targets] >= threshold
            else:
                push = occupied[targets]
            state.active.extend(targets[push].tolist())
        state.explored.add(i)

    provenance = np.full(inst.vertex_count, DEFAULT2, dtype=object)
    provenance[state.labeled[state.vertex_block]] = PROPAGATED
    provenance[V0] = MAP_SEED
    logger.info(
        "Phase I finished",
        extra={
            "extra": {
                "blocks": grid.block_count,
                "occupied": int(occupied.sum()),
                "labeled_blocks": int(state.labeled.sum()),
                "explored_blocks": len(state.explored),
                "seed_block": first,
                "seed_size": int(size0),
                "exploration": exploration,
            }
        },
    )
    return Labeling(
        labels=labels,
        provenance=provenance,
        visited_blocks=np.flatnonzero(state.labeled),
        explored_blocks=np.array(sorted(state.explored), dtype=np.int64),
    )


def refine_scores(inst: PublicInstance, reference):
    """(s1, s2): per vertex, log-likelihood of its observations under each own label."""
    src, dst, ys = inst.directed_edges()
    neighbour = np.asarray(reference)[dst]
    kernel = inst.params.kernel
    totals = []
    for i in (1, 2):
        contribution = np.where(
            neighbour == 1,
            kernel.entry(i, 1).log_density(ys),
            kernel.entry(i, 2).log_density(ys),
        )
        totals.append(np.bincount(src, weights=contribution, minlength=inst.vertex_count))
    return totals[0], totals[1]


def phase2(inst: PublicInstance, xhat: Labeling) -> Labeling:
    """One refinement pass against the frozen Phase I labels; ties keep xhat."""
    inst = _as_public(inst)
    xhat.check(inst.vertex_count)
    s1, s2 = refine_scores(inst, xhat.labels)
    labels = np.where(s1 > s2, 1, np.where(s2 > s1, 2, xhat.labels)).astype(np.int8)
    provenance = np.where(labels != xhat.labels, REFINED, xhat.provenance).astype(object)
    return Labeling(
        labels=labels,
        provenance=provenance,
        visited_blocks=xhat.visited_blocks,
        explored_blocks=xhat.explored_blocks,
        phase1=xhat,
    )


def full_recover(
    inst: PublicInstance,
    consts: PhaseConstants,
    exploration: str = DATA_DRIVEN,
) -> Labeling:
    start = time.perf_counter()
    xhat = phase1(inst, consts, exploration=exploration)
    middle = time.perf_counter()
    xtilde = phase2(inst, xhat)
    end = time.perf_counter()
    xtilde.timings = {"phase1": middle - start, "phase2": end - middle}
    xhat.timings = {"phase1": middle - start}
    logger.info(
        "Recovery finished",
        extra={
            "extra": {
                "vertices": inst.vertex_count,
                "edges": inst.edge_count,
                "refined_changes": int((xtilde.provenance == REFINED).sum()),
                **xtilde.timings,
            }
        },
    )
    return xtilde
