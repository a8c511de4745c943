from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from ghcm.distributions import equal_specs
from ghcm.geometry import BlockGrid, block_of, build_block_grid
from ghcm.instance import SampleInstance
from ghcm.util import FLOAT_TOLERANCE, ContractError

IDENTITY = (1, 2)
SWAP = (2, 1)


@dataclass
class EvalReport:
    agreement: float
    exact: bool
    relabeling_used: Tuple[int, int]
    per_block_errors: Dict[int, int] = field(default_factory=dict)
    max_block_errors: int = 0
    cstar_connected: Optional[bool] = None
    log_n: float = 1.0

    def almost_exact(self, epsilon: float) -> bool:
        """Every block has at most epsilon*ln(n) errors (the refinement precondition)."""
        return self.max_block_errors <= epsilon * self.log_n

    def to_json(self):
        return {
            "agreement": self.agreement,
            "exact": self.exact,
            "relabeling_used": list(self.relabeling_used),
            "max_block_errors": self.max_block_errors,
            "error_blocks": len(self.per_block_errors),
            "cstar_connected": self.cstar_connected,
        }


def permissible_relabelings(pi, kernel):
    relabelings = [IDENTITY]
    if (
        abs(pi[0] - pi[1]) <= FLOAT_TOLERANCE
        and equal_specs(kernel.p11, kernel.p22)
        and equal_specs(kernel.p12, kernel.entry(2, 1))
    ):
        relabelings.append(SWAP)
    return relabelings


def _relabel(labels, omega):
    return np.asarray(omega, dtype=np.int8)[np.asarray(labels) - 1]


def agreement(
    xtilde,
    inst: SampleInstance,
    grid: Optional[BlockGrid] = None,
    consts=None,
) -> EvalReport:
    """Best match fraction over permissible relabelings, with per-block error counts.

    Without a grid (or constants to build one) every error is booked to block 0.
    """
    labels = np.asarray(getattr(xtilde, "labels", xtilde))
    if len(labels) != inst.vertex_count or not np.isin(labels, (1, 2)).all():
        raise ContractError("EVALUATION: labeling must be total over the instance")
    params = inst.params
    if grid is None and consts is not None:
        grid = build_block_grid(params, consts.chi)

    best_omega, best_matches = IDENTITY, -1
    for omega in permissible_relabelings(params.pi, params.kernel):
        matches = int((labels == _relabel(inst.true_labels, omega)).sum())
        if matches > best_matches:
            best_omega, best_matches = omega, matches

    count = inst.vertex_count
    score = best_matches / count if count else 1.0
    wrong = np.flatnonzero(labels != _relabel(inst.true_labels, best_omega))
    if grid is None:
        blocks = np.zeros(len(wrong), dtype=np.int64)
    else:
        blocks = block_of(inst.positions[wrong], grid) if len(wrong) else np.empty(0, dtype=np.int64)
    ids, hits = np.unique(blocks, return_counts=True)
    per_block = {int(b): int(h) for b, h in zip(ids, hits)}

    connected = None
    if grid is not None and consts is not None:
        connected = cstar_visibility_connected(inst, grid, consts)
    return EvalReport(
        agreement=score,
        exact=best_matches == count,
        relabeling_used=best_omega,
        per_block_errors=per_block,
        max_block_errors=max(per_block.values(), default=0),
        cstar_connected=connected,
        log_n=params.log_n,
    )


def _single_component(nodes, left, right):
    if len(nodes) <= 1:
        return True
    graph = coo_matrix(
        (np.ones(len(left), dtype=np.int8), (left, right)), shape=(len(nodes), len(nodes))
    )
    components, _ = connected_components(graph, directed=False)
    return components == 1


def cstar_visibility_connected(inst: SampleInstance, grid: BlockGrid, consts) -> bool:
    """Connectivity of the block graph on blocks holding more than delta*ln(n) C* vertices."""
    cstar = inst.positions[inst.true_labels == 1]
    counts = np.bincount(
        block_of(cstar, grid) if len(cstar) else np.empty(0, dtype=np.int64),
        minlength=grid.block_count,
    )
    nodes = np.flatnonzero(counts > consts.delta * inst.params.log_n)
    if len(nodes) <= 1:
        return True
    position = np.full(grid.block_count, -1, dtype=np.int64)
    position[nodes] = np.arange(len(nodes))
    coords = np.array(np.unravel_index(nodes, grid.shape)).T
    left, right = [], []
    for offset in grid.visible_offsets:
        neighbour = np.ravel_multi_index(
            np.mod(coords + offset, grid.blocks_per_side).T, grid.shape
        )
        hit = position[neighbour] >= 0
        left.append(np.flatnonzero(hit))
        right.append(position[neighbour[hit]])
    return _single_component(nodes, np.concatenate(left), np.concatenate(right))


def cstar_vertex_connected(inst: SampleInstance) -> bool:
    """Connectivity of the vertex visibility graph restricted to C*."""
    members = np.flatnonzero(inst.true_labels == 1)
    position = np.full(inst.vertex_count, -1, dtype=np.int64)
    position[members] = np.arange(len(members))
    pairs = position[inst.public.pairs]
    pairs = pairs[(pairs >= 0).all(axis=1)]
    return _single_component(members, pairs[:, 0], pairs[:, 1])


def occupied_fraction(inst, grid: BlockGrid, delta: float) -> float:
    counts = np.bincount(
        block_of(inst.positions, grid) if inst.vertex_count else np.empty(0, dtype=np.int64),
        minlength=grid.block_count,
    )
    return float((counts > delta * inst.params.log_n).mean())


def degree_profile(inst) -> Dict[str, float]:
    public = inst.public if isinstance(inst, SampleInstance) else inst
    degrees = public.degrees()
    log_n = public.params.log_n
    top = int(degrees.max()) if len(degrees) else 0
    return {
        "max_degree": top,
        "mean_degree": float(degrees.mean()) if len(degrees) else 0.0,
        "max_degree_over_log_n": top / log_n,
    }
