import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import brentq

from ghcm.util import ConfigurationError, ContractError, logger, require


def side_length(n, d):
    return n ** (1.0 / d)


def visibility_radius(n, d):
    return math.log(n) ** (1.0 / d)


def wrap(coords, side):
    """Map coordinates into the half-open fundamental domain [-side/2, side/2)."""
    half = side / 2.0
    out = np.mod(np.asarray(coords, dtype=float) + half, side) - half
    return np.where(out >= half, out - side, out)


def torus_distances(a, b, side):
    """Row-wise toroidal distance between two (..., d) arrays."""
    diff = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    diff = np.minimum(diff, side - diff)
    return np.sqrt(np.sum(diff * diff, axis=-1))


def torus_distance(u, v, side) -> float:
    u, v = np.atleast_1d(np.asarray(u, dtype=float)), np.atleast_1d(np.asarray(v, dtype=float))
    if u.shape != v.shape:
        raise ContractError(
            f"GEOMETRY: dimension mismatch {u.shape[0]} vs {v.shape[0]}"
        )
    require(side > 0, "GEOMETRY: side must be positive")
    return float(torus_distances(u, v, side))


@dataclass(frozen=True)
class BlockGrid:
    n: float
    d: int
    blocks_per_side: int
    block_side: float
    visibility_radius: float
    target_block_volume: float

    @property
    def side(self):
        return self.blocks_per_side * self.block_side

    @property
    def block_count(self):
        return self.blocks_per_side**self.d

    @property
    def shape(self):
        return (self.blocks_per_side,) * self.d

    @property
    def block_volume(self):
        return self.block_side**self.d

    def coords(self, index):
        return np.array(np.unravel_index(index, self.shape))

    @cached_property
    def visible_offsets(self):
        """Integer offsets k whose worst-case corner distance is within r."""
        reach = max(int(math.floor(self.visibility_radius / self.block_side)), 0)
        axis = np.arange(-reach, reach + 1)
        grid = np.array(list(itertools.product(axis, repeat=self.d)), dtype=np.int64)
        worst = np.sqrt(np.sum(((np.abs(grid) + 1) * self.block_side) ** 2, axis=1))
        return grid[worst <= self.visibility_radius]

    def visible_blocks(self, index):
        """Sorted indices of all blocks visible to ``index`` (itself included)."""
        base = self.coords(index)
        shifted = np.mod(base[None, :] + self.visible_offsets, self.blocks_per_side)
        return np.unique(np.ravel_multi_index(shifted.T, self.shape))


def _minimum_n(chi):
    # largest root of x = chi * ln(x); only exists for chi > e
    if chi <= math.e:
        return 1.0
    return brentq(lambda x: x - chi * math.log(x), chi, chi * chi + math.e)


def build_block_grid(params, chi: float) -> BlockGrid:
    require(chi > 0, f"GEOMETRY: chi must be positive, got {chi}", ConfigurationError)
    n, d = float(params.n), int(params.d)
    require(n > 1, f"GEOMETRY: n must exceed 1, got {n}", ConfigurationError)
    side = side_length(n, d)
    target = chi * math.log(n)
    m = int(math.floor((n / target) ** (1.0 / d)))
    while m > 1 and (side / m) ** d < target:
        m -= 1
    if m < 1 or (side / max(m, 1)) ** d < target:
        raise ConfigurationError(
            f"GEOMETRY: n={n} too small for chi={chi}; need n >= {_minimum_n(chi):.6g}"
        )
    radius = visibility_radius(n, d)
    block_side = side / m
    if math.sqrt(d) * block_side > radius:
        raise ConfigurationError(
            f"GEOMETRY: block diameter {math.sqrt(d) * block_side:.6g} exceeds "
            f"visibility radius {radius:.6g}; chi={chi} is too large"
        )
    grid = BlockGrid(
        n=n,
        d=d,
        blocks_per_side=m,
        block_side=block_side,
        visibility_radius=radius,
        target_block_volume=target,
    )
    logger.debug(
        "Built block grid",
        extra={"extra": {"blocks_per_side": m, "block_side": block_side, "d": d}},
    )
    return grid


def block_of(points, grid: BlockGrid):
    """Row-major block index; a scalar for one point, an array for many."""
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    cells = np.floor((pts + grid.side / 2.0) / grid.block_side).astype(np.int64)
    cells = np.clip(cells, 0, grid.blocks_per_side - 1)
    index = np.ravel_multi_index(cells.T, grid.shape)
    return int(index[0]) if single else index


def blocks_visible(i: int, j: int, grid: BlockGrid) -> bool:
    k = np.abs(grid.coords(j) - grid.coords(i))
    k = np.minimum(k, grid.blocks_per_side - k)
    worst = math.sqrt(float(np.sum(((k + 1) * grid.block_side) ** 2)))
    return worst <= grid.visibility_radius


def _all_pairs(pts, side, radius):
    i, j = np.triu_indices(len(pts), k=1)
    keep = torus_distances(pts[i], pts[j], side) <= radius
    return np.column_stack((i[keep], j[keep])).astype(np.int64)


def pairs_within(points, side, radius):
    """Sorted unordered pairs (i < j) at toroidal distance <= radius.

    Points are binned into cells of side >= radius, so only the 3^d
    surrounding cells are scanned per point.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    count, d = pts.shape
    if count < 2:
        return np.empty((0, 2), dtype=np.int64)
    cells_per_side = int(math.floor(side / radius))
    if cells_per_side < 3:
        return _all_pairs(pts, side, radius)

    dims = (cells_per_side,) * d
    cell_side = side / cells_per_side
    cells = np.floor((pts + side / 2.0) / cell_side).astype(np.int64)
    cells = np.clip(cells, 0, cells_per_side - 1)
    flat = np.ravel_multi_index(cells.T, dims)
    order = np.argsort(flat, kind="stable")
    counts = np.bincount(flat, minlength=cells_per_side**d)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    ids = np.arange(count)

    rows, cols = [], []
    for offset in itertools.product((-1, 0, 1), repeat=d):
        neighbour = np.ravel_multi_index(
            np.mod(cells + np.array(offset), cells_per_side).T, dims
        )
        cnt = counts[neighbour]
        total = int(cnt.sum())
        if total == 0:
            continue
        i = np.repeat(ids, cnt)
        run_start = np.repeat(np.cumsum(cnt) - cnt, cnt)
        j = order[np.repeat(starts[neighbour], cnt) + np.arange(total) - run_start]
        keep = i < j
        i, j = i[keep], j[keep]
        close = torus_distances(pts[i], pts[j], side) <= radius
        rows.append(i[close])
        cols.append(j[close])

    rows, cols = np.concatenate(rows), np.concatenate(cols)
    order = np.lexsort((cols, rows))
    return np.column_stack((rows[order], cols[order])).astype(np.int64)


def visible_pairs(points, grid: BlockGrid):
    return pairs_within(points, grid.side, grid.visibility_radius)
