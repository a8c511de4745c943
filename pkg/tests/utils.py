import itertools

import numpy as np

from ghcm.distributions import geometric_pds, geometric_sl
from ghcm.geometry import block_of, build_block_grid, torus_distances
from ghcm.instance import ModelParams, PublicInstance, SampleInstance
from ghcm.sampler import observe, sample_ghcm


def sl_params(mu=2.0, lam=2.0, n=1e4, d=2, pi=(0.5, 0.5)):
    return ModelParams(lam=lam, n=n, d=d, pi=pi, kernel=geometric_sl(mu))


def pds_params(p=0.9, q=0.1, lam=2.0, n=1e4, d=2, pi=(0.5, 0.5)):
    return ModelParams(lam=lam, n=n, d=d, pi=pi, kernel=geometric_pds(p, q))


def brute_force_pairs(points, side, radius):
    points = np.asarray(points, dtype=float)
    found = set()
    for i, j in itertools.combinations(range(len(points)), 2):
        if torus_distances(points[i], points[j], side) <= radius:
            found.add((i, j))
    return found


def micro_instance(params, count, seed, labels=None):
    """``count`` mutually visible vertices packed around the origin."""
    rng = np.random.default_rng(seed)
    angle = rng.uniform(0.0, 2.0 * np.pi, count)
    reach = 0.45 * params.radius * np.sqrt(rng.random(count))
    positions = np.zeros((count, params.d))
    positions[:, 0] = reach * np.cos(angle)
    positions[:, 1] = reach * np.sin(angle)
    if labels is None:
        labels = np.where(rng.random(count) < params.pi1, 1, 2)
    public = observe(params, positions, labels, seed)
    return SampleInstance(public, labels)


def line_instance(params, values, labels=None, spacing=0.1):
    """Vertices on a short segment, one observation per pair taken from ``values``."""
    count = len(labels) if labels is not None else int(round((1 + np.sqrt(1 + 8 * len(values))) / 2))
    positions = np.zeros((count, params.d))
    positions[:, 0] = spacing * np.arange(count)
    pairs = np.array(list(itertools.combinations(range(count), 2)), dtype=np.int64).reshape(-1, 2)
    public = PublicInstance(params, positions, pairs, values, seed=0)
    if labels is None:
        return public
    return SampleInstance(public, labels)


def seed_vertex(inst, consts):
    """First vertex of the block phase1 seeds from."""
    grid = build_block_grid(inst.params, consts.chi)
    blocks = block_of(inst.positions, grid)
    counts = np.bincount(blocks, minlength=grid.block_count)
    occupied = counts > consts.delta * inst.params.log_n
    first = int(np.argmax(np.where(occupied, counts, -1)))
    return int(np.flatnonzero(blocks == first)[0])


def draw_with_cstar_seed(params, consts, seeds=range(40)):
    """First unmodified draw whose seed vertex is in C*.

    With a single-vertex seed set under a uniform prior the seed vertex is
    labeled 1; a C2 seed vertex inverts the exploration.
    """
    for seed in seeds:
        inst = sample_ghcm(params, seed)
        if inst.true_labels[seed_vertex(inst, consts)] == 1:
            return inst
    raise AssertionError("no draw with its seed vertex in C*")


class RecordingInstance(PublicInstance):
    """PublicInstance that logs every vertex whose observations are read."""

    def __init__(self, public):
        super().__init__(public.params, public.positions, public.pairs, public.values, public.seed)
        self.reads = []

    def neighbors(self, v):
        self.reads.append(int(v))
        return super().neighbors(v)

    def directed_edges(self):
        self.reads.append(None)
        return super().directed_edges()
