import numpy as np

from ghcm.divergence import unit_ball_volume
from ghcm.geometry import pairs_within, wrap
from ghcm.instance import ModelParams, PublicInstance, SampleInstance
from ghcm.util import ResourceGuardError, logger, max_expected_edges

__all__ = [
    "ModelParams",
    "expected_edge_count",
    "observe",
    "sample_ghcm",
    "strip_labels",
]

# Fixed sub-stream offsets of the master seed. Positions and labels do not
# depend on the kernel, so two kernels at one seed share the same geometry.
STREAM_COUNT = 0
STREAM_POSITIONS = 1
STREAM_LABELS = 2
STREAM_OBSERVATIONS = 3


def stream_rng(seed: int, stream: int):
    return np.random.default_rng(np.random.SeedSequence([int(seed), stream]))


def expected_edge_count(params: ModelParams) -> float:
    """lambda*n vertices times lambda*nu_d*ln(n) expected visible neighbours."""
    return params.lam * params.n * params.lam * unit_ball_volume(params.d) * params.log_n


def observe(params: ModelParams, positions, labels, seed: int) -> PublicInstance:
    """Draw one observation for every visible pair of the given vertices."""
    positions = np.asarray(positions, dtype=float).reshape(-1, params.d)
    labels = np.asarray(labels)
    pairs = pairs_within(positions, params.side, params.radius)
    left, right = labels[pairs[:, 0]], labels[pairs[:, 1]]
    entry = np.where(
        (left == 1) & (right == 1), 0, np.where((left == 2) & (right == 2), 2, 1)
    )
    values = np.empty(len(pairs), dtype=float)
    rng = stream_rng(seed, STREAM_OBSERVATIONS)
    kernel = params.kernel
    for code, spec in ((0, kernel.p11), (1, kernel.p12), (2, kernel.p22)):
        mask = entry == code
        values[mask] = spec.sample(rng, int(mask.sum()))
    return PublicInstance(params, positions, pairs, values, seed)


def sample_ghcm(params: ModelParams, seed: int) -> SampleInstance:
    expected = expected_edge_count(params)
    cap = max_expected_edges()
    if expected > cap:
        raise ResourceGuardError(
            f"SAMPLER: expected edge count {expected:.3g} exceeds cap {cap:.3g} "
            "(set GHCM_MAX_EXPECTED_EDGES to raise it)"
        )

    count = int(stream_rng(seed, STREAM_COUNT).poisson(params.lam * params.n))
    half = params.side / 2.0
    positions = wrap(
        stream_rng(seed, STREAM_POSITIONS).uniform(-half, half, size=(count, params.d)),
        params.side,
    )
    labels = np.where(
        stream_rng(seed, STREAM_LABELS).random(count) < params.pi1, 1, 2
    ).astype(np.int8)

    public = observe(params, positions, labels, seed)
    logger.info(
        "Sampled GHCM instance",
        extra={
            "extra": {
                "seed": int(seed),
                "vertices": count,
                "edges": public.edge_count,
                "expected_edges": expected,
            }
        },
    )
    return SampleInstance(public, labels)


def strip_labels(inst: SampleInstance) -> PublicInstance:
    return inst.public
