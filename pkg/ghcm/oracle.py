from dataclasses import dataclass

import numpy as np

from ghcm.instance import PublicInstance, SampleInstance
from ghcm.recovery import Labeling
from ghcm.util import (
    BRUTE_FORCE_GUARD,
    MAP_SEED,
    REFINED,
    TIE_TOLERANCE,
    ConfigurationError,
    require,
)

_CHUNK = 1 << 15


@dataclass
class OracleResult:
    labeling: Labeling
    log_posterior: float
    enumerated: int


def log_posterior(inst, labels) -> float:
    """Unnormalised log posterior of one full labeling."""
    public = inst.public if isinstance(inst, SampleInstance) else inst
    labels = np.asarray(labels)
    kernel, pi = public.params.kernel, public.params.pi
    with np.errstate(divide="ignore"):
        total = float(np.sum(np.log(np.where(labels == 1, pi[0], pi[1]))))
    for (u, v), y in zip(public.pairs, public.values):
        total += kernel.entry(int(labels[u]), int(labels[v])).log_density(y)
    return total


def brute_force_map(inst, max_vertices: int = BRUTE_FORCE_GUARD) -> OracleResult:
    """Global MAP by enumerating every labeling; ties go to the smallest label vector."""
    public = inst.public if isinstance(inst, SampleInstance) else inst
    require(isinstance(public, PublicInstance), "ORACLE: expected an instance")
    count = public.vertex_count
    if max_vertices > BRUTE_FORCE_GUARD or count > max_vertices:
        raise ConfigurationError(
            f"ORACLE: {count} vertices exceed the enumeration guard "
            f"{min(max_vertices, BRUTE_FORCE_GUARD)}"
        )
    kernel, pi = public.params.kernel, public.params.pi
    u, v = public.pairs[:, 0], public.pairs[:, 1]
    same_one = kernel.p11.log_density(public.values)
    mixed = kernel.p12.log_density(public.values)
    same_two = kernel.p22.log_density(public.values)
    with np.errstate(divide="ignore"):
        log_pi = np.log(np.asarray(pi, dtype=float))

    total = 1 << count
    weights = 1 << np.arange(count - 1, -1, -1, dtype=np.int64)
    scores = np.empty(total)
    for start in range(0, total, _CHUNK):
        codes = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        is_two = (codes[:, None] & weights[None, :]) != 0
        chunk = np.where(is_two, log_pi[1], log_pi[0]).sum(axis=1)
        if len(u):
            a, b = is_two[:, u], is_two[:, v]
            edge_terms = np.where(
                ~a & ~b, same_one, np.where(a & b, same_two, mixed)
            )
            chunk = chunk + edge_terms.sum(axis=1)
        scores[start : start + len(codes)] = chunk

    best = float(scores.max()) if total else 0.0
    slack = TIE_TOLERANCE * max(1.0, abs(best)) if np.isfinite(best) else 0.0
    code = int(np.flatnonzero(scores >= best - slack)[0])
    labels = np.where((code & weights) != 0, 2, 1).astype(np.int8)
    labeling = Labeling(labels=labels, provenance=np.full(count, MAP_SEED, dtype=object))
    return OracleResult(labeling=labeling, log_posterior=best, enumerated=total)


def genie(inst: SampleInstance) -> Labeling:
    """Vertexwise argmax using the true labels of all visible neighbours; ties give 2."""
    require(isinstance(inst, SampleInstance), "ORACLE: genie needs the true labels")
    public, truth = inst.public, inst.true_labels
    kernel = public.params.kernel
    u, v, y = public.pairs[:, 0], public.pairs[:, 1], public.values
    scores = np.zeros((2, public.vertex_count))
    for own in (1, 2):
        # contribution to u from v's true label, and to v from u's
        to_u = np.where(truth[v] == 1, kernel.entry(own, 1).log_density(y), kernel.entry(own, 2).log_density(y))
        to_v = np.where(truth[u] == 1, kernel.entry(own, 1).log_density(y), kernel.entry(own, 2).log_density(y))
        np.add.at(scores[own - 1], u, to_u)
        np.add.at(scores[own - 1], v, to_v)
    labels = np.where(scores[0] > scores[1], 1, 2).astype(np.int8)
    return Labeling(labels=labels, provenance=np.full(public.vertex_count, REFINED, dtype=object))
