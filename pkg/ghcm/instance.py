from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Tuple

import numpy as np

from ghcm.distributions import ObservationKernel
from ghcm.geometry import side_length, visibility_radius
from ghcm.util import FLOAT_TOLERANCE, ConfigurationError, require


@dataclass(frozen=True)
class ModelParams:
    lam: float
    n: float
    d: int
    pi: Tuple[float, float]
    kernel: ObservationKernel

    def __post_init__(self):
        require(self.lam > 0, f"SAMPLER: lambda must be positive, got {self.lam}", ConfigurationError)
        require(self.n > 1, f"SAMPLER: n must exceed 1, got {self.n}", ConfigurationError)
        require(int(self.d) == self.d and self.d >= 2, f"SAMPLER: d must be an integer >= 2, got {self.d}", ConfigurationError)
        require(len(self.pi) == 2, "SAMPLER: prior must have two entries", ConfigurationError)
        require(
            all(0.0 <= p <= 1.0 for p in self.pi)
            and abs(sum(self.pi) - 1.0) <= FLOAT_TOLERANCE,
            f"SAMPLER: prior {self.pi} must be a probability vector",
            ConfigurationError,
        )

    @property
    def pi1(self):
        return self.pi[0]

    @property
    def side(self):
        return side_length(self.n, self.d)

    @property
    def radius(self):
        return visibility_radius(self.n, self.d)

    @property
    def log_n(self):
        return float(np.log(self.n))

    def to_json(self):
        return {
            "lambda": self.lam,
            "n": self.n,
            "d": self.d,
            "pi": list(self.pi),
            "kernel": self.kernel.to_json(),
        }

    @staticmethod
    def from_json(data):
        try:
            return ModelParams(
                lam=float(data["lambda"]),
                n=float(data["n"]),
                d=int(data["d"]),
                pi=(float(data["pi"][0]), float(data["pi"][1])),
                kernel=ObservationKernel.from_json(data["kernel"]),
            )
        except (KeyError, TypeError, IndexError) as e:
            raise ConfigurationError(f"SAMPLER: malformed model params: {e}") from e


def _frozen(array, dtype):
    out = np.array(array, dtype=dtype)
    out.setflags(write=False)
    return out


class PublicInstance:
    """Observable data: positions and observations on visible pairs, no labels."""

    def __init__(self, params: ModelParams, positions, pairs, values, seed: int):
        self.params = params
        self.positions = _frozen(np.reshape(positions, (-1, params.d)), float)
        self.pairs = _frozen(np.reshape(pairs, (-1, 2)), np.int64)
        self.values = _frozen(values, float)
        self.seed = int(seed)
        require(
            len(self.pairs) == len(self.values),
            "SAMPLER: one observation per visible pair",
        )

    @property
    def vertex_count(self):
        return len(self.positions)

    @property
    def edge_count(self):
        return len(self.pairs)

    @cached_property
    def _csr(self):
        count = self.vertex_count
        src = np.concatenate((self.pairs[:, 0], self.pairs[:, 1]))
        dst = np.concatenate((self.pairs[:, 1], self.pairs[:, 0]))
        ys = np.concatenate((self.values, self.values))
        order = np.lexsort((dst, src))
        indptr = np.zeros(count + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=count), out=indptr[1:])
        return indptr, dst[order], ys[order], src[order]

    def neighbors(self, v) -> Tuple[np.ndarray, np.ndarray]:
        """Visible neighbours of ``v`` and the matching observations."""
        indptr, dst, ys, _ = self._csr
        lo, hi = indptr[v], indptr[v + 1]
        return dst[lo:hi], ys[lo:hi]

    def degrees(self):
        return np.diff(self._csr[0])

    def directed_edges(self):
        """(source, target, y) with each unordered pair listed in both directions."""
        _, dst, ys, src = self._csr
        return src, dst, ys

    def observation(self, u, v) -> Optional[float]:
        ids, ys = self.neighbors(u)
        k = int(np.searchsorted(ids, v))
        if k < len(ids) and ids[k] == v:
            return float(ys[k])
        return None

    def observations(self):
        return {
            (int(u), int(v)): float(y) for (u, v), y in zip(self.pairs, self.values)
        }


class SampleInstance:
    """A realised GHCM draw; the hidden labels stay out of ``public``."""

    def __init__(self, public: PublicInstance, true_labels):
        self.public = public
        self.true_labels = _frozen(true_labels, np.int8)
        require(
            len(self.true_labels) == public.vertex_count,
            "SAMPLER: one label per vertex",
        )

    @property
    def params(self):
        return self.public.params

    @property
    def positions(self):
        return self.public.positions

    @property
    def seed(self):
        return self.public.seed

    @property
    def vertex_count(self):
        return self.public.vertex_count

    @property
    def edge_count(self):
        return self.public.edge_count

    def restrict(self, ids) -> "SampleInstance":
        """Sub-instance on ``ids`` (renumbered 0..k-1 in ascending id order)."""
        ids = np.unique(np.asarray(ids, dtype=np.int64))
        remap = np.full(self.vertex_count, -1, dtype=np.int64)
        remap[ids] = np.arange(len(ids))
        pairs = remap[self.public.pairs]
        keep = (pairs >= 0).all(axis=1)
        public = PublicInstance(
            self.params,
            self.positions[ids],
            pairs[keep],
            self.public.values[keep],
            self.seed,
        )
        return SampleInstance(public, self.true_labels[ids])
