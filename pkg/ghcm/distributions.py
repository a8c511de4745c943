from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import stats

from ghcm.util import (
    FLOAT_TOLERANCE,
    ConfigurationError,
    UnsupportedKernelError,
    require,
)

BERNOULLI = "bernoulli"
GAUSSIAN = "gaussian"
PMF = "pmf"


def _close(a, b):
    return abs(a - b) <= FLOAT_TOLERANCE


@dataclass(frozen=True)
class DistributionSpec:
    """One pairwise-observation distribution.

    Bernoulli draws are encoded as 0.0/1.0 so every kernel shares one real-valued
    observation container.
    """

    kind: str
    p: float = 0.0
    mean: float = 0.0
    var: float = 1.0
    support: Tuple[float, ...] = ()
    probs: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind == BERNOULLI:
            require(
                0.0 <= self.p <= 1.0,
                f"DISTRIBUTIONS: Bernoulli p={self.p} outside [0, 1]",
                ConfigurationError,
            )
        elif self.kind == GAUSSIAN:
            require(
                self.var > 0.0,
                f"DISTRIBUTIONS: Gaussian variance {self.var} must be positive",
                ConfigurationError,
            )
        elif self.kind == PMF:
            require(
                len(self.support) == len(self.probs) and len(self.support) > 0,
                "DISTRIBUTIONS: pmf support and probs must be non-empty and aligned",
                ConfigurationError,
            )
            require(
                len(set(self.support)) == len(self.support),
                "DISTRIBUTIONS: pmf support values must be distinct",
                ConfigurationError,
            )
            require(
                all(0.0 <= prob <= 1.0 for prob in self.probs)
                and _close(sum(self.probs), 1.0),
                "DISTRIBUTIONS: pmf probs must lie in [0, 1] and sum to 1",
                ConfigurationError,
            )
        else:
            raise ConfigurationError(f"DISTRIBUTIONS: unknown type {self.kind!r}")

    @property
    def is_discrete(self):
        return self.kind in (BERNOULLI, PMF)

    @property
    def sd(self):
        return float(np.sqrt(self.var))

    def atoms(self):
        """(support, probs) arrays of a discrete spec."""
        if self.kind == BERNOULLI:
            return np.array([0.0, 1.0]), np.array([1.0 - self.p, self.p])
        require(self.kind == PMF, "DISTRIBUTIONS: atoms() needs a discrete spec")
        return np.asarray(self.support, dtype=float), np.asarray(self.probs, dtype=float)

    def log_density(self, y):
        values = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore"):
            if self.kind == GAUSSIAN:
                out = stats.norm.logpdf(values, loc=self.mean, scale=self.sd)
            elif self.kind == BERNOULLI:
                out = np.full(values.shape, -np.inf)
                out[values == 1.0] = np.log(self.p)
                out[values == 0.0] = np.log1p(-self.p)
            else:
                support, probs = self.atoms()
                order = np.argsort(support)
                support, probs = support[order], probs[order]
                idx = np.clip(np.searchsorted(support, values), 0, len(support) - 1)
                hit = support[idx] == values
                out = np.where(hit, np.log(probs[idx]), -np.inf)
        if out.ndim == 0:
            return float(out)
        return out

    def sample(self, rng, size):
        if self.kind == BERNOULLI:
            return (rng.random(size) < self.p).astype(float)
        if self.kind == GAUSSIAN:
            return rng.normal(self.mean, self.sd, size)
        support, probs = self.atoms()
        return rng.choice(support, size=size, p=probs)

    def to_json(self):
        if self.kind == BERNOULLI:
            return {"type": BERNOULLI, "p": self.p}
        if self.kind == GAUSSIAN:
            return {"type": GAUSSIAN, "mean": self.mean, "var": self.var}
        return {"type": PMF, "support": list(self.support), "probs": list(self.probs)}

    @staticmethod
    def from_json(data):
        try:
            kind = data["type"]
            if kind == BERNOULLI:
                return bernoulli(data["p"])
            if kind == GAUSSIAN:
                return gaussian(data["mean"], data["var"])
            if kind == PMF:
                return pmf(data["support"], data["probs"])
        except (KeyError, TypeError) as e:
            raise ConfigurationError(f"DISTRIBUTIONS: malformed spec {data!r}") from e
        raise ConfigurationError(f"DISTRIBUTIONS: unknown type {kind!r}")


def bernoulli(p):
    return DistributionSpec(BERNOULLI, p=float(p))


def gaussian(mean, var):
    return DistributionSpec(GAUSSIAN, mean=float(mean), var=float(var))


def pmf(support, probs):
    return DistributionSpec(
        PMF,
        support=tuple(float(s) for s in support),
        probs=tuple(float(q) for q in probs),
    )


def log_density(spec: DistributionSpec, y):
    return spec.log_density(y)


def sample_obs(spec: DistributionSpec, rng) -> float:
    return float(spec.sample(rng, 1)[0])


def equal_specs(a: DistributionSpec, b: DistributionSpec) -> bool:
    """Structural equality: same family, parameters within 1e-12."""
    if a.kind != b.kind:
        return False
    if a.kind == BERNOULLI:
        return _close(a.p, b.p)
    if a.kind == GAUSSIAN:
        return _close(a.mean, b.mean) and _close(a.var, b.var)
    if len(a.support) != len(b.support):
        return False
    left = sorted(zip(a.support, a.probs))
    right = sorted(zip(b.support, b.probs))
    return all(
        _close(s, t) and _close(p, q) for (s, p), (t, q) in zip(left, right)
    )


@dataclass(frozen=True)
class ObservationKernel:
    """Symmetric 2x2 kernel; P21 is P12 by construction."""

    p11: DistributionSpec
    p12: DistributionSpec
    p22: DistributionSpec

    def __post_init__(self):
        families = {spec.is_discrete for spec in (self.p11, self.p12, self.p22)}
        if len(families) != 1:
            raise UnsupportedKernelError(
                "DISTRIBUTIONS: kernel mixes discrete and continuous entries"
            )

    def entry(self, i, j):
        if i == 1 and j == 1:
            return self.p11
        if i == 2 and j == 2:
            return self.p22
        return self.p12

    def row(self, i):
        return (self.entry(i, 1), self.entry(i, 2))

    def is_asymmetric_2(self):
        return not equal_specs(self.p11, self.p12) and equal_specs(self.p12, self.p22)

    def to_json(self):
        return {
            "p11": self.p11.to_json(),
            "p12": self.p12.to_json(),
            "p22": self.p22.to_json(),
        }

    @staticmethod
    def from_json(data):
        try:
            return ObservationKernel(
                p11=DistributionSpec.from_json(data["p11"]),
                p12=DistributionSpec.from_json(data["p12"]),
                p22=DistributionSpec.from_json(data["p22"]),
            )
        except (KeyError, TypeError) as e:
            raise ConfigurationError(f"DISTRIBUTIONS: malformed kernel {data!r}") from e


# Presets
def geometric_sl(mu):
    return ObservationKernel(gaussian(mu, 1.0), gaussian(0.0, 1.0), gaussian(0.0, 1.0))


def geometric_pds(p, q):
    return ObservationKernel(bernoulli(p), bernoulli(q), bernoulli(q))


def symmetric_sbm(p, q):
    return ObservationKernel(bernoulli(p), bernoulli(q), bernoulli(p))


def z2_sync(mu):
    return ObservationKernel(gaussian(mu, 1.0), gaussian(-mu, 1.0), gaussian(mu, 1.0))
