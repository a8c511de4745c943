import math
import threading
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from cachetools import LRUCache, cached
from scipy.integrate import simpson
from scipy.optimize import bisect, minimize_scalar
from scipy.special import gammaln

from ghcm.distributions import GAUSSIAN, DistributionSpec
from ghcm.util import (
    ConfigurationError,
    ContractError,
    InfeasibleRegimeError,
    UnsupportedKernelError,
    logger,
    require,
)

GRID_POINTS = 65
SEARCH_WIDTH = 1e-12
QUADRATURE_NODES = 20001
QUADRATURE_SPAN = 12.0
CRITICAL_TOLERANCE = 1e-9
DEFAULT_SAFETY = 0.9
DEFAULT_DELTA_TILDE = 0.5

ABOVE = "above"
BELOW = "below"
CRITICAL = "critical"


def unit_ball_volume(d: int) -> float:
    require(d >= 1, f"DIVERGENCE: dimension must be >= 1, got {d}")
    return float(np.exp(0.5 * d * np.log(np.pi) - gammaln(0.5 * d + 1.0)))


def _discrete_coefficient(p, q, t):
    support_p, probs_p = p.atoms()
    support_q, probs_q = q.atoms()
    support = np.union1d(support_p, support_q)
    mass_p = np.zeros(len(support))
    mass_q = np.zeros(len(support))
    mass_p[np.searchsorted(support, support_p)] = probs_p
    mass_q[np.searchsorted(support, support_q)] = probs_q
    return float(np.sum(mass_p**t * mass_q ** (1.0 - t)))


def _quadrature_coefficient(p, q, t):
    spread = QUADRATURE_SPAN * max(p.sd, q.sd)
    grid = np.linspace(min(p.mean, q.mean) - spread, max(p.mean, q.mean) + spread, QUADRATURE_NODES)
    integrand = np.exp(t * p.log_density(grid) + (1.0 - t) * q.log_density(grid))
    return float(simpson(integrand, x=grid))


def bhattacharyya_t(p: DistributionSpec, q: DistributionSpec, t: float, quadrature=False) -> float:
    """sum_x p(x)^t q(x)^(1-t), or the matching integral for Gaussians.

    ``quadrature=True`` skips the equal-variance closed form.
    """
    if not 0.0 <= t <= 1.0:
        raise ContractError(f"DIVERGENCE: t={t} outside [0, 1]")
    if p.is_discrete != q.is_discrete:
        raise UnsupportedKernelError(
            "DIVERGENCE: cannot mix discrete and continuous distributions"
        )
    if p.is_discrete:
        return _discrete_coefficient(p, q, t)
    if t in (0.0, 1.0):
        return 1.0
    if not quadrature and p.kind == q.kind == GAUSSIAN and abs(p.var - q.var) <= 1e-12:
        return math.exp(-t * (1.0 - t) * (p.mean - q.mean) ** 2 / (2.0 * p.var))
    return _quadrature_coefficient(p, q, t)


def objective(theta_p, theta_q, pi, t):
    """g(t) = sum_i pi_i * bhattacharyya_t(p_i, q_i, t)."""
    return sum(
        weight * bhattacharyya_t(p, q, t) for weight, p, q in zip(pi, theta_p, theta_q)
    )


@cached(cache=LRUCache(maxsize=1024), lock=threading.Lock())
def _ch_divergence(theta_p, theta_q, pi):
    ts = np.linspace(0.0, 1.0, GRID_POINTS)
    values = [objective(theta_p, theta_q, pi, t) for t in ts]
    k = int(np.argmin(values))
    best_t, best_g = float(ts[k]), float(values[k])

    lo, hi = ts[max(k - 1, 0)], ts[min(k + 1, GRID_POINTS - 1)]
    result = minimize_scalar(
        lambda t: objective(theta_p, theta_q, pi, t),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": SEARCH_WIDTH},
    )
    if result.success and result.fun < best_g:
        best_t, best_g = float(result.x), float(result.fun)
    return min(max(1.0 - best_g, 0.0), 1.0), best_t


def ch_divergence(theta_p: Sequence[DistributionSpec], theta_q: Sequence[DistributionSpec], pi):
    """Chernoff-Hellinger divergence D+(theta_p, theta_q) and its minimising t.

    g is convex on [0, 1], so the coarse grid brackets the minimum and a
    bounded scalar search refines it inside the bracket.
    """
    require(len(theta_p) == 2 and len(theta_q) == 2, "DIVERGENCE: rows must have length 2")
    return _ch_divergence(tuple(theta_p), tuple(theta_q), tuple(float(w) for w in pi))


@dataclass(frozen=True)
class ThresholdReport:
    nu_d: float
    d_plus: float
    threshold_ratio: float
    argmin_t: float
    regime: str
    almost_exact_ratio: float

    @property
    def almost_exact(self):
        return self.almost_exact_ratio > 1.0

    def to_json(self):
        data = asdict(self)
        data["almost_exact"] = self.almost_exact
        return data


def classify(ratio):
    if abs(ratio - 1.0) <= CRITICAL_TOLERANCE:
        return CRITICAL
    return ABOVE if ratio > 1.0 else BELOW


def it_threshold(params) -> ThresholdReport:
    nu_d = unit_ball_volume(params.d)
    row_1, row_2 = params.kernel.row(1), params.kernel.row(2)
    forward = ch_divergence(row_1, row_2, params.pi)
    backward = ch_divergence(row_2, row_1, params.pi)
    d_plus, argmin_t = min(forward, backward)
    ratio = params.lam * nu_d * d_plus
    return ThresholdReport(
        nu_d=nu_d,
        d_plus=d_plus,
        threshold_ratio=ratio,
        argmin_t=argmin_t,
        regime=classify(ratio),
        almost_exact_ratio=params.pi1 * params.lam * nu_d,
    )


@dataclass(frozen=True)
class PhaseConstants:
    chi: float
    delta: float
    r_d: float
    lambda_prime: float
    epsilon0: float
    d: int
    nu_d: float
    delta_tilde: float = DEFAULT_DELTA_TILDE
    safety: float = DEFAULT_SAFETY

    def violations(self):
        """Names of the feasibility clauses these constants break."""
        nu, d, lam = self.nu_d, self.d, self.lambda_prime
        failed = []
        inner = 1.0 - 1.5 * math.sqrt(d) * self.chi ** (1.0 / d)
        if inner <= 0 or nu * inner**d < (nu + 1.0 / lam) / 2.0:
            failed.append("chi-volume")
        if not 0.0 < self.chi < (nu - 1.0 / lam) / 2.0:
            failed.append("chi-range")
        if not self.chi < (2.0 / (3.0 * math.sqrt(d))) ** d:
            failed.append("chi-block-visibility")
        if abs(self.r_d - (1.0 - math.sqrt(d) * self.chi ** (1.0 / d) / 2.0)) > 1e-12:
            failed.append("r_d")
        if not 0.0 < self.delta < self.delta_tilde * self.chi / (nu * self.r_d):
            failed.append("delta-range")
        if not 0.0 < self.epsilon0 <= min(1.0 / (2.0 * math.log(2.0)), self.delta):
            failed.append("epsilon0")
        return failed

    def to_json(self):
        return asdict(self)

    @staticmethod
    def from_json(data):
        return PhaseConstants(**data)


def _largest_chi(lambda_prime, d, nu):
    """Largest chi meeting both chi clauses (the first is decreasing in chi)."""
    target = (nu + 1.0 / lambda_prime) / 2.0

    def slack(chi):
        return nu * (1.0 - 1.5 * math.sqrt(d) * chi ** (1.0 / d)) ** d - target

    ceiling = (2.0 / (3.0 * math.sqrt(d))) ** d
    root = bisect(slack, 0.0, ceiling, xtol=1e-15)
    return min(root, (nu - 1.0 / lambda_prime) / 2.0)


def choose_constants(
    lambda_prime: float,
    d: int,
    safety: float = DEFAULT_SAFETY,
    delta_tilde: float = DEFAULT_DELTA_TILDE,
    chi: Optional[float] = None,
    delta: Optional[float] = None,
    epsilon0: Optional[float] = None,
) -> PhaseConstants:
    nu = unit_ball_volume(d)
    lambda_nu = lambda_prime * nu
    if lambda_prime <= 0 or lambda_nu <= 1.0:
        raise InfeasibleRegimeError(
            f"DIVERGENCE: lambda' * nu_d = {lambda_nu:.9g} <= 1, no feasible chi",
            lambda_nu,
        )
    require(0.0 < safety < 1.0, f"DIVERGENCE: safety {safety} outside (0, 1)", ConfigurationError)
    require(delta_tilde > 0.0, f"DIVERGENCE: delta_tilde {delta_tilde} must be positive", ConfigurationError)

    if chi is None:
        chi = safety * _largest_chi(lambda_prime, d, nu)
    require(chi > 0.0, f"DIVERGENCE: chi {chi} must be positive", ConfigurationError)
    r_d = 1.0 - math.sqrt(d) * chi ** (1.0 / d) / 2.0
    if delta is None:
        bound = delta_tilde * chi / (nu * r_d)
        occupancy_cap = chi * lambda_prime * nu * r_d**d / 2.0
        delta = safety * min(bound, occupancy_cap)
    if epsilon0 is None:
        epsilon0 = min(1.0 / (2.0 * math.log(2.0)), delta)

    consts = PhaseConstants(
        chi=float(chi),
        delta=float(delta),
        r_d=r_d,
        lambda_prime=float(lambda_prime),
        epsilon0=float(epsilon0),
        d=int(d),
        nu_d=nu,
        delta_tilde=float(delta_tilde),
        safety=float(safety),
    )
    failed = consts.violations()
    if failed:
        raise ConfigurationError(
            f"DIVERGENCE: constants violate {', '.join(failed)}: {consts.to_json()}"
        )
    logger.debug("Chose phase constants", extra={"extra": consts.to_json()})
    return consts
