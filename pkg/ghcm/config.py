import itertools
import json
from typing import Annotated, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from scipy.optimize import brentq

from ghcm.distributions import (
    ObservationKernel,
    geometric_pds,
    geometric_sl,
    pmf,
    symmetric_sbm,
    z2_sync,
    bernoulli,
    gaussian,
)
from ghcm.divergence import it_threshold, unit_ball_volume
from ghcm.instance import ModelParams
from ghcm.util import FLOAT_TOLERANCE, ConfigurationError

PRESETS = ("geometric-sl", "geometric-pds", "symmetric-sbm", "z2-sync", "custom")
SWEEP_AXES = ("lambda", "n", "mu", "p", "q", "pi1", "threshold_ratio")
MU_CEILING = 40.0


class BernoulliConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    type: Literal["bernoulli"]
    p: float = Field(ge=0.0, le=1.0)

    def to_spec(self):
        return bernoulli(self.p)


class GaussianConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    type: Literal["gaussian"]
    mean: float
    var: float = Field(gt=0.0)

    def to_spec(self):
        return gaussian(self.mean, self.var)


class PmfConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    type: Literal["pmf"]
    support: List[float]
    probs: List[float]

    def to_spec(self):
        return pmf(self.support, self.probs)


DistributionConfig = Annotated[
    Union[BernoulliConfig, GaussianConfig, PmfConfig], Field(discriminator="type")
]


class KernelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    p11: DistributionConfig
    p12: DistributionConfig
    p22: DistributionConfig

    def to_kernel(self):
        return ObservationKernel(self.p11.to_spec(), self.p12.to_spec(), self.p22.to_spec())


class SweepAxis(BaseModel):
    model_config = ConfigDict(extra="forbid")
    name: Literal[SWEEP_AXES]
    values: List[float]


class ConstantsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    chi: Optional[float] = Field(default=None, gt=0.0)
    delta: Optional[float] = Field(default=None, gt=0.0)
    epsilon0: Optional[float] = Field(default=None, gt=0.0)
    delta_tilde: float = Field(default=0.5, gt=0.0)
    safety: float = Field(default=0.9, gt=0.0, lt=1.0)

    def overrides(self):
        return self.model_dump()


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    preset: Literal[PRESETS]
    lam: float = Field(alias="lambda", gt=0.0)
    n: float = Field(gt=1.0)
    d: int = Field(default=2, ge=2)
    pi: Tuple[float, float] = (0.5, 0.5)
    mu: Optional[float] = None
    p: Optional[float] = None
    q: Optional[float] = None
    kernel: Optional[KernelConfig] = None
    sweep: List[SweepAxis] = []
    trials: int = Field(default=1, ge=0)
    base_seed: int = Field(default=0, ge=0)
    constants: ConstantsConfig = ConstantsConfig()
    exploration: Literal["data_driven", "occupancy"] = "data_driven"
    epsilon: float = Field(default=0.1, gt=0.0)
    bench_n: List[float] = []
    timings: bool = False
    output: Optional[str] = None

    @model_validator(mode="after")
    def check_points(self):
        required = {
            "geometric-sl": ("mu",),
            "z2-sync": ("mu",),
            "geometric-pds": ("p", "q"),
            "symmetric-sbm": ("p", "q"),
            "custom": ("kernel",),
        }[self.preset]
        missing = [name for name in required if getattr(self, name) is None]
        if missing:
            raise ValueError(f"preset {self.preset} needs {', '.join(missing)}")
        if abs(sum(self.pi) - 1.0) > FLOAT_TOLERANCE:
            raise ValueError(f"prior {self.pi} must sum to 1")
        for point in self.points():
            self.model_params(point)
        return self

    def points(self):
        """Sweep points as dicts, in row-major order of the declared axes."""
        if not self.sweep:
            return [{}]
        names = [axis.name for axis in self.sweep]
        return [
            dict(zip(names, values))
            for values in itertools.product(*(axis.values for axis in self.sweep))
        ]

    def _kernel(self, mu, p, q):
        if self.preset == "geometric-sl":
            return geometric_sl(mu)
        if self.preset == "z2-sync":
            return z2_sync(mu)
        if self.preset == "geometric-pds":
            return geometric_pds(p, q)
        if self.preset == "symmetric-sbm":
            return symmetric_sbm(p, q)
        return self.kernel.to_kernel()

    def model_params(self, point=None) -> ModelParams:
        point = dict(point or {})
        values = {
            "lambda": self.lam,
            "n": self.n,
            "mu": self.mu,
            "p": self.p,
            "q": self.q,
            "pi1": self.pi[0],
        }
        target = point.pop("threshold_ratio", None)
        values.update(point)
        pi = (values["pi1"], 1.0 - values["pi1"])
        if target is not None:
            values.update(self._solve_ratio(target, values, pi))

        return ModelParams(
            lam=float(values["lambda"]),
            n=float(values["n"]),
            d=self.d,
            pi=pi,
            kernel=self._kernel(values["mu"], values["p"], values["q"]),
        )

    def _solve_ratio(self, target, values, pi):
        """Signal strength (mu, or p above q) placing the model at ``target``."""
        lam = float(values["lambda"])

        def ratio(kernel):
            params = ModelParams(lam=lam, n=float(values["n"]), d=self.d, pi=pi, kernel=kernel)
            return it_threshold(params).threshold_ratio

        if self.preset in ("geometric-sl", "z2-sync"):
            make = (lambda mu: self._kernel(mu, None, None))
            lo, hi, name = 1e-9, MU_CEILING, "mu"
        elif self.preset in ("geometric-pds", "symmetric-sbm"):
            q = values["q"]
            make = (lambda p: self._kernel(None, p, q))
            lo, hi, name = q + 1e-12, 1.0, "p"
        else:
            raise ConfigurationError("CONFIG: threshold_ratio sweeps need a parametric preset")
        ceiling = ratio(make(hi))
        if not 0.0 < target < ceiling:
            raise ConfigurationError(
                f"CONFIG: threshold ratio {target} unreachable (max {ceiling:.6g} "
                f"at lambda*nu_d={lam * unit_ball_volume(self.d):.6g})"
            )
        solved = brentq(lambda x: ratio(make(x)) - target, lo, hi, xtol=1e-13)
        return {name: solved}

    def to_json(self):
        return self.model_dump(mode="json", by_alias=True)


def load_config(path, **overrides) -> ExperimentConfig:
    try:
        with open(path) as handle:
            data = json.load(handle)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"CONFIG: cannot read {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigurationError(f"CONFIG: {path} must hold a JSON object")
    data.update({key: value for key, value in overrides.items() if value is not None})
    return parse_config(data)


def parse_config(data) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(f"CONFIG: {e}") from e
