from itertools import product
from typing import Annotated, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.config import SCHEMA_VERSION, NumericsSettings, __version__, settings as default_settings
from src.models.distributions import (
    CenteredExponentialCoordinates,
    GaussianSummands,
    RademacherCoordinates,
    ScaledBernoulliHeterogeneous,
)
from src.models.estimates import (
    ConcentrationEstimate,
    DiscrepancyEstimate,
    IdentityEstimate,
    PropertyTally,
    SmoothingGapEstimate,
    Verdict,
)
from src.models.geometry import Ball, HalfSpace, Polytope

EXPERIMENTS = ("lemmas", "gaussian-concentration", "sum-concentration", "berry-esseen", "adversarial", "stein-residual")
ExperimentName = Literal["lemmas", "gaussian-concentration", "sum-concentration", "berry-esseen", "adversarial", "stein-residual"]

_FAMILIES = {
    "rademacher": RademacherCoordinates,
    "gaussian": GaussianSummands,
    "exponential": CenteredExponentialCoordinates,
    "bernoulli_heterogeneous": ScaledBernoulliHeterogeneous,
}


class RandomPolytopeSpec(BaseModel):
    """A random polytope described by its face count and seed; built once k is known."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["random_polytope"] = "random_polytope"
    faces: int = Field(default=6, ge=1)
    seed: int = Field(ge=0)
    label: Optional[str] = None

    def build(self, k: int) -> Polytope:
        return Polytope.random(k, self.faces, self.seed, label=self.label or f"random-polytope-{self.faces}f-s{self.seed}")


SetSpec = Annotated[Union[HalfSpace, Polytope, Ball, RandomPolytopeSpec], Field(discriminator="kind")]


class HalfSpaceGrid(BaseModel):
    """Half-spaces {u.x <= t} over a set of directions and an offset grid."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["halfspace_grid"] = "halfspace_grid"
    directions: int = Field(default=1, ge=1)
    offsets: List[float] = Field(default_factory=lambda: [-1.0, -0.5, -0.1, 0.0, 0.1, 0.5, 1.0], min_length=1)
    seed: int = Field(default=0, ge=0)

    def build(self, k: int) -> list:
        """The first direction is e1; further ones are random unit vectors."""
        rng = np.random.default_rng(self.seed)
        directions = [np.eye(k)[0]]
        while len(directions) < self.directions:
            directions.append(rng.standard_normal(k))
        sets = []
        for j, (direction, t) in enumerate(product(directions, self.offsets)):
            sets.append(HalfSpace.from_direction(direction, t * float(np.linalg.norm(direction)), label=f"halfspace-{j // len(self.offsets)}-t{t:g}"))
        return sets


class BallGrid(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["ball_grid"] = "ball_grid"
    radii: List[float] = Field(default_factory=lambda: [0.5, 1.0, 1.5, 2.0], min_length=1)

    @field_validator("radii")
    @classmethod
    def _non_negative(cls, radii: List[float]) -> List[float]:
        if any(r < 0 for r in radii):
            raise ValueError("radii must be non-negative")
        return radii

    def build(self, k: int) -> list:
        return [Ball(center=tuple([0.0] * k), radius=r, label=f"ball-r{r:g}") for r in self.radii]


class RandomPolytopes(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["random_polytopes"] = "random_polytopes"
    count: int = Field(default=4, ge=1)
    faces: int = Field(default=6, ge=1)
    seed: int = Field(default=0, ge=0)

    def build(self, k: int) -> list:
        return [
            Polytope.random(k, self.faces, self.seed + j, label=f"polytope-{j}")
            for j in range(self.count)
        ]


SetFamily = Annotated[Union[HalfSpaceGrid, BallGrid, RandomPolytopes], Field(discriminator="kind")]


class ExperimentConfig(BaseModel):
    """One experiment, read from a TOML file; every field except the required ones has a documented default."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    experiment: ExperimentName
    k: int = Field(ge=1)
    n: int = Field(ge=1)
    family: Literal["rademacher", "gaussian", "exponential", "bernoulli_heterogeneous"]
    samples: int = Field(ge=10_000)
    seed: int = Field(ge=0, le=2**64 - 1)

    skew: float = Field(default=0.2, gt=0, lt=1)
    workers: int = Field(default=1, ge=1)
    eps: List[float] = Field(default_factory=lambda: [0.1], min_length=1)
    eps2: Optional[List[float]] = None
    summand_index: int = Field(default=1, ge=1)
    random_eps: bool = True
    sets: Optional[List[SetSpec]] = None
    set_family: SetFamily = Field(default_factory=HalfSpaceGrid)
    smoothing: bool = True
    restarts: int = Field(default=4, ge=1)
    initial_direction: Optional[List[float]] = None
    points: int = Field(default=100_000, ge=1)
    probes: int = Field(default=10_000, ge=1)
    probe_points: Optional[List[List[float]]] = None
    residual_points: int = Field(default=20, ge=1)
    residual_tol: float = Field(default=5e-2, gt=0)
    tolerances: Dict[str, Union[bool, int, float]] = Field(default_factory=dict)

    @field_validator("eps", "eps2")
    @classmethod
    def _non_negative_eps(cls, values: Optional[List[float]]) -> Optional[List[float]]:
        if values is not None and any(e < 0 for e in values):
            raise ValueError("eps values must be non-negative")
        return values

    @field_validator("tolerances")
    @classmethod
    def _known_tolerances(cls, tolerances: Dict[str, Union[bool, int, float]]) -> Dict[str, Union[bool, int, float]]:
        try:
            default_settings.with_overrides(tolerances)
        except ValidationError as e:
            raise ValueError(f"invalid tolerances: {e.errors()[0]['msg']} ({e.errors()[0]['loc'][0]})") from e
        return tolerances

    @model_validator(mode="after")
    def _consistent(self) -> "ExperimentConfig":
        if self.experiment != "gaussian-concentration" and min(self.eps) <= 0:
            raise ValueError(f"eps must be positive for {self.experiment}")
        if self.summand_index > self.n:
            raise ValueError(f"summand_index {self.summand_index} exceeds n = {self.n}")
        for spec in self.sets or []:
            if not isinstance(spec, RandomPolytopeSpec) and spec.dim != self.k:
                raise ValueError(f"set of dimension {spec.dim} does not match k = {self.k}")
        for point in self.probe_points or []:
            if len(point) != self.k:
                raise ValueError(f"probe point of dimension {len(point)} does not match k = {self.k}")
        if self.initial_direction is not None and len(self.initial_direction) != self.k:
            raise ValueError("initial_direction must have k coordinates")
        return self

    def numerics(self) -> NumericsSettings:
        return default_settings.with_overrides(self.tolerances)

    def distribution(self):
        extra = {"skew": self.skew} if self.family == "bernoulli_heterogeneous" else {}
        return _FAMILIES[self.family](k=self.k, n=self.n, **extra)

    def convex_sets(self) -> list:
        """Configured sets, or the half-space {x_1 <= 0} when none are given."""
        if not self.sets:
            return [HalfSpace(normal=tuple(np.eye(self.k)[0]), offset=0.0, label="halfspace-e1")]
        return [spec.build(self.k) if isinstance(spec, RandomPolytopeSpec) else spec for spec in self.sets]

    def eps_pairs(self) -> List[Tuple[float, float]]:
        """(eps1, eps2) pairs: the diagonal when eps2 is absent, the full grid otherwise."""
        if self.eps2 is None:
            return [(e, e) for e in self.eps]
        return list(product(self.eps, self.eps2))


class ResultRecord(BaseModel):
    """Self-describing output of one run; ``config`` alone replays it."""

    config: ExperimentConfig
    gamma: Optional[float] = None
    gamma_method: Optional[str] = None
    concentration: List[ConcentrationEstimate] = Field(default_factory=list)
    discrepancy: List[DiscrepancyEstimate] = Field(default_factory=list)
    properties: List[PropertyTally] = Field(default_factory=list)
    smoothing: List[SmoothingGapEstimate] = Field(default_factory=list)
    identity: List[IdentityEstimate] = Field(default_factory=list)
    wall_time_s: float = 0.0
    artifact_version: str = __version__
    schema_version: str = SCHEMA_VERSION

    def verdicts(self) -> List[Verdict]:
        groups = (self.concentration, self.discrepancy, self.properties, self.smoothing, self.identity)
        return [item.verdict for group in groups for item in group]

    @property
    def failed(self) -> bool:
        return Verdict.FAIL in self.verdicts()
