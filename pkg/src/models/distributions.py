from typing import Annotated, List, Literal, Union

from pydantic import BaseModel, ConfigDict, Field

# The Berry-Esseen constant is informative only below this gamma.
INFORMATIVE_GAMMA = 1.0 / 115.0


class _FamilyBase(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    k: int = Field(ge=1)
    n: int = Field(ge=1)


class RademacherCoordinates(_FamilyBase):
    """X_i has independent +-1/sqrt(n) coordinates."""

    kind: Literal["rademacher"] = "rademacher"


class GaussianSummands(_FamilyBase):
    """X_i ~ N(0, I/n); W is exactly standard normal."""

    kind: Literal["gaussian"] = "gaussian"


class CenteredExponentialCoordinates(_FamilyBase):
    """X_i has independent (E - 1)/sqrt(n) coordinates with E ~ Exp(1)."""

    kind: Literal["exponential"] = "exponential"


class ScaledBernoulliHeterogeneous(_FamilyBase):
    """
    X_i = sigma_i * (B - p)/sqrt(p(1-p)) coordinatewise, B ~ Bernoulli(p).

    sigma_i^2 = 2i / (n(n+1)), so summand variances grow linearly in i and
    sum to one per coordinate.
    """

    kind: Literal["bernoulli_heterogeneous"] = "bernoulli_heterogeneous"
    skew: float = Field(default=0.2, gt=0, lt=1)


DistributionFamily = Annotated[
    Union[RademacherCoordinates, GaussianSummands, CenteredExponentialCoordinates, ScaledBernoulliHeterogeneous],
    Field(discriminator="kind"),
]

FAMILY_KINDS = ("rademacher", "gaussian", "exponential", "bernoulli_heterogeneous")


class GammaReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    gamma: float = Field(gt=0)
    per_summand: List[float]
    method: Literal["closed_form", "monte_carlo"]
    std_error: float = 0.0

    @property
    def informative(self) -> bool:
        return self.gamma <= INFORMATIVE_GAMMA
