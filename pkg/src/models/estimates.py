from enum import Enum
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class Verdict(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    VACUOUS = "vacuous"


class ConcentrationEstimate(BaseModel):
    """Monte Carlo shell probability with its exact binomial interval and the inequality's bound."""

    model_config = ConfigDict(frozen=True)

    inequality: Literal["gaussian_shell", "leave_one_out_shell", "random_radius_shell"]
    set_id: str
    eps1: float = Field(ge=0)
    eps2: float = Field(default=0.0, ge=0)
    gamma: Optional[float] = None
    p_hat: float = Field(ge=0, le=1)
    ci_low: float
    ci_high: float
    bound: float
    successes: int = Field(ge=0)
    samples: int = Field(ge=1)
    seed: int
    verdict: Verdict

    @model_validator(mode="after")
    def _interval_brackets_estimate(self) -> "ConcentrationEstimate":
        if not self.ci_low <= self.p_hat <= self.ci_high:
            raise ValueError("confidence interval must contain p_hat")
        return self

    @property
    def ci_width(self) -> float:
        return self.ci_high - self.ci_low


class SetDiscrepancy(BaseModel):
    model_config = ConfigDict(frozen=True)

    set_id: str
    p_w: float
    p_z: float
    p_z_method: Literal["exact", "monte_carlo"]
    discrepancy: float = Field(ge=0)
    std_error: float = Field(ge=0)
    half_width: float = Field(ge=0)


class DiscrepancyEstimate(BaseModel):
    """Largest observed |P(W in A) - P(Z in A)| over probed sets; a lower bound on the true supremum."""

    model_config = ConfigDict(frozen=True)

    family: str
    set_family: str
    sup_hat: float = Field(ge=0, le=1)
    worst_set: str
    half_width: float = Field(ge=0)
    std_error: float = Field(ge=0)
    bound: float = Field(gt=0)
    gamma: float
    samples: int
    seed: int
    records: List[SetDiscrepancy]
    verdict: Verdict
    exploration_value: Optional[float] = None


class PropertyTally(BaseModel):
    """Counts of probes and violations of one numerical property on one scenario."""

    model_config = ConfigDict(frozen=True)

    property: str
    scenario: str
    probes: int = Field(ge=0)
    violations: int = Field(ge=0)
    worst_margin: float
    tolerance: float
    value: Optional[float] = None
    verdict: Verdict


class SmoothingGapEstimate(BaseModel):
    """Both sides of the smoothing inequality on a single set."""

    model_config = ConfigDict(frozen=True)

    set_id: str
    eps: float
    gamma: float
    indicator_gap: float
    signed_gap: float
    indicator_half_width: float
    smooth_gap: float
    smooth_half_width: float
    lower_smooth_gap: float
    lower_smooth_half_width: float
    rhs: float
    samples: int
    seed: int
    verdict: Verdict


class IdentityEstimate(BaseModel):
    """Monte Carlo sides of sum_j E Z_j f_j(Z) = sum_j E d_j f_j(Z)."""

    model_config = ConfigDict(frozen=True)

    set_id: str
    eps: float
    lhs: float
    lhs_std_error: float
    rhs: float
    rhs_std_error: float
    samples: int
    seed: int
    verdict: Verdict
