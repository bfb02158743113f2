from typing import NamedTuple

from pydantic import BaseModel, ConfigDict, Field

from src.models.geometry import ConvexSet


class SteinField(BaseModel):
    """The vector field f(A, eps): zero on A, x - x0 inside the eps-shell, capped at length eps beyond it."""

    model_config = ConfigDict(frozen=True)

    convex_set: ConvexSet
    eps: float = Field(gt=0)

    @property
    def dim(self) -> int:
        return self.convex_set.dim


class SmoothedIndicator(BaseModel):
    """h_eps(w) = psi(d(w, A) / eps)."""

    model_config = ConfigDict(frozen=True)

    convex_set: ConvexSet
    eps: float = Field(gt=0)

    @property
    def dim(self) -> int:
        return self.convex_set.dim


class SteinSolution(BaseModel):
    """Quadrature description of the Stein-equation solution for a smoothed indicator."""

    model_config = ConfigDict(frozen=True)

    indicator: SmoothedIndicator
    n_s: int = Field(default=64, ge=16)
    n_z: int = Field(default=262_144, ge=1_000)
    seed: int = Field(default=0, ge=0)

    @property
    def dim(self) -> int:
        return self.indicator.dim


class QuadratureValue(NamedTuple):
    value: float
    std_error: float
