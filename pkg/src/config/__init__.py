from pydantic import BaseModel, ConfigDict, Field

__version__ = "1.0.0"
SCHEMA_VERSION = "1.0"
INTERFACE_VERSION = "1.0"


class NumericsSettings(BaseModel):
    """Tolerances and quadrature/sampling budgets shared by every service."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    # projection and membership
    tol_proj: float = Field(default=1e-10, gt=0)
    tol_mem: float = Field(default=1e-9, ge=0)
    max_iter: int = Field(default=100_000, ge=1)
    polish: bool = True
    polish_tol: float = Field(default=1e-8, gt=0)

    # Monte Carlo
    block_size: int = Field(default=65_536, ge=1)
    confidence: float = Field(default=0.999, gt=0, lt=1)

    # Stein solution quadrature
    n_s: int = Field(default=64, ge=16)
    n_z: int = Field(default=262_144, ge=1_000)
    t_min: float = Field(default=1e-6, gt=0)
    t_max: float = Field(default=36.0, gt=0)
    fd_step: float = Field(default=1e-3, gt=0)
    grad_step: float = Field(default=1e-6, gt=0)

    @classmethod
    def get_settings(cls) -> "NumericsSettings":
        return cls()

    def with_overrides(self, overrides: dict | None = None) -> "NumericsSettings":
        """Return a copy with the given fields replaced (validated)."""
        if not overrides:
            return self
        return NumericsSettings.model_validate({**self.model_dump(), **overrides})


# Create a singleton instance of settings
settings = NumericsSettings.get_settings()
