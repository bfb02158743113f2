from dataclasses import dataclass
from typing import Annotated, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

UNIT_NORM_TOL = 1e-12


class _SetBase(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    label: Optional[str] = None


class HalfSpace(_SetBase):
    """{x : u.x <= d} with a unit normal u."""

    kind: Literal["halfspace"] = "halfspace"
    normal: Tuple[float, ...] = Field(min_length=1)
    offset: float

    @field_validator("normal")
    @classmethod
    def _unit_normal(cls, normal: Tuple[float, ...]) -> Tuple[float, ...]:
        u = np.asarray(normal, dtype=float)
        if not np.all(np.isfinite(u)):
            raise ValueError("normal must be finite")
        if abs(np.linalg.norm(u) - 1.0) > UNIT_NORM_TOL:
            raise ValueError(f"normal must be a unit vector, got norm {np.linalg.norm(u)!r}")
        return normal

    @field_validator("offset")
    @classmethod
    def _finite_offset(cls, offset: float) -> float:
        if not np.isfinite(offset):
            raise ValueError("offset must be finite")
        return offset

    @classmethod
    def from_direction(cls, direction, offset: float, label: Optional[str] = None) -> "HalfSpace":
        """Build a half-space from any nonzero direction, normalizing it and the offset."""
        u = np.asarray(direction, dtype=float)
        norm = float(np.linalg.norm(u))
        if norm == 0.0:
            raise ValueError("direction must be nonzero")
        u = u / norm
        return cls(normal=tuple(float(c) for c in u), offset=float(offset) / norm, label=label)

    @property
    def dim(self) -> int:
        return len(self.normal)

    @property
    def normal_array(self) -> np.ndarray:
        return np.asarray(self.normal, dtype=float)


class Ball(_SetBase):
    kind: Literal["ball"] = "ball"
    center: Tuple[float, ...] = Field(min_length=1)
    radius: float = Field(ge=0)

    @field_validator("center")
    @classmethod
    def _finite_center(cls, center: Tuple[float, ...]) -> Tuple[float, ...]:
        if not np.all(np.isfinite(center)):
            raise ValueError("center must be finite")
        return center

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def center_array(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)


class Polytope(_SetBase):
    """Intersection of finitely many half-spaces."""

    kind: Literal["polytope"] = "polytope"
    faces: List[HalfSpace] = Field(min_length=1)

    @model_validator(mode="after")
    def _same_dimension(self) -> "Polytope":
        dims = {face.dim for face in self.faces}
        if len(dims) != 1:
            raise ValueError(f"polytope faces disagree on dimension: {sorted(dims)}")
        return self

    @classmethod
    def box(cls, lower, upper, label: Optional[str] = None) -> "Polytope":
        """Axis-aligned box [lower, upper] as a polytope."""
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        faces = []
        for j in range(lower.size):
            e = np.zeros(lower.size)
            e[j] = 1.0
            faces.append(HalfSpace(normal=tuple(e), offset=float(upper[j])))
            faces.append(HalfSpace(normal=tuple(-e), offset=float(-lower[j])))
        return cls(faces=faces, label=label)

    @classmethod
    def random(
        cls,
        k: int,
        faces: int,
        seed: int,
        offset_range: Tuple[float, float] = (0.5, 1.5),
        label: Optional[str] = None,
    ) -> "Polytope":
        """Random polytope with Gaussian-direction unit normals and positive offsets.

        The origin is always interior, so the polytope is never empty.
        """
        rng = np.random.default_rng(seed)
        halfspaces = []
        for _ in range(faces):
            direction = rng.standard_normal(k)
            while np.linalg.norm(direction) < 1e-8:
                direction = rng.standard_normal(k)
            u = direction / np.linalg.norm(direction)
            d = rng.uniform(*offset_range)
            halfspaces.append(HalfSpace(normal=tuple(float(c) for c in u), offset=float(d)))
        return cls(faces=halfspaces, label=label)

    @property
    def dim(self) -> int:
        return self.faces[0].dim

    @property
    def normal_matrix(self) -> np.ndarray:
        return np.array([face.normal for face in self.faces], dtype=float)

    @property
    def offsets(self) -> np.ndarray:
        return np.array([face.offset for face in self.faces], dtype=float)


class Intersection(_SetBase):
    kind: Literal["intersection"] = "intersection"
    members: List["ConvexSet"] = Field(min_length=1)

    @model_validator(mode="after")
    def _same_dimension(self) -> "Intersection":
        dims = {member.dim for member in self.members}
        if len(dims) != 1:
            raise ValueError(f"intersection members disagree on dimension: {sorted(dims)}")
        return self

    @property
    def dim(self) -> int:
        return self.members[0].dim


ConvexSet = Annotated[Union[HalfSpace, Polytope, Ball, Intersection], Field(discriminator="kind")]
Intersection.model_rebuild()

Atom = Union[HalfSpace, Ball]


def atoms_of(convex_set) -> List[Atom]:
    """Flatten a set into the half-spaces and balls whose intersection it is."""
    if isinstance(convex_set, (HalfSpace, Ball)):
        return [convex_set]
    if isinstance(convex_set, Polytope):
        return list(convex_set.faces)
    atoms: List[Atom] = []
    for member in convex_set.members:
        atoms.extend(atoms_of(member))
    return atoms


def describe(convex_set) -> str:
    if convex_set.label:
        return convex_set.label
    if isinstance(convex_set, HalfSpace):
        return f"halfspace(u={np.round(convex_set.normal, 4).tolist()}, d={convex_set.offset:g})"
    if isinstance(convex_set, Ball):
        return f"ball(c={np.round(convex_set.center, 4).tolist()}, r={convex_set.radius:g})"
    if isinstance(convex_set, Polytope):
        return f"polytope({len(convex_set.faces)} faces)"
    return f"intersection({len(convex_set.members)} members)"


@dataclass(frozen=True)
class ProjectionResult:
    nearest: np.ndarray
    distance: float
    converged: bool
    iterations: int


@dataclass(frozen=True)
class BatchProjection:
    """Row-wise projection of an (m, k) array of points."""

    nearest: np.ndarray
    distance: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray
