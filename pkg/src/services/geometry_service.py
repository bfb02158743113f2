import logging
from typing import Optional, Tuple

import numpy as np
import quadprog
from scipy.optimize import linprog

from src.config import NumericsSettings, settings as default_settings
from src.exceptions import DimensionMismatchError, NonConvergenceError, UnsupportedSetError
from src.models.geometry import (
    Ball,
    BatchProjection,
    HalfSpace,
    Intersection,
    Polytope,
    ProjectionResult,
    atoms_of,
)

logger = logging.getLogger(__name__)


def _as_points(convex_set, x) -> Tuple[np.ndarray, bool]:
    """Coerce x to an (m, k) float array; the flag says whether x was a single point."""
    arr = np.asarray(x, dtype=float)
    single = arr.ndim <= 1
    arr = np.atleast_2d(arr) if arr.ndim == 1 else arr.reshape(-1, 1) if arr.ndim == 0 else arr
    if arr.shape[1] != convex_set.dim:
        raise DimensionMismatchError(convex_set.dim, arr.shape[1])
    if not np.all(np.isfinite(arr)):
        raise ValueError("points must have finite coordinates")
    return arr, single


def _project_halfspace(halfspace: HalfSpace, points: np.ndarray) -> np.ndarray:
    u = halfspace.normal_array
    excess = np.maximum(points @ u - halfspace.offset, 0.0)
    return points - excess[:, None] * u


def _project_ball(ball: Ball, points: np.ndarray) -> np.ndarray:
    offsets = points - ball.center_array
    norms = np.linalg.norm(offsets, axis=1)
    outside = norms > ball.radius
    result = points.copy()
    if np.any(outside):
        scale = ball.radius / norms[outside]
        result[outside] = ball.center_array + offsets[outside] * scale[:, None]
    return result


def _project_atom(atom, points: np.ndarray) -> np.ndarray:
    if isinstance(atom, HalfSpace):
        return _project_halfspace(atom, points)
    return _project_ball(atom, points)


class GeometryService:
    """Membership, dilation/erosion and Euclidean projection for convex sets."""

    @staticmethod
    def _dykstra(atoms, points: np.ndarray, cfg: NumericsSettings):
        """Dykstra's cyclic projections onto the intersection of ``atoms``.

        A row stops once one full cycle moves both the iterate and every
        correction term by less than ``tol_proj``; converged rows leave the
        working set.
        """
        m = points.shape[0]
        x = points.copy()
        increments = [np.zeros_like(points) for _ in atoms]
        converged = np.zeros(m, dtype=bool)
        iterations = np.zeros(m, dtype=int)
        active = np.arange(m)

        for it in range(1, cfg.max_iter + 1):
            xa = x[active]
            previous = xa
            change = np.zeros(active.size)
            for j, atom in enumerate(atoms):
                old = increments[j][active]
                y = xa + old
                xa = _project_atom(atom, y)
                increments[j][active] = y - xa
                change = np.maximum(change, np.linalg.norm(y - xa - old, axis=1))
            x[active] = xa
            step = np.linalg.norm(xa - previous, axis=1)
            iterations[active] = it
            done = (step < cfg.tol_proj) & (change < cfg.tol_proj)
            converged[active[done]] = True
            active = active[~done]
            if active.size == 0:
                break

        if active.size:
            logger.warning(f"Dykstra projection: {active.size} of {m} points unconverged after {cfg.max_iter} cycles")
        return x, converged, iterations

    @staticmethod
    def _solve_qp(normals: np.ndarray, offsets: np.ndarray, point: np.ndarray) -> np.ndarray:
        """min |y - point|^2 subject to normals @ y <= offsets."""
        k = point.size
        return quadprog.solve_qp(np.eye(k), point.copy(), -normals.T.copy(), -offsets.copy(), 0)[0]

    @staticmethod
    def _refine_polytope(normals: np.ndarray, offsets: np.ndarray, points: np.ndarray, approx: np.ndarray,
                         cfg: NumericsSettings) -> Tuple[np.ndarray, np.ndarray]:
        """Exact polytope projection seeded by the Dykstra iterate.

        The faces tight at ``approx`` give a candidate by equality-constrained
        least squares. A candidate is accepted when it satisfies the KKT
        conditions: feasible, with ``point - candidate`` in the cone of the
        tight normals. Rejected rows are solved by quadprog.
        """
        m = points.shape[0]
        refined = approx.copy()
        converged = np.ones(m, dtype=bool)
        outside = np.any(points @ normals.T - offsets > 0, axis=1)
        refined[~outside] = points[~outside]
        if not np.any(outside):
            return refined, converged

        slack = approx @ normals.T - offsets
        tight = slack >= -cfg.polish_tol
        rows = np.flatnonzero(outside)
        accepted = np.zeros(m, dtype=bool)
        patterns, inverse = np.unique(tight[rows], axis=0, return_inverse=True)
        inverse = np.asarray(inverse).reshape(-1)
        for p, pattern in enumerate(patterns):
            if not pattern.any():
                continue
            idx = rows[inverse == p]
            U = normals[pattern]
            d = offsets[pattern]
            multipliers = (points[idx] @ U.T - d) @ np.linalg.pinv(U @ U.T).T
            candidate = points[idx] - multipliers @ U
            scale = 1.0 + np.linalg.norm(points[idx], axis=1)
            feasible = np.all(candidate @ normals.T - offsets <= (cfg.tol_proj * scale)[:, None], axis=1)
            on_faces = np.all(np.abs(candidate @ U.T - d) <= (cfg.tol_proj * scale)[:, None], axis=1)
            dual_ok = np.all(multipliers >= -cfg.tol_proj, axis=1)
            ok = feasible & on_faces & dual_ok
            refined[idx[ok]] = candidate[ok]
            accepted[idx[ok]] = True

        fallback = np.flatnonzero(outside & ~accepted)
        if fallback.size:
            logger.debug(f"polytope projection: {fallback.size} of {rows.size} rows solved by quadprog")
        for i in fallback:
            try:
                refined[i] = GeometryService._solve_qp(normals, offsets, points[i])
            except ValueError as e:
                logger.warning(f"quadprog failed on row {i}: {e}")
                converged[i] = False
        return refined, converged

    @staticmethod
    def project_many(convex_set, x, settings: Optional[NumericsSettings] = None) -> BatchProjection:
        """Project every row of x onto the closure of the set."""
        cfg = settings or default_settings
        points, _ = _as_points(convex_set, x)
        m = points.shape[0]

        if isinstance(convex_set, (HalfSpace, Ball)):
            nearest = _project_atom(convex_set, points)
            converged = np.ones(m, dtype=bool)
            iterations = np.ones(m, dtype=int)
        else:
            atoms = atoms_of(convex_set)
            nearest, converged, iterations = GeometryService._dykstra(atoms, points, cfg)
            if cfg.polish and all(isinstance(a, HalfSpace) for a in atoms):
                normals = np.array([a.normal for a in atoms], dtype=float)
                offsets = np.array([a.offset for a in atoms], dtype=float)
                nearest, converged = GeometryService._refine_polytope(normals, offsets, points, nearest, cfg)

        distance = np.linalg.norm(points - nearest, axis=1)
        return BatchProjection(nearest=nearest, distance=distance, converged=converged, iterations=iterations)

    @staticmethod
    def project(convex_set, x, settings: Optional[NumericsSettings] = None) -> ProjectionResult:
        """
        Nearest point of the closed set to x.

        Half-spaces and balls use closed forms; polytopes and intersections use
        Dykstra's algorithm. Exhausting ``max_iter`` returns the best iterate
        with ``converged=False`` rather than raising.
        """
        batch = GeometryService.project_many(convex_set, np.atleast_1d(np.asarray(x, dtype=float))[None, :], settings)
        result = ProjectionResult(
            nearest=batch.nearest[0],
            distance=float(batch.distance[0]),
            converged=bool(batch.converged[0]),
            iterations=int(batch.iterations[0]),
        )
        if not result.converged:
            logger.warning(f"Projection onto {type(convex_set).__name__} did not converge")
        return result

    @staticmethod
    def distance_many(convex_set, x, settings: Optional[NumericsSettings] = None, strict: bool = False) -> np.ndarray:
        """Row-wise d(x, A); unconverged rows raise when ``strict``, otherwise they are counted and logged."""
        batch = GeometryService.project_many(convex_set, x, settings)
        unconverged = int(np.count_nonzero(~batch.converged))
        if unconverged and strict:
            bad = int(np.flatnonzero(~batch.converged)[0])
            raise NonConvergenceError(
                ProjectionResult(batch.nearest[bad], float(batch.distance[bad]), False, int(batch.iterations[bad]))
            )
        if unconverged:
            logger.warning(f"distance to {type(convex_set).__name__}: {unconverged} of {batch.distance.size} "
                           f"rows unconverged, using best iterates")
        return batch.distance

    @staticmethod
    def distance(convex_set, x, settings: Optional[NumericsSettings] = None) -> float:
        """d(x, A); raises NonConvergenceError when the projection did not converge."""
        result = GeometryService.project(convex_set, x, settings)
        if not result.converged:
            raise NonConvergenceError(result)
        return result.distance

    @staticmethod
    def contains_many(convex_set, x, settings: Optional[NumericsSettings] = None) -> np.ndarray:
        cfg = settings or default_settings
        points, _ = _as_points(convex_set, x)
        if isinstance(convex_set, HalfSpace):
            return points @ convex_set.normal_array <= convex_set.offset + cfg.tol_mem
        if isinstance(convex_set, Ball):
            return np.linalg.norm(points - convex_set.center_array, axis=1) <= convex_set.radius + cfg.tol_mem
        if isinstance(convex_set, Polytope):
            return np.all(points @ convex_set.normal_matrix.T <= convex_set.offsets + cfg.tol_mem, axis=1)
        inside = np.ones(points.shape[0], dtype=bool)
        for member in convex_set.members:
            inside &= GeometryService.contains_many(member, points, cfg)
        return inside

    @staticmethod
    def contains(convex_set, x, settings: Optional[NumericsSettings] = None) -> bool:
        """Closure membership with tolerance ``tol_mem``."""
        return bool(GeometryService.contains_many(convex_set, np.atleast_1d(np.asarray(x, dtype=float))[None, :], settings)[0])

    @staticmethod
    def in_dilation_many(convex_set, x, eps: float, settings: Optional[NumericsSettings] = None) -> np.ndarray:
        if eps < 0:
            raise ValueError("eps must be non-negative")
        cfg = settings or default_settings
        if eps == 0:
            return GeometryService.contains_many(convex_set, x, cfg)
        return GeometryService.distance_many(convex_set, x, cfg) <= eps + cfg.tol_mem

    @staticmethod
    def in_dilation(convex_set, x, eps: float, settings: Optional[NumericsSettings] = None) -> bool:
        """x in A^eps = {d(x, A) <= eps}."""
        if eps < 0:
            raise ValueError("eps must be non-negative")
        cfg = settings or default_settings
        if eps == 0:
            return GeometryService.contains(convex_set, x, cfg)
        return GeometryService.distance(convex_set, x, cfg) <= eps + cfg.tol_mem

    @staticmethod
    def in_erosion_many(convex_set, x, eps: float) -> np.ndarray:
        if eps < 0:
            raise ValueError("eps must be non-negative")
        if isinstance(convex_set, Intersection):
            raise UnsupportedSetError("erosion of a general intersection is not supported")
        points, _ = _as_points(convex_set, x)
        if isinstance(convex_set, HalfSpace):
            return points @ convex_set.normal_array <= convex_set.offset - eps
        if isinstance(convex_set, Polytope):
            return np.all(points @ convex_set.normal_matrix.T <= convex_set.offsets - eps, axis=1)
        # an empty erosion (eps > r) is false everywhere
        return np.linalg.norm(points - convex_set.center_array, axis=1) <= convex_set.radius - eps

    @staticmethod
    def in_erosion(convex_set, x, eps: float) -> bool:
        """x in A^{-eps} = {x : B(x, eps) inside A}; unit normals make the face test exact."""
        return bool(GeometryService.in_erosion_many(convex_set, np.atleast_1d(np.asarray(x, dtype=float))[None, :], eps)[0])

    @staticmethod
    def active_faces(convex_set, nearest, tol: float = 1e-9) -> np.ndarray:
        """Boolean (m, faces) mask of polytope faces tight at the given nearest points."""
        if isinstance(convex_set, HalfSpace):
            convex_set = Polytope(faces=[convex_set])
        if not isinstance(convex_set, Polytope):
            raise UnsupportedSetError("active faces are defined for half-spaces and polytopes only")
        points, _ = _as_points(convex_set, nearest)
        return points @ convex_set.normal_matrix.T - convex_set.offsets >= -tol

    @staticmethod
    def erode(convex_set, r: float):
        """
        The erosion A^{-r} as a set of the same kind, or None when it is empty.

        Half-spaces and polytope faces move inward by r (exact for unit normals);
        a ball shrinks its radius.
        """
        if r < 0:
            raise ValueError("erosion radius must be non-negative")
        if isinstance(convex_set, Intersection):
            raise UnsupportedSetError("erosion of a general intersection is not supported")
        if isinstance(convex_set, HalfSpace):
            return convex_set.model_copy(update={"offset": convex_set.offset - r})
        if isinstance(convex_set, Ball):
            if convex_set.radius < r:
                return None
            return convex_set.model_copy(update={"radius": convex_set.radius - r})
        faces = [face.model_copy(update={"offset": face.offset - r}) for face in convex_set.faces]
        eroded = Polytope(faces=faces, label=convex_set.label)
        feasibility = linprog(np.zeros(eroded.dim), A_ub=eroded.normal_matrix, b_ub=eroded.offsets,
                              bounds=[(None, None)] * eroded.dim, method="highs")
        if feasibility.status == 2:
            return None
        return eroded
