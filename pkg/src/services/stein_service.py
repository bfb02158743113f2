import logging
from typing import Optional, Union

import numpy as np

from src.config import NumericsSettings, settings as default_settings
from src.exceptions import NonConvergenceError
from src.models.geometry import ProjectionResult
from src.models.stein import SmoothedIndicator, SteinField
from src.services.geometry_service import GeometryService

logger = logging.getLogger(__name__)


class SteinService:
    """Evaluation of the field f(A, eps) and the smoothed indicator h_eps."""

    @staticmethod
    def eval_field(field: SteinField, x, settings: Optional[NumericsSettings] = None) -> np.ndarray:
        """
        Evaluate f(A, eps) at one point (shape (k,)) or at every row of an (m, k) array.

        For x in the closure of A the value is 0; for 0 < d(x, A) <= eps it is
        x - x0; beyond the shell it is eps (x - x0)/|x - x0|, i.e. x1 - x0 with
        x1 the point of the outer boundary on the ray from x0 through x.
        """
        cfg = settings or default_settings
        arr = np.asarray(x, dtype=float)
        single = arr.ndim == 1
        points = np.atleast_2d(arr)
        batch = GeometryService.project_many(field.convex_set, points, cfg)
        if not np.all(batch.converged):
            if single:
                raise NonConvergenceError(
                    ProjectionResult(batch.nearest[0], float(batch.distance[0]), False, int(batch.iterations[0]))
                )
            logger.warning(f"eval_field: {int(np.sum(~batch.converged))} unconverged projections")

        displacement = points - batch.nearest
        d = batch.distance
        scale = np.ones_like(d)
        far = d > field.eps
        scale[far] = field.eps / d[far]
        values = displacement * scale[:, None]
        return values[0] if single else values

    @staticmethod
    def psi(t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        """1 below 0, 1 - 2t^2 on [0, 1/2), 2(1 - t)^2 on [1/2, 1), 0 from 1 on."""
        arr = np.asarray(t, dtype=float)
        values = np.select(
            [arr < 0.0, arr < 0.5, arr < 1.0],
            [np.ones_like(arr), 1.0 - 2.0 * arr**2, 2.0 * (1.0 - arr) ** 2],
            default=0.0,
        )
        return float(values) if values.ndim == 0 else values

    @staticmethod
    def psi_prime(t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        arr = np.asarray(t, dtype=float)
        values = np.select(
            [arr < 0.0, arr < 0.5, arr < 1.0],
            [np.zeros_like(arr), -4.0 * arr, -4.0 * (1.0 - arr)],
            default=0.0,
        )
        return float(values) if values.ndim == 0 else values

    @staticmethod
    def smoothed_many(indicator: SmoothedIndicator, w, settings: Optional[NumericsSettings] = None) -> np.ndarray:
        d = GeometryService.distance_many(indicator.convex_set, w, settings)
        return SteinService.psi(d / indicator.eps)

    @staticmethod
    def eval_smoothed(indicator: SmoothedIndicator, w, settings: Optional[NumericsSettings] = None) -> float:
        """h_eps(w): 1 on A, 0 outside A^eps."""
        d = GeometryService.distance(indicator.convex_set, w, settings)
        return float(SteinService.psi(d / indicator.eps))

    @staticmethod
    def grad_smoothed(indicator: SmoothedIndicator, w, settings: Optional[NumericsSettings] = None) -> np.ndarray:
        """Central-difference gradient of h_eps with step grad_step * max(1, |w|); rows of w are independent points."""
        cfg = settings or default_settings
        arr = np.asarray(w, dtype=float)
        single = arr.ndim == 1
        points = np.atleast_2d(arr)
        steps = cfg.grad_step * np.maximum(1.0, np.linalg.norm(points, axis=1))
        grad = np.empty_like(points)
        for j in range(points.shape[1]):
            shift = np.zeros_like(points)
            shift[:, j] = steps
            upper = SteinService.smoothed_many(indicator, points + shift, cfg)
            lower = SteinService.smoothed_many(indicator, points - shift, cfg)
            grad[:, j] = (upper - lower) / (2.0 * steps)
        return grad[0] if single else grad
