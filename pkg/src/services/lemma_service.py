import logging
from typing import List, Optional

import numpy as np

from src.config import NumericsSettings, settings as default_settings
from src.models.estimates import PropertyTally, Verdict
from src.models.geometry import Ball, HalfSpace, Polytope, describe
from src.models.stein import SmoothedIndicator, SteinField
from src.services.geometry_service import GeometryService
from src.services.stein_service import SteinService
from src.services.stream_service import TAG_PROBES, StreamService

logger = logging.getLogger(__name__)

FD_STEP = 1e-5


def _tally(name: str, scenario: str, margins: np.ndarray, tolerance: float) -> PropertyTally:
    """Margins are (observed - threshold); a negative margin is a violation."""
    violations = int(np.sum(margins < 0))
    worst = float(margins.min()) if margins.size else float("inf")
    if violations:
        logger.error(f"{name} on {scenario}: {violations} violations, worst margin {worst:.3e}")
    return PropertyTally(
        property=name,
        scenario=scenario,
        probes=int(margins.size),
        violations=violations,
        worst_margin=worst if margins.size else 0.0,
        tolerance=tolerance,
        verdict=Verdict.FAIL if violations else Verdict.PASS,
    )


class LemmaService:
    """Numerical checks of the pointwise properties of f(A, eps) and h_eps."""

    @staticmethod
    def scenario_sets(k: int, seed: int) -> list:
        """Half-space through the origin, unit ball and a random 6-face polytope in R^k."""
        rng = StreamService.generator(seed, TAG_PROBES, k)
        direction = rng.standard_normal(k)
        return [
            HalfSpace.from_direction(direction, 0.0, label=f"halfspace-k{k}"),
            Ball(center=tuple([0.0] * k), radius=1.0, label=f"ball-k{k}"),
            Polytope.random(k, 6, seed=int(rng.integers(0, 2**31)), label=f"polytope-k{k}"),
        ]

    @staticmethod
    def sample_points(convex_set, eps: float, rng: np.random.Generator, m: int) -> np.ndarray:
        """Gaussian cloud around the origin wide enough to cover A, its eps-shell and beyond."""
        scale = 1.5 + 2.0 * eps
        return scale * rng.standard_normal((m, convex_set.dim))

    @staticmethod
    def sample_shell(convex_set, lo: float, hi: float, rng: np.random.Generator, m: int,
                     cfg: Optional[NumericsSettings] = None) -> np.ndarray:
        """Points at distance uniform in [lo, hi] from A, placed on normal rays so the nearest point is known."""
        cfg = cfg or default_settings
        out = np.empty((0, convex_set.dim))
        while out.shape[0] < m:
            y = LemmaService.sample_points(convex_set, hi, rng, 2 * m)
            batch = GeometryService.project_many(convex_set, y, cfg)
            outside = batch.distance > 1e-6
            direction = (y[outside] - batch.nearest[outside]) / batch.distance[outside][:, None]
            t = rng.uniform(lo, hi, size=direction.shape[0])
            out = np.vstack([out, batch.nearest[outside] + t[:, None] * direction])
        return out[:m]

    @staticmethod
    def check_norm_bound(field: SteinField, points: np.ndarray, cfg: NumericsSettings, scenario: str, tol: float = 1e-8) -> PropertyTally:
        norms = np.linalg.norm(SteinService.eval_field(field, points, cfg), axis=1)
        return _tally("norm_bound", scenario, field.eps + tol - norms, tol)

    @staticmethod
    def check_monotone(field: SteinField, eta: np.ndarray, xi: np.ndarray, cfg: NumericsSettings, scenario: str, tol: float = 1e-8) -> PropertyTally:
        f_shift = SteinService.eval_field(field, eta + xi, cfg)
        f_base = SteinService.eval_field(field, eta, cfg)
        inner = np.sum(xi * (f_shift - f_base), axis=1)
        return _tally("monotone", scenario, inner + tol, tol)

    @staticmethod
    def _difference_quotients(field: SteinField, points: np.ndarray, cfg: NumericsSettings):
        """(m, k) quotients (f_i(x + h e_i) - f_i(x))/h, raw differences, and a per-(point, i) validity mask."""
        m, k = points.shape
        convex_set = field.convex_set
        base = SteinService.eval_field(field, points, cfg)
        d = GeometryService.distance_many(convex_set, points, cfg)
        margin = 10.0 * FD_STEP
        interior = GeometryService.in_erosion_many(convex_set, points, margin)
        away = interior | ((d > margin) & (np.abs(d - field.eps) > margin))

        quotients = np.empty((m, k))
        differences = np.empty((m, k))
        valid = np.repeat(away[:, None], k, axis=1)
        faces_base = None
        if isinstance(convex_set, (Polytope, HalfSpace)):
            faces_base = GeometryService.active_faces(convex_set, GeometryService.project_many(convex_set, points, cfg).nearest)
        for i in range(k):
            shifted = points.copy()
            shifted[:, i] += FD_STEP
            values = SteinService.eval_field(field, shifted, cfg)
            differences[:, i] = values[:, i] - base[:, i]
            quotients[:, i] = differences[:, i] / FD_STEP
            if faces_base is not None:
                faces_shift = GeometryService.active_faces(convex_set, GeometryService.project_many(convex_set, shifted, cfg).nearest)
                valid[:, i] &= np.all(faces_base == faces_shift, axis=1)
        return quotients, differences, valid

    @staticmethod
    def check_diagonal_derivative(field: SteinField, points: np.ndarray, cfg: NumericsSettings, scenario: str, tol: float = 1e-6) -> PropertyTally:
        quotients, _, valid = LemmaService._difference_quotients(field, points, cfg)
        return _tally("diagonal_derivative", scenario, quotients[valid] + tol, tol)

    @staticmethod
    def check_coordinate_lipschitz(field: SteinField, points: np.ndarray, cfg: NumericsSettings, scenario: str, tol: float = 1e-8) -> PropertyTally:
        _, differences, _ = LemmaService._difference_quotients(field, points, cfg)
        return _tally("coordinate_lipschitz", scenario, (FD_STEP + tol - np.abs(differences)).ravel(), tol)

    @staticmethod
    def check_cosine_bound(field: SteinField, points: np.ndarray, cfg: NumericsSettings, scenario: str, tol: float = 1e-3) -> PropertyTally:
        """Points are expected inside the open shell; the quotient must dominate cos^2 of the angle to each axis."""
        quotients, _, valid = LemmaService._difference_quotients(field, points, cfg)
        nearest = GeometryService.project_many(field.convex_set, points, cfg).nearest
        direction = points - nearest
        cos_sq = direction**2 / np.sum(direction**2, axis=1, keepdims=True)
        return _tally("cosine_bound", scenario, (quotients - cos_sq)[valid] + tol, tol)

    @staticmethod
    def check_smoothed_sandwich(indicator: SmoothedIndicator, points: np.ndarray, cfg: NumericsSettings, scenario: str, tol: float = 1e-9) -> PropertyTally:
        h = SteinService.smoothed_many(indicator, points, cfg)
        d = GeometryService.distance_many(indicator.convex_set, points, cfg)
        lower = (d <= 0.0).astype(float)
        upper = (d <= indicator.eps + cfg.tol_mem).astype(float)
        margins = np.minimum(h - lower, upper - h) + tol
        return _tally("smoothed_sandwich", scenario, margins, tol)

    @staticmethod
    def check_smoothed_gradient(indicator: SmoothedIndicator, points: np.ndarray, rng: np.random.Generator,
                                cfg: NumericsSettings, scenario: str, tol: float = 1e-3) -> List[PropertyTally]:
        eps = indicator.eps
        grads = SteinService.grad_smoothed(indicator, points, cfg)
        bound = _tally("smoothed_gradient_bound", scenario, 2.0 / eps + tol - np.linalg.norm(grads, axis=1), tol)

        step = rng.standard_normal(points.shape) * (0.1 * eps)
        grads_shift = SteinService.grad_smoothed(indicator, points + step, cfg)
        lipschitz = _tally(
            "smoothed_gradient_lipschitz",
            scenario,
            8.0 * np.linalg.norm(step, axis=1) / eps**2 + tol - np.linalg.norm(grads_shift - grads, axis=1),
            tol,
        )
        return [bound, lipschitz]

    @staticmethod
    def run_scenario(convex_set, eps: float, points: int, probes: int, seed: int,
                     settings: Optional[NumericsSettings] = None) -> List[PropertyTally]:
        """
        Every field and smoothing property on one (A, eps) scenario.

        Args:
            convex_set: the set A
            eps: shell width
            points: sample size for the norm, monotonicity and smoothing checks
            probes: sample size for the finite-difference checks
            seed: experiment seed

        Returns:
            List[PropertyTally]: one tally per property
        """
        cfg = settings or default_settings
        field = SteinField(convex_set=convex_set, eps=eps)
        indicator = SmoothedIndicator(convex_set=convex_set, eps=eps)
        scenario = f"{describe(convex_set)} eps={eps:g}"
        rng = StreamService.generator(seed, TAG_PROBES, convex_set.dim, int(round(eps * 1e6)))
        logger.info(f"lemma suite: {scenario}")

        cloud = LemmaService.sample_points(convex_set, eps, rng, points)
        eta = LemmaService.sample_points(convex_set, eps, rng, points)
        xi = rng.standard_normal(eta.shape) * np.exp(rng.uniform(np.log(1e-3), np.log(3.0), size=(points, 1)))

        probe_cloud = np.vstack([
            LemmaService.sample_points(convex_set, eps, rng, probes // 2),
            LemmaService.sample_shell(convex_set, 0.0, 2.0 * eps, rng, probes - probes // 2, cfg),
        ])
        band = LemmaService.sample_shell(convex_set, 0.05 * eps, 0.95 * eps, rng, probes, cfg)
        gradient_points = cloud[: min(points, probes)]

        tallies = [
            LemmaService.check_norm_bound(field, cloud, cfg, scenario),
            LemmaService.check_monotone(field, eta, xi, cfg, scenario),
            LemmaService.check_diagonal_derivative(field, probe_cloud, cfg, scenario),
            LemmaService.check_coordinate_lipschitz(field, probe_cloud, cfg, scenario),
            LemmaService.check_cosine_bound(field, band, cfg, scenario),
            LemmaService.check_smoothed_sandwich(indicator, cloud, cfg, scenario),
        ]
        tallies.extend(LemmaService.check_smoothed_gradient(indicator, gradient_points, rng, cfg, scenario))
        return tallies
