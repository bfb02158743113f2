import logging
import math
from typing import Optional, Tuple

import numpy as np
from scipy import integrate, stats

from src.config import NumericsSettings, settings as default_settings
from src.exceptions import QuadratureBudgetExceeded, UnsupportedSetError
from src.models.geometry import Ball, HalfSpace, Intersection, Polytope
from src.models.stein import QuadratureValue, SmoothedIndicator, SteinSolution
from src.services.cache_service import memoized
from src.services.stein_service import SteinService
from src.services.stream_service import TAG_PANEL, StreamService

logger = logging.getLogger(__name__)

# Gaussian mass beyond this many standard deviations is below double precision.
Z_CUTOFF = 12.0


@memoized(cache_name="gaussian_panels", max_size=8)
def _gaussian_panel(seed: int, n_z: int, k: int) -> np.ndarray:
    panel = StreamService.generator(seed, TAG_PANEL, k).standard_normal((n_z, k))
    panel.setflags(write=False)
    return panel


@memoized(cache_name="time_nodes", max_size=16)
def _time_nodes(n_s: int, t_min: float, t_max: float) -> Tuple[np.ndarray, np.ndarray]:
    """Trapezoid nodes and weights for an integral over t in [t_min, t_max], uniform in log t."""
    v = np.linspace(math.log(t_min), math.log(t_max), n_s)
    weights = np.full(n_s, v[1] - v[0])
    weights[[0, -1]] *= 0.5
    t = np.exp(v)
    return t, weights * t


class SolutionService:
    """
    Numerical solution of  Laplacian f(w) - w . grad f(w) = h(w) - E h(Z)  for h = h_eps.

    With s = 1 - exp(-t) the solution becomes
        f(w) = -1/2 int_0^inf E[h(exp(-t/2) w + sqrt(1 - exp(-t)) Z) - h(Z)] dt,
    evaluated on log-spaced t nodes with one Gaussian panel shared by every
    node and every stencil point.
    """

    @staticmethod
    def _panel_integrals(solution: SteinSolution, points: np.ndarray, cfg: NumericsSettings) -> np.ndarray:
        """Per-panel-sample integrand Y(z) for every row of ``points``; f(w) = mean of Y."""
        indicator = solution.indicator
        panel = _gaussian_panel(solution.seed, solution.n_z, solution.dim)
        t_nodes, weights = _time_nodes(solution.n_s, cfg.t_min, cfg.t_max)
        p, n_z = points.shape[0], panel.shape[0]

        h_panel = SteinService.smoothed_many(indicator, panel, cfg)
        h_points = SteinService.smoothed_many(indicator, points, cfg)
        acc = cfg.t_min * (h_points[:, None] - h_panel[None, :])
        for t, weight in zip(t_nodes, weights):
            a = math.exp(-0.5 * t)
            sigma = math.sqrt(-math.expm1(-t))
            shifted = (a * points)[:, None, :] + sigma * panel[None, :, :]
            h_shifted = SteinService.smoothed_many(indicator, shifted.reshape(p * n_z, -1), cfg).reshape(p, n_z)
            acc += weight * (h_shifted - h_panel[None, :])
        return -0.5 * acc

    @staticmethod
    def estimate_solution(solution: SteinSolution, w, target_se: Optional[float] = None,
                          settings: Optional[NumericsSettings] = None) -> QuadratureValue:
        """
        Value of the Stein solution at w with its Monte Carlo standard error.

        Args:
            solution: quadrature description (indicator, n_s, n_z, seed)
            w: evaluation point, shape (k,)
            target_se: raise QuadratureBudgetExceeded when the panel cannot reach this standard error

        Returns:
            QuadratureValue: (value, std_error)
        """
        cfg = settings or default_settings
        point = np.atleast_1d(np.asarray(w, dtype=float))[None, :]
        y = SolutionService._panel_integrals(solution, point, cfg)[0]
        value = float(y.mean())
        se = float(y.std(ddof=1) / math.sqrt(y.size))
        if target_se is not None and se > target_se:
            raise QuadratureBudgetExceeded(target_se, se, solution.n_z)
        return QuadratureValue(value, se)

    @staticmethod
    def eval_solution(solution: SteinSolution, w, settings: Optional[NumericsSettings] = None) -> float:
        return SolutionService.estimate_solution(solution, w, settings=settings).value

    @staticmethod
    def stein_residual(solution: SteinSolution, w, settings: Optional[NumericsSettings] = None) -> float:
        """
        |Laplacian f(w) - w . grad f(w) - (h(w) - E h(Z))| with central differences of step fd_step.

        Every stencil point reuses the same Gaussian panel, so the differences
        see a smooth function of w.
        """
        cfg = settings or default_settings
        center = np.atleast_1d(np.asarray(w, dtype=float))
        k = center.size
        delta = cfg.fd_step
        stencil = [center]
        for j in range(k):
            e = np.zeros(k)
            e[j] = delta
            stencil.extend([center + e, center - e])
        values = SolutionService._panel_integrals(solution, np.array(stencil), cfg).mean(axis=1)

        f0 = values[0]
        plus, minus = values[1::2], values[2::2]
        laplacian = float(np.sum(plus - 2.0 * f0 + minus) / delta**2)
        gradient = (plus - minus) / (2.0 * delta)

        panel = _gaussian_panel(solution.seed, solution.n_z, k)
        expected_h = float(SteinService.smoothed_many(solution.indicator, panel, cfg).mean())
        h_w = SteinService.eval_smoothed(solution.indicator, center, cfg)
        residual = abs(laplacian - float(center @ gradient) - (h_w - expected_h))
        logger.debug(f"stein residual at {center.tolist()}: {residual:.3e}")
        return residual

    @staticmethod
    def _interval(convex_set) -> Tuple[float, float]:
        """The closed interval a one-dimensional convex set describes."""
        if convex_set.dim != 1:
            raise UnsupportedSetError("the deterministic reference solution needs a one-dimensional set")
        if isinstance(convex_set, HalfSpace):
            u, d = convex_set.normal[0], convex_set.offset
            return (-math.inf, d / u) if u > 0 else (d / u, math.inf)
        if isinstance(convex_set, Ball):
            c, r = convex_set.center[0], convex_set.radius
            return c - r, c + r
        members = convex_set.faces if isinstance(convex_set, Polytope) else convex_set.members
        lo, hi = -math.inf, math.inf
        for member in members:
            m_lo, m_hi = SolutionService._interval(member)
            lo, hi = max(lo, m_lo), min(hi, m_hi)
        return lo, hi

    @staticmethod
    def reference_solution_1d(indicator: SmoothedIndicator, w: float) -> QuadratureValue:
        """Deterministic nested adaptive quadrature of the Stein solution for a one-dimensional set."""
        lo, hi = SolutionService._interval(indicator.convex_set)
        eps = indicator.eps
        kinks = [c for c in (lo - eps, lo - eps / 2, lo, hi, hi + eps / 2, hi + eps) if math.isfinite(c)]

        def h(x: float) -> float:
            return float(SteinService.psi(max(lo - x, 0.0, x - hi) / eps))

        def gaussian_mean(a: float, sigma: float) -> float:
            # E h(a + sigma Z) with the kinks of h passed as breakpoints
            points = sorted({(c - a) / sigma for c in kinks if abs(c - a) / sigma < Z_CUTOFF})
            value, _ = integrate.quad(
                lambda z: h(a + sigma * z) * stats.norm.pdf(z), -Z_CUTOFF, Z_CUTOFF, points=points or None, limit=200
            )
            return value

        expected_h = gaussian_mean(0.0, 1.0)

        def integrand(t: float) -> float:
            sigma = math.sqrt(-math.expm1(-t))
            if sigma == 0.0:
                return h(w) - expected_h
            return gaussian_mean(math.exp(-0.5 * t) * w, sigma) - expected_h

        t_max = default_settings.t_max
        value, abserr = integrate.quad(integrand, 0.0, t_max, limit=400, points=[1e-4, 1e-2, 1.0])
        return QuadratureValue(-0.5 * value, 0.5 * abserr)
