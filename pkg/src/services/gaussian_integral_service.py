import math
from typing import Tuple

import numpy as np
from scipy import integrate, stats

from src.services.stream_service import TAG_MOMENTS, StreamService

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
CUBIC_BOUND = 2.0 * (1.0 + 4.0 * math.exp(-1.5)) / math.sqrt(2.0 * math.pi)
MIXED_BOUND = 2.0 * (1.0 + SQRT_2_OVER_PI)


def _cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def _pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def _gaussian_abs_quadratic(c0: float, c1: float, c2: float) -> float:
    """E |c0 + c1 Z + c2 Z^2| for Z ~ N(0, 1), exactly, by splitting at the real roots."""
    roots = np.roots([c2, c1, c0]) if (c2 != 0.0 or c1 != 0.0) else np.array([])
    cuts = sorted(float(r.real) for r in np.atleast_1d(roots) if abs(r.imag) < 1e-12)
    edges = [-math.inf] + cuts + [math.inf]

    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        mass = _cdf(b) - _cdf(a)
        pdf_a = _pdf(a) if math.isfinite(a) else 0.0
        pdf_b = _pdf(b) if math.isfinite(b) else 0.0
        a_pdf_a = a * pdf_a if math.isfinite(a) else 0.0
        b_pdf_b = b * pdf_b if math.isfinite(b) else 0.0
        first = pdf_a - pdf_b
        second = mass + a_pdf_a - b_pdf_b
        piece = c0 * mass + c1 * first + c2 * second
        total += abs(piece)
    return total


class GaussianIntegralService:
    """Total-variation integrals of Gaussian density derivatives along given directions."""

    @staticmethod
    def abs_linear(x) -> float:
        """int |sum_j x_j d_j phi(z)| dz = E|x . Z| = sqrt(2/pi) |x|."""
        return SQRT_2_OVER_PI * float(np.linalg.norm(np.atleast_1d(np.asarray(x, dtype=float))))

    @staticmethod
    def abs_linear_mc(x, samples: int, seed: int) -> Tuple[float, float]:
        """Monte Carlo mean of |x . Z| and its standard error."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        z = StreamService.generator(seed, TAG_MOMENTS, 1).standard_normal((samples, x.size))
        values = np.abs(z @ x)
        return float(values.mean()), float(values.std(ddof=1) / math.sqrt(samples))

    @staticmethod
    def cubic_constant() -> float:
        """E|3Z - Z^3| by adaptive quadrature, split at the sign changes 0 and +-sqrt(3)."""
        r = math.sqrt(3.0)

        def integrand(z: float) -> float:
            return abs(3.0 * z - z**3) * stats.norm.pdf(z)

        total = 0.0
        for a, b in ((-math.inf, -r), (-r, 0.0), (0.0, r), (r, math.inf)):
            value, _ = integrate.quad(integrand, a, b, epsabs=1e-13, epsrel=1e-12)
            total += value
        return total

    @staticmethod
    def cubic_constant_mc(samples: int, seed: int, chunk: int = 1 << 20) -> Tuple[float, float]:
        total = total_sq = 0.0
        drawn = 0
        block = 0
        while drawn < samples:
            m = min(chunk, samples - drawn)
            z = StreamService.generator(seed, TAG_MOMENTS, 3, block).standard_normal(m)
            values = np.abs(3.0 * z - z**3)
            total += float(values.sum())
            total_sq += float(np.square(values).sum())
            drawn += m
            block += 1
        mean = total / drawn
        return mean, math.sqrt(max(total_sq / drawn - mean**2, 0.0) / drawn)

    @staticmethod
    def mixed_third_derivative(u, v) -> float:
        """
        int |sum u_j v_j' v_j'' d_jj'j'' phi(z)| dz via the two-dimensional reduction.

        In an orthonormal basis of span(u, v) with e1 = u/|u| the integrand is
        |u||v|^2 |z1 + 2c(c z1 + s z2) - z1 (c z1 + s z2)^2| phi(z1) phi(z2),
        c = cos(u, v), s = sin(u, v). The z2 integral is done exactly and the
        z1 integral by adaptive quadrature.
        """
        u = np.atleast_1d(np.asarray(u, dtype=float))
        v = np.atleast_1d(np.asarray(v, dtype=float))
        nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
        if nu == 0.0 or nv == 0.0:
            return 0.0
        c = float(np.clip(u @ v / (nu * nv), -1.0, 1.0))
        s = math.sqrt(max(1.0 - c * c, 0.0))

        def inner(z1: float) -> float:
            c0 = z1 * (1.0 + 2.0 * c * c - c * c * z1 * z1)
            c1 = 2.0 * c * s * (1.0 - z1 * z1)
            c2 = -s * s * z1
            return _gaussian_abs_quadratic(c0, c1, c2) * _pdf(z1)

        breakpoints = [-math.sqrt(3.0), -1.0, 0.0, 1.0, math.sqrt(3.0)]
        if c != 0.0:
            breakpoints.append(math.sqrt((1.0 + 2.0 * c * c) / (c * c)))
            breakpoints.append(-breakpoints[-1])
        breakpoints = sorted(b for b in set(breakpoints) if abs(b) < 12.0)
        value, _ = integrate.quad(inner, -12.0, 12.0, points=breakpoints, limit=200, epsabs=1e-11)
        return value * nu * nv * nv
