import logging
import math
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import comb, gammaln

from src.exceptions import SummandIndexError
from src.models.distributions import (
    CenteredExponentialCoordinates,
    GammaReport,
    GaussianSummands,
    RademacherCoordinates,
    ScaledBernoulliHeterogeneous,
)
from src.services.cache_service import memoized
from src.services.stream_service import TAG_MOMENTS, StreamService

logger = logging.getLogger(__name__)

MOMENT_SEED = 0x5EED
MOMENT_BLOCK = 1 << 18
MOMENT_MAX_SAMPLES = 1 << 26


def _chi_moment(k: int, power: float) -> float:
    """E |N(0, I_k)|^power."""
    return math.exp(0.5 * power * math.log(2.0) + gammaln((k + power) / 2.0) - gammaln(k / 2.0))


def _bernoulli_norm_moment(k: int, p: float, power: float) -> float:
    """E (sum_j Y_j^2)^(power/2) for k standardized Bernoulli(p) coordinates."""
    q = 1.0 - p
    total = 0.0
    for m in range(k + 1):
        squared = m * q / p + (k - m) * p / q
        total += comb(k, m) * p**m * q ** (k - m) * squared ** (power / 2.0)
    return float(total)


@memoized(cache_name="exponential_moments", max_size=64)
def _exponential_norm_moment(k: int, power: float) -> Tuple[float, float]:
    """E (sum_j (E_j - 1)^2)^(power/2) with its standard error; exact for k = 1."""
    if k == 1:
        if power == 3.0:
            return 12.0 / math.e - 2.0, 0.0
        if power == 1.0:
            return 2.0 / math.e, 0.0
    total = total_sq = 0.0
    drawn = 0
    block = 0
    while drawn < MOMENT_MAX_SAMPLES:
        rng = StreamService.generator(MOMENT_SEED, TAG_MOMENTS, k, int(power * 1000), block)
        values = np.sum((rng.standard_exponential((MOMENT_BLOCK, k)) - 1.0) ** 2, axis=1) ** (power / 2.0)
        total += float(values.sum())
        total_sq += float(np.square(values).sum())
        drawn += MOMENT_BLOCK
        block += 1
        mean = total / drawn
        se = math.sqrt(max(total_sq / drawn - mean**2, 0.0) / drawn)
        if se <= 1e-3 * mean:
            return mean, se
    logger.warning(f"exponential moment k={k} power={power}: standard error target not reached")
    return mean, se


class DistributionService:
    """Samplers and moment calculations for standardized sums W = X_1 + ... + X_n."""

    @staticmethod
    def summand_scales(family) -> np.ndarray:
        """Per-coordinate standard deviation of each summand (length n)."""
        n = family.n
        if isinstance(family, ScaledBernoulliHeterogeneous):
            i = np.arange(1, n + 1, dtype=float)
            return np.sqrt(2.0 * i / (n * (n + 1.0)))
        return np.full(n, 1.0 / math.sqrt(n))

    @staticmethod
    def _sample_summand(family, i: int, rng: np.random.Generator, size: int) -> np.ndarray:
        k, n = family.k, family.n
        if isinstance(family, RademacherCoordinates):
            return (2.0 * rng.integers(0, 2, size=(size, k)) - 1.0) / math.sqrt(n)
        if isinstance(family, GaussianSummands):
            return rng.standard_normal((size, k)) / math.sqrt(n)
        if isinstance(family, CenteredExponentialCoordinates):
            return (rng.standard_exponential((size, k)) - 1.0) / math.sqrt(n)
        p = family.skew
        sigma = math.sqrt(2.0 * i / (n * (n + 1.0)))
        bernoulli = (rng.random((size, k)) < p).astype(float)
        return sigma * (bernoulli - p) / math.sqrt(p * (1.0 - p))

    @staticmethod
    def _sample_iid_sum(family, count: int, rng: np.random.Generator, size: int) -> np.ndarray:
        """Exact draw of the sum of ``count`` i.i.d. summands."""
        k, n = family.k, family.n
        if count == 0:
            return np.zeros((size, k))
        if isinstance(family, RademacherCoordinates):
            return (2.0 * rng.binomial(count, 0.5, size=(size, k)) - count) / math.sqrt(n)
        if isinstance(family, GaussianSummands):
            return math.sqrt(count / n) * rng.standard_normal((size, k))
        return (rng.standard_gamma(count, size=(size, k)) - count) / math.sqrt(n)

    @staticmethod
    def sample_summands(family, rng: np.random.Generator, size: int, order: Optional[Sequence[int]] = None) -> np.ndarray:
        """
        Draw every summand explicitly.

        Args:
            family: the distribution family
            rng: random stream
            size: number of independent draws of (X_1, ..., X_n)
            order: 1-based summand indices in drawing order (default 1..n)

        Returns:
            np.ndarray: (size, n, k) array indexed by summand position 1..n
        """
        indices = list(order) if order is not None else list(range(1, family.n + 1))
        out = np.empty((size, family.n, family.k))
        for i in indices:
            out[:, i - 1, :] = DistributionService._sample_summand(family, i, rng, size)
        return out

    @staticmethod
    def sample_w(family, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
        """One draw of W (shape (k,)) or ``size`` draws (shape (size, k))."""
        m = 1 if size is None else size
        if isinstance(family, ScaledBernoulliHeterogeneous):
            w = np.zeros((m, family.k))
            for i in range(1, family.n + 1):
                w += DistributionService._sample_summand(family, i, rng, m)
        else:
            w = DistributionService._sample_iid_sum(family, family.n, rng, m)
        return w[0] if size is None else w

    @staticmethod
    def sample_w_leave_one_out(family, i: int, rng: np.random.Generator, size: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
        """Joint draw of (W - X_i, X_i) with i 1-based."""
        if not 1 <= i <= family.n:
            raise SummandIndexError(i, family.n)
        m = 1 if size is None else size
        if isinstance(family, ScaledBernoulliHeterogeneous):
            w_minus = np.zeros((m, family.k))
            x_i = None
            for j in range(1, family.n + 1):
                draw = DistributionService._sample_summand(family, j, rng, m)
                if j == i:
                    x_i = draw
                else:
                    w_minus += draw
        else:
            w_minus = DistributionService._sample_iid_sum(family, family.n - 1, rng, m)
            x_i = DistributionService._sample_summand(family, i, rng, m)
        if size is None:
            return w_minus[0], x_i[0]
        return w_minus, x_i

    @staticmethod
    def _norm_moment(family, power: float) -> Tuple[float, float, str]:
        """E (sum_j Y_j^2)^(power/2) for the standardized coordinates Y of one summand."""
        k = family.k
        if isinstance(family, RademacherCoordinates):
            return float(k) ** (power / 2.0), 0.0, "closed_form"
        if isinstance(family, GaussianSummands):
            return _chi_moment(k, power), 0.0, "closed_form"
        if isinstance(family, ScaledBernoulliHeterogeneous):
            return _bernoulli_norm_moment(k, family.skew, power), 0.0, "closed_form"
        value, se = _exponential_norm_moment(k, float(power))
        return value, se, "closed_form" if se == 0.0 else "monte_carlo"

    @staticmethod
    def gamma(family) -> GammaReport:
        """gamma = sum_i E|X_i|^3, closed form where the norm law is tractable."""
        moment, se, method = DistributionService._norm_moment(family, 3.0)
        scales = DistributionService.summand_scales(family)
        per_summand = scales**3 * moment
        report = GammaReport(
            gamma=float(per_summand.sum()),
            per_summand=per_summand.tolist(),
            method=method,
            std_error=float(se * np.sum(scales**3)),
        )
        if not report.informative:
            logger.info(f"{family.kind}(k={family.k}, n={family.n}): gamma={report.gamma:.4g} exceeds 1/115, bound is vacuous")
        return report

    @staticmethod
    def mean_norm(family, i: int) -> float:
        """E|X_i| for the 1-based summand index i."""
        if not 1 <= i <= family.n:
            raise SummandIndexError(i, family.n)
        moment, _, _ = DistributionService._norm_moment(family, 1.0)
        return float(DistributionService.summand_scales(family)[i - 1] * moment)
