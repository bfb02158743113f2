from typing import Tuple

from scipy import stats

from src.models.estimates import Verdict


class StatsService:
    @staticmethod
    def clopper_pearson_interval(successes: int, trials: int, confidence: float = 0.999) -> Tuple[float, float]:
        """
        Exact two-sided binomial confidence interval.

        Args:
            successes (int): number of successes, 0 <= successes <= trials
            trials (int): number of trials, >= 1
            confidence (float): coverage level (0.999 gives a 99.9% interval)

        Returns:
            Tuple[float, float]: (lo, hi) with lo = 0 when successes = 0 and hi = 1 when successes = trials
        """
        if trials < 1:
            raise ValueError("trials must be at least 1")
        if not 0 <= successes <= trials:
            raise ValueError("successes must lie in [0, trials]")
        alpha = 1.0 - confidence
        lo = 0.0 if successes == 0 else float(stats.beta.ppf(alpha / 2, successes, trials - successes + 1))
        hi = 1.0 if successes == trials else float(stats.beta.ppf(1 - alpha / 2, successes + 1, trials - successes))
        return lo, hi

    @staticmethod
    def normal_quantile(confidence: float) -> float:
        """Two-sided standard normal critical value."""
        return float(stats.norm.ppf(0.5 + confidence / 2.0))

    @staticmethod
    def concentration_verdict(successes: int, ci_high: float, bound: float) -> Verdict:
        """pass iff the upper confidence limit is under the bound; vacuous when the bound is >= 1.

        A zero-width shell has bound 0 and is a null set, so it passes when no
        sample lands in it.
        """
        if bound >= 1.0:
            return Verdict.VACUOUS
        if ci_high <= bound or (successes == 0 and bound == 0.0):
            return Verdict.PASS
        return Verdict.FAIL

    @staticmethod
    def discrepancy_verdict(upper: float, bound: float) -> Verdict:
        if bound >= 1.0:
            return Verdict.VACUOUS
        return Verdict.PASS if upper <= bound else Verdict.FAIL
