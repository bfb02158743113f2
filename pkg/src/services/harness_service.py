import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from src.config import NumericsSettings, settings as default_settings
from src.exceptions import UnsupportedSetError
from src.models.estimates import (
    ConcentrationEstimate,
    DiscrepancyEstimate,
    IdentityEstimate,
    SetDiscrepancy,
    SmoothingGapEstimate,
    Verdict,
)
from src.models.geometry import Ball, HalfSpace, Intersection, describe
from src.models.stein import SteinField
from src.services.distribution_service import DistributionService
from src.services.geometry_service import GeometryService
from src.services.stats_service import StatsService
from src.services.stein_service import SteinService
from src.services.stream_service import (
    TAG_CONFIRM,
    TAG_GAUSSIAN,
    TAG_PROBES,
    TAG_REFERENCE,
    TAG_SUMS,
    StreamService,
)

logger = logging.getLogger(__name__)

MIN_SAMPLES = 10_000
REFERENCE_FACTOR = 10
LEFT_LIMIT = 1e-6


def _family_id(family) -> str:
    return f"{family.kind}(k={family.k}, n={family.n})"


class HarnessService:
    """Monte Carlo certification of the concentration and normal-approximation inequalities."""

    @staticmethod
    def _run_blocks(task: Callable[[int, int], object], samples: int, workers: int, cfg: NumericsSettings) -> list:
        """
        Run ``task(block_index, block_length)`` over all sample blocks.

        Each block draws from its own (seed, role, block) stream, and results
        come back in block order, so totals do not depend on ``workers``.
        """
        blocks = list(StreamService.blocks(samples, cfg.block_size))
        if workers <= 1 or len(blocks) == 1:
            return [task(b, m) for b, m in blocks]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda bm: task(*bm), blocks))

    @staticmethod
    def _check_samples(samples: int):
        if samples < MIN_SAMPLES:
            raise ValueError(f"samples must be at least {MIN_SAMPLES}, got {samples}")

    @staticmethod
    def _estimate(inequality: str, set_id: str, eps1: float, eps2: float, gamma: Optional[float],
                  successes: int, samples: int, seed: int, bound: float, cfg: NumericsSettings) -> ConcentrationEstimate:
        lo, hi = StatsService.clopper_pearson_interval(successes, samples, cfg.confidence)
        p_hat = successes / samples
        verdict = StatsService.concentration_verdict(successes, hi, bound)
        if verdict is Verdict.FAIL:
            logger.error(f"{inequality} on {set_id}: ci_high {hi:.5f} exceeds bound {bound:.5f}")
        return ConcentrationEstimate(
            inequality=inequality,
            set_id=set_id,
            eps1=eps1,
            eps2=eps2,
            gamma=gamma,
            p_hat=p_hat,
            ci_low=min(lo, p_hat),
            ci_high=max(hi, p_hat),
            bound=bound,
            successes=successes,
            samples=samples,
            seed=seed,
            verdict=verdict,
        )

    # Gaussian concentration

    @staticmethod
    def gaussian_concentration_grid(convex_set, pairs: Sequence[Tuple[float, float]], samples: int, seed: int,
                                    workers: int = 1, settings: Optional[NumericsSettings] = None) -> List[ConcentrationEstimate]:
        """P(Z in A^eps1 minus A^-eps2) for each (eps1, eps2) pair, all on one Gaussian sample."""
        cfg = settings or default_settings
        HarnessService._check_samples(samples)
        if isinstance(convex_set, Intersection) and any(e2 > 0 for _, e2 in pairs):
            raise UnsupportedSetError("erosion of a general intersection is not supported")
        k = convex_set.dim
        exact_core = cfg.with_overrides({"tol_mem": 0.0})

        def task(block: int, m: int) -> np.ndarray:
            z = StreamService.generator(seed, TAG_GAUSSIAN, block).standard_normal((m, k))
            d = GeometryService.distance_many(convex_set, z, cfg)
            counts = np.zeros(len(pairs), dtype=np.int64)
            for p, (eps1, eps2) in enumerate(pairs):
                dilated = d <= eps1 + cfg.tol_mem
                if isinstance(convex_set, Intersection):
                    core = GeometryService.contains_many(convex_set, z, exact_core)
                else:
                    core = GeometryService.in_erosion_many(convex_set, z, eps2)
                counts[p] = int(np.sum(dilated & ~core))
            return counts

        counts = np.sum(HarnessService._run_blocks(task, samples, workers, cfg), axis=0)
        set_id = describe(convex_set)
        return [
            HarnessService._estimate("gaussian_shell", set_id, e1, e2, None, int(c), samples, seed,
                                     math.sqrt(k) * (e1 + e2), cfg)
            for (e1, e2), c in zip(pairs, counts)
        ]

    @staticmethod
    def gaussian_concentration(convex_set, eps1: float, eps2: float, samples: int, seed: int,
                               workers: int = 1, settings: Optional[NumericsSettings] = None) -> ConcentrationEstimate:
        """Estimate P(Z in A^eps1 minus A^-eps2) against sqrt(k)(eps1 + eps2)."""
        if eps1 < 0 or eps2 < 0:
            raise ValueError("eps1 and eps2 must be non-negative")
        return HarnessService.gaussian_concentration_grid(convex_set, [(eps1, eps2)], samples, seed, workers, settings)[0]

    # Concentration for sums of independent vectors

    @staticmethod
    def sum_concentration_grid(family, i: int, convex_set, eps_values: Sequence[float], samples: int, seed: int,
                               workers: int = 1, settings: Optional[NumericsSettings] = None) -> List[ConcentrationEstimate]:
        """P(W^(i) in A^(4 gamma + eps) minus A^(4 gamma)) for each eps, on one leave-one-out sample."""
        cfg = settings or default_settings
        HarnessService._check_samples(samples)
        if any(eps <= 0 for eps in eps_values):
            raise ValueError("eps must be positive")
        gamma = DistributionService.gamma(family).gamma
        inner = 4.0 * gamma
        root_k = math.sqrt(family.k)

        def task(block: int, m: int) -> np.ndarray:
            rng = StreamService.generator(seed, TAG_SUMS, block)
            w_minus, _ = DistributionService.sample_w_leave_one_out(family, i, rng, m)
            d = GeometryService.distance_many(convex_set, w_minus, cfg)
            core = d <= inner + cfg.tol_mem
            return np.array([np.sum((d <= inner + eps + cfg.tol_mem) & ~core) for eps in eps_values], dtype=np.int64)

        counts = np.sum(HarnessService._run_blocks(task, samples, workers, cfg), axis=0)
        set_id = describe(convex_set)
        return [
            HarnessService._estimate("leave_one_out_shell", set_id, eps, 0.0, gamma, int(c), samples, seed,
                                     4.1 * root_k * eps + 39.0 * root_k * gamma, cfg)
            for eps, c in zip(eps_values, counts)
        ]

    @staticmethod
    def sum_concentration_fixed_eps(family, i: int, convex_set, eps: float, samples: int, seed: int,
                                    workers: int = 1, settings: Optional[NumericsSettings] = None) -> ConcentrationEstimate:
        """Leave-one-out shell probability against 4.1 sqrt(k) eps + 39 sqrt(k) gamma."""
        return HarnessService.sum_concentration_grid(family, i, convex_set, [eps], samples, seed, workers, settings)[0]

    @staticmethod
    def sum_concentration_random_eps(family, i: int, convex_set, samples: int, seed: int,
                                     workers: int = 1, settings: Optional[NumericsSettings] = None) -> ConcentrationEstimate:
        """P(W in A^(4 gamma + |X_i|) minus A^(4 gamma)) with the drawn |X_i| as the radius."""
        cfg = settings or default_settings
        HarnessService._check_samples(samples)
        gamma = DistributionService.gamma(family).gamma
        mean_norm = DistributionService.mean_norm(family, i)
        inner = 4.0 * gamma
        root_k = math.sqrt(family.k)

        def task(block: int, m: int) -> int:
            rng = StreamService.generator(seed, TAG_SUMS, block)
            w_minus, x_i = DistributionService.sample_w_leave_one_out(family, i, rng, m)
            d = GeometryService.distance_many(convex_set, w_minus + x_i, cfg)
            radius = np.linalg.norm(x_i, axis=1)
            return int(np.sum((d <= inner + radius + cfg.tol_mem) & (d > inner + cfg.tol_mem)))

        successes = int(sum(HarnessService._run_blocks(task, samples, workers, cfg)))
        return HarnessService._estimate("random_radius_shell", describe(convex_set), mean_norm, 0.0, gamma,
                                        successes, samples, seed, 4.1 * root_k * mean_norm + 39.0 * root_k * gamma, cfg)

    # Normal approximation

    @staticmethod
    def gaussian_probability(convex_set) -> Optional[float]:
        """Exact P(Z in A) for half-spaces and balls; None otherwise."""
        if isinstance(convex_set, HalfSpace):
            return float(stats.norm.cdf(convex_set.offset))
        if isinstance(convex_set, Ball):
            if convex_set.radius == 0.0:
                return 0.0
            shift = float(np.sum(convex_set.center_array**2))
            r2 = convex_set.radius**2
            if shift == 0.0:
                return float(stats.chi2.cdf(r2, convex_set.dim))
            return float(stats.ncx2.cdf(r2, convex_set.dim, shift))
        return None

    @staticmethod
    def discrepancy(family, sets: Sequence, samples: int, seed: int, set_family: str = "custom",
                    workers: int = 1, settings: Optional[NumericsSettings] = None) -> DiscrepancyEstimate:
        """
        max over the probed sets of |P(W in A) - P(Z in A)|, compared with 115 sqrt(k) gamma.

        P(Z in A) is exact for half-spaces and balls, and a Monte Carlo estimate
        with ten times the samples otherwise. The maximum lower-bounds the
        supremum over all convex sets.
        """
        cfg = settings or default_settings
        HarnessService._check_samples(samples)
        k = family.k
        gamma = DistributionService.gamma(family).gamma
        z_crit = StatsService.normal_quantile(cfg.confidence)

        def task(block: int, m: int) -> np.ndarray:
            w = DistributionService.sample_w(family, StreamService.generator(seed, TAG_SUMS, block), m)
            return np.array([np.sum(GeometryService.contains_many(s, w, cfg)) for s in sets], dtype=np.int64)

        counts = np.sum(HarnessService._run_blocks(task, samples, workers, cfg), axis=0)

        records = []
        for idx, (convex_set, count) in enumerate(zip(sets, counts)):
            p_w = int(count) / samples
            lo, hi = StatsService.clopper_pearson_interval(int(count), samples, cfg.confidence)
            se = math.sqrt(p_w * (1.0 - p_w) / samples)
            p_z = HarnessService.gaussian_probability(convex_set)
            method = "exact"
            ref_half_width = 0.0
            if p_z is None:
                method = "monte_carlo"
                ref_samples = REFERENCE_FACTOR * samples

                def ref_task(block: int, m: int, s=convex_set, j=idx) -> int:
                    z = StreamService.generator(seed, TAG_REFERENCE, j, block).standard_normal((m, k))
                    return int(np.sum(GeometryService.contains_many(s, z, cfg)))

                ref_count = sum(HarnessService._run_blocks(ref_task, ref_samples, workers, cfg))
                p_z = ref_count / ref_samples
                ref_se = math.sqrt(p_z * (1.0 - p_z) / ref_samples)
                se = math.sqrt(se**2 + ref_se**2)
                ref_half_width = z_crit * ref_se
            records.append(SetDiscrepancy(
                set_id=describe(convex_set),
                p_w=p_w,
                p_z=p_z,
                p_z_method=method,
                discrepancy=abs(p_w - p_z),
                std_error=se,
                half_width=max(p_w - lo, hi - p_w) + ref_half_width,
            ))

        worst = max(records, key=lambda r: r.discrepancy)
        upper = max(r.discrepancy + r.half_width for r in records)
        bound = 115.0 * math.sqrt(k) * gamma
        estimate = DiscrepancyEstimate(
            family=_family_id(family),
            set_family=set_family,
            sup_hat=worst.discrepancy,
            worst_set=worst.set_id,
            half_width=worst.half_width,
            std_error=worst.std_error,
            bound=bound,
            gamma=gamma,
            samples=samples,
            seed=seed,
            records=records,
            verdict=StatsService.discrepancy_verdict(upper, bound),
        )
        logger.info(f"discrepancy {estimate.family}: sup_hat={estimate.sup_hat:.5f} on {worst.set_id}, bound={bound:.4f}")
        return estimate

    @staticmethod
    def _halfspace_objective(projections: np.ndarray) -> Tuple[float, float]:
        """max over t of |F_hat(t) - Phi(t)| for the empirical law of ``projections``; returns (value, t)."""
        values, multiplicity = np.unique(projections, return_counts=True)
        cdf = np.cumsum(multiplicity) / projections.size
        left = np.concatenate([[0.0], cdf[:-1]])
        closed = cdf - stats.norm.cdf(values)
        open_side = left - stats.norm.cdf(values - LEFT_LIMIT)
        j_closed = int(np.argmax(np.abs(closed)))
        j_open = int(np.argmax(np.abs(open_side)))
        if abs(closed[j_closed]) >= abs(open_side[j_open]):
            return float(abs(closed[j_closed])), float(values[j_closed])
        return float(abs(open_side[j_open])), float(values[j_open] - LEFT_LIMIT)

    @staticmethod
    def adversarial_halfspace_search(family, samples: int, seed: int, restarts: int = 4, workers: int = 1,
                                     initial_direction: Optional[Sequence[float]] = None, max_sweeps: int = 50,
                                     settings: Optional[NumericsSettings] = None) -> DiscrepancyEstimate:
        """
        Coordinate ascent over unit directions u of max_t |P(u . W <= t) - Phi(t)|.

        The search runs on an exploration sample; the winning half-space is
        re-estimated on an independent confirmation sample so the reported value
        carries no selection bias.
        """
        cfg = settings or default_settings
        HarnessService._check_samples(samples)
        if restarts < 1:
            raise ValueError("restarts must be at least 1")
        k = family.k

        def draw(tag: int) -> np.ndarray:
            def task(block: int, m: int) -> np.ndarray:
                return DistributionService.sample_w(family, StreamService.generator(seed, tag, block), m)
            return np.vstack(HarnessService._run_blocks(task, samples, workers, cfg))

        explore = draw(TAG_SUMS)

        def objective(u: np.ndarray) -> Tuple[float, float]:
            return HarnessService._halfspace_objective(explore @ u)

        best_value, best_u, best_t = -1.0, None, 0.0
        for r in range(restarts):
            if r == 0 and initial_direction is not None:
                u = np.asarray(initial_direction, dtype=float)
            else:
                u = StreamService.generator(seed, TAG_PROBES, r).standard_normal(k)
            u = u / np.linalg.norm(u)
            value, t = objective(u)
            if k == 1:
                for candidate in (np.array([1.0]), np.array([-1.0])):
                    c_value, c_t = objective(candidate)
                    if c_value > value:
                        u, value, t = candidate, c_value, c_t
            else:
                step = 0.5
                for _ in range(max_sweeps):
                    improved = False
                    for j in range(k):
                        for sign in (1.0, -1.0):
                            candidate = u.copy()
                            candidate[j] += sign * step
                            norm = np.linalg.norm(candidate)
                            if norm == 0.0:
                                continue
                            candidate /= norm
                            c_value, c_t = objective(candidate)
                            if c_value > value:
                                u, value, t, improved = candidate, c_value, c_t, True
                    if not improved:
                        step /= 2.0
                        if step < 1e-3:
                            break
            logger.debug(f"adversarial restart {r}: value={value:.5f} u={u.tolist()} t={t:.4f}")
            if value > best_value:
                best_value, best_u, best_t = value, u, t

        halfspace = HalfSpace.from_direction(best_u, best_t, label="adversarial-halfspace")
        confirm = draw(TAG_CONFIRM)
        count = int(np.sum(GeometryService.contains_many(halfspace, confirm, cfg)))
        p_w = count / samples
        p_z = float(stats.norm.cdf(halfspace.offset))
        lo, hi = StatsService.clopper_pearson_interval(count, samples, cfg.confidence)
        record = SetDiscrepancy(
            set_id=f"halfspace(u={np.round(halfspace.normal, 4).tolist()}, t={halfspace.offset:.6f})",
            p_w=p_w,
            p_z=p_z,
            p_z_method="exact",
            discrepancy=abs(p_w - p_z),
            std_error=math.sqrt(p_w * (1.0 - p_w) / samples),
            half_width=max(p_w - lo, hi - p_w),
        )
        gamma = DistributionService.gamma(family).gamma
        bound = 115.0 * math.sqrt(k) * gamma
        return DiscrepancyEstimate(
            family=_family_id(family),
            set_family="adversarial_halfspaces",
            sup_hat=record.discrepancy,
            worst_set=record.set_id,
            half_width=record.half_width,
            std_error=record.std_error,
            bound=bound,
            gamma=gamma,
            samples=samples,
            seed=seed,
            records=[record],
            verdict=StatsService.discrepancy_verdict(record.discrepancy + record.half_width, bound),
            exploration_value=best_value,
        )

    # Supplementary checks

    @staticmethod
    def smoothing_gap(family, convex_set, eps: float, samples: int, seed: int, workers: int = 1,
                      settings: Optional[NumericsSettings] = None) -> SmoothingGapEstimate:
        """
        Both one-sided forms of the smoothing inequality on A, with r = 4 gamma:

            P(W in A) - P(Z in A) <= |E g1(W) - E g1(Z)| + sqrt(k)(eps + r)
            P(Z in A) - P(W in A) <= |E g2(W) - E g2(Z)| + sqrt(k)(eps + r)

        g1 = psi(d(., A^r)/eps) lies above the indicator of A and g2 =
        psi(d(., B^r)/eps) with B = A^(-eps-r) lies below it; d(w, C^r) =
        max(d(w, C) - r, 0) for convex C. An empty B makes g2 vanish.
        """
        cfg = settings or default_settings
        HarnessService._check_samples(samples)
        if eps <= 0:
            raise ValueError("eps must be positive")
        k = family.k
        gamma = DistributionService.gamma(family).gamma
        z_crit = StatsService.normal_quantile(cfg.confidence)
        r = 4.0 * gamma
        inner = GeometryService.erode(convex_set, eps + r)

        def smoothed(target, points: np.ndarray) -> np.ndarray:
            if target is None:
                return np.zeros(points.shape[0])
            d = GeometryService.distance_many(target, points, cfg)
            return SteinService.psi(np.maximum(d - r, 0.0) / eps)

        def task(block: int, m: int) -> np.ndarray:
            w = DistributionService.sample_w(family, StreamService.generator(seed, TAG_SUMS, block), m)
            z = StreamService.generator(seed, TAG_GAUSSIAN, block).standard_normal((m, k))
            out = []
            for points in (w, z):
                d = GeometryService.distance_many(convex_set, points, cfg)
                g1 = SteinService.psi(np.maximum(d - r, 0.0) / eps)
                g2 = smoothed(inner, points)
                out.extend([np.sum(d <= cfg.tol_mem), g1.sum(), np.square(g1).sum(), g2.sum(), np.square(g2).sum()])
            return np.array(out, dtype=float)

        totals = np.sum(HarnessService._run_blocks(task, samples, workers, cfg), axis=0)
        in_w, g1_w, g1sq_w, g2_w, g2sq_w, in_z, g1_z, g1sq_z, g2_z, g2sq_z = totals
        p_w = in_w / samples
        exact = HarnessService.gaussian_probability(convex_set)
        p_z = exact if exact is not None else in_z / samples
        ind_var = p_w * (1 - p_w) / samples + (0.0 if exact is not None else p_z * (1 - p_z) / samples)
        ind_hw = z_crit * math.sqrt(ind_var)

        def gap(sum_w, sq_w, sum_z, sq_z) -> Tuple[float, float]:
            mean_w, mean_z = sum_w / samples, sum_z / samples
            var = (max(sq_w / samples - mean_w**2, 0.0) + max(sq_z / samples - mean_z**2, 0.0)) / samples
            return abs(mean_w - mean_z), z_crit * math.sqrt(var)

        upper_gap, upper_hw = gap(g1_w, g1sq_w, g1_z, g1sq_z)
        lower_gap, lower_hw = gap(g2_w, g2sq_w, g2_z, g2sq_z)
        rhs_slack = math.sqrt(k) * (eps + r)
        upper_ok = (p_w - p_z) - ind_hw <= upper_gap + upper_hw + rhs_slack
        lower_ok = (p_z - p_w) - ind_hw <= lower_gap + lower_hw + rhs_slack
        if rhs_slack >= 1.0:
            verdict = Verdict.VACUOUS
        elif upper_ok and lower_ok:
            verdict = Verdict.PASS
        else:
            verdict = Verdict.FAIL
        return SmoothingGapEstimate(
            set_id=describe(convex_set),
            eps=eps,
            gamma=gamma,
            indicator_gap=abs(p_w - p_z),
            signed_gap=p_w - p_z,
            indicator_half_width=ind_hw,
            smooth_gap=upper_gap,
            smooth_half_width=upper_hw,
            lower_smooth_gap=lower_gap,
            lower_smooth_half_width=lower_hw,
            rhs=max(upper_gap, lower_gap) + rhs_slack,
            samples=samples,
            seed=seed,
            verdict=verdict,
        )

    @staticmethod
    def gaussian_stein_identity(field: SteinField, samples: int, seed: int, step: float = 1e-5, workers: int = 1,
                                settings: Optional[NumericsSettings] = None) -> IdentityEstimate:
        """Monte Carlo sides of sum_j E Z_j f_j(Z) = sum_j E d_j f_j(Z); agreement within 4 standard errors."""
        cfg = settings or default_settings
        HarnessService._check_samples(samples)
        k = field.dim

        def task(block: int, m: int) -> np.ndarray:
            z = StreamService.generator(seed, TAG_GAUSSIAN, block).standard_normal((m, k))
            lhs = np.sum(z * SteinService.eval_field(field, z, cfg), axis=1)
            div = np.zeros(m)
            for j in range(k):
                shift = np.zeros(k)
                shift[j] = step
                upper = SteinService.eval_field(field, z + shift, cfg)[:, j]
                lower = SteinService.eval_field(field, z - shift, cfg)[:, j]
                div += (upper - lower) / (2.0 * step)
            return np.array([lhs.sum(), np.square(lhs).sum(), div.sum(), np.square(div).sum()])

        s_l, s2_l, s_r, s2_r = np.sum(HarnessService._run_blocks(task, samples, workers, cfg), axis=0)
        lhs, rhs = s_l / samples, s_r / samples
        se_l = math.sqrt(max(s2_l / samples - lhs**2, 0.0) / samples)
        se_r = math.sqrt(max(s2_r / samples - rhs**2, 0.0) / samples)
        agree = abs(lhs - rhs) <= 4.0 * math.sqrt(se_l**2 + se_r**2)
        return IdentityEstimate(
            set_id=describe(field.convex_set),
            eps=field.eps,
            lhs=lhs,
            lhs_std_error=se_l,
            rhs=rhs,
            rhs_std_error=se_r,
            samples=samples,
            seed=seed,
            verdict=Verdict.PASS if agree else Verdict.FAIL,
        )
