import math

import numpy as np
import pytest
from scipy import integrate, stats

from src.exceptions import UnsupportedSetError
from src.models.distributions import GaussianSummands, RademacherCoordinates
from src.models.estimates import Verdict
from src.models.experiment import BallGrid, HalfSpaceGrid, RandomPolytopes
from src.models.geometry import Ball, HalfSpace, Polytope
from src.models.stein import SteinField
from src.services.harness_service import HarnessService
from src.services.stein_service import SteinService

SAMPLES = 200_000


def _contains(estimate, p):
    return estimate.ci_low <= p <= estimate.ci_high


def test_gaussian_shell_around_halfline(lower_halfline):
    estimate = HarnessService.gaussian_concentration(lower_halfline, 0.1, 0.1, SAMPLES, seed=1)
    exact = stats.norm.cdf(0.1) - stats.norm.cdf(-0.1)
    assert exact == pytest.approx(0.07966, abs=1e-5)
    assert _contains(estimate, exact)
    assert estimate.bound == pytest.approx(0.2)
    assert estimate.verdict is Verdict.PASS
    assert estimate.inequality == "gaussian_shell"


def test_zero_width_shell_passes(unit_disc):
    estimate = HarnessService.gaussian_concentration(unit_disc, 0.0, 0.0, SAMPLES, seed=1)
    assert estimate.p_hat == 0.0
    assert estimate.bound == 0.0
    assert estimate.verdict is Verdict.PASS


def test_gaussian_shell_around_disc(unit_disc):
    estimate = HarnessService.gaussian_concentration(unit_disc, 0.1, 0.1, SAMPLES, seed=2)
    exact = math.exp(-0.405) - math.exp(-0.605)
    assert exact == pytest.approx(0.12092, abs=1e-5)
    assert _contains(estimate, exact)
    assert estimate.bound == pytest.approx(0.28284, abs=1e-5)
    assert estimate.verdict is Verdict.PASS


def test_gaussian_shells_are_nested(square):
    pairs = [(e1, e2) for e1 in (0.0, 0.05, 0.1) for e2 in (0.0, 0.05, 0.1)]
    estimates = HarnessService.gaussian_concentration_grid(square, pairs, 50_000, seed=3)
    counts = {(e.eps1, e.eps2): e.successes for e in estimates}
    for e1, e2 in pairs:
        for f1, f2 in pairs:
            if f1 >= e1 and f2 >= e2:
                assert counts[(f1, f2)] >= counts[(e1, e2)]
    assert all(e.verdict is Verdict.PASS for e in estimates)


def test_grid_matches_single_estimates(square):
    grid = HarnessService.gaussian_concentration_grid(square, [(0.1, 0.0), (0.2, 0.1)], 50_000, seed=4)
    single = HarnessService.gaussian_concentration(square, 0.2, 0.1, 50_000, seed=4)
    assert grid[1] == single


@pytest.mark.parametrize("workers", [4, 16])
def test_results_do_not_depend_on_worker_count(unit_disc, small_blocks, workers):
    serial = HarnessService.gaussian_concentration(unit_disc, 0.1, 0.05, 100_000, seed=5, workers=1, settings=small_blocks)
    parallel = HarnessService.gaussian_concentration(unit_disc, 0.1, 0.05, 100_000, seed=5, workers=workers, settings=small_blocks)
    assert serial == parallel

    family = RademacherCoordinates(k=2, n=30)
    sets = BallGrid(radii=[0.5, 1.0]).build(2)
    assert HarnessService.discrepancy(family, sets, 100_000, seed=5, workers=1, settings=small_blocks) == \
        HarnessService.discrepancy(family, sets, 100_000, seed=5, workers=workers, settings=small_blocks)


def test_erosion_of_intersection_is_rejected(half_disc):
    with pytest.raises(UnsupportedSetError):
        HarnessService.gaussian_concentration(half_disc, 0.1, 0.1, 10_000, seed=1)
    estimate = HarnessService.gaussian_concentration(half_disc, 0.1, 0.0, 10_000, seed=1)
    assert estimate.verdict is Verdict.PASS


def test_sample_floor(unit_disc):
    with pytest.raises(ValueError):
        HarnessService.gaussian_concentration(unit_disc, 0.1, 0.1, 9_999, seed=1)


def test_leave_one_out_shell_matches_binomial_mass(lower_halfline):
    # W^(1) = S_99 / 10; the shell (0.4, 0.5] holds exactly S_99 = 5
    family = RademacherCoordinates(k=1, n=100)
    estimate = HarnessService.sum_concentration_fixed_eps(family, 1, lower_halfline, 0.1, SAMPLES, seed=6)
    exact = stats.binom.pmf(52, 99, 0.5)
    assert _contains(estimate, exact)
    assert estimate.gamma == pytest.approx(0.1)
    assert estimate.bound == pytest.approx(4.31)
    assert estimate.verdict is Verdict.VACUOUS


def test_leave_one_out_shell_for_gaussian_summands(lower_halfline):
    n = 10_000
    family = GaussianSummands(k=1, n=n)
    estimate = HarnessService.sum_concentration_fixed_eps(family, 1, lower_halfline, 0.05, SAMPLES, seed=7)
    gamma = 2.0 * math.sqrt(2.0 / math.pi) / math.sqrt(n)
    sigma = math.sqrt(1.0 - 1.0 / n)
    exact = stats.norm.cdf((4 * gamma + 0.05) / sigma) - stats.norm.cdf(4 * gamma / sigma)
    assert _contains(estimate, exact)
    assert estimate.verdict is Verdict.PASS


def test_leave_one_out_shell_grows_with_eps(unit_disc):
    family = GaussianSummands(k=2, n=400)
    estimates = HarnessService.sum_concentration_grid(family, 3, unit_disc, [0.05, 0.5, 3.0], 50_000, seed=8)
    successes = [e.successes for e in estimates]
    assert successes == sorted(successes)
    assert all(e.verdict in (Verdict.PASS, Verdict.VACUOUS) for e in estimates)


def test_random_radius_uses_mean_norm(lower_halfline):
    n = 100
    estimate = HarnessService.sum_concentration_random_eps(GaussianSummands(k=1, n=n), 1, lower_halfline, SAMPLES, seed=9)
    assert estimate.eps1 == pytest.approx(math.sqrt(2.0 / (math.pi * n)))
    assert estimate.inequality == "random_radius_shell"
    rademacher = HarnessService.sum_concentration_random_eps(RademacherCoordinates(k=1, n=n), 1, lower_halfline, SAMPLES, seed=9)
    assert rademacher.eps1 == pytest.approx(0.1)
    assert rademacher.bound == pytest.approx(4.1 * 0.1 + 39 * 0.1)


def test_random_radius_agrees_with_direct_simulation(unit_disc):
    # W lands in the shell iff 4 gamma < d(W) <= 4 gamma + |X_i|
    family = GaussianSummands(k=2, n=400)
    estimate = HarnessService.sum_concentration_random_eps(family, 2, unit_disc, SAMPLES, seed=10)
    gamma = estimate.gamma
    rng = np.random.default_rng(99)
    w_minus = rng.standard_normal((SAMPLES, 2)) * math.sqrt(399 / 400)
    x_i = rng.standard_normal((SAMPLES, 2)) * math.sqrt(1 / 400)
    d = np.maximum(np.linalg.norm(w_minus + x_i, axis=1) - 1.0, 0.0)
    direct = np.mean((d > 4 * gamma) & (d <= 4 * gamma + np.linalg.norm(x_i, axis=1)))
    se = math.sqrt(direct * (1 - direct) / SAMPLES) * math.sqrt(2)
    assert abs(estimate.p_hat - direct) <= 4 * se


def test_gaussian_summands_show_no_discrepancy():
    family = GaussianSummands(k=2, n=50)
    sets = HalfSpaceGrid(directions=2, seed=1).build(2) + BallGrid().build(2)
    estimate = HarnessService.discrepancy(family, sets, SAMPLES, seed=11)
    assert len(estimate.records) == len(sets)
    for record in estimate.records:
        assert record.p_z_method == "exact"
        assert record.discrepancy <= 4.0 * record.std_error


def test_rademacher_lattice_discrepancy_at_zero():
    family = RademacherCoordinates(k=1, n=100)
    sets = HalfSpaceGrid().build(1)
    estimate = HarnessService.discrepancy(family, sets, SAMPLES, seed=12, set_family="halfspace_grid")
    exact = stats.binom.pmf(50, 100, 0.5) / 2
    assert exact == pytest.approx(0.03979, abs=1e-5)
    assert estimate.worst_set == "halfspace-0-t0"
    assert abs(estimate.sup_hat - exact) <= 4.0 * estimate.std_error
    assert estimate.bound == pytest.approx(11.5)
    assert estimate.verdict is Verdict.VACUOUS


def test_discrepancy_in_three_dimensions_is_vacuous():
    family = RademacherCoordinates(k=3, n=900)
    estimate = HarnessService.discrepancy(family, HalfSpaceGrid(directions=3).build(3), 50_000, seed=13)
    assert estimate.gamma == pytest.approx(0.17321, abs=1e-5)
    assert estimate.bound == pytest.approx(115 * math.sqrt(3) * 0.17321, rel=1e-4)
    assert estimate.sup_hat <= 1.0
    assert estimate.verdict is Verdict.VACUOUS


def test_polytope_probabilities_use_reference_sample():
    family = GaussianSummands(k=2, n=10)
    sets = RandomPolytopes(count=2, seed=3).build(2)
    estimate = HarnessService.discrepancy(family, sets, 50_000, seed=14)
    for record in estimate.records:
        assert record.p_z_method == "monte_carlo"
        assert record.discrepancy <= 4.0 * record.std_error


def test_exact_gaussian_probabilities():
    assert HarnessService.gaussian_probability(HalfSpace(normal=(0.0, 1.0), offset=1.0)) == pytest.approx(stats.norm.cdf(1.0))
    assert HarnessService.gaussian_probability(Ball(center=(0.0, 0.0), radius=1.0)) == pytest.approx(1 - math.exp(-0.5))
    assert HarnessService.gaussian_probability(Ball(center=(1.0, 0.0), radius=0.0)) == 0.0
    assert HarnessService.gaussian_probability(Polytope.box([-1.0], [1.0])) is None


def test_adversarial_search_on_gaussian_summands():
    estimate = HarnessService.adversarial_halfspace_search(GaussianSummands(k=2, n=20), SAMPLES, seed=15, restarts=2)
    record = estimate.records[0]
    assert record.discrepancy <= 3.0 * record.std_error
    assert estimate.exploration_value >= record.discrepancy - 3.0 * record.std_error


def test_adversarial_search_in_one_dimension_finds_lattice_gap():
    family = RademacherCoordinates(k=1, n=100)
    adversarial = HarnessService.adversarial_halfspace_search(family, SAMPLES, seed=16, restarts=1)
    grid = HarnessService.discrepancy(family, HalfSpaceGrid().build(1), SAMPLES, seed=16)
    combined = math.hypot(adversarial.std_error, grid.std_error)
    assert abs(adversarial.sup_hat - grid.sup_hat) <= 3.0 * combined


def test_adversarial_search_from_coordinate_axis():
    family = RademacherCoordinates(k=2, n=100)
    estimate = HarnessService.adversarial_halfspace_search(
        family, SAMPLES, seed=17, restarts=1, initial_direction=[1.0, 0.0]
    )
    lattice = stats.binom.pmf(50, 100, 0.5) / 2
    assert estimate.sup_hat >= lattice - 3.0 * estimate.std_error
    assert estimate.set_family == "adversarial_halfspaces"


def test_adversarial_search_needs_a_restart():
    with pytest.raises(ValueError):
        HarnessService.adversarial_halfspace_search(GaussianSummands(k=1, n=1), SAMPLES, seed=1, restarts=0)


def test_smoothing_gap_on_lattice(lower_halfline):
    family = RademacherCoordinates(k=1, n=100)
    estimate = HarnessService.smoothing_gap(family, lower_halfline, 0.1, SAMPLES, seed=18)
    assert estimate.indicator_gap == pytest.approx(stats.binom.pmf(50, 100, 0.5) / 2, abs=5 * estimate.indicator_half_width)
    assert estimate.rhs >= estimate.smooth_gap + 0.5 - 1e-12
    assert estimate.verdict is Verdict.PASS


def test_smoothing_gap_lower_side_uses_eroded_set(lower_halfline):
    # B = (-inf, -0.5]; g2(w) = psi(max(w + 0.1, 0) / 0.1)
    family = RademacherCoordinates(k=1, n=100)
    estimate = HarnessService.smoothing_gap(family, lower_halfline, 0.1, SAMPLES, seed=22)
    g2_w = stats.binom.cdf(49, 100, 0.5)
    ramp, _ = integrate.quad(lambda z: SteinService.psi((z + 0.1) / 0.1) * stats.norm.pdf(z), -0.1, 0.0)
    g2_z = stats.norm.cdf(-0.1) + ramp
    assert estimate.lower_smooth_gap == pytest.approx(abs(g2_w - g2_z), abs=2 * estimate.lower_smooth_half_width)
    assert estimate.indicator_gap == pytest.approx(abs(estimate.signed_gap))
    assert estimate.rhs == pytest.approx(max(estimate.smooth_gap, estimate.lower_smooth_gap) + 0.5)


def test_smoothing_gap_on_gaussian_sums_passes_both_sides(lower_halfline):
    estimate = HarnessService.smoothing_gap(GaussianSummands(k=1, n=50), lower_halfline, 0.05, SAMPLES, seed=23)
    assert estimate.lower_smooth_gap <= estimate.lower_smooth_half_width
    assert estimate.smooth_gap <= estimate.smooth_half_width
    assert estimate.verdict is Verdict.PASS


def test_smoothing_gap_with_empty_erosion_has_no_lower_term(unit_disc):
    # eps + 4 gamma > 1, so the eroded disc is empty and g2 vanishes
    estimate = HarnessService.smoothing_gap(RademacherCoordinates(k=2, n=400), unit_disc, 0.5, 20_000, seed=24)
    assert estimate.lower_smooth_gap == 0.0
    assert estimate.lower_smooth_half_width == 0.0
    assert estimate.verdict is Verdict.VACUOUS


def test_smoothing_gap_is_vacuous_for_large_eps(unit_disc):
    estimate = HarnessService.smoothing_gap(GaussianSummands(k=2, n=4), unit_disc, 1.0, 20_000, seed=19)
    assert estimate.verdict is Verdict.VACUOUS


def test_gaussian_integration_by_parts_on_halfline(lower_halfline):
    eps = 0.5
    estimate = HarnessService.gaussian_stein_identity(SteinField(convex_set=lower_halfline, eps=eps), SAMPLES, seed=20)
    # f(x) = min(max(x, 0), eps), so E f'(Z) = P(0 < Z < eps)
    exact = stats.norm.cdf(eps) - 0.5
    assert abs(estimate.rhs - exact) <= 4.0 * estimate.rhs_std_error + 1e-4
    assert abs(estimate.lhs - exact) <= 4.0 * estimate.lhs_std_error
    assert estimate.verdict is Verdict.PASS


@pytest.mark.parametrize("eps", [0.1, 1.0])
def test_gaussian_integration_by_parts_on_polytope(eps):
    field = SteinField(convex_set=Polytope.random(3, 6, seed=2), eps=eps)
    assert HarnessService.gaussian_stein_identity(field, 50_000, seed=21).verdict is Verdict.PASS
