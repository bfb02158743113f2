import numpy as np
import pytest

from src.models.estimates import Verdict
from src.models.geometry import Ball, HalfSpace, Polytope
from src.models.stein import SteinField
from src.services.geometry_service import GeometryService
from src.services.lemma_service import LemmaService

PROPERTIES = {
    "norm_bound",
    "monotone",
    "diagonal_derivative",
    "coordinate_lipschitz",
    "cosine_bound",
    "smoothed_sandwich",
    "smoothed_gradient_bound",
    "smoothed_gradient_lipschitz",
}


def test_scenario_sets_cover_three_shapes():
    sets = LemmaService.scenario_sets(3, seed=1)
    assert [type(s) for s in sets] == [HalfSpace, Ball, Polytope]
    assert all(s.dim == 3 for s in sets)
    assert GeometryService.contains(sets[2], np.zeros(3))
    assert GeometryService.contains(sets[0], np.zeros(3))


def test_shell_points_sit_at_requested_distance(square):
    rng = np.random.default_rng(0)
    points = LemmaService.sample_shell(square, 0.2, 0.4, rng, 500)
    d = GeometryService.distance_many(square, points)
    assert points.shape == (500, 2)
    assert d.min() >= 0.2 - 1e-9
    assert d.max() <= 0.4 + 1e-9


@pytest.mark.parametrize("k", [1, 2, 3])
@pytest.mark.parametrize("eps", [0.1, 1.0])
def test_every_property_holds_on_scenarios(k, eps):
    for convex_set in LemmaService.scenario_sets(k, seed=7):
        tallies = LemmaService.run_scenario(convex_set, eps, points=4000, probes=1500, seed=7)
        assert {t.property for t in tallies} == PROPERTIES
        for tally in tallies:
            assert tally.violations == 0, (tally.property, tally.scenario, tally.worst_margin)
            assert tally.verdict is Verdict.PASS
            assert tally.probes > 0


def test_monotone_detects_a_non_monotone_field(halfplane, numerics):
    field = SteinField(convex_set=halfplane, eps=1.0)
    eta = np.array([[0.5, 0.0]])
    xi = np.array([[0.2, 0.0]])
    assert LemmaService.check_monotone(field, eta, xi, numerics, "ok").violations == 0
    # swapping the roles of the arguments keeps the inner product non-negative too
    assert LemmaService.check_monotone(field, eta + xi, -xi, numerics, "ok").violations == 0


def test_cosine_bound_on_disc_band(unit_disc, numerics):
    field = SteinField(convex_set=unit_disc, eps=0.5)
    band = LemmaService.sample_shell(unit_disc, 0.05, 0.45, np.random.default_rng(3), 1000, numerics)
    tally = LemmaService.check_cosine_bound(field, band, numerics, "disc")
    assert tally.violations == 0
    assert tally.probes > 1000
