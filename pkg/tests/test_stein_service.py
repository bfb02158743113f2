import numpy as np
import pytest
from pydantic import ValidationError

from src.exceptions import NonConvergenceError
from src.models.geometry import Ball, HalfSpace, Polytope
from src.models.stein import SmoothedIndicator, SteinField
from src.services.stein_service import SteinService


@pytest.fixture
def field(halfplane):
    return SteinField(convex_set=halfplane, eps=1.0)


def test_field_inside_shell_is_displacement(field):
    assert np.allclose(SteinService.eval_field(field, [0.5, 7.0]), [0.5, 0.0])


def test_field_beyond_shell_is_capped(field):
    assert np.allclose(SteinService.eval_field(field, [3.0, 7.0]), [1.0, 0.0])


def test_field_vanishes_on_closure(field, unit_disc):
    assert np.all(SteinService.eval_field(field, [-2.0, 1.0]) == 0.0)
    assert np.all(SteinService.eval_field(field, [0.0, 1.0]) == 0.0)
    ball_field = SteinField(convex_set=unit_disc, eps=0.3)
    assert np.all(SteinService.eval_field(ball_field, [0.0, 1.0]) == 0.0)
    assert np.all(SteinService.eval_field(ball_field, [0.3, 0.4]) == 0.0)


def test_field_norm_never_exceeds_eps(square):
    points = np.random.default_rng(2).uniform(-5, 5, size=(5000, 2))
    for eps in (0.05, 0.5, 2.0):
        values = SteinService.eval_field(SteinField(convex_set=square, eps=eps), points)
        assert np.linalg.norm(values, axis=1).max() <= eps + 1e-12


def test_field_single_point_raises_on_nonconvergence(numerics):
    wedge = Polytope(faces=[HalfSpace.from_direction([1.0, 0.2], 1.0), HalfSpace.from_direction([1.0, -0.2], 1.0)])
    capped = numerics.with_overrides({"max_iter": 1, "polish": False})
    with pytest.raises(NonConvergenceError):
        SteinService.eval_field(SteinField(convex_set=wedge, eps=0.5), [5.0, 0.1], capped)


def test_eps_must_be_positive(halfplane):
    with pytest.raises(ValidationError):
        SteinField(convex_set=halfplane, eps=0.0)
    with pytest.raises(ValidationError):
        SmoothedIndicator(convex_set=halfplane, eps=-1.0)


@pytest.mark.parametrize(
    "t, expected",
    [(-0.2, 1.0), (0.0, 1.0), (0.25, 0.875), (0.5, 0.5), (0.75, 0.125), (1.0, 0.0), (1.2, 0.0)],
)
def test_psi_values(t, expected):
    assert SteinService.psi(t) == pytest.approx(expected)


def test_psi_is_continuously_differentiable():
    t = np.array([0.5 - 1e-9, 0.5 + 1e-9, 1e-9, 1.0 - 1e-9])
    prime = SteinService.psi_prime(t)
    assert prime[0] == pytest.approx(prime[1], abs=1e-6)
    assert prime[2] == pytest.approx(0.0, abs=1e-6)
    assert prime[3] == pytest.approx(0.0, abs=1e-6)
    assert np.all(SteinService.psi_prime(np.linspace(-1, 2, 301)) >= -2.0)


def test_smoothed_indicator_on_ball():
    indicator = SmoothedIndicator(convex_set=Ball(center=(0.0, 0.0), radius=1.0), eps=0.4)
    assert SteinService.eval_smoothed(indicator, [1.1, 0.0]) == pytest.approx(0.875)
    assert SteinService.eval_smoothed(indicator, [0.2, 0.3]) == 1.0
    assert SteinService.eval_smoothed(indicator, [1.4, 0.0]) == 0.0
    assert SteinService.eval_smoothed(indicator, [3.0, 3.0]) == 0.0


def test_gradient_vanishes_deep_inside(square):
    indicator = SmoothedIndicator(convex_set=square, eps=0.5)
    assert np.allclose(SteinService.grad_smoothed(indicator, [0.1, -0.2]), 0.0)


def test_gradient_matches_closed_form_outside_halfspace(halfplane):
    eps = 0.8
    indicator = SmoothedIndicator(convex_set=halfplane, eps=eps)
    # d = eps / 4, psi'(1/4) = -1
    grad = SteinService.grad_smoothed(indicator, [0.2, 3.0])
    assert grad == pytest.approx([-1.0 / eps, 0.0], abs=1e-5)


def test_gradient_rows_are_independent(unit_disc):
    indicator = SmoothedIndicator(convex_set=unit_disc, eps=0.5)
    points = np.array([[1.1, 0.0], [0.0, 1.3], [0.0, 0.0]])
    batch = SteinService.grad_smoothed(indicator, points)
    for row, point in zip(batch, points):
        assert row == pytest.approx(SteinService.grad_smoothed(indicator, point), abs=1e-9)
