import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from niss.analysis import (
    CollusionScenario,
    CollusionSetup,
    VarianceSetup,
    attacker_effective_variance,
    collusion_residuals,
    empirical_aggregate_variance,
    pair_residual_samples,
    min_tau_sq,
    simulate_collusion,
    theoretical_aggregate_variance,
)
from niss.errors import ParameterError, ShapeError


def test_theoretical_examples():
    assert theoretical_aggregate_variance([1.0, 1.0], [0.0, 0.0]) == 0.0
    assert theoretical_aggregate_variance([1.0, 2.0, 0.5], [0.3, 0.6, 0.0]) == pytest.approx(1.5)
    assert theoretical_aggregate_variance([1.0] * 3, [0.6] * 3) == pytest.approx(1.8)
    with pytest.raises(ShapeError):
        theoretical_aggregate_variance([1.0], [0.1, 0.2])


def test_empirical_matches_uniform_example():
    setup = VarianceSetup(0.01, [1.0] * 10, 0.3)
    assert setup.theoretical() == pytest.approx(3.0)
    emp = empirical_aggregate_variance(setup, 2000, 1)
    assert abs(emp - 3.0) / 3.0 < 0.05


def test_empirical_heterogeneous_sigmas():
    setup = VarianceSetup(0.01, [0.5] * 5, 1.0, topology="balanced")
    assert setup.theoretical() == pytest.approx(2.5)
    emp = empirical_aggregate_variance(setup, 2000, 2)
    assert abs(emp - 2.5) / 2.5 < 0.05


def test_empirical_without_distortion_vanishes():
    setup = VarianceSetup(0.01, [0.3, 0.7, 0.5], 0.0)
    assert empirical_aggregate_variance(setup, 1000, 3) < 1e-15


def test_empirical_requires_enough_trials():
    with pytest.raises(ParameterError):
        empirical_aggregate_variance(VarianceSetup(0.01, [1.0, 1.0], 0.3), 999, 0)


@pytest.mark.parametrize("rho,expected", [(0.0, 0.0), (0.25, 0.0), (0.5, 0.0), (0.75, 0.5), (1.0, 1.0)])
def test_min_tau_sq(rho, expected):
    assert min_tau_sq(rho) == pytest.approx(expected)


@pytest.mark.parametrize(
    "rho,tau_sq,expected",
    [(0.0, 0.0, 2.0), (1.0, 1.0, 1.0), (0.75, 0.5, 1.0), (0.5, 0.0, 1.0), (0.0, 1.0, 3.0)],
)
def test_attacker_variance_examples(rho, tau_sq, expected):
    assert attacker_effective_variance(CollusionScenario(rho, tau_sq, 1.0)) == pytest.approx(expected)


@given(st.floats(0.5, 1.0), st.floats(1e-3, 10.0))
def test_threshold_is_tight(rho, sigma_sq):
    tau = min_tau_sq(rho)
    at = attacker_effective_variance(CollusionScenario(rho, tau, sigma_sq))
    assert at == pytest.approx(sigma_sq, rel=1e-12)
    if tau > 1e-6:
        below = attacker_effective_variance(CollusionScenario(rho, tau * (1 - 1e-3), sigma_sq))
        assert below < sigma_sq


@given(st.floats(0.0, 1.0), st.floats(0.0, 5.0), st.floats(1e-3, 10.0))
def test_threshold_bounds_variance(rho, extra, sigma_sq):
    tau = min_tau_sq(rho) + extra
    assert attacker_effective_variance(CollusionScenario(rho, tau, sigma_sq)) >= sigma_sq * (1 - 1e-12)


def test_no_collusion_is_local_variance():
    # rho = 0 reduces to the plain local perturbation variance (2 + tau^2) sigma_k^2
    for tau in (0.0, 0.3, 1.0):
        assert attacker_effective_variance(CollusionScenario(0.0, tau, 1.0)) == pytest.approx(2 + tau)


def test_full_collusion_without_distortion_reveals_everything():
    r = collusion_residuals(CollusionSetup(20, 0.05, 0.0), 1.0, 5, 1)
    assert np.max(np.abs(r)) == 0.0


@pytest.mark.parametrize("rho,tau_sq", [(0.0, 0.0), (0.75, 0.5), (1.0, 1.0)])
def test_simulated_collusion(rho, tau_sq):
    res = simulate_collusion(CollusionSetup(40, 0.025, tau_sq), rho, 2000, 7)
    assert res.colluders == round(rho * 40)
    assert abs(res.empirical - res.theoretical) / res.theoretical < 0.1


@pytest.mark.parametrize("tau_sq", [0.0, 0.3, 1.0])
def test_pair_samples(tau_sq):
    x = pair_residual_samples(0.01, tau_sq, 200_000, 5)
    target = tau_sq * 0.01
    if target == 0:
        assert np.all(x == 0)
    else:
        assert abs(x.var() - target) / target < 0.03
