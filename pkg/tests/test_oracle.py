import itertools
import math

import numpy as np
import pytest

from etcphd.errors import SizeLimitError
from etcphd.oracle import (
    exact_posterior,
    likelihood_by_assignments,
    multi_target_likelihood,
    tuple_prior,
)
from etcphd.pgf import CardinalityPgf
from etcphd.statespace import (
    DiscreteKernel,
    MeasurementSet,
    SensorModel,
    SpatialDensity,
    StateGrid,
    normalize_intensity,
)
from etcphd.synthetic import micro_scenario


def small_model(p_d, clutter_card, meas_cards, likelihood, clutter_density, weights=None):
    grid = StateGrid.create(weights if weights is not None else [1.0] * len(p_d))
    kernel = DiscreteKernel(likelihood=likelihood, clutter_density=clutter_density)
    return SensorModel.create(
        grid=grid,
        detection_prob=p_d,
        clutter_card=clutter_card,
        meas_card=meas_cards,
        kernel=kernel,
    )


def test_tuple_prior_examples():
    grid = StateGrid.create([1.0, 1.0])
    density = SpatialDensity.create(grid, [0.75, 0.25])

    weights = tuple_prior(CardinalityPgf.finite([1.0]), density, n_max=2)
    assert weights[()] == 1.0
    assert math.fsum(weights.values()) == pytest.approx(1.0, abs=0.0)

    weights = tuple_prior(CardinalityPgf.finite([0.0, 1.0]), density, n_max=2)
    assert weights[(0,)] == pytest.approx(0.75, abs=0.0)
    assert weights[(1,)] == pytest.approx(0.25, abs=0.0)

    uniform = SpatialDensity.create(grid, [0.5, 0.5])
    weights = tuple_prior(CardinalityPgf.finite([0.0, 0.0, 1.0]), uniform, n_max=2)
    for combo in itertools.product(range(2), repeat=2):
        assert weights[combo] == pytest.approx(0.25, rel=1e-15)


def test_tuple_prior_rejects_oversized_support():
    grid = StateGrid.create([1.0])
    density = SpatialDensity.create(grid, [1.0])
    with pytest.raises(SizeLimitError):
        tuple_prior(CardinalityPgf.finite([0.5, 0.1, 0.1, 0.1, 0.1, 0.1]), density, n_max=2)


def clutter_janossy(measurements, model):
    size = len(measurements)
    value = math.factorial(size) * model.clutter_card.prob(size)
    for z in measurements.values:
        value *= model.kernel.clutter_value(z)
    return value


def test_likelihood_empty_target_tuple_is_clutter_density():
    model = small_model(
        p_d=[0.8], clutter_card=CardinalityPgf.finite([0.2, 0.5, 0.3]),
        meas_cards=[CardinalityPgf.finite([0.3, 0.7])],
        likelihood=[[0.6, 0.4]], clutter_density=[0.5, 0.5],
    )
    measurements = MeasurementSet.of([0, 1])
    value = multi_target_likelihood(measurements, (), model)
    assert value == pytest.approx(clutter_janossy(measurements, model), rel=1e-15)


def test_likelihood_empty_measurement_set():
    model = small_model(
        p_d=[0.8, 0.6], clutter_card=CardinalityPgf.finite([0.3, 0.7]),
        meas_cards=[CardinalityPgf.finite([0.3, 0.7])] * 2,
        likelihood=[[0.6, 0.4]] * 2, clutter_density=[0.5, 0.5],
    )
    measurements = MeasurementSet.of([])
    value = multi_target_likelihood(measurements, (0, 1), model)
    expected = 0.3 * (1 - 0.8 + 0.8 * 0.3) * (1 - 0.6 + 0.6 * 0.3)
    assert value == pytest.approx(expected, rel=1e-15)


def test_likelihood_forced_target_origin():
    # No clutter at all, one target, one measurement: the only explanation
    # is detection with a single-point cluster.
    model = small_model(
        p_d=[0.8], clutter_card=CardinalityPgf.finite([1.0]),
        meas_cards=[CardinalityPgf.finite([0.3, 0.6, 0.1])],
        likelihood=[[0.6, 0.4]], clutter_density=[0.5, 0.5],
    )
    measurements = MeasurementSet.of([1])
    value = multi_target_likelihood(measurements, (0,), model)
    assert value == pytest.approx(0.8 * 0.6 * 0.4, rel=1e-15)


def test_likelihood_symmetric_under_target_permutation():
    rng = np.random.default_rng(21)
    for seed in range(10):
        scenario = micro_scenario(seed)
        model = scenario.model
        measurements = scenario.measurements
        points = rng.integers(0, model.grid.size, 3)
        for perm in itertools.permutations(points):
            a = multi_target_likelihood(measurements, tuple(points), model)
            b = multi_target_likelihood(measurements, perm, model)
            assert abs(a - b) <= 1e-12 * max(1.0, abs(a))


def test_two_enumerations_agree_on_100_micro_scenarios():
    rng = np.random.default_rng(77)
    for seed in range(100):
        scenario = micro_scenario(1000 + seed)
        model = scenario.model
        measurements = scenario.measurements
        n_targets = int(rng.integers(0, 4))
        targets = tuple(int(v) for v in rng.integers(0, model.grid.size, n_targets))
        a = multi_target_likelihood(measurements, targets, model)
        b = likelihood_by_assignments(measurements, targets, model)
        assert abs(a - b) <= 1e-12 * max(1.0, abs(a), abs(b))


def test_posterior_no_detection_keeps_prior():
    scenario = micro_scenario(5)
    model = small_model(
        p_d=[0.0] * scenario.grid.size,
        clutter_card=scenario.model.clutter_card,
        meas_cards=scenario.model.meas_card,
        likelihood=scenario.model.kernel.likelihood,
        clutter_density=scenario.model.kernel.clutter_density,
        weights=scenario.grid.weights,
    )
    _, density = normalize_intensity(scenario.prior_intensity)
    posterior = exact_posterior(scenario.prior_card, density, scenario.measurements,
                                model, n_max=scenario.prior_card.support_max)
    assert posterior.cardinality == pytest.approx(list(scenario.prior_card.probs), abs=1e-14)
    prior_intensity = scenario.prior_card.mean() * density.values
    assert posterior.intensity == pytest.approx(prior_intensity, rel=1e-12)


def test_posterior_empty_prior_stays_empty():
    model = small_model(
        p_d=[0.9], clutter_card=CardinalityPgf.poisson(0.8),
        meas_cards=[CardinalityPgf.poisson(1.0)],
        likelihood=[[0.6, 0.4]], clutter_density=[0.5, 0.5],
    )
    density = SpatialDensity.create(model.grid, [1.0])
    posterior = exact_posterior(CardinalityPgf.finite([1.0]), density,
                                MeasurementSet.of([0, 1]), model, n_max=0)
    assert posterior.cardinality[0] == 1.0


def test_posterior_moment_identities():
    for seed in range(20):
        scenario = micro_scenario(2000 + seed)
        _, density = normalize_intensity(scenario.prior_intensity)
        posterior = exact_posterior(
            scenario.prior_card, density, scenario.measurements, scenario.model,
            n_max=scenario.prior_card.support_max,
        )
        assert math.fsum(posterior.cardinality.tolist()) == pytest.approx(1.0, abs=1e-13)
        mass = float(np.dot(posterior.intensity, scenario.grid.weights))
        mean = float(np.dot(np.arange(posterior.cardinality.size), posterior.cardinality))
        assert mass == pytest.approx(mean, abs=1e-12)


def test_oracle_scale_caps():
    model = small_model(
        p_d=[0.5] * 6, clutter_card=CardinalityPgf.poisson(0.5),
        meas_cards=[CardinalityPgf.poisson(0.5)] * 6,
        likelihood=[[0.5, 0.5]] * 6, clutter_density=[0.5, 0.5],
    )
    density = SpatialDensity.create(model.grid, [1.0 / 6] * 6)
    with pytest.raises(SizeLimitError):
        exact_posterior(CardinalityPgf.finite([1.0]), density,
                        MeasurementSet.of([0]), model)
