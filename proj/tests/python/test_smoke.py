import math

import pytest

import lowrank as lr


@pytest.fixture(scope="module")
def problem():
    spec = lr.SyntheticSpec()
    spec.m = 12
    spec.r = 2
    spec.entry_sd = 1.0
    spec.observe_fraction = 0.4
    spec.seed = 5
    return spec, lr.generate_synthetic(spec)


def test_observation_set_round_trip():
    obs = lr.ObservationSet(2, 3, [(0, 1, 4.0), (1, 2, 2.5)])
    assert len(obs) == 2
    assert obs.entry(1).value == 2.5
    flipped = obs.transposed()
    assert flipped.rows() == 3
    assert flipped.entry(0).row == 1


def test_gibbs_run(problem):
    spec, data = problem
    config = lr.SamplerConfig(rank=2, iterations=80, burn_in=20,
                              thinning=5, seed=3)
    run = lr.run_gibbs(data.observations, lr.FixedPrior(1.0), config)
    assert run.summary.retained_count == 12
    theta = run.summary.theta_mean
    assert theta.shape == (12, 12)
    assert math.isfinite(lr.rmse(theta, data.truth))
    assert len(run.summary.gamma_trace) == 12


def test_gibbs_is_deterministic(problem):
    spec, data = problem
    config = lr.SamplerConfig()
    config.rank = 2
    config.iterations = 40
    config.burn_in = 10
    config.thinning = 3
    a = lr.run_gibbs(data.observations, lr.DiscretePrior(0.05, 1.0, 0.1), config)
    b = lr.run_gibbs(data.observations, lr.DiscretePrior(0.05, 1.0, 0.1), config)
    assert (a.summary.theta_mean == b.summary.theta_mean).all()


def test_vb_run(problem):
    spec, data = problem
    config = lr.VBConfig(rank=2)
    result = lr.run_vb(data.observations, config)
    assert result.iterations >= 2
    point = lr.vb_point_estimate(result.state)
    assert math.isfinite(lr.holdout_rmse(point, data.observations))


def test_split_partitions(problem):
    spec, data = problem
    train, test = lr.train_test_split(data.observations, 0.75, 9)
    assert train.size() + test.size() == data.observations.size()
    assert train.rows() == data.observations.rows()


def test_scale_integral_agreement():
    exact = lr.scale_integral_closed_form(2.0, 1.5)
    quad = lr.scale_integral_quadrature(2.0, 1.5)
    assert quad == pytest.approx(exact, rel=1e-6)


def test_usage_errors_map_to_python():
    with pytest.raises(ValueError):
        lr.validate_prior(lr.FixedPrior(-1.0))
    with pytest.raises(ValueError):
        lr.ObservationSet(0, 3, [])
