import numpy as np
import pytest

from niss.data import Dataset, partition, synth_train_test
from niss.dp import PrivacySpec, compute_sigma
from niss.errors import ConfigError, ProtocolError, RoundFailure
from niss.federation import (
    ClientProfile,
    FederationConfig,
    aggregate,
    aggregation_weight,
    aggregation_weights,
    client_update,
    local_train,
    participant_count,
    run_training,
    select_participants,
)
from niss.models import ModelSpec
from niss.numerics import RngStream


@pytest.mark.parametrize("k,c,m", [(100, 0.3, 30), (10, 0.05, 1), (10, 1.0, 10), (20, 0.5, 10)])
def test_participant_count(k, c, m):
    assert participant_count(k, c) == m
    chosen = select_participants(k, c, RngStream(1, ("p",)))
    assert len(chosen) == len(set(chosen)) == m


def test_bad_fraction():
    with pytest.raises(ConfigError):
        select_participants(10, 0.0, RngStream(1))


def test_weights():
    assert aggregation_weight(100, [100, 100, 100, 100]) == 0.25
    assert aggregation_weights({0: 50, 1: 150}) == {0: 0.25, 1: 0.75}
    assert aggregation_weights({3: 17}) == {3: 1.0}
    w = aggregation_weights({i: d for i, d in enumerate([3, 8, 1, 9, 4])})
    assert sum(w.values()) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ProtocolError):
        aggregation_weight(1, [])


def test_aggregate_examples():
    np.testing.assert_array_equal(aggregate([[1, 2], [3, 4]]), [4, 6])
    np.testing.assert_array_equal(aggregate([[5.0]]), [5.0])
    with pytest.raises(ProtocolError):
        aggregate([])


def _least_squares(w, batch):
    x, y = batch
    r = x[:, 0] * w[0] - y
    return float(np.mean(r**2)), np.array([np.mean(2 * r * x[:, 0])])


def test_single_sgd_step_least_squares():
    data = Dataset(np.array([[1.0]]), np.array([1]), 2)
    w = local_train(None, np.zeros(1), data, 1, 1, 0.1, RngStream(0), loss_grad=_least_squares)
    assert w[0] == pytest.approx(0.2, abs=1e-15)


def _tiny_setup(k=4, n=80, tau_sq=0.0):
    train, test = synth_train_test(3, 4, n, 60, 4.0, RngStream(2, ("data",)))
    parts = partition(train, k, "iid", 2, RngStream(2, ("part",)))
    privacy = PrivacySpec(10.0, 1e-4, 0.1)
    profiles = [ClientProfile(i, parts[i], privacy, tau_sq) for i in range(k)]
    return profiles, ModelSpec("softmax-regression", 4, 3), test


def _cfg(mode, **kw):
    base = dict(k=4, c=1.0, local_epochs=1, batch_size=5, learning_rate=0.1, rounds=3, mode=mode,
                clip_threshold=3.0, unit_sigma_sq=0.0001)
    base.update(kw)
    return FederationConfig(**base)


def test_zero_learning_rate_returns_weighted_model():
    profiles, spec, _ = _tiny_setup()
    w_t = np.linspace(-1, 1, spec.num_params)
    out = client_update(profiles[0], spec, w_t, 0.25, _cfg("plain-fedavg", learning_rate=0.0), 1, 0)
    np.testing.assert_allclose(out, 0.25 * w_t, rtol=0, atol=1e-15)


def test_update_delta_is_clipped():
    profiles, spec, _ = _tiny_setup()
    w_t = np.zeros(spec.num_params)
    out = client_update(profiles[0], spec, w_t, 1.0, _cfg("plain-fedavg", learning_rate=5.0, clip_threshold=0.01), 1, 0)
    assert np.linalg.norm(out - w_t) <= 0.01 * (1 + 1e-12)


def test_niss_update_requires_perturbation():
    profiles, spec, _ = _tiny_setup()
    with pytest.raises(ProtocolError):
        client_update(profiles[0], spec, np.zeros(spec.num_params), 1.0, _cfg("niss"), 1, 0)


def test_zero_rounds():
    profiles, spec, test = _tiny_setup()
    assert run_training(_cfg("plain-fedavg", rounds=0), profiles, spec, 0, test) == []


def test_niss_without_distortion_matches_plain():
    profiles, spec, test = _tiny_setup()
    plain = run_training(_cfg("plain-fedavg", rounds=5), profiles, spec, 11, test)
    niss = run_training(_cfg("niss", rounds=5), profiles, spec, 11, test)
    for a, b in zip(plain, niss):
        np.testing.assert_allclose(a.params, b.params, rtol=0, atol=1e-9)
        assert a.participants == b.participants
        assert b.noise_var_theoretical == 0.0


def test_dp_aggregate_noise_variance():
    profiles, spec, test = _tiny_setup()
    reports = run_training(_cfg("dp-fedavg", rounds=40, learning_rate=0.0), profiles, spec, 5, test)
    expected = 4 * compute_sigma(profiles[0].privacy).sigma_sq
    assert reports[0].noise_var_theoretical == pytest.approx(expected)
    # 15 coordinates per round, 40 rounds
    emp = np.mean([r.noise_var_empirical for r in reports])
    assert abs(emp - expected) / expected < 0.15


def test_niss_full_distortion_matches_dp_noise_level():
    # with tau^2 = 1 the aggregate niss noise has the same variance as dp-fedavg
    train, test = synth_train_test(3, 40, 200, 60, 4.0, RngStream(2, ("data",)))
    parts = partition(train, 10, "iid", 2, RngStream(2, ("part",)))
    privacy = PrivacySpec(10.0, 1e-4, 0.1)
    sigma_sq = compute_sigma(privacy).sigma_sq
    profiles = [ClientProfile(i, parts[i], privacy, 1.0) for i in range(10)]
    spec = ModelSpec("softmax-regression", 40, 3)
    cfg = FederationConfig(k=10, c=1.0, local_epochs=1, batch_size=10, learning_rate=0.0, rounds=60,
                           mode="niss", unit_sigma_sq=sigma_sq / 2, topology="balanced")
    reports = run_training(cfg, profiles, spec, 3, test)
    dp_level = 10 * sigma_sq
    assert reports[0].noise_var_theoretical == pytest.approx(dp_level)
    emp = np.mean([r.noise_var_empirical for r in reports])
    assert abs(emp - dp_level) / dp_level < 0.05


def test_dp_training_lags_plain():
    train, test = synth_train_test(3, 10, 300, 300, 4.0, RngStream(3, ("data",)))
    parts = partition(train, 5, "iid", 2, RngStream(3, ("part",)))
    profiles = [ClientProfile(i, parts[i], PrivacySpec(1.0, 1e-4, 0.1)) for i in range(5)]
    spec = ModelSpec("softmax-regression", 10, 3)
    kw = dict(k=5, c=1.0, local_epochs=2, batch_size=10, learning_rate=0.05, rounds=10)
    plain = run_training(FederationConfig(mode="plain-fedavg", **kw), profiles, spec, 1, test)
    dp = run_training(FederationConfig(mode="dp-fedavg", **kw), profiles, spec, 1, test)
    assert all(d.test_accuracy < p.test_accuracy for p, d in zip(plain[5:], dp[5:]))


def test_threaded_workers_match_serial():
    profiles, spec, test = _tiny_setup()
    a = run_training(_cfg("dp-fedavg"), profiles, spec, 4, test)
    b = run_training(_cfg("dp-fedavg", workers=3), profiles, spec, 4, test)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.params, y.params)


def test_round_failure_names_round():
    profiles, spec, test = _tiny_setup(k=4)
    # one participant per round cannot run a share exchange
    with pytest.raises(RoundFailure) as info:
        run_training(_cfg("niss", c=0.25), profiles, spec, 0, test)
    assert info.value.round == 1
    assert isinstance(info.value.cause, ProtocolError)


def test_profile_count_checked():
    profiles, spec, test = _tiny_setup(k=4)
    with pytest.raises(ConfigError):
        run_training(_cfg("plain-fedavg", k=5), profiles, spec, 0, test)
