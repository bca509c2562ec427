import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bobw_bandit.core import SpecError
from bobw_bandit.environments import (
    Adaptive,
    Bernoulli,
    Beta,
    Constant,
    CorruptionSpec,
    Discrete,
    Environment,
    FlipOptimalPrefix,
    RandomSpikes,
    Scripted,
    StochasticallyConstrained,
    StochasticSpec,
    WorstCaseSwitch,
    ground_truth,
    realized_corruption,
)
from bobw_bandit.harness import parse_config, run_trial


def rollout(spec, horizon, seed=0):
    env = Environment(spec)
    env.reset(horizon, np.random.default_rng(seed))
    rows = [env.gen_round(t, []) for t in range(1, horizon + 1)]
    return env, np.array([r[0] for r in rows])


def test_constant_spec_repeats():
    _, m = rollout(StochasticSpec((Constant(0.2), Constant(0.8))), 50)
    assert np.all(m == [0.2, 0.8])


def test_bernoulli_means_within_binomial_ci():
    n = 100_000
    _, m = rollout(StochasticSpec((Bernoulli(0.1), Bernoulli(0.5))), n, seed=3)
    for i, mu in enumerate((0.1, 0.5)):
        assert abs(m[:, i].mean() - mu) <= 3 * math.sqrt(mu * (1 - mu) / n)


def test_flip_prefix_budget_respected():
    spec = CorruptionSpec(StochasticSpec((Bernoulli(0.2), Bernoulli(0.6), Bernoulli(0.7))), 10.0,
                          FlipOptimalPrefix())
    env, m = rollout(spec, 1000, seed=1)
    c = realized_corruption(env.clean_matrix, m)
    assert 0 < c <= 10 + 1e-12
    first = np.argmax(~env.attack_window)
    assert np.all(m[:first, 0] == 1.0) or c == pytest.approx(10.0)
    assert np.array_equal(m[first:], env.clean_matrix[first:])


def test_random_spikes_budget_respected():
    spec = CorruptionSpec(StochasticSpec((Beta(2, 5), Beta(5, 2))), 7.5, RandomSpikes(0.3))
    env, m = rollout(spec, 500, seed=2)
    assert 0 < realized_corruption(env.clean_matrix, m) <= 7.5 + 1e-12
    assert np.all((m >= 0) & (m <= 1))


def test_ground_truth_examples():
    g = ground_truth(StochasticSpec((Bernoulli(0.1), Bernoulli(0.3))))
    assert np.allclose(g.mu, [0.1, 0.3]) and np.allclose(g.sigma_sq, [0.09, 0.21])
    assert np.allclose(g.gaps, [0.0, 0.2]) and g.optimal_arm == 0
    assert ground_truth(StochasticSpec((Constant(0.2), Constant(0.8)))).sigma_sq == (0.0, 0.0)
    beta = ground_truth(StochasticSpec((Beta(2, 2), Constant(0.9))))
    assert beta.mu[0] == pytest.approx(0.5) and beta.sigma_sq[0] == pytest.approx(1 / 20)


def test_ground_truth_rejects_adversarial():
    with pytest.raises(SpecError):
        ground_truth(Scripted(np.zeros((3, 2))))


def test_duplicate_optimum_warns():
    with pytest.warns(UserWarning):
        ground_truth(StochasticSpec((Bernoulli(0.2), Bernoulli(0.2), Bernoulli(0.5))))


@given(st.lists(st.floats(min_value=0, max_value=1), min_size=1, max_size=6),
       st.lists(st.floats(min_value=0.01, max_value=1), min_size=6, max_size=6))
def test_discrete_variance_at_most_quarter(points, weights):
    probs = np.asarray(weights[:len(points)])
    d = Discrete(tuple(points), tuple(probs / probs.sum()))
    assert 0 <= d.variance <= 0.25 + 1e-15
    assert 0 <= d.mean <= 1


def test_determinism_same_seed():
    spec = StochasticSpec((Bernoulli(0.3), Beta(1, 3), Discrete((0.0, 0.5, 1.0), (0.2, 0.3, 0.5))))
    _, a = rollout(spec, 200, seed=7)
    _, b = rollout(spec, 200, seed=7)
    _, c = rollout(spec, 200, seed=8)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_stream_independent_of_policy():
    base = {"environment": {"type": "stochastic", "arms": [{"dist": "bernoulli", "mu": 0.3},
                                                           {"dist": "bernoulli", "mu": 0.6}]},
            "horizon": 300, "seeds": [4]}
    a = run_trial(parse_config({**base, "policy": {"kind": "bobw"}}), 4)
    b = run_trial(parse_config({**base, "policy": {"kind": "ucb1"}}), 4)
    assert np.array_equal(a.losses, b.losses) and not np.array_equal(a.arms, b.arms)


def test_scripted_csv(tmp_path):
    path = tmp_path / "losses.csv"
    path.write_text("0.1,0.9\n0.2,0.8\n0.3,0.7\n")
    spec = Scripted.from_csv(path)
    _, m = rollout(spec, 3)
    assert np.allclose(m, [[0.1, 0.9], [0.2, 0.8], [0.3, 0.7]])
    env = Environment(spec)
    with pytest.raises(SpecError):
        env.reset(4, np.random.default_rng(0))


@pytest.mark.parametrize("bad", [np.array([[0.5, 1.5]]), np.zeros((0, 2)), np.array([0.1, 0.2])])
def test_scripted_validation(bad):
    with pytest.raises(SpecError):
        Scripted(bad)


def test_stochastically_constrained_switches():
    spec = StochasticallyConstrained(StochasticSpec((Constant(0.1), Constant(0.9))),
                                     StochasticSpec((Constant(0.9), Constant(0.1))), (3, 6))
    _, m = rollout(spec, 8)
    assert np.allclose(m[:, 0], [0.1, 0.1, 0.9, 0.9, 0.9, 0.1, 0.1, 0.1])


def test_worst_case_switch():
    _, m = rollout(WorstCaseSwitch(4, (0.0, 1.0), (1.0, 0.0)), 6)
    assert np.allclose(m[:, 0], [0, 0, 0, 1, 1, 1])


def test_adaptive_sees_history_only():
    seen = []

    def fn(t, history):
        seen.append(len(history))
        return [1.0, 0.0] if history and history[-1][1] == 0 else [0.0, 1.0]

    env = Environment(Adaptive(2, fn))
    env.reset(5, np.random.default_rng(0))
    history = []
    for t in range(1, 6):
        loss, _ = env.gen_round(t, history)
        history.append((loss, 0))
    assert seen == [0, 1, 2, 3, 4]
    assert not env.oblivious


def test_adaptive_invalid_output():
    env = Environment(Adaptive(2, lambda t, h: [0.5, 2.0]))
    env.reset(3, np.random.default_rng(0))
    with pytest.raises(SpecError):
        env.gen_round(1, [])


def test_round_out_of_range():
    env = Environment(StochasticSpec((Constant(0.5),)))
    env.reset(3, np.random.default_rng(0))
    with pytest.raises(SpecError):
        env.gen_round(4, [])


@pytest.mark.parametrize("factory", [lambda: Bernoulli(1.2), lambda: Beta(0, 1), lambda: Constant(-0.1),
                                     lambda: Discrete((0.2,), (0.5,)), lambda: RandomSpikes(0.0)])
def test_invalid_parameters(factory):
    with pytest.raises(SpecError):
        factory()
