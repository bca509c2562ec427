import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bobw_bandit.core import DomainError
from bobw_bandit.environments import TheoryInstance
from bobw_bandit.theory import (
    c_constant,
    corrupted_shape,
    delta_of_epsilon,
    dinf2_raw,
    fit_c_constant,
    h_of_z,
    h_threshold,
    lower_bound_approx,
    lower_bound_approx_refined,
    lower_bound_denominator,
    lower_bound_from_moments,
    lower_bound_simplified,
    lower_bound_sup,
    lower_bound_sup_limit,
    max_linear_log_quadratic,
    upper_bound_adversarial,
    upper_bound_pathlength,
    upper_bound_stochastic,
    verify_approx,
)
from bobw_bandit.verification import numeric_linear_log_quadratic, random_moment_instance

from .oracles import golden_max_log, lower_simple_denominator

EPS = st.floats(min_value=1e-4, max_value=0.5)


def test_delta_example():
    assert delta_of_epsilon(0.2) == pytest.approx(1.728 * math.log(6) - 2.04, abs=1e-12)
    assert delta_of_epsilon(0.2) == pytest.approx(1.05616, abs=1e-5)


@given(EPS)
def test_delta_positive(eps):
    assert delta_of_epsilon(eps) > 0


def test_delta_grows_like_log_inverse_eps():
    # (1+e)^3 log((1+e)/e) - (1+e)^2 - (1+e)/2 = log(1/e) - 3/2 + O(e log(1/e))
    gaps = [delta_of_epsilon(e) - math.log(1 / e) for e in (1e-2, 1e-4, 1e-6, 1e-8)]
    assert all(abs(g + 1.5) < 0.2 for g in gaps)
    assert abs(gaps[-1] + 1.5) < 1e-6
    assert all(abs(b + 1.5) < abs(a + 1.5) for a, b in zip(gaps, gaps[1:]))


def test_delta_domain():
    for eps in (0.0, -0.1, 0.6):
        with pytest.raises(DomainError):
            delta_of_epsilon(eps)


def test_h_first_branch():
    assert h_threshold(0.2) == pytest.approx(0.319, abs=1e-3)
    assert h_of_z(0.1, 0.2) == 2.4


@given(EPS)
def test_h_continuous_at_threshold(eps):
    th = h_threshold(eps)
    assert h_of_z(th * (1 + 1e-12), eps) == pytest.approx(2 * (1 + eps), abs=1e-9)


@pytest.mark.parametrize("eps", [0.01, 0.05, 0.2, 0.5])
def test_h_nondecreasing(eps):
    vals = np.array([h_of_z(float(z), eps) for z in np.logspace(-4, 4, 4001)])
    assert np.all(np.diff(vals) >= -1e-12)


def test_h_envelope_table_constant():
    zs = np.logspace(-3, 3, 10_000)
    assert all(h_of_z(float(z), 0.2) <= max(4 * z + 4.2 * math.log1p(z), 2.4) + 1e-12 for z in zs)


@pytest.mark.parametrize("eps", [0.05, 0.1, 0.3, 0.5])
def test_h_envelope_fitted_constant(eps):
    c = c_constant(eps)
    zs = np.logspace(-4, 4, 3001)
    b0 = 2 * (1 + eps)
    assert all(h_of_z(float(z), eps) <= max(4 * z + c * math.log1p(z), b0) + 1e-9 for z in zs)


def test_fitted_constant_grows_as_eps_shrinks():
    cs = [fit_c_constant(e) for e in (0.5, 0.3, 0.1, 0.05, 0.01)]
    assert all(a < b for a, b in zip(cs, cs[1:]))
    assert fit_c_constant(0.2) <= 4.2


def test_h_domain():
    with pytest.raises(DomainError):
        h_of_z(-0.1, 0.2)


def test_stochastic_upper_zero_variance():
    inst = TheoryInstance((0.2, 0.4, 0.6), (0.0, 0.0, 0.0))
    rep = upper_bound_stochastic(inst, 0.2, 1000)
    assert rep.value == pytest.approx((2.4 + 4.8) * math.log(1000), rel=1e-12)
    assert rep.components == [2.4, 2.4]


def test_stochastic_upper_unit_ratio():
    inst = TheoryInstance((0.2, 0.45), (0.16, 0.25))
    rep = upper_bound_stochastic(inst, 0.2, 5000)
    assert rep.value == pytest.approx((2.4 + 4 + 4.2 * math.log(2)) * math.log(5000), rel=1e-12)


def test_stochastic_upper_log_scaling():
    inst = TheoryInstance((0.3, 0.5, 0.7), (0.21, 0.25, 0.21))
    a = upper_bound_stochastic(inst, 0.2, 1000).value
    b = upper_bound_stochastic(inst, 0.2, 2000).value
    assert b / a == pytest.approx(math.log(2000) / math.log(1000), rel=1e-12)


@given(st.lists(st.tuples(st.floats(0.01, 0.99), st.floats(0, 1)), min_size=1, max_size=6), EPS)
def test_stochastic_components_clamped(arms, eps):
    mu = (0.0,) + tuple(m for m, _ in arms)
    s2 = (0.0,) + tuple(f * m * (1 - m) for m, f in arms)
    rep = upper_bound_stochastic(TheoryInstance(mu, s2), eps, 100)
    assert all(c >= 2 * (1 + eps) for c in rep.components)


def test_stochastic_requires_unique_optimum():
    with pytest.raises(DomainError):
        upper_bound_stochastic(TheoryInstance((0.2, 0.2, 0.5), (0.1, 0.1, 0.1)), 0.2, 100)


def test_adversarial_examples():
    assert upper_bound_adversarial(3, 1000, 0.0, 50.0).value == 0.0
    rep = upper_bound_adversarial(2, 10_000, 5000.0, 100.0)
    assert rep.value == pytest.approx(math.sqrt(2 * math.log(1e4) * 400))
    assert rep.extra["additive_K_log_T"] == pytest.approx(2 * math.log(1e4))


@given(st.integers(0, 8000).map(lambda n: n / 8), st.floats(0, 500))
def test_adversarial_symmetric(l_star, q):
    a = upper_bound_adversarial(4, 1000, l_star, q).value
    b = upper_bound_adversarial(4, 1000, 1000 - l_star, q).value
    # dyadic L* keeps T - L* exact
    assert a == b


def test_pathlength_zero_variation():
    k, t, eta = 3, 10_000, 0.25
    rep = upper_bound_pathlength(k, t, 100.0, 50.0, 0.0, eta)
    assert rep.value == pytest.approx(math.sqrt(k / (1 - 2 * eta) * (k / eta) * math.log(t)))


def test_pathlength_blows_up_near_half():
    etas = np.linspace(0.01, 0.499, 400)
    vals = np.array([upper_bound_pathlength(3, 10_000, 4000.0, 800.0, 20.0, float(e)).value
                     for e in etas])
    j = int(np.argmin(vals))
    assert 0 < j < len(etas) - 1
    assert np.all(np.diff(vals[j:]) > 0)
    assert vals[-1] > 10 * vals[j]


def test_pathlength_domain():
    with pytest.raises(DomainError):
        upper_bound_pathlength(2, 100, 1.0, 1.0, 1.0, 0.5)


def test_pathlength_close_to_adversarial_shape():
    # 8 V1 / eta is not the min and K / eta = 200 is small next to 4 Q = 4e5
    adv = upper_bound_adversarial(2, 10 ** 6, 5e5, 1e5).value
    path = upper_bound_pathlength(2, 10 ** 6, 5e5, 1e5, 1e4, 0.01).value
    assert path == pytest.approx(adv, rel=0.02)


def test_corrupted_shape_terms():
    rep = corrupted_shape(100.0, 25.0)
    assert rep.components == [100.0, 50.0] and rep.value == 150.0


def test_lower_bound_example():
    inst = TheoryInstance((0.1, 0.3), (0.09, 0.05))
    rep = lower_bound_simplified(inst)
    exact = lower_simple_denominator(0.1, 0.3, 0.05)
    assert lower_bound_denominator(0.1, 0.3, 0.05) == pytest.approx(exact, abs=1e-14)
    # the quoted six-digit value 0.424661 is a rounding of 0.4246588
    assert exact == pytest.approx(0.424661, abs=5e-6)
    assert rep.value == pytest.approx(0.47096, abs=1e-5)
    assert dinf2_raw(0.7, 0.49 + 0.05, 0.9) == pytest.approx(exact, abs=1e-12)


def test_lower_bound_domain_errors():
    with pytest.raises(DomainError):
        lower_bound_simplified(TheoryInstance((0.0, 0.3), (0.0, 0.05)))
    with pytest.raises(DomainError):
        lower_bound_simplified(TheoryInstance((0.1, 0.3), (0.09, 0.0)))
    with pytest.raises(DomainError):
        dinf2_raw(0.7, 0.49, 0.9)


def test_lower_bound_zero_variance_limit_flagged():
    rep = lower_bound_simplified(TheoryInstance((0.1, 0.3), (0.09, 0.0)), allow_zero_variance=True)
    assert rep.value == pytest.approx(0.2 / math.log(3))
    assert rep.extra["zero_variance_arms"] == [1]


def test_lower_bound_oracle_and_moment_form():
    rng = np.random.default_rng(7)
    for _ in range(2000):
        mu_star, mu_i, s2 = random_moment_instance(rng)
        d = lower_bound_denominator(mu_star, mu_i, s2)
        assert d > 0
        assert d == pytest.approx(lower_simple_denominator(mu_star, mu_i, s2), abs=1e-9)
        M1 = 1 - mu_i
        assert dinf2_raw(M1, M1 * M1 + s2, 1 - mu_star) == pytest.approx(d, abs=1e-9)


def test_lower_bound_from_moments_matches():
    inst = TheoryInstance((0.1, 0.3, 0.5), (0.09, 0.05, 0.2))
    assert lower_bound_from_moments(inst) == pytest.approx(lower_bound_simplified(inst).value, rel=1e-9)


def test_approx_example():
    assert lower_bound_approx(0.25) == pytest.approx(1.61157, abs=1e-5)
    assert lower_bound_approx_refined(0.25) == pytest.approx(1.5 + 0.06 * math.log(16))
    with pytest.raises(DomainError):
        lower_bound_approx(0.0)


def test_sup_limit_matches_grid():
    for z in (1e-3, 0.1, 1.0, 10.0, 1e3):
        assert lower_bound_sup(z) == pytest.approx(lower_bound_sup_limit(z), rel=1e-5)


def test_verify_approx_claims():
    plain = verify_approx()
    refined = verify_approx(refined=True)
    assert plain.max_rel_error <= 0.06
    assert refined.max_rel_error <= 0.006
    assert plain.errors.size == 241


@given(st.floats(0.01, 10), st.floats(0.01, 10), st.floats(0.01, 10))
def test_linear_log_quadratic_closed_form(a, b, c):
    closed = max_linear_log_quadratic(a, b, c)
    assert closed == pytest.approx(numeric_linear_log_quadratic(a, b, c), abs=1e-6)
    assert closed == pytest.approx(golden_max_log(lambda y: a * y + b * math.log(y) - c * y * y,
                                                  -28.0, 14.0), abs=1e-6)
