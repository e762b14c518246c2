import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from supremum_area.numerics import (
    QUADRATURE_BOUND,
    STATISTICAL_STDERR,
    DomainError,
    EstimateWithError,
    NonConvergenceError,
    QuadratureConfig,
    RandomStream,
    RefinementBudgetError,
    RunningStats,
    fsum_complex,
    hyp_pfq,
    integrate_interval,
    integrate_semi_infinite,
    log_gamma,
    sample_exponential,
    sample_gamma_half,
    sample_standard_normal,
    sample_truncated_excursion_length,
    truncated_length_acceptance,
)


# ---------------------------------------------------------------------------
# log_gamma
# ---------------------------------------------------------------------------

def test_log_gamma_known_values():
    assert log_gamma(1.0) == pytest.approx(0.0, abs=1e-14)
    assert log_gamma(2.0) == pytest.approx(0.0, abs=1e-14)
    assert log_gamma(0.5) == pytest.approx(0.5 * math.log(math.pi), rel=1e-13)
    assert log_gamma(2.0 / 3.0) == pytest.approx(float(mpmath.loggamma(mpmath.mpf(2) / 3)), rel=1e-13)


def test_log_gamma_matches_lgamma_over_wide_range():
    xs = np.geomspace(0.1, 1e6, 200)
    np.testing.assert_allclose(log_gamma(xs), [math.lgamma(x) for x in xs], rtol=1e-13, atol=5e-14)


@pytest.mark.parametrize('x', [1.0 + 1e-9, 0.9999, 1.0001, 1.15, 0.81, 1.9999, 2.0001, 2.19, 1.81])
def test_log_gamma_relative_near_its_zeros(x):
    expected = float(mpmath.loggamma(mpmath.mpf(x)))
    assert log_gamma(x) == pytest.approx(expected, rel=1e-13)


def test_log_gamma_on_both_sides_of_series_edges():
    xs = np.array([e + d for e in (0.8, 1.2, 1.8, 2.2) for d in (-1e-9, 1e-9)])
    expected = [float(mpmath.loggamma(mpmath.mpf(float(x)))) for x in xs]
    np.testing.assert_allclose(log_gamma(xs), expected, rtol=1e-13)


@given(st.floats(min_value=0.1, max_value=100.0))
def test_log_gamma_recurrence(x):
    assert log_gamma(x + 1.0) - log_gamma(x) == pytest.approx(math.log(x), abs=1e-12)


@pytest.mark.parametrize('bad', [0.0, -1.0, float('nan')])
def test_log_gamma_rejects_non_positive(bad):
    with pytest.raises(DomainError):
        log_gamma(bad)


# ---------------------------------------------------------------------------
# Summation and hypergeometric series
# ---------------------------------------------------------------------------

def test_fsum_complex_is_exactly_rounded():
    assert fsum_complex([1e16, 1.0, -1e16]) == 1.0
    assert fsum_complex([1e16 + 1j, 1.0 + 1e16j, -1e16 - 1e16j]) == complex(1.0, 1.0)


@pytest.mark.parametrize('a', [0.3, 1.7])
def test_hyp1f1_with_equal_parameters_is_exponential(a):
    for z in np.linspace(-3.0, 3.0, 13):
        est = hyp_pfq([a], [a], float(z))
        assert est.value == pytest.approx(math.exp(z), abs=1e-13)


def test_hyp1f1_against_mpmath():
    est = hyp_pfq([5.0 / 6.0], [2.0 / 3.0], 1.0 / 6.0)
    exact = float(mpmath.hyp1f1(mpmath.mpf(5) / 6, mpmath.mpf(2) / 3, mpmath.mpf(1) / 6))
    assert est.value == pytest.approx(exact, rel=1e-14)
    assert est.kind == QUADRATURE_BOUND


def test_hyp_pfq_at_zero_is_one():
    assert hyp_pfq([1.0, 4.0 / 3.0], [7.0 / 6.0, 1.5], 0.0).value == 1.0


def test_hyp_pfq_term_budget():
    with pytest.raises(NonConvergenceError) as info:
        hyp_pfq([1.0], [1.0], 5.0, max_terms=3)
    assert info.value.terms == 3


@pytest.mark.parametrize('upper,lower,z', [
    ([1.0], [-2.0], 0.5),
    ([1.0, 1.0, 1.0], [1.0], 0.1),
    ([1.0, 1.0], [1.0], 1.0),
])
def test_hyp_pfq_domain(upper, lower, z):
    with pytest.raises(DomainError):
        hyp_pfq(upper, lower, z)


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

def test_semi_infinite_exponential(quad):
    assert integrate_semi_infinite(lambda s: np.exp(-s), quad).value == pytest.approx(1.0, abs=1e-12)
    assert integrate_semi_infinite(lambda s: s * np.exp(-s), quad).value == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize('k', [1.0, 2.0, 3.5])
def test_semi_infinite_gamma_within_reported_bound(quad, k):
    est = integrate_semi_infinite(lambda s: s ** (k - 1.0) * np.exp(-s), quad)
    assert abs(est.value - math.gamma(k)) <= est.error + 1e-15
    assert est.error <= 1e-10


def test_semi_infinite_algebraic_tail(quad):
    # int_0^inf (1 + s)**-2 ds = 1
    est = integrate_semi_infinite(lambda s: (1.0 + s) ** -2.0, quad)
    assert est.value == pytest.approx(1.0, abs=1e-10)


def test_interval_with_square_root_endpoint(quad):
    est = integrate_interval(lambda x: x ** -0.5, 0.0, 1.0, quad, sqrt_endpoint=True)
    assert est.value == pytest.approx(2.0, abs=1e-12)


def test_interval_polynomial_is_exact(quad):
    est = integrate_interval(lambda x: 3.0 * x ** 2, 0.0, 2.0, quad)
    assert est.value == pytest.approx(8.0, rel=1e-14)


def test_refinement_budget_carries_best_estimate():
    tight = QuadratureConfig(max_refinements=2)
    with pytest.raises(RefinementBudgetError) as info:
        integrate_interval(lambda x: np.cos(200.0 * x), 0.0, 10.0, tight)
    assert isinstance(info.value.estimate, EstimateWithError)
    assert info.value.intervals == 3


def test_interval_rejects_empty_range(quad):
    with pytest.raises(DomainError):
        integrate_interval(np.exp, 1.0, 1.0, quad)


@pytest.mark.parametrize('kwargs', [
    {'rel_tol': 0.0}, {'abs_tol': -1.0}, {'max_refinements': 0}, {'tail_cut': 0.0},
])
def test_quadrature_config_validation(kwargs):
    with pytest.raises(DomainError):
        QuadratureConfig(**kwargs)


def test_estimate_rejects_negative_error():
    with pytest.raises(DomainError):
        EstimateWithError(1.0, -1e-3)


def test_estimate_arithmetic():
    total = EstimateWithError(1.0, 0.1) + EstimateWithError(2.0, 0.2)
    assert total.value == 3.0
    assert total.error == pytest.approx(0.3)
    scaled = EstimateWithError(2.0, 0.5).scaled(-2.0)
    assert scaled.value == -4.0 and scaled.error == 1.0


# ---------------------------------------------------------------------------
# Random streams and samplers
# ---------------------------------------------------------------------------

def test_stream_reproducible():
    a = RandomStream(42, 3).standard_normal(100)
    b = RandomStream(42, 3).standard_normal(100)
    np.testing.assert_array_equal(a, b)


def test_stream_ids_and_children_are_distinct():
    base = RandomStream(42, 3)
    other = RandomStream(42, 4)
    assert not np.array_equal(base.uniform(10), other.uniform(10))
    first = RandomStream(42, 3).child(0).uniform(10)
    second = RandomStream(42, 3).child(1).uniform(10)
    again = RandomStream(42, 3).child(0).uniform(10)
    assert not np.array_equal(first, second)
    np.testing.assert_array_equal(first, again)


def test_stream_matches_philox_box_muller():
    sequence = np.random.SeedSequence(42, spawn_key=(7,))
    u = np.random.Generator(np.random.Philox(sequence)).random(2)
    expected = math.sqrt(-2.0 * math.log(1.0 - u[0])) * math.cos(2.0 * math.pi * u[1])
    assert RandomStream(42, 7).standard_normal() == pytest.approx(expected, rel=1e-14)


def test_stream_counter():
    s = RandomStream(1)
    s.uniform(10)
    s.standard_normal((3, 2))
    s.poisson(2.0, 5)
    assert s.counter == 10 + 6 + 5


def test_stream_rejects_bad_seed():
    with pytest.raises(DomainError):
        RandomStream(-1)


def test_normal_sampler_moments(stream):
    z = sample_standard_normal(stream, 1_000_000)
    assert abs(z.mean()) < 4e-3
    assert z.var() == pytest.approx(1.0, rel=1e-2)


def test_exponential_inverse_cdf(scripted):
    rate = math.sqrt(2.0)
    assert sample_exponential(scripted(uniforms=[0.5]), rate) == pytest.approx(math.log(2.0) / rate)


def test_exponential_moments(stream):
    rate = math.sqrt(2.0)
    x = sample_exponential(stream, rate, 1_000_000)
    assert abs(x.mean() - 1.0 / rate) < 3 * (1.0 / rate) / 1000.0
    y = sample_exponential(stream, 1.0, 1_000_000)
    assert abs(y.var() - 1.0) < 3 * math.sqrt(8.0 / 1e6)
    with pytest.raises(DomainError):
        sample_exponential(stream, 0.0)


def test_gamma_half_moments(stream):
    y = sample_gamma_half(stream, 1.0, 1_000_000)
    assert abs(y.mean() - 0.5) < 3 * math.sqrt(0.5 / 1e6)
    weights = np.exp(-y)
    assert abs(weights.mean() - 1.0 / math.sqrt(2.0)) < 3 * weights.std() / 1000.0


def test_gamma_half_rate_scaling():
    fast = sample_gamma_half(RandomStream(9), 4.0, 1000)
    slow = sample_gamma_half(RandomStream(9), 1.0, 1000)
    np.testing.assert_allclose(fast, slow / 4.0, rtol=1e-15)


def test_truncated_length_without_killing_is_pareto():
    n = 100_000
    lengths = sample_truncated_excursion_length(RandomStream(5), 0.0, 1.0, n)
    assert lengths.min() >= 1.0
    for ell in (1.5, 4.0, 25.0):
        p = 1.0 - ell ** -0.5
        assert abs(np.mean(lengths <= ell) - p) < 5 * math.sqrt(p * (1 - p) / n)


def test_truncated_length_mean(stream):
    lam, eps = 1.0, 0.01
    lengths = sample_truncated_excursion_length(stream, lam, eps, 200_000)
    assert lengths.min() >= eps
    root = math.sqrt(lam * eps)
    numerator = math.sqrt(math.pi) * special.erfc(root)
    denominator = 2.0 * eps ** -0.5 * math.exp(-lam * eps) - 2.0 * math.sqrt(math.pi * lam) * special.erfc(root)
    stderr = lengths.std() / math.sqrt(lengths.size)
    assert abs(lengths.mean() - numerator / denominator) < 5 * stderr


def test_truncated_length_acceptance_limits():
    assert truncated_length_acceptance(0.0, 1.0) == 1.0
    assert 0.0 < truncated_length_acceptance(1.0, 1.0) < 1.0


def test_truncated_length_domain(stream):
    with pytest.raises(DomainError):
        sample_truncated_excursion_length(stream, 1.0, 0.0)
    with pytest.raises(DomainError):
        sample_truncated_excursion_length(stream, -1.0, 0.1)


# ---------------------------------------------------------------------------
# Running statistics
# ---------------------------------------------------------------------------

values = st.lists(st.floats(min_value=-1e3, max_value=1e3, allow_nan=False), max_size=30)


@given(values, values, values)
def test_running_stats_merge_is_associative(a, b, c):
    sa, sb, sc = (RunningStats.from_values(v) for v in (a, b, c))
    left = sa.merge(sb).merge(sc)
    right = sa.merge(sb.merge(sc))
    whole = RunningStats.from_values(a + b + c)
    for merged in (left, right):
        assert merged.count == whole.count
        assert math.isclose(merged.mean, whole.mean, rel_tol=1e-12, abs_tol=1e-9)
        assert math.isclose(merged.variance, whole.variance, rel_tol=1e-12, abs_tol=1e-9)


@given(values)
def test_running_stats_push_matches_batch(xs):
    pushed = RunningStats()
    for x in xs:
        pushed.push(x)
    batch = RunningStats.from_values(xs)
    assert pushed.count == batch.count
    assert math.isclose(pushed.mean, batch.mean, rel_tol=1e-12, abs_tol=1e-9)
    assert math.isclose(pushed.variance, batch.variance, rel_tol=1e-10, abs_tol=1e-8)


def test_running_stats_small_samples():
    assert RunningStats().stderr == 0.0
    single = RunningStats.from_values([3.0])
    assert single.variance == 0.0 and single.mean == 3.0
    est = RunningStats.from_values([1.0, 2.0, 3.0, 4.0]).estimate()
    assert est.kind == STATISTICAL_STDERR
    assert est.value == 2.5
    assert est.error == pytest.approx(math.sqrt((5.0 / 3.0) / 4.0))


def test_running_stats_extend():
    stats = RunningStats.from_values([1.0, 2.0])
    stats.extend([3.0, 4.0])
    assert stats.count == 4
    assert stats.mean == pytest.approx(2.5)
