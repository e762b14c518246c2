import math

import numpy as np
import pytest
from scipy import stats

from supremum_area import analytic, density
from supremum_area.density import (
    AUTO,
    EULER,
    MELLIN,
    TALBOT,
    ContourConfig,
    ContourInstabilityError,
)
from supremum_area.numerics import DomainError, QuadratureConfig, RandomStream, integrate_interval
from supremum_area.simulate import PathConfig, sample_areas


@pytest.fixture(scope='module')
def grid():
    return density.invert_density(density.default_abscissae(4.0, 400))


def _exponential(s):
    return 1.0 / (1.0 + s)


# ---------------------------------------------------------------------------
# Laplace inversion
# ---------------------------------------------------------------------------

@pytest.mark.parametrize('method', [TALBOT, EULER])
def test_self_test_passes(method):
    result = density.self_test(ContourConfig(method=method))
    assert result.method == method
    assert result.max_error <= 1e-6
    assert result.passed


def test_self_test_defaults_to_talbot_for_line_methods():
    assert density.self_test(ContourConfig(method=MELLIN)).method == TALBOT


def test_node_doubling_is_stable():
    for x in (0.5, 1.0, 2.0, 4.0):
        coarse = density.invert_laplace(_exponential, x, ContourConfig(20, method=TALBOT)).value
        fine = density.invert_laplace(_exponential, x, ContourConfig(40, method=TALBOT)).value
        assert abs(coarse - fine) < 1e-6
        assert fine == pytest.approx(math.exp(-x), abs=1e-7)


def test_inversion_domain():
    with pytest.raises(DomainError):
        density.invert_laplace(_exponential, 0.0)


def test_contour_rule_reports_cancellation():
    with pytest.raises(ContourInstabilityError) as info:
        density.invert_laplace(density._psi_on_contour, 1.0, ContourConfig(method=TALBOT))
    assert info.value.method == TALBOT


def test_auto_chain_falls_back_to_mellin_barnes():
    est, method = density.density_value(1.0, ContourConfig(method=AUTO))
    assert method == MELLIN
    assert est.value > 0.0


@pytest.mark.parametrize('kwargs', [{'node_count': 4}, {'shape': 0.0}, {'method': 'gaver'}])
def test_contour_config_validation(kwargs):
    with pytest.raises(DomainError):
        ContourConfig(**kwargs)


# ---------------------------------------------------------------------------
# Mellin-Barnes density
# ---------------------------------------------------------------------------

def test_density_near_origin():
    assert density.density_mellin_barnes(1e-3).value == pytest.approx(analytic.density_at_origin(), abs=0.02)


@pytest.mark.slow
def test_density_laplace_transform_recovers_psi():
    q = QuadratureConfig(rel_tol=1e-9)

    def weighted(xs):
        return np.array([math.exp(-x) * density.density_mellin_barnes(x).value for x in np.ravel(xs)])

    est = integrate_interval(weighted, 0.0, 7.0, q)
    assert est.value == pytest.approx(analytic.psi_series(1.0).value, abs=1e-7)


def test_density_domain():
    with pytest.raises(DomainError):
        density.density_mellin_barnes(-1.0)


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------

@pytest.mark.slow
def test_inverted_grid_moments(grid):
    assert grid.normalization == pytest.approx(1.0, abs=1e-3)
    assert grid.mean_check == pytest.approx(analytic.exact_moment(1).value, abs=1e-3)
    assert grid.second_moment == pytest.approx(5.0 / 12.0, abs=2e-3)
    assert np.all(grid.fs >= -1e-6)
    assert not grid.ringing
    assert len(grid.methods) == grid.xs.size
    assert 0.0 < grid.conjectural_tail_mass < 1e-6


@pytest.mark.slow
def test_inverted_grid_matches_histogram(grid):
    samples = sample_areas(RandomStream(41), PathConfig(1.0, 256, 'bridge', 200_000))
    bins = 100
    comparison = density.histogram_comparison(grid, samples, bins=bins, value_range=(0.0, 2.0))
    assert comparison.samples == 200_000
    # the two-sided 3 sigma level of one bin, shared out over all bins
    family_level = 2.0 * stats.norm.sf(3.0)
    threshold = stats.norm.isf(family_level / (2.0 * bins))
    assert 4.0 < threshold < 4.3
    assert comparison.max_abs_z <= threshold


@pytest.mark.slow
def test_inverted_grid_conjecture_diagnostic(grid):
    summary = density.conjecture_diagnostic(grid)
    assert summary.status == 'ok'
    assert summary.label == density.CONJECTURAL
    assert math.isfinite(summary.slope)
    row = summary.to_row()
    assert 'slope_conjectural' in row and 'constant_conjectural' in row


def test_diagnostic_on_conjectured_shape():
    xs = np.linspace(0.8, 4.0, 50)
    synthetic = density.assemble_grid(xs, analytic.conjectured_density(xs))
    summary = density.conjecture_diagnostic(synthetic)
    assert summary.slope == pytest.approx(1.0 / 3.0, abs=1e-10)
    assert summary.constant == pytest.approx(analytic.CONJECTURE_PREFACTOR, rel=1e-10)
    assert summary.points == 50


def test_diagnostic_needs_range():
    xs = np.linspace(0.1, 0.5, 5)
    summary = density.conjecture_diagnostic(density.assemble_grid(xs, np.full(5, 0.7)))
    assert summary.status == 'insufficient range'
    assert summary.slope is None


def test_assemble_grid_validation():
    with pytest.raises(DomainError):
        density.assemble_grid([1.0, 0.5], [0.1, 0.2])
    with pytest.raises(DomainError):
        density.assemble_grid([0.5, 1.0], [0.1, float('nan')])


def test_assemble_grid_flags_ringing():
    xs = np.linspace(0.5, 1.0, 3)
    assert density.assemble_grid(xs, [0.5, -1e-3, 0.2]).ringing


def test_default_abscissae():
    xs = density.default_abscissae(4.0, 400)
    assert xs.size == 400
    assert xs[0] == pytest.approx(0.01) and xs[-1] == 4.0
    with pytest.raises(DomainError):
        density.default_abscissae(0.0, 10)


# ---------------------------------------------------------------------------
# Tail probe
# ---------------------------------------------------------------------------

@pytest.mark.slow
def test_tail_ratio_decreases_towards_one():
    cfg = PathConfig(1.0, 128, 'bridge', 100_000)
    reports = density.tail_probe(RandomStream(51), [0.0, 0.8, 1.0, 1.2], cfg)
    origin = reports[0]
    assert origin.extra['p'] == 1.0 and origin.extra['log_p'] == 0.0
    ratios = [r.extra['ratio'] for r in reports[1:]]
    assert all(r.status == 'ok' for r in reports)
    assert ratios[0] > ratios[1] > ratios[2] > 1.0


def test_tail_probe_flags_missing_hits():
    cfg = PathConfig(1.0, 32, 'bridge', 2000)
    (report,) = density.tail_probe(RandomStream(52), [3.0], cfg)
    assert report.status == 'insufficient_hits'
    assert report.extra['hits'] < 100
    assert 'detail' in report.extra
