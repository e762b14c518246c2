"""Density of A by inversion of its transforms, and tail diagnostics.

Three inversion routes are available per abscissa. The fixed Talbot contour
and the Euler-accelerated Bromwich series both need psi at complex nodes far
from the origin, where its power series cancels catastrophically in double
precision; when that happens the inversion falls back to the Mellin-Barnes
line integral of E A**w, which has no cancellation.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import integrate, optimize, stats

from . import analytic
from .numerics import (
    STATISTICAL_STDERR,
    DomainError,
    EstimateWithError,
    NumericsError,
    QuadratureConfig,
    integrate_interval,
    integrate_semi_infinite,
)
from .simulate import McReport, sample_areas

logger = logging.getLogger(__name__)

TALBOT = 'fixed_deformed_contour'
EULER = 'bromwich_series_acceleration'
MELLIN = 'mellin_barnes'
AUTO = 'auto'
METHODS = (TALBOT, EULER, MELLIN, AUTO)
LAPLACE_METHODS = (TALBOT, EULER)

CONTOUR_CANCELLATION_LIMIT = 1e8
RINGING_TOLERANCE = 1e-6
EULER_SHIFT = 18.4
EULER_TERMS = 11
SELF_TEST_TOLERANCE = 1e-6
CONJECTURAL = 'CONJECTURAL'


class ContourInstabilityError(NumericsError):
    def __init__(self, x, method, detail):
        self.x = x
        self.method = method
        self.detail = detail
        super().__init__('{} inversion at x={:.6g} unstable: {}'.format(method, x, detail))


class InsufficientHitsError(RuntimeError):
    """Too few exceedances for a tail estimate; recorded per x, never fatal for the others."""
    def __init__(self, x, hits, required):
        self.x = x
        self.hits = hits
        self.required = required
        super().__init__('only {} exceedances of x={:g} ({} required)'.format(hits, x, required))


@dataclass(frozen=True)
class ContourConfig:
    node_count: int = 32
    shape: float = 1.0
    method: str = AUTO

    def __post_init__(self):
        if int(self.node_count) != self.node_count or self.node_count < 8:
            raise DomainError('node_count', self.node_count, 'integer node_count >= 8')
        if not self.shape > 0:
            raise DomainError('shape', self.shape, 'shape > 0')
        if self.method not in METHODS:
            raise DomainError('method', self.method, 'one of {}'.format(METHODS))


@dataclass
class DensityGrid:
    xs: np.ndarray
    fs: np.ndarray
    normalization: float
    mean_check: float
    second_moment: float
    tail_diag: np.ndarray
    errors: np.ndarray
    methods: List[str] = field(default_factory=list)
    ringing: bool = False
    conjectural_tail_mass: float = 0.0


@dataclass
class SelfTestResult:
    xs: np.ndarray
    inverted: np.ndarray
    exact: np.ndarray
    method: str
    max_error: float
    passed: bool


@dataclass
class HistogramComparison:
    edges: np.ndarray
    observed: np.ndarray
    expected: np.ndarray
    sigma: np.ndarray
    z: np.ndarray
    max_abs_z: float
    max_discrepancy: float
    samples: int


@dataclass
class ConjectureSummary:
    status: str
    slope: Optional[float] = None
    slope_stderr: Optional[float] = None
    constant: Optional[float] = None
    reference_slope: float = 1.0 / 3.0
    reference_constant: float = analytic.CONJECTURE_PREFACTOR
    points: int = 0
    label: str = CONJECTURAL

    def to_row(self):
        return {
            'status': self.status,
            'slope_conjectural': self.slope,
            'slope_stderr_conjectural': self.slope_stderr,
            'constant_conjectural': self.constant,
            'reference_slope_conjectural': self.reference_slope,
            'reference_constant_conjectural': self.reference_constant,
            'points': self.points,
            'label': self.label,
        }


# ---------------------------------------------------------------------------
# Laplace inversion
# ---------------------------------------------------------------------------

def _talbot(transform, x, nodes, shape):
    """Fixed Talbot contour s(theta) = r theta (cot theta + i), r = 2M / (5x)."""
    r = shape * 2.0 * nodes / (5.0 * x)
    theta = np.arange(1, nodes) * math.pi / nodes
    cot = 1.0 / np.tan(theta)
    points = r * theta * (cot + 1j)
    sigma = theta + (theta * cot - 1.0) * cot
    total = 0.5 * math.exp(r * x) * complex(transform(complex(r))).real
    for s_k, sig in zip(points, sigma):
        total += (np.exp(x * s_k) * complex(transform(complex(s_k))) * (1.0 + 1j * sig)).real
    return r / nodes * total


def _euler(transform, x, nodes, shape):
    """Fourier series on the line Re s = A / (2x), summed with binomial Euler averaging."""
    shift = shape * EULER_SHIFT
    scale = math.exp(shift / 2.0) / x
    terms = [0.5 * scale * complex(transform(complex(shift / (2.0 * x)))).real]
    for k in range(1, nodes + EULER_TERMS + 1):
        s_k = complex(shift, 2.0 * k * math.pi) / (2.0 * x)
        terms.append((-1.0) ** k * scale * complex(transform(s_k)).real)
    partial = np.cumsum(terms)
    weights = np.array([math.comb(EULER_TERMS, j) for j in range(EULER_TERMS + 1)]) / 2.0 ** EULER_TERMS
    return float(np.dot(weights, partial[nodes:nodes + EULER_TERMS + 1]))


_LAPLACE_RULES = {TALBOT: _talbot, EULER: _euler}


def invert_laplace(transform, x, config=None):
    """Invert a Laplace transform at x > 0 by the Talbot or Euler rule.

    The error is the change against a run with three quarters of the nodes.
    A transform failing at a node with a NumericsError, or a non-finite
    result, is reported as contour instability.
    """
    config = config or ContourConfig(method=TALBOT)
    if not x > 0:
        raise DomainError('x', x, 'x > 0')
    method = TALBOT if config.method in (AUTO, MELLIN) else config.method
    rule = _LAPLACE_RULES[method]
    try:
        value = rule(transform, x, config.node_count, config.shape)
        coarse = rule(transform, x, max(8, (3 * config.node_count) // 4), config.shape)
    except NumericsError as e:
        raise ContourInstabilityError(x, method, str(e))
    if not (math.isfinite(value) and math.isfinite(coarse)):
        raise ContourInstabilityError(x, method, 'non-finite value')
    return EstimateWithError(value, abs(value - coarse))


def _psi_on_contour(s):
    return analytic.psi_series(s, max_cancellation=CONTOUR_CANCELLATION_LIMIT).value


# ---------------------------------------------------------------------------
# Mellin-Barnes inversion
# ---------------------------------------------------------------------------

def _saddle(x):
    """Abscissa c minimizing x**(-c-1) E A**c, the modulus bound of the line integrand."""
    log_x = math.log(x)

    def phi(c):
        value = -(c + 1.0) * log_x + analytic.log_mellin_moment(c).real
        return value if math.isfinite(value) else 1e300

    upper = max(3.0, 3.0 * x * x + 5.0)
    res = optimize.minimize_scalar(phi, bounds=(-0.75, upper), method='bounded', options={'xatol': 1e-6})
    return float(res.x), float(res.fun)


def density_mellin_barnes(x, q=None):
    """f_A(x) = (1/pi) int_0^inf Re[x**(-w-1) E A**w] dy on w = c + iy through the saddle.

    Accuracy is relative: the absolute tolerance scales with the integrand at y = 0.
    """
    q = q or QuadratureConfig()
    if not x > 0:
        raise DomainError('x', x, 'x > 0')
    c, log_peak = _saddle(x)
    log_x = math.log(x)

    def log_integrand(y):
        w = c + 1j * np.asarray(y, dtype=float)
        return -(w + 1.0) * log_x + analytic.log_mellin_moment(w)

    scan = np.linspace(0.0, 60.0 + 8.0 * max(c, 0.0), 2001)
    magnitude = log_integrand(scan).real
    alive = np.flatnonzero(magnitude > magnitude[0] - 40.0)
    cutoff = float(scan[min(alive[-1] + 2, scan.size - 1)])

    scaled = QuadratureConfig(
        rel_tol=q.rel_tol,
        abs_tol=min(q.abs_tol, 1e-15 * math.exp(log_peak)),
        max_refinements=q.max_refinements,
        tail_cut=q.tail_cut,
    )
    quad = integrate_interval(lambda y: np.exp(log_integrand(y)).real / math.pi, 0.0, cutoff, scaled, min_panels=8)
    logger.debug('Mellin-Barnes f(%.4g): saddle c=%.4g, cutoff %.4g', x, c, cutoff)
    return quad


def density_value(x, config=None, q=None):
    """One density value and the name of the method that produced it."""
    config = config or ContourConfig()
    chain = [TALBOT, EULER, MELLIN] if config.method == AUTO else [config.method]
    for i, method in enumerate(chain):
        try:
            if method == MELLIN:
                return density_mellin_barnes(x, q), method
            est = invert_laplace(_psi_on_contour, x, ContourConfig(config.node_count, config.shape, method))
            return est, method
        except ContourInstabilityError as e:
            if i == len(chain) - 1:
                raise
            logger.debug('%s; trying %s', e, chain[i + 1])


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------

def _conjectural_tail(x_max, power, q):
    """int_{x_max}^inf x**power * conjectured_density(x) dx."""
    quad = integrate_semi_infinite(
        lambda u: (u + x_max) ** power * analytic.conjectured_density(u + x_max), q)
    return quad.value


def assemble_grid(xs, fs, errors=None, methods=None, q=None):
    """DensityGrid with moments and tail diagnostics from density values on xs.

    The trapezoid runs from f(0) = sqrt(2/pi); the mass beyond the last
    abscissa uses the conjectured shape.
    """
    xs = np.asarray(xs, dtype=float)
    fs = np.asarray(fs, dtype=float)
    if xs.ndim != 1 or xs.size < 2 or not np.all(np.diff(xs) > 0) or xs[0] <= 0:
        raise DomainError('xs', xs, 'strictly increasing positive abscissae')
    if not np.all(np.isfinite(fs)):
        raise DomainError('fs', fs, 'finite density values')
    errors = np.zeros_like(xs) if errors is None else np.asarray(errors, dtype=float)
    full_x = np.concatenate([[0.0], xs])
    full_f = np.concatenate([[analytic.density_at_origin()], fs])
    tails = [_conjectural_tail(xs[-1], k, q) for k in range(3)]
    with np.errstate(divide='ignore', invalid='ignore'):
        diag = np.where(fs > 0, np.log(np.where(fs > 0, fs, 1.0)) + 1.5 * xs * xs - np.log(xs) / 3.0, np.nan)
    return DensityGrid(
        xs=xs,
        fs=fs,
        normalization=float(integrate.trapezoid(full_f, full_x)) + tails[0],
        mean_check=float(integrate.trapezoid(full_x * full_f, full_x)) + tails[1],
        second_moment=float(integrate.trapezoid(full_x ** 2 * full_f, full_x)) + tails[2],
        tail_diag=diag,
        errors=errors,
        methods=list(methods or []),
        ringing=bool(np.any(fs < 0)),
        conjectural_tail_mass=tails[0],
    )


def invert_density(xs, config=None, q=None):
    """Density of A on the abscissae xs; see density_value for the method chain."""
    config = config or ContourConfig()
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 1 or xs.size < 2 or not np.all(np.diff(xs) > 0) or xs[0] <= 0:
        raise DomainError('xs', xs, 'strictly increasing positive abscissae')
    values, errors, methods = [], [], []
    for x in xs:
        est, method = density_value(float(x), config, q)
        if est.value < -RINGING_TOLERANCE:
            raise ContourInstabilityError(float(x), method, 'negative density {:.3g}'.format(est.value))
        values.append(est.value)
        errors.append(est.error)
        methods.append(method)
    used = sorted(set(methods))
    logger.info('inverted %d abscissae on (0, %g] using %s', xs.size, xs[-1], ', '.join(used))
    return assemble_grid(xs, values, errors, methods, q)


def default_abscissae(x_max=4.0, points=400):
    if not x_max > 0 or points < 2:
        raise DomainError('grid', (x_max, points), 'x_max > 0 and points >= 2')
    return np.linspace(x_max / points, x_max, points)


def self_test(config=None):
    """Invert 1/(1+s) on [0.1, 5] and compare with exp(-x)."""
    config = config or ContourConfig()
    method = config.method if config.method in LAPLACE_METHODS else TALBOT
    rule = ContourConfig(config.node_count, config.shape, method)
    xs = np.linspace(0.1, 5.0, 50)
    inverted = np.array([invert_laplace(lambda s: 1.0 / (1.0 + s), x, rule).value for x in xs])
    exact = np.exp(-xs)
    max_error = float(np.max(np.abs(inverted - exact)))
    return SelfTestResult(xs, inverted, exact, method, max_error, max_error <= SELF_TEST_TOLERANCE)


def histogram_comparison(grid, samples, bins=100, value_range=(0.0, 2.0)):
    """Bin probabilities of the inverted density against a sample histogram.

    sigma combines the binomial standard error with the quadrature error of
    the bin integral (point errors plus a trapezoid curvature term).
    """
    lo, hi = value_range
    if not (0.0 <= lo < hi <= grid.xs[-1]):
        raise DomainError('value_range', value_range, 'inside [0, x_max]')
    samples = np.asarray(samples, dtype=float)
    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(samples, edges)
    observed = counts / samples.size

    full_x = np.concatenate([[0.0], grid.xs])
    full_f = np.concatenate([[analytic.density_at_origin()], grid.fs])
    cdf = integrate.cumulative_trapezoid(full_f, full_x, initial=0.0)
    expected = np.diff(np.interp(edges, full_x, cdf))

    width = edges[1] - edges[0]
    step = float(np.max(np.diff(full_x)))
    point_error = np.interp(0.5 * (edges[:-1] + edges[1:]), grid.xs, grid.errors)
    slope = np.interp(edges, full_x, np.gradient(full_f, full_x))
    quad_error = width * point_error + step * step / 12.0 * np.abs(np.diff(slope))
    p = np.clip(expected, 0.0, 1.0)
    sigma = np.sqrt(p * (1.0 - p) / samples.size + quad_error ** 2)
    z = (observed - expected) / sigma
    return HistogramComparison(
        edges=edges,
        observed=observed,
        expected=expected,
        sigma=sigma,
        z=z,
        max_abs_z=float(np.max(np.abs(z))),
        max_discrepancy=float(np.max(np.abs(observed - expected))),
        samples=int(samples.size),
    )


# ---------------------------------------------------------------------------
# Tail and conjecture diagnostics
# ---------------------------------------------------------------------------

def tail_probe(stream, xs, cfg, threads=1, min_hits=100):
    """Empirical ln P(A > x) for each x from one batch of simulated areas.

    Areas are normalized by horizon**1.5. An x with fewer than min_hits
    exceedances is reported with status 'insufficient_hits'.
    """
    areas = sample_areas(stream, cfg, threads) / cfg.horizon ** 1.5
    n = areas.size
    config = {'horizon': cfg.horizon, 'steps': cfg.steps, 'scheme': cfg.scheme,
              'replications': cfg.replications, 'min_hits': min_hits}
    reports = []
    for x in xs:
        x = float(x)
        if x <= 0:
            reports.append(McReport(
                label='tail_x={:g}'.format(x),
                estimate=EstimateWithError(0.0, 0.0, STATISTICAL_STDERR),
                replications=n,
                seed=stream.seed,
                wall_config=config,
                extra={'x': x, 'hits': n, 'p': 1.0, 'log_p': 0.0, 'ratio': None},
            ))
            continue
        hits = int(np.count_nonzero(areas > x))
        p = hits / n
        log_p = math.log(p) if hits else float('-inf')
        stderr = math.sqrt((1.0 - p) / hits) if hits else float('inf')
        reference = analytic.tail_log_asymptote(x)
        report = McReport(
            label='tail_x={:g}'.format(x),
            estimate=EstimateWithError(log_p, stderr, STATISTICAL_STDERR),
            replications=n,
            seed=stream.seed,
            wall_config=config,
            reference=reference,
            extra={'x': x, 'hits': hits, 'p': p, 'log_p': log_p,
                   'ratio': log_p / reference if hits else None},
        )
        if hits < min_hits:
            err = InsufficientHitsError(x, hits, min_hits)
            logger.warning('%s', err)
            report.status = 'insufficient_hits'
            report.extra['detail'] = str(err)
        reports.append(report)
    return reports


def conjecture_diagnostic(grid, x_min=0.8):
    """Regress ln f(x) + 3x^2/2 on ln x over x >= x_min (CONJECTURAL).

    The conjectured shape has slope 1/3 and intercept ln(2 3**(1/6) / Gamma(2/3)).
    Reports only; there is no pass/fail.
    """
    xs = np.asarray(grid.xs, dtype=float)
    fs = np.asarray(grid.fs, dtype=float)
    mask = (xs >= x_min) & (fs > 0)
    if np.count_nonzero(mask) < 3:
        return ConjectureSummary(status='insufficient range', points=int(np.count_nonzero(mask)))
    log_x = np.log(xs[mask])
    y = np.log(fs[mask]) + 1.5 * xs[mask] ** 2
    fit = stats.linregress(log_x, y)
    return ConjectureSummary(
        status='ok',
        slope=float(fit.slope),
        slope_stderr=float(fit.stderr),
        constant=math.exp(fit.intercept),
        points=int(log_x.size),
    )
