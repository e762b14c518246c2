"""Closed forms for the area under the supremum of Brownian motion.

A = int_0^1 S(t) dt with S(t) = max_{u <= t} B(u). Everything here is exact or
asymptotic: moments, the Laplace transform psi(s) = E exp(-s A) by two series
and a Mellin-Barnes integral, both sides of the double Laplace identity
(theorem1_lhs and theorem1_rhs), the conditional transforms of the two pieces of the
excursion decomposition, and tail/density asymptotics.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .numerics import (
    EPS,
    DomainError,
    EstimateWithError,
    NumericsError,
    QuadratureConfig,
    fsum_complex,
    hyp_pfq,
    integrate_interval,
    integrate_semi_infinite,
    log_gamma,
)

logger = logging.getLogger(__name__)

# k = 3 sqrt(2) / 4 appears in every closed form below.
K = 3.0 * math.sqrt(2.0) / 4.0
LOG_K = math.log(K)
LOG_GAMMA_TWO_THIRDS = log_gamma(2.0 / 3.0)
CONJECTURE_PREFACTOR = math.exp(math.log(2.0) + math.log(3.0) / 6.0 - LOG_GAMMA_TWO_THIRDS)
_LOG_ASYMPTOTE_PREFACTOR = (
    math.log(2.0) + 0.5 * math.log(3.0 * math.pi) - math.log(3.0) - LOG_GAMMA_TWO_THIRDS
)
_LOG_MELLIN_REMOVABLE = (
    -2.0 / 3.0 * LOG_K + math.log(1.5) + log_gamma(1.0 / 3.0) - LOG_GAMMA_TWO_THIRDS
)
_MAX_EXP = math.log(np.finfo(float).max)

SERIES_CANCELLATION_LIMIT = 1e12
PSI_SERIES_LIMIT = 1e4
MELLIN_LINE_CUTOFF = 40.0


class SeriesCancellationError(NumericsError):
    """The alternating psi series lost too many digits to cancellation."""
    def __init__(self, s, cancellation_index, limit):
        self.s = s
        self.cancellation_index = cancellation_index
        self.limit = limit
        super().__init__(
            'psi series at s={} has cancellation index {:.3g} above limit {:.3g}'.format(
                s, cancellation_index, limit)
        )


# ---------------------------------------------------------------------------
# Value types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DoubleLaplaceParams:
    """Rates (alpha against the area, lam against time) of the double Laplace transform."""
    alpha: float
    lam: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError('alpha', self.alpha, 'alpha > 0')
        if not self.lam > 0:
            raise DomainError('lambda', self.lam, 'lambda > 0')


@dataclass(frozen=True)
class MomentResult:
    n: int
    value: float
    log_value: float


@dataclass(frozen=True)
class ConditionalSplit:
    """Conditional transforms of A' and A'' given the first-mark local time."""
    zeta: float
    lt_a_prime: float
    lt_a_double_prime: float

    @property
    def product(self):
        return self.lt_a_prime * self.lt_a_double_prime


def _safe_exp(x):
    return math.exp(x) if x < _MAX_EXP else float('inf')


# ---------------------------------------------------------------------------
# Moments
# ---------------------------------------------------------------------------

def exact_moment(n):
    """E A**n = n! Gamma(n+2/3) / (Gamma(2/3) Gamma(3n/2+1)) * k**n, in log space.

    `value` overflows to inf beyond n of roughly 280; `log_value` stays exact.
    """
    if int(n) != n or n < 0:
        raise DomainError('n', n, 'integer n >= 0')
    n = int(n)
    if n == 0:
        return MomentResult(0, 1.0, 0.0)
    log_value = (
        log_gamma(n + 1.0) + log_gamma(n + 2.0 / 3.0) - LOG_GAMMA_TWO_THIRDS
        - log_gamma(1.5 * n + 1.0) + n * LOG_K
    )
    return MomentResult(n, _safe_exp(log_value), log_value)


def log_moment_asymptote(n):
    if int(n) != n or n < 1:
        raise DomainError('n', n, 'integer n >= 1')
    return _LOG_ASYMPTOTE_PREFACTOR + math.log(n) / 6.0 + 0.5 * n * (math.log(n) - math.log(3.0) - 1.0)


def moment_asymptote(n):
    """Stirling form (2 sqrt(3 pi) / (3 Gamma(2/3))) n**(1/6) (n / 3e)**(n/2)."""
    return _safe_exp(log_moment_asymptote(n))


def moment_ratio(n):
    """exact_moment(n) / moment_asymptote(n), formed from the logs."""
    return math.exp(exact_moment(n).log_value - log_moment_asymptote(n))


# ---------------------------------------------------------------------------
# psi(s) = E exp(-s A)
# ---------------------------------------------------------------------------

def _log_term(n, radius):
    """log |n-th psi series term| at |s| = radius, n >= 1."""
    return (
        log_gamma(n + 2.0 / 3.0) - LOG_GAMMA_TWO_THIRDS - log_gamma(1.5 * n + 1.0)
        + n * math.log(K * radius)
    )


def _log_peak_term(radius, ceiling=math.inf):
    """log of the largest |term| of the psi series at |s| = radius.

    The terms peak near n = radius**2 / 3 with a width of order sqrt(n), so
    only a window around that index is scanned. A centre value above
    `ceiling` is returned as is; it already bounds the peak from below.
    """
    if radius == 0:
        return 0.0
    centre = max(1.0, math.floor(radius * radius / 3.0))
    at_centre = float(_log_term(centre, radius))
    if at_centre > ceiling:
        return at_centre
    half = int(6.0 * math.sqrt(centre)) + 20
    n = np.arange(max(1.0, centre - half), centre + half + 1.0, dtype=float)
    return max(0.0, at_centre, float(np.max(_log_term(n, radius))))


def psi_series(s, tol=1e-16, max_cancellation=SERIES_CANCELLATION_LIMIT, max_terms=5000):
    """psi(s) by its everywhere-convergent power series.

    Terms grow like exp(|s|**2 / 6) before decaying, so for Re s >= 0 the
    cancellation index (largest |term| over |sum|) is checked both from the
    predicted peak, before summing, and from the actual terms afterwards.
    Works for complex s.
    """
    if isinstance(s, complex) and s.imag == 0:
        s = s.real
    s = complex(s) if isinstance(s, complex) else float(s)
    if not math.isfinite(abs(s)):
        raise DomainError('s', s, 'finite s')
    if s == 0:
        return EstimateWithError(1.0, 0.0)
    radius = abs(s)
    peak_index = radius * radius / 3.0
    if peak_index + 2 >= max_terms:
        # the terms are still growing when the term budget runs out
        raise SeriesCancellationError(s, _safe_exp(float(_log_term(max(1.0, math.floor(peak_index)), radius))),
                                      max_cancellation)
    if s.real >= 0:
        ceiling = math.log(max_cancellation)
        log_peak = _log_peak_term(radius, ceiling)
        if log_peak > ceiling:
            raise SeriesCancellationError(s, _safe_exp(log_peak), max_cancellation)

    w = -K * s
    w2 = w * w
    terms = [1.0, 8.0 / (9.0 * math.sqrt(math.pi)) * w]
    running = terms[0] + terms[1]
    small_run = 0
    n = 0
    while True:
        ratio = (n + 2.0 / 3.0) * (n + 5.0 / 3.0) / ((1.5 * n + 1.0) * (1.5 * n + 2.0) * (1.5 * n + 3.0))
        term = terms[n] * ratio * w2
        terms.append(term)
        running += term
        n += 1
        if n + 1 > peak_index and abs(term) < tol * abs(running):
            small_run += 1
            if small_run >= 2:
                break
        else:
            small_run = 0
        if n >= max_terms:
            raise SeriesCancellationError(s, float('inf'), max_cancellation)

    value = fsum_complex(terms)
    magnitudes = [abs(t) for t in terms]
    index = max(magnitudes) / abs(value) if value != 0 else float('inf')
    logger.debug('psi series at s=%s: %d terms, cancellation index %.3g', s, len(terms), index)
    if index > max_cancellation:
        raise SeriesCancellationError(s, index, max_cancellation)
    rounding = EPS * math.fsum((k + 4) * m for k, m in enumerate(magnitudes))
    error = magnitudes[-1] + magnitudes[-2] + rounding
    return EstimateWithError(value, error)


def psi_hypergeometric(s):
    """psi(s) = 1F1(5/6; 2/3; s^2/6) - 4s/(3 sqrt(2 pi)) 2F2(1, 4/3; 7/6, 3/2; s^2/6)."""
    s = float(s)
    if not math.isfinite(s):
        raise DomainError('s', s, 'finite s')
    z = s * s / 6.0
    even = hyp_pfq([5.0 / 6.0], [2.0 / 3.0], z)
    odd = hyp_pfq([1.0, 4.0 / 3.0], [7.0 / 6.0, 1.5], z)
    coeff = 4.0 * s / (3.0 * math.sqrt(2.0 * math.pi))
    value = even.value - coeff * odd.value
    error = even.error + abs(coeff) * odd.error + 4.0 * EPS * (abs(even.value) + abs(coeff * odd.value))
    return EstimateWithError(value, error)


def log_mellin_moment(z):
    """log E A**z for complex z with Re z > -1 (principal branches summed)."""
    arr = np.asarray(z, dtype=complex)
    if not np.all(arr.real > -1.0):
        raise DomainError('z', z, 'Re z > -1')
    removable = arr == -2.0 / 3.0
    zz = np.where(removable, 0.0, arr)
    out = (
        zz * LOG_K + special.loggamma(1.0 + zz) + special.loggamma(zz + 2.0 / 3.0)
        - LOG_GAMMA_TWO_THIRDS - special.loggamma(1.0 + 1.5 * zz)
    )
    out = np.where(removable, _LOG_MELLIN_REMOVABLE, out)
    if out.ndim == 0:
        return complex(out)
    return out


def mellin_moment(z):
    """E A**z = k**z Gamma(1+z) Gamma(z+2/3) / (Gamma(2/3) Gamma(1+3z/2)).

    With T ~ Exp(1) independent of A, T**(3/2) A has the law of k E G
    (E ~ Exp(1), G ~ Gamma(2/3)); the double Laplace identity is exactly the
    Laplace transform of that product, which gives every complex moment.
    """
    return np.exp(log_mellin_moment(z))


def psi_mellin_barnes(s, q=None):
    """psi(s) for s > 0 as (1/pi) int_0^inf Re[Gamma(w) s**(-w) E A**(-w)] dy, w = 1/2 + iy.

    The integrand decays like exp(-3 pi y / 4), so the line is cut at y = 40.
    """
    q = q or QuadratureConfig()
    s = float(s)
    if not s > 0:
        raise DomainError('s', s, 's > 0')
    log_s = math.log(s)

    def integrand(y):
        w = 0.5 + 1j * y
        return np.exp(special.loggamma(w) - w * log_s + log_mellin_moment(-w)).real / math.pi

    quad = integrate_interval(integrand, 0.0, MELLIN_LINE_CUTOFF, q)
    return quad


def psi(s, q=None, series_limit=PSI_SERIES_LIMIT):
    """psi on the real axis: the series while it is well conditioned, else Mellin-Barnes."""
    s = float(s)
    if s <= 0:
        return psi_series(s)
    try:
        return psi_series(s, max_cancellation=series_limit)
    except SeriesCancellationError as e:
        logger.debug('psi(%.6g): series index %.3g, using Mellin-Barnes', s, e.cancellation_index)
        return psi_mellin_barnes(s, q)


def density_at_origin():
    """f_A(0) = sqrt(2/pi), the residue of the Mellin transform at w = -1."""
    return math.sqrt(2.0 / math.pi)


# ---------------------------------------------------------------------------
# Double Laplace identity
# ---------------------------------------------------------------------------

def theorem1_lhs(p, q=None):
    """int_0^inf psi(alpha s**(3/2)) exp(-lam s) ds.

    The bound adds the worst psi error seen, integrated against exp(-lam s).
    """
    q = q or QuadratureConfig()
    worst = [0.0]

    def integrand(s):
        s = np.asarray(s, dtype=float)
        weight = np.exp(-p.lam * s)
        out = np.zeros_like(s)
        for i in np.flatnonzero(weight > 0):
            est = psi(p.alpha * s.flat[i] ** 1.5, q)
            out.flat[i] = est.value
            worst[0] = max(worst[0], est.error)
        return out * weight

    quad = integrate_semi_infinite(integrand, q)
    return EstimateWithError(quad.value, quad.error + worst[0] / p.lam)


def theorem1_rhs(p, q=None):
    """int_0^inf (1 + 3 alpha s / (2 sqrt(2 lam)))**(-2/3) exp(-lam s) ds."""
    q = q or QuadratureConfig()
    slope = 3.0 * p.alpha / (2.0 * math.sqrt(2.0 * p.lam))
    return integrate_semi_infinite(lambda s: (1.0 + slope * s) ** (-2.0 / 3.0) * np.exp(-p.lam * s), q)


def marked_time_lt(p, q=None):
    """E exp(-alpha A(T1)) with T1 ~ Exp(lam): lam times the right-hand side."""
    return theorem1_rhs(p, q).scaled(p.lam)


def _forward_weights(order):
    """Weights on points 0..order+1 for a second-order forward difference."""
    points = np.arange(order + 2, dtype=float)
    vander = np.vander(points, increasing=True).T
    rhs = np.zeros(order + 2)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(vander, rhs)


def finite_difference_derivative(n, which='lhs', q=None, h0=1e-2, levels=4):
    """n-th derivative of I (which='lhs') or J ('rhs') at alpha -> 0+, lam = 1.

    One-sided, because I(alpha) diverges for alpha < 0. Steps h0 * 2**-k are
    combined by Richardson extrapolation on an h**2, h**3, ... error series.
    """
    if which not in ('lhs', 'rhs'):
        raise DomainError('which', which, "'lhs' or 'rhs'")
    if int(n) != n or n < 1:
        raise DomainError('n', n, 'integer n >= 1')
    side = theorem1_lhs if which == 'lhs' else theorem1_rhs
    weights = _forward_weights(n)
    cache = {0: 1.0}

    def value_at(j, h):
        key = round(j * h, 15)
        if key not in cache:
            cache[key] = side(DoubleLaplaceParams(j * h, 1.0), q).value
        return cache[key]

    table = []
    for level in range(levels):
        h = h0 * 2.0 ** (-level)
        raw = math.fsum(w * value_at(j, h) for j, w in enumerate(weights)) / h ** n
        row = [raw]
        for m in range(1, level + 1):
            factor = 2.0 ** (m + 1)
            row.append((factor * row[m - 1] - table[-1][m - 1]) / (factor - 1.0))
        table.append(row)
    best = table[-1][-1]
    error = abs(best - table[-2][-1]) if levels > 1 else abs(best)
    return EstimateWithError(best, error)


def moment_by_finite_difference(n, which='lhs', q=None, h0=1e-2, levels=4):
    """E A**n recovered as (-1)**n d^n/dalpha^n / Gamma(3n/2 + 1) of either side."""
    derivative = finite_difference_derivative(n, which, q, h0, levels)
    scale = (-1.0) ** n / math.exp(log_gamma(1.5 * n + 1.0))
    return derivative.scaled(scale)


# ---------------------------------------------------------------------------
# Excursion decomposition
# ---------------------------------------------------------------------------

def conditional_lt_a_prime(p, zeta):
    """E[exp(-alpha A') | zeta] = exp{sqrt(2 lam) zeta - 2 sqrt(2)/(3 alpha) ((lam + alpha zeta)**1.5 - lam**1.5)}.

    The difference of powers goes through expm1/log1p so the alpha -> 0
    cancellation stays exact.
    """
    z = np.asarray(zeta, dtype=float)
    if not np.all(z > 0):
        raise DomainError('zeta', zeta, 'zeta > 0')
    lam, alpha = p.lam, p.alpha
    growth = lam ** 1.5 * np.expm1(1.5 * np.log1p(alpha * z / lam))
    out = np.exp(math.sqrt(2.0 * lam) * z - 2.0 * math.sqrt(2.0) / (3.0 * alpha) * growth)
    out = np.minimum(out, 1.0)
    return float(out) if out.ndim == 0 else out


def conditional_lt_a_double_prime(p, zeta):
    """E[exp(-alpha A'') | zeta] = sqrt(lam / (lam + alpha zeta))."""
    z = np.asarray(zeta, dtype=float)
    if not np.all(z > 0):
        raise DomainError('zeta', zeta, 'zeta > 0')
    out = np.sqrt(p.lam / (p.lam + p.alpha * z))
    return float(out) if out.ndim == 0 else out


def conditional_split(p, zeta):
    return ConditionalSplit(
        zeta=float(zeta),
        lt_a_prime=conditional_lt_a_prime(p, zeta),
        lt_a_double_prime=conditional_lt_a_double_prime(p, zeta),
    )


def conditional_chain(p, q=None):
    """Average of the two conditional transforms over zeta ~ Exp(sqrt(2 lam)).

    Equals marked_time_lt(p); the two are computed independently.
    """
    rate = math.sqrt(2.0 * p.lam)

    def integrand(z):
        return (
            conditional_lt_a_prime(p, z) * conditional_lt_a_double_prime(p, z)
            * rate * np.exp(-rate * z)
        )

    return integrate_semi_infinite(integrand, q)


def lemma_gamma_integral(lam, q=None):
    """int_0^inf (1 - exp(-lam x)) x**(-3/2) dx = 2 sqrt(pi lam)."""
    if not lam > 0:
        raise DomainError('lambda', lam, 'lambda > 0')
    return integrate_semi_infinite(lambda x: -np.expm1(-lam * x) * x ** -1.5, q)


def marked_local_time_rate(lam, q=None):
    """Rate of marked excursions per unit local time; equals sqrt(2 lam)."""
    return lemma_gamma_integral(lam, q).scaled(1.0 / math.sqrt(2.0 * math.pi))


# ---------------------------------------------------------------------------
# Tail and density asymptotics
# ---------------------------------------------------------------------------

def tail_log_asymptote(x):
    """Leading term -3x^2/2 of ln P(A > x)."""
    if not x > 0:
        raise DomainError('x', x, 'x > 0')
    return -1.5 * x * x


def conjectured_density(x):
    """CONJECTURAL density shape 2 3**(1/6) / Gamma(2/3) x**(1/3) exp(-3x^2/2)."""
    arr = np.asarray(x, dtype=float)
    if not np.all(arr > 0):
        raise DomainError('x', x, 'x > 0')
    out = CONJECTURE_PREFACTOR * np.cbrt(arr) * np.exp(-1.5 * arr * arr)
    return float(out) if out.ndim == 0 else out
