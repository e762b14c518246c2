"""Numerical kernel shared by every other module.

Special functions, adaptive quadrature, compensated summation, reproducible
random sampling and streaming statistics. Everything here is pure given its
inputs; a RandomStream has a single owner at a time.
"""

import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import Tuple, Union

import numpy as np
from scipy import special

logger = logging.getLogger(__name__)

Number = Union[float, complex]

STATISTICAL_STDERR = "statistical_stderr"
QUADRATURE_BOUND = "quadrature_bound"
ESTIMATE_KINDS = (STATISTICAL_STDERR, QUADRATURE_BOUND)

EPS = np.finfo(float).eps


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------

class NumericsError(ArithmeticError):
    """Base class for numerical failures (CLI exit code 3)."""
    pass


class DomainError(NumericsError, ValueError):
    """Argument outside the domain of an operation."""
    def __init__(self, name, value, requirement):
        self.name = name
        self.value = value
        self.requirement = requirement
        super().__init__('{}={!r} violates {}'.format(name, value, requirement))


class NonConvergenceError(NumericsError):
    """Series term budget exhausted before the terms became negligible."""
    def __init__(self, terms, last_ratio):
        self.terms = terms
        self.last_ratio = last_ratio
        super().__init__(
            'series did not converge within {} terms (last |ratio| {:.3g})'.format(terms, last_ratio)
        )


class RefinementBudgetError(NumericsError):
    """Adaptive quadrature ran out of bisections; carries the best estimate."""
    def __init__(self, estimate, intervals):
        self.estimate = estimate
        self.intervals = intervals
        super().__init__(
            'quadrature budget of {} intervals exhausted: {:.12g} +- {:.3g}'.format(
                intervals, estimate.value, estimate.error)
        )


class SamplerBudgetError(RuntimeError):
    """Rejection sampler made no progress within its round budget (exit code 4)."""
    def __init__(self, rounds, remaining):
        self.rounds = rounds
        self.remaining = remaining
        super().__init__(
            'rejection sampler stalled after {} rounds with {} samples missing'.format(rounds, remaining)
        )


# ---------------------------------------------------------------------------
# Value types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EstimateWithError:
    """A value bundled with its statistical or numerical error bound."""
    value: Number
    error: float
    kind: str = QUADRATURE_BOUND

    def __post_init__(self):
        if not self.error >= 0:
            raise DomainError('error', self.error, 'error >= 0')
        if self.kind not in ESTIMATE_KINDS:
            raise DomainError('kind', self.kind, 'one of {}'.format(ESTIMATE_KINDS))

    def __add__(self, other):
        return EstimateWithError(self.value + other.value, self.error + other.error, self.kind)

    def scaled(self, factor):
        return EstimateWithError(self.value * factor, self.error * abs(factor), self.kind)


@dataclass(frozen=True)
class QuadratureConfig:
    """Tolerances and budget for the adaptive Gauss-Kronrod integrators."""
    rel_tol: float = 1e-11
    abs_tol: float = 1e-13
    max_refinements: int = 2000
    tail_cut: float = 8.0

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise DomainError('rel_tol', self.rel_tol, 'rel_tol > 0')
        if not self.abs_tol > 0:
            raise DomainError('abs_tol', self.abs_tol, 'abs_tol > 0')
        if int(self.max_refinements) != self.max_refinements or self.max_refinements < 1:
            raise DomainError('max_refinements', self.max_refinements, 'integer >= 1')
        if not self.tail_cut > 0:
            raise DomainError('tail_cut', self.tail_cut, 'tail_cut > 0')


# ---------------------------------------------------------------------------
# Special functions
# ---------------------------------------------------------------------------

# Lanczos approximation, g = 7, nine coefficients.
_LANCZOS_G = 7.0
_LANCZOS_COEFFS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_TWO_PI = 0.5 * math.log(2.0 * math.pi)

# ln Gamma(1 + z) = -euler_gamma z + sum_{n>=2} (-1)**n zeta(n) / n z**n, used where
# ln Gamma crosses zero at 1 and 2 and the Lanczos form loses relative accuracy.
_TAYLOR_RADIUS = 0.2
_LGAM1P_COEFFS = np.concatenate((
    [0.0, -np.euler_gamma],
    [(-1.0) ** n * special.zeta(float(n), 1.0) / n for n in range(2, 31)],
))


def _lgam1p_taylor(z):
    return np.polynomial.polynomial.polyval(z, _LGAM1P_COEFFS)


def log_gamma(x):
    """ln Gamma(x) for real x > 0 (scalar or array).

    Arguments below 1/2 go through Gamma(x) = Gamma(x + 1) / x, so no
    reflection is ever needed. Within 0.2 of 1 and 2 a Taylor series keeps the error relative.
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(arr > 0):
        raise DomainError('x', x, 'x > 0')
    small = arr < 0.5
    z = np.where(small, arr + 1.0, arr) - 1.0
    series = np.full_like(z, _LANCZOS_COEFFS[0])
    for i, coeff in enumerate(_LANCZOS_COEFFS[1:], start=1):
        series = series + coeff / (z + i)
    t = z + _LANCZOS_G + 0.5
    result = _HALF_LOG_TWO_PI + (z + 0.5) * np.log(t) - t + np.log(series)
    result = np.where(small, result - np.log(arr), result)
    near_one = np.abs(arr - 1.0) < _TAYLOR_RADIUS
    near_two = np.abs(arr - 2.0) < _TAYLOR_RADIUS
    if np.any(near_one | near_two):
        result = np.where(near_one, _lgam1p_taylor(arr - 1.0), result)
        result = np.where(near_two, np.log1p(arr - 2.0) + _lgam1p_taylor(arr - 2.0), result)
    if result.ndim == 0:
        return float(result)
    return result


def fsum_complex(values):
    """Exactly rounded sum, component-wise for complex input."""
    values = list(values)
    if any(isinstance(v, complex) for v in values):
        return complex(math.fsum(v.real for v in values), math.fsum(v.imag for v in values))
    return math.fsum(values)


def hyp_pfq(upper, lower, z, tol=1e-16, max_terms=10000):
    """Generalized hypergeometric series pFq(upper; lower; z) by direct summation.

    Summation stops once two consecutive terms are both below tol times the
    partial sum; a single small term can be a sign-cancellation accident.
    The returned error is the magnitude of the last term added.
    """
    upper = [float(a) for a in upper]
    lower = [float(b) for b in lower]
    if not tol > 0:
        raise DomainError('tol', tol, 'tol > 0')
    for b in lower:
        if b <= 0 and b == math.floor(b):
            raise DomainError('lower', b, 'no non-positive integer lower parameter')
    p, q = len(upper), len(lower)
    if p > q + 1 or (p == q + 1 and abs(z) >= 1):
        raise DomainError('z', z, 'convergent parameter counts (p <= q, or p = q+1 with |z| < 1)')
    if z == 0:
        return EstimateWithError(1.0, 0.0)

    terms = [1.0]
    term = 1.0
    running = 1.0
    small_run = 0
    ratio = 0.0
    k = 0
    while True:
        num = 1.0
        for a in upper:
            num *= a + k
        den = float(k + 1)
        for b in lower:
            den *= b + k
        ratio = num / den * z
        term = term * ratio
        k += 1
        terms.append(term)
        running += term
        if abs(term) < tol * abs(running):
            small_run += 1
            if small_run >= 2:
                break
        else:
            small_run = 0
        if k >= max_terms:
            raise NonConvergenceError(k, abs(ratio))

    value = math.fsum(terms)
    logger.debug('pFq%s;%s at z=%.6g: %d terms', upper, lower, z, k)
    return EstimateWithError(value, abs(term))


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

# Gauss-Kronrod 7/15 abscissae and weights on [-1, 1] (non-negative half).
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KRONROD = np.concatenate([_WGK[:-1], _WGK[::-1]])
_GAUSS = np.zeros(15)
_GAUSS[1:7:2] = _WG[:3]
_GAUSS[7] = _WG[3]
_GAUSS[9:15:2] = _WG[2::-1]


def _gk15(f, a, b):
    """One Gauss-Kronrod panel; returns (value, error estimate)."""
    center = 0.5 * (a + b)
    half = 0.5 * (b - a)
    fx = np.asarray(f(center + half * _NODES), dtype=float)
    if not np.all(np.isfinite(fx)):
        raise NumericsError('non-finite integrand on [{:.6g}, {:.6g}]'.format(a, b))
    kronrod = float(np.dot(_KRONROD, fx))
    gauss = float(np.dot(_GAUSS, fx))
    mean = kronrod * 0.5
    resabs = abs(half) * float(np.dot(_KRONROD, np.abs(fx)))
    resasc = abs(half) * float(np.dot(_KRONROD, np.abs(fx - mean)))
    error = abs((kronrod - gauss) * half)
    if resasc != 0.0 and error != 0.0:
        error = resasc * min(1.0, (200.0 * error / resasc) ** 1.5)
    if resabs > np.finfo(float).tiny / (50.0 * EPS):
        error = max(50.0 * EPS * resabs, error)
    return kronrod * half, error


def _adaptive(segments, config):
    """Global adaptive bisection over a list of (integrand, a, b) segments."""
    heap = []
    for index, (g, a, b) in enumerate(segments):
        value, error = _gk15(g, a, b)
        heapq.heappush(heap, (-error, a, b, index, value))
    refinements = 0
    while True:
        total = math.fsum(item[4] for item in heap)
        error = math.fsum(-item[0] for item in heap)
        if error <= max(config.abs_tol, config.rel_tol * abs(total)):
            logger.debug('quadrature converged: %d refinements, %.3g bound', refinements, error)
            return EstimateWithError(total, error)
        if refinements >= config.max_refinements:
            raise RefinementBudgetError(EstimateWithError(total, error), len(heap))
        _, a, b, index, _ = heapq.heappop(heap)
        g = segments[index][0]
        mid = 0.5 * (a + b)
        for lo, hi in ((a, mid), (mid, b)):
            value, err = _gk15(g, lo, hi)
            heapq.heappush(heap, (-err, lo, hi, index, value))
        refinements += 1


def integrate_interval(f, a, b, config=None, sqrt_endpoint=False, min_panels=1):
    """Integral of f over [a, b].

    With sqrt_endpoint the substitution x = a + u**2 absorbs an x**(-1/2)
    type singularity at the left end.
    """
    config = config or QuadratureConfig()
    if not b > a:
        raise DomainError('b', b, 'b > a = {}'.format(a))
    if sqrt_endpoint:
        g = lambda u: 2.0 * u * f(a + u * u)
        lo, hi = 0.0, math.sqrt(b - a)
    else:
        g, lo, hi = f, a, b
    edges = np.linspace(lo, hi, int(min_panels) + 1)
    segments = [(g, float(edges[i]), float(edges[i + 1])) for i in range(len(edges) - 1)]
    return _adaptive(segments, config)


def integrate_semi_infinite(f, config=None):
    """Integral of f over (0, inf).

    Three pieces share one adaptive error budget: (0, a] with x = u**2,
    [a, tail_cut] as is, and [tail_cut, inf) with x = tail_cut / u**2, which
    maps both exponential and x**(-3/2) tails onto bounded integrands.
    """
    config = config or QuadratureConfig()
    cut = config.tail_cut
    a = min(1.0, cut)

    def near(u):
        return 2.0 * u * f(u * u)

    def far(u):
        return 2.0 * cut * f(cut / (u * u)) / (u * u * u)

    segments = [(near, 0.0, math.sqrt(a))]
    if cut > a:
        segments.append((f, a, cut))
    segments.append((far, 0.0, 1.0))
    return _adaptive(segments, config)


# ---------------------------------------------------------------------------
# Randomness
# ---------------------------------------------------------------------------

_UINT64 = 2 ** 64


@dataclass
class RandomStream:
    """Seeded, splittable source of randomness.

    Backed by the counter-based Philox generator keyed through a SeedSequence
    spawn key (stream_id, *path). Equal keys reproduce identical sequences;
    distinct keys are independent. `counter` counts the variates drawn.
    """
    seed: int
    stream_id: int = 0
    path: Tuple[int, ...] = ()
    counter: int = field(default=0, init=False)

    def __post_init__(self):
        if not 0 <= int(self.seed) < _UINT64:
            raise DomainError('seed', self.seed, '0 <= seed < 2**64')
        if not 0 <= int(self.stream_id) < _UINT64:
            raise DomainError('stream_id', self.stream_id, '0 <= stream_id < 2**64')
        sequence = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id),) + tuple(self.path))
        self._generator = np.random.Generator(np.random.Philox(sequence))

    def child(self, partition_id):
        """Independent stream for one partition of parallel work."""
        return RandomStream(self.seed, self.stream_id, tuple(self.path) + (int(partition_id),))

    def uniform(self, size=None):
        """Uniform draws on [0, 1)."""
        self.counter += 1 if size is None else int(np.prod(size))
        return self._generator.random(size)

    def standard_normal(self, size=None):
        """Box-Muller normals: exactly one uniform per normal, no rejection."""
        total = 1 if size is None else int(np.prod(size))
        pairs = (total + 1) // 2
        radius = np.sqrt(-2.0 * np.log(1.0 - self.uniform(pairs)))
        angle = 2.0 * np.pi * self.uniform(pairs)
        out = np.empty(2 * pairs)
        out[0::2] = radius * np.cos(angle)
        out[1::2] = radius * np.sin(angle)
        if size is None:
            return float(out[0])
        return out[:total].reshape(size)

    def poisson(self, mean, size=None):
        counts = self._generator.poisson(mean, size)
        self.counter += int(np.size(counts))
        return counts


def sample_standard_normal(stream, size=None):
    """Standard normal variates, deterministic given the stream state."""
    return stream.standard_normal(size)


def sample_exponential(stream, rate, size=None):
    """Exp(rate) variates by inverse CDF."""
    if not rate > 0:
        raise DomainError('rate', rate, 'rate > 0')
    u = stream.uniform(size)
    return -np.log1p(-u) / rate


def sample_gamma_half(stream, rate, size=None):
    """Gamma(shape 1/2, rate) variates as Z**2 / (2 rate)."""
    if not rate > 0:
        raise DomainError('rate', rate, 'rate > 0')
    z = stream.standard_normal(size)
    return z * z / (2.0 * rate)


def truncated_length_acceptance(lam, eps):
    """Acceptance probability of the Pareto proposal for lengths on [eps, inf)."""
    root = math.sqrt(lam * eps)
    return 1.0 - math.sqrt(math.pi) * root * float(special.erfcx(root))


def sample_truncated_excursion_length(stream, lam, eps, size=None, max_rounds=1000):
    """Exact draws from the density proportional to l**(-3/2) exp(-lam l) on [eps, inf).

    Proposal l = eps / V**2 (the pure l**(-3/2) law on [eps, inf)), accepted
    with probability exp(-lam (l - eps)). lam = 0 returns the proposal itself.
    """
    if not lam >= 0:
        raise DomainError('lambda', lam, 'lambda >= 0')
    if not eps > 0:
        raise DomainError('eps', eps, 'eps > 0')
    total = 1 if size is None else int(np.prod(size))
    out = np.empty(total)
    filled = 0
    rounds = 0
    accept = max(truncated_length_acceptance(lam, eps), 1e-3)
    while filled < total:
        if rounds >= max_rounds:
            raise SamplerBudgetError(rounds, total - filled)
        rounds += 1
        need = total - filled
        batch = int(need / accept * 1.1) + 16
        u = stream.uniform(batch)
        v = stream.uniform(batch)
        lengths = eps / (1.0 - u) ** 2
        kept = lengths[v < np.exp(-lam * (lengths - eps))][:need]
        out[filled:filled + kept.size] = kept
        filled += kept.size
    if size is None:
        return float(out[0])
    return out.reshape(size)


# ---------------------------------------------------------------------------
# Streaming statistics
# ---------------------------------------------------------------------------

@dataclass
class RunningStats:
    """Welford accumulator with exact pairwise merging."""
    count: int = 0
    mean: float = 0.0
    sum_sq_dev: float = 0.0

    @classmethod
    def from_values(cls, values):
        arr = np.asarray(values, dtype=float).ravel()
        if arr.size == 0:
            return cls()
        mean = float(arr.mean())
        return cls(int(arr.size), mean, float(np.sum((arr - mean) ** 2)))

    def push(self, x):
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.sum_sq_dev += delta * (x - self.mean)

    def extend(self, values):
        merged = self.merge(RunningStats.from_values(values))
        self.count, self.mean, self.sum_sq_dev = merged.count, merged.mean, merged.sum_sq_dev
        return self

    def merge(self, other):
        """Statistics of the concatenated samples."""
        if other.count == 0:
            return RunningStats(self.count, self.mean, self.sum_sq_dev)
        if self.count == 0:
            return RunningStats(other.count, other.mean, other.sum_sq_dev)
        count = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / count
        m2 = self.sum_sq_dev + other.sum_sq_dev + delta * delta * self.count * other.count / count
        return RunningStats(count, mean, m2)

    @property
    def variance(self):
        if self.count < 2:
            return 0.0
        return self.sum_sq_dev / (self.count - 1)

    @property
    def stderr(self):
        if self.count == 0:
            return 0.0
        return math.sqrt(self.variance / self.count)

    def estimate(self):
        return EstimateWithError(self.mean, self.stderr, STATISTICAL_STDERR)
