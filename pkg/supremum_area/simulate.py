"""Monte Carlo engines for the area under the Brownian supremum.

Two independent constructions:

* paths: discretize B on [0, T], take the running maximum and integrate it;
* excursions: sample A(T1), T1 ~ Exp(lam), as A' + A'' from the Poisson
  process of (local time, length) excursion marks thinned by the time marks.

Replications are split into fixed-size blocks; block b always draws from
stream.child(b) and block statistics are merged in block order, so results
do not depend on the number of worker threads.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Dict, Optional

import numpy as np

from . import analytic
from .analytic import DoubleLaplaceParams
from .numerics import (
    DomainError,
    EstimateWithError,
    RunningStats,
    integrate_interval,
    integrate_semi_infinite,
    sample_exponential,
    sample_gamma_half,
    sample_standard_normal,
    sample_truncated_excursion_length,
)

logger = logging.getLogger(__name__)

SCHEMES = ('left_rectangle', 'trapezoid', 'bridge')
REPLICATION_BLOCK = 4096
# Rows of a path block are simulated in chunks of at most this many increments.
PATH_CHUNK_CELLS = 2 ** 22
DEFAULT_COUNT_CAP = 10_000_000
# E[max of B on a grid] falls short of E[sup B] by about 0.5826 sqrt(dt).
DISCRETE_MAX_SHORTFALL = 0.5826
BIAS_MARGIN = 1.25
# Trapezoid on the bridge-corrected maximum misses at most S(T) dt / 2; E S(1) / 2 = sqrt(2/pi) / 2.
BRIDGE_TRAPEZOID_FACTOR = 0.5 * math.sqrt(2.0 / math.pi)
MAX_MOMENT_ORDER = 8

_INV_SQRT_TWO_PI = 1.0 / math.sqrt(2.0 * math.pi)


class SimulationBudgetError(RuntimeError):
    """A replication needed more Poisson points than the configured cap."""
    def __init__(self, count, cap):
        self.count = count
        self.cap = cap
        super().__init__(
            'replication drew {} excursion points, cap is {}; raise the length floor or the cap'.format(count, cap)
        )


# ---------------------------------------------------------------------------
# Configuration and reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PathConfig:
    horizon: float = 1.0
    steps: int = 1000
    scheme: str = 'left_rectangle'
    replications: int = 10000

    def __post_init__(self):
        if not self.horizon > 0:
            raise DomainError('horizon', self.horizon, 'horizon > 0')
        if int(self.steps) != self.steps or self.steps < 2:
            raise DomainError('steps', self.steps, 'integer steps >= 2')
        if self.scheme not in SCHEMES:
            raise DomainError('scheme', self.scheme, 'one of {}'.format(SCHEMES))
        if int(self.replications) != self.replications or self.replications < 1:
            raise DomainError('replications', self.replications, 'integer replications >= 1')


@dataclass(frozen=True)
class ExcursionConfig:
    params: DoubleLaplaceParams
    length_floor: float = 1e-4
    compensate: bool = True
    replications: int = 100000
    count_cap: int = DEFAULT_COUNT_CAP

    def __post_init__(self):
        if not self.length_floor > 0:
            raise DomainError('length_floor', self.length_floor, 'length_floor > 0')
        if int(self.replications) != self.replications or self.replications < 1:
            raise DomainError('replications', self.replications, 'integer replications >= 1')
        if self.count_cap < 1:
            raise DomainError('count_cap', self.count_cap, 'count_cap >= 1')


@dataclass(frozen=True)
class ExcursionPoint:
    tau: float
    length: float


@dataclass
class McReport:
    """A Monte Carlo estimate with its analytic reference, if one exists."""
    label: str
    estimate: EstimateWithError
    replications: int
    seed: int
    wall_config: Dict = field(default_factory=dict)
    reference: Optional[float] = None
    bias_allowance: float = 0.0
    # +1 or -1 when the bias can only push the estimate above or below the
    # reference; 0 when its sign is unknown and the allowance applies both ways
    bias_direction: int = 0
    status: str = 'ok'
    extra: Dict = field(default_factory=dict)

    @property
    def z_score(self):
        """Standardized distance to the reference, after the bias allowance."""
        if self.reference is None or self.estimate.error == 0:
            return None
        return self._residual_gap() / self.estimate.error

    def _residual_gap(self):
        gap = self.estimate.value - self.reference
        if self.bias_direction == 0 or gap * self.bias_direction > 0:
            gap = math.copysign(max(0.0, abs(gap) - self.bias_allowance), gap)
        return gap

    def agrees(self, sigmas=3.0):
        z = self.z_score
        if z is None:
            return self.reference is None or self._residual_gap() == 0.0
        return abs(z) <= sigmas

    def to_row(self):
        row = {
            'label': self.label,
            'estimate': self.estimate.value,
            'stderr': self.estimate.error,
            'reference': self.reference,
            'bias_allowance': self.bias_allowance,
            'z_score': self.z_score,
            'replications': self.replications,
            'status': self.status,
        }
        row.update(self.extra)
        return row


# ---------------------------------------------------------------------------
# Replication scheduling
# ---------------------------------------------------------------------------

def _blocks(replications, block_size):
    full, rest = divmod(int(replications), int(block_size))
    sizes = [block_size] * full + ([rest] if rest else [])
    return list(enumerate(sizes))


def run_replications(stream, replications, block_size, worker, threads=1):
    """Run worker(child_stream, count) over fixed blocks and return results in block order."""
    if replications < 1:
        raise DomainError('replications', replications, 'replications >= 1')
    if threads < 1:
        raise DomainError('threads', threads, 'threads >= 1')
    blocks = _blocks(replications, block_size)
    logger.debug('%d replications in %d blocks on %d threads', replications, len(blocks), threads)

    def task(block):
        index, count = block
        return worker(stream.child(index), count)

    if threads == 1 or len(blocks) == 1:
        return [task(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(task, blocks))


def _merged_columns(results):
    """RunningStats per column, merged in block order."""
    columns = None
    for block in results:
        block = np.asarray(block, dtype=float)
        if block.ndim == 1:
            block = block[:, None]
        if columns is None:
            columns = [RunningStats() for _ in range(block.shape[1])]
        for j in range(block.shape[1]):
            columns[j] = columns[j].merge(RunningStats.from_values(block[:, j]))
    return columns


# ---------------------------------------------------------------------------
# Path engine
# ---------------------------------------------------------------------------

def _running_max(increments, bridge_uniforms=None, dt=None):
    """Running maximum S_0..S_n (S_0 = 0) of the walk with the given increments.

    With bridge_uniforms, each step contributes the exact maximum of the
    Brownian bridge between its endpoints.
    """
    rows = increments.shape[0]
    walk = np.concatenate([np.zeros((rows, 1)), np.cumsum(increments, axis=1)], axis=1)
    if bridge_uniforms is None:
        return np.maximum.accumulate(walk, axis=1)
    left, right = walk[:, :-1], walk[:, 1:]
    spread = np.sqrt((right - left) ** 2 - 2.0 * dt * np.log1p(-bridge_uniforms))
    step_max = 0.5 * (left + right + spread)
    sup = np.concatenate([np.zeros((rows, 1)), step_max], axis=1)
    return np.maximum.accumulate(sup, axis=1)


def _area(running_max, dt, scheme):
    if scheme == 'left_rectangle':
        return dt * running_max[:, :-1].sum(axis=1)
    inner = running_max.sum(axis=1) - 0.5 * (running_max[:, 0] + running_max[:, -1])
    return dt * inner


def _path_areas(stream, steps, scheme, horizons):
    """Areas for one path per entry of horizons, in chunks bounded by PATH_CHUNK_CELLS."""
    horizons = np.asarray(horizons, dtype=float)
    out = np.empty(horizons.size)
    chunk = max(1, PATH_CHUNK_CELLS // steps)
    for start in range(0, horizons.size, chunk):
        h = horizons[start:start + chunk]
        dt = (h / steps)[:, None]
        increments = np.sqrt(dt) * sample_standard_normal(stream, (h.size, steps))
        uniforms = stream.uniform((h.size, steps)) if scheme == 'bridge' else None
        sup = _running_max(increments, uniforms, dt)
        out[start:start + h.size] = _area(sup, dt[:, 0], scheme)
    return out


def simulate_supremum_path(stream, cfg):
    """One discretized running maximum S_0..S_n on [0, horizon]."""
    dt = cfg.horizon / cfg.steps
    increments = math.sqrt(dt) * np.asarray(sample_standard_normal(stream, (1, cfg.steps)), dtype=float)
    uniforms = stream.uniform((1, cfg.steps)) if cfg.scheme == 'bridge' else None
    return _running_max(increments, uniforms, dt)[0]


def simulate_area_path(stream, cfg):
    """One sample of the discretized area under S on [0, horizon]."""
    sup = simulate_supremum_path(stream, cfg)
    return float(_area(sup[None, :], cfg.horizon / cfg.steps, cfg.scheme)[0])


def sample_areas(stream, cfg, threads=1):
    """cfg.replications area samples, concatenated in block order."""
    blocks = run_replications(
        stream, cfg.replications, REPLICATION_BLOCK,
        lambda child, count: _path_areas(child, cfg.steps, cfg.scheme, np.full(count, cfg.horizon)),
        threads,
    )
    return np.concatenate(blocks)


def discretization_bias_allowance(cfg):
    """One-sided allowance on the first moment of the discretized area."""
    if cfg.scheme == 'bridge':
        return BIAS_MARGIN * BRIDGE_TRAPEZOID_FACTOR * math.sqrt(cfg.horizon) * cfg.horizon / cfg.steps
    return BIAS_MARGIN * DISCRETE_MAX_SHORTFALL * math.sqrt(cfg.horizon / cfg.steps) * cfg.horizon


def discretization_bias_direction(scheme):
    """Sign of the bias on moments of the area: grid maxima only undershoot S."""
    return 0 if scheme == 'bridge' else -1


def _path_config_echo(cfg, **more):
    echo = asdict(cfg)
    echo.update(more)
    return echo


def estimate_moments_mc(stream, cfg, max_order, threads=1):
    """E A(T)**k for k = 0..max_order from one pass over cfg.replications paths."""
    if int(max_order) != max_order or not 1 <= max_order <= MAX_MOMENT_ORDER:
        raise DomainError('max_order', max_order, '1 <= max_order <= {}'.format(MAX_MOMENT_ORDER))
    logger.info('path engine: %d replications x %d steps (%s)', cfg.replications, cfg.steps, cfg.scheme)
    powers = np.arange(max_order + 1)

    def worker(child, count):
        areas = _path_areas(child, cfg.steps, cfg.scheme, np.full(count, cfg.horizon))
        return areas[:, None] ** powers[None, :]

    columns = _merged_columns(run_replications(stream, cfg.replications, REPLICATION_BLOCK, worker, threads))
    shortfall = discretization_bias_allowance(cfg)
    reports = []
    for k, stats in enumerate(columns):
        reference = analytic.exact_moment(k).value * cfg.horizon ** (1.5 * k)
        allowance = 0.0
        if k >= 1:
            allowance = k * analytic.exact_moment(k - 1).value * cfg.horizon ** (1.5 * (k - 1)) * shortfall
        reports.append(McReport(
            label='moment_{}'.format(k),
            estimate=stats.estimate(),
            replications=stats.count,
            seed=stream.seed,
            wall_config=_path_config_echo(cfg, max_order=max_order),
            reference=reference,
            bias_allowance=allowance,
            bias_direction=discretization_bias_direction(cfg.scheme),
            extra={'order': k},
        ))
    return reports


def scaling_check(stream, cfg, horizons, threads=1):
    """Mean of A(T) / T**(3/2) for each horizon; all should estimate E A."""
    horizons = [float(t) for t in horizons]
    if len(horizons) < 2:
        raise DomainError('horizons', horizons, 'at least two horizons')
    reports = []
    for i, horizon in enumerate(horizons):
        sub = PathConfig(horizon, cfg.steps, cfg.scheme, cfg.replications)
        child = stream.child(i)
        scale = horizon ** -1.5

        def worker(s, count, sub=sub, scale=scale):
            return _path_areas(s, sub.steps, sub.scheme, np.full(count, sub.horizon)) * scale

        stats = _merged_columns(run_replications(child, cfg.replications, REPLICATION_BLOCK, worker, threads))[0]
        reports.append(McReport(
            label='scaled_mean_T={:g}'.format(horizon),
            estimate=stats.estimate(),
            replications=stats.count,
            seed=stream.seed,
            wall_config=_path_config_echo(sub),
            reference=analytic.exact_moment(1).value,
            bias_allowance=discretization_bias_allowance(sub) * scale,
            bias_direction=discretization_bias_direction(sub.scheme),
            extra={'horizon': horizon},
        ))
    return reports


def discretization_study(stream, horizon, steps_list, replications, scheme='left_rectangle', threads=1):
    """Mean area at several step counts on common random numbers.

    Every coarse grid sums blocks of the finest increments, so the whole
    sequence comes from the same Brownian paths.
    """
    steps_list = sorted(int(n) for n in steps_list)
    finest = steps_list[-1]
    if any(finest % n for n in steps_list):
        raise DomainError('steps_list', steps_list, 'every step count divides the finest')
    if scheme == 'bridge':
        raise DomainError('scheme', scheme, 'a discrete scheme')
    cfgs = [PathConfig(horizon, n, scheme, replications) for n in steps_list]

    def worker(child, count):
        out = np.empty((count, len(steps_list)))
        chunk = max(1, PATH_CHUNK_CELLS // finest)
        for start in range(0, count, chunk):
            rows = min(chunk, count - start)
            fine = math.sqrt(horizon / finest) * sample_standard_normal(child, (rows, finest))
            for j, n in enumerate(steps_list):
                coarse = fine.reshape(rows, n, finest // n).sum(axis=2)
                out[start:start + rows, j] = _area(_running_max(coarse), horizon / n, scheme)
        return out

    columns = _merged_columns(run_replications(stream, replications, REPLICATION_BLOCK, worker, threads))
    return [
        McReport(
            label='steps={}'.format(cfg.steps),
            estimate=stats.estimate(),
            replications=stats.count,
            seed=stream.seed,
            wall_config=_path_config_echo(cfg),
            reference=analytic.exact_moment(1).value * horizon ** 1.5,
            bias_allowance=discretization_bias_allowance(cfg),
            bias_direction=-1,
            extra={'steps': cfg.steps},
        )
        for cfg, stats in zip(cfgs, columns)
    ]


def estimate_path_marked_time_lt(stream, cfg, alpha, lam, threads=1):
    """E exp(-alpha A(T)) with T ~ Exp(lam) drawn per path; cfg.horizon is ignored."""
    params = DoubleLaplaceParams(alpha, lam)

    def worker(child, count):
        horizons = sample_exponential(child, lam, count)
        return np.exp(-alpha * _path_areas(child, cfg.steps, cfg.scheme, horizons))

    stats = _merged_columns(run_replications(stream, cfg.replications, REPLICATION_BLOCK, worker, threads))[0]
    # E[T**1.5] = Gamma(5/2) / lam**1.5 scales the per-path shortfall.
    if cfg.scheme == 'bridge':
        allowance = BIAS_MARGIN * BRIDGE_TRAPEZOID_FACTOR * alpha * 0.75 * math.sqrt(math.pi) / (lam ** 1.5 * cfg.steps)
    else:
        allowance = BIAS_MARGIN * alpha * DISCRETE_MAX_SHORTFALL * 0.75 * math.sqrt(math.pi) / (
            lam ** 1.5 * math.sqrt(cfg.steps))
    return McReport(
        label='path_marked_time_lt',
        estimate=stats.estimate(),
        replications=stats.count,
        seed=stream.seed,
        wall_config=_path_config_echo(cfg, alpha=alpha, lam=lam),
        reference=analytic.marked_time_lt(params).value,
        bias_allowance=allowance,
        bias_direction=-discretization_bias_direction(cfg.scheme),
    )


# ---------------------------------------------------------------------------
# Excursion engine
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def unmarked_rate(lam, eps, q=None):
    """(2 pi)**-1/2 int_eps^inf l**(-3/2) exp(-lam l) dl: points of Xi' per unit local time."""
    quad = integrate_semi_infinite(lambda x: (x + eps) ** -1.5 * np.exp(-lam * (x + eps)), q)
    return quad.value * _INV_SQRT_TWO_PI


@lru_cache(maxsize=64)
def truncated_mass(lam, eps, q=None):
    """(2 pi)**-1/2 int_0^eps l**(-1/2) exp(-lam l) dl; times zeta**2/2 gives the compensator."""
    quad = integrate_interval(lambda x: x ** -0.5 * np.exp(-lam * x), 0.0, eps, q, sqrt_endpoint=True)
    return quad.value * _INV_SQRT_TWO_PI


def intensity_measure(tau_range, length_range, lam, q=None):
    """Mean number of unmarked excursion points in a (tau, length) rectangle."""
    (t0, t1), (l0, l1) = tau_range, length_range
    if not (0 <= t0 < t1 and 0 < l0 < l1):
        raise DomainError('rectangle', (tau_range, length_range), '0 <= t0 < t1, 0 < l0 < l1')
    if math.isinf(l1):
        mass = unmarked_rate(lam, l0, q)
    else:
        mass = integrate_interval(lambda l: l ** -1.5 * np.exp(-lam * l), l0, l1, q).value * _INV_SQRT_TWO_PI
    return (t1 - t0) * mass


def _unmarked_points(stream, lam, eps, zetas, cap):
    """Counts per replication plus flat (tau, length) arrays for Xi' on [0, zeta] x [eps, inf)."""
    counts = stream.poisson(np.asarray(zetas, dtype=float) * unmarked_rate(lam, eps))
    counts = np.atleast_1d(counts)
    if counts.size and counts.max() > cap:
        raise SimulationBudgetError(int(counts.max()), cap)
    total = int(counts.sum())
    taus = np.repeat(zetas, counts) * stream.uniform(total)
    lengths = sample_truncated_excursion_length(stream, lam, eps, total) if total else np.empty(0)
    return counts, taus, lengths


def sample_excursion_points(stream, lam, eps, zeta, cap=DEFAULT_COUNT_CAP):
    """The points of Xi' with tau < zeta and length >= eps, unordered."""
    _, taus, lengths = _unmarked_points(stream, lam, eps, np.array([float(zeta)]), cap)
    return [ExcursionPoint(float(t), float(l)) for t, l in zip(taus, lengths)]


def sample_a_prime_many(stream, cfg, zetas):
    """A' = sum tau * length over unmarked excursions, one sample per zeta."""
    zetas = np.atleast_1d(np.asarray(zetas, dtype=float))
    if not np.all(zetas > 0):
        raise DomainError('zeta', zetas, 'zeta > 0')
    lam, eps = cfg.params.lam, cfg.length_floor
    counts, taus, lengths = _unmarked_points(stream, lam, eps, zetas, cfg.count_cap)
    owner = np.repeat(np.arange(zetas.size), counts)
    out = np.bincount(owner, weights=taus * lengths, minlength=zetas.size)
    if cfg.compensate:
        out = out + 0.5 * zetas * zetas * truncated_mass(lam, eps)
    return out


def sample_a_prime(stream, cfg, zeta):
    return float(sample_a_prime_many(stream, cfg, [zeta])[0])


def sample_a_double_prime(stream, lam, zeta, size=None):
    """A'' = zeta * Y with Y ~ Gamma(1/2, lam), the first-mark offset in its excursion."""
    if not zeta >= 0:
        raise DomainError('zeta', zeta, 'zeta >= 0')
    return zeta * sample_gamma_half(stream, lam, size)


def truncation_allowance(cfg):
    """Bound on the bias of E exp(-alpha A) from dropping excursions shorter than eps.

    Without compensation the dropped mass has mean E[zeta**2]/2 * m_eps; with it,
    only its variance E[zeta**3]/3 * int_0^eps l**(1/2) dLambda remains.
    """
    lam, alpha, eps = cfg.params.lam, cfg.params.alpha, cfg.length_floor
    if not cfg.compensate:
        return alpha * truncated_mass(lam, eps) / (2.0 * lam)
    rate = math.sqrt(2.0 * lam)
    third_moment = 6.0 / rate ** 3
    variance = third_moment / 3.0 * _INV_SQRT_TWO_PI * (2.0 / 3.0) * eps ** 1.5
    return 0.5 * alpha * alpha * variance


def estimate_marked_time_lt(stream, cfg, threads=1):
    """E exp(-alpha A(T1)) from zeta ~ Exp(sqrt(2 lam)) and A = A' + A''."""
    lam, alpha = cfg.params.lam, cfg.params.alpha
    rate = math.sqrt(2.0 * lam)
    logger.info('excursion engine: %d replications, eps=%g, compensate=%s',
                cfg.replications, cfg.length_floor, cfg.compensate)

    def worker(child, count):
        zetas = sample_exponential(child, rate, count)
        area = sample_a_prime_many(child, cfg, zetas) + sample_a_double_prime(child, lam, 1.0, count) * zetas
        return np.exp(-alpha * area)

    stats = _merged_columns(run_replications(stream, cfg.replications, REPLICATION_BLOCK, worker, threads))[0]
    return McReport(
        label='marked_time_lt',
        estimate=stats.estimate(),
        replications=stats.count,
        seed=stream.seed,
        wall_config={'alpha': alpha, 'lam': lam, 'length_floor': cfg.length_floor,
                     'compensate': cfg.compensate, 'replications': cfg.replications},
        reference=analytic.marked_time_lt(cfg.params).value,
        bias_allowance=truncation_allowance(cfg),
    )


def estimate_conditional_a_prime(stream, cfg, zeta, threads=1):
    """E[exp(-alpha A') | zeta] by simulation, against the closed form."""
    def worker(child, count):
        return np.exp(-cfg.params.alpha * sample_a_prime_many(child, cfg, np.full(count, float(zeta))))

    stats = _merged_columns(run_replications(stream, cfg.replications, REPLICATION_BLOCK, worker, threads))[0]
    return McReport(
        label='conditional_a_prime',
        estimate=stats.estimate(),
        replications=stats.count,
        seed=stream.seed,
        wall_config={'alpha': cfg.params.alpha, 'lam': cfg.params.lam, 'zeta': zeta,
                     'length_floor': cfg.length_floor, 'compensate': cfg.compensate},
        reference=analytic.conditional_lt_a_prime(cfg.params, zeta),
        bias_allowance=truncation_allowance(cfg),
    )


def estimate_conditional_a_double_prime(stream, params, zeta, replications, threads=1):
    """E[exp(-alpha A'') | zeta] by simulation, against the closed form."""
    def worker(child, count):
        return np.exp(-params.alpha * sample_a_double_prime(child, params.lam, zeta, count))

    stats = _merged_columns(run_replications(stream, replications, REPLICATION_BLOCK, worker, threads))[0]
    return McReport(
        label='conditional_a_double_prime',
        estimate=stats.estimate(),
        replications=stats.count,
        seed=stream.seed,
        wall_config={'alpha': params.alpha, 'lam': params.lam, 'zeta': zeta},
        reference=analytic.conditional_lt_a_double_prime(params, zeta),
    )


def poisson_functional_check(stream, zeta, lam, alpha, eps, reps, q=None, threads=1):
    """Empirical E exp(-sum f) over truncated Xi' against exp(-int (1 - e^-f) dmu), f = alpha tau l.

    The right side is a double quadrature: lengths on [eps, inf) inside,
    local times on [0, zeta] outside.
    """
    for name, value in (('zeta', zeta), ('lambda', lam), ('eps', eps)):
        if not value > 0:
            raise DomainError(name, value, '{} > 0'.format(name))
    if not alpha >= 0:
        raise DomainError('alpha', alpha, 'alpha >= 0')

    def inner(tau):
        if alpha == 0:
            return 0.0
        quad = integrate_semi_infinite(
            lambda x: -np.expm1(-alpha * tau * (x + eps)) * (x + eps) ** -1.5 * np.exp(-lam * (x + eps)), q)
        return quad.value * _INV_SQRT_TWO_PI

    outer = integrate_interval(lambda taus: np.array([inner(t) for t in np.ravel(taus)]), 0.0, zeta, q)
    reference = math.exp(-outer.value)

    def worker(child, count):
        counts, taus, lengths = _unmarked_points(child, lam, eps, np.full(count, float(zeta)), DEFAULT_COUNT_CAP)
        owner = np.repeat(np.arange(count), counts)
        return np.exp(-np.bincount(owner, weights=alpha * taus * lengths, minlength=count))

    stats = _merged_columns(run_replications(stream, reps, REPLICATION_BLOCK, worker, threads))[0]
    return McReport(
        label='poisson_functional',
        estimate=stats.estimate(),
        replications=stats.count,
        seed=stream.seed,
        wall_config={'zeta': zeta, 'lam': lam, 'alpha': alpha, 'eps': eps, 'reps': reps},
        reference=reference,
        extra={'difference': stats.mean - reference},
    )


def poisson_count_check(stream, tau_range, length_range, lam, eps, zeta, reps, q=None, threads=1):
    """Mean count of Xi' points in a sub-rectangle against its intensity measure."""
    (t0, t1), (l0, l1) = tau_range, length_range
    if not (t1 <= zeta and l0 >= eps):
        raise DomainError('rectangle', (tau_range, length_range), 'inside [0, zeta] x [eps, inf)')
    reference = intensity_measure(tau_range, length_range, lam, q)

    def worker(child, count):
        counts, taus, lengths = _unmarked_points(child, lam, eps, np.full(count, float(zeta)), DEFAULT_COUNT_CAP)
        inside = (taus >= t0) & (taus < t1) & (lengths >= l0) & (lengths < l1)
        owner = np.repeat(np.arange(count), counts)
        return np.bincount(owner, weights=inside.astype(float), minlength=count)

    stats = _merged_columns(run_replications(stream, reps, REPLICATION_BLOCK, worker, threads))[0]
    return McReport(
        label='poisson_count',
        estimate=stats.estimate(),
        replications=stats.count,
        seed=stream.seed,
        wall_config={'tau_range': list(tau_range), 'length_range': list(length_range),
                     'lam': lam, 'eps': eps, 'zeta': zeta},
        reference=reference,
    )
