"""Command-line entry point for supremum-area.

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 numerical
instability, 4 simulation budget or insufficient data.
"""

import argparse
import logging
import math
import os
from dataclasses import asdict, dataclass, field

from supremum_area.numerics import DomainError, NumericsError, QuadratureConfig, SamplerBudgetError
from supremum_area.output import FORMATS, OutputSpec, write_table

logger = logging.getLogger('supremum_area.cli')

EXIT_OK = 0
EXIT_VERIFICATION_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_BUDGET = 4

THREADS_ENV = 'SUPREMUM_AREA_THREADS'
ENGINES = ('paths', 'excursion', 'scaling', 'lemma_check', 'tail')
PSI_METHODS = ('series', 'hypergeometric', 'both', 'auto')
MC_COLUMNS = ['label', 'estimate', 'stderr', 'reference', 'bias_allowance', 'z_score', 'replications', 'status']


@dataclass(frozen=True)
class GlobalOptions:
    seed: int = 0
    threads: int = 1
    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)
    verbosity: str = 'info'

    def __post_init__(self):
        if not 0 <= self.seed < 2 ** 64:
            raise DomainError('seed', self.seed, '0 <= seed < 2**64')
        if self.threads < 1:
            raise DomainError('threads', self.threads, 'threads >= 1')

    def echo(self):
        return {'seed': self.seed, 'threads': self.threads, 'quadrature': asdict(self.quadrature)}


def _default_threads():
    """Thread count default, overridable through SUPREMUM_AREA_THREADS."""
    value = os.environ.get(THREADS_ENV)
    if not value:
        return 1
    try:
        threads = int(value)
    except ValueError:
        logger.warning('Ignoring %s=%r: not an integer', THREADS_ENV, value)
        return 1
    return max(1, threads)


def _float_list(text):
    try:
        return [float(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError('expected comma-separated numbers, got {!r}'.format(text))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_moments(max_n, out, options=None):
    """Exact moments next to their Stirling asymptote for n = 0..max_n."""
    from supremum_area import analytic

    options = options or GlobalOptions()
    if int(max_n) != max_n or max_n < 0:
        raise DomainError('max_n', max_n, 'integer max_n >= 0')
    rows = []
    for n in range(int(max_n) + 1):
        moment = analytic.exact_moment(n)
        row = {'n': n, 'value': moment.value, 'log_value': moment.log_value, 'asymptote': None, 'ratio': None}
        if n >= 1:
            row['asymptote'] = analytic.moment_asymptote(n)
            row['ratio'] = analytic.moment_ratio(n)
        rows.append(row)
    write_table(out, 'moments', dict(options.echo(), max_n=max_n),
                ['n', 'value', 'log_value', 'asymptote', 'ratio'], rows)
    return EXIT_OK


def _s_grid(s_min, s_max, step):
    count = int(math.floor((s_max - s_min) / step + 1e-9)) + 1
    return [s_min + k * step for k in range(count)]


def cmd_psi(s_min, s_max, step, method, out, options=None, tolerance=1e-10):
    """psi(s) on a grid by the series, the hypergeometric form, both, or auto.

    auto switches from the series to the Mellin-Barnes integral once the
    series loses too many digits, so any s_max is accepted.
    """
    from supremum_area import analytic

    options = options or GlobalOptions()
    if not (0 <= s_min < s_max):
        raise DomainError('s range', (s_min, s_max), '0 <= s_min < s_max')
    if not step > 0:
        raise DomainError('step', step, 'step > 0')
    if method not in PSI_METHODS:
        raise DomainError('method', method, 'one of {}'.format(', '.join(PSI_METHODS)))
    rows = []
    worst = 0.0
    for s in _s_grid(s_min, s_max, step):
        if method == 'hypergeometric':
            rows.append({'s': s, 'psi': analytic.psi_hypergeometric(s).value})
            continue
        if method == 'auto':
            rows.append({'s': s, 'psi': analytic.psi(s, options.quadrature).value})
            continue
        row = {'s': s, 'psi': analytic.psi_series(s).value}
        if method == 'both':
            row['psi_alt'] = analytic.psi_hypergeometric(s).value
            row['abs_diff'] = abs(row['psi'] - row['psi_alt'])
            worst = max(worst, row['abs_diff'])
        rows.append(row)
    columns = ['s', 'psi', 'psi_alt', 'abs_diff'] if method == 'both' else ['s', 'psi']
    summary = {'max_abs_diff': worst, 'tolerance': tolerance} if method == 'both' else None
    write_table(out, 'psi', dict(options.echo(), s_min=s_min, s_max=s_max, step=step, method=method),
                columns, rows, summary)
    if method == 'both' and worst > tolerance:
        logger.error('series and hypergeometric forms differ by %.3g', worst)
        return EXIT_VERIFICATION_FAILED
    return EXIT_OK


def cmd_verify_theorem1(alphas, lambdas, out, options=None, beta=None):
    """Both sides of the double Laplace identity on the alpha x lambda grid."""
    from supremum_area import analytic
    from supremum_area.numerics import EPS

    options = options or GlobalOptions()
    if not alphas or not lambdas:
        raise DomainError('grid', (alphas, lambdas), 'non-empty alpha and lambda lists')
    q = options.quadrature
    rows = []
    for alpha in alphas:
        for lam in lambdas:
            p = analytic.DoubleLaplaceParams(alpha, lam)
            lhs = analytic.theorem1_lhs(p, q)
            rhs = analytic.theorem1_rhs(p, q)
            bound = lhs.error + rhs.error + 8 * EPS * (abs(lhs.value) + abs(rhs.value))
            diff = abs(lhs.value - rhs.value)
            row = {'alpha': alpha, 'lambda': lam, 'lhs': lhs.value, 'rhs': rhs.value,
                   'abs_diff': diff, 'combined_bound': bound, 'pass': diff <= bound}
            if beta is not None:
                scaled = analytic.theorem1_lhs(analytic.DoubleLaplaceParams(beta ** 1.5 * alpha, beta * lam), q)
                residual = lhs.value - beta * scaled.value
                row['beta_residual'] = residual
                row['beta_pass'] = abs(residual) <= lhs.error + beta * scaled.error + 8 * EPS * abs(lhs.value)
            logger.info('alpha=%g lambda=%g: |lhs - rhs| = %.3g (bound %.3g)', alpha, lam, diff, bound)
            rows.append(row)
    columns = ['alpha', 'lambda', 'lhs', 'rhs', 'abs_diff', 'combined_bound', 'pass']
    if beta is not None:
        columns += ['beta_residual', 'beta_pass']
    write_table(out, 'verify-theorem1', dict(options.echo(), alphas=alphas, lambdas=lambdas, beta=beta),
                columns, rows)
    ok = all(row['pass'] and row.get('beta_pass', True) for row in rows)
    return EXIT_OK if ok else EXIT_VERIFICATION_FAILED


def cmd_mc(engine, out, options=None, replications=10000, steps=1000, horizon=1.0,
           scheme='left_rectangle', max_order=2, alpha=1.0, lam=1.0, eps=1e-4,
           compensate=True, zeta=1.0, horizons=(0.25, 1.0, 4.0), xs=(0.8, 1.0, 1.2)):
    """Run one Monte Carlo engine and report estimates next to their references."""
    from supremum_area import density, simulate
    from supremum_area.analytic import DoubleLaplaceParams
    from supremum_area.numerics import RandomStream

    options = options or GlobalOptions()
    if engine not in ENGINES:
        raise DomainError('engine', engine, 'one of {}'.format(ENGINES))
    stream = RandomStream(options.seed, stream_id=ENGINES.index(engine))
    config = dict(options.echo(), engine=engine, replications=replications)
    extra_columns = []
    checked = True

    if engine in ('paths', 'scaling', 'tail'):
        cfg = simulate.PathConfig(horizon, steps, scheme, replications)
        config.update(steps=steps, horizon=horizon, scheme=scheme)
    if engine == 'paths':
        config['max_order'] = max_order
        reports = simulate.estimate_moments_mc(stream, cfg, max_order, options.threads)
        extra_columns = ['order']
    elif engine == 'scaling':
        config['horizons'] = list(horizons)
        reports = simulate.scaling_check(stream, cfg, horizons, options.threads)
        extra_columns = ['horizon']
    elif engine == 'tail':
        config['xs'] = list(xs)
        reports = density.tail_probe(stream, xs, cfg, options.threads)
        extra_columns = ['x', 'hits', 'p', 'log_p', 'ratio', 'detail']
        checked = False
    elif engine == 'excursion':
        ecfg = simulate.ExcursionConfig(DoubleLaplaceParams(alpha, lam), eps, compensate, replications)
        config.update(alpha=alpha, lam=lam, eps=eps, compensate=compensate)
        reports = [simulate.estimate_marked_time_lt(stream, ecfg, options.threads)]
    else:
        config.update(alpha=alpha, lam=lam, eps=eps, zeta=zeta)
        reports = [simulate.poisson_functional_check(stream, zeta, lam, alpha, eps, replications,
                                                     options.quadrature, options.threads)]
        extra_columns = ['difference']

    rows = [report.to_row() for report in reports]
    write_table(out, 'mc', config, MC_COLUMNS + extra_columns, rows)
    if any(report.status != 'ok' for report in reports):
        return EXIT_BUDGET
    if checked and not all(report.agrees() for report in reports):
        logger.error('Monte Carlo estimate outside 3 standard errors of its reference')
        return EXIT_VERIFICATION_FAILED
    return EXIT_OK


def cmd_density(x_max, points, contour, out, options=None, self_test=False, tolerance=1e-3):
    """Inverted density with its normalization, moments and conjecture diagnostics."""
    from supremum_area import analytic, density

    options = options or GlobalOptions()
    config = dict(options.echo(), contour=asdict(contour))
    if self_test:
        result = density.self_test(contour)
        rows = [{'x': x, 'exact': e, 'inverted': v, 'abs_error': abs(v - e)}
                for x, e, v in zip(result.xs, result.exact, result.inverted)]
        write_table(out, 'density-self-test', dict(config, method=result.method),
                    ['x', 'exact', 'inverted', 'abs_error'], rows,
                    {'max_error': result.max_error, 'passed': result.passed})
        return EXIT_OK if result.passed else EXIT_VERIFICATION_FAILED

    config.update(x_max=x_max, points=points)
    grid = density.invert_density(density.default_abscissae(x_max, points), contour, options.quadrature)
    diagnostic = density.conjecture_diagnostic(grid)
    rows = [
        {'x': x, 'f': f, 'error': err, 'method': method, 'tail_diag': diag,
         'density_conjectural': analytic.conjectured_density(x)}
        for x, f, err, method, diag in zip(grid.xs, grid.fs, grid.errors, grid.methods, grid.tail_diag)
    ]
    mean = analytic.exact_moment(1).value
    summary = {
        'normalization': grid.normalization,
        'mean_check': grid.mean_check,
        'mean_reference': mean,
        'second_moment': grid.second_moment,
        'second_moment_reference': analytic.exact_moment(2).value,
        'tail_mass_conjectural': grid.conjectural_tail_mass,
        'ringing': grid.ringing,
        'diagnostic': diagnostic.to_row(),
    }
    write_table(out, 'density', config,
                ['x', 'f', 'error', 'method', 'tail_diag', 'density_conjectural'], rows, summary)
    if abs(grid.normalization - 1.0) > tolerance or abs(grid.mean_check - mean) > tolerance:
        logger.error('normalization %.6g / mean %.6g outside tolerance', grid.normalization, grid.mean_check)
        return EXIT_VERIFICATION_FAILED
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _common_options():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, default=0, help='Master seed (unsigned 64-bit)')
    common.add_argument('--threads', type=int, default=_default_threads(),
                        help='Worker threads; results do not depend on it (default: ${} or 1)'.format(THREADS_ENV))
    common.add_argument('--format', choices=FORMATS, default='csv', help='Output format')
    common.add_argument('--out', default='-', help="Output path, '-' for stdout")
    common.add_argument('--precision', type=int, default=12, help='Significant digits for floats')
    common.add_argument('--rel-tol', type=float, default=QuadratureConfig.rel_tol, help='Quadrature relative tolerance')
    common.add_argument('--abs-tol', type=float, default=QuadratureConfig.abs_tol, help='Quadrature absolute tolerance')
    common.add_argument('--log-file', default=None, help='Also log to this rotating file')
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_const', const='debug', dest='verbosity')
    verbosity.add_argument('-q', '--quiet', action='store_const', const='quiet', dest='verbosity')
    return common


def build_parser():
    common = _common_options()
    parser = argparse.ArgumentParser(
        prog='supremum-area',
        description='Verification toolkit for the area under the supremum of Brownian motion',
    )
    sub = parser.add_subparsers(dest='command', metavar='command')
    sub.required = True

    p = sub.add_parser('moments', parents=[common], help='Exact moments and their asymptote')
    p.add_argument('--max-n', type=int, default=4)

    p = sub.add_parser('psi', parents=[common], help='Laplace transform psi(s) on a grid')
    p.add_argument('--s-min', type=float, default=0.0)
    p.add_argument('--s-max', type=float, default=8.0)
    p.add_argument('--step', type=float, default=0.1)
    p.add_argument('--method', choices=PSI_METHODS, default='both')

    p = sub.add_parser('verify-theorem1', parents=[common], help='Double Laplace identity on a grid')
    p.add_argument('--alphas', type=_float_list, default=[0.5, 1.0, 2.0])
    p.add_argument('--lambdas', type=_float_list, default=[0.5, 1.0, 2.0])
    p.add_argument('--beta', type=float, default=None, help='Also check invariance under this scaling')

    p = sub.add_parser('mc', parents=[common], help='Monte Carlo engines')
    p.add_argument('--engine', choices=ENGINES, default='paths')
    p.add_argument('--replications', type=int, default=10000)
    p.add_argument('--steps', type=int, default=1000)
    p.add_argument('--horizon', type=float, default=1.0)
    p.add_argument('--scheme', choices=('left_rectangle', 'trapezoid', 'bridge'), default='left_rectangle')
    p.add_argument('--max-order', type=int, default=2)
    p.add_argument('--alpha', type=float, default=1.0)
    p.add_argument('--lambda', dest='lam', type=float, default=1.0)
    p.add_argument('--eps', type=float, default=1e-4)
    p.add_argument('--no-compensate', action='store_true')
    p.add_argument('--zeta', type=float, default=1.0)
    p.add_argument('--horizons', type=_float_list, default=[0.25, 1.0, 4.0])
    p.add_argument('--xs', type=_float_list, default=[0.8, 1.0, 1.2])

    p = sub.add_parser('density', parents=[common], help='Density by transform inversion')
    p.add_argument('--x-max', type=float, default=4.0)
    p.add_argument('--points', type=int, default=400)
    p.add_argument('--method', choices=('fixed_deformed_contour', 'bromwich_series_acceleration',
                                        'mellin_barnes', 'auto'), default='auto')
    p.add_argument('--nodes', type=int, default=32)
    p.add_argument('--shape', type=float, default=1.0)
    p.add_argument('--self-test', action='store_true')
    return parser


def _dispatch(args, out, options):
    if args.command == 'moments':
        return cmd_moments(args.max_n, out, options)
    if args.command == 'psi':
        return cmd_psi(args.s_min, args.s_max, args.step, args.method, out, options)
    if args.command == 'verify-theorem1':
        return cmd_verify_theorem1(args.alphas, args.lambdas, out, options, args.beta)
    if args.command == 'mc':
        return cmd_mc(
            args.engine, out, options,
            replications=args.replications, steps=args.steps, horizon=args.horizon,
            scheme=args.scheme, max_order=args.max_order, alpha=args.alpha, lam=args.lam,
            eps=args.eps, compensate=not args.no_compensate, zeta=args.zeta,
            horizons=args.horizons, xs=args.xs,
        )
    from supremum_area.density import ContourConfig
    contour = ContourConfig(args.nodes, args.shape, args.method)
    return cmd_density(args.x_max, args.points, contour, out, options, args.self_test)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    from supremum_area.density import InsufficientHitsError
    from supremum_area.logs import setup_logging
    from supremum_area.simulate import SimulationBudgetError

    setup_logging(args.verbosity or 'info', args.log_file)
    try:
        out = OutputSpec(args.format, args.out, args.precision)
        options = GlobalOptions(
            seed=args.seed,
            threads=args.threads,
            quadrature=QuadratureConfig(rel_tol=args.rel_tol, abs_tol=args.abs_tol),
            verbosity=args.verbosity or 'info',
        )
        return _dispatch(args, out, options)
    except DomainError as e:
        logger.error('Invalid argument: %s', e)
        return EXIT_USAGE
    except (SimulationBudgetError, SamplerBudgetError, InsufficientHitsError) as e:
        logger.error('%s', e)
        return EXIT_BUDGET
    except NumericsError as e:
        logger.error('Numerical failure: %s', e)
        return EXIT_NUMERICAL
    except OSError as e:
        logger.error('Could not write output: %s', e)
        return EXIT_USAGE
