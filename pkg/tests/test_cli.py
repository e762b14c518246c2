import csv
import io
import json
import math
import sys

import pytest

from supremum_area import __version__
from supremum_area.cli import (
    EXIT_BUDGET,
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_USAGE,
    EXIT_VERIFICATION_FAILED,
    THREADS_ENV,
    _default_threads,
    main,
)
from supremum_area.logs import setup_logging
from supremum_area.numerics import DomainError
from supremum_area.output import OutputSpec, render


def _csv(text):
    """(config echo, rows, summary) from a CSV document."""
    lines = text.splitlines()
    assert lines[0].startswith('# supremum-area {} '.format(__version__))
    config = json.loads(lines[0].split(' ', 3)[3])
    summary = None
    body = []
    for line in lines[1:]:
        if line.startswith('# summary '):
            summary = json.loads(line[len('# summary '):])
        else:
            body.append(line)
    return config, list(csv.DictReader(io.StringIO('\n'.join(body)))), summary


def _run(capsys, argv):
    code = main(argv)
    return code, capsys.readouterr()


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------

def test_moments_table(capsys):
    code, captured = _run(capsys, ['moments', '--max-n', '4', '--precision', '17'])
    assert code == EXIT_OK
    config, rows, _ = _csv(captured.out)
    assert config['command'] == 'moments' and config['max_n'] == 4
    expected = [1.0, 4.0 / (3.0 * math.sqrt(2.0 * math.pi)), 5.0 / 12.0,
                64.0 / (63.0 * math.sqrt(2.0 * math.pi)), 11.0 / 24.0]
    assert [int(r['n']) for r in rows] == [0, 1, 2, 3, 4]
    for row, value in zip(rows, expected):
        assert float(row['value']) == pytest.approx(value, rel=1e-12)


def test_moments_single_row(capsys):
    code, captured = _run(capsys, ['moments', '--max-n', '0'])
    assert code == EXIT_OK
    assert captured.out.splitlines()[1:] == ['n,value,log_value,asymptote,ratio', '0,1,0,,']


def test_moments_far_out_ratio(capsys):
    code, captured = _run(capsys, ['moments', '--max-n', '200', '--format', 'json'])
    assert code == EXIT_OK
    document = json.loads(captured.out)
    assert document['tool'] == 'supremum-area'
    last = document['rows'][-1]
    assert last['n'] == 200
    assert abs(last['ratio'] - 1.0) < 0.02


def test_moments_negative_order(capsys):
    code, _ = _run(capsys, ['moments', '--max-n', '-1'])
    assert code == EXIT_USAGE


def test_output_is_deterministic(capsys):
    _, first = _run(capsys, ['moments', '--max-n', '10'])
    _, second = _run(capsys, ['moments', '--max-n', '10'])
    assert first.out == second.out


# ---------------------------------------------------------------------------
# psi and the double Laplace identity
# ---------------------------------------------------------------------------

def test_psi_both_forms_agree(capsys):
    code, captured = _run(capsys, ['psi', '--s-min', '0', '--s-max', '8', '--step', '0.1', '--method', 'both'])
    assert code == EXIT_OK
    _, rows, summary = _csv(captured.out)
    assert len(rows) == 81
    assert float(rows[0]['psi']) == 1.0
    assert summary['max_abs_diff'] <= 1e-10
    values = [float(r['psi']) for r in rows]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_psi_series_out_of_range_is_numerical_failure(capsys):
    code, captured = _run(capsys, ['psi', '--s-min', '0', '--s-max', '40', '--step', '10', '--method', 'series'])
    assert code == EXIT_NUMERICAL
    assert '[ERROR]' in captured.err


def test_psi_bad_range(capsys):
    code, _ = _run(capsys, ['psi', '--s-min', '2', '--s-max', '1'])
    assert code == EXIT_USAGE

def test_psi_auto_covers_large_arguments(capsys):
    code, captured = _run(capsys, ['psi', '--s-min', '0', '--s-max', '40', '--step', '10', '--method', 'auto'])
    assert code == EXIT_OK
    _, rows, summary = _csv(captured.out)
    assert summary is None
    values = [float(r['psi']) for r in rows]
    assert values[0] == 1.0
    assert all(a > b > 0.0 for a, b in zip(values, values[1:]))


def test_verify_identity_small_scale_factor(capsys):
    code, captured = _run(capsys, ['verify-theorem1', '--alphas', '0.5,2', '--lambdas', '1', '--beta', '0.5',
                                   '--format', 'json'])
    assert code == EXIT_OK
    rows = json.loads(captured.out)['rows']
    assert len(rows) == 2
    assert all(row['pass'] and row['beta_pass'] for row in rows)


def test_verify_identity_with_scaling(capsys):
    code, captured = _run(capsys, ['verify-theorem1', '--alphas', '1', '--lambdas', '1', '--beta', '2',
                                   '--format', 'json'])
    assert code == EXIT_OK
    (row,) = json.loads(captured.out)['rows']
    assert row['pass'] and row['beta_pass']
    assert row['abs_diff'] <= row['combined_bound']
    assert '[INFO]' in captured.err


def test_verify_identity_empty_grid(capsys):
    code, _ = _run(capsys, ['verify-theorem1', '--alphas', '', '--lambdas', '1'])
    assert code == EXIT_USAGE


# ---------------------------------------------------------------------------
# mc
# ---------------------------------------------------------------------------

def test_mc_rows_do_not_depend_on_threads(tmp_path):
    outputs = []
    for threads in ('1', '2'):
        path = tmp_path / 'paths_{}.csv'.format(threads)
        code = main(['mc', '--engine', 'paths', '--replications', '5000', '--steps', '100',
                     '--threads', threads, '--seed', '17', '--out', str(path), '-q'])
        assert code in (EXIT_OK, EXIT_VERIFICATION_FAILED)
        outputs.append((code, path.read_text().splitlines()))
    assert outputs[0][0] == outputs[1][0]
    assert outputs[0][1][1:] == outputs[1][1][1:]


def test_mc_same_seed_same_bytes(tmp_path):
    texts = []
    for name in ('a.json', 'b.json'):
        path = tmp_path / name
        main(['mc', '--engine', 'excursion', '--replications', '3000', '--eps', '1e-2',
              '--format', 'json', '--out', str(path), '-q'])
        texts.append(path.read_bytes())
    assert texts[0] == texts[1]
    rows = json.loads(texts[0])['rows']
    assert rows[0]['label'] == 'marked_time_lt'


def test_mc_tail_without_hits_is_budget_exit(capsys):
    code, captured = _run(capsys, ['mc', '--engine', 'tail', '--xs', '3', '--replications', '2000',
                                   '--steps', '32', '--scheme', 'bridge'])
    assert code == EXIT_BUDGET
    _, rows, _ = _csv(captured.out)
    assert rows[0]['status'] == 'insufficient_hits'


def test_mc_unknown_engine(capsys):
    code, _ = _run(capsys, ['mc', '--engine', 'quantum'])
    assert code == EXIT_USAGE


# ---------------------------------------------------------------------------
# density
# ---------------------------------------------------------------------------

def test_density_self_test(capsys):
    code, captured = _run(capsys, ['density', '--self-test'])
    assert code == EXIT_OK
    _, rows, summary = _csv(captured.out)
    assert len(rows) == 50
    assert summary['passed'] is True
    assert summary['max_error'] <= 1e-6


def test_density_rejects_small_contour(capsys):
    code, _ = _run(capsys, ['density', '--self-test', '--nodes', '4'])
    assert code == EXIT_USAGE

def test_density_small_grid_falls_back_to_mellin_barnes(capsys):
    code, captured = _run(capsys, ['density', '--x-max', '2', '--points', '20', '--format', 'json'])
    assert code in (EXIT_OK, EXIT_VERIFICATION_FAILED)
    document = json.loads(captured.out)
    assert len(document['rows']) == 20
    assert {row['method'] for row in document['rows']} == {'mellin_barnes'}
    assert all(row['f'] > 0.0 for row in document['rows'])


@pytest.mark.slow
def test_density_with_defaults(capsys):
    code, captured = _run(capsys, ['density', '--format', 'json'])
    assert code == EXIT_OK
    document = json.loads(captured.out)
    assert len(document['rows']) == 400
    assert document['summary']['normalization'] == pytest.approx(1.0, abs=1e-3)


# ---------------------------------------------------------------------------
# Plumbing
# ---------------------------------------------------------------------------

def test_help_and_unknown_command(capsys):
    assert main(['--help']) == EXIT_OK
    assert main(['frobnicate']) == EXIT_USAGE


def test_precision_out_of_range(capsys):
    code, _ = _run(capsys, ['moments', '--precision', '3'])
    assert code == EXIT_USAGE


def test_unwritable_destination(tmp_path, capsys):
    code, _ = _run(capsys, ['moments', '--out', str(tmp_path / 'missing' / 'x.csv')])
    assert code == EXIT_USAGE


def test_threads_default_from_environment(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, '3')
    assert _default_threads() == 3
    monkeypatch.setenv(THREADS_ENV, 'many')
    assert _default_threads() == 1
    monkeypatch.setenv(THREADS_ENV, '0')
    assert _default_threads() == 1
    monkeypatch.delenv(THREADS_ENV)
    assert _default_threads() == 1


def test_render_non_finite_values():
    text = render(OutputSpec('json'), 'x', {'a': 1.0}, ['v', 'w'], [{'v': float('nan'), 'w': float('inf')}])
    document = json.loads(text)
    assert document['rows'] == [{'v': None, 'w': None}]
    assert document['config']['command'] == 'x'
    csv_text = render(OutputSpec(), 'x', {}, ['v', 'w', 'z'], [{'v': float('nan'), 'w': float('-inf'), 'z': True}])
    assert csv_text.splitlines()[-1] == 'nan,-inf,true'


def test_output_spec_validation():
    with pytest.raises(DomainError):
        OutputSpec(format='xml')
    with pytest.raises(DomainError):
        OutputSpec(precision=18)

def test_logging_follows_replaced_stderr(monkeypatch):
    first = io.StringIO()
    monkeypatch.setattr(sys, 'stderr', first)
    log = setup_logging('info')
    log.info('first message')
    first.close()
    second = io.StringIO()
    monkeypatch.setattr(sys, 'stderr', second)
    assert setup_logging('quiet') is log
    log.warning('second message')
    log.info('hidden')
    assert second.getvalue() == '[WARNING] second message\n'
    assert len([h for h in log.handlers if h.get_name() == 'console']) == 1
    setup_logging('info')
