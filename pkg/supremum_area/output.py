"""CSV and JSON writers for command results.

Both formats start with the configuration echo: CSV as a `#` comment line
before the column header, JSON as the "config" member of the envelope.
"""

import csv
import io
import json
import math
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__
from .numerics import DomainError

FORMATS = ('csv', 'json')
TOOL_NAME = 'supremum-area'


@dataclass(frozen=True)
class OutputSpec:
    format: str = 'csv'
    destination: str = '-'
    precision: int = 12

    def __post_init__(self):
        if self.format not in FORMATS:
            raise DomainError('format', self.format, 'one of {}'.format(FORMATS))
        if int(self.precision) != self.precision or not 6 <= self.precision <= 17:
            raise DomainError('precision', self.precision, '6 <= precision <= 17')


def _plain(value, precision):
    """JSON-ready value: floats rounded to precision significant digits, non-finite to None."""
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            return None
        return float(format(value, '.{}g'.format(precision)))
    if isinstance(value, dict):
        return {k: _plain(v, precision) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_plain(v, precision) for v in value]
    return value


def _cell(value, precision):
    if value is None:
        return ''
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return 'nan'
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return format(value, '.{}g'.format(precision))
    return str(value)


def render(target, command, config, columns, rows, summary=None):
    """The full document for one command as a string."""
    config = dict(config, command=command)
    if target.format == 'json':
        document = {
            'tool': TOOL_NAME,
            'version': __version__,
            'config': _plain(config, target.precision),
            'rows': [{c: _plain(row.get(c), target.precision) for c in columns} for row in rows],
        }
        if summary is not None:
            document['summary'] = _plain(summary, target.precision)
        return json.dumps(document, indent=2, sort_keys=False) + '\n'

    buf = io.StringIO()
    buf.write('# {} {} {}\n'.format(TOOL_NAME, __version__, json.dumps(_plain(config, target.precision), sort_keys=True)))
    writer = csv.writer(buf, lineterminator='\n')
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(c), target.precision) for c in columns])
    if summary is not None:
        buf.write('# summary {}\n'.format(json.dumps(_plain(summary, target.precision), sort_keys=True)))
    return buf.getvalue()


def write_table(target, command, config, columns, rows, summary=None):
    """Write one command's result to target.destination ('-' is stdout)."""
    text = render(target, command, config, columns, rows, summary)
    if target.destination == '-':
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        with open(target.destination, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
