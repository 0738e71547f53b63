"""
Text artefacts: grid-function CSV, snapshot manifests, matrix triplets and
the scenario report files.

Every writer goes through atomic_write, which writes a temporary file next to
the target and renames it into place, so a file is either complete or absent.
Floats are printed with '.17g' so that reading them back is exact.
"""

import csv
import io
import logging
import os
import tempfile
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from ..core.grid import Grid, GridFunction
from ..core.results import CheckResult, PropertyReport

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

REPORT_COLUMNS = ('check', 'measured', 'bound', 'tolerance', 'verdict', 'note')


def fmt(value: float) -> str:
    return format(float(value), '.17g')


def atomic_write(path: PathLike, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f'.{path.name}.', suffix='.tmp')
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    logger.info('wrote %s', path)
    return path


def _csv_text(header: Sequence[str], rows: Iterable[Sequence[str]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def grid_function_csv(f: GridFunction) -> str:
    """Columns x1[,x2],f1..fm, one row per node in lexicographic order."""
    header = [f'x{k + 1}' for k in range(f.grid.d)] + [f'f{j + 1}' for j in range(f.m)]
    rows = ([fmt(v) for v in point] + [fmt(v) for v in values]
            for point, values in zip(f.grid.points(), f.values))
    return _csv_text(header, rows)


def write_grid_function(path: PathLike, f: GridFunction) -> Path:
    return atomic_write(path, grid_function_csv(f))


def read_grid_function(path: PathLike, grid: Grid) -> GridFunction:
    """
    Read a grid-function CSV back onto grid.

    Raises:
        ValueError: the node coordinates do not match the grid
    """
    data = np.loadtxt(path, delimiter=',', skiprows=1, ndmin=2)
    points, values = data[:, :grid.d], data[:, grid.d:]
    if points.shape != (grid.n_nodes, grid.d) or not np.allclose(points, grid.points(), rtol=0, atol=1e-12):
        raise ValueError(f'{path}: node coordinates do not match the grid')
    return GridFunction(grid, values)


def snapshot_text(f: GridFunction, t: float, scheme: str, dt: float) -> str:
    """Grid-function CSV preceded by a '# t=..., scheme=..., dt=...' manifest line."""
    return f'# t={fmt(t)}, scheme={scheme}, dt={fmt(dt)}\n' + grid_function_csv(f)


def matrix_triplets(matrix: sp.spmatrix) -> str:
    """'N nnz' header line, then one 'row col value' line per stored entry in row-major order."""
    coo = sp.csr_matrix(matrix)
    coo.sort_indices()
    coo = coo.tocoo()
    lines = [f'{coo.shape[0]} {coo.nnz}']
    lines.extend(f'{r} {c} {fmt(v)}' for r, c, v in zip(coo.row, coo.col, coo.data))
    return '\n'.join(lines) + '\n'


def read_matrix(path: PathLike) -> sp.csr_matrix:
    with open(path, encoding='utf-8') as handle:
        n, nnz = (int(v) for v in handle.readline().split())
        data = np.loadtxt(handle, ndmin=2) if nnz else np.zeros((0, 3))
    return sp.csr_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(n, n))


def report_csv(report: PropertyReport) -> str:
    rows = ([check.name, fmt(check.measured), fmt(check.bound), fmt(check.tolerance), check.verdict, check.note]
            for check in report.checks)
    return _csv_text(REPORT_COLUMNS, rows)


def hypotheses_csv(report: PropertyReport) -> str:
    rows = []
    if report.hypotheses is not None:
        rows.extend([name, fmt(value)] for name, value in report.hypotheses.rows())
        rows.extend([f'flag:{name}', str(bool(flag)).lower()] for name, flag in report.hypotheses.flags.items())
    return _csv_text(('quantity', 'value'), rows)


def _summary_line(check: CheckResult) -> str:
    relation = '>=' if check.lower else '<='
    line = (f'  [{check.verdict:>15}] {check.name}: {check.measured:.6g} {relation} '
            f'{check.bound:.6g} (tol {check.tolerance:.1e})')
    return line + (f'  {check.note}' if check.note else '')


def summary_text(report: PropertyReport, usage: str = '') -> str:
    lines = [f'scenario {report.scenario}, preset {report.preset}, seed {report.seed}']
    for key, value in report.metadata.items():
        lines.append(f'  {key}: {value}')
    if report.hypotheses is not None:
        lines.append('hypotheses:')
        lines.extend(f'  {name} = {value:.6g}' for name, value in report.hypotheses.rows())
        for note in report.hypotheses.notes:
            lines.append(f'  note: {note}')
    lines.append('checks:')
    lines.extend(_summary_line(check) for check in report.checks)
    failures = report.failures
    lines.append(f'{len(report.checks) - len(failures)} of {len(report.checks)} checks as expected')
    if usage:
        lines.append(f'resources: {usage}')
    return '\n'.join(lines) + '\n'


def write_report(out: PathLike, report: PropertyReport, usage: str = '',
                 artefacts: Optional[Mapping[str, str]] = None) -> None:
    """
    hypotheses.csv, report.csv and summary.txt in out, after any extra
    artefacts given as relative path -> text.
    """
    out = Path(out)
    for relative, text in (artefacts or {}).items():
        atomic_write(out / relative, text)
    atomic_write(out / 'hypotheses.csv', hypotheses_csv(report))
    atomic_write(out / 'report.csv', report_csv(report))
    atomic_write(out / 'summary.txt', summary_text(report, usage))
