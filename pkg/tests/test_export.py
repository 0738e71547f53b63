import csv

import numpy as np
import pytest
import scipy.sparse as sp

from semigroup_lab.core.grid import Grid, GridFunction
from semigroup_lab.core.results import CheckResult, PropertyReport
from semigroup_lab.utils.export import (
    REPORT_COLUMNS,
    atomic_write,
    fmt,
    grid_function_csv,
    matrix_triplets,
    read_grid_function,
    read_matrix,
    snapshot_text,
    summary_text,
    write_grid_function,
    write_report,
)


@pytest.fixture
def sample_report(trig_report):
    report = PropertyReport('generation', 'trig-2d', 42, hypotheses=trig_report)
    report.add(CheckResult.compare('accretivity', 0.25, 0.0, 1e-10, lower=True))
    report.add(CheckResult.compare('accretivity-necessity', -3.0, 0.0, 1e-10, lower=True, expected_failure=True))
    report.add(CheckResult.compare('l2-quasicontractivity', 1.5, 1.0, 1e-8, note='t in (0.1,)'))
    return report


def test_fmt_is_exact():
    for value in (0.1, 1.0 / 3.0, 1e-300, -2.5e17):
        assert float(fmt(value)) == value
    assert fmt(1.0) == '1'


def test_atomic_write_leaves_only_the_target(tmp_path):
    target = tmp_path / 'nested' / 'file.txt'
    atomic_write(target, 'hello\n')
    assert target.read_text() == 'hello\n'
    assert [p.name for p in target.parent.iterdir()] == ['file.txt']


def test_atomic_write_failure_keeps_nothing(tmp_path):
    target = tmp_path / 'file.txt'
    with pytest.raises(TypeError):
        atomic_write(target, b'bytes are not text')
    assert list(tmp_path.iterdir()) == []


def test_grid_function_csv_layout():
    grid = Grid.from_box([(0.0, 1.0), (0.0, 1.0)], 3)
    f = GridFunction.from_callable(grid, lambda p: np.stack([p[:, 0], p[:, 0] * p[:, 1]], axis=1))
    lines = grid_function_csv(f).splitlines()
    assert lines[0] == 'x1,x2,f1,f2'
    assert len(lines) == 1 + 9
    assert lines[1] == '0.25,0.25,0.25,0.0625'


def test_grid_function_file(tmp_path, grid_1d):
    f = GridFunction.from_callable(grid_1d, lambda p: np.hstack([np.sin(p) / 3.0, np.cos(p)]))
    path = write_grid_function(tmp_path / 'f.csv', f)
    back = read_grid_function(path, grid_1d)
    assert np.array_equal(back.values, f.values)
    with pytest.raises(ValueError):
        read_grid_function(path, grid_1d.with_n(32))


def test_snapshot_manifest(grid_1d):
    f = GridFunction.zeros(grid_1d, 1)
    first, second = snapshot_text(f, 0.5, 'crank-nicolson', 0.01).splitlines()[:2]
    assert first == '# t=0.5, scheme=crank-nicolson, dt=0.01'
    assert second == 'x1,f1'


def test_matrix_triplets(tmp_path):
    matrix = sp.csr_matrix(np.array([[0.0, 1.0 / 3.0], [-2.0, 0.0]]))
    text = matrix_triplets(matrix)
    assert text.splitlines()[0] == '2 2'
    assert text.splitlines()[2] == '1 0 -2'
    path = atomic_write(tmp_path / 'operator.triplets', text)
    assert (read_matrix(path) != matrix).nnz == 0


def test_empty_matrix_triplets(tmp_path):
    path = atomic_write(tmp_path / 'zero.triplets', matrix_triplets(sp.csr_matrix((3, 3))))
    assert path.read_text() == '3 0\n'
    assert read_matrix(path).shape == (3, 3)


def test_report_files(tmp_path, sample_report):
    write_report(tmp_path, sample_report, usage='0.1 s wall')
    with open(tmp_path / 'report.csv', newline='') as handle:
        rows = list(csv.reader(handle))
    assert tuple(rows[0]) == REPORT_COLUMNS
    assert [row[4] for row in rows[1:]] == ['pass', 'expected-fail', 'fail']
    hypotheses = (tmp_path / 'hypotheses.csv').read_text().splitlines()
    assert hypotheses[0] == 'quantity,value'
    assert hypotheses[1].startswith('eta1,')
    assert 'flag:H1,true' in hypotheses
    summary = (tmp_path / 'summary.txt').read_text()
    assert summary.startswith('scenario generation, preset trig-2d, seed 42')
    assert '2 of 3 checks as expected' in summary
    assert 'resources: 0.1 s wall' in summary


def test_summary_marks_relations(sample_report):
    text = summary_text(sample_report)
    assert 'accretivity: 0.25 >= 0' in text
    assert 'l2-quasicontractivity: 1.5 <= 1' in text


def test_report_writes_artefacts_alongside(tmp_path, sample_report):
    write_report(tmp_path, sample_report, artefacts={'snapshots/final.csv': '# t=1\n', 'operator.triplets': '1 0\n'})
    assert (tmp_path / 'snapshots' / 'final.csv').read_text() == '# t=1\n'
    assert (tmp_path / 'operator.triplets').read_text() == '1 0\n'
    assert (tmp_path / 'report.csv').exists()
