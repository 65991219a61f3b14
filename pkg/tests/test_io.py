"""
Tests for artifact I/O and validation helpers.
"""

import json

import numpy as np
import pytest

from spin_mor import __version__
from spin_mor.core.gk_manifold import random_gk_state
from spin_mor.utils.io import (
    format_value,
    read_csv,
    read_gk_record,
    read_json,
    run_manifest,
    to_jsonable,
    write_csv,
    write_gk_record,
    write_json,
)
from spin_mor.utils.validation import (
    check_unit_vector,
    hermitize,
    is_hermitian,
    trace_distance,
    unitarity_defect,
)


class TestCsv:
    """Test CSV tables."""

    def test_format_value(self):
        assert format_value(0.1) == '0.10000000000000001'
        assert format_value(np.float32(0.5)) == '0.5'
        assert format_value(np.int64(7)) == '7'
        assert format_value(True) == 'true'
        assert format_value(np.bool_(False)) == 'false'
        assert format_value(None) == ''
        assert format_value(1 - 2j) == '1-2j'
        assert format_value('synoptic') == 'synoptic'

    def test_write_and_read(self, tmp_path):
        rows = [{'n': 1, 'fidelity': 0.5}, {'n': 2, 'fidelity': 0.75}]
        path = write_csv(tmp_path / 'out' / 'table.csv', rows)
        assert path.read_text() == 'n,fidelity\n1,0.5\n2,0.75\n'
        assert read_csv(path) == [{'n': '1', 'fidelity': '0.5'}, {'n': '2', 'fidelity': '0.75'}]

    def test_missing_columns_are_blank(self, tmp_path):
        path = write_csv(tmp_path / 't.csv', [{'a': 1}], fieldnames=['a', 'b'])
        assert path.read_text() == 'a,b\n1,\n'

    def test_rejects_unknown_keys(self, tmp_path):
        with pytest.raises(ValueError, match="outside"):
            write_csv(tmp_path / 't.csv', [{'a': 1, 'c': 2}], fieldnames=['a'])

    def test_rejects_empty_table_without_fieldnames(self, tmp_path):
        with pytest.raises(ValueError, match="empty table"):
            write_csv(tmp_path / 't.csv', [])
        assert write_csv(tmp_path / 'e.csv', [], fieldnames=['x']).read_text() == 'x\n'


class TestJson:
    """Test JSON documents and manifests."""

    def test_to_jsonable(self):
        data = {'a': np.arange(3), 'z': np.complex128(1 + 2j), 'nan': np.nan, 1: (np.float64(0.25),)}
        assert to_jsonable(data) == {'a': [0, 1, 2], 'z': [1.0, 2.0], 'nan': None, '1': [0.25]}

    def test_round_trip_with_sorted_keys(self, tmp_path):
        path = write_json(tmp_path / 'doc.json', {'b': 1, 'a': [1.5, 2]})
        text = path.read_text()
        assert text.index('"a"') < text.index('"b"')
        assert text.endswith('\n')
        assert read_json(path) == {'a': [1.5, 2], 'b': 1}

    def test_read_errors(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_json(tmp_path / 'missing.json')
        bad = tmp_path / 'bad.json'
        bad.write_text('{not json')
        with pytest.raises(ValueError, match="Invalid JSON"):
            read_json(bad)

    def test_run_manifest(self):
        manifest = run_manifest('rip', 3, {'sparsity': np.int64(2)}, outputs=['b.csv', 'a.json'])
        assert manifest['command'] == 'rip'
        assert manifest['seed'] == 3
        assert manifest['parameters'] == {'sparsity': 2}
        assert manifest['outputs'] == ['a.json', 'b.csv']
        assert manifest['versions']['spin_mor'] == __version__
        json.dumps(manifest)


class TestGkRecords:
    """Test GK state records."""

    @pytest.mark.parametrize("antisymmetric", [False, True])
    def test_round_trip(self, tmp_path, antisymmetric):
        state = random_gk_state(3, 2, 3, seed=4, antisymmetric=antisymmetric)
        path = write_gk_record(tmp_path / 'gk.json', state)
        loaded = read_gk_record(path)
        assert loaded.antisymmetric == antisymmetric
        assert (loaded.order, loaded.rank) == (3, 2)
        np.testing.assert_array_equal(loaded.evaluate(), state.evaluate())

    def test_rejects_inconsistent_record(self, tmp_path):
        record = random_gk_state(2, 1, 2, seed=1).to_record()
        record['rank'] = 5
        path = write_json(tmp_path / 'gk.json', record)
        with pytest.raises(ValueError):
            read_gk_record(path)


class TestValidation:
    """Test numerical checks."""

    def test_is_hermitian(self):
        assert is_hermitian(np.array([[1, 1j], [-1j, 2]]))
        assert not is_hermitian(np.array([[1, 1j], [1j, 2]]))
        assert not is_hermitian(np.ones((2, 3)))

    def test_hermitize(self):
        m = np.array([[1, 2j], [0, 3]])
        assert is_hermitian(hermitize(m))
        np.testing.assert_allclose(hermitize(hermitize(m)), hermitize(m))

    def test_unitarity_defect(self):
        assert unitarity_defect(np.array([[0, 1], [1, 0]])) == 0.0
        assert unitarity_defect(2 * np.eye(2)) == pytest.approx(np.sqrt(18))

    def test_trace_distance(self):
        assert trace_distance(np.diag([1, 0]), np.diag([0, 1])) == pytest.approx(1.0)
        plus = np.full((2, 2), 0.5)
        assert trace_distance(plus, np.diag([1, 0])) == pytest.approx(np.sqrt(0.5))

    def test_check_unit_vector(self):
        np.testing.assert_array_equal(check_unit_vector([0, 0, 1]), [0.0, 0.0, 1.0])
        with pytest.raises(ValueError, match="3-vector"):
            check_unit_vector([1, 0])
        with pytest.raises(ValueError, match="axis must be a unit vector"):
            check_unit_vector([1, 1, 0], "axis")
        with pytest.raises(ValueError, match="finite"):
            check_unit_vector([np.nan, 0, 1])
