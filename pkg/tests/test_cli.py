"""
Tests for the command-line experiment runner.
"""

import json

import numpy as np
import pytest

from spin_mor.cli import EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_OK, RUNNERS, derive_seed, main


def read(path):
    return json.loads(path.read_text())


@pytest.mark.integration
class TestCli:
    """Test subcommands end to end."""

    def test_rip_writes_artifacts(self, tmp_path, capsys):
        out = tmp_path / 'rip'
        code = main(['rip', '--out', str(out), '--sparsity', '[1, 2]', '--n-matrices', '3'])
        assert code == EXIT_OK
        assert sorted(p.name for p in out.iterdir()) == ['manifest.json', 'rip.csv', 'rip.json']
        assert 'S=1: pass fraction 100.0%' in capsys.readouterr().out

        manifest = read(out / 'manifest.json')
        assert manifest['command'] == 'rip'
        assert manifest['seed'] == 0
        assert manifest['parameters']['sparsity'] == [1, 2]
        assert manifest['outputs'] == ['rip.csv', 'rip.json']

    def test_rerun_from_manifest_is_identical(self, tmp_path):
        first, second = tmp_path / 'a', tmp_path / 'b'
        args = ['--sparsity', '2', '--n-matrices', '3', '--seed', '5']
        assert main(['rip', '--out', str(first), *args]) == EXIT_OK
        assert main(['rip', '--out', str(second), '--config', str(first / 'manifest.json')]) == EXIT_OK
        for name in ('rip.csv', 'rip.json', 'manifest.json'):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_unknown_config_key_writes_nothing(self, tmp_path, capsys):
        config = tmp_path / 'config.json'
        config.write_text(json.dumps({'sparsity': 2, 'colour': 'blue'}))
        out = tmp_path / 'out'
        assert main(['rip', '--config', str(config), '--out', str(out)]) == EXIT_CONFIG
        assert not out.exists()
        assert 'colour' in capsys.readouterr().err

    @pytest.mark.parametrize("document", ['{broken', '[1, 2]', '{"sparsity": "two"}'])
    def test_invalid_config_documents(self, tmp_path, document):
        config = tmp_path / 'config.json'
        config.write_text(document)
        assert main(['rip', '--config', str(config), '--out', str(tmp_path / 'out')]) == EXIT_CONFIG

    def test_manifest_for_other_command(self, tmp_path):
        out = tmp_path / 'cal'
        assert main(['calibrate', '--out', str(out)]) == EXIT_OK
        assert main(['rip', '--config', str(out / 'manifest.json'), '--out', str(tmp_path / 'x')]) == EXIT_CONFIG

    def test_nonpositive_workers(self, tmp_path):
        assert main(['rip', '--workers', '0', '--out', str(tmp_path / 'out')]) == EXIT_CONFIG

    def test_slater_curvature_matches_closed_form(self, tmp_path, capsys):
        out = tmp_path / 'curv'
        assert main(['curvature', '--kind', 'slater', '--n', '2', '--norb', '4', '--out', str(out)]) == EXIT_OK
        document = read(out / 'curvature.json')
        assert document['formula'] == '-8/kappa'
        assert document['scalar'] == pytest.approx(document['analytic'], rel=1e-8)
        assert 'analytic -8/kappa' in capsys.readouterr().out

    def test_calibrate_bloch(self, tmp_path):
        out = tmp_path / 'cal'
        assert main(['calibrate', '--mode', 'bloch', '--out', str(out)]) == EXIT_OK
        document = read(out / 'calibration.json')
        assert document['click_rate'] > 0

    def test_unknown_mode_is_config_error(self, tmp_path):
        assert main(['calibrate', '--mode', 'psychic', '--out', str(tmp_path / 'out')]) == EXIT_CONFIG

    def test_nonconvergence_exits_three_after_writing(self, tmp_path):
        out = tmp_path / 'proj'
        args = ['project', '--order', '2', '--rank', '1', '--n-targets', '1', '--max-iter', '0']
        assert main([*args, '--out', str(out)]) == EXIT_CONVERGENCE
        assert (out / 'project.csv').exists()
        assert (out / 'manifest.json').exists()

    def test_cs_sweep_nonconvergence(self, tmp_path):
        out = tmp_path / 'cs'
        args = [
            'cs-sweep', '--n-spin', '3', '--target', 'random', '--max-iter', '0',
            '--n-seeds', '1', '--n-values', '[3, 6]', '--out', str(out),
        ]
        assert main(args) == EXIT_CONVERGENCE
        assert 'converged' in (out / 'cs_sweep.csv').read_text().splitlines()[0]

    def test_linear_algebra_failure_is_numerical(self, tmp_path, monkeypatch):
        def failing(params, workers):
            raise np.linalg.LinAlgError("SVD did not converge")

        monkeypatch.setitem(RUNNERS, 'rip', failing)
        out = tmp_path / 'out'
        assert main(['rip', '--out', str(out)]) == EXIT_CONVERGENCE
        assert not out.exists()

    def test_derive_seed(self):
        assert derive_seed(0, 'rip', 2) == derive_seed(0, 'rip', 2)
        assert derive_seed(0, 'rip', 2) != derive_seed(1, 'rip', 2)
        assert derive_seed(0, 'rip') != derive_seed(0, 'gaussian')
