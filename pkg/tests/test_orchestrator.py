"""
Testes unitarios para orchestrator.py

Testa:
- Expansao de variaveis de ambiente e mescla com os defaults
- Validacao do esquema da configuracao
- Lock por diretorio e manifesto imutavel
- Persistencia CSV/Parquet
- Codigos de saida do main(), log em paths.logs_dir e instalacao da tabela calibrada
- Subcomandos purity e syndromes
"""

import copy
import json
import os
import sys
import time
from pathlib import Path

import pandas as pd
import pytest
import yaml

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.python import orchestrator
from src.python.orchestrator import (
    DEFAULT_CONFIG,
    EXIT_CALIBRATION,
    EXIT_CONFIG,
    EXIT_MISSING_PREREQUISITE,
    EXIT_OK,
    LOG_FILE_NAME,
    MANIFEST_NAME,
    ConfigError,
    RunLock,
    RunManifest,
    apply_overrides,
    expand_dict,
    expand_env_vars,
    load_config,
    load_results,
    main,
    merge_config,
    parse_args,
    validate_config,
    write_results,
)
from src.python.qrl import CALIBRATED_GATES, GateLabel, analytic_programs, read_angle_table

REPO_ROOT = Path(__file__).parent.parent
ANGLE_TABLE = REPO_ROOT / 'config' / 'angle_table.txt'


# ==============================================================================
# FIXTURES
# ==============================================================================

@pytest.fixture
def write_settings(tmp_path):
    """Grava um settings.yaml parcial (o resto vem dos defaults)."""
    def _write(overrides=None):
        settings = {
            'grid': {'n_points': 256},
            'paths': {
                'out_dir': str(tmp_path / 'output'),
                'logs_dir': str(tmp_path / 'logs'),
                'angle_table': str(ANGLE_TABLE),
            },
        }
        settings = merge_config(settings, overrides or {})
        path = tmp_path / 'settings.yaml'
        path.write_text(yaml.safe_dump(settings), encoding='utf-8')
        return path
    return _write


@pytest.fixture
def manifest():
    return RunManifest(
        command='rb',
        config={'seed': 0},
        code_version='0.1.0',
        seed=0,
        run_id='rb-20260101T000000-0',
        started_at='2026-01-01T00:00:00',
    )


# ==============================================================================
# TESTES - Configuracao
# ==============================================================================

def test_expand_env_vars(monkeypatch):
    monkeypatch.setenv('QRL_OUT', 'output/rb')
    assert expand_env_vars('${QRL_OUT}/run') == 'output/rb/run'
    assert expand_env_vars('$QRL_OUT') == 'output/rb'
    assert expand_env_vars(512) == 512


def test_expand_env_vars_keeps_missing(monkeypatch):
    monkeypatch.delenv('QRL_NAO_EXISTE', raising=False)
    assert expand_env_vars('${QRL_NAO_EXISTE}') == '${QRL_NAO_EXISTE}'


def test_expand_dict_nested(monkeypatch):
    monkeypatch.setenv('QRL_GRID', 'fino')
    expanded = expand_dict({'a': ['$QRL_GRID', 1], 'b': {'c': '${QRL_GRID}'}})
    assert expanded == {'a': ['fino', 1], 'b': {'c': 'fino'}}


def test_merge_config_keeps_defaults():
    merged = merge_config(DEFAULT_CONFIG, {'svd': {'chi_max': 32}})
    assert merged['svd']['chi_max'] == 32
    assert merged['svd']['rel_tolerance'] == DEFAULT_CONFIG['svd']['rel_tolerance']
    # base intacta
    assert DEFAULT_CONFIG['svd']['chi_max'] == 64


def test_default_config_is_valid():
    assert validate_config(copy.deepcopy(DEFAULT_CONFIG))['seed'] == 0


def test_validate_config_collects_problems():
    config = copy.deepcopy(DEFAULT_CONFIG)
    config['grid']['n_points'] = 300
    config['rb']['depths'] = [9, 7, 12]
    config['decoding']['estimator'] = 'wigner'
    del config['analytics']

    with pytest.raises(ConfigError) as info:
        validate_config(config)

    problems = "\n".join(info.value.problems)
    assert 'grid.n_points' in problems
    assert 'ordem crescente' in problems
    assert 'decoding.estimator' in problems
    assert "secao 'analytics'" in problems


def test_validate_config_purity_and_syndromes():
    config = copy.deepcopy(DEFAULT_CONFIG)
    config['purity']['depths'] = [7]
    config['purity']['tolerance'] = 0
    config['syndromes']['n_gadgets'] = 2
    config['syndromes']['correlation_limit'] = 1.5

    with pytest.raises(ConfigError) as info:
        validate_config(config)

    problems = "\n".join(info.value.problems)
    assert 'purity.depths' in problems
    assert 'purity.tolerance' in problems
    assert 'syndromes.n_gadgets' in problems
    assert 'syndromes.correlation_limit' in problems


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="nao encontrado"):
        load_config(tmp_path / 'nao_existe.yaml')


def test_load_config_invalid_yaml(tmp_path):
    path = tmp_path / 'quebrado.yaml'
    path.write_text("grid: [256\n", encoding='utf-8')
    with pytest.raises(ConfigError, match="YAML invalido"):
        load_config(path)


def test_load_config_rejects_non_mapping(tmp_path):
    path = tmp_path / 'lista.yaml'
    path.write_text("- 1\n- 2\n", encoding='utf-8')
    with pytest.raises(ConfigError, match="mapeamento"):
        load_config(path)


def test_load_config_merges_defaults(write_settings):
    config = load_config(write_settings())
    assert config['grid']['n_points'] == 256
    assert config['rb']['depths'] == [7, 9, 12, 16]
    validate_config(config)


def test_shipped_settings_are_valid():
    validate_config(load_config(REPO_ROOT / 'config' / 'settings.yaml'))


def test_apply_overrides():
    args = parse_args([
        'rb', '--squeezing', '10', '--squeezing', '11.5',
        '--shots', '3', '--grid', '256', '--seed', '7', '--oracle', 'b',
    ])
    config = apply_overrides(DEFAULT_CONFIG, args)

    assert config['seed'] == 7
    assert config['grid']['n_points'] == 256
    assert config['rb']['squeezing_db'] == [10.0, 11.5]
    assert config['grover']['squeezing_db'] == [10.0, 11.5]
    assert config['calibration']['squeezing_db'] == 10.0
    assert config['purity']['squeezing_db'] == 10.0
    assert config['syndromes']['squeezing_db'] == 10.0
    assert config['rb']['shots_per_sequence'] == 3
    assert config['purity']['shots_per_sequence'] == 3
    assert config['grover']['oracles'] == ['b']
    # original intacto
    assert DEFAULT_CONFIG['seed'] == 0


# ==============================================================================
# TESTES - Lock e manifesto
# ==============================================================================

def test_run_lock_blocks_second_run(tmp_path):
    with RunLock(tmp_path):
        assert (tmp_path / '.lock').exists()
        with pytest.raises(RuntimeError, match="Lock ativo"):
            RunLock(tmp_path).acquire()
    assert not (tmp_path / '.lock').exists()


def test_run_lock_replaces_stale(tmp_path):
    lock_path = tmp_path / '.lock'
    lock_path.write_text("antigo\n")
    old = time.time() - 48 * 3600
    os.utime(lock_path, (old, old))

    lock = RunLock(tmp_path, ttl_hours=24)
    lock.acquire()
    assert 'PID' in lock_path.read_text()
    lock.release()


def test_manifest_written_once(tmp_path, manifest):
    path = manifest.write(tmp_path)

    assert RunManifest.read(path) == manifest
    assert json.loads(path.read_text())['run_id'] == manifest.run_id
    with pytest.raises(FileExistsError):
        manifest.write(tmp_path)


# ==============================================================================
# TESTES - Persistencia
# ==============================================================================

def test_results_round_trip(tmp_path):
    df = pd.DataFrame({
        'run_id': ['x', 'x'],
        'depth': [7, 9],
        'mean_fidelity': [0.1 + 0.2, 1 / 3],
        'flagged': [0, 1],
    })
    write_results(df, tmp_path)

    from_parquet = load_results(tmp_path, 'parquet')
    from_csv = load_results(tmp_path, 'csv')

    assert from_parquet.to_dict('list') == df.to_dict('list')
    # %.17g preserva os floats exatamente
    assert from_csv['mean_fidelity'].tolist() == df['mean_fidelity'].tolist()

    with pytest.raises(ValueError, match="formato desconhecido"):
        load_results(tmp_path, 'xlsx')


# ==============================================================================
# TESTES - main()
# ==============================================================================

def test_main_missing_angle_table(tmp_path, write_settings):
    config = write_settings({'paths': {'angle_table': str(tmp_path / 'sem_tabela.txt')}})
    code = main(['rb', '--config', str(config), '--out', str(tmp_path / 'rb'), '--dry-run'])
    assert code == EXIT_MISSING_PREREQUISITE


def test_main_invalid_config(tmp_path, write_settings):
    config = write_settings({'rb': {'depths': [3, 7, 9]}})
    code = main(['rb', '--config', str(config), '--out', str(tmp_path / 'rb')])
    assert code == EXIT_CONFIG
    assert not (tmp_path / 'rb' / MANIFEST_NAME).exists()


def test_main_calibration_failure(tmp_path, write_settings):
    config = write_settings({'calibration': {'candidates': [], 'gates': ['H']}})
    code = main(['calibrate', '--config', str(config), '--out', str(tmp_path / 'cal'), '--dry-run'])
    assert code == EXIT_CALIBRATION


def test_main_grover_dry_run(tmp_path, write_settings):
    out_dir = tmp_path / 'grover'
    code = main(['grover', '--config', str(write_settings()), '--out', str(out_dir), '--dry-run'])

    assert code == EXIT_OK
    manifest = RunManifest.read(out_dir / MANIFEST_NAME)
    stats = manifest.details['schedule_stats']
    assert manifest.details['dry_run'] is True
    assert stats['a']['depth'] == 18
    assert stats['b']['depth'] == 17
    assert stats['a']['bell_pairs'] == 54
    assert stats['a']['physical_modes'] == 108
    assert not (out_dir / 'results.csv').exists()
    assert not (out_dir / '.lock').exists()


def test_main_rb_dry_run(tmp_path, write_settings):
    out_dir = tmp_path / 'rb'
    code = main(['rb', '--config', str(write_settings()), '--out', str(out_dir), '--dry-run'])

    assert code == EXIT_OK
    stats = RunManifest.read(out_dir / MANIFEST_NAME).details['schedule_stats']
    assert sorted(stats, key=int) == ['7', '9', '12', '16']
    assert all(s['depth'] >= int(d) for d, s in stats.items())


def test_main_refuses_existing_manifest(tmp_path, write_settings, manifest):
    out_dir = tmp_path / 'grover'
    out_dir.mkdir()
    manifest.write(out_dir)

    code = main(['grover', '--config', str(write_settings()), '--out', str(out_dir), '--dry-run'])
    assert code == EXIT_CONFIG


def test_main_decode_demo(tmp_path, write_settings):
    out_dir = tmp_path / 'demo'
    code = main([
        'decode-demo', '--config', str(write_settings()), '--out', str(out_dir),
        '--squeezing', '12', '--label', 'zero_L',
    ])

    assert code == EXIT_OK
    df = load_results(out_dir)
    assert len(df) == 1
    assert df['label'].iloc[0] == 'zero_L'
    assert df['fidelity'].iloc[0] > 0.9
    assert set(df['x_bit']) <= {0, 1}


def test_main_writes_log_to_configured_dir(tmp_path, write_settings):
    logs_dir = tmp_path / 'logs_run'
    config = write_settings({'paths': {'logs_dir': str(logs_dir)}})
    code = main(['grover', '--config', str(config), '--out', str(tmp_path / 'grover'), '--dry-run'])

    assert code == EXIT_OK
    log_file = logs_dir / LOG_FILE_NAME
    assert log_file.exists()
    assert 'INICIO DA EXECUCAO: grover' in log_file.read_text(encoding='utf-8')


def test_main_calibrate_installs_table_for_rb(tmp_path, write_settings):
    """calibrate grava a tabela em paths.angle_table; rb seguinte a encontra."""
    installed = tmp_path / 'tabela' / 'angle_table.txt'
    config = write_settings({
        'paths': {'angle_table': str(installed)},
        'calibration': {'verify': False},
    })

    code = main(['rb', '--config', str(config), '--out', str(tmp_path / 'rb0'), '--dry-run'])
    assert code == EXIT_MISSING_PREREQUISITE

    cal_dir = tmp_path / 'cal'
    assert main(['calibrate', '--config', str(config), '--out', str(cal_dir)]) == EXIT_OK
    assert installed.exists()
    assert read_angle_table(installed) == read_angle_table(cal_dir / 'angle_table.txt')
    assert str(installed) in RunManifest.read(cal_dir / MANIFEST_NAME).outputs

    code = main(['rb', '--config', str(config), '--out', str(tmp_path / 'rb'), '--dry-run'])
    assert code == EXIT_OK


def test_main_calibrate_subset_keeps_other_gates(tmp_path, write_settings):
    installed = tmp_path / 'angle_table.txt'
    config = write_settings({
        'paths': {'angle_table': str(installed)},
        'calibration': {'verify': False, 'gates': ['H']},
    })

    assert main(['calibrate', '--config', str(config), '--out', str(tmp_path / 'cal')]) == EXIT_OK
    table = read_angle_table(installed)
    assert set(table) == set(CALIBRATED_GATES)
    assert table[GateLabel.SWAP].angles == pytest.approx(analytic_programs()[GateLabel.SWAP].angles, abs=1e-10)


def test_main_decode_demo_passes_clip_threshold(tmp_path, write_settings, monkeypatch):
    seen = []
    real = orchestrator.decode_logical

    def recording(state, frame, estimator='binned', clip_threshold=None):
        seen.append(clip_threshold)
        return real(state, frame, estimator, clip_threshold)

    monkeypatch.setattr(orchestrator, 'decode_logical', recording)
    config = write_settings({'decoding': {'clip_threshold': 0.05}})
    code = main([
        'decode-demo', '--config', str(config), '--out', str(tmp_path / 'demo'),
        '--squeezing', '12', '--label', 'zero_L',
    ])

    assert code == EXIT_OK
    assert seen == [0.05]


def test_main_purity_dry_run(tmp_path, write_settings):
    out_dir = tmp_path / 'purity'
    code = main(['purity', '--config', str(write_settings()), '--out', str(out_dir), '--dry-run'])

    assert code == EXIT_OK
    stats = RunManifest.read(out_dir / MANIFEST_NAME).details['schedule_stats']
    assert sorted(stats, key=int) == ['7', '16']
    assert not (out_dir / 'results.csv').exists()


def test_main_syndromes_dry_run(tmp_path, write_settings):
    out_dir = tmp_path / 'syndromes'
    config = write_settings({'syndromes': {'n_gadgets': 50}})
    code = main(['syndromes', '--config', str(config), '--out', str(out_dir), '--dry-run'])

    assert code == EXIT_OK
    stats = RunManifest.read(out_dir / MANIFEST_NAME).details['schedule_stats']
    assert stats['depth'] == 50
    assert stats['bell_pairs'] > 0


def test_main_syndromes_short_chain(tmp_path, write_settings):
    out_dir = tmp_path / 'syndromes'
    config = write_settings({'syndromes': {'n_gadgets': 20, 'squeezing_db': 12.0}})
    code = main(['syndromes', '--config', str(config), '--out', str(out_dir)])

    assert code == EXIT_OK
    df = load_results(out_dir)
    assert len(df) == 1
    assert df['n_gadgets'].iloc[0] == 20
    assert df['passed'].iloc[0] in (0, 1)
    assert 'syndromes' in RunManifest.read(out_dir / MANIFEST_NAME).details


@pytest.mark.slow
def test_main_purity_short_campaign(tmp_path, write_settings):
    out_dir = tmp_path / 'purity'
    config = write_settings({
        'rb': {'n_qubits': 1},
        'purity': {'sequences_per_depth': 2, 'shots_per_sequence': 1},
    })
    code = main(['purity', '--config', str(config), '--out', str(out_dir)])

    assert code == EXIT_OK
    df = load_results(out_dir)
    depths = df[df['kind'] == 'depth']
    drift = df[df['kind'] == 'drift'].iloc[0]
    assert sorted(depths['depth'].astype(int)) == [7, 16]
    expected = abs(depths['mean_purity'].iloc[-1] - depths['mean_purity'].iloc[0])
    assert drift['drift'] == pytest.approx(expected)
    assert drift['passed'] == int(drift['drift'] <= drift['tolerance'])
    assert drift['tolerance'] == pytest.approx(0.02)

if __name__ == '__main__':
    pytest.main([__file__, '-v'])
