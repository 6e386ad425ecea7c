"""
Orquestrador principal do simulador QRL.

Este modulo coordena:
- Leitura e validacao da configuracao (YAML + variaveis de ambiente)
- Calibracao da tabela de angulos
- Campanhas de randomized benchmarking e de Grover
- Verificacoes de pureza por profundidade e de estatistica de sindromes
- Demonstracao de decodificacao de um gadget
- Persistencia (manifest.json, results.csv, results.parquet)
- Relatorio PDF opcional
- Logging e observabilidade
- Lock por diretorio de saida (evita execucoes concorrentes)
- CLI com argparse

Uso:
    python -m src.python.orchestrator rb --config config/settings.yaml --out output/rb
"""

import argparse
import copy
import json
import logging
from logging.handlers import TimedRotatingFileHandler
import os
import re
import subprocess
import sys
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
import yaml
from dotenv import load_dotenv

# ==============================================================================
# SETUP INICIAL (ANTES DE TUDO!)
# ==============================================================================

# Carregar variaveis de ambiente do .env
load_dotenv()

# ==============================================================================
# LOGGING
# ==============================================================================

LOG_FORMAT = '%(asctime)s [%(levelname)s] %(message)s'
LOG_FILE_NAME = 'execution.log'

# Logger do pacote: mensagens de qrl, fmps, experiments etc. chegam aos mesmos handlers
logger = logging.getLogger(__package__ or 'qrl')
logger.setLevel(logging.INFO)

if not logger.handlers:
    # Handler console (para ver output em tempo real)
    console_handler = logging.StreamHandler()
    console_handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logger.addHandler(console_handler)


def setup_file_logging(logs_dir) -> Path:
    """
    Handler rotativo (30 dias, rotacao a meia-noite) em <logs_dir>/execution.log.

    Chamado depois de carregar a configuracao (paths.logs_dir). Um handler de
    arquivo anterior apontando para outro diretorio e fechado e substituido.

    Returns:
        Path do arquivo de log
    """
    log_path = Path(logs_dir) / LOG_FILE_NAME
    # CRITICO: Criar diretorio de logs ANTES de abrir o handler
    log_path.parent.mkdir(parents=True, exist_ok=True)

    for handler in list(logger.handlers):
        if isinstance(handler, TimedRotatingFileHandler):
            if handler.baseFilename == os.path.abspath(log_path):
                return log_path
            logger.removeHandler(handler)
            handler.close()

    file_handler = TimedRotatingFileHandler(
        log_path,
        when='midnight',
        interval=1,
        backupCount=30,
        encoding='utf-8'
    )
    file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logger.addHandler(file_handler)
    return log_path


# ==============================================================================
# IMPORTS DE MODULOS LOCAIS (apos setup de logging)
# ==============================================================================

from . import __version__
from .analytics import (
    CLASSICAL_BOUND,
    RANDOM_BASELINE,
    analytic_curves,
    analytic_error_rates,
    model_from_r,
    normalized_residuals,
    runs_test,
)
from .experiments import (
    GROVER_SOLUTIONS,
    PURITY_TOLERANCE,
    SYNDROME_CORRELATION_LIMIT,
    SYNDROME_SIGMA_LIMIT,
    GroverConfig,
    RbConfig,
    grover_analytic_estimate,
    grover_circuit,
    pooled_success,
    purity_drift,
    random_clifford_circuit,
    run_grover,
    run_purity_scan,
    run_rb,
    syndrome_statistics,
)
from .fmps import FmpsState, GridSpec, SvdPolicy
from .logical import DEFAULT_CLIP_THRESHOLD, ESTIMATORS, dv_product, fidelity, purity
from .qrl import (
    CALIBRATED_GATES,
    CalibrationError,
    GateLabel,
    MissingPrerequisiteError,
    PauliFrame,
    analytic_programs,
    calibrate_angles,
    compile_circuit,
    decode_logical,
    execute_single_gadget,
    get_pair,
    read_angle_table,
    resolve_builder,
    screen_candidates,
    write_angle_table,
)
from .states import GkpLabel, build_state, epsilon_from_db

# ==============================================================================
# CONSTANTES
# ==============================================================================

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CALIBRATION = 2
EXIT_MISSING_PREREQUISITE = 3
EXIT_CONFIG = 4
EXIT_INTERRUPTED = 130

GRID_CHOICES = (256, 512, 1024)
BUILDER_CHOICES = ('auto', 'fock', 'comb')
METRIC_CHOICES = ('fidelity', 'survival')

MANIFEST_NAME = 'manifest.json'
RESULTS_CSV = 'results.csv'
RESULTS_PARQUET = 'results.parquet'
ANGLE_TABLE_NAME = 'angle_table.txt'

DEFAULT_CONFIG_PATH = Path('config/settings.yaml')

# Valores usados quando a chave nao aparece no settings.yaml
DEFAULT_CONFIG: Dict = {
    'seed': 0,
    'workers': 1,
    'grid': {'n_points': 512},
    'svd': {'rel_tolerance': 1e-7, 'chi_max': 64, 'oversampling': 8, 'power_iterations': 2},
    'states': {'builder': 'auto'},
    'decoding': {'estimator': 'binned', 'clip_threshold': DEFAULT_CLIP_THRESHOLD},
    'calibration': {
        'squeezing_db': 14.0,
        'candidates': None,
        'threshold': 0.99,
        'shots': 2,
        'verify': True,
        'gates': [g.value for g in CALIBRATED_GATES],
    },
    'rb': {
        'n_qubits': 2,
        'depths': [7, 9, 12, 16],
        'sequences_per_depth': 50,
        'shots_per_sequence': 4,
        'squeezing_db': [10.5],
        'metric': 'fidelity',
        'min_depth': 7,
    },
    'purity': {
        'depths': [7, 16],
        'squeezing_db': 10.0,
        'sequences_per_depth': 50,
        'shots_per_sequence': 4,
        'tolerance': PURITY_TOLERANCE,
    },
    'syndromes': {
        'n_gadgets': 1000,
        'squeezing_db': 10.0,
        'sigma_limit': SYNDROME_SIGMA_LIMIT,
        'correlation_limit': SYNDROME_CORRELATION_LIMIT,
    },
    'grover': {'oracles': ['a', 'b', 'c'], 'squeezing_db': [12.0], 'shots': 200},
    'analytics': {'amplification': 2.0, 'curve_range_db': [5.0, 15.0], 'curve_points': 41},
    'paths': {'out_dir': 'output', 'logs_dir': 'logs', 'angle_table': 'config/angle_table.txt'},
}


class ConfigError(ValueError):
    """Configuracao invalida; problems lista todas as violacoes encontradas."""

    def __init__(self, problems: List[str]):
        self.problems = list(problems)
        super().__init__(
            "Configuracao invalida:\n" + "\n".join(f"  - {p}" for p in self.problems)
        )


# ==============================================================================
# CONFIGURACAO COM EXPANSAO DE ENV VARS
# ==============================================================================

def expand_env_vars(value):
    """
    Expande ${VAR} ou $VAR em strings usando variaveis de ambiente.

    Args:
        value: String com variaveis ou outro tipo

    Returns:
        String expandida ou valor original se nao for string

    Examples:
        >>> os.environ['QRL_OUT'] = 'output/rb'
        >>> expand_env_vars('${QRL_OUT}')
        'output/rb'
        >>> expand_env_vars(512)
        512
    """
    if not isinstance(value, str):
        return value

    # Padrao ${VAR} ou $VAR
    pattern = r'\$\{([^}]+)\}|\$([A-Za-z_][A-Za-z0-9_]*)'

    def replacer(match):
        var_name = match.group(1) or match.group(2)
        env_value = os.getenv(var_name)

        if env_value is None:
            logger.warning(f"Variavel de ambiente nao encontrada: {var_name}")
            return match.group(0)  # Mantem original

        return env_value

    return re.sub(pattern, replacer, value)


def expand_dict(d):
    """Recursivamente expande env vars em dicionario/lista."""
    if isinstance(d, dict):
        return {k: expand_dict(v) for k, v in d.items()}
    elif isinstance(d, list):
        return [expand_dict(item) for item in d]
    elif isinstance(d, str):
        return expand_env_vars(d)
    else:
        return d


def merge_config(base: Dict, override: Dict) -> Dict:
    """Sobrepoe override em base, secao por secao."""
    merged = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_config(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and np.isfinite(value)


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def validate_config(config: Dict) -> Dict:
    """
    Valida o esquema da configuracao resolvida.

    Todas as violacoes sao reunidas numa unica excecao.

    Raises:
        ConfigError: Chave ausente ou valor invalido
    """
    problems: List[str] = []

    def section(name):
        value = config.get(name)
        if not isinstance(value, dict):
            problems.append(f"secao '{name}' ausente ou invalida")
            return {}
        return value

    def check(ok: bool, message: str):
        if not ok:
            problems.append(message)

    check(_is_int(config.get('seed')) and config.get('seed') >= 0, "seed deve ser inteiro >= 0")
    check(_is_int(config.get('workers')) and config.get('workers') >= 1, "workers deve ser inteiro >= 1")

    grid = section('grid')
    check(grid.get('n_points') in GRID_CHOICES, f"grid.n_points deve estar em {GRID_CHOICES}")

    svd = section('svd')
    tol = svd.get('rel_tolerance')
    check(_is_number(tol) and 0 < tol < 1, "svd.rel_tolerance deve estar em (0, 1)")
    check(_is_int(svd.get('chi_max')) and svd.get('chi_max') >= 2, "svd.chi_max deve ser inteiro >= 2")
    check(_is_int(svd.get('oversampling')) and svd.get('oversampling') >= 0, "svd.oversampling deve ser inteiro >= 0")
    check(
        _is_int(svd.get('power_iterations')) and svd.get('power_iterations') >= 0,
        "svd.power_iterations deve ser inteiro >= 0",
    )

    states = section('states')
    check(states.get('builder') in BUILDER_CHOICES, f"states.builder deve estar em {BUILDER_CHOICES}")

    decoding = section('decoding')
    check(decoding.get('estimator') in ESTIMATORS, f"decoding.estimator deve estar em {ESTIMATORS}")
    clip = decoding.get('clip_threshold')
    check(_is_number(clip) and clip >= 0, "decoding.clip_threshold deve ser >= 0")

    calibration = section('calibration')
    check(_is_number(calibration.get('squeezing_db')), "calibration.squeezing_db deve ser numerico")
    threshold = calibration.get('threshold')
    check(_is_number(threshold) and 0 < threshold <= 1, "calibration.threshold deve estar em (0, 1]")
    check(_is_int(calibration.get('shots')) and calibration.get('shots') >= 1, "calibration.shots deve ser >= 1")
    check(isinstance(calibration.get('verify'), bool), "calibration.verify deve ser booleano")
    candidates = calibration.get('candidates')
    check(
        candidates is None or (isinstance(candidates, list) and all(_is_number(c) for c in candidates)),
        "calibration.candidates deve ser null ou lista de angulos",
    )
    valid_gates = {g.value for g in CALIBRATED_GATES}
    gates = calibration.get('gates')
    check(
        isinstance(gates, list) and gates and set(gates) <= valid_gates,
        f"calibration.gates deve ser lista nao vazia em {sorted(valid_gates)}",
    )

    rb = section('rb')
    check(_is_int(rb.get('n_qubits')) and 1 <= rb.get('n_qubits') <= 4, "rb.n_qubits deve estar em [1, 4]")
    min_depth = rb.get('min_depth')
    check(_is_int(min_depth) and min_depth >= 1, "rb.min_depth deve ser inteiro >= 1")
    depths = rb.get('depths')
    depths_ok = isinstance(depths, list) and all(_is_int(d) for d in depths)
    check(depths_ok and len(set(depths)) >= 3, "rb.depths deve ter >= 3 profundidades inteiras distintas")
    if depths_ok and _is_int(min_depth):
        check(all(d >= min_depth for d in depths), f"rb.depths abaixo de rb.min_depth={min_depth}")
        check(depths == sorted(depths), "rb.depths deve estar em ordem crescente")
    check(_is_int(rb.get('sequences_per_depth')) and rb.get('sequences_per_depth') >= 2,
          "rb.sequences_per_depth deve ser >= 2")
    check(_is_int(rb.get('shots_per_sequence')) and rb.get('shots_per_sequence') >= 1,
          "rb.shots_per_sequence deve ser >= 1")
    check(rb.get('metric') in METRIC_CHOICES, f"rb.metric deve estar em {METRIC_CHOICES}")

    purity_cfg = section('purity')
    pdepths = purity_cfg.get('depths')
    pdepths_ok = isinstance(pdepths, list) and all(_is_int(d) for d in pdepths)
    check(
        pdepths_ok and len(set(pdepths)) >= 2 and pdepths == sorted(pdepths),
        "purity.depths deve ter >= 2 profundidades inteiras em ordem crescente",
    )
    if pdepths_ok and pdepths and _is_int(min_depth):
        check(min(pdepths) >= min_depth, f"purity.depths abaixo de rb.min_depth={min_depth}")
    check(_is_number(purity_cfg.get('squeezing_db')), "purity.squeezing_db deve ser numerico")
    check(_is_int(purity_cfg.get('sequences_per_depth')) and purity_cfg.get('sequences_per_depth') >= 1,
          "purity.sequences_per_depth deve ser >= 1")
    check(_is_int(purity_cfg.get('shots_per_sequence')) and purity_cfg.get('shots_per_sequence') >= 1,
          "purity.shots_per_sequence deve ser >= 1")
    tolerance = purity_cfg.get('tolerance')
    check(_is_number(tolerance) and tolerance > 0, "purity.tolerance deve ser > 0")

    syndromes = section('syndromes')
    check(_is_int(syndromes.get('n_gadgets')) and syndromes.get('n_gadgets') >= 3,
          "syndromes.n_gadgets deve ser inteiro >= 3")
    check(_is_number(syndromes.get('squeezing_db')), "syndromes.squeezing_db deve ser numerico")
    sigma_limit = syndromes.get('sigma_limit')
    check(_is_number(sigma_limit) and sigma_limit > 0, "syndromes.sigma_limit deve ser > 0")
    corr_limit = syndromes.get('correlation_limit')
    check(_is_number(corr_limit) and 0 < corr_limit <= 1, "syndromes.correlation_limit deve estar em (0, 1]")

    grover = section('grover')
    oracles = grover.get('oracles')
    check(
        isinstance(oracles, list) and oracles and set(oracles) <= set(GROVER_SOLUTIONS),
        f"grover.oracles deve ser lista nao vazia em {sorted(GROVER_SOLUTIONS)}",
    )
    check(_is_int(grover.get('shots')) and grover.get('shots') >= 1, "grover.shots deve ser >= 1")

    for name, sec in (('rb', rb), ('grover', grover)):
        values = sec.get('squeezing_db')
        check(
            isinstance(values, list) and values and all(_is_number(v) for v in values),
            f"{name}.squeezing_db deve ser lista nao vazia de valores em dB",
        )

    analytics = section('analytics')
    amp = analytics.get('amplification')
    check(_is_number(amp) and amp >= 1, "analytics.amplification deve ser >= 1")
    span = analytics.get('curve_range_db')
    check(
        isinstance(span, list) and len(span) == 2 and all(_is_number(v) for v in span) and span[0] < span[1],
        "analytics.curve_range_db deve ser [min, max]",
    )
    check(_is_int(analytics.get('curve_points')) and analytics.get('curve_points') >= 2,
          "analytics.curve_points deve ser >= 2")

    paths = section('paths')
    for key in ('out_dir', 'logs_dir', 'angle_table'):
        check(isinstance(paths.get(key), str) and paths.get(key), f"paths.{key} deve ser texto nao vazio")

    if problems:
        raise ConfigError(problems)
    return config


def load_config(path: Optional[Path] = None) -> Dict:
    """
    Carrega settings.yaml com expansao de variaveis de ambiente.

    Chaves ausentes recebem os valores de DEFAULT_CONFIG.

    Returns:
        Dict com configuracao expandida (ainda nao validada)

    Raises:
        ConfigError: Arquivo ausente ou YAML invalido
    """
    config_file = Path(path) if path else DEFAULT_CONFIG_PATH

    if not config_file.exists():
        raise ConfigError([f"arquivo de configuracao nao encontrado: {config_file}"])

    try:
        with open(config_file, 'r', encoding='utf-8') as f:
            raw = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigError([f"YAML invalido em {config_file}: {e}"]) from e

    if not isinstance(raw, dict):
        raise ConfigError([f"{config_file} deve conter um mapeamento no topo"])

    # Expande variaveis de ambiente
    return merge_config(DEFAULT_CONFIG, expand_dict(raw))


def apply_overrides(config: Dict, args: argparse.Namespace) -> Dict:
    """Flags da CLI sobrepoem os valores do arquivo."""
    config = copy.deepcopy(config)

    if args.seed is not None:
        config['seed'] = args.seed
    if args.grid is not None:
        config['grid']['n_points'] = args.grid
    if args.chi_max is not None:
        config['svd']['chi_max'] = args.chi_max

    if args.squeezing:
        values = [float(s) for s in args.squeezing]
        config['rb']['squeezing_db'] = values
        config['grover']['squeezing_db'] = values
        config['calibration']['squeezing_db'] = values[0]
        config['purity']['squeezing_db'] = values[0]
        config['syndromes']['squeezing_db'] = values[0]

    if args.shots is not None:
        config['grover']['shots'] = args.shots
        config['rb']['shots_per_sequence'] = args.shots
        config['purity']['shots_per_sequence'] = args.shots
        config['calibration']['shots'] = args.shots

    if args.oracle:
        config['grover']['oracles'] = list(args.oracle)

    return config


# ==============================================================================
# FILE LOCK (Idempotencia)
# ==============================================================================

class RunLock:
    """
    Lock baseado em arquivo para evitar duas execucoes no mesmo diretorio de saida.

    Se um lock existir por mais de TTL horas, e considerado stale e pode ser sobrescrito.
    """

    def __init__(self, out_dir: Path, ttl_hours: int = 24):
        self.lock_path = Path(out_dir) / '.lock'
        self.ttl_hours = ttl_hours
        self.lock_file = None

    def acquire(self):
        """
        Tenta adquirir lock. Se lock stale, sobrescreve.

        Raises:
            RuntimeError: Se lock ativo (nao stale) existir
        """
        self.lock_path.parent.mkdir(parents=True, exist_ok=True)
        while True:
            try:
                fd = os.open(self.lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
                break
            except FileExistsError:
                if not self.lock_path.exists():
                    continue

                age_hours = (time.time() - self.lock_path.stat().st_mtime) / 3600

                if age_hours < self.ttl_hours:
                    raise RuntimeError(
                        f"Lock ativo encontrado: {self.lock_path}\n"
                        f"Idade: {age_hours:.1f}h (TTL: {self.ttl_hours}h)\n"
                        f"Outra execucao pode estar usando este diretorio de saida.\n"
                        f"Se tiver certeza de que nao ha execucao ativa, delete: {self.lock_path}"
                    )

                logger.warning(
                    f"Lock stale detectado (idade: {age_hours:.1f}h > TTL: {self.ttl_hours}h). "
                    f"Removendo..."
                )
                try:
                    self.lock_path.unlink()
                except OSError as unlink_error:
                    raise RuntimeError(
                        f"Nao foi possivel remover lock stale: {self.lock_path}"
                    ) from unlink_error

        self.lock_file = os.fdopen(fd, 'w')
        self.lock_file.write(f"{datetime.now().isoformat()}\n")
        self.lock_file.write(f"PID: {os.getpid()}\n")
        self.lock_file.flush()
        logger.debug(f"Lock adquirido: {self.lock_path}")

    def release(self):
        """Libera lock removendo arquivo."""
        if self.lock_file:
            self.lock_file.close()
            self.lock_file = None

        if self.lock_path.exists():
            self.lock_path.unlink()
            logger.debug(f"Lock liberado: {self.lock_path}")

    def __enter__(self):
        self.acquire()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.release()


# ==============================================================================
# PERSISTENCIA
# ==============================================================================

def code_version() -> str:
    """Versao do pacote mais o commit git, quando disponivel."""
    try:
        result = subprocess.run(
            ['git', 'rev-parse', '--short', 'HEAD'],
            capture_output=True,
            text=True,
            timeout=10,
            cwd=Path(__file__).parent,
        )
        if result.returncode == 0 and result.stdout.strip():
            return f"{__version__}+{result.stdout.strip()}"
    except (FileNotFoundError, subprocess.TimeoutExpired):
        pass
    return __version__


@dataclass
class RunManifest:
    """Registro imutavel de uma execucao (escrito uma unica vez)."""

    command: str
    config: Dict
    code_version: str
    seed: int
    run_id: str
    started_at: str
    finished_at: Optional[str] = None
    outputs: List[str] = field(default_factory=list)
    details: Dict = field(default_factory=dict)

    def write(self, out_dir: Path) -> Path:
        """
        Grava manifest.json.

        Raises:
            FileExistsError: Manifesto ja existe no diretorio
        """
        path = Path(out_dir) / MANIFEST_NAME
        with open(path, 'x', encoding='utf-8') as f:
            json.dump(asdict(self), f, indent=2, sort_keys=True, default=_json_default)
            f.write('\n')
        return path

    @classmethod
    def read(cls, path: Path) -> "RunManifest":
        with open(path, 'r', encoding='utf-8') as f:
            return cls(**json.load(f))


def _json_default(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"tipo nao serializavel: {type(value).__name__}")


def write_results(df: pd.DataFrame, out_dir: Path) -> List[Path]:
    """
    Grava results.csv e results.parquet.

    O CSV usa a representacao completa dos floats; o Parquet preserva os tipos.
    """
    out_dir = Path(out_dir)
    csv_path = out_dir / RESULTS_CSV
    parquet_path = out_dir / RESULTS_PARQUET

    df.to_csv(csv_path, index=False, float_format='%.17g')
    df.to_parquet(parquet_path, engine='pyarrow', index=False)

    logger.info(f"Resultados gravados: {csv_path} ({len(df)} linhas)")
    return [csv_path, parquet_path]


def load_results(out_dir: Path, fmt: str = 'parquet') -> pd.DataFrame:
    """Rele os resultados de uma execucao ('parquet' ou 'csv')."""
    out_dir = Path(out_dir)
    if fmt == 'parquet':
        return pd.read_parquet(out_dir / RESULTS_PARQUET, engine='pyarrow')
    if fmt == 'csv':
        return pd.read_csv(out_dir / RESULTS_CSV)
    raise ValueError(f"formato desconhecido: {fmt}")


def _policy(config: Dict) -> SvdPolicy:
    svd = config['svd']
    return SvdPolicy(
        rel_tolerance=svd['rel_tolerance'],
        chi_max=svd['chi_max'],
        oversampling=svd['oversampling'],
        power_iterations=svd['power_iterations'],
        seed=config['seed'],
    )


# (resultados tabulares, dados para o relatorio PDF)
CommandOutput = Tuple[pd.DataFrame, Dict]


def _derived_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


def _schedule_stats(schedule) -> Dict:
    return {
        'depth': schedule.depth,
        'bell_pairs': schedule.bell_pair_count,
        'magic_pairs': schedule.magic_count,
        'slot_layers': schedule.slot_count,
        'physical_modes': schedule.physical_modes,
    }


def install_angle_table(path: Path, programs: Dict, squeezing: float) -> Path:
    """
    Grava a tabela calibrada no caminho lido pelos demais subcomandos.

    Portas fora da calibracao mantem a entrada da tabela existente (ou o
    programa analitico, se nao houver tabela valida).
    """
    path = Path(path)
    try:
        base = read_angle_table(path)
    except (MissingPrerequisiteError, ValueError) as e:
        logger.debug(f"Tabela existente ignorada ({e}); completando com programas analiticos")
        base = analytic_programs()
    merged = {**{g: base[g] for g in CALIBRATED_GATES if g in base}, **programs}
    return write_angle_table(path, merged, squeezing)


# ==============================================================================
# SUBCOMANDOS
# ==============================================================================

def cmd_calibrate(config: Dict, args: argparse.Namespace, out_dir: Path, manifest: RunManifest) -> CommandOutput:
    """
    Calibra a tabela de angulos, grava angle_table.txt no diretorio de saida
    e instala a tabela em paths.angle_table.

    Raises:
        CalibrationError: Alguma porta sem candidato acima do limiar
    """
    cal = config['calibration']
    gates = [GateLabel(g) for g in cal['gates']]
    grid = GridSpec(config['grid']['n_points'])

    logger.info(f"")
    logger.info(f"[FASE 2/3] Calibracao de {len(gates)} portas a {cal['squeezing_db']} dB")
    logger.info(f"")

    programs = {}
    rows = []
    for gate in gates:
        if args.dry_run:
            screened = screen_candidates(gate, cal['candidates'])
            if not screened:
                raise CalibrationError(
                    f"no candidate passes: nenhum candidato realiza {gate.value} (filtro simpletico vazio)",
                    best_program=None,
                    best_fidelity=0.0,
                )
            program = screened[0]
        else:
            program = calibrate_angles(
                gate,
                candidates=cal['candidates'],
                squeezing=cal['squeezing_db'],
                grid=grid,
                threshold=cal['threshold'],
                shots=cal['shots'],
                verify=cal['verify'],
                seed=config['seed'],
                policy=_policy(config),
                builder=config['states']['builder'],
                estimator=config['decoding']['estimator'],
                clip_threshold=config['decoding']['clip_threshold'],
            )
        programs[gate] = program
        logger.info(f"  {gate.value:5s}: {tuple(round(a, 6) for a in program.angles)}")
        rows.append({
            'run_id': manifest.run_id,
            'gate': gate.value,
            'angles': " ".join(repr(float(a)) for a in program.angles),
            'noise_gain': program.noise_gain,
        })

    if args.dry_run:
        manifest.details['screened_programs'] = {r['gate']: r['angles'] for r in rows}
        return pd.DataFrame(), {}

    logger.info(f"")
    logger.info(f"[FASE 3/3] Gravando tabela de angulos")
    table = write_angle_table(out_dir / ANGLE_TABLE_NAME, programs, cal['squeezing_db'])
    manifest.outputs.append(str(table))

    # rb, grover, purity e decode-demo leem paths.angle_table
    installed = install_angle_table(Path(config['paths']['angle_table']), programs, cal['squeezing_db'])
    manifest.outputs.append(str(installed))
    logger.info(f"Tabela instalada em {installed}")
    return pd.DataFrame(rows), {}


def cmd_rb(config: Dict, args: argparse.Namespace, out_dir: Path, manifest: RunManifest) -> CommandOutput:
    """
    Campanha de RB para cada squeezing configurado.

    Linhas do resultado (coluna kind): point, fit, curve.
    """
    rb = config['rb']
    programs = read_angle_table(Path(config['paths']['angle_table']))
    amplification = config['analytics']['amplification']

    if args.dry_run:
        rng = np.random.default_rng(config['seed'])
        stats = {}
        for depth in rb['depths']:
            circuit = random_clifford_circuit(rb['n_qubits'], depth, rng)
            stats[str(depth)] = _schedule_stats(compile_circuit(circuit, rb['n_qubits']))
        manifest.details['schedule_stats'] = stats
        logger.info(f"Dry-run: estatisticas de escala por profundidade: {stats}")
        return pd.DataFrame(), {}

    rows = []
    points_by_s, fits_by_s = {}, {}
    n_values = len(rb['squeezing_db'])

    for i, s in enumerate(rb['squeezing_db'], 1):
        logger.info(f"")
        logger.info(f"[FASE 2/3] RB {i}/{n_values}: squeezing {s} dB")
        logger.info(f"")

        rb_config = RbConfig(
            n_qubits=rb['n_qubits'],
            depths=tuple(rb['depths']),
            sequences_per_depth=rb['sequences_per_depth'],
            shots_per_sequence=rb['shots_per_sequence'],
            squeezing_db=float(s),
            seed=_derived_seed(config['seed'], i),
            grid_points=config['grid']['n_points'],
            chi_max=config['svd']['chi_max'],
            estimator=config['decoding']['estimator'],
            clip_threshold=config['decoding']['clip_threshold'],
            metric=rb['metric'],
            min_depth=rb['min_depth'],
            workers=config['workers'],
        )
        points, fit, _samples = run_rb(rb_config, programs)
        points_by_s[float(s)], fits_by_s[float(s)] = points, fit

        r_low, r_high, r_mean = analytic_error_rates(float(s), amplification)
        mean_line = model_from_r(r_mean, rb['n_qubits'])
        res_fit = normalized_residuals(points, fit.model)
        res_mean = normalized_residuals(points, mean_line)

        for pt, rf, rm in zip(points, res_fit, res_mean):
            rows.append({
                'kind': 'point',
                'squeezing_db': float(s),
                'depth': pt.depth,
                'mean_fidelity': pt.mean_fidelity,
                'std_error': pt.std_error,
                'n_samples': pt.n_samples,
                'residual_fit': float(rf),
                'residual_mean': float(rm),
            })

        rows.append({
            'kind': 'fit',
            'squeezing_db': float(s),
            'A': fit.A,
            'p': fit.p,
            'B': fit.B,
            'r': fit.r,
            'r_std': fit.r_std,
            'flagged': int(fit.flagged),
            'runs_pvalue': runs_test(res_fit),
            'r_low': r_low,
            'r_high': r_high,
            'r_mean': r_mean,
        })

        logger.info(f"{'='*70}")
        logger.info(f"   r ajustado: {fit.r:.5f} +- {fit.r_std:.5f} (p={fit.p:.5f}, A={fit.A:.4f})")
        logger.info(f"   analitico:  r_low={r_low:.5f}  r_high={r_high:.5f}  r_mean={r_mean:.5f}")
        if fit.flagged:
            logger.warning(f"   Ajuste sinalizado: {fit.message}")
        logger.info(f"{'='*70}")

    lo, hi = config['analytics']['curve_range_db']
    curves = analytic_curves(np.linspace(lo, hi, config['analytics']['curve_points']), amplification)
    for _, row in curves.iterrows():
        rows.append({'kind': 'curve', **row.to_dict()})

    manifest.details['fits'] = {
        str(s): {'r': f.r, 'r_std': f.r_std, 'flagged': f.flagged} for s, f in fits_by_s.items()
    }
    df = pd.DataFrame(rows)
    df.insert(0, 'run_id', manifest.run_id)
    return df, {'rb_points': points_by_s, 'rb_fits': fits_by_s, 'curves': curves}


def cmd_grover(config: Dict, args: argparse.Namespace, out_dir: Path, manifest: RunManifest) -> CommandOutput:
    """
    Tiros de Grover por oraculo e squeezing, com sucesso agregado entre oraculos.

    Cada linha traz as colunas constantes random_baseline (2/8) e
    classical_bound (13/28) e a estimativa analitica.
    """
    grover = config['grover']
    programs = read_angle_table(Path(config['paths']['angle_table']))
    amplification = config['analytics']['amplification']

    stats = {o: _schedule_stats(compile_circuit(grover_circuit(o), 3)) for o in grover['oracles']}
    manifest.details['schedule_stats'] = stats
    for o, st in stats.items():
        logger.info(
            f"  Oraculo {o}: profundidade {st['depth']}, {st['bell_pairs']} pares de Bell "
            f"({st['magic_pairs']} magicos), {st['physical_modes']} modos"
        )

    if args.dry_run:
        return pd.DataFrame(), {}

    rows = []
    total = len(grover['oracles']) * len(grover['squeezing_db'])
    step = 0
    for j, s in enumerate(grover['squeezing_db']):
        r_mean = analytic_error_rates(float(s), amplification)[2]
        results = []
        for i, oracle_id in enumerate(grover['oracles']):
            step += 1
            logger.info(f"")
            logger.info(f"[FASE 2/3] Grover {step}/{total}: oraculo {oracle_id}, {s} dB")
            logger.info(f"")

            result = run_grover(
                GroverConfig(
                    oracle_id=oracle_id,
                    squeezing_db=float(s),
                    shots=grover['shots'],
                    seed=_derived_seed(config['seed'], j, i),
                    grid_points=config['grid']['n_points'],
                    chi_max=config['svd']['chi_max'],
                    workers=config['workers'],
                ),
                programs,
            )
            results.append(result)
            rows.append({
                'kind': 'oracle',
                'oracle_id': oracle_id,
                'squeezing_db': float(s),
                'shots': len(result.records),
                'successes': sum(r.success for r in result.records),
                'success_prob': result.success_prob,
                'ci_low': result.ci95[0],
                'ci_high': result.ci95[1],
                'analytic_estimate': grover_analytic_estimate(oracle_id, r_mean),
                'r_used': r_mean,
                **stats[oracle_id],
            })

        prob, (ci_low, ci_high) = pooled_success(results)
        rows.append({
            'kind': 'pooled',
            'oracle_id': 'pooled',
            'squeezing_db': float(s),
            'shots': sum(len(r.records) for r in results),
            'successes': sum(sum(rec.success for rec in r.records) for r in results),
            'success_prob': prob,
            'ci_low': ci_low,
            'ci_high': ci_high,
            'analytic_estimate': float(np.mean([grover_analytic_estimate(r.oracle_id, r_mean) for r in results])),
            'r_used': r_mean,
        })

        verdict = "ACIMA" if ci_low > CLASSICAL_BOUND else ("ABAIXO" if ci_high < CLASSICAL_BOUND else "INCONCLUSIVO")
        logger.info(f"{'='*70}")
        logger.info(f"   Sucesso agregado a {s} dB: {prob:.3f} IC95 [{ci_low:.3f}, {ci_high:.3f}]")
        logger.info(f"   Limite classico 13/28 = {CLASSICAL_BOUND:.4f}: {verdict}")
        logger.info(f"{'='*70}")

    df = pd.DataFrame(rows)
    df['random_baseline'] = RANDOM_BASELINE
    df['classical_bound'] = CLASSICAL_BOUND
    df.insert(0, 'run_id', manifest.run_id)
    return df, {'grover': df[df['kind'].isin(['oracle', 'pooled'])]}


def cmd_purity(config: Dict, args: argparse.Namespace, out_dir: Path, manifest: RunManifest) -> CommandOutput:
    """
    Pureza decodificada media por profundidade (verificacao de nao decaimento).

    Linhas do resultado (coluna kind): depth, uma por profundidade, e drift
    com |pureza(max) - pureza(min)| contra purity.tolerance.
    """
    pur = config['purity']
    rb = config['rb']
    programs = read_angle_table(Path(config['paths']['angle_table']))

    if args.dry_run:
        rng = np.random.default_rng(config['seed'])
        stats = {
            str(d): _schedule_stats(compile_circuit(random_clifford_circuit(rb['n_qubits'], d, rng), rb['n_qubits']))
            for d in pur['depths']
        }
        manifest.details['schedule_stats'] = stats
        logger.info(f"Dry-run: estatisticas de escala por profundidade: {stats}")
        return pd.DataFrame(), {}

    s = float(pur['squeezing_db'])
    logger.info(f"")
    logger.info(f"[FASE 2/3] Pureza nas profundidades {pur['depths']} a {s} dB")
    logger.info(f"")

    scan_config = RbConfig(
        n_qubits=rb['n_qubits'],
        depths=tuple(pur['depths']),
        sequences_per_depth=pur['sequences_per_depth'],
        shots_per_sequence=pur['shots_per_sequence'],
        squeezing_db=s,
        seed=_derived_seed(config['seed'], 0),
        grid_points=config['grid']['n_points'],
        chi_max=config['svd']['chi_max'],
        estimator=config['decoding']['estimator'],
        clip_threshold=config['decoding']['clip_threshold'],
        min_depth=rb['min_depth'],
        workers=config['workers'],
    )
    scan = run_purity_scan(scan_config, pur['depths'], programs)
    drift = purity_drift(scan)
    passed = drift <= pur['tolerance']

    rows = [
        {'kind': 'depth', 'squeezing_db': s, 'depth': d, 'mean_purity': value}
        for d, value in scan.items()
    ]
    rows.append({
        'kind': 'drift',
        'squeezing_db': s,
        'drift': drift,
        'tolerance': float(pur['tolerance']),
        'passed': int(passed),
    })

    manifest.details['purity'] = {'scan': {str(d): v for d, v in scan.items()}, 'drift': drift, 'passed': passed}

    logger.info(f"{'='*70}")
    for d, value in scan.items():
        logger.info(f"   Profundidade {d:3d}: pureza media {value:.5f}")
    logger.info(f"   |delta pureza| = {drift:.5f} (tolerancia {pur['tolerance']}): {'OK' if passed else 'DECAIMENTO'}")
    if not passed:
        logger.warning(f"   Pureza variou {drift:.5f} entre {min(scan)} e {max(scan)} camadas")
    logger.info(f"{'='*70}")

    df = pd.DataFrame(rows)
    df.insert(0, 'run_id', manifest.run_id)
    return df, {}


def cmd_syndromes(config: Dict, args: argparse.Namespace, out_dir: Path, manifest: RunManifest) -> CommandOutput:
    """Cadeia de gadgets identidade: taxas X/Z e correlacao entre gadgets consecutivos."""
    syn = config['syndromes']
    programs = read_angle_table(Path(config['paths']['angle_table']))

    if args.dry_run:
        schedule = compile_circuit([(GateLabel.I, (0,))] * syn['n_gadgets'], 1)
        manifest.details['schedule_stats'] = _schedule_stats(schedule)
        return pd.DataFrame(), {}

    s = float(syn['squeezing_db'])
    logger.info(f"")
    logger.info(f"[FASE 2/3] {syn['n_gadgets']} gadgets identidade a {s} dB")
    logger.info(f"")

    stats = syndrome_statistics(
        n_gadgets=syn['n_gadgets'],
        squeezing=s,
        seed=config['seed'],
        grid_points=config['grid']['n_points'],
        programs=programs,
        chi_max=config['svd']['chi_max'],
    )
    passed = stats.passes(syn['sigma_limit'], syn['correlation_limit'])

    manifest.details['syndromes'] = {'rate_gap_sigma': stats.rate_gap_sigma, 'passed': passed}

    logger.info(f"{'='*70}")
    logger.info(f"   Taxa X: {stats.x_rate:.4f} +- {stats.x_rate_std:.4f}")
    logger.info(f"   Taxa Z: {stats.z_rate:.4f} +- {stats.z_rate_std:.4f}")
    logger.info(f"   Diferenca X-Z: {stats.rate_gap_sigma:.2f} sigma (limite {syn['sigma_limit']})")
    logger.info(
        f"   Correlacao lag-1: bruta {stats.raw_correlation:+.4f}, bits {stats.bit_correlation:+.4f} "
        f"(limite {syn['correlation_limit']})"
    )
    if not passed:
        logger.warning("   Estatistica de sindromes fora dos limites")
    logger.info(f"{'='*70}")

    return pd.DataFrame([{
        'run_id': manifest.run_id,
        'squeezing_db': s,
        'n_gadgets': stats.n_gadgets,
        'x_rate': stats.x_rate,
        'z_rate': stats.z_rate,
        'x_rate_std': stats.x_rate_std,
        'z_rate_std': stats.z_rate_std,
        'rate_gap_sigma': stats.rate_gap_sigma,
        'raw_correlation': stats.raw_correlation,
        'bit_correlation': stats.bit_correlation,
        'passed': int(passed),
    }]), {}


def cmd_decode_demo(config: Dict, args: argparse.Namespace, out_dir: Path, manifest: RunManifest) -> CommandOutput:
    """Prepara um estado, roda um gadget identidade e mostra sindrome e rho_L."""
    grid = GridSpec(config['grid']['n_points'])
    s = float(args.squeezing[0]) if args.squeezing else float(config['calibration']['squeezing_db'])
    epsilon = epsilon_from_db(s)
    label = GkpLabel(args.label)
    builder = config['states']['builder']

    table_path = Path(config['paths']['angle_table'])
    if table_path.exists():
        programs = read_angle_table(table_path)
    else:
        logger.warning(f"Tabela {table_path} ausente; usando programas analiticos")
        programs = analytic_programs()

    state = FmpsState.product([build_state(label, epsilon, grid, resolve_builder(builder, grid))], grid)
    rng = np.random.default_rng(config['seed'])
    state, syndrome, (m_a, m_b) = execute_single_gadget(
        state, 0, programs[GateLabel.I], get_pair(epsilon, False, grid, builder), rng, _policy(config)
    )
    frame = PauliFrame.identity(1).flip(0, syndrome.x_bit, syndrome.z_bit)
    rho = decode_logical(
        state, frame, config['decoding']['estimator'], config['decoding']['clip_threshold']
    )
    fid = fidelity(rho, dv_product([label]))

    logger.info(f"{'='*70}")
    logger.info(f"   Estado {label.value} a {s} dB, grade {grid.n_points}")
    logger.info(f"   Medidas: m_a={m_a:.6f}  m_b={m_b:.6f}")
    logger.info(f"   Deslocamento decodificado: ({syndrome.raw[0]:.6f}, {syndrome.raw[1]:.6f})")
    logger.info(f"   Sindrome: X={syndrome.x_bit}  Z={syndrome.z_bit}  frame={frame.label()}")
    for line in np.array2string(rho.matrix, precision=4, suppress_small=True).splitlines():
        logger.info(f"   rho_L {line}")
    logger.info(f"   Fidelidade: {fid:.6f}  Pureza: {purity(rho):.6f}")
    logger.info(f"{'='*70}")

    return pd.DataFrame([{
        'run_id': manifest.run_id,
        'label': label.value,
        'squeezing_db': s,
        'm_a': m_a,
        'm_b': m_b,
        's1': syndrome.raw[0],
        's2': syndrome.raw[1],
        'x_bit': syndrome.x_bit,
        'z_bit': syndrome.z_bit,
        'fidelity': fid,
        'purity': purity(rho),
    }]), {}


COMMANDS = {
    'calibrate': cmd_calibrate,
    'rb': cmd_rb,
    'grover': cmd_grover,
    'purity': cmd_purity,
    'syndromes': cmd_syndromes,
    'decode-demo': cmd_decode_demo,
}


# ==============================================================================
# CLI (Command Line Interface)
# ==============================================================================

def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """
    Argumentos de linha de comando.

    Returns:
        argparse.Namespace com argumentos parseados
    """
    parser = argparse.ArgumentParser(
        description='Simulador de rede quad-rail (QRL) com estados GKP em FMPS',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Exemplos de uso:
  # Calibra a tabela de angulos a 14 dB
  python -m src.python.orchestrator calibrate --out output/calibracao

  # RB em dois valores de squeezing, com relatorio PDF
  python -m src.python.orchestrator rb --squeezing 10.5 --squeezing 12 --report

  # Grover no oraculo a, preset reduzido
  python -m src.python.orchestrator grover --oracle a --grid 256 --chi-max 32 --shots 100

  # Pureza em 7 e 16 camadas e cadeia de 1000 gadgets identidade a 10 dB
  python -m src.python.orchestrator purity --squeezing 10
  python -m src.python.orchestrator syndromes --squeezing 10

  # Apenas estatisticas das escalas compiladas
  python -m src.python.orchestrator grover --dry-run

Workers: defina QRL_WORKERS (ou a chave workers no settings.yaml).
        """
    )

    parser.add_argument('command', choices=sorted(COMMANDS), help='Subcomando a executar')

    parser.add_argument('--config', type=Path, default=DEFAULT_CONFIG_PATH,
                        help='Arquivo de configuracao YAML (default: config/settings.yaml)')
    parser.add_argument('--seed', type=int, help='Semente global (sobrepoe o settings.yaml)')
    parser.add_argument('--out', type=Path,
                        help='Diretorio de saida. Se omitido, usa paths.out_dir/<comando>_<timestamp>')
    parser.add_argument('--grid', type=int, choices=GRID_CHOICES, help='Pontos da grade por modo')
    parser.add_argument('--chi-max', dest='chi_max', type=int, help='Dimensao maxima de bond')
    parser.add_argument('--dry-run', dest='dry_run', action='store_true',
                        help='Grava apenas manifesto e estatisticas das escalas (sem simulacao)')
    parser.add_argument('--debug', action='store_true', help='Habilita modo debug (logs mais verbosos)')
    parser.add_argument('--report', action='store_true', help='Gera report.pdf no diretorio de saida')
    parser.add_argument('--shots', type=int, help='Tiros (Grover, RB por sequencia, calibracao por entrada)')
    parser.add_argument('--squeezing', type=float, action='append',
                        help='Squeezing em dB (repetivel)')
    parser.add_argument('--oracle', action='append', choices=sorted(GROVER_SOLUTIONS),
                        help='Oraculo de Grover (repetivel)')
    parser.add_argument('--label', default=GkpLabel.PLUS.value,
                        choices=[lab.value for lab in GkpLabel if lab is not GkpLabel.QUNAUGHT],
                        help='Estado de entrada do decode-demo (default: plus_L)')

    return parser.parse_args(argv)


def resolve_out_dir(config: Dict, args: argparse.Namespace) -> Path:
    """
    Diretorio de saida da execucao.

    Raises:
        ConfigError: Diretorio ja contem um manifesto (manifestos sao imutaveis)
    """
    if args.out is not None:
        out_dir = Path(args.out)
    else:
        stamp = datetime.now().strftime('%Y%m%d-%H%M%S')
        out_dir = Path(config['paths']['out_dir']) / f"{args.command}_{stamp}"

    if (out_dir / MANIFEST_NAME).exists():
        raise ConfigError([f"{out_dir} ja contem {MANIFEST_NAME}; escolha outro --out"])
    return out_dir


# ==============================================================================
# MAIN
# ==============================================================================

def main(argv: Optional[List[str]] = None) -> int:
    """
    Orquestracao principal.

    Returns:
        int: Exit code (0 sucesso, 2 calibracao, 3 pre-requisito ausente,
        4 configuracao, 130 interrompido, 1 outros erros)
    """
    args = parse_args(argv)
    exit_code = EXIT_OK
    start_time = time.perf_counter()

    # Ajusta nivel de log se --debug
    if args.debug:
        logger.setLevel(logging.DEBUG)
        logger.debug("Modo DEBUG ativado")
    else:
        logger.setLevel(logging.INFO)

    try:
        # ===== FASE 1: Configuracao =====

        logger.info(f"")
        logger.info(f"[FASE 1/3] Carregando configuracao: {args.config}")
        config = validate_config(apply_overrides(load_config(args.config), args))
        out_dir = resolve_out_dir(config, args)
        log_path = setup_file_logging(config['paths']['logs_dir'])

        # ===== Log Inicial =====

        started = datetime.now()
        logger.info(f"")
        logger.info(f"{'#'*70}")
        logger.info(f"INICIO DA EXECUCAO: {args.command}")
        logger.info(f"{'#'*70}")
        logger.info(f"Timestamp: {started.isoformat()}")
        logger.info(f"PID: {os.getpid()}")
        logger.info(f"Saida: {out_dir}")
        logger.info(f"Log: {log_path}")
        logger.info(f"Grade: {config['grid']['n_points']} pontos, chi_max={config['svd']['chi_max']}")
        logger.info(f"Semente: {config['seed']}")
        logger.info(f"Flags: dry-run={args.dry_run}, report={args.report}")
        logger.info(f"{'#'*70}")

        with RunLock(out_dir):
            manifest = RunManifest(
                command=args.command,
                config=config,
                code_version=code_version(),
                seed=config['seed'],
                run_id=f"{args.command}-{started.strftime('%Y%m%dT%H%M%S')}-{config['seed']}",
                started_at=started.isoformat(),
            )
            manifest.details['dry_run'] = bool(args.dry_run)

            df, report_data = COMMANDS[args.command](config, args, out_dir, manifest)

            if len(df) > 0:
                manifest.outputs.extend(str(p) for p in write_results(df, out_dir))

            if args.report and report_data and not args.dry_run:
                # matplotlib so e carregado quando o relatorio e pedido
                from .report_pdf import generate_report

                summary = {
                    'command': args.command,
                    'grade': config['grid']['n_points'],
                    'chi_max': config['svd']['chi_max'],
                    'semente': config['seed'],
                    'run_id': manifest.run_id,
                }
                pdf_path = generate_report(out_dir, summary, **report_data)
                manifest.outputs.append(str(pdf_path))

            manifest.finished_at = datetime.now().isoformat()
            manifest_path = manifest.write(out_dir)
            logger.info(f"Manifesto: {manifest_path}")

        # ===== Sucesso! =====

        duration = time.perf_counter() - start_time
        logger.info(f"")
        logger.info(f"{'#'*70}")
        logger.info("EXECUCAO CONCLUIDA COM SUCESSO")
        logger.info(f"{'#'*70}")
        logger.info(f"Timestamp: {datetime.now().isoformat()}")
        logger.info(f"Duracao: {duration:.1f}s")
        logger.info(f"{'#'*70}")
        logger.info(f"")

    except KeyboardInterrupt:
        logger.warning(f"\n Execucao interrompida pelo usuario (Ctrl+C)")
        exit_code = EXIT_INTERRUPTED  # Padrao Unix para SIGINT

    except CalibrationError as e:
        exit_code = EXIT_CALIBRATION
        logger.error(f"{'!'*70}")
        logger.error(f" FALHA NA CALIBRACAO: {e}")
        if e.best_program is not None:
            logger.error(f"  Melhor candidato: {e.best_program.angles} (fidelidade {e.best_fidelity:.5f})")
        logger.error(f"{'!'*70}")

    except MissingPrerequisiteError as e:
        exit_code = EXIT_MISSING_PREREQUISITE
        logger.error(f" PRE-REQUISITO AUSENTE: {e}")

    except ConfigError as e:
        exit_code = EXIT_CONFIG
        logger.error(f" {e}")

    except Exception as e:
        exit_code = EXIT_FAILURE

        logger.error(f"")
        logger.error(f"{'!'*70}")
        logger.error(f" ERRO FATAL")
        logger.error(f"{'!'*70}")
        logger.exception(f"{e}")
        logger.error(f"{'!'*70}")
        logger.error(f"")

    return exit_code


# ==============================================================================
# ENTRY POINT
# ==============================================================================

if __name__ == '__main__':
    sys.exit(main())
