"""
Experimentos: randomized benchmarking, Grover e estatistica de sindromes.

Este modulo:
- Gera circuitos Clifford aleatorios com regra de empacotamento fixa
- Roda campanhas de RB (fidelidade ou sobrevivencia) e ajusta o decaimento
- Mede a variacao da pureza decodificada com a profundidade
- Monta o circuito de Grover com os tres oraculos de fase e o CCZ decomposto
- Amostra tiros de Grover com leitura por homodina e intervalo de Wilson
- Distribui tarefas num pool de processos com sementes derivadas por tarefa
"""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .analytics import RbFit, RbPoint, fit_rb, grover_success_estimate, wilson_interval
from .fmps import GridSpec, SvdPolicy
from .logical import DEFAULT_CLIP_THRESHOLD, dv_simulate, fidelity, purity
from .qrl import (
    GateLabel,
    Program,
    analytic_programs,
    compile_circuit,
    decode_logical,
    readout_bits,
    run_schedule,
)

logger = logging.getLogger(__name__)

Circuit = List[Tuple[GateLabel, Tuple[int, ...]]]

WORKERS_ENV = "QRL_WORKERS"

RB_SINGLE = (GateLabel.I, GateLabel.H, GateLabel.P, GateLabel.Pdg)
RB_PAIR = (GateLabel.CZ, GateLabel.SWAP)
PAIR_PROBABILITY = 1 / 3

GROVER_SOLUTIONS: Dict[str, frozenset] = {
    "a": frozenset({"011", "110"}),
    "b": frozenset({"000", "100"}),
    "c": frozenset({"010", "111"}),
}

PURITY_TOLERANCE = 0.02
SYNDROME_SIGMA_LIMIT = 3.0
SYNDROME_CORRELATION_LIMIT = 0.1

INVERSES = {GateLabel.P: GateLabel.Pdg, GateLabel.Pdg: GateLabel.P, GateLabel.T: GateLabel.Tdg, GateLabel.Tdg: GateLabel.T}


# ==============================================================================
# CONFIGURACOES E REGISTROS
# ==============================================================================

@dataclass
class RbConfig:
    n_qubits: int = 2
    depths: Tuple[int, ...] = (7, 9, 12, 16)
    sequences_per_depth: int = 50
    shots_per_sequence: int = 4
    squeezing_db: float = 10.5
    seed: int = 0
    grid_points: int = 512
    chi_max: int = 64
    estimator: str = "binned"
    clip_threshold: float = DEFAULT_CLIP_THRESHOLD
    metric: str = "fidelity"
    min_depth: int = 7
    workers: int = 1

    def __post_init__(self):
        self.depths = tuple(int(d) for d in self.depths)
        if list(self.depths) != sorted(self.depths):
            raise ValueError(f"profundidades devem estar em ordem crescente: {self.depths}")
        if any(d < self.min_depth for d in self.depths):
            raise ValueError(f"profundidades abaixo do minimo {self.min_depth}: {self.depths}")
        if self.metric not in ("fidelity", "survival"):
            raise ValueError(f"metrica desconhecida: {self.metric}")


@dataclass
class GroverConfig:
    oracle_id: str = "a"
    squeezing_db: float = 12.0
    shots: int = 200
    seed: int = 0
    grid_points: int = 512
    chi_max: int = 64
    workers: int = 1

    def __post_init__(self):
        if self.oracle_id not in GROVER_SOLUTIONS:
            raise ValueError(f"oraculo desconhecido: {self.oracle_id} (use {sorted(GROVER_SOLUTIONS)})")


@dataclass(frozen=True)
class RbSample:
    """Resultado de uma sequencia aleatoria (media sobre os tiros)."""

    depth: int
    sequence: int
    fidelity: float
    purity: float


@dataclass(frozen=True)
class ShotRecord:
    bitstring: str
    success: bool
    n_gadgets: int
    x_syndromes: int
    z_syndromes: int
    truncation_weight: float
    domain_loss: float


@dataclass(frozen=True)
class SyndromeStats:
    n_gadgets: int
    x_rate: float
    z_rate: float
    x_rate_std: float
    z_rate_std: float
    raw_correlation: float
    bit_correlation: float

    @property
    def rate_gap_sigma(self) -> float:
        scale = np.hypot(self.x_rate_std, self.z_rate_std)
        return float(abs(self.x_rate - self.z_rate) / scale) if scale > 0 else 0.0

    def passes(
        self,
        sigma_limit: float = SYNDROME_SIGMA_LIMIT,
        correlation_limit: float = SYNDROME_CORRELATION_LIMIT,
    ) -> bool:
        """Taxas X/Z compativeis e sem correlacao entre gadgets consecutivos."""
        return (
            self.rate_gap_sigma <= sigma_limit
            and abs(self.raw_correlation) <= correlation_limit
            and abs(self.bit_correlation) <= correlation_limit
        )


@dataclass
class GroverResult:
    oracle_id: str
    squeezing_db: float
    success_prob: float
    ci95: Tuple[float, float]
    records: List[ShotRecord] = field(default_factory=list)


# ==============================================================================
# POOL DE TAREFAS
# ==============================================================================

def resolve_workers(configured: Optional[int] = None) -> int:
    """Numero de workers: QRL_WORKERS, senao valor configurado, senao 1."""
    env = os.getenv(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            logger.warning(f"{WORKERS_ENV}={env!r} invalido; usando {configured or 1}")
    return max(1, int(configured or 1))


def map_tasks(fn: Callable, tasks: Sequence, workers: int = 1) -> List:
    """Executa as tarefas preservando a ordem (serial quando workers <= 1)."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def spawn_seeds(seed: int, n: int) -> List[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(n)


# ==============================================================================
# CIRCUITOS
# ==============================================================================

def random_clifford_circuit(n_qubits: int, m: int, rng: np.random.Generator) -> Circuit:
    """
    m camadas Clifford aleatorias sem Paulis.

    Em cada camada, cada par adjacente disjunto recebe CZ ou SWAP com
    probabilidade 1/3; os fios restantes recebem I, H, P ou Pdg uniformemente.
    Com N > 2 os pares alternam o deslocamento (0 nas camadas pares, 1 nas impares).
    """
    if m < 1:
        raise ValueError(f"profundidade deve ser >= 1: {m}")

    circuit: Circuit = []
    for layer in range(m):
        offset = layer % 2 if n_qubits > 2 else 0
        covered = set()
        for start in range(offset, n_qubits - 1, 2):
            if rng.random() < PAIR_PROBABILITY:
                gate = RB_PAIR[int(rng.integers(len(RB_PAIR)))]
                circuit.append((gate, (start, start + 1)))
                covered.update((start, start + 1))
        for w in range(n_qubits):
            if w not in covered:
                circuit.append((RB_SINGLE[int(rng.integers(len(RB_SINGLE)))], (w,)))
    return circuit


def inverse_circuit(circuit: Circuit) -> Circuit:
    return [(INVERSES.get(GateLabel(g), GateLabel(g)), tuple(w)) for g, w in reversed(circuit)]


def ccz_block() -> Circuit:
    """CCZ em Clifford + T com vizinhos proximos (7 T/Tdg, dois SWAPs)."""
    T, Tdg, CX, SWAP = GateLabel.T, GateLabel.Tdg, GateLabel.CX, GateLabel.SWAP
    return [
        (CX, (2, 1)),
        (Tdg, (1,)),
        (CX, (0, 1)),
        (T, (1,)),
        (CX, (2, 1)),
        (Tdg, (1,)),
        (CX, (0, 1)),
        (T, (1,)),
        (T, (2,)),
        (SWAP, (1, 2)),
        (CX, (0, 1)),
        (T, (0,)),
        (Tdg, (1,)),
        (CX, (0, 1)),
        (SWAP, (1, 2)),
    ]


def oracle_circuit(oracle_id: str) -> Circuit:
    """Oraculos de fase: a) |011>,|110>  b) |000>,|100>  c) |010>,|111>."""
    CZ, Z = GateLabel.CZ, GateLabel.Z
    oracles = {
        "a": [(CZ, (0, 1)), (CZ, (1, 2))],
        "b": [(Z, (1,)), (Z, (2,)), (CZ, (1, 2))],
        "c": [(Z, (1,)), (CZ, (0, 1)), (CZ, (1, 2))],
    }
    if oracle_id not in oracles:
        raise ValueError(f"oraculo desconhecido: {oracle_id}")
    return list(oracles[oracle_id])


def grover_circuit(oracle_id: str) -> Circuit:
    """Uma iteracao de Grover em 3 qubits: H, oraculo, difusao (H, X, CCZ, X, H)."""
    layer = lambda gate: [(gate, (w,)) for w in range(3)]  # noqa: E731
    return (
        layer(GateLabel.H)
        + oracle_circuit(oracle_id)
        + layer(GateLabel.H)
        + layer(GateLabel.X)
        + ccz_block()
        + layer(GateLabel.X)
        + layer(GateLabel.H)
    )


# ==============================================================================
# RANDOMIZED BENCHMARKING
# ==============================================================================

def _rb_task(task: dict) -> RbSample:
    rng = np.random.default_rng(task["seed"])
    n = task["n_qubits"]
    circuit = random_clifford_circuit(n, task["depth"], rng)
    grid = GridSpec(task["grid_points"])
    policy = SvdPolicy(chi_max=task["chi_max"])

    if task["metric"] == "survival":
        full = circuit + inverse_circuit(circuit)
        schedule = compile_circuit(full, n)
    else:
        schedule = compile_circuit(circuit, n)
        target = dv_simulate(circuit, n)

    fids, purs = [], []
    for _ in range(task["shots"]):
        state, frame, _log = run_schedule(
            schedule, None, task["squeezing_db"], rng, task["programs"], grid, policy
        )
        if task["metric"] == "survival":
            bits = readout_bits(state, frame, rng)
            fids.append(float(not any(bits)))
            purs.append(np.nan)
        else:
            rho = decode_logical(state, frame, task["estimator"], task["clip_threshold"])
            fids.append(fidelity(rho, target))
            purs.append(purity(rho))

    return RbSample(
        depth=task["depth"],
        sequence=task["sequence"],
        fidelity=float(np.mean(fids)),
        purity=float(np.mean(purs)) if task["metric"] == "fidelity" else float("nan"),
    )


def rb_tasks(config: RbConfig, programs: Mapping[GateLabel, Program]) -> List[dict]:
    n_tasks = len(config.depths) * config.sequences_per_depth
    seeds = spawn_seeds(config.seed, n_tasks)
    tasks = []
    for i, depth in enumerate(config.depths):
        for j in range(config.sequences_per_depth):
            tasks.append(
                {
                    "seed": seeds[i * config.sequences_per_depth + j],
                    "n_qubits": config.n_qubits,
                    "depth": depth,
                    "sequence": j,
                    "shots": config.shots_per_sequence,
                    "squeezing_db": config.squeezing_db,
                    "grid_points": config.grid_points,
                    "chi_max": config.chi_max,
                    "estimator": config.estimator,
                    "clip_threshold": config.clip_threshold,
                    "metric": config.metric,
                    "programs": dict(programs),
                }
            )
    return tasks


def aggregate_points(samples: Sequence[RbSample]) -> List[RbPoint]:
    """Media e erro padrao por profundidade (reducao independente da ordem)."""
    by_depth: Dict[int, List[float]] = {}
    for s in samples:
        by_depth.setdefault(s.depth, []).append(s.fidelity)
    points = []
    for depth in sorted(by_depth):
        values = np.array(by_depth[depth])
        stderr = float(values.std(ddof=1) / np.sqrt(values.size)) if values.size > 1 else 0.0
        points.append(RbPoint(depth, float(np.clip(values.mean(), 0.0, 1.0)), stderr, int(values.size)))
    return points


def run_rb(
    config: RbConfig,
    programs: Optional[Mapping[GateLabel, Program]] = None,
) -> Tuple[List[RbPoint], RbFit, List[RbSample]]:
    """
    Campanha de RB: para cada profundidade e sequencia compila, executa,
    decodifica e compara com o oraculo DV; ajusta com B = 2^-N.

    Returns:
        Tupla (pontos, ajuste, amostras por sequencia)
    """
    programs = programs or analytic_programs()
    tasks = rb_tasks(config, programs)
    logger.info(
        f"RB: N={config.n_qubits}, s={config.squeezing_db} dB, profundidades {list(config.depths)}, "
        f"{config.sequences_per_depth} sequencias x {config.shots_per_sequence} tiros ({len(tasks)} tarefas)"
    )
    samples = map_tasks(_rb_task, tasks, resolve_workers(config.workers))
    points = aggregate_points(samples)
    fit = fit_rb(points, config.n_qubits, min_depth=config.min_depth)
    logger.info(f"RB ajustado: p={fit.p:.5f}, r={fit.r:.5f}, A={fit.A:.4f}{' [SINALIZADO]' if fit.flagged else ''}")
    return points, fit, samples


def run_purity_scan(
    config: RbConfig,
    depths: Sequence[int] = (7, 16),
    programs: Optional[Mapping[GateLabel, Program]] = None,
) -> Dict[int, float]:
    """Pureza media decodificada por profundidade (verificacao de nao decaimento)."""
    scan = RbConfig(**{**config.__dict__, "depths": tuple(depths), "metric": "fidelity"})
    samples = map_tasks(_rb_task, rb_tasks(scan, programs or analytic_programs()), resolve_workers(config.workers))
    out: Dict[int, List[float]] = {}
    for s in samples:
        out.setdefault(s.depth, []).append(s.purity)
    return {d: float(np.mean(v)) for d, v in sorted(out.items())}


def purity_drift(scan: Mapping[int, float]) -> float:
    """|pureza na maior profundidade - pureza na menor|."""
    if len(scan) < 2:
        raise ValueError(f"variacao de pureza exige >= 2 profundidades: {sorted(scan)}")
    depths = sorted(scan)
    return float(abs(scan[depths[-1]] - scan[depths[0]]))


# ==============================================================================
# GROVER
# ==============================================================================

def _grover_task(task: dict) -> ShotRecord:
    rng = np.random.default_rng(task["seed"])
    schedule = task["schedule"]
    state, frame, log = run_schedule(
        schedule,
        None,
        task["squeezing_db"],
        rng,
        task["programs"],
        GridSpec(task["grid_points"]),
        SvdPolicy(chi_max=task["chi_max"]),
    )
    truncation, loss = state.truncation_weight, state.domain_loss
    bits = "".join(str(b) for b in readout_bits(state, frame, rng))
    return ShotRecord(
        bitstring=bits,
        success=bits in GROVER_SOLUTIONS[task["oracle_id"]],
        n_gadgets=len(log),
        x_syndromes=sum(rec.syndrome.x_bit for rec in log),
        z_syndromes=sum(rec.syndrome.z_bit for rec in log),
        truncation_weight=truncation,
        domain_loss=loss,
    )


def run_grover(
    config: GroverConfig,
    programs: Optional[Mapping[GateLabel, Program]] = None,
) -> GroverResult:
    """
    Tiros de Grover: compila, executa, le por homodina em q com binning de
    paridade e correcao do frame; sucesso = bitstring entre as solucoes.
    """
    schedule = compile_circuit(grover_circuit(config.oracle_id), 3)
    programs = dict(programs or analytic_programs())
    tasks = [
        {
            "seed": seed,
            "schedule": schedule,
            "oracle_id": config.oracle_id,
            "squeezing_db": config.squeezing_db,
            "grid_points": config.grid_points,
            "chi_max": config.chi_max,
            "programs": programs,
        }
        for seed in spawn_seeds(config.seed, config.shots)
    ]
    logger.info(
        f"Grover oraculo {config.oracle_id}: s={config.squeezing_db} dB, {config.shots} tiros, "
        f"profundidade {schedule.depth}, {schedule.bell_pair_count} pares ({schedule.magic_count} magicos)"
    )
    records = map_tasks(_grover_task, tasks, resolve_workers(config.workers))
    hits = sum(r.success for r in records)
    result = GroverResult(
        oracle_id=config.oracle_id,
        squeezing_db=config.squeezing_db,
        success_prob=hits / config.shots,
        ci95=wilson_interval(hits, config.shots),
        records=records,
    )
    logger.info(
        f"Grover oraculo {config.oracle_id}: sucesso {result.success_prob:.3f} "
        f"IC95 [{result.ci95[0]:.3f}, {result.ci95[1]:.3f}]"
    )
    logger.info(
        f"  Sindromes por tiro: X={np.mean([r.x_syndromes for r in records]):.2f} "
        f"Z={np.mean([r.z_syndromes for r in records]):.2f}; "
        f"peso truncado max {max(r.truncation_weight for r in records):.2e}, "
        f"perda de dominio max {max(r.domain_loss for r in records):.2e}"
    )
    return result


def ideal_success(oracle_id: str) -> float:
    """Probabilidade de sucesso sem ruido (oraculo DV)."""
    probs = dv_simulate(grover_circuit(oracle_id), 3).probabilities()
    return float(sum(probs[int(bits, 2)] for bits in GROVER_SOLUTIONS[oracle_id]))


def grover_analytic_estimate(oracle_id: str, r: float) -> float:
    """Sucesso previsto pelo modelo despolarizante com a profundidade compilada."""
    schedule = compile_circuit(grover_circuit(oracle_id), 3)
    return grover_success_estimate(
        r, 3, schedule.depth, len(GROVER_SOLUTIONS[oracle_id]), ideal_success(oracle_id)
    )


def pooled_success(results: Sequence[GroverResult]) -> Tuple[float, Tuple[float, float]]:
    hits = sum(sum(r.success for r in res.records) for res in results)
    shots = sum(len(res.records) for res in results)
    return hits / shots, wilson_interval(hits, shots)


# ==============================================================================
# SINDROMES
# ==============================================================================

def _lag1_correlation(values: np.ndarray) -> float:
    if values.size < 3 or np.std(values[:-1]) == 0 or np.std(values[1:]) == 0:
        return 0.0
    return float(np.corrcoef(values[:-1], values[1:])[0, 1])


def syndrome_statistics(
    n_gadgets: int = 1000,
    squeezing: float = 10.0,
    seed: int = 0,
    grid_points: int = 256,
    programs: Optional[Mapping[GateLabel, Program]] = None,
    chi_max: int = 64,
) -> SyndromeStats:
    """Taxas de sindrome X/Z e correlacao lag-1 numa cadeia de gadgets identidade."""
    schedule = compile_circuit([(GateLabel.I, (0,))] * n_gadgets, 1)
    rng = np.random.default_rng(seed)
    _state, _frame, log = run_schedule(
        schedule,
        None,
        squeezing,
        rng,
        programs or analytic_programs(),
        GridSpec(grid_points),
        SvdPolicy(chi_max=chi_max),
    )

    xs = np.array([rec.syndrome.x_bit for rec in log], dtype=float)
    zs = np.array([rec.syndrome.z_bit for rec in log], dtype=float)
    raw = np.array([rec.syndrome.raw[0] for rec in log])
    residual = raw - np.sqrt(np.pi) * np.rint(raw / np.sqrt(np.pi))

    n = len(log)
    x_rate, z_rate = float(xs.mean()), float(zs.mean())
    return SyndromeStats(
        n_gadgets=n,
        x_rate=x_rate,
        z_rate=z_rate,
        x_rate_std=float(np.sqrt(max(x_rate * (1 - x_rate), 1.0 / n) / n)),
        z_rate_std=float(np.sqrt(max(z_rate * (1 - z_rate), 1.0 / n) / n)),
        raw_correlation=_lag1_correlation(residual),
        bit_correlation=_lag1_correlation(xs),
    )
