"""
Modelo de computacao QRL (quad-rail lattice) sobre o motor FMPS.

Este modulo coordena:
- Execucao de gadgets de teleportacao de um e dois modos
- Programacao por angulos de homodina e decodificacao do deslocamento
- Rastreamento do frame de Pauli (incluindo a regra T/T-dagger)
- Injecao de T com par de Bell magico e slot de correcao condicional
- Calibracao da tabela de angulos contra o oraculo DV
- Compilacao de circuitos logicos em escalas de gadgets

Convencoes:
- Fio logico w ocupa o modo w da cadeia entre gadgets
- A saida de um gadget e P_syn U |psi>: a sindrome fica depois da porta
- Angulos de quadratura medidos a partir de q
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .fmps import (
    FmpsState,
    GridSpec,
    SvdPolicy,
    apply_beamsplitter,
    apply_rotation,
    insert_two_mode,
    measure_homodyne,
)
from .logical import (
    DEFAULT_CLIP_THRESHOLD,
    GATE_MATRICES,
    apply_pauli_frame,
    dv_product,
    dv_simulate,
    fidelity,
    logical_dm,
)
from .states import BellPairMps, GkpLabel, bell_pair, build_state, epsilon_from_db

logger = logging.getLogger(__name__)

SQRT_PI = math.sqrt(math.pi)
ATAN2 = math.atan(2.0)

ANGLE_TABLE_VERSION = 1


class CalibrationError(RuntimeError):
    """Nenhum candidato atingiu o limiar de fidelidade."""

    def __init__(self, message: str, best_program=None, best_fidelity: float = 0.0):
        super().__init__(message)
        self.best_program = best_program
        self.best_fidelity = best_fidelity


class MissingPrerequisiteError(RuntimeError):
    """Artefato obrigatorio ausente (ex.: tabela de angulos)."""


# ==============================================================================
# TIPOS
# ==============================================================================

class GateLabel(str, Enum):
    I = "I"
    H = "H"
    P = "P"
    Pdg = "Pdg"
    CZ = "CZ"
    SWAP = "SWAP"
    CX = "CX"
    T = "T"
    Tdg = "Tdg"
    X = "X"
    Y = "Y"
    Z = "Z"

    @property
    def arity(self) -> int:
        return 2 if self in TWO_MODE_GATES else 1


SINGLE_MODE_GATES = frozenset({GateLabel.I, GateLabel.H, GateLabel.P, GateLabel.Pdg})
TWO_MODE_GATES = frozenset({GateLabel.CZ, GateLabel.SWAP, GateLabel.CX})
MAGIC_GATES = frozenset({GateLabel.T, GateLabel.Tdg})
FRAME_GATES = frozenset({GateLabel.X, GateLabel.Y, GateLabel.Z})

# Portas com programa proprio na tabela de angulos (CX usa o programa de CZ)
CALIBRATED_GATES = (
    GateLabel.I,
    GateLabel.H,
    GateLabel.P,
    GateLabel.Pdg,
    GateLabel.CZ,
    GateLabel.SWAP,
)


@dataclass(frozen=True)
class AngleProgram:
    """Par de angulos (theta_a, theta_b) de um gadget de um modo."""

    theta_a: float
    theta_b: float

    def __post_init__(self):
        if not (math.isfinite(self.theta_a) and math.isfinite(self.theta_b)):
            raise ValueError(f"angulos nao finitos: ({self.theta_a}, {self.theta_b})")
        if abs(math.sin(self.theta_a - self.theta_b)) < 1e-12:
            raise ValueError(
                f"undecodable gadget: sin(theta_a - theta_b) = 0 para ({self.theta_a}, {self.theta_b})"
            )

    @property
    def angles(self) -> Tuple[float, ...]:
        return (self.theta_a, self.theta_b)

    @property
    def noise_gain(self) -> float:
        """Norma de Frobenius do mapa (m_a, m_b) -> s: 2 / |sin(theta_a - theta_b)|."""
        return 2.0 / abs(math.sin(self.theta_a - self.theta_b))


@dataclass(frozen=True)
class TwoModeProgram:
    """Programas dos canais desacoplados x+ e x- do gadget de dois modos."""

    plus: AngleProgram
    minus: AngleProgram

    @property
    def angles(self) -> Tuple[float, ...]:
        return self.plus.angles + self.minus.angles

    @property
    def noise_gain(self) -> float:
        return self.plus.noise_gain + self.minus.noise_gain


Program = Union[AngleProgram, TwoModeProgram]


@dataclass(frozen=True)
class PauliFrame:
    """Pauli acumulado rastreado em software (fases ignoradas)."""

    x_bits: Tuple[int, ...]
    z_bits: Tuple[int, ...]

    def __post_init__(self):
        if len(self.x_bits) != len(self.z_bits):
            raise ValueError("x_bits e z_bits com tamanhos diferentes")

    @classmethod
    def identity(cls, n_qubits: int) -> "PauliFrame":
        return cls((0,) * n_qubits, (0,) * n_qubits)

    @property
    def n_qubits(self) -> int:
        return len(self.x_bits)

    def is_identity(self) -> bool:
        return not any(self.x_bits) and not any(self.z_bits)

    def compose(self, other: "PauliFrame") -> "PauliFrame":
        return PauliFrame(
            tuple(a ^ b for a, b in zip(self.x_bits, other.x_bits)),
            tuple(a ^ b for a, b in zip(self.z_bits, other.z_bits)),
        )

    def with_qubit(self, qubit: int, x_bit: int, z_bit: int) -> "PauliFrame":
        xs, zs = list(self.x_bits), list(self.z_bits)
        xs[qubit], zs[qubit] = int(x_bit), int(z_bit)
        return PauliFrame(tuple(xs), tuple(zs))

    def flip(self, qubit: int, x_bit: int = 0, z_bit: int = 0) -> "PauliFrame":
        return self.with_qubit(qubit, self.x_bits[qubit] ^ int(x_bit), self.z_bits[qubit] ^ int(z_bit))

    def label(self) -> str:
        chars = {(0, 0): "I", (1, 0): "X", (1, 1): "Y", (0, 1): "Z"}
        return "".join(chars[(x, z)] for x, z in zip(self.x_bits, self.z_bits))


@dataclass(frozen=True)
class Syndrome:
    """Sindromes X e Z de um modo; raw = deslocamento decodificado (s1, s2)."""

    x_bit: int
    z_bit: int
    raw: Tuple[float, float]

    @classmethod
    def from_displacement(cls, raw: Tuple[float, float]) -> "Syndrome":
        s1, s2 = float(raw[0]), float(raw[1])
        return cls(syndrome_bits(s1), syndrome_bits(s2), (s1, s2))

    def swapped(self) -> "Syndrome":
        """Sindrome conjugada por H (troca X e Z)."""
        return Syndrome(self.z_bit, self.x_bit, (self.raw[1], self.raw[0]))


@dataclass(frozen=True)
class GadgetAssignment:
    gate: GateLabel
    wires: Tuple[int, ...]


@dataclass(frozen=True)
class QrlLayer:
    """Camada da escala: kind="gate" (gadgets em todos os fios) ou "slot" (correcao apos T)."""

    index: int
    kind: str
    assignments: Tuple[GadgetAssignment, ...]
    pre_paulis: Tuple[Tuple[GateLabel, int], ...] = ()


@dataclass(frozen=True)
class QrlSchedule:
    n_qubits: int
    layers: Tuple[QrlLayer, ...]
    final_paulis: Tuple[Tuple[GateLabel, int], ...]
    depth: int
    bell_pair_count: int
    magic_count: int
    slot_count: int

    @property
    def physical_modes(self) -> int:
        return 2 * self.bell_pair_count

    def gate_layers(self) -> List[QrlLayer]:
        return [layer for layer in self.layers if layer.kind == "gate"]


@dataclass(frozen=True)
class SyndromeRecord:
    layer: int
    wire: int
    gate: str
    outcomes: Tuple[float, ...]
    syndrome: Syndrome


# ==============================================================================
# DECODIFICACAO E FRAME
# ==============================================================================

def decode_displacement(m_a: float, m_b: float, theta_a: float, theta_b: float) -> Tuple[float, float]:
    """
    mu = i (m_a e^{i theta_b} + m_b e^{i theta_a}) / sin(theta_a - theta_b);
    s = (sqrt(2) Re mu, sqrt(2) Im mu).

    Raises:
        ValueError: sin(theta_a - theta_b) = 0 (gadget indecodificavel)
    """
    denom = math.sin(theta_a - theta_b)
    if abs(denom) < 1e-12:
        raise ValueError(f"undecodable gadget: angulos ({theta_a}, {theta_b})")
    mu = 1j * (m_a * np.exp(1j * theta_b) + m_b * np.exp(1j * theta_a)) / denom
    return math.sqrt(2) * float(mu.real), math.sqrt(2) * float(mu.imag)


def syndrome_bits(s: float) -> int:
    """n(s) = round(s / sqrt(pi)) mod 2."""
    if not math.isfinite(s):
        raise ValueError(f"deslocamento nao finito: {s}")
    return int(np.rint(s / SQRT_PI)) % 2


def _check_wires(gate: GateLabel, wires: Sequence[int], n_qubits: int) -> Tuple[int, ...]:
    wires = tuple(int(w) for w in wires)
    if len(wires) != gate.arity:
        raise ValueError(f"porta {gate.value} exige {gate.arity} fio(s), recebeu {len(wires)}")
    if any(not 0 <= w < n_qubits for w in wires):
        raise ValueError(f"fios {wires} fora do registrador de {n_qubits} qubits")
    if len(set(wires)) != len(wires):
        raise ValueError(f"fios repetidos: {wires}")
    return wires


def frame_update_clifford(frame: PauliFrame, gate, wires: Sequence[int]) -> PauliFrame:
    """
    Conjuga o frame pela porta: F -> C F C^dagger (fases ignoradas).

    Regras: H troca x/z; P e Pdg: z ^= x; CZ: z_i ^= x_j, z_j ^= x_i;
    SWAP troca os pares; CX(c, t): x_t ^= x_c, z_c ^= z_t; X/Y/Z entram direto.

    Raises:
        ValueError: Aridade errada ou porta nao Clifford
    """
    gate = GateLabel(gate)
    if gate in MAGIC_GATES:
        raise ValueError("T/Tdg nao e Clifford; use resolve_t_variant")
    wires = _check_wires(gate, wires, frame.n_qubits)
    xs, zs = list(frame.x_bits), list(frame.z_bits)

    if gate is GateLabel.H:
        (w,) = wires
        xs[w], zs[w] = zs[w], xs[w]
    elif gate in (GateLabel.P, GateLabel.Pdg):
        (w,) = wires
        zs[w] ^= xs[w]
    elif gate is GateLabel.CZ:
        i, j = wires
        zs[i] ^= xs[j]
        zs[j] ^= xs[i]
    elif gate is GateLabel.SWAP:
        i, j = wires
        xs[i], xs[j] = xs[j], xs[i]
        zs[i], zs[j] = zs[j], zs[i]
    elif gate is GateLabel.CX:
        c, t = wires
        xs[t] ^= xs[c]
        zs[c] ^= zs[t]
    elif gate is GateLabel.X:
        xs[wires[0]] ^= 1
    elif gate is GateLabel.Z:
        zs[wires[0]] ^= 1
    elif gate is GateLabel.Y:
        xs[wires[0]] ^= 1
        zs[wires[0]] ^= 1

    return PauliFrame(tuple(xs), tuple(zs))


def apply_syndromes(frame: PauliFrame, syndromes: Mapping[int, Syndrome]) -> PauliFrame:
    for wire, syn in syndromes.items():
        frame = frame.flip(wire, syn.x_bit, syn.z_bit)
    return frame


def resolve_t_variant(frame: PauliFrame, qubit: int, requested=GateLabel.T) -> GateLabel:
    """T vira Tdg (e vice-versa) quando o frame tem X no qubit; o frame nao muda."""
    requested = GateLabel(requested)
    if requested not in MAGIC_GATES:
        raise ValueError(f"porta magica esperada, recebeu {requested.value}")
    if not frame.x_bits[qubit]:
        return requested
    return GateLabel.Tdg if requested is GateLabel.T else GateLabel.T


def _same_up_to_phase(a: np.ndarray, b: np.ndarray) -> bool:
    overlap = np.vdot(a, b)
    return abs(abs(overlap) - a.shape[0]) < 1e-9


def t_correction(requested, variant, pre_x: int) -> GateLabel:
    """
    Clifford C com C A = T_req, onde A e a acao efetiva do gadget magico.

    A = T U se o Pauli antes do T nao tem X; senao T X = X Pdg T deixa A = Pdg T U.
    Retorna I, P, Pdg ou Z (Z vai direto para o frame).
    """
    requested, variant = GateLabel(requested), GateLabel(variant)
    U = GATE_MATRICES["I"] if variant is GateLabel.T else GATE_MATRICES["Pdg"]
    A = GATE_MATRICES["T"] @ U
    if pre_x:
        A = GATE_MATRICES["Pdg"] @ A
    C = GATE_MATRICES[requested.value] @ A.conj().T
    for candidate in (GateLabel.I, GateLabel.P, GateLabel.Pdg, GateLabel.Z):
        if _same_up_to_phase(GATE_MATRICES[candidate.value], C):
            return candidate
    raise AssertionError(f"correcao fora do conjunto esperado para {requested.value}/{variant.value}")


# ==============================================================================
# MAPA SIMPLETICO E PROGRAMAS
# ==============================================================================

def gadget_symplectic(theta_a: float, theta_b: float) -> np.ndarray:
    """
    Mapa simpletico V do gadget de um modo no limite EPR.

    V = 1/sin(b-a) [[sin(a+b), 2 sin a sin b], [2 cos a cos b, sin(a+b)]]
    """
    a, b = theta_a, theta_b
    denom = math.sin(b - a)
    if abs(denom) < 1e-12:
        raise ValueError(f"undecodable gadget: angulos ({a}, {b})")
    return np.array(
        [
            [math.sin(a + b), 2 * math.sin(a) * math.sin(b)],
            [2 * math.cos(a) * math.cos(b), math.sin(a + b)],
        ]
    ) / denom


TARGET_SYMPLECTIC = {
    GateLabel.I: np.eye(2),
    GateLabel.H: np.array([[0.0, 1.0], [-1.0, 0.0]]),
    GateLabel.P: np.array([[1.0, 0.0], [1.0, 1.0]]),
    GateLabel.Pdg: np.array([[1.0, 0.0], [-1.0, 1.0]]),
}

# Canais (x+, x-) dos gadgets de dois modos
TARGET_CHANNELS = {
    GateLabel.CZ: (TARGET_SYMPLECTIC[GateLabel.P], TARGET_SYMPLECTIC[GateLabel.Pdg]),
    GateLabel.SWAP: (np.eye(2), -np.eye(2)),
}


def default_candidates() -> List[float]:
    """Multiplos de pi/4 em (-pi, pi] (ordem canonica) mais +-atan(2)."""
    q = math.pi / 4
    return [0.0, q, -q, 2 * q, -2 * q, 3 * q, -3 * q, 4 * q, ATAN2, -ATAN2]


def _matches(V: np.ndarray, target: np.ndarray, sign: float) -> bool:
    return bool(np.allclose(V, sign * target, atol=1e-9))


def screen_candidates(gate, candidates: Optional[Sequence[float]] = None) -> List[Program]:
    """
    Programas cujo mapa simpletico realiza a porta (a menos de sinal global).

    Ordenados pelo ganho de ruido da decodificacao e depois pela ordem canonica.
    """
    gate = GateLabel(gate)
    candidates = list(default_candidates() if candidates is None else candidates)
    pairs = [
        (a, b) for a, b in itertools.product(candidates, repeat=2)
        if abs(math.sin(a - b)) > 1e-9
    ]

    found: List[Program] = []
    if gate in TARGET_SYMPLECTIC:
        target = TARGET_SYMPLECTIC[gate]
        for a, b in pairs:
            V = gadget_symplectic(a, b)
            if _matches(V, target, 1.0) or _matches(V, target, -1.0):
                found.append(AngleProgram(a, b))
    elif gate in TARGET_CHANNELS:
        t_plus, t_minus = TARGET_CHANNELS[gate]
        maps = [(a, b, gadget_symplectic(a, b)) for a, b in pairs]
        for (a1, b1, V1), (a2, b2, V2) in itertools.product(maps, repeat=2):
            for sign in (1.0, -1.0):
                if _matches(V1, t_plus, sign) and _matches(V2, t_minus, sign):
                    found.append(TwoModeProgram(AngleProgram(a1, b1), AngleProgram(a2, b2)))
                    break
    else:
        raise ValueError(f"porta {gate.value} nao tem programa calibravel")

    # sort estavel: empates mantem a ordem canonica
    return sorted(found, key=lambda prog: round(prog.noise_gain, 9))


# ==============================================================================
# PARES DE BELL
# ==============================================================================

def resolve_builder(builder: str, grid: GridSpec) -> str:
    if builder == "auto":
        return "comb" if grid.n_points >= 512 else "fock"
    return builder


@lru_cache(maxsize=16)
def _cached_pair(epsilon: float, magic: bool, n_points: int, builder: str) -> BellPairMps:
    return bell_pair(epsilon, magic, GridSpec(n_points), builder)


def get_pair(epsilon: float, magic: bool, grid: GridSpec, builder: str = "auto") -> BellPairMps:
    """Par de Bell em cache (tensores somente leitura; insert_two_mode copia)."""
    return _cached_pair(float(epsilon), bool(magic), grid.n_points, resolve_builder(builder, grid))


# ==============================================================================
# GADGETS
# ==============================================================================

def execute_single_gadget(
    state: FmpsState,
    wire: int,
    program: AngleProgram,
    pair: BellPairMps,
    rng: np.random.Generator,
    policy: Optional[SvdPolicy] = None,
    bs_method: str = "shear",
) -> Tuple[FmpsState, Syndrome, Tuple[float, float]]:
    """
    Gadget de teleportacao de um modo no fio `wire`.

    Cadeia local [In, A, B]: o par entra logo depois do fio, beam splitter
    minus em (In, A), medidas de In em theta_a e de A em theta_b. B fica na
    posicao do fio, com saida P_syn U |psi>.

    Returns:
        Tupla (state, sindrome, (m_a, m_b))
    """
    if not 0 <= wire < state.n_modes:
        raise ValueError(f"fio {wire} invalido para {state.n_modes} modos")

    insert_two_mode(state, wire + 1, pair, policy)
    apply_beamsplitter(state, wire, "minus", policy, method=bs_method)
    m_a, state = measure_homodyne(state, wire, program.theta_a, rng)
    m_b, state = measure_homodyne(state, wire, program.theta_b, rng)

    s1, s2 = decode_displacement(m_a, m_b, program.theta_a, program.theta_b)
    syndrome = Syndrome.from_displacement((-s1, s2))
    logger.debug(
        f"Gadget fio {wire} ({program.theta_a:.4f}, {program.theta_b:.4f}): "
        f"m=({m_a:.4f}, {m_b:.4f}) sindrome=({syndrome.x_bit}, {syndrome.z_bit})"
    )
    return state, syndrome, (m_a, m_b)


def execute_two_mode_gadget(
    state: FmpsState,
    wires: Sequence[int],
    program: TwoModeProgram,
    pairs: Sequence[BellPairMps],
    kind,
    rng: np.random.Generator,
    policy: Optional[SvdPolicy] = None,
    bs_method: str = "shear",
) -> Tuple[FmpsState, Dict[int, Syndrome], Tuple[float, float, float, float]]:
    """
    Gadget de dois modos nos fios adjacentes (w, w+1).

    Cadeia local [B1, A1, In1, In2, A2, B2] so com beam splitters vizinhos;
    os dois modos do meio sao medidos primeiro, o que torna A1 e A2 vizinhos.
    O deslocamento de cada canal (x+, x-) e decodificado de forma independente.

    kind=CX roda o gadget de CZ conjugado por rotacoes passivas de pi/2 no
    alvo (wires = (controle, alvo)); a sindrome do alvo volta ja conjugada por H.

    Returns:
        Tupla (state, {fio: sindrome}, (m1, m2, m3, m4))

    Raises:
        ValueError: Fios nao adjacentes ou tipo desconhecido
    """
    kind = GateLabel(kind)
    if kind not in TWO_MODE_GATES:
        raise ValueError(f"tipo de gadget de dois modos desconhecido: {kind.value}")
    wires = tuple(int(w) for w in wires)
    if len(wires) != 2 or abs(wires[0] - wires[1]) != 1:
        raise ValueError(f"routing required: fios {wires} nao sao adjacentes")
    if len(pairs) != 2:
        raise ValueError("gadget de dois modos consome dois pares de Bell")

    p = min(wires)
    if p + 1 >= state.n_modes:
        raise ValueError(f"fios {wires} fora da cadeia de {state.n_modes} modos")

    target = wires[1] if kind is GateLabel.CX else None
    if target is not None:
        apply_rotation(state, target, -math.pi / 2)

    insert_two_mode(state, p + 2, pairs[1], policy)
    insert_two_mode(state, p, pairs[0], policy)

    apply_beamsplitter(state, p + 1, "plus", policy, method=bs_method)
    apply_beamsplitter(state, p + 3, "minus", policy, method=bs_method)
    apply_beamsplitter(state, p + 2, "plus", policy, method=bs_method)

    m1, state = measure_homodyne(state, p + 2, program.plus.theta_a, rng)
    m2, state = measure_homodyne(state, p + 2, program.minus.theta_a, rng)

    apply_beamsplitter(state, p + 1, "plus", policy, method=bs_method)

    m3, state = measure_homodyne(state, p + 1, program.plus.theta_b, rng)
    m4, state = measure_homodyne(state, p + 1, program.minus.theta_b, rng)

    s_plus = decode_displacement(m1, m3, program.plus.theta_a, program.plus.theta_b)
    s_minus = decode_displacement(-m2, -m4, program.minus.theta_a, program.minus.theta_b)
    d_plus = np.array([-s_plus[0], s_plus[1]])
    d_minus = np.array([-s_minus[0], s_minus[1]])
    d1 = (d_plus + d_minus) / math.sqrt(2)
    d2 = (d_plus - d_minus) / math.sqrt(2)

    syndromes = {
        p: Syndrome.from_displacement(tuple(d1)),
        p + 1: Syndrome.from_displacement(tuple(d2)),
    }

    if target is not None:
        apply_rotation(state, target, math.pi / 2)
        syndromes[target] = syndromes[target].swapped()

    logger.debug(
        f"Gadget {kind.value} fios {wires}: m=({m1:.3f}, {m2:.3f}, {m3:.3f}, {m4:.3f}) "
        f"sindromes={[(s.x_bit, s.z_bit) for s in syndromes.values()]}"
    )
    return state, syndromes, (m1, m2, m3, m4)


# ==============================================================================
# CALIBRACAO
# ==============================================================================

SINGLE_INPUTS = (GkpLabel.ZERO, GkpLabel.ONE, GkpLabel.PLUS, GkpLabel.PLUS_I)
TWO_MODE_INPUTS = (
    (GkpLabel.ZERO, GkpLabel.PLUS),
    (GkpLabel.PLUS, GkpLabel.ZERO),
    (GkpLabel.PLUS, GkpLabel.PLUS),
    (GkpLabel.PLUS_I, GkpLabel.ONE),
)


def _program_fidelity(
    gate: GateLabel,
    program: Program,
    epsilon: float,
    grid: GridSpec,
    shots: int,
    rng: np.random.Generator,
    policy: SvdPolicy,
    builder: str,
    estimator: str,
    clip_threshold: float = DEFAULT_CLIP_THRESHOLD,
) -> float:
    """Pior fidelidade media (sobre as entradas) do gadget contra o oraculo DV."""
    two_mode = isinstance(program, TwoModeProgram)
    inputs = TWO_MODE_INPUTS if two_mode else [(label,) for label in SINGLE_INPUTS]
    n = 2 if two_mode else 1
    pair = get_pair(epsilon, False, grid, builder)
    method = resolve_builder(builder, grid)

    worst = 1.0
    for labels in inputs:
        target = dv_simulate([(gate.value, tuple(range(n)))], n, dv_product(labels))
        total = 0.0
        for _ in range(shots):
            state = FmpsState.product([build_state(lab, epsilon, grid, method) for lab in labels], grid)
            frame = PauliFrame.identity(n)
            if two_mode:
                state, syndromes, _ = execute_two_mode_gadget(
                    state, (0, 1), program, (pair, pair), gate, rng, policy
                )
            else:
                state, syn, _ = execute_single_gadget(state, 0, program, pair, rng, policy)
                syndromes = {0: syn}
            frame = apply_syndromes(frame, syndromes)
            rho = apply_pauli_frame(
                logical_dm(state, list(range(n)), estimator, clip_threshold), frame.x_bits, frame.z_bits
            )
            total += fidelity(rho, target)
        worst = min(worst, total / shots)
    return worst


def calibrate_angles(
    gate,
    candidates: Optional[Sequence[float]] = None,
    squeezing: float = 14.0,
    grid: Optional[GridSpec] = None,
    threshold: float = 0.99,
    shots: int = 2,
    verify: bool = True,
    seed: int = 0,
    policy: Optional[SvdPolicy] = None,
    builder: str = "auto",
    estimator: str = "binned",
    clip_threshold: float = DEFAULT_CLIP_THRESHOLD,
) -> Program:
    """
    Procura o programa de angulos de uma porta Clifford.

    Os candidatos passam primeiro pelo filtro simpletico analitico; os que
    passam sao simulados (verify=True) nas entradas {|0>, |1>, |+>, |+i>}
    e o primeiro com pior fidelidade >= threshold e devolvido.

    Args:
        gate: I, H, P, Pdg, CZ ou SWAP
        candidates: Angulos candidatos (default: multiplos de pi/4 e +-atan 2)
        squeezing: Squeezing em dB da simulacao de verificacao
        grid: Grade (default 512 pontos)
        threshold: Fidelidade minima no pior caso
        shots: Tiros por entrada
        verify: Se False devolve o melhor candidato analitico sem simular
        clip_threshold: Autovalor negativo de rho_L tolerado antes do aviso

    Returns:
        AngleProgram ou TwoModeProgram

    Raises:
        CalibrationError: Nenhum candidato atingiu o limiar
        ValueError: Porta nao calibravel
    """
    gate = GateLabel(gate)
    if gate not in CALIBRATED_GATES:
        raise ValueError(f"porta {gate.value} nao e calibravel (use {[g.value for g in CALIBRATED_GATES]})")

    screened = screen_candidates(gate, candidates)
    if not screened:
        raise CalibrationError(
            f"no candidate passes: nenhum candidato realiza {gate.value} (filtro simpletico vazio)",
            best_program=None,
            best_fidelity=0.0,
        )
    if not verify:
        return screened[0]

    if squeezing < 14.0:
        logger.warning(f"Calibracao com squeezing {squeezing} dB (< 14 dB recomendado)")

    grid = grid or GridSpec(512)
    policy = policy or SvdPolicy()
    epsilon = epsilon_from_db(squeezing)
    rng = np.random.default_rng(seed)

    best_program, best_fid = None, -1.0
    for program in screened:
        fid = _program_fidelity(
            gate, program, epsilon, grid, shots, rng, policy, builder, estimator, clip_threshold
        )
        logger.info(f"Calibracao {gate.value} {tuple(round(a, 6) for a in program.angles)}: F_min={fid:.5f}")
        if fid > best_fid:
            best_program, best_fid = program, fid
        if fid >= threshold:
            return program

    raise CalibrationError(
        f"no candidate passes: nenhum candidato para {gate.value} atingiu {threshold}, melhor "
        f"{best_program.angles} com fidelidade {best_fid:.5f}",
        best_program=best_program,
        best_fidelity=best_fid,
    )


def calibrate_table(gates: Sequence = CALIBRATED_GATES, **kwargs) -> Dict[GateLabel, Program]:
    return {GateLabel(g): calibrate_angles(g, **kwargs) for g in gates}


@lru_cache(maxsize=1)
def analytic_programs() -> Dict[GateLabel, Program]:
    """Tabela a partir do filtro analitico (sem simulacao)."""
    return {gate: screen_candidates(gate)[0] for gate in CALIBRATED_GATES}


# ==============================================================================
# TABELA DE ANGULOS
# ==============================================================================

def _format_angle(value: float) -> str:
    text = f"{value:.12g}"
    return "0" if text == "-0" else text


def write_angle_table(path: Path, programs: Mapping, squeezing: float) -> Path:
    """
    Grava a tabela versionada (chaves ordenadas, 12 algarismos significativos).

    Entradas iguais produzem arquivos identicos byte a byte.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        "# tabela de angulos calibrados (radianos, a partir de q)",
        f"version: {ANGLE_TABLE_VERSION}",
        f"squeezing_db: {_format_angle(float(squeezing))}",
    ]
    for gate in sorted(programs, key=lambda g: GateLabel(g).value):
        angles = " ".join(_format_angle(a) for a in programs[gate].angles)
        lines.append(f"{GateLabel(gate).value}: {angles}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_angle_table(path: Path) -> Dict[GateLabel, Program]:
    """
    Le a tabela de angulos.

    Raises:
        MissingPrerequisiteError: Arquivo ausente
        ValueError: Versao incompativel ou linha invalida
    """
    path = Path(path)
    if not path.exists():
        raise MissingPrerequisiteError(
            f"Tabela de angulos nao encontrada: {path} (rode o subcomando calibrate)"
        )

    programs: Dict[GateLabel, Program] = {}
    version = None
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise ValueError(f"{path}:{lineno}: linha invalida: {raw!r}")
        key = key.strip()
        if key == "version":
            version = int(value)
            continue
        if key == "squeezing_db":
            continue
        angles = [float(v) for v in value.split()]
        gate = GateLabel(key)
        if len(angles) == 2:
            programs[gate] = AngleProgram(*angles)
        elif len(angles) == 4:
            programs[gate] = TwoModeProgram(AngleProgram(*angles[:2]), AngleProgram(*angles[2:]))
        else:
            raise ValueError(f"{path}:{lineno}: {len(angles)} angulos para {key}")

    if version != ANGLE_TABLE_VERSION:
        raise ValueError(f"versao da tabela {version} != {ANGLE_TABLE_VERSION}")
    missing = [g.value for g in CALIBRATED_GATES if g not in programs]
    if missing:
        raise ValueError(f"tabela de angulos incompleta: faltam {missing}")
    return programs


# ==============================================================================
# COMPILACAO
# ==============================================================================

def compile_circuit(circuit: Sequence[Tuple[object, Sequence[int]]], n_qubits: int) -> QrlSchedule:
    """
    Compila um circuito logico em escala de gadgets.

    Paulis viram regras de frame (aplicadas no inicio da camada da proxima porta
    do fio, ou ao final); T/Tdg ganham uma camada de slot logo depois; as
    camadas sao empacotadas gulosamente na primeira posicao livre.

    Raises:
        ValueError: Porta de dois qubits em fios nao adjacentes ("routing required")
    """
    next_free = [0] * n_qubits
    placed: Dict[int, List[GadgetAssignment]] = {}
    pre: Dict[int, List[Tuple[GateLabel, int]]] = {}
    pending: List[List[GateLabel]] = [[] for _ in range(n_qubits)]

    for gate, wires in circuit:
        gate = GateLabel(gate)
        wires = _check_wires(gate, wires, n_qubits)
        if gate in FRAME_GATES:
            pending[wires[0]].append(gate)
            continue
        if gate.arity == 2 and abs(wires[0] - wires[1]) != 1:
            raise ValueError(f"routing required: {gate.value} em fios {wires} nao adjacentes")

        layer = max(next_free[w] for w in wires)
        for w in wires:
            if pending[w]:
                pre.setdefault(layer, []).extend((p, w) for p in pending[w])
                pending[w] = []
            next_free[w] = layer + 1
        placed.setdefault(layer, []).append(GadgetAssignment(gate, wires))

    depth = max(next_free, default=0)
    layers: List[QrlLayer] = []
    magic = 0
    slots = 0
    for index in range(depth):
        assignments = list(placed.get(index, []))
        busy = {w for a in assignments for w in a.wires}
        assignments += [GadgetAssignment(GateLabel.I, (w,)) for w in range(n_qubits) if w not in busy]
        assignments.sort(key=lambda a: min(a.wires))
        layers.append(
            QrlLayer(len(layers), "gate", tuple(assignments), tuple(pre.get(index, ())))
        )

        t_slots = tuple(a for a in assignments if a.gate in MAGIC_GATES)
        if t_slots:
            magic += len(t_slots)
            slots += len(t_slots)
            layers.append(QrlLayer(len(layers), "slot", t_slots))

    final = tuple((p, w) for w in range(n_qubits) for p in pending[w])
    return QrlSchedule(
        n_qubits=n_qubits,
        layers=tuple(layers),
        final_paulis=final,
        depth=depth,
        bell_pair_count=n_qubits * depth,
        magic_count=magic,
        slot_count=slots,
    )


def dump_schedule(schedule: QrlSchedule) -> str:
    """Texto estruturado da escala, para depuracao."""
    lines = [
        f"n_qubits: {schedule.n_qubits}",
        f"depth: {schedule.depth}",
        f"bell_pair_count: {schedule.bell_pair_count}",
        f"physical_modes: {schedule.physical_modes}",
        f"magic_count: {schedule.magic_count}",
        f"slot_count: {schedule.slot_count}",
        "layers:",
    ]
    for layer in schedule.layers:
        gates = ", ".join(f"{a.gate.value}{list(a.wires)}" for a in layer.assignments)
        line = f"  - [{layer.index}] {layer.kind}: {gates}"
        if layer.pre_paulis:
            line += " | frame: " + ", ".join(f"{p.value}{w}" for p, w in layer.pre_paulis)
        lines.append(line)
    if schedule.final_paulis:
        lines.append("final_paulis: " + ", ".join(f"{p.value}{w}" for p, w in schedule.final_paulis))
    return "\n".join(lines) + "\n"


# ==============================================================================
# EXECUCAO
# ==============================================================================

@dataclass
class RunContext:
    """Parametros fixos de uma execucao de escala."""

    epsilon: float
    grid: GridSpec
    programs: Mapping[GateLabel, Program]
    policy: SvdPolicy = field(default_factory=SvdPolicy)
    builder: str = "auto"
    bs_method: str = "shear"

    def pair(self, magic: bool = False) -> BellPairMps:
        return get_pair(self.epsilon, magic, self.grid, self.builder)


def prepare_inputs(inputs, n_qubits: int, epsilon: float, grid: GridSpec, builder: str = "auto") -> FmpsState:
    """Estado inicial: FmpsState pronto, rotulos GKP, ou |0>_L em todos os fios."""
    if isinstance(inputs, FmpsState):
        if inputs.n_modes != n_qubits:
            raise ValueError(f"estado com {inputs.n_modes} modos para {n_qubits} qubits")
        return inputs.copy()
    labels = [GkpLabel.ZERO] * n_qubits if inputs is None else list(inputs)
    if len(labels) != n_qubits:
        raise ValueError(f"{len(labels)} entradas para {n_qubits} qubits")
    method = resolve_builder(builder, grid)
    return FmpsState.product([build_state(lab, epsilon, grid, method) for lab in labels], grid)


def _run_t_gadget(state, frame, assignment, ctx, rng, layer, log):
    (w,) = assignment.wires
    variant = resolve_t_variant(frame, w, assignment.gate)
    base = GateLabel.I if variant is GateLabel.T else GateLabel.Pdg
    state, syn, outcomes = execute_single_gadget(
        state, w, ctx.programs[base], ctx.pair(magic=True), rng, ctx.policy, ctx.bs_method
    )
    log.append(SyndromeRecord(layer, w, variant.value, outcomes, syn))

    pre = frame_update_clifford(frame, base, (w,))
    pre = pre.flip(w, syn.x_bit, syn.z_bit)
    correction = t_correction(assignment.gate, variant, pre.x_bits[w])
    return state, pre, correction


def _run_slot(state, frame, wire, correction, ctx, rng, layer, log):
    gate = correction if correction in (GateLabel.P, GateLabel.Pdg) else GateLabel.I
    state, syn, outcomes = execute_single_gadget(
        state, wire, ctx.programs[gate], ctx.pair(), rng, ctx.policy, ctx.bs_method
    )
    log.append(SyndromeRecord(layer, wire, gate.value, outcomes, syn))
    frame = frame_update_clifford(frame, gate, (wire,))
    if correction is GateLabel.Z:
        frame = frame.flip(wire, 0, 1)
    return state, frame.flip(wire, syn.x_bit, syn.z_bit)


def run_schedule(
    schedule: QrlSchedule,
    inputs=None,
    squeezing: float = 14.0,
    rng: Optional[np.random.Generator] = None,
    programs: Optional[Mapping[GateLabel, Program]] = None,
    grid: Optional[GridSpec] = None,
    policy: Optional[SvdPolicy] = None,
    builder: str = "auto",
    frame: Optional[PauliFrame] = None,
) -> Tuple[FmpsState, PauliFrame, List[SyndromeRecord]]:
    """
    Executa a escala camada a camada com feedforward do frame.

    Args:
        schedule: Escala compilada
        inputs: Rotulos GKP por fio, FmpsState pronto ou None (|0>_L)
        squeezing: Squeezing (dB) dos pares e das entradas
        rng: Gerador para as medidas de homodina
        programs: Tabela de angulos (default: tabela analitica)
        grid: Grade (default 256 pontos)
        frame: Frame inicial (default identidade)

    Returns:
        Tupla (estado final, frame, log de sindromes). O estado logico
        verdadeiro e frame^dagger aplicado ao estado final.
    """
    grid = grid or GridSpec(256)
    ctx = RunContext(
        epsilon=epsilon_from_db(squeezing),
        grid=grid,
        programs=dict(programs or analytic_programs()),
        policy=policy or SvdPolicy(),
        builder=builder,
    )
    rng = rng if rng is not None else np.random.default_rng()
    n = schedule.n_qubits
    state = prepare_inputs(inputs, n, ctx.epsilon, grid, builder)
    frame = frame or PauliFrame.identity(n)
    log: List[SyndromeRecord] = []
    corrections: Dict[int, GateLabel] = {}

    for layer in schedule.layers:
        for pauli, w in layer.pre_paulis:
            frame = frame_update_clifford(frame, pauli, (w,))

        if layer.kind == "slot":
            for assignment in layer.assignments:
                (w,) = assignment.wires
                state, frame = _run_slot(state, frame, w, corrections.pop(w), ctx, rng, layer.index, log)
            continue

        for assignment in layer.assignments:
            gate = assignment.gate
            if gate in MAGIC_GATES:
                state, frame, corrections[assignment.wires[0]] = _run_t_gadget(
                    state, frame, assignment, ctx, rng, layer.index, log
                )
            elif gate in SINGLE_MODE_GATES:
                (w,) = assignment.wires
                state, syn, outcomes = execute_single_gadget(
                    state, w, ctx.programs[gate], ctx.pair(), rng, ctx.policy, ctx.bs_method
                )
                log.append(SyndromeRecord(layer.index, w, gate.value, outcomes, syn))
                frame = frame_update_clifford(frame, gate, (w,)).flip(w, syn.x_bit, syn.z_bit)
            else:
                program = ctx.programs[GateLabel.CZ if gate is GateLabel.CX else gate]
                state, syndromes, outcomes = execute_two_mode_gadget(
                    state, assignment.wires, program, (ctx.pair(), ctx.pair()), gate, rng,
                    ctx.policy, ctx.bs_method,
                )
                for w, syn in syndromes.items():
                    log.append(SyndromeRecord(layer.index, w, gate.value, outcomes, syn))
                frame = apply_syndromes(frame_update_clifford(frame, gate, assignment.wires), syndromes)

    for pauli, w in schedule.final_paulis:
        frame = frame_update_clifford(frame, pauli, (w,))

    logger.debug(
        f"Escala executada: {len(log)} gadgets, frame final {frame.label()}, "
        f"peso truncado {state.truncation_weight:.2e}"
    )
    return state, frame, log


def decode_logical(
    state: FmpsState,
    frame: PauliFrame,
    estimator: str = "binned",
    clip_threshold: float = DEFAULT_CLIP_THRESHOLD,
):
    """rho_L do estado final ja corrigido pelo frame."""
    rho = logical_dm(state, list(range(frame.n_qubits)), estimator, clip_threshold)
    return apply_pauli_frame(rho, frame.x_bits, frame.z_bits)


def readout_bits(state: FmpsState, frame: PauliFrame, rng: np.random.Generator) -> Tuple[int, ...]:
    """
    Leitura por homodina em q de todos os fios, binada pela paridade do dente
    mais proximo e corrigida pelo X do frame. Consome o estado.
    """
    bits = []
    for w in range(frame.n_qubits):
        m, state = measure_homodyne(state, 0, 0.0, rng)
        bits.append(syndrome_bits(m) ^ frame.x_bits[w])
    return tuple(bits)
