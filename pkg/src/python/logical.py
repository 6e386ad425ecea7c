"""
Decodificacao logica de estados CV e oraculo de vetor de estado DV.

Este modulo:
- Extrai a matriz densidade logica rho_L de modos GKP a partir dos valores
  esperados dos Paulis GKP (deslocamentos ou paridades binadas)
- Calcula pureza, fidelidade e distancia de traco
- Simula circuitos pequenos (N <= 6) em vetor de estado, como referencia
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .fmps import (
    FmpsState,
    displacement_kernel,
    fractional_fourier,
    parity_weights,
    transfer_step,
)

logger = logging.getLogger(__name__)

MAX_DECODE_QUBITS = 4
MAX_DV_QUBITS = 6
ESTIMATORS = ("displacement", "binned")
DEFAULT_CLIP_THRESHOLD = 1e-3
ESTIMATORS = ("displacement", "binned")

# ==============================================================================
# MATRIZES DE PORTAS
# ==============================================================================

_S2 = 1 / math.sqrt(2)

PAULIS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

GATE_MATRICES: Dict[str, np.ndarray] = {
    **PAULIS,
    "H": np.array([[_S2, _S2], [_S2, -_S2]], dtype=complex),
    "P": np.diag([1, 1j]).astype(complex),
    "Pdg": np.diag([1, -1j]).astype(complex),
    "T": np.diag([1, np.exp(1j * math.pi / 4)]),
    "Tdg": np.diag([1, np.exp(-1j * math.pi / 4)]),
    "CZ": np.diag([1, 1, 1, -1]).astype(complex),
    "CX": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
    "SWAP": np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex),
    "CCZ": np.diag([1, 1, 1, 1, 1, 1, 1, -1]).astype(complex),
}

# Angulo de quadratura e escala da paridade binada de cada Pauli GKP
BINNED_QUADRATURES = {
    "Z": (0.0, 1.0),
    "X": (math.pi / 2, 1.0),
    "Y": (-math.pi / 4, math.sqrt(2)),
}

# Deslocamentos (q0, p0) dos Paulis GKP: X = e^{-i sqrt(pi) p}, Z = e^{i sqrt(pi) q},
# Y = e^{i sqrt(pi)(q - p)} = i X Z
_SQRT_PI = math.sqrt(math.pi)
DISPLACEMENTS = {
    "X": (_SQRT_PI, 0.0),
    "Z": (0.0, _SQRT_PI),
    "Y": (_SQRT_PI, _SQRT_PI),
}


def gate_name(gate) -> str:
    return str(getattr(gate, "value", gate))


# ==============================================================================
# ESTADOS DV
# ==============================================================================

@dataclass
class DvState:
    """Vetor de estado de N <= 6 qubits (qubit 0 = bit mais significativo)."""

    amplitudes: np.ndarray
    n_qubits: int

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if self.n_qubits > MAX_DV_QUBITS:
            raise ValueError(f"oraculo DV limitado a {MAX_DV_QUBITS} qubits: {self.n_qubits}")
        if self.amplitudes.size != 2 ** self.n_qubits:
            raise ValueError(
                f"{self.amplitudes.size} amplitudes para {self.n_qubits} qubits"
            )
        norm = np.linalg.norm(self.amplitudes)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"estado DV nao normalizado: norma={norm}")

    @classmethod
    def zeros(cls, n_qubits: int) -> "DvState":
        amps = np.zeros(2 ** n_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(amps, n_qubits)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def density(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())


DV_LABELS = {
    "zero_L": np.array([1, 0], dtype=complex),
    "one_L": np.array([0, 1], dtype=complex),
    "plus_L": np.array([_S2, _S2], dtype=complex),
    "minus_L": np.array([_S2, -_S2], dtype=complex),
    "plus_i_L": np.array([_S2, 1j * _S2], dtype=complex),
}


def dv_product(labels: Sequence) -> DvState:
    """Estado produto DV a partir de rotulos GKP (zero_L, plus_L, ...)."""
    amps = np.ones(1, dtype=complex)
    for label in labels:
        amps = np.kron(amps, DV_LABELS[gate_name(label)])
    return DvState(amps, len(labels))


def _apply_gate(psi: np.ndarray, matrix: np.ndarray, wires: Sequence[int], n: int) -> np.ndarray:
    k = len(wires)
    tensor = psi.reshape([2] * n)
    gate = matrix.reshape([2] * (2 * k))
    out = np.tensordot(gate, tensor, axes=(list(range(k, 2 * k)), list(wires)))
    out = np.moveaxis(out, list(range(k)), list(wires))
    return out.reshape(-1)


def dv_simulate(
    circuit: Iterable[Tuple[object, Sequence[int]]],
    n_qubits: int,
    initial: Optional[DvState] = None,
) -> DvState:
    """
    Executa o circuito (lista de (porta, fios)) em vetor de estado.

    Raises:
        ValueError: Porta desconhecida, aridade errada ou N > 6
    """
    if n_qubits > MAX_DV_QUBITS:
        raise ValueError(f"oraculo DV limitado a {MAX_DV_QUBITS} qubits: {n_qubits}")

    state = initial if initial is not None else DvState.zeros(n_qubits)
    psi = state.amplitudes.copy()

    for gate, wires in circuit:
        name = gate_name(gate)
        if name not in GATE_MATRICES:
            raise ValueError(f"porta desconhecida: {name}")
        matrix = GATE_MATRICES[name]
        wires = tuple(wires)
        if matrix.shape[0] != 2 ** len(wires):
            raise ValueError(f"porta {name} aplicada a {len(wires)} fios")
        if any(not 0 <= w < n_qubits for w in wires):
            raise ValueError(f"fios {wires} fora do registrador de {n_qubits} qubits")
        psi = _apply_gate(psi, matrix, wires, n_qubits)

    return DvState(psi / np.linalg.norm(psi), n_qubits)


def circuit_unitary(circuit: Iterable[Tuple[object, Sequence[int]]], n_qubits: int) -> np.ndarray:
    """Matriz unitaria do circuito (colunas = imagens da base computacional)."""
    circuit = list(circuit)
    dim = 2 ** n_qubits
    columns = []
    for idx in range(dim):
        basis = np.zeros(dim, dtype=complex)
        basis[idx] = 1.0
        columns.append(dv_simulate(circuit, n_qubits, DvState(basis, n_qubits)).amplitudes)
    return np.stack(columns, axis=1)


# ==============================================================================
# MATRIZ DENSIDADE LOGICA
# ==============================================================================

@dataclass
class LogicalDensityMatrix:
    """Matriz densidade logica 2^N x 2^N com metricas."""

    matrix: np.ndarray
    n_qubits: int
    clipped_weight: float = 0.0

    def purity(self) -> float:
        return purity(self)

    def fidelity(self, target: DvState) -> float:
        return fidelity(self, target)

    def probabilities(self) -> np.ndarray:
        return np.clip(np.real(np.diag(self.matrix)), 0.0, None)

    def expectation(self, operator: np.ndarray) -> float:
        return float(np.real(np.trace(self.matrix @ operator)))


def pauli_string_matrix(string: str) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for ch in string:
        out = np.kron(out, PAULIS[ch])
    return out


def _mode_operators(
    tensor: np.ndarray,
    state: FmpsState,
    estimator: str,
) -> Dict[str, Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]]:
    """(bra, ket, pesos) de cada Pauli GKP para um tensor da cadeia."""
    ops = {"I": (tensor, tensor, None)}
    for pauli in ("X", "Y", "Z"):
        if estimator == "binned":
            theta, scale = BINNED_QUADRATURES[pauli]
            rotated = fractional_fourier(tensor, theta, state.grid, axis=1)
            ops[pauli] = (rotated, rotated, parity_weights(state.grid, scale))
        else:
            q0, p0 = DISPLACEMENTS[pauli]
            shifted = displacement_kernel(tensor, q0, p0, state.grid, axis=1)
            ops[pauli] = (tensor, shifted, None)
    return ops


def pauli_expectations(
    state: FmpsState,
    qubit_modes: Sequence[int],
    estimator: str = "binned",
) -> Dict[str, float]:
    """
    Valores esperados de todas as 4^N strings de Pauli GKP.

    Args:
        state: Estado FMPS
        qubit_modes: Modo da cadeia de cada qubit logico (qubit 0 primeiro)
        estimator: "displacement" (Re <D>) ou "binned" (paridades binadas)

    Returns:
        Dict string -> valor (ex.: {"IZ": 0.97, ...}), normalizado por <psi|psi>
    """
    if estimator not in ESTIMATORS:
        raise ValueError(f"estimador desconhecido: {estimator} (use {ESTIMATORS})")
    qubit_modes = list(qubit_modes)
    n = len(qubit_modes)
    if n > MAX_DECODE_QUBITS:
        raise ValueError(f"decodificacao limitada a {MAX_DECODE_QUBITS} qubits: {n}")
    if len(set(qubit_modes)) != n:
        raise ValueError(f"modos repetidos: {qubit_modes}")
    for mode in qubit_modes:
        if not 0 <= mode < state.n_modes:
            raise ValueError(f"modo {mode} invalido para {state.n_modes} modos")

    qubit_of_mode = {mode: q for q, mode in enumerate(qubit_modes)}

    # ambientes indexados pela string parcial (na ordem dos qubits)
    envs: Dict[Tuple[Tuple[int, str], ...], np.ndarray] = {(): np.ones((1, 1), dtype=complex)}
    for mode, tensor in enumerate(state.tensors):
        if mode not in qubit_of_mode:
            envs = {key: transfer_step(env, tensor, tensor) for key, env in envs.items()}
            continue
        ops = _mode_operators(tensor, state, estimator)
        qubit = qubit_of_mode[mode]
        envs = {
            key + ((qubit, pauli),): transfer_step(env, bra, ket, weights)
            for key, env in envs.items()
            for pauli, (bra, ket, weights) in ops.items()
        }

    values = {}
    for key, env in envs.items():
        chars = ["I"] * n
        for qubit, pauli in key:
            chars[qubit] = pauli
        values["".join(chars)] = float(env[0, 0].real)

    norm = values["I" * n]
    if norm <= 0.0:
        raise ValueError("estado com norma nula")
    return {key: val / norm for key, val in values.items()}


def density_from_paulis(expectations: Mapping[str, float], n_qubits: int) -> np.ndarray:
    rho = np.zeros((2 ** n_qubits, 2 ** n_qubits), dtype=complex)
    for string, value in expectations.items():
        rho += value * pauli_string_matrix(string)
    return rho / 2 ** n_qubits


def _clip_negative(rho: np.ndarray, clip_threshold: float) -> Tuple[np.ndarray, float]:
    rho = (rho + rho.conj().T) / 2
    vals, vecs = np.linalg.eigh(rho)
    negative = float(-vals[vals < 0].sum())
    if vals.min() < -clip_threshold:
        logger.warning(
            f"Autovalor negativo {vals.min():.3e} abaixo do limiar -{clip_threshold:g}; cortando"
        )
    if negative > 0.0:
        vals = np.clip(vals, 0.0, None)
        rho = (vecs * vals) @ vecs.conj().T
    trace = float(np.real(np.trace(rho)))
    return rho / trace, negative


def logical_dm(
    state: FmpsState,
    qubit_modes: Sequence[int],
    estimator: str = "binned",
    clip_threshold: float = DEFAULT_CLIP_THRESHOLD,
) -> LogicalDensityMatrix:
    """
    rho_L = 2^{-N} sum_sigma <sigma_CV> sigma, com traco renormalizado para 1.

    Autovalores negativos (decodificacao de energia finita nao e exatamente CP)
    sao cortados; o peso cortado fica em clipped_weight.
    """
    n = len(qubit_modes)
    expectations = pauli_expectations(state, qubit_modes, estimator)
    rho, clipped = _clip_negative(density_from_paulis(expectations, n), clip_threshold)
    return LogicalDensityMatrix(matrix=rho, n_qubits=n, clipped_weight=clipped)


# ==============================================================================
# METRICAS
# ==============================================================================

def purity(rho: LogicalDensityMatrix) -> float:
    """Tr(rho^2)."""
    return float(np.real(np.trace(rho.matrix @ rho.matrix)))


def fidelity(rho: LogicalDensityMatrix, target: DvState) -> float:
    """<psi|rho|psi> para alvo puro."""
    if target.amplitudes.size != rho.matrix.shape[0]:
        raise ValueError(
            f"dimensoes incompativeis: rho {rho.matrix.shape[0]}, alvo {target.amplitudes.size}"
        )
    psi = target.amplitudes
    return float(np.real(psi.conj() @ rho.matrix @ psi))


def readout_probability(rho: LogicalDensityMatrix, bits: Sequence[int]) -> float:
    """p = <n|rho|n> para a string de bits n (qubit 0 primeiro)."""
    index = int("".join(str(int(b)) for b in bits), 2) if bits else 0
    return float(np.real(rho.matrix[index, index]))


def survival_probability(rho: LogicalDensityMatrix, target: DvState) -> float:
    """Probabilidade de a leitura na base computacional reproduzir o alvo (alvo deve ser base)."""
    probs = np.abs(target.amplitudes) ** 2
    index = int(np.argmax(probs))
    if not math.isclose(probs[index], 1.0, abs_tol=1e-9):
        raise ValueError("alvo de sobrevivencia deve ser um estado da base computacional")
    return float(np.real(rho.matrix[index, index]))


def bloch_vector(rho: LogicalDensityMatrix) -> Tuple[float, float, float]:
    """(<X>, <Y>, <Z>) de um qubit."""
    if rho.n_qubits != 1:
        raise ValueError(f"vetor de Bloch definido para 1 qubit: {rho.n_qubits}")
    return tuple(rho.expectation(PAULIS[p]) for p in "XYZ")


def trace_distance(a: LogicalDensityMatrix, b: LogicalDensityMatrix) -> float:
    vals = np.linalg.eigvalsh(a.matrix - b.matrix)
    return float(0.5 * np.abs(vals).sum())


def tensor(*rhos: LogicalDensityMatrix) -> LogicalDensityMatrix:
    out = np.ones((1, 1), dtype=complex)
    for rho in rhos:
        out = np.kron(out, rho.matrix)
    return LogicalDensityMatrix(out, sum(r.n_qubits for r in rhos))


def mixture(rhos: Sequence[LogicalDensityMatrix], weights: Optional[Sequence[float]] = None) -> LogicalDensityMatrix:
    if weights is None:
        weights = [1.0 / len(rhos)] * len(rhos)
    out = sum(w * r.matrix for w, r in zip(weights, rhos))
    return LogicalDensityMatrix(out / np.real(np.trace(out)), rhos[0].n_qubits)


def pure(target: DvState) -> LogicalDensityMatrix:
    return LogicalDensityMatrix(target.density(), target.n_qubits)


def apply_pauli_frame(rho: LogicalDensityMatrix, x_bits: Sequence[int], z_bits: Sequence[int]) -> LogicalDensityMatrix:
    """Conjuga rho pelo Pauli X^x Z^z (corrige o frame rastreado em software)."""
    op = np.ones((1, 1), dtype=complex)
    for x, z in zip(x_bits, z_bits):
        op = np.kron(op, np.linalg.matrix_power(PAULIS["X"], int(x)) @ np.linalg.matrix_power(PAULIS["Z"], int(z)))
    return LogicalDensityMatrix(op @ rho.matrix @ op.conj().T, rho.n_qubits, rho.clipped_weight)


def all_bitstrings(n_qubits: int) -> List[Tuple[int, ...]]:
    return list(itertools.product((0, 1), repeat=n_qubits))
