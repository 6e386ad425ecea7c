"""
Construcao de estados GKP com amortecimento de fotons.

Este modulo:
- Converte entre amortecimento epsilon e squeezing em dB
- Constroi estados de um modo e^{-eps N}|label> na grade fixa
  (oraculo de Fock ou pente fechado via kernel de Mehler)
- Verifica se o envelope cabe no dominio fixo
- Constroi pares de Bell (e pares de Bell magicos) com bond interno 2
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import List, Tuple

import numpy as np
from scipy.special import erfcinv

from .fmps import FmpsState, GridSpec

logger = logging.getLogger(__name__)

SQRT_PI = math.sqrt(math.pi)

# Massa maxima do envelope fora de [-L, L]
ENVELOPE_MASS_LIMIT = 1e-10

# N_max = ceil(FOCK_DECAY / eps + FOCK_MARGIN): e^{-eps N_max} < 1e-20
FOCK_DECAY = 46.0
FOCK_MARGIN = 50

MAGIC_PHASE = math.pi / 8


class EnvelopeDomainError(ValueError):
    """O envelope do estado nao cabe no dominio fixo da grade."""

    def __init__(self, message: str, required_half_width: float):
        super().__init__(message)
        self.required_half_width = required_half_width


class GkpLabel(str, Enum):
    ZERO = "zero_L"
    ONE = "one_L"
    PLUS = "plus_L"
    MINUS = "minus_L"
    PLUS_I = "plus_i_L"
    QUNAUGHT = "qunaught"

    @property
    def spacing(self) -> float:
        """Periodo dos dentes (2 sqrt(pi) para zero/one, sqrt(2 pi) para qunaught)."""
        if self is GkpLabel.QUNAUGHT:
            return math.sqrt(2 * math.pi)
        if self in (GkpLabel.ZERO, GkpLabel.ONE):
            return 2 * SQRT_PI
        return SQRT_PI


# ==============================================================================
# CONVERSAO EPSILON <-> dB
# ==============================================================================

def squeezing_db(epsilon: float) -> float:
    """
    Squeezing GKP s[eps] = -10 log10(tanh(eps/2) / (1/2)).

    Raises:
        ValueError: Se eps <= 0 ou nao finito
    """
    if not (math.isfinite(epsilon) and epsilon > 0):
        raise ValueError(f"epsilon deve ser positivo e finito: {epsilon}")
    return -10.0 * math.log10(math.tanh(epsilon / 2) / 0.5)


def small_epsilon_db(epsilon: float) -> float:
    """Aproximacao de eps pequeno: s ~ -10 log10(eps)."""
    if not (math.isfinite(epsilon) and epsilon > 0):
        raise ValueError(f"epsilon deve ser positivo e finito: {epsilon}")
    return -10.0 * math.log10(epsilon)


def epsilon_from_db(s: float) -> float:
    """
    Inverso de squeezing_db: eps = 2 atanh(10^{-s/10} / 2).

    Raises:
        ValueError: Se s nao for finito ou s <= -10 log10(2) (sem inverso real)
    """
    if not math.isfinite(s):
        raise ValueError(f"squeezing nao finito: {s}")
    x = 0.5 * 10.0 ** (-s / 10.0)
    if x >= 1.0:
        raise ValueError(f"squeezing {s} dB abaixo do minimo invertivel ({-10 * math.log10(2):.4f} dB)")
    return 2.0 * math.atanh(x)


def tooth_variance(epsilon: float) -> float:
    """Variancia de |psi|^2 de um dente: tanh(eps)/2."""
    return math.tanh(epsilon) / 2


def envelope_variance(epsilon: float) -> float:
    """Variancia de |psi|^2 do envelope: 1 / (4 tanh(eps/2))."""
    return 1.0 / (4.0 * math.tanh(epsilon / 2))


def required_half_width(epsilon: float) -> float:
    """Meia-largura L tal que a massa do envelope fora de [-L, L] fique abaixo de 1e-10."""
    return math.sqrt(2 * envelope_variance(epsilon)) * float(erfcinv(ENVELOPE_MASS_LIMIT))


def check_envelope(epsilon: float, grid: GridSpec) -> None:
    needed = required_half_width(epsilon)
    if needed > grid.half_width:
        raise EnvelopeDomainError(
            f"Envelope nao cabe no dominio: eps={epsilon:.5f} ({squeezing_db(epsilon):.2f} dB) "
            f"exige L >= {needed:.3f}, grade com {grid.n_points} pontos tem L = {grid.half_width:.3f}",
            required_half_width=needed,
        )


# ==============================================================================
# PENTES IDEAIS E FUNCOES DE HERMITE
# ==============================================================================

def comb_teeth(label: GkpLabel, extent: float) -> Tuple[np.ndarray, np.ndarray]:
    """Posicoes e pesos dos dentes do pente ideal restrito a |x| <= extent."""
    label = GkpLabel(label)

    if label is GkpLabel.QUNAUGHT:
        step = math.sqrt(2 * math.pi)
    else:
        step = SQRT_PI

    kmax = int(extent // step)
    ks = np.arange(-kmax, kmax + 1)
    positions = ks * step

    if label is GkpLabel.ZERO:
        weights = (ks % 2 == 0).astype(complex)
    elif label is GkpLabel.ONE:
        weights = (ks % 2 == 1).astype(complex)
    elif label is GkpLabel.MINUS:
        weights = np.where(ks % 2 == 0, 1.0, -1.0).astype(complex)
    elif label is GkpLabel.PLUS_I:
        weights = np.where(ks % 2 == 0, 1.0, 1j)
    else:
        weights = np.ones(ks.size, dtype=complex)

    keep = weights != 0
    return positions[keep], weights[keep]


def hermite_table(x: np.ndarray, n_max: int) -> np.ndarray:
    """
    Funcoes de Hermite normalizadas psi_n(x), n = 0..n_max.

    Recorrencia psi_{n+1} = sqrt(2/(n+1)) x psi_n - sqrt(n/(n+1)) psi_{n-1}
    com reescala em log para nao perder valores onde psi_0 daria underflow.
    """
    x = np.asarray(x, dtype=float)
    table = np.empty((n_max + 1, x.size))
    log_scale = -0.5 * x ** 2 - 0.25 * math.log(math.pi)
    prev = np.zeros_like(x)
    cur = np.ones_like(x)
    rescale = 1e150
    log_rescale = math.log(rescale)

    with np.errstate(divide="ignore", under="ignore"):
        for n in range(n_max + 1):
            table[n] = np.sign(cur) * np.exp(log_scale + np.log(np.abs(cur)))
            nxt = math.sqrt(2.0 / (n + 1)) * x * cur - math.sqrt(n / (n + 1)) * prev
            prev, cur = cur, nxt
            big = np.abs(cur) > rescale
            if big.any():
                cur[big] /= rescale
                prev[big] /= rescale
                log_scale[big] += log_rescale

    return table


@lru_cache(maxsize=8)
def _grid_hermite_table(n_points: int, n_max: int) -> np.ndarray:
    table = hermite_table(GridSpec(n_points).q, n_max)
    table.setflags(write=False)
    return table


def fock_cutoff(epsilon: float) -> int:
    return int(math.ceil(FOCK_DECAY / epsilon + FOCK_MARGIN))


# ==============================================================================
# CONSTRUTORES
# ==============================================================================

def _mehler_comb(positions: np.ndarray, weights: np.ndarray, epsilon: float, grid: GridSpec) -> np.ndarray:
    w = math.exp(-epsilon)
    one_minus = -math.expm1(-2 * epsilon)
    q = grid.q[:, None]
    x = positions[None, :]
    exponent = -((1 + w * w) * (q ** 2 + x ** 2) - 4 * w * q * x) / (2 * one_minus)
    kernel = np.exp(exponent) / math.sqrt(math.pi * one_minus)
    return kernel @ weights


def _fock_comb(positions: np.ndarray, weights: np.ndarray, epsilon: float, grid: GridSpec) -> np.ndarray:
    n_max = fock_cutoff(epsilon)
    coeffs = hermite_table(positions, n_max) @ weights
    coeffs = coeffs * np.exp(-epsilon * np.arange(n_max + 1))
    return coeffs @ _grid_hermite_table(grid.n_points, n_max)


BUILDERS = {"fock": _fock_comb, "comb": _mehler_comb}


def damped_comb(label: GkpLabel, epsilon: float, grid: GridSpec, method: str = "fock") -> np.ndarray:
    """e^{-eps N} aplicado ao pente ideal restrito ao dominio, sem normalizar."""
    if not (math.isfinite(epsilon) and epsilon > 0):
        raise ValueError(f"epsilon deve ser positivo e finito: {epsilon}")
    if method not in BUILDERS:
        raise ValueError(f"construtor desconhecido: {method} (use {sorted(BUILDERS)})")

    check_envelope(epsilon, grid)
    positions, weights = comb_teeth(GkpLabel(label), grid.half_width)
    return BUILDERS[method](positions, weights, epsilon, grid)


def build_state(label: GkpLabel, epsilon: float, grid: GridSpec, method: str = "fock") -> np.ndarray:
    """
    Funcao de onda normalizada de e^{-eps N}|label> na grade.

    Args:
        label: Rotulo GKP
        epsilon: Amortecimento
        grid: Grade fixa
        method: "fock" (oraculo exato em base de numero) ou "comb" (kernel de Mehler)

    Returns:
        Array complexo com sum |psi_j|^2 = 1

    Raises:
        EnvelopeDomainError: Envelope nao cabe em [-L, L]
    """
    psi = damped_comb(label, epsilon, grid, method)
    norm = np.linalg.norm(psi)
    if norm == 0.0:
        raise ValueError(f"estado nulo para {label} com eps={epsilon}")
    logger.debug(f"Estado {GkpLabel(label).value} construido: eps={epsilon:.5f}, metodo={method}")
    return psi / norm


@dataclass
class BellPairMps:
    """Par de Bell de dois modos com bond interno 2."""

    tensors: List[np.ndarray]
    magic: bool
    epsilon: float
    grid: GridSpec

    @property
    def bond_dim(self) -> int:
        return self.tensors[0].shape[2]

    def to_state(self) -> FmpsState:
        return FmpsState(tensors=[t.copy() for t in self.tensors], grid=self.grid)


def bell_pair(epsilon: float, magic: bool, grid: GridSpec, method: str = "fock") -> BellPairMps:
    """
    e^{-eps N}|Phi+> = [e^{-eps n}|0>]^{x2} + [e^{-eps n}|1>]^{x2}, montado sem beam splitter.

    magic=True multiplica o ramo mu=1 de cada tensor por e^{i pi/8}, dando
    |00> + e^{i pi/4}|11>.
    """
    zero = damped_comb(GkpLabel.ZERO, epsilon, grid, method)
    one = damped_comb(GkpLabel.ONE, epsilon, grid, method)

    branches = np.stack([zero, one], axis=-1)
    if magic:
        branches = branches * np.array([1.0, np.exp(1j * MAGIC_PHASE)])

    first = branches[None, :, :].astype(complex)
    second = branches.T[:, :, None].astype(complex)

    gram = branches.T @ branches.conj()
    norm2 = float(np.sum(gram ** 2).real)
    scale = norm2 ** -0.25

    return BellPairMps(
        tensors=[first * scale, second * scale],
        magic=magic,
        epsilon=epsilon,
        grid=grid,
    )
