"""
Modelos analiticos e ajustes estatisticos.

Este modulo:
- Calcula a probabilidade de flip de paridade sob ruido gaussiano de deslocamento
- Gera as curvas analiticas de erro por porta (baixa, alta e media)
- Ajusta o decaimento de RB F(m) = A p^m + B com B fixo em 2^-N
- Converte p em taxa de erro e estima o sucesso de Grover sob despolarizacao
- Fornece intervalos de Wilson, residuos normalizados e teste de sequencias
"""

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats
from scipy.optimize import OptimizeWarning, curve_fit

from .states import epsilon_from_db

logger = logging.getLogger(__name__)

SQRT_PI = math.sqrt(math.pi)

# Linhas de referencia do experimento de Grover
CLASSICAL_BOUND = 13 / 28
RANDOM_BASELINE = 2 / 8

DEFAULT_AMPLIFICATION = 2.0
MIN_RB_DEPTH = 7
ANALYTIC_RANGE_DB = (5.0, 15.0)

SERIES_TOLERANCE = 1e-15


# ==============================================================================
# RUIDO DE DESLOCAMENTO
# ==============================================================================

def gadget_noise_variance(epsilon: float) -> float:
    """sigma^2 = 2 tanh(eps/2): dois dentes de ancila por quadratura."""
    return 2.0 * math.tanh(epsilon / 2)


def flip_prob(sigma: float, spacing: float = SQRT_PI) -> float:
    """
    Probabilidade de um deslocamento N(0, sigma^2) arredondar para multiplo impar de spacing.

    Para sigma pequeno soma as janelas impares diretamente; para sigma grande
    usa a serie de Fourier da onda quadrada (-1)^{round(x/spacing)}.

    Raises:
        ValueError: sigma <= 0
    """
    if not (math.isfinite(sigma) and sigma > 0):
        raise ValueError(f"sigma deve ser positivo: {sigma}")

    if sigma <= spacing:
        total = 0.0
        n = 0
        while True:
            lo = (2 * n + 0.5) * spacing / sigma
            hi = (2 * n + 1.5) * spacing / sigma
            term = 2.0 * (stats.norm.sf(lo) - stats.norm.sf(hi))
            total += term
            if stats.norm.sf(hi) < SERIES_TOLERANCE:
                break
            n += 1
        return float(min(total, 0.5))

    mean_parity = 0.0
    k = 0
    while True:
        omega = (2 * k + 1) * math.pi / spacing
        damping = math.exp(-0.5 * (omega * sigma) ** 2)
        mean_parity += (4 / math.pi) * (-1) ** k / (2 * k + 1) * damping
        if damping < SERIES_TOLERANCE:
            break
        k += 1
    return float(0.5 * (1.0 - mean_parity))


def analytic_error_rates(s: float, amplification: float = DEFAULT_AMPLIFICATION) -> Tuple[float, float, float]:
    """
    Curvas analiticas de erro por porta em funcao do squeezing.

    r_low: I, H e SWAP (variancia sigma^2 nas duas quadraturas).
    r_high: P e CZ (uma quadratura com variancia amplificada).
    Cada canal independente X/Z com flip p; erro e = 1 - (1-p_x)(1-p_z) e
    r = 2/3 e (infidelidade media de um canal de Pauli de um qubit).

    Args:
        s: Squeezing em dB
        amplification: Fator de amplificacao da variancia em P/CZ

    Returns:
        Tupla (r_low, r_high, r_mean)
    """
    lo, hi = ANALYTIC_RANGE_DB
    if not lo <= s <= hi:
        logger.warning(f"Squeezing {s} dB fora da faixa do modelo analitico [{lo}, {hi}]")
    if amplification < 1.0:
        raise ValueError(f"fator de amplificacao deve ser >= 1: {amplification}")

    var = gadget_noise_variance(epsilon_from_db(s))
    p = flip_prob(math.sqrt(var))
    p_amp = flip_prob(math.sqrt(amplification * var))

    r_low = (2 / 3) * (1 - (1 - p) ** 2)
    r_high = (2 / 3) * (1 - (1 - p) * (1 - p_amp))
    return r_low, r_high, 0.5 * (r_low + r_high)


# ==============================================================================
# RANDOMIZED BENCHMARKING
# ==============================================================================

@dataclass(frozen=True)
class RbPoint:
    depth: int
    mean_fidelity: float
    std_error: float
    n_samples: int

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError(f"profundidade deve ser >= 1: {self.depth}")
        if not -1e-6 <= self.mean_fidelity <= 1 + 1e-6:
            raise ValueError(f"fidelidade media fora de [0, 1]: {self.mean_fidelity}")


@dataclass(frozen=True)
class RbFit:
    A: float
    p: float
    B: float
    r: float
    covariance: np.ndarray
    n_qubits: int
    flagged: bool = False
    message: str = ""
    free_b: bool = False

    @property
    def p_std(self) -> float:
        return float(math.sqrt(self.covariance[1, 1])) if np.isfinite(self.covariance[1, 1]) else math.inf

    @property
    def r_std(self) -> float:
        return self.p_std * (1 - 2.0 ** -self.n_qubits)

    def model(self, depth) -> np.ndarray:
        return self.A * np.power(self.p, np.asarray(depth, dtype=float)) + self.B


def error_rate_from_p(p: float, n_qubits: int) -> float:
    """r = (1 - p)(1 - 2^-N)."""
    return (1.0 - p) * (1.0 - 2.0 ** -n_qubits)


def fit_rb(
    points: Sequence[RbPoint],
    n_qubits: int,
    min_depth: int = MIN_RB_DEPTH,
    free_b: bool = False,
) -> RbFit:
    """
    Ajuste de F(m) = A p^m + B por minimos quadrados.

    B fica fixo em 2^-N (free_b=True ajusta B tambem, para o teste de
    consistencia). Usa pesos 1/std_error^2 quando todos os erros sao
    positivos, senao ajuste sem pesos.

    Args:
        points: Pontos de RB
        n_qubits: Numero de qubits N
        min_depth: Profundidade minima incluida no ajuste
        free_b: Ajustar B livremente

    Returns:
        RbFit (flagged=True se p fora de (0, 1], covariancia nao finita ou A ~ 0)

    Raises:
        ValueError: Menos de 3 profundidades distintas >= min_depth
    """
    used = sorted((pt for pt in points if pt.depth >= min_depth), key=lambda pt: pt.depth)
    depths = np.array([pt.depth for pt in used], dtype=float)
    if len(set(depths)) < 3:
        raise ValueError(
            f"ajuste exige >= 3 profundidades distintas >= {min_depth}, recebeu {sorted(set(depths))}"
        )

    y = np.array([pt.mean_fidelity for pt in used])
    errors = np.array([pt.std_error for pt in used])
    sigma = errors if np.all(errors > 0) else None
    b_fixed = 2.0 ** -n_qubits

    a0 = max(y[0] - b_fixed, 1e-3)
    if free_b:
        def model(m, a, p, b):
            return a * np.power(p, m) + b
        guess = [a0, 0.95, b_fixed]
    else:
        def model(m, a, p):
            return a * np.power(p, m) + b_fixed
        guess = [a0, 0.95]

    flagged, message = False, ""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OptimizeWarning)
        try:
            params, cov = curve_fit(
                model, depths, y, p0=guess, sigma=sigma,
                absolute_sigma=sigma is not None, maxfev=20000,
            )
        except RuntimeError as e:
            params = np.array(guess, dtype=float)
            cov = np.full((len(guess), len(guess)), np.inf)
            flagged, message = True, f"ajuste nao convergiu: {e}"

    A, p = float(params[0]), float(params[1])
    B = float(params[2]) if free_b else b_fixed

    if not flagged:
        problems = []
        if not 0.0 < p <= 1.0:
            problems.append(f"p={p:.6g} fora de (0, 1]")
        if not np.all(np.isfinite(cov)):
            problems.append("covariancia nao finita")
        if abs(A) < 1e-6 or abs(A * p ** depths[0]) < 1e-6:
            problems.append("A ~ 0 (p nao identificavel)")
        if problems:
            flagged, message = True, "; ".join(problems)

    if flagged:
        logger.warning(f"Ajuste de RB sinalizado: {message}")

    return RbFit(
        A=A,
        p=p,
        B=B,
        r=error_rate_from_p(p, n_qubits),
        covariance=np.asarray(cov)[:2, :2],
        n_qubits=n_qubits,
        flagged=flagged,
        message=message,
        free_b=free_b,
    )


# ==============================================================================
# GROVER
# ==============================================================================

def survival_rate(r: float) -> float:
    """Taxa de sobrevivencia despolarizante p = 1 - 4r/3."""
    return 1.0 - 4.0 * r / 3.0


def grover_success_estimate(r: float, n_qubits: int, depth: int, k: int, p_true: float) -> float:
    """p^{N d} p_true + (1 - p^{N d}) k / 2^N com p = 1 - 4r/3."""
    p = survival_rate(r)
    pnd = p ** (n_qubits * depth)
    return pnd * p_true + (1.0 - pnd) * k / 2 ** n_qubits


# ==============================================================================
# ESTATISTICA
# ==============================================================================

def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> Tuple[float, float]:
    """Intervalo de Wilson para uma proporcao binomial."""
    if trials <= 0:
        raise ValueError(f"numero de tentativas deve ser positivo: {trials}")
    z = float(stats.norm.ppf(0.5 + confidence / 2))
    phat = successes / trials
    denom = 1 + z ** 2 / trials
    center = (phat + z ** 2 / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z ** 2 / (4 * trials ** 2)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def normalized_residuals(points: Sequence[RbPoint], model: Callable[[int], float]) -> np.ndarray:
    """(F_medido - F_modelo) / erro padrao, por ponto."""
    out = []
    for pt in points:
        scale = pt.std_error if pt.std_error > 0 else 1.0
        out.append((pt.mean_fidelity - float(model(pt.depth))) / scale)
    return np.array(out)


def runs_test(residuals: Sequence[float]) -> float:
    """
    Teste de sequencias de Wald-Wolfowitz sobre os sinais dos residuos.

    Returns:
        p-valor bilateral (1.0 quando nao ha dados suficientes)
    """
    signs = np.sign(np.asarray(residuals, dtype=float))
    signs = signs[signs != 0]
    n = signs.size
    if n < 2:
        return 1.0
    n_pos = int(np.sum(signs > 0))
    n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        return 0.0

    runs = 1 + int(np.sum(signs[1:] != signs[:-1]))
    expected = 2.0 * n_pos * n_neg / n + 1.0
    variance = 2.0 * n_pos * n_neg * (2.0 * n_pos * n_neg - n) / (n ** 2 * (n - 1))
    if variance <= 0:
        return 1.0
    z = (runs - expected) / math.sqrt(variance)
    return float(2.0 * stats.norm.sf(abs(z)))


def model_from_r(r: float, n_qubits: int, a: Optional[float] = None) -> Callable[[int], float]:
    """Curva F(m) = A p^m + B a partir de uma taxa de erro r."""
    b = 2.0 ** -n_qubits
    a = 1.0 - b if a is None else a
    p = 1.0 - r / (1.0 - b)
    return lambda m: a * p ** m + b


def analytic_curves(
    squeezing_values: Sequence[float],
    amplification: float = DEFAULT_AMPLIFICATION,
) -> pd.DataFrame:
    """Tabela (squeezing_db, r_low, r_high, r_mean) das curvas analiticas."""
    rows = []
    for s in squeezing_values:
        r_low, r_high, r_mean = analytic_error_rates(float(s), amplification)
        rows.append({"squeezing_db": float(s), "r_low": r_low, "r_high": r_high, "r_mean": r_mean})
    return pd.DataFrame(rows, columns=["squeezing_db", "r_low", "r_high", "r_mean"])
