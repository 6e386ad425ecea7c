"""
Motor FMPS (functional matrix product state) para estados CV multimodo.

Este modulo:
- Define a grade fixa auto-dual (GridSpec) e a politica de SVD (SvdPolicy)
- Guarda o estado como cadeia de tensores (bond_esq x n_pontos x bond_dir)
- Faz SVD truncada randomizada (range finder + iteracoes de potencia)
- Aplica rotacoes de fase (Fourier fracionaria), beam splitters 50:50,
  deslocamentos e o amortecimento e^{-eps N}
- Mede homodina com colapso e injeta pares de dois modos
- Calcula valores esperados de deslocamentos e de paridades binadas

Convencoes:
- apply_rotation(theta) aplica e^{+i theta N}; measure_homodyne(theta) aplica
  e^{-i theta N} antes de medir q, ou seja mede q cos(theta) + p sin(theta).
- Beam splitter "plus": (q_i, q_j) -> ((q_i + q_j)/sqrt2, (q_j - q_i)/sqrt2).
  "minus" e o inverso.
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

SQRT_PI = math.sqrt(math.pi)

# Fracao externa da grade usada para estimar massa fora do dominio
EDGE_FRACTION = 0.9


class DomainLossError(RuntimeError):
    """O estado perdeu massa para fora do dominio fixo."""


# ==============================================================================
# GRADE E POLITICA DE SVD
# ==============================================================================

@dataclass(frozen=True)
class GridSpec:
    """
    Grade uniforme auto-dual compartilhada por todos os modos.

    delta_q = sqrt(2 pi / n) faz a DFT centrada levar a grade de posicao
    exatamente na grade de momento.
    """

    n_points: int

    def __post_init__(self):
        n = self.n_points
        if not isinstance(n, (int, np.integer)) or n < 8 or n & (n - 1):
            raise ValueError(f"n_points deve ser potencia de dois >= 8, recebido {n}")

    @property
    def spacing(self) -> float:
        return math.sqrt(2.0 * math.pi / self.n_points)

    @property
    def half_width(self) -> float:
        return self.spacing * self.n_points / 2

    @cached_property
    def q(self) -> np.ndarray:
        q = (np.arange(self.n_points) - self.n_points // 2) * self.spacing
        q.setflags(write=False)
        return q

    @cached_property
    def k(self) -> np.ndarray:
        """Numeros de onda angulares na ordem da FFT."""
        k = 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.spacing)
        k.setflags(write=False)
        return k


@dataclass(frozen=True)
class SvdPolicy:
    """
    Politica de truncamento da SVD randomizada.

    Valores singulares abaixo de rel_tolerance * maior sao descartados e o
    posto nunca passa de chi_max.
    """

    rel_tolerance: float = 1e-7
    chi_max: int = 64
    oversampling: int = 8
    power_iterations: int = 2
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.rel_tolerance < 1.0:
            raise ValueError(f"rel_tolerance fora de (0,1): {self.rel_tolerance}")
        if self.chi_max < 2:
            raise ValueError(f"chi_max deve ser >= 2: {self.chi_max}")
        if self.oversampling < 0 or self.power_iterations < 0:
            raise ValueError("oversampling e power_iterations devem ser >= 0")


# ==============================================================================
# SVD TRUNCADA RANDOMIZADA
# ==============================================================================

def truncated_rsvd(
    matrix: np.ndarray,
    policy: SvdPolicy,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """
    SVD truncada via range finder randomizado.

    Args:
        matrix: Matriz densa (m x n)
        policy: Politica de truncamento
        rng: Gerador para o esboco aleatorio (padrao: seed da politica)

    Returns:
        Tupla (U, S, V, discarded_weight) com M ~ U diag(S) V^H, S decrescente
        e discarded_weight = ||M||_F^2 - sum(S^2) (erro exato da projecao).

    Raises:
        ValueError: Se a matriz tiver entradas nao finitas

    Notes:
        Quando posto alvo + oversampling cobre a menor dimensao, a SVD exata
        do LAPACK e usada diretamente.
    """
    M = np.asarray(matrix)
    if M.ndim != 2:
        raise ValueError(f"esperada matriz 2D, recebido shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matriz com entradas nao finitas")

    m, n = M.shape
    total = float(np.vdot(M, M).real)

    if total == 0.0:
        U = np.zeros((m, 1), dtype=complex)
        V = np.zeros((n, 1), dtype=complex)
        U[0, 0] = 1.0
        V[0, 0] = 1.0
        return U, np.zeros(1), V, 0.0

    rank_cap = min(policy.chi_max, m, n)
    sketch = rank_cap + policy.oversampling

    if sketch >= min(m, n):
        U, S, Vh = np.linalg.svd(M, full_matrices=False)
    else:
        if rng is None:
            rng = np.random.default_rng(policy.seed)
        omega = rng.standard_normal((n, sketch)) + 1j * rng.standard_normal((n, sketch))
        Q, _ = np.linalg.qr(M @ omega)
        for _ in range(policy.power_iterations):
            Z, _ = np.linalg.qr(M.conj().T @ Q)
            Q, _ = np.linalg.qr(M @ Z)
        Ub, S, Vh = np.linalg.svd(Q.conj().T @ M, full_matrices=False)
        U = Q @ Ub

    keep = int(np.count_nonzero(S >= policy.rel_tolerance * S[0]))
    keep = max(1, min(keep, rank_cap))

    U, S, Vh = U[:, :keep], S[:keep], Vh[:keep]
    discarded = max(total - float(np.sum(S ** 2)), 0.0)

    return U, S, Vh.conj().T, discarded


# ==============================================================================
# ESTADO FMPS
# ==============================================================================

@dataclass
class FmpsState:
    """
    Cadeia de tensores rank-3 (bond_esq x n_pontos x bond_dir).

    norm_log acumula o peso relativo descartado por truncamento;
    domain_loss acumula a massa estimada na borda da grade.
    center e o indice do centro de ortogonalidade (None = desconhecido).
    """

    tensors: List[np.ndarray]
    grid: GridSpec
    norm_log: float = 0.0
    rng_seed: int = 0
    domain_loss: float = 0.0
    center: Optional[int] = None

    @classmethod
    def empty(cls, grid: GridSpec, rng_seed: int = 0) -> "FmpsState":
        return cls(tensors=[], grid=grid, rng_seed=rng_seed)

    @classmethod
    def product(
        cls,
        wavefunctions: Sequence[np.ndarray],
        grid: GridSpec,
        rng_seed: int = 0,
    ) -> "FmpsState":
        """Estado produto a partir de funcoes de onda de um modo."""
        tensors = []
        for psi in wavefunctions:
            psi = np.asarray(psi, dtype=complex)
            if psi.shape != (grid.n_points,):
                raise ValueError(
                    f"funcao de onda com shape {psi.shape}, esperado ({grid.n_points},)"
                )
            tensors.append(psi.reshape(1, grid.n_points, 1).copy())
        return cls(tensors=tensors, grid=grid, rng_seed=rng_seed)

    @property
    def n_modes(self) -> int:
        return len(self.tensors)

    @property
    def truncation_weight(self) -> float:
        return self.norm_log

    def bond_dims(self) -> List[int]:
        return [t.shape[2] for t in self.tensors[:-1]]

    def copy(self) -> "FmpsState":
        return FmpsState(
            tensors=[t.copy() for t in self.tensors],
            grid=self.grid,
            norm_log=self.norm_log,
            rng_seed=self.rng_seed,
            domain_loss=self.domain_loss,
            center=self.center,
        )

    def norm(self) -> float:
        return math.sqrt(max(inner(self, self).real, 0.0))

    def normalize(self) -> "FmpsState":
        nrm = self.norm()
        if nrm == 0.0:
            raise DomainLossError("state lost domain")
        if self.tensors:
            idx = self.center if self.center is not None else 0
            self.tensors[idx] = self.tensors[idx] / nrm
        return self

    def to_dense(self) -> np.ndarray:
        """Funcao de onda densa (oraculo); limitado a 2^24 amplitudes."""
        if not self.tensors:
            return np.ones(())
        if self.grid.n_points ** self.n_modes > 2 ** 24:
            raise ValueError(
                f"estado denso grande demais: {self.n_modes} modos x {self.grid.n_points} pontos"
            )
        out = self.tensors[0]
        for t in self.tensors[1:]:
            out = np.tensordot(out, t, axes=(-1, 0))
        return out[0, ..., 0]


def inner(bra: FmpsState, ket: FmpsState) -> complex:
    """<bra|ket> por contracao da esquerda para a direita."""
    if bra.n_modes != ket.n_modes:
        raise ValueError(f"numero de modos difere: {bra.n_modes} vs {ket.n_modes}")
    env = np.ones((1, 1), dtype=complex)
    for a, b in zip(bra.tensors, ket.tensors):
        env = transfer_step(env, a, b)
    return complex(env[0, 0])


def transfer_step(
    env: np.ndarray,
    bra: np.ndarray,
    ket: np.ndarray,
    weights: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Avanca o ambiente (chi_bra x chi_ket) por um modo, com peso diagonal opcional."""
    tmp = np.tensordot(env, ket, axes=(1, 0))
    if weights is not None:
        tmp = tmp * weights[None, :, None]
    return np.tensordot(bra.conj(), tmp, axes=([0, 1], [0, 1]))


# ==============================================================================
# FORMA CANONICA
# ==============================================================================

def _left_orthonormalize(state: FmpsState, i: int) -> None:
    A = state.tensors[i]
    l, n, r = A.shape
    Q, R = np.linalg.qr(A.reshape(l * n, r))
    state.tensors[i] = Q.reshape(l, n, Q.shape[1])
    state.tensors[i + 1] = np.tensordot(R, state.tensors[i + 1], axes=(1, 0))


def _right_orthonormalize(state: FmpsState, i: int) -> None:
    A = state.tensors[i]
    l, n, r = A.shape
    Q, R = np.linalg.qr(A.reshape(l, n * r).T)
    state.tensors[i] = Q.T.reshape(Q.shape[1], n, r)
    state.tensors[i - 1] = np.tensordot(state.tensors[i - 1], R.T, axes=(2, 0))


def move_center(state: FmpsState, target: int) -> None:
    """Leva o centro de ortogonalidade ate o modo target (QR em varredura)."""
    if not 0 <= target < state.n_modes:
        raise ValueError(f"modo {target} invalido para {state.n_modes} modos")

    if state.center is None:
        for i in range(target):
            _left_orthonormalize(state, i)
        for i in range(state.n_modes - 1, target, -1):
            _right_orthonormalize(state, i)
    else:
        c = state.center
        while c < target:
            _left_orthonormalize(state, c)
            c += 1
        while c > target:
            _right_orthonormalize(state, c)
            c -= 1

    state.center = target


# ==============================================================================
# KERNELS DE UM MODO
# ==============================================================================

def _axis_shape(ndim: int, axis: int) -> List[int]:
    shape = [1] * ndim
    shape[axis] = -1
    return shape


def centered_dft(values: np.ndarray, axis: int = -1, inverse: bool = False) -> np.ndarray:
    """DFT centrada unitaria: e^{-i pi N / 2} (ou a inversa)."""
    shifted = np.fft.ifftshift(values, axes=axis)
    if inverse:
        out = np.fft.ifft(shifted, axis=axis, norm="ortho")
    else:
        out = np.fft.fft(shifted, axis=axis, norm="ortho")
    return np.fft.fftshift(out, axes=axis)


def _quarter_turns(values: np.ndarray, turns: int, axis: int) -> np.ndarray:
    turns %= 4
    if turns == 1:
        return centered_dft(values, axis)
    if turns == 2:
        # paridade na grade periodica: psi[j] -> psi[(n - j) mod n]
        return np.roll(np.flip(values, axis=axis), 1, axis=axis)
    if turns == 3:
        return centered_dft(values, axis, inverse=True)
    return values


def fractional_fourier(
    values: np.ndarray,
    phi: float,
    grid: GridSpec,
    axis: int = -1,
) -> np.ndarray:
    """
    Aplica e^{-i phi N} ao longo de um eixo fisico.

    Quartos de volta sao DFTs exatas; o resto |r| <= pi/4 usa tres chirps
    (q, p, q) com tan(r/2) e sin(r), mais a fase global e^{i r / 2}.
    """
    if not math.isfinite(phi):
        raise ValueError(f"angulo nao finito: {phi}")

    out = np.asarray(values, dtype=complex)
    turns = int(round(phi / (math.pi / 2)))
    rest = phi - turns * math.pi / 2

    if abs(rest) > 1e-15:
        shape = _axis_shape(out.ndim, axis)
        q2 = (grid.q ** 2).reshape(shape)
        k2 = (grid.k ** 2).reshape(shape)
        chirp = np.exp(-0.5j * math.tan(rest / 2) * q2)
        out = out * chirp
        out = np.fft.ifft(np.fft.fft(out, axis=axis) * np.exp(-0.5j * math.sin(rest) * k2), axis=axis)
        out = out * chirp * np.exp(0.5j * rest)

    return _quarter_turns(out, turns, axis)


def damping_kernel(values: np.ndarray, epsilon: float, grid: GridSpec, axis: int = -1) -> np.ndarray:
    """
    Aplica e^{-eps N} ao longo de um eixo (sem normalizar).

    Fatoracao gaussiana exata: e^{eps/2} G_q(tanh(eps/2)) G_p(sinh eps) G_q(tanh(eps/2)).
    """
    if not (math.isfinite(epsilon) and epsilon > 0):
        raise ValueError(f"epsilon deve ser positivo e finito: {epsilon}")

    out = np.asarray(values, dtype=complex)
    shape = _axis_shape(out.ndim, axis)
    gauss_q = np.exp(-0.5 * math.tanh(epsilon / 2) * grid.q ** 2).reshape(shape)
    gauss_p = np.exp(-0.5 * math.sinh(epsilon) * grid.k ** 2).reshape(shape)

    out = out * gauss_q
    out = np.fft.ifft(np.fft.fft(out, axis=axis) * gauss_p, axis=axis)
    return out * gauss_q * math.exp(epsilon / 2)


def displacement_kernel(
    values: np.ndarray,
    q0: float,
    p0: float,
    grid: GridSpec,
    axis: int = -1,
    method: str = "spectral",
) -> np.ndarray:
    """
    Aplica D = exp(i (p0 q - q0 p)): psi(q) -> e^{i p0 q} e^{-i p0 q0 / 2} psi(q - q0).

    method="spectral" desloca por fase na FFT (exato para funcoes de banda
    limitada); method="linear" interpola linearmente (zero fora da grade).
    """
    if not (math.isfinite(q0) and math.isfinite(p0)):
        raise ValueError(f"deslocamento nao finito: ({q0}, {p0})")

    out = np.asarray(values, dtype=complex)
    shape = _axis_shape(out.ndim, axis)

    if q0 != 0.0:
        if method == "spectral":
            ramp = np.exp(-1j * q0 * grid.k).reshape(shape)
            out = np.fft.ifft(np.fft.fft(out, axis=axis) * ramp, axis=axis)
        elif method == "linear":
            pos = (grid.q - q0 - grid.q[0]) / grid.spacing
            lo = np.floor(pos).astype(int)
            frac = pos - lo
            n = grid.n_points
            moved = np.moveaxis(out, axis, -1)
            lo_ok = (lo >= 0) & (lo < n)
            hi_ok = (lo + 1 >= 0) & (lo + 1 < n)
            left = np.where(lo_ok, moved[..., np.clip(lo, 0, n - 1)], 0.0)
            right = np.where(hi_ok, moved[..., np.clip(lo + 1, 0, n - 1)], 0.0)
            out = np.moveaxis((1 - frac) * left + frac * right, -1, axis)
        else:
            raise ValueError(f"metodo de deslocamento desconhecido: {method}")

    if p0 != 0.0:
        out = out * np.exp(1j * p0 * (grid.q - q0 / 2)).reshape(shape)

    return out


def parity_weights(grid: GridSpec, scale: float = 1.0) -> np.ndarray:
    """(-1)^{round(q * scale / sqrt(pi))} na grade."""
    bins = np.rint(grid.q * scale / SQRT_PI)
    return np.where(bins % 2 == 0, 1.0, -1.0)


def _edge_mass(tensor: np.ndarray, grid: GridSpec) -> float:
    weights = np.sum(np.abs(tensor) ** 2, axis=(0, 2))
    total = weights.sum()
    if total == 0.0:
        return 0.0
    edge = np.abs(grid.q) > EDGE_FRACTION * grid.half_width
    return float(weights[edge].sum() / total)


# ==============================================================================
# KERNELS DE DOIS MODOS
# ==============================================================================

def _shear(values: np.ndarray, amount: float, along: int, by: int, grid: GridSpec) -> np.ndarray:
    """g = f(..., x_along + amount * x_by, ...) via FFT ao longo de `along`."""
    phase = np.exp(
        1j * amount
        * grid.k.reshape(_axis_shape(values.ndim, along))
        * grid.q.reshape(_axis_shape(values.ndim, by))
    )
    return np.fft.ifft(np.fft.fft(values, axis=along) * phase, axis=along)


def _bilinear_rotate(values: np.ndarray, phi: float, grid: GridSpec, axes: Tuple[int, int]) -> np.ndarray:
    ax, ay = axes
    moved = np.moveaxis(values, (ax, ay), (-2, -1))
    n = grid.n_points
    x = grid.q[:, None]
    y = grid.q[None, :]
    c, s = math.cos(phi), math.sin(phi)
    src_x = (x * c - y * s - grid.q[0]) / grid.spacing
    src_y = (x * s + y * c - grid.q[0]) / grid.spacing

    i0 = np.floor(src_x).astype(int)
    j0 = np.floor(src_y).astype(int)
    fx = src_x - i0
    fy = src_y - j0

    out = np.zeros_like(moved)
    for di, wx in ((0, 1 - fx), (1, fx)):
        for dj, wy in ((0, 1 - fy), (1, fy)):
            ii = i0 + di
            jj = j0 + dj
            ok = (ii >= 0) & (ii < n) & (jj >= 0) & (jj < n)
            gathered = moved[..., np.clip(ii, 0, n - 1), np.clip(jj, 0, n - 1)]
            out = out + np.where(ok, wx * wy, 0.0) * gathered

    return np.moveaxis(out, (-2, -1), (ax, ay))


def rotate_plane(
    values: np.ndarray,
    phi: float,
    grid: GridSpec,
    axes: Tuple[int, int] = (0, 1),
    method: str = "shear",
) -> np.ndarray:
    """
    g(x, y) = f(x cos phi - y sin phi, x sin phi + y cos phi) nos eixos dados.

    method="shear": tres cisalhamentos por FFT, Sx(-tan(phi/2)) Sy(sin phi)
    Sx(-tan(phi/2)); method="bilinear": reamostragem bilinear.
    """
    values = np.asarray(values, dtype=complex)
    if method == "bilinear":
        return _bilinear_rotate(values, phi, grid, axes)
    if method != "shear":
        raise ValueError(f"metodo de beam splitter desconhecido: {method}")

    ax, ay = axes
    a = -math.tan(phi / 2)
    b = math.sin(phi)
    out = _shear(values, a, ax, ay, grid)
    out = _shear(out, b, ay, ax, grid)
    return _shear(out, a, ax, ay, grid)


BS_ANGLES = {"plus": math.pi / 4, "minus": -math.pi / 4}


# ==============================================================================
# OPERACOES SOBRE O ESTADO
# ==============================================================================

def _check_mode(state: FmpsState, mode: int) -> None:
    if not 0 <= mode < state.n_modes:
        raise ValueError(f"modo {mode} invalido para {state.n_modes} modos")


def apply_rotation(state: FmpsState, mode: int, theta: float) -> FmpsState:
    """Rotacao de fase R(theta) = e^{i theta N} no modo (in-place)."""
    _check_mode(state, mode)
    # massa de borda so vale como marginal com o centro no modo
    move_center(state, mode)
    rotated = fractional_fourier(state.tensors[mode], -theta, state.grid, axis=1)
    state.tensors[mode] = rotated
    state.domain_loss += _edge_mass(rotated, state.grid)
    return state


def apply_damping(state: FmpsState, mode: int, epsilon: float, normalize: bool = True) -> FmpsState:
    """Amortecimento e^{-eps N} num modo (nao unitario)."""
    _check_mode(state, mode)
    state.tensors[mode] = damping_kernel(state.tensors[mode], epsilon, state.grid, axis=1)
    state.center = None
    if normalize:
        state.normalize()
    return state


def apply_displacement(
    state: FmpsState,
    mode: int,
    q0: float,
    p0: float,
    method: str = "spectral",
) -> FmpsState:
    """Deslocamento exp(i (p0 q - q0 p)) num modo (in-place)."""
    _check_mode(state, mode)
    state.tensors[mode] = displacement_kernel(
        state.tensors[mode], q0, p0, state.grid, axis=1, method=method
    )
    return state


def _split_two_site(
    state: FmpsState,
    i: int,
    theta: np.ndarray,
    policy: SvdPolicy,
) -> float:
    """Separa o bloco (l, n, n, r) nos modos i, i+1; devolve peso relativo descartado."""
    l, n, _, r = theta.shape
    total = float(np.vdot(theta, theta).real)
    rng = np.random.default_rng([policy.seed, state.rng_seed, i])
    U, S, V, discarded = truncated_rsvd(theta.reshape(l * n, n * r), policy, rng)

    kept = float(np.sum(S ** 2))
    if kept > 0.0:
        S = S * math.sqrt(total / kept)

    k = S.shape[0]
    state.tensors[i] = U.reshape(l, n, k)
    state.tensors[i + 1] = (S[:, None] * V.conj().T).reshape(k, n, r)
    state.center = i + 1

    relative = discarded / total if total > 0.0 else 0.0
    state.norm_log += relative
    if relative > policy.rel_tolerance:
        logger.debug(f"Truncamento no bond {i}: chi={k}, peso descartado={relative:.3e}")
    return relative


def apply_beamsplitter(
    state: FmpsState,
    i: int,
    convention: str = "plus",
    policy: Optional[SvdPolicy] = None,
    method: str = "shear",
) -> FmpsState:
    """
    Beam splitter 50:50 nos modos adjacentes (i, i+1).

    Args:
        state: Estado (modificado in-place)
        i: Modo da esquerda
        convention: "plus" ou "minus"
        policy: Politica de SVD para separar o bloco de dois modos
        method: "shear" (espectral) ou "bilinear"

    Raises:
        ValueError: Modos nao adjacentes ou convencao desconhecida
    """
    if not 0 <= i < state.n_modes - 1:
        raise ValueError(
            f"beam splitter exige modos adjacentes (i, i+1); i={i}, modos={state.n_modes}"
        )
    if convention not in BS_ANGLES:
        raise ValueError(f"convencao desconhecida: {convention}")

    policy = policy or SvdPolicy()
    move_center(state, i)

    theta = np.tensordot(state.tensors[i], state.tensors[i + 1], axes=(2, 0))
    theta = rotate_plane(theta, BS_ANGLES[convention], state.grid, axes=(1, 2), method=method)
    _split_two_site(state, i, theta, policy)
    return state


def marginal_density(state: FmpsState, mode: int, theta: float = 0.0) -> np.ndarray:
    """Densidade marginal (normalizada, por unidade de quadratura) de q cos + p sin."""
    _check_mode(state, mode)
    work = state.copy()
    move_center(work, mode)
    rotated = fractional_fourier(work.tensors[mode], theta, state.grid, axis=1)
    weights = np.sum(np.abs(rotated) ** 2, axis=(0, 2))
    return weights / (weights.sum() * state.grid.spacing)


def measure_homodyne(
    state: FmpsState,
    mode: int,
    theta: float,
    rng: np.random.Generator,
) -> Tuple[float, FmpsState]:
    """
    Mede q cos(theta) + p sin(theta) no modo e colapsa.

    Args:
        state: Estado normalizado (modificado in-place)
        mode: Modo medido (removido da cadeia)
        theta: Angulo da quadratura a partir de q
        rng: Gerador de numeros aleatorios

    Returns:
        Tupla (m, state) com m continuo (CDF inversa linear entre celulas)

    Raises:
        DomainLossError: Massa marginal total < 1e-12
    """
    _check_mode(state, mode)
    grid = state.grid
    move_center(state, mode)

    A = fractional_fourier(state.tensors[mode], theta, grid, axis=1)
    weights = np.sum(np.abs(A) ** 2, axis=(0, 2))
    total = float(weights.sum())
    if total < 1e-12:
        raise DomainLossError("state lost domain")

    state.domain_loss += _edge_mass(A, grid)

    half = grid.spacing / 2
    edges = np.concatenate([grid.q - half, [grid.q[-1] + half]])
    cdf = np.concatenate([[0.0], np.cumsum(weights)]) / total
    m = float(np.interp(rng.random(), cdf, edges))

    j = int(np.clip(np.rint((m - grid.q[0]) / grid.spacing), 0, grid.n_points - 1))
    residual = A[:, j, :]
    nrm = float(np.linalg.norm(residual))
    if nrm == 0.0:
        raise DomainLossError("state lost domain")
    residual = residual / nrm

    del state.tensors[mode]
    if not state.tensors:
        state.center = None
    elif mode > 0:
        state.tensors[mode - 1] = np.tensordot(state.tensors[mode - 1], residual, axes=(2, 0))
        state.center = mode - 1
    else:
        state.tensors[0] = np.tensordot(residual, state.tensors[0], axes=(1, 0))
        state.center = 0

    return m, state


def insert_two_mode(
    state: FmpsState,
    pos: int,
    pair,
    policy: Optional[SvdPolicy] = None,
) -> FmpsState:
    """
    Injeta um par de dois modos entre os modos pos-1 e pos.

    O bond existente D atravessa o par: os eixos compartilhados sao fundidos e
    o bond interno vira D * b. Sem SVD enquanto D * b <= chi_max.

    Raises:
        ValueError: Grade do par diferente da grade do estado, ou pos invalido
    """
    if pair.grid != state.grid:
        raise ValueError(
            f"grade do par ({pair.grid.n_points}) difere da grade do estado ({state.grid.n_points})"
        )
    if not 0 <= pos <= state.n_modes:
        raise ValueError(f"posicao de insercao {pos} invalida para {state.n_modes} modos")
    if len(pair.tensors) != 2:
        raise ValueError("o par deve ter exatamente dois tensores")

    policy = policy or SvdPolicy()
    first, second = pair.tensors
    n = state.grid.n_points
    b = first.shape[2]

    if state.n_modes == 0:
        state.tensors = [first.copy(), second.copy()]
        state.center = None
        return state

    D = 1 if pos in (0, state.n_modes) else state.tensors[pos - 1].shape[2]
    eye = np.eye(D)
    left = np.einsum("de,xb->dxeb", eye, first[0]).reshape(D, n, D * b)
    right = np.einsum("de,bx->dbxe", eye, second[:, :, 0]).reshape(D * b, n, D)

    state.tensors[pos:pos] = [left, right]
    state.center = None

    if D * b > policy.chi_max:
        logger.debug(f"Insercao excede chi_max ({D * b} > {policy.chi_max}); truncando")
        move_center(state, pos)
        theta = np.tensordot(state.tensors[pos], state.tensors[pos + 1], axes=(2, 0))
        _split_two_site(state, pos, theta, policy)

    return state


# ==============================================================================
# VALORES ESPERADOS
# ==============================================================================

def expect_displacement(
    state: FmpsState,
    displacements: Mapping[int, complex],
    method: str = "spectral",
) -> complex:
    """
    <psi| prod_i D(alpha_i) |psi> com alpha = (q0 + i p0) / sqrt(2).

    O estado nao e alterado; o resultado e dividido por <psi|psi>.
    """
    ket = state.copy()
    for mode, alpha in displacements.items():
        alpha = complex(alpha)
        if not (math.isfinite(alpha.real) and math.isfinite(alpha.imag)):
            raise ValueError(f"alpha nao finito no modo {mode}: {alpha}")
        if alpha != 0:
            apply_displacement(
                ket, mode, math.sqrt(2) * alpha.real, math.sqrt(2) * alpha.imag, method=method
            )
    return inner(state, ket) / inner(state, state).real


def expect_quadrature_parity(
    state: FmpsState,
    mode_quadratures: Mapping[int, Tuple[float, float]],
) -> float:
    """
    Valor esperado do produto de paridades binadas por modo.

    mode_quadratures[mode] = (theta, scale): paridade (-1)^{round(x scale / sqrt(pi))}
    da quadratura x = q cos(theta) + p sin(theta).
    """
    env = np.ones((1, 1), dtype=complex)
    for mode, tensor in enumerate(state.tensors):
        if mode in mode_quadratures:
            theta, scale = mode_quadratures[mode]
            rotated = fractional_fourier(tensor, theta, state.grid, axis=1)
            env = transfer_step(env, rotated, rotated, parity_weights(state.grid, scale))
        else:
            env = transfer_step(env, tensor, tensor)
    norm2 = inner(state, state).real
    return float(env[0, 0].real / norm2)
