"""
Testes unitarios para fmps.py

Testa:
- Grade auto-dual e politica de SVD
- SVD truncada randomizada (posto, peso descartado, entradas invalidas)
- Fourier fracionaria contra autofuncoes de Hermite
- Beam splitter por cisalhamentos contra o oraculo denso
- Medida homodina, injecao de pares e valores esperados
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.python.fmps import (
    DomainLossError,
    FmpsState,
    GridSpec,
    SvdPolicy,
    apply_beamsplitter,
    apply_damping,
    apply_displacement,
    apply_rotation,
    expect_displacement,
    expect_quadrature_parity,
    fractional_fourier,
    inner,
    insert_two_mode,
    marginal_density,
    measure_homodyne,
    move_center,
    parity_weights,
    rotate_plane,
    truncated_rsvd,
)
from src.python.states import bell_pair, epsilon_from_db


# ==============================================================================
# FIXTURES
# ==============================================================================

@pytest.fixture
def grid():
    return GridSpec(256)


def _unit(psi):
    return psi / np.linalg.norm(psi)


@pytest.fixture
def vacuum(grid):
    """Estado fundamental do oscilador, normalizado na grade."""
    return _unit(np.exp(-grid.q ** 2 / 2).astype(complex))


@pytest.fixture
def first_excited(grid):
    """Primeira autofuncao de Hermite (N = 1)."""
    return _unit((grid.q * np.exp(-grid.q ** 2 / 2)).astype(complex))


def _mean(density, grid):
    return float(np.sum(grid.q * density) * grid.spacing)


class _Pair:
    """Par de dois modos minimo (tensores + grade) para insert_two_mode."""

    def __init__(self, tensors, grid):
        self.tensors = tensors
        self.grid = grid


# ==============================================================================
# TESTES - Grade e politica
# ==============================================================================

def test_grid_is_self_dual(grid):
    """Testa se a grade de momento coincide com a de posicao."""
    assert grid.spacing == pytest.approx(math.sqrt(2 * math.pi / 256))
    assert grid.half_width == pytest.approx(math.sqrt(math.pi * 256 / 2))
    assert np.allclose(np.sort(grid.k), np.sort(grid.q))


@pytest.mark.parametrize("n", [0, 4, 100, 257])
def test_grid_rejects_invalid_sizes(n):
    with pytest.raises(ValueError, match="potencia de dois"):
        GridSpec(n)


def test_svd_policy_validation():
    with pytest.raises(ValueError, match="rel_tolerance"):
        SvdPolicy(rel_tolerance=0.0)
    with pytest.raises(ValueError, match="chi_max"):
        SvdPolicy(chi_max=1)


# ==============================================================================
# TESTES - SVD truncada
# ==============================================================================

def test_truncated_rsvd_recovers_low_rank():
    """Matriz de posto 3 deve ser recuperada sem perda pelo caminho randomizado."""
    rng = np.random.default_rng(7)
    M = rng.standard_normal((120, 3)) @ rng.standard_normal((3, 90))
    policy = SvdPolicy(chi_max=10, oversampling=4)

    U, S, V, discarded = truncated_rsvd(M, policy, rng)

    assert S.shape == (3,)
    assert np.all(np.diff(S) <= 0)
    assert np.allclose(U @ np.diag(S) @ V.conj().T, M, atol=1e-9)
    assert discarded == pytest.approx(0.0, abs=1e-9 * np.sum(M ** 2))


def test_truncated_rsvd_reports_discarded_weight():
    """Peso descartado deve ser exatamente a soma dos valores singulares cortados."""
    M = np.diag([4.0, 3.0, 2.0, 1.0])
    policy = SvdPolicy(chi_max=2)

    _, S, _, discarded = truncated_rsvd(M, policy)

    assert np.allclose(S, [4.0, 3.0])
    assert discarded == pytest.approx(2.0 ** 2 + 1.0 ** 2)


def test_truncated_rsvd_geometric_spectrum_near_optimal():
    """Espectro geometrico 256 x 256: peso descartado ate 1.5x o da SVD exata."""
    rng = np.random.default_rng(21)
    n = 256
    U0, _ = np.linalg.qr(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
    V0, _ = np.linalg.qr(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
    sigma = 0.8 ** np.arange(n)
    M = (U0 * sigma) @ V0.conj().T
    policy = SvdPolicy(chi_max=20, rel_tolerance=1e-12)

    U, S, V, discarded = truncated_rsvd(M, policy, rng)

    exact_tail = float(np.sum(sigma[20:] ** 2))
    residual = float(np.linalg.norm(M - U @ np.diag(S) @ V.conj().T) ** 2)
    assert S.shape == (20,)
    assert discarded <= 1.5 * exact_tail
    assert residual <= 1.5 * exact_tail
    assert discarded == pytest.approx(residual, rel=1e-6)


def test_truncated_rsvd_zero_matrix():
    U, S, V, discarded = truncated_rsvd(np.zeros((5, 4)), SvdPolicy())
    assert S.tolist() == [0.0]
    assert discarded == 0.0


def test_truncated_rsvd_rejects_invalid_input():
    with pytest.raises(ValueError, match="nao finitas"):
        truncated_rsvd(np.array([[1.0, np.nan], [0.0, 1.0]]), SvdPolicy())
    with pytest.raises(ValueError, match="2D"):
        truncated_rsvd(np.ones(4), SvdPolicy())


# ==============================================================================
# TESTES - Rotacoes de fase
# ==============================================================================

@pytest.mark.parametrize("phi", [0.3, -1.1, math.pi / 2, 2.5])
def test_fractional_fourier_hermite_eigenphases(grid, vacuum, first_excited, phi):
    """e^{-i phi N} deixa o vacuo invariante e da fase e^{-i phi} a N = 1."""
    assert np.allclose(fractional_fourier(vacuum, phi, grid), vacuum, atol=1e-8)
    assert np.allclose(
        fractional_fourier(first_excited, phi, grid),
        np.exp(-1j * phi) * first_excited,
        atol=1e-8,
    )


def test_fractional_fourier_composes(grid, vacuum):
    psi = _unit(vacuum * np.exp(1j * 0.8 * grid.q) * np.exp(-(grid.q - 1.0) ** 2 / 4))
    once = fractional_fourier(psi, 0.9, grid)
    twice = fractional_fourier(fractional_fourier(psi, 0.4, grid), 0.5, grid)
    assert np.allclose(once, twice, atol=1e-8)


def test_fractional_fourier_rejects_non_finite(grid, vacuum):
    with pytest.raises(ValueError, match="nao finito"):
        fractional_fourier(vacuum, float("nan"), grid)


def test_apply_rotation_sign_convention(grid, first_excited):
    """apply_rotation(theta) e e^{+i theta N}."""
    state = FmpsState.product([first_excited], grid)
    apply_rotation(state, 0, 0.7)
    assert np.allclose(state.to_dense(), np.exp(0.7j) * first_excited, atol=1e-8)


def test_apply_rotation_edge_mass_uses_marginal(grid, vacuum, first_excited):
    """Massa de borda contada no centro: ramo fraco na borda pesa pelo seu bond."""
    edge = _unit(np.exp(-(grid.q - 18.8) ** 2 / (2 * 0.5 ** 2)).astype(complex))
    first = np.stack([vacuum, edge], axis=-1).reshape(1, grid.n_points, 2)
    second = np.stack([vacuum, 0.01 * first_excited], axis=0).reshape(2, grid.n_points, 1)
    state = FmpsState(tensors=[first, second], grid=grid)

    apply_rotation(state, 0, 0.1)

    density = marginal_density(state, 0)
    outside = np.abs(grid.q) > 0.9 * grid.half_width
    expected = float(density[outside].sum() * grid.spacing)
    assert state.center == 0
    assert state.domain_loss == pytest.approx(expected, rel=1e-6, abs=1e-12)
    assert state.domain_loss < 1e-3


def test_homodyne_marginal_means(grid, vacuum):
    """Marginal em theta mede q cos(theta) + p sin(theta) de um coerente."""
    q0, p0 = 1.5, -0.7
    state = FmpsState.product([vacuum], grid)
    apply_displacement(state, 0, q0, p0)

    for theta in (0.0, math.pi / 2, math.pi / 4, 1.2):
        expected = q0 * math.cos(theta) + p0 * math.sin(theta)
        assert _mean(marginal_density(state, 0, theta), grid) == pytest.approx(expected, abs=1e-6)


# ==============================================================================
# TESTES - Amortecimento e deslocamento
# ==============================================================================

def test_damping_keeps_number_eigenstates(grid, vacuum, first_excited):
    state = FmpsState.product([vacuum, first_excited], grid)
    apply_damping(state, 0, 0.2)
    apply_damping(state, 1, 0.2)
    dense = state.to_dense()
    assert state.norm() == pytest.approx(1.0)
    assert abs(np.vdot(np.outer(vacuum, first_excited), dense)) == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("eps", [0.03, 0.1, 0.3])
def test_damping_commutes_with_rotation(grid, vacuum, eps):
    a = FmpsState.product([vacuum], grid)
    apply_displacement(a, 0, 2.0, 0.5)
    b = a.copy()

    apply_rotation(a, 0, 0.6)
    apply_damping(a, 0, eps)
    apply_damping(b, 0, eps)
    apply_rotation(b, 0, 0.6)

    assert abs(inner(a, b)) == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("eps", [0.03, 0.1, 0.3])
def test_damping_commutes_with_beamsplitter(grid, vacuum, first_excited, eps):
    """Beam splitter conserva N1 + N2, logo comuta com o amortecimento dos dois modos."""
    a = FmpsState.product([vacuum, first_excited], grid)
    apply_displacement(a, 0, 1.5, -0.5)
    b = a.copy()

    apply_beamsplitter(a, 0, "plus")
    apply_damping(a, 0, eps)
    apply_damping(a, 1, eps)

    apply_damping(b, 0, eps)
    apply_damping(b, 1, eps)
    apply_beamsplitter(b, 0, "plus")

    assert abs(inner(a, b)) == pytest.approx(1.0, abs=5e-7)


def test_damping_rejects_non_positive_epsilon(grid, vacuum):
    state = FmpsState.product([vacuum], grid)
    with pytest.raises(ValueError, match="epsilon"):
        apply_damping(state, 0, 0.0)


def test_expect_displacement_on_vacuum(grid, vacuum):
    """<0|D(alpha)|0> = exp(-|alpha|^2 / 2)."""
    state = FmpsState.product([vacuum], grid)
    alpha = (0.8 + 0.3j) / math.sqrt(2)
    value = expect_displacement(state, {0: alpha})
    assert value == pytest.approx(math.exp(-abs(alpha) ** 2 / 2), abs=1e-8)


def test_linear_displacement_close_to_spectral(grid, vacuum):
    spectral = FmpsState.product([vacuum], grid)
    linear = spectral.copy()
    apply_displacement(spectral, 0, 0.37, 0.0)
    apply_displacement(linear, 0, 0.37, 0.0, method="linear")
    assert abs(inner(spectral, linear)) / linear.norm() > 0.999


# ==============================================================================
# TESTES - Beam splitter
# ==============================================================================

def test_rotate_plane_matches_dense_oracle(grid):
    """Tres cisalhamentos reproduzem f(x c - y s, x s + y c) ponto a ponto."""
    x = grid.q[:, None]
    y = grid.q[None, :]

    def f(u, v):
        return np.exp(-((u - 1.0) ** 2 + (v + 0.5) ** 2) / 2) * np.exp(0.3j * u)

    phi = math.pi / 4
    c, s = math.cos(phi), math.sin(phi)
    expected = f(x * c - y * s, x * s + y * c)

    assert np.max(np.abs(rotate_plane(f(x, y), phi, grid) - expected)) < 1e-8
    assert np.max(np.abs(rotate_plane(f(x, y), phi, grid, method="bilinear") - expected)) < 1e-2


def test_beamsplitter_splits_coherent_state(grid, vacuum):
    """Coerente em q0 no modo i vai para (q0/sqrt2, -q0/sqrt2) com 'plus'."""
    q0 = 2.0
    state = FmpsState.product([vacuum, vacuum], grid)
    apply_displacement(state, 0, q0, 0.0)

    apply_beamsplitter(state, 0, "plus")

    assert state.bond_dims() == [1]
    assert _mean(marginal_density(state, 0), grid) == pytest.approx(q0 / math.sqrt(2), abs=1e-6)
    assert _mean(marginal_density(state, 1), grid) == pytest.approx(-q0 / math.sqrt(2), abs=1e-6)


def test_beamsplitter_plus_then_minus_is_identity(grid, vacuum, first_excited):
    state = FmpsState.product([first_excited, vacuum], grid)
    apply_displacement(state, 1, 0.0, 1.2)
    reference = state.to_dense()

    apply_beamsplitter(state, 0, "plus")
    assert state.bond_dims()[0] > 1
    apply_beamsplitter(state, 0, "minus")

    assert abs(np.vdot(reference, state.to_dense())) == pytest.approx(1.0, abs=1e-7)


def test_beamsplitter_rejects_bad_arguments(grid, vacuum):
    state = FmpsState.product([vacuum, vacuum, vacuum], grid)
    with pytest.raises(ValueError, match="adjacentes"):
        apply_beamsplitter(state, 2)
    with pytest.raises(ValueError, match="convencao"):
        apply_beamsplitter(state, 0, "diagonal")


# ==============================================================================
# TESTES - Forma canonica, medida e injecao
# ==============================================================================

def test_move_center_preserves_state(grid, vacuum, first_excited):
    state = FmpsState.product([vacuum, first_excited, vacuum], grid)
    apply_beamsplitter(state, 0, "plus")
    apply_beamsplitter(state, 1, "minus")
    before = state.to_dense()

    move_center(state, 0)
    move_center(state, 2)

    assert state.center == 2
    assert np.allclose(state.to_dense(), before, atol=1e-10)


def test_measure_homodyne_removes_mode(grid, vacuum, first_excited):
    state = FmpsState.product([vacuum, first_excited, vacuum], grid)
    apply_beamsplitter(state, 0, "plus")

    m, state = measure_homodyne(state, 1, 0.0, np.random.default_rng(3))

    assert state.n_modes == 2
    assert abs(m) < grid.half_width
    assert state.norm() == pytest.approx(1.0, abs=1e-8)


def test_measure_homodyne_is_reproducible(grid, vacuum):
    outcomes = []
    for _ in range(2):
        state = FmpsState.product([vacuum], grid)
        apply_displacement(state, 0, 1.0, 0.0)
        m, _ = measure_homodyne(state, 0, 0.0, np.random.default_rng(11))
        outcomes.append(m)
    assert outcomes[0] == outcomes[1]


def test_measure_homodyne_domain_loss(grid):
    state = FmpsState.product([np.zeros(grid.n_points)], grid)
    with pytest.raises(DomainLossError, match="state lost domain"):
        measure_homodyne(state, 0, 0.0, np.random.default_rng(0))


def test_insert_two_mode_grows_bond(grid, vacuum, first_excited):
    """Par de bond 2 entre dois modos ja emaranhados: bond interno vira D * 2."""
    state = FmpsState.product([vacuum, first_excited], grid)
    apply_beamsplitter(state, 0, "plus")
    D = state.bond_dims()[0]

    first = np.stack([vacuum, first_excited], axis=-1).reshape(1, grid.n_points, 2) / math.sqrt(2)
    second = np.stack([first_excited, vacuum], axis=0).reshape(2, grid.n_points, 1)
    pair = _Pair([first, second], grid)

    before = state.norm()
    insert_two_mode(state, 1, pair, SvdPolicy(chi_max=64))

    assert state.n_modes == 4
    assert state.bond_dims() == [D, 2 * D, D]
    assert state.norm() == pytest.approx(before, abs=1e-10)


def test_insert_two_mode_rejects_grid_mismatch(grid, vacuum):
    state = FmpsState.product([vacuum], grid)
    other = GridSpec(128)
    pair = _Pair([np.ones((1, 128, 1)), np.ones((1, 128, 1))], other)
    with pytest.raises(ValueError, match="grade do par"):
        insert_two_mode(state, 1, pair)


def test_insert_bell_pair_then_homodyne_correlated(grid, vacuum):
    """Par |Phi+> injetado: medidas em q dos dois modos diferem por multiplo par de sqrt(pi)."""
    sqrt_pi = math.sqrt(math.pi)
    pair = bell_pair(epsilon_from_db(10.0), magic=False, grid=grid, method="comb")
    host = FmpsState.product([vacuum], grid)
    insert_two_mode(host, 1, pair)

    rng = np.random.default_rng(17)
    hits = 0
    for _ in range(40):
        state = host.copy()
        m1, state = measure_homodyne(state, 1, 0.0, rng)
        m2, state = measure_homodyne(state, 1, 0.0, rng)
        gap = (m1 - m2) / sqrt_pi
        hits += abs(gap - 2 * round(gap / 2)) < 0.5
    assert hits >= 38


@pytest.mark.slow
def test_homodyne_vacuum_sample_variance(grid, vacuum):
    """10^4 medidas de q no vacuo: variancia amostral 0.5 +- 0.02."""
    rng = np.random.default_rng(2024)
    outcomes = [
        measure_homodyne(FmpsState.product([vacuum], grid), 0, 0.0, rng)[0]
        for _ in range(10_000)
    ]
    assert np.var(outcomes, ddof=1) == pytest.approx(0.5, abs=0.02)


# ==============================================================================
# TESTES - Paridades binadas
# ==============================================================================

def test_parity_weights_bins(grid):
    w = parity_weights(grid)
    sqrt_pi = math.sqrt(math.pi)
    assert w[np.argmin(np.abs(grid.q))] == 1.0
    assert w[np.argmin(np.abs(grid.q - sqrt_pi))] == -1.0
    assert w[np.argmin(np.abs(grid.q - 2 * sqrt_pi))] == 1.0


def test_quadrature_parity_on_narrow_state(grid):
    """Estado estreito em q = 0 tem paridade Z ~ +1; deslocado de sqrt(pi), ~ -1."""
    narrow = _unit(np.exp(-grid.q ** 2 / (2 * 0.25 ** 2)).astype(complex))
    state = FmpsState.product([narrow], grid)
    assert expect_quadrature_parity(state, {0: (0.0, 1.0)}) == pytest.approx(1.0, abs=1e-4)

    apply_displacement(state, 0, math.sqrt(math.pi), 0.0)
    assert expect_quadrature_parity(state, {0: (0.0, 1.0)}) == pytest.approx(-1.0, abs=1e-4)


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
