"""
Testes unitarios para states.py

Testa:
- Conversao epsilon <-> dB
- Verificacao do envelope contra o dominio da grade
- Construtores Fock e Mehler
- Pares de Bell (bond 2, norma, fase magica)
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.python.fmps import FmpsState, GridSpec, apply_beamsplitter, expect_quadrature_parity, inner
from src.python.states import (
    EnvelopeDomainError,
    GkpLabel,
    bell_pair,
    build_state,
    check_envelope,
    comb_teeth,
    epsilon_from_db,
    hermite_table,
    required_half_width,
    small_epsilon_db,
    squeezing_db,
)

SQRT_PI = math.sqrt(math.pi)

Z_PARITY = (0.0, 1.0)
X_PARITY = (math.pi / 2, 1.0)


# ==============================================================================
# FIXTURES
# ==============================================================================

@pytest.fixture
def grid():
    return GridSpec(256)


@pytest.fixture
def eps10():
    """Amortecimento de 10 dB (cabe na grade de 256 pontos)."""
    return epsilon_from_db(10.0)


# ==============================================================================
# TESTES - Conversao de squeezing
# ==============================================================================

@pytest.mark.parametrize("s", [-2.5, 0.0, 5.0, 10.0, 14.0, 20.0])
def test_squeezing_round_trip(s):
    assert squeezing_db(epsilon_from_db(s)) == pytest.approx(s, abs=1e-10)


def test_small_epsilon_approximation():
    """Para eps pequeno, s ~ -10 log10(eps)."""
    eps = 0.01
    assert squeezing_db(eps) == pytest.approx(small_epsilon_db(eps), abs=1e-3)
    assert small_epsilon_db(eps) == pytest.approx(20.0)


def test_epsilon_from_db_lower_limit():
    with pytest.raises(ValueError, match="minimo invertivel"):
        epsilon_from_db(-3.1)


@pytest.mark.parametrize("eps", [0.0, -0.1, float("inf")])
def test_squeezing_db_rejects_invalid_epsilon(eps):
    with pytest.raises(ValueError, match="epsilon"):
        squeezing_db(eps)


# ==============================================================================
# TESTES - Envelope e dominio
# ==============================================================================

def test_required_half_width_grows_with_squeezing():
    assert required_half_width(epsilon_from_db(14.0)) > required_half_width(epsilon_from_db(10.0))


def test_check_envelope_rejects_small_grid():
    """14 dB nao cabe em 256 pontos; a excecao informa a meia-largura exigida."""
    eps = epsilon_from_db(14.0)
    small = GridSpec(256)

    with pytest.raises(EnvelopeDomainError, match="Envelope nao cabe") as info:
        check_envelope(eps, small)

    assert info.value.required_half_width == pytest.approx(required_half_width(eps))
    assert info.value.required_half_width > small.half_width

    # 512 pontos bastam
    check_envelope(eps, GridSpec(512))


def test_build_state_propagates_envelope_error():
    with pytest.raises(EnvelopeDomainError):
        build_state(GkpLabel.ZERO, epsilon_from_db(14.0), GridSpec(256))


# ==============================================================================
# TESTES - Pentes e funcoes de Hermite
# ==============================================================================

def test_comb_teeth_positions():
    zero_pos, _ = comb_teeth(GkpLabel.ZERO, 10.0)
    one_pos, _ = comb_teeth(GkpLabel.ONE, 10.0)
    qunaught_pos, _ = comb_teeth(GkpLabel.QUNAUGHT, 10.0)

    assert np.allclose(np.round(zero_pos / (2 * SQRT_PI)), zero_pos / (2 * SQRT_PI))
    assert np.allclose(np.round((one_pos - SQRT_PI) / (2 * SQRT_PI)), (one_pos - SQRT_PI) / (2 * SQRT_PI))
    assert np.allclose(np.diff(qunaught_pos), math.sqrt(2 * math.pi))
    assert np.all(np.abs(zero_pos) <= 10.0)


def test_hermite_table_orthonormal(grid):
    table = hermite_table(grid.q, 30)
    gram = table @ table.T * grid.spacing
    assert np.allclose(gram, np.eye(31), atol=1e-8)


def test_hermite_table_far_tail_is_finite():
    """Reescala em log evita overflow/underflow em x grande e n alto."""
    table = hermite_table(np.array([0.0, 25.0, 40.0]), 600)
    assert np.all(np.isfinite(table))
    assert table[0, 0] == pytest.approx(math.pi ** -0.25)


# ==============================================================================
# TESTES - Construtores
# ==============================================================================

def test_fock_and_mehler_builders_agree(grid, eps10):
    fock = build_state(GkpLabel.PLUS, eps10, grid, method="fock")
    comb = build_state(GkpLabel.PLUS, eps10, grid, method="comb")
    assert np.linalg.norm(fock) == pytest.approx(1.0)
    assert abs(np.vdot(fock, comb)) == pytest.approx(1.0, abs=1e-8)


def test_build_state_unknown_method(grid, eps10):
    with pytest.raises(ValueError, match="construtor desconhecido"):
        build_state(GkpLabel.ZERO, eps10, grid, method="spline")


@pytest.mark.parametrize(
    "label,quadrature,sign",
    [
        (GkpLabel.ZERO, Z_PARITY, 1.0),
        (GkpLabel.ONE, Z_PARITY, -1.0),
        (GkpLabel.PLUS, X_PARITY, 1.0),
        (GkpLabel.MINUS, X_PARITY, -1.0),
    ],
)
def test_logical_parities(grid, eps10, label, quadrature, sign):
    """Estados de base a 10 dB tem paridade binada perto de +-1."""
    psi = build_state(label, eps10, grid, method="comb")
    state = FmpsState.product([psi], grid)
    value = expect_quadrature_parity(state, {0: quadrature})
    assert sign * value > 0.99


# ==============================================================================
# TESTES - Pares de Bell
# ==============================================================================

def test_bell_pair_structure(grid, eps10):
    pair = bell_pair(eps10, magic=False, grid=grid, method="comb")
    state = pair.to_state()

    assert pair.bond_dim == 2
    assert state.n_modes == 2
    assert state.bond_dims() == [2]
    assert state.norm() == pytest.approx(1.0, abs=1e-10)


def test_bell_pair_matches_beamsplitter_on_qunaughts(grid, eps10):
    """Forma fechada = beam splitter 50:50 sobre dois qunaughts amortecidos."""
    qunaught = build_state(GkpLabel.QUNAUGHT, eps10, grid, method="comb")
    reference = FmpsState.product([qunaught, qunaught], grid)
    apply_beamsplitter(reference, 0, "plus")

    pair = bell_pair(eps10, magic=False, grid=grid, method="comb").to_state()
    assert abs(inner(pair, reference)) ** 2 == pytest.approx(1.0, abs=1e-6)


def test_bell_pair_correlations(grid, eps10):
    """|00> + |11>: ZZ e XX ~ +1."""
    state = bell_pair(eps10, magic=False, grid=grid, method="comb").to_state()
    assert expect_quadrature_parity(state, {0: Z_PARITY, 1: Z_PARITY}) > 0.99
    assert expect_quadrature_parity(state, {0: X_PARITY, 1: X_PARITY}) > 0.97


def test_magic_bell_pair_phase(grid, eps10):
    """|00> + e^{i pi/4}|11>: ZZ intacto, XX cai para ~cos(pi/4)."""
    pair = bell_pair(eps10, magic=True, grid=grid, method="comb")
    state = pair.to_state()

    assert pair.magic
    assert state.norm() == pytest.approx(1.0, abs=1e-10)
    assert expect_quadrature_parity(state, {0: Z_PARITY, 1: Z_PARITY}) > 0.99
    assert expect_quadrature_parity(state, {0: X_PARITY, 1: X_PARITY}) == pytest.approx(
        math.cos(math.pi / 4), abs=0.03
    )


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
