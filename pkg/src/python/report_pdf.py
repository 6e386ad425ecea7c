"""
Geracao de PDF com matplotlib (backend Agg) e formatacao pt-BR.

Este modulo gera o relatorio de uma campanha contendo:
- Capa com parametros da execucao (grade, chi, squeezing, semente)
- Curvas de decaimento de RB com ajuste e residuos normalizados
- Taxa de erro por porta vs squeezing contra as curvas analiticas
- Sucesso de Grover por oraculo com as linhas de referencia
"""

import matplotlib
matplotlib.use('Agg')  # Backend headless (sem display) - DEVE ser antes de import pyplot

import matplotlib.pyplot as plt
from matplotlib.backends.backend_pdf import PdfPages
import numpy as np
import pandas as pd
import logging
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .analytics import (
    CLASSICAL_BOUND,
    RANDOM_BASELINE,
    RbFit,
    RbPoint,
    analytic_curves,
    normalized_residuals,
)

logger = logging.getLogger(__name__)

REPORT_NAME = 'report.pdf'


# ==============================================================================
# FORMATACAO PT-BR
# ==============================================================================

def fmt_num(value: float, decimals: int = 4) -> str:
    """
    Formata numero com padrao pt-BR (virgula decimal, ponto de milhar).

    Examples:
        >>> fmt_num(1234.5, 2)
        '1.234,50'
    """
    if value is None or pd.isna(value):
        return "-"

    formatted = f"{value:,.{decimals}f}"
    return formatted.replace(',', 'TEMP').replace('.', ',').replace('TEMP', '.')


def fmt_pct(value: float, decimals: int = 1) -> str:
    """
    Formata fracao como percentual pt-BR.

    Args:
        value: Fracao (ex: 0.1234 para 12,3%)
    """
    if value is None or pd.isna(value):
        return "-"

    return fmt_num(100.0 * value, decimals) + "%"


# ==============================================================================
# PAGINAS
# ==============================================================================

def _cover_page(pdf: PdfPages, summary: Mapping) -> None:
    logger.info("Gerando pagina 1: Capa")

    fig = plt.figure(figsize=(8.27, 11.69))  # A4 portrait
    fig.patch.set_facecolor('white')

    fig.text(0.5, 0.70, 'Simulacao QRL',
             ha='center', size=28, weight='bold', color='#1f77b4')
    fig.text(0.5, 0.63, 'Rede quad-rail com estados GKP',
             ha='center', size=18, weight='bold', color='#333333')
    fig.text(0.5, 0.58, f"Comando: {summary.get('command', '-')}",
             ha='center', size=12, style='italic', color='#666666')
    fig.text(0.5, 0.54, f"Gerado em: {pd.Timestamp.now().strftime('%d/%m/%Y %H:%M')}",
             ha='center', size=10, style='italic', color='#888888')

    fig.text(0.5, 0.44, 'Parametros',
             ha='center', size=14, weight='bold', color='#1f77b4')

    y = 0.39
    for key, value in summary.items():
        if key == 'command':
            continue
        if isinstance(value, float):
            value = fmt_num(value, 4)
        fig.text(0.5, y, f"{key}: {value}", ha='center', size=11)
        y -= 0.035
        if y < 0.05:
            break

    plt.axis('off')
    pdf.savefig(fig, bbox_inches='tight')
    plt.close()


def _rb_pages(
    pdf: PdfPages,
    points: Mapping[float, Sequence[RbPoint]],
    fits: Mapping[float, RbFit],
    curves: Optional[pd.DataFrame],
) -> None:
    logger.info(f"Gerando paginas de RB ({len(points)} valores de squeezing)")

    fig, (ax, ax_res) = plt.subplots(
        2, 1, figsize=(11.69, 8.27), sharex=True, gridspec_kw={'height_ratios': [3, 1]}
    )
    colors = plt.cm.viridis(np.linspace(0, 0.9, max(len(points), 1)))

    for color, s in zip(colors, sorted(points)):
        pts = points[s]
        depths = np.array([pt.depth for pt in pts])
        ax.errorbar(depths, [pt.mean_fidelity for pt in pts], yerr=[pt.std_error for pt in pts],
                    fmt='o', color=color, capsize=3, label=f"{fmt_num(s, 1)} dB")

        fit = fits.get(s)
        if fit is None:
            continue
        grid = np.linspace(depths.min(), depths.max(), 100)
        style = ':' if fit.flagged else '-'
        ax.plot(grid, fit.model(grid), style, color=color,
                label=f"r = {fmt_num(fit.r, 4)} +- {fmt_num(fit.r_std, 4)}")
        ax_res.plot(depths, normalized_residuals(pts, fit.model), 'o-', color=color)

    ax.set_ylabel('Fidelidade media', size=12, weight='bold')
    ax.set_title('Decaimento de RB', size=16, weight='bold', pad=15)
    ax.grid(alpha=0.3, linestyle='--')
    ax.legend(fontsize=8, ncol=2)

    ax_res.axhline(0.0, color='black', linewidth=0.8)
    ax_res.set_xlabel('Profundidade m', size=12, weight='bold')
    ax_res.set_ylabel('Residuo / erro', size=10)
    ax_res.grid(alpha=0.3, linestyle='--')

    plt.tight_layout()
    pdf.savefig(fig)
    plt.close()

    if not fits:
        return

    fig, ax = plt.subplots(figsize=(11.69, 8.27))
    if curves is None:
        curves = analytic_curves(np.linspace(5.0, 15.0, 41))

    ax.semilogy(curves['squeezing_db'], curves['r_low'], '--', color='#2ca02c', label='r_low (I, H, SWAP)')
    ax.semilogy(curves['squeezing_db'], curves['r_high'], '--', color='#d62728', label='r_high (P, CZ)')
    ax.semilogy(curves['squeezing_db'], curves['r_mean'], '-', color='#333333', label='media')

    measured = sorted(fits)
    ax.errorbar(measured, [fits[s].r for s in measured], yerr=[fits[s].r_std for s in measured],
                fmt='o', color='#1f77b4', capsize=4, label='RB (simulacao)')

    ax.set_xlabel('Squeezing (dB)', size=13, weight='bold')
    ax.set_ylabel('Taxa de erro por porta r', size=13, weight='bold')
    ax.set_title('Taxa de erro vs squeezing', size=16, weight='bold', pad=15)
    ax.grid(alpha=0.3, linestyle='--', which='both')
    ax.legend()
    plt.tight_layout()
    pdf.savefig(fig)
    plt.close()


def _grover_page(pdf: PdfPages, grover: pd.DataFrame) -> None:
    logger.info("Gerando pagina de Grover")

    fig, ax = plt.subplots(figsize=(11.69, 8.27))

    for oracle_id, group in grover.groupby('oracle_id'):
        group = group.sort_values('squeezing_db')
        yerr = np.vstack([
            group['success_prob'] - group['ci_low'],
            group['ci_high'] - group['success_prob'],
        ])
        ax.errorbar(group['squeezing_db'], group['success_prob'], yerr=yerr,
                    fmt='o-', capsize=4, label=f"oraculo {oracle_id}")
        if 'analytic_estimate' in group:
            ax.plot(group['squeezing_db'], group['analytic_estimate'], ':', color='#888888')

    ax.axhline(CLASSICAL_BOUND, color='#d62728', linestyle='--', label='limite classico 13/28')
    ax.axhline(RANDOM_BASELINE, color='#7f7f7f', linestyle='--', label='chute aleatorio 2/8')

    ax.set_ylim(0, 1)
    ax.set_xlabel('Squeezing (dB)', size=13, weight='bold')
    ax.set_ylabel('Probabilidade de sucesso', size=13, weight='bold')
    ax.set_title('Grover 3 qubits: sucesso por oraculo', size=16, weight='bold', pad=15)
    ax.yaxis.set_major_formatter(plt.FuncFormatter(lambda x, p: fmt_pct(x, 0)))
    ax.grid(alpha=0.3, linestyle='--')
    ax.legend()
    plt.tight_layout()
    pdf.savefig(fig)
    plt.close()


# ==============================================================================
# GERACAO DO PDF
# ==============================================================================

def generate_report(
    out_dir: Path,
    summary: Mapping,
    rb_points: Optional[Mapping[float, Sequence[RbPoint]]] = None,
    rb_fits: Optional[Mapping[float, RbFit]] = None,
    curves: Optional[pd.DataFrame] = None,
    grover: Optional[pd.DataFrame] = None,
) -> Path:
    """
    Gera o relatorio PDF de uma campanha.

    Args:
        out_dir: Diretorio de saida (report.pdf e criado dentro dele)
        summary: Parametros exibidos na capa
        rb_points: Pontos de RB por squeezing
        rb_fits: Ajustes de RB por squeezing
        curves: Curvas analiticas (default: 5 a 15 dB)
        grover: Tabela com oracle_id, squeezing_db, success_prob, ci_low, ci_high

    Returns:
        Caminho do PDF gerado
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pdf_path = out_dir / REPORT_NAME

    logger.info(f"{'='*70}")
    logger.info(f"Gerando PDF: {pdf_path}")
    logger.info(f"{'='*70}")

    plt.rcParams['font.family'] = 'DejaVu Sans'
    plt.rcParams['font.size'] = 10

    with PdfPages(pdf_path) as pdf:
        _cover_page(pdf, summary)

        if rb_points:
            _rb_pages(pdf, rb_points, rb_fits or {}, curves)

        if grover is not None and len(grover) > 0:
            _grover_page(pdf, grover)

        if not rb_points and (grover is None or len(grover) == 0):
            logger.warning("Nenhum resultado para graficos. Relatorio contem apenas a capa.")

        d = pdf.infodict()
        d['Title'] = f"Simulacao QRL - {summary.get('command', '')}"
        d['Subject'] = 'Randomized benchmarking e Grover em rede quad-rail GKP'
        d['Keywords'] = 'GKP, QRL, MPS, RB, Grover'
        d['Creator'] = 'Python matplotlib + report_pdf.py'

    pdf_size_kb = pdf_path.stat().st_size / 1024
    logger.info(f" PDF gerado com sucesso: {pdf_path} ({pdf_size_kb:.1f} KB)")
    logger.info(f"{'='*70}")

    return pdf_path
