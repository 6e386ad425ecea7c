"""
Simulador de rede quad-rail (QRL) com estados GKP sobre FMPS.

Modulos:
- fmps: motor de estados de produto de matrizes funcionais
- states: estados GKP amortecidos e pares de Bell
- qrl: gadgets de teleportacao, frame de Pauli, calibracao e compilacao
- logical: decodificacao logica e oraculo de vetor de estado
- analytics: modelos analiticos e ajustes de RB
- experiments: campanhas de RB, Grover e estatistica de sindromes
- report_pdf: relatorio PDF
- orchestrator: CLI
"""

__version__ = "0.1.0"
