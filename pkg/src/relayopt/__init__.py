"""Transceiver optimization for two-hop multi-pair MIMO AF relay networks.

The package provides the network/channel data model, trust-region and
QCQP sub-solvers, the alternating optimization algorithms (TSTINR family,
total-leakage variant, weighted-MMSE baseline, multi-stream extension),
and a seeded Monte-Carlo harness with CSV output.
"""

from .network import (ChannelSet, DimensionError, EffectiveChannels,
                      FeasibilityReport, LinkPowers, NetworkDims, PowerBudget,
                      Transceivers, build_effective, check_feasibility,
                      link_powers, sum_rate, tstinr, tx_powers,
                      wmmse_objective)
from .solvers import (DEFAULT_TOL, EqQcqp, SolverError, SolverTolerances,
                      TrCertificate, TrsProblem, nu_min, reduce_to_tr,
                      solve_eq_qcqp, solve_orth_precoder, solve_tr, solve_trs)
from .algorithms import (AlgorithmKind, ConvergenceCriteria,
                         InfeasibleSubproblem, IterationTrace,
                         PrecoderQcqpAssembly, RelayQcqpAssembly,
                         assemble_precoder_qcqp, assemble_relay_qcqp, run,
                         update_C, wmmse_update_VS)
from .montecarlo import (ExperimentConfig, SummaryRow, TrialRecord, aggregate,
                         gen_channels, init_transceivers, run_sweep,
                         snr_to_budget)

__version__ = "0.1.0"

__all__ = [
    "AlgorithmKind", "ChannelSet", "ConvergenceCriteria", "DEFAULT_TOL",
    "DimensionError", "EffectiveChannels", "EqQcqp", "ExperimentConfig",
    "FeasibilityReport", "InfeasibleSubproblem", "IterationTrace",
    "LinkPowers", "NetworkDims", "PowerBudget", "PrecoderQcqpAssembly",
    "RelayQcqpAssembly", "SolverError", "SolverTolerances", "SummaryRow",
    "TrCertificate", "Transceivers", "TrialRecord", "TrsProblem",
    "aggregate", "assemble_precoder_qcqp", "assemble_relay_qcqp",
    "build_effective", "check_feasibility", "gen_channels",
    "init_transceivers", "link_powers", "nu_min", "reduce_to_tr", "run",
    "run_sweep", "snr_to_budget", "solve_eq_qcqp", "solve_orth_precoder",
    "solve_tr", "solve_trs", "sum_rate", "tstinr", "tx_powers", "update_C",
    "wmmse_objective", "wmmse_update_VS",
]
