"""Re-transmission diversity multiple access: PDMA and RDMA over HARQ-IR with SIC."""
from .engine import (
    DecodeTrace,
    TerminationPolicy,
    UserSignal,
    run_nosic_ir_frame,
    run_sic_ir_frame,
    run_sic_repetition_frame,
)
from .harness import Scenario, SummaryStats, figure_preset, run_scenario, run_trial, sweep
from .pdma import InvalidDesign

__version__ = "0.1.0"

__all__ = [
    "DecodeTrace",
    "InvalidDesign",
    "Scenario",
    "SummaryStats",
    "TerminationPolicy",
    "UserSignal",
    "figure_preset",
    "run_nosic_ir_frame",
    "run_scenario",
    "run_sic_ir_frame",
    "run_sic_repetition_frame",
    "run_trial",
    "sweep",
]
