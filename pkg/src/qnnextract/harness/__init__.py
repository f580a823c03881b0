from .config import ExperimentConfig
from .pipeline import fluctuation, run_pipeline, sweep_rounds, sweep_rr
from .reports import ResultRow, ResultTable, emit_reports

__all__ = ["ExperimentConfig", "ResultRow", "ResultTable", "emit_reports", "fluctuation",
           "run_pipeline", "sweep_rounds", "sweep_rr"]
