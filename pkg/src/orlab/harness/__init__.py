"""Evaluation, multi-seed experiments, sweeps, fine-tuning and canned reproductions."""

from .evaluation import EvalResult, evaluate
from .reproduce import EXPERIMENTS, BUDGETS, ReproReport, reproduce
from .runner import (DatasetSpec, EvalReport, ExperimentConfig, FineTuneResult, SeedSeries,
                     SweepRow, aggregate, fine_tune, materialise, run_experiment, sweep)

__all__ = ["EvalResult", "evaluate", "EXPERIMENTS", "BUDGETS", "ReproReport", "reproduce",
           "DatasetSpec", "EvalReport", "ExperimentConfig", "FineTuneResult", "SeedSeries",
           "SweepRow", "aggregate", "fine_tune", "materialise", "run_experiment", "sweep"]
