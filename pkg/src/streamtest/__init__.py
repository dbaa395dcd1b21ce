"""Uniformity and closeness testing of sample streams under a hard bit budget."""

from .amplification import acceptance_threshold, amplify, repetitions_for
from .batch import BatchPlan, BatchRegime, BatchTester, plan_batches, run_batch_tester
from .calibration import Calibration, CalibrationMissing, calibrate_constants, default_calibration
from .compressed import plan_compression, run_compressed_closeness, run_compressed_uniformity
from .compression import Partition, contraction_probability_oracle, induce_pmf, project, sample_partition
from .core import (
    Counts,
    Pmf,
    ProblemParams,
    RegimeError,
    SampleStream,
    StreamExhausted,
    Verdict,
    draw_stream,
    histogram,
    make_paninski_far,
    make_point_mass,
    make_subset_uniform,
    make_uniform,
    tv_distance,
    validate_params,
)
from .harness import ErrorRateReport, ExperimentSpec, run_experiment, sweep_tradeoff
from .ledger import BitLedger, BudgetExceeded, bits_for_counter

__version__ = "0.1.0"

__all__ = [
    "BatchPlan", "BatchRegime", "BatchTester", "BitLedger", "BudgetExceeded", "Calibration",
    "CalibrationMissing", "Counts", "ErrorRateReport", "ExperimentSpec", "Partition", "Pmf",
    "ProblemParams", "RegimeError", "SampleStream", "StreamExhausted", "Verdict",
    "acceptance_threshold", "amplify", "bits_for_counter", "calibrate_constants",
    "contraction_probability_oracle", "default_calibration", "draw_stream", "histogram",
    "induce_pmf", "make_paninski_far", "make_point_mass", "make_subset_uniform", "make_uniform",
    "plan_batches", "plan_compression", "project", "repetitions_for", "run_batch_tester",
    "run_compressed_closeness", "run_compressed_uniformity", "run_experiment", "sample_partition",
    "sweep_tradeoff", "tv_distance", "validate_params",
]
