"""Experiment runners, SVG plots and the command-line interface."""

from .experiments import (
    DEFAULT_SEED,
    ExperimentRecord,
    run_convergence,
    run_dataset_comparison,
    run_error_histogram,
    run_fig5,
    run_fig5_reference,
    run_switch_off,
    write_record,
)
