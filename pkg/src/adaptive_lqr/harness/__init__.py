"""Experiment configuration, orchestration, verification and the CLI."""
from .config import ExperimentConfig, load_config, preset, replicate_seed
from .run import RunRecord, run_experiment
from .verify import VerifyReport, verify_suite
