from .checkpoint import CheckpointError, load_checkpoint, read_checkpoint, save_checkpoint
from .records import DirectoryLock, LockError, RunStore, load_runs
from .report import (
    FINETUNE_LABEL,
    TABLE_I_AVG,
    TABLE_I_FIXTURE,
    TABLE_II_AVG,
    TABLE_II_FIXTURE,
    ReportRow,
    ReportTable,
    aggregate_report,
    best_model,
    fixture_table,
    render,
    render_csv,
    render_markdown,
    subject_scores,
)
from .runner import default_workers, execute, run_configs, run_finetune, run_search
from .search import RunConfig, SearchSpace, draw_hparams, enumerate_runs, enumerate_sweep, stable_seed
from .train import ExperimentResult, TrainingDiverged, accuracy, extract_features, fine_tune, make_plan, train_one

__all__ = [
    "CheckpointError", "DirectoryLock", "ExperimentResult", "FINETUNE_LABEL", "LockError", "ReportRow",
    "ReportTable", "RunConfig", "RunStore", "SearchSpace", "TABLE_II_AVG", "TABLE_II_FIXTURE", "TABLE_I_AVG",
    "TABLE_I_FIXTURE", "TrainingDiverged", "accuracy", "aggregate_report", "best_model", "default_workers",
    "draw_hparams", "enumerate_runs", "enumerate_sweep", "execute", "extract_features", "fine_tune",
    "fixture_table", "load_checkpoint", "load_runs", "make_plan", "read_checkpoint", "render", "render_csv",
    "render_markdown", "run_configs", "run_finetune", "run_search", "save_checkpoint", "stable_seed",
    "subject_scores", "train_one",
]
