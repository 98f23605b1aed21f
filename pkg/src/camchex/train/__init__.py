from .common import (
    EpochLog,
    TrainingDiverged,
    concat_datasets,
    parameter_fingerprint,
    write_training_log,
)
from .noisy_student import NoisyStudentResult, noisy_student_loop, pseudo_label, student_seed, teacher_seed
from .stage1 import Stage1Result, filter_view, finetune_view_encoder, train_stage1
from .stage2 import Stage2Result, train_stage2

__all__ = [
    "EpochLog",
    "NoisyStudentResult",
    "Stage1Result",
    "Stage2Result",
    "TrainingDiverged",
    "concat_datasets",
    "filter_view",
    "finetune_view_encoder",
    "noisy_student_loop",
    "parameter_fingerprint",
    "pseudo_label",
    "student_seed",
    "teacher_seed",
    "train_stage1",
    "train_stage2",
    "write_training_log",
]
