"""Selection metrics, recognition accuracy and the study harness."""
from .metrics import (MultiLabelReport, levenshtein, multilabel_metrics, oracle_eval, oracle_hypotheses,
                      word_char_accuracy)
from .studies import STUDIES, StudyData, StudyModels, load_study_data, run_study, train_study_models

__all__ = [
    "MultiLabelReport", "levenshtein", "multilabel_metrics", "oracle_eval", "oracle_hypotheses",
    "word_char_accuracy", "STUDIES", "StudyData", "StudyModels", "load_study_data", "run_study",
    "train_study_models",
]
