from .adam import AdamState, adam_step
from .barlow import BarlowConfig, barlow_loss, cross_correlation, standardize
from .fit import (
    EnsembleQNN,
    SingleQNN,
    SubstituteModel,
    TrainLog,
    new_substitute,
    pretrain_qenc,
    train_base,
    train_classifier,
    train_qleak,
    train_victim,
)

__all__ = [
    "AdamState", "adam_step", "BarlowConfig", "barlow_loss", "cross_correlation", "standardize",
    "EnsembleQNN", "SingleQNN", "SubstituteModel", "TrainLog", "new_substitute", "pretrain_qenc",
    "train_base", "train_classifier", "train_qleak", "train_victim",
]
