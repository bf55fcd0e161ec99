from .vocab import (
    Vocabulary, TokenSequence, build_vocabulary, tokenize,
    PAD_ID, UNK_ID, CLS_ID, MAX_TOKENS,
)
from .network import ModelConfig, DualBranchModel, PredictResult
from .train import (
    TrainConfig, TrainingSet, EpochStats, AdamState,
    class_weights_from_counts, compute_loss, train_epoch, fit, score_batch,
    sgd_update,
)
from .gradcheck import gradient_check
from .checkpoint import save_checkpoint, load_checkpoint, save_vocab, load_vocab

__all__ = [
    "Vocabulary", "TokenSequence", "build_vocabulary", "tokenize",
    "PAD_ID", "UNK_ID", "CLS_ID", "MAX_TOKENS",
    "ModelConfig", "DualBranchModel", "PredictResult",
    "TrainConfig", "TrainingSet", "EpochStats",
    "class_weights_from_counts", "compute_loss", "train_epoch", "fit", "AdamState",
    "score_batch", "sgd_update", "gradient_check",
    "save_checkpoint", "load_checkpoint", "save_vocab", "load_vocab",
]
