"""Tiny causal language model, low-rank adapters and label scoring."""
from .corpus import filler, pretraining_items
from .model import DEFAULT_TARGETS, BaseLm, LmConfig, LoraAdapter, LoraLm, attach_lora, merge
from .tokenizer import Tokenizer
from .train import (
    LabelScores,
    TrainingError,
    TrainingPair,
    finetune,
    make_pair,
    masked_loss,
    mean_masked_loss,
    predict_category,
    pretrain_base,
    score_labels,
)

__all__ = [
    "filler", "pretraining_items", "DEFAULT_TARGETS", "BaseLm", "LmConfig", "LoraAdapter", "LoraLm",
    "attach_lora", "merge", "Tokenizer", "LabelScores", "TrainingError", "TrainingPair", "finetune",
    "make_pair", "masked_loss", "mean_masked_loss", "predict_category", "pretrain_base", "score_labels",
]
