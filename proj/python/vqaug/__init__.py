"""Adversarial visual and paraphrase augmentation for a toy VQA model."""

from ._vqaug import (
    Model,
    NumericalError,
    Paraphraser,
    ParaphraseSettings,
    RunConfig,
    ShapeError,
    accuracy,
    edit_distance,
    evaluate,
    flip_rate,
    generate,
    load_config,
    load_split,
    paraphrase,
    sweep,
    train,
)

__all__ = [
    "Model",
    "NumericalError",
    "Paraphraser",
    "ParaphraseSettings",
    "RunConfig",
    "ShapeError",
    "accuracy",
    "edit_distance",
    "evaluate",
    "flip_rate",
    "generate",
    "load_config",
    "load_split",
    "paraphrase",
    "sweep",
    "train",
]
