"""Pose-model training: Adam over the summed two-stage cross-entropy with
teacher forcing and difficulty-based scene upsampling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import SceneForgeError, TrainingDivergedError
from .data import categories_of
from .model import PoseModel, PoseModelConfig, loss_and_grads


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    steps: int = 1000
    batch_size: int = 8
    seed: int = 0
    upsample_threshold: float = 0.3
    upsample_factor: int = 3

    def __post_init__(self):
        if self.learning_rate <= 0.0:
            raise SceneForgeError(f"learning_rate must be > 0, got {self.learning_rate}")


ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class AdamState:
    def __init__(self, params: dict):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def update(self, params: dict, grads: dict, lr: float):
        self.t += 1
        bc1 = 1.0 - ADAM_BETA1**self.t
        bc2 = 1.0 - ADAM_BETA2**self.t
        for k, g in grads.items():
            self.m[k] = ADAM_BETA1 * self.m[k] + (1.0 - ADAM_BETA1) * g
            self.v[k] = ADAM_BETA2 * self.v[k] + (1.0 - ADAM_BETA2) * (g * g)
            params[k] -= lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + ADAM_EPS)


def sampling_pool(dataset, config: TrainConfig) -> list:
    """Scene indices, with difficult scenes (fraction of non-axis-aligned
    labels above the threshold) duplicated ``upsample_factor`` times."""
    pool = []
    for i, ex in enumerate(dataset):
        copies = config.upsample_factor if ex.difficulty() > config.upsample_threshold else 1
        pool.extend([i] * copies)
    return pool


def train(
    dataset,
    config: TrainConfig,
    model_config: PoseModelConfig | None = None,
) -> PoseModel:
    """Train a pose model; all randomness derives from ``config.seed``."""
    if not dataset:
        raise SceneForgeError("train requires a non-empty dataset")
    if model_config is None:
        model_config = PoseModelConfig(categories=categories_of(dataset))
    model = PoseModel.init_random(model_config, config.seed)
    optimizer = AdamState(model.params)
    rng = np.random.default_rng(config.seed)
    pool = np.array(sampling_pool(dataset, config), dtype=np.int64)

    for step in range(config.steps):
        batch = rng.choice(pool, size=config.batch_size, replace=True)
        grads = model.zero_grads()
        total = 0.0
        for idx in batch:
            value, _ = loss_and_grads(model, dataset[int(idx)], grads)
            total += value
        if not math.isfinite(total):
            raise TrainingDivergedError(step, total)
        optimizer.update(model.params, grads, config.learning_rate)
    return model
