"""Block-wise inference: semantic argmax, mean-shift grouping, merging."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import VoxelRegistry, block_merging, mean_shift
from .config import RunConfig
from .data import Block, Scene, sample_block, split_blocks
from .errors import ContractError
from .nets import ModelParams, forward_values


@dataclass
class ScenePrediction:
    sem_ids: np.ndarray
    ins_ids: np.ndarray
    num_instances: int


def _scene_blocks(scene: Scene, config: RunConfig):
    if config.mode == "shape":
        # a shape is one object-sized cloud; no spatial chunking
        return [Block(np.zeros(2), np.arange(scene.num_points))]
    return split_blocks(scene, config.block_size)


def predict_scene(params: ModelParams, scene: Scene,
                  config: RunConfig) -> ScenePrediction:
    """Full pipeline for one scene; deterministic given params and config.

    Every point passes through exactly once (blocks are disjoint and no
    resampling happens), so predictions line up with ``scene.coords``.
    The propagation head plays no part here; it only shapes the
    embeddings during training.
    """
    if params.arch.num_classes < 2:
        raise ContractError("model must predict at least two classes")
    n = scene.num_points
    sem_out = np.full(n, -1, dtype=np.int64)
    ins_out = np.full(n, -1, dtype=np.int64)
    registry = VoxelRegistry(cell=config.merge_cell)

    shape_mode = config.mode == "shape"
    for block in _scene_blocks(scene, config):
        sample = sample_block(scene, block, None, shape_mode=shape_mode)
        bundle = forward_values(params, sample.features)
        sem_pred = np.argmax(bundle.sem_logits.value, axis=1).astype(np.int64)
        local = mean_shift(bundle.F_ins.value, config.bandwidth).labels
        merged = block_merging(scene.coords[sample.indices], local, sem_pred,
                               registry, overlap_thresh=config.merge_overlap)
        sem_out[sample.indices] = sem_pred
        ins_out[sample.indices] = merged

    if np.any(ins_out < 0):
        raise ContractError("some points were never assigned a prediction")
    uniq, dense = np.unique(ins_out, return_inverse=True)
    return ScenePrediction(sem_out, dense.astype(np.int64), uniq.size)
