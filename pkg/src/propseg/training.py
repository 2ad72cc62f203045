"""SGD training loop over block samples drawn from scenes.

Each optimization step averages per-sample gradients across a batch.
The per-sample objective is the instance embedding loss plus semantic
cross entropy plus (when beta > 0) the propagation consistency term on
the joint embeddings. Everything is driven by one master seed: epoch
order, point sampling, group dividing and pairing all derive from it,
so a rerun with the same scenes and config reproduces the checkpoint
bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .config import RunConfig
from .data import Scene, sample_block, split_blocks
from .errors import ContractError, DataError
from .inference import _scene_blocks, predict_scene
from .losses import (InstanceLossParams, instance_loss, semantic_loss,
                     total_loss)
from .metrics import HEADLINE_KEYS, evaluate_scene, mean_reports
from .nets import Arch, ModelParams, forward_bundle, init_params, wrap_params
from .propagation import (build_joint_labels, divide_and_pair, one_hot,
                          self_prediction_loss)

LOG_COLUMNS = ("epoch", "lr", "l_var", "l_dist", "l_reg", "l_ins", "l_sem",
               "l_sp", "total") + tuple(f"val_{k}" for k in HEADLINE_KEYS)

_MAX_DIVIDE_TRIES = 64


def build_arch(config: RunConfig, num_classes: int) -> Arch:
    return Arch(input_dim=config.input_dim,
                point_widths=tuple(config.point_widths),
                fuse_hidden=tuple(config.fuse_hidden),
                feature_dim=config.feature_dim,
                ins_hidden=config.ins_hidden,
                num_classes=num_classes)


def _num_classes(scenes) -> int:
    counts = {len(s.class_names) for s in scenes}
    if len(counts) != 1:
        raise DataError(f"scenes disagree on class count: {sorted(counts)}")
    return counts.pop()


def _draw_assignment(ins_ids, config: RunConfig, rng):
    """Group dividing, redrawn if any group came out empty.

    With few points per instance the stratified deal can leave a group
    without members, which would make its pair degenerate; a redraw
    costs one shuffle and keeps the pairing well defined.
    """
    mode = "stratified" if config.stratified else "random"
    for _ in range(_MAX_DIVIDE_TRIES):
        assignment = divide_and_pair(ins_ids, config.groups, mode, rng)
        counts = np.bincount(assignment.group_ids, minlength=config.groups)
        if counts.min() > 0:
            return assignment
    raise ContractError(
        f"could not divide {ins_ids.size} points into {config.groups} "
        f"non-empty groups")


def sample_objective(p: dict, arch: Arch, sample, config: RunConfig, rng):
    """Loss nodes for one block sample. Returns a dict of named scalars."""
    bundle = forward_bundle(p, ad.constant(sample.features), arch)
    margins = InstanceLossParams(delta_v=config.delta_v, delta_d=config.delta_d)
    l_var, l_dist, l_reg, l_ins = instance_loss(bundle.F_ins, sample.ins_ids,
                                                margins)
    l_sem = semantic_loss(bundle.sem_logits,
                          one_hot(sample.sem_ids, arch.num_classes))
    l_sp = None
    if config.beta > 0:
        labels = build_joint_labels(sample.sem_ids, sample.ins_ids,
                                    num_classes=arch.num_classes)
        assignment = _draw_assignment(sample.ins_ids, config, rng)
        l_sp = self_prediction_loss(
            bundle.F_joint, labels, assignment, sigma=config.sigma,
            alpha=config.alpha, bidirectional=config.bidirectional,
            squared=config.squared_distance,
            unit_diagonal=config.unit_diagonal, rng=rng)
    total = total_loss(l_ins, l_sem, l_sp, config.beta)
    return {"l_var": l_var, "l_dist": l_dist, "l_reg": l_reg, "l_ins": l_ins,
            "l_sem": l_sem, "l_sp": l_sp, "total": total}


def learning_rate(config: RunConfig, epoch: int) -> float:
    return config.lr * 0.5 ** (epoch // config.lr_halve_every)


@dataclass
class TrainResult:
    params: ModelParams
    log: list


def _validate(params, val_scenes, config):
    reports = []
    for scene in val_scenes:
        pred = predict_scene(params, scene, config)
        reports.append(evaluate_scene(pred.sem_ids, pred.ins_ids,
                                      scene.sem_ids, scene.ins_ids,
                                      params.arch.num_classes))
    return mean_reports(reports)


def train(train_scenes, config: RunConfig, *, val_scenes=(),
          progress=None) -> TrainResult:
    if not train_scenes:
        raise DataError("no training scenes")
    arch = build_arch(config, _num_classes(list(train_scenes) +
                                           list(val_scenes)))
    params = init_params(config.seed, arch)
    shape_mode = config.mode == "shape"

    blocks = [(scene, block) for scene in train_scenes
              for block in _scene_blocks(scene, config)]
    velocity = {name: np.zeros_like(v) for name, v in params.tensors.items()}
    log = []

    for epoch in range(config.epochs):
        rng = np.random.default_rng([config.seed, 1 + epoch])
        order = rng.permutation(len(blocks))
        lr = learning_rate(config, epoch)
        sums = dict.fromkeys(("l_var", "l_dist", "l_reg", "l_ins", "l_sem",
                              "l_sp", "total"), 0.0)
        steps = 0

        for start in range(0, order.size, config.batch):
            batch = order[start:start + config.batch]
            grad_sum = {name: np.zeros_like(v)
                        for name, v in params.tensors.items()}
            for j in batch:
                scene, block = blocks[j]
                sample = sample_block(scene, block, config.points_per_block,
                                      rng, shape_mode=shape_mode)
                p = wrap_params(params)
                losses = sample_objective(p, arch, sample, config, rng)
                grads = ad.backward(losses["total"], list(p.values()))
                for name, node in p.items():
                    grad_sum[name] += grads[node]
                for key, node in losses.items():
                    if node is not None:
                        sums[key] += float(node.value[0, 0])
            inv = 1.0 / batch.size
            for name in params.tensors:
                g = grad_sum[name] * inv
                if config.momentum > 0:
                    velocity[name] = config.momentum * velocity[name] + g
                    g = velocity[name]
                params.tensors[name] = params.tensors[name] - lr * g
            steps += batch.size

        row = {key: sums[key] / steps for key in sums}
        row["epoch"] = epoch
        row["lr"] = lr
        is_last = epoch == config.epochs - 1
        if val_scenes and (is_last or (config.validate_every > 0 and
                                       (epoch + 1) % config.validate_every == 0)):
            summary = _validate(params, val_scenes, config)
            for key in HEADLINE_KEYS:
                row[f"val_{key}"] = summary[key]
        log.append(row)
        if progress is not None:
            progress(row)

    return TrainResult(params, log)


def format_train_log(log) -> str:
    lines = ["\t".join(LOG_COLUMNS)]
    for row in log:
        cells = []
        for col in LOG_COLUMNS:
            value = row.get(col)
            if value is None:
                cells.append("-")
            elif col == "epoch":
                cells.append(str(value))
            else:
                cells.append(f"{value:.6f}")
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


def write_train_log(path, log):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_train_log(log))
