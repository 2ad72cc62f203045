"""Training objectives.

The instance term pulls each embedding toward its instance mean inside a
margin, pushes distinct instance means apart beyond a second margin, and
lightly regularizes the means toward the origin. The semantic term is
plain cross-entropy. The total objective adds the self-prediction term
scaled by ``beta``.

All functions build graph nodes so gradients reach the producing
network; per-point data (ids, targets) enter as constants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ContractError, DimensionError
from .validation import check_labels

REG_WEIGHT = 0.001


@dataclass(frozen=True)
class InstanceLossParams:
    delta_v: float = 0.5
    delta_d: float = 1.5
    reg_weight: float = REG_WEIGHT

    def __post_init__(self):
        if self.delta_v <= 0 or self.delta_d <= 0:
            raise ConfigError("margins must be positive")
        if 2.0 * self.delta_d <= self.delta_v:
            raise ConfigError(
                f"push margin 2*{self.delta_d} must exceed pull margin {self.delta_v}")
        if self.reg_weight < 0:
            raise ConfigError("reg_weight must be non-negative")


@dataclass(frozen=True)
class LossReport:
    """Scalar snapshot of one objective evaluation."""

    l_var: float
    l_dist: float
    l_reg: float
    l_ins: float
    l_sem: float
    l_sp: float
    total: float
    beta: float = 0.8

    def __post_init__(self):
        for name in ("l_var", "l_dist", "l_reg", "l_ins", "l_sem", "l_sp"):
            if getattr(self, name) < 0:
                raise ContractError(f"{name} is negative: {getattr(self, name)}")
        implied = self.l_ins + self.l_sem + self.beta * self.l_sp
        if abs(self.total - implied) > 1e-9:
            raise ContractError(
                f"total {self.total} inconsistent with components ({implied})")


def _row_norms(m: ad.Node) -> ad.Node:
    """Euclidean norm of each row, shape (rows, 1)."""
    return ad.sqrt(ad.reduce_sum(ad.square(m), axis=1))


def _scalar(x: float) -> ad.Node:
    return ad.constant(np.array([[float(x)]]))


def instance_loss(f_ins: ad.Node, instance_ids, params: InstanceLossParams = None):
    """Returns (l_var, l_dist, l_reg, l_ins) as scalar nodes.

    Instance ids may be arbitrary integers; only the grouping matters.
    """
    params = params if params is not None else InstanceLossParams()
    n = f_ins.value.shape[0]
    if n == 0:
        raise ContractError("instance loss needs at least one point")
    ids = check_labels(instance_ids, "instance_ids", n=n)

    uniq, dense = np.unique(ids, return_inverse=True)
    k = uniq.size
    counts = np.bincount(dense, minlength=k).astype(np.float64)

    # row-normalized assignment: (K x N) @ (N x D) = per-instance means
    assign = np.zeros((k, n))
    assign[dense, np.arange(n)] = 1.0 / counts[dense]
    means = ad.matmul(ad.constant(assign), f_ins)

    point_mean = ad.gather_rows(means, dense)
    pull = ad.hinge(ad.sub(_row_norms(ad.sub(point_mean, f_ins)),
                           params.delta_v))
    # per-instance mean of squared hinges, then mean over instances
    per_instance = ad.matmul(ad.constant(assign), ad.square(pull))
    l_var = ad.reduce_mean(per_instance, axis=None)

    if k >= 2:
        pair_a, pair_b = np.nonzero(~np.eye(k, dtype=bool))
        gap = ad.sub(ad.gather_rows(means, pair_a), ad.gather_rows(means, pair_b))
        # hinge(2*delta_d - dist) written as hinge(-(dist - 2*delta_d))
        shortfall = ad.scale(ad.sub(_row_norms(gap), 2.0 * params.delta_d), -1.0)
        l_dist = ad.reduce_mean(ad.square(ad.hinge(shortfall)), axis=None)
    else:
        l_dist = _scalar(0.0)

    l_reg = ad.reduce_mean(_row_norms(means), axis=None)
    l_ins = ad.add(ad.add(l_var, l_dist), ad.scale(l_reg, params.reg_weight))
    return l_var, l_dist, l_reg, l_ins


def _check_one_hot(y: np.ndarray):
    ok = np.all(np.isin(y, (0.0, 1.0))) and np.all(y.sum(axis=1) == 1.0)
    if not ok:
        raise ContractError("semantic targets must be one-hot rows")


def semantic_loss(sem_logits: ad.Node, y_sem) -> ad.Node:
    """Mean cross-entropy between softmaxed logits and one-hot targets."""
    y = np.asarray(y_sem, dtype=np.float64)
    if y.shape != sem_logits.value.shape:
        raise DimensionError(
            f"targets {y.shape} do not match logits {sem_logits.value.shape}")
    if y.shape[0] == 0:
        raise ContractError("semantic loss needs at least one point")
    _check_one_hot(y)
    log_p = ad.row_log_softmax(sem_logits)
    picked = ad.reduce_sum(ad.mul(log_p, ad.constant(y)), axis=1)
    return ad.scale(ad.reduce_mean(picked, axis=None), -1.0)


def total_loss(l_ins: ad.Node, l_sem: ad.Node, l_sp, beta: float) -> ad.Node:
    """total = l_ins + l_sem + beta * l_sp; l_sp may be None only when beta is 0."""
    beta = float(beta)
    if beta < 0:
        raise ConfigError(f"beta must be non-negative, got {beta}")
    base = ad.add(l_ins, l_sem)
    if l_sp is None:
        if beta != 0.0:
            raise ContractError("beta > 0 requires a self-prediction loss value")
        return base
    return ad.add(base, ad.scale(l_sp, beta))


def build_report(l_var, l_dist, l_reg, l_ins, l_sem, l_sp, total,
                 beta: float) -> LossReport:
    """Collapse scalar nodes (or floats) into a plain-number report."""

    def val(x):
        if x is None:
            return 0.0
        return float(x.value[0, 0]) if isinstance(x, ad.Node) else float(x)

    return LossReport(val(l_var), val(l_dist), val(l_reg), val(l_ins),
                      val(l_sem), val(l_sp), val(total), float(beta))
