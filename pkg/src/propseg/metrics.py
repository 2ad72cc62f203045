"""Evaluation metrics for semantic and instance segmentation.

Semantic quality is summarized by class-mean IoU, class-mean accuracy,
and overall point accuracy. Instance quality uses per-class coverage
(mean best IoU per ground-truth instance, plain and size-weighted) and
precision/recall under greedy one-to-one matching at an IoU threshold.

Class means skip classes absent from the ground truth (and, for IoU,
absent from the prediction as well); a class that is predicted nowhere
scores zero precision rather than being skipped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError
from .validation import check_labels, check_same_length


@dataclass(frozen=True)
class SemanticReport:
    per_class_iou: dict
    per_class_acc: dict
    miou: float
    macc: float
    oacc: float


@dataclass(frozen=True)
class CoverageReport:
    per_class_cov: dict
    per_class_wcov: dict
    mcov: float
    mwcov: float


@dataclass(frozen=True)
class MatchReport:
    per_class_prec: dict
    per_class_rec: dict
    mprec: float
    mrec: float


def semantic_metrics(pred_sem, gt_sem, num_classes: int) -> SemanticReport:
    pred = check_labels(pred_sem, "pred_sem", low=0, high=num_classes - 1)
    gt = check_labels(gt_sem, "gt_sem", n=pred.size, low=0, high=num_classes - 1)
    if gt.size == 0:
        raise ContractError("semantic metrics need at least one point")

    ious, accs = {}, {}
    for c in range(num_classes):
        in_pred = pred == c
        in_gt = gt == c
        tp = int(np.sum(in_pred & in_gt))
        union = int(np.sum(in_pred | in_gt))
        if union > 0:
            ious[c] = tp / union
        if in_gt.any():
            accs[c] = tp / int(in_gt.sum())

    miou = float(np.mean(list(ious.values()))) if ious else 0.0
    macc = float(np.mean(list(accs.values()))) if accs else 0.0
    oacc = float(np.mean(pred == gt))
    return SemanticReport(ious, accs, miou, macc, oacc)


def instance_sem_label(instance_ids, sem_ids) -> dict:
    """Majority semantic class per instance; ties go to the lowest class."""
    ins = check_labels(instance_ids, "instance_ids")
    sem = check_labels(sem_ids, "sem_ids", n=ins.size, low=0)
    out = {}
    for u in np.unique(ins):
        votes = np.bincount(sem[ins == u])
        out[int(u)] = int(np.argmax(votes))
    return out


def _group_by_class(instance_ids, classes: dict):
    """{class: [point-index arrays, ordered by instance id]}"""
    groups = {}
    for u in np.unique(instance_ids):
        c = classes[int(u)]
        groups.setdefault(c, []).append(np.flatnonzero(instance_ids == u))
    return groups


def _set_iou(a: np.ndarray, b: np.ndarray) -> float:
    inter = np.intersect1d(a, b, assume_unique=True).size
    if inter == 0:
        return 0.0
    return inter / (a.size + b.size - inter)


def _validate_partitions(pred_ins, gt_ins, pred_sem, gt_sem):
    pred_ins = check_labels(pred_ins, "pred_ins")
    gt_ins = check_labels(gt_ins, "gt_ins", n=pred_ins.size)
    pred_sem = check_labels(pred_sem, "pred_sem", n=pred_ins.size, low=0)
    gt_sem = check_labels(gt_sem, "gt_sem", n=pred_ins.size, low=0)
    if gt_ins.size == 0:
        raise ContractError("instance metrics need at least one point")
    return pred_ins, gt_ins, pred_sem, gt_sem


def coverage(pred_ins, gt_ins, pred_sem, gt_sem) -> CoverageReport:
    """Per-class mean (and size-weighted mean) of each ground-truth
    instance's best IoU against same-class predicted instances."""
    pred_ins, gt_ins, pred_sem, gt_sem = _validate_partitions(
        pred_ins, gt_ins, pred_sem, gt_sem)
    gt_groups = _group_by_class(gt_ins, instance_sem_label(gt_ins, gt_sem))
    pred_groups = _group_by_class(pred_ins, instance_sem_label(pred_ins, pred_sem))

    covs, wcovs = {}, {}
    for c, gts in gt_groups.items():
        preds = pred_groups.get(c, [])
        best = np.array([max((_set_iou(g, p) for p in preds), default=0.0)
                         for g in gts])
        sizes = np.array([g.size for g in gts], dtype=np.float64)
        covs[c] = float(np.mean(best))
        wcovs[c] = float(np.sum(best * sizes) / np.sum(sizes))
    return CoverageReport(covs, wcovs,
                          float(np.mean(list(covs.values()))),
                          float(np.mean(list(wcovs.values()))))


def precision_recall(pred_ins, gt_ins, pred_sem, gt_sem,
                     thresh: float = 0.5) -> MatchReport:
    """Greedy one-to-one matching by descending IoU inside each class.

    A pair counts as a true positive when its IoU reaches ``thresh``
    (inclusive). Classes present in the ground truth but never predicted
    contribute zero precision.
    """
    if not (0.0 < thresh <= 1.0):
        raise ConfigError(f"threshold must be in (0, 1], got {thresh}")
    pred_ins, gt_ins, pred_sem, gt_sem = _validate_partitions(
        pred_ins, gt_ins, pred_sem, gt_sem)
    gt_groups = _group_by_class(gt_ins, instance_sem_label(gt_ins, gt_sem))
    pred_groups = _group_by_class(pred_ins, instance_sem_label(pred_ins, pred_sem))

    precs, recs = {}, {}
    for c, gts in gt_groups.items():
        preds = pred_groups.get(c, [])
        tp = _greedy_match_count(gts, preds, thresh)
        precs[c] = tp / len(preds) if preds else 0.0
        recs[c] = tp / len(gts)
    return MatchReport(precs, recs,
                       float(np.mean(list(precs.values()))),
                       float(np.mean(list(recs.values()))))


def _greedy_match_count(gts, preds, thresh: float) -> int:
    pairs = []
    for gi, g in enumerate(gts):
        for pi, p in enumerate(preds):
            iou = _set_iou(g, p)
            if iou >= thresh:
                pairs.append((-iou, gi, pi))
    pairs.sort()
    used_g, used_p = set(), set()
    tp = 0
    for _, gi, pi in pairs:
        if gi in used_g or pi in used_p:
            continue
        used_g.add(gi)
        used_p.add(pi)
        tp += 1
    return tp


# ---------------------------------------------------------------------------
# report documents

HEADLINE_KEYS = ("mIoU", "mAcc", "oAcc", "mPrec", "mRec", "mCov", "mWCov")


def evaluate_scene(pred_sem, pred_ins, gt_sem, gt_ins,
                   num_classes: int) -> dict:
    """Flat key -> float map with headline metrics and per-class entries."""
    sem = semantic_metrics(pred_sem, gt_sem, num_classes)
    cov = coverage(pred_ins, gt_ins, pred_sem, gt_sem)
    match = precision_recall(pred_ins, gt_ins, pred_sem, gt_sem)
    out = {
        "mIoU": sem.miou, "mAcc": sem.macc, "oAcc": sem.oacc,
        "mPrec": match.mprec, "mRec": match.mrec,
        "mCov": cov.mcov, "mWCov": cov.mwcov,
    }
    for c in sorted(sem.per_class_iou):
        out[f"iou_{c}"] = sem.per_class_iou[c]
    for c in sorted(sem.per_class_acc):
        out[f"acc_{c}"] = sem.per_class_acc[c]
    for c in sorted(match.per_class_prec):
        out[f"prec_{c}"] = match.per_class_prec[c]
        out[f"rec_{c}"] = match.per_class_rec[c]
        out[f"cov_{c}"] = cov.per_class_cov[c]
        out[f"wcov_{c}"] = cov.per_class_wcov[c]
    return out


def mean_reports(reports) -> dict:
    """Key-wise mean over reports; a key is averaged over the reports
    that carry it (class keys may be missing for some scenes)."""
    reports = list(reports)
    if not reports:
        raise ContractError("no reports to average")
    keys = []
    for r in reports:
        for k in r:
            if k not in keys:
                keys.append(k)
    return {k: float(np.mean([r[k] for r in reports if k in r])) for k in keys}


def format_report(report: dict) -> str:
    """Tab-separated key/value lines, headline keys first."""
    lines = []
    for key in HEADLINE_KEYS:
        if key in report:
            lines.append(f"{key}\t{report[key]:.6f}")
    for key in report:
        if key not in HEADLINE_KEYS:
            lines.append(f"{key}\t{report[key]:.6f}")
    return "\n".join(lines) + "\n"
