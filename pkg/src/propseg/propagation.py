"""Self-prediction head: group dividing, label propagation, and its loss.

A sample is divided into groups, groups are paired, and within each pair
the labels of one group are spread to the other over an affinity graph
built from the joint embeddings. The propagated soft labels are scored
against the true ones with cross-entropy; the only gradient path into
the network runs through the affinity weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ContractError, DegenerateGraphError, DimensionError
from .validation import check_labels, check_positive


def _as_node(x) -> ad.Node:
    return x if isinstance(x, ad.Node) else ad.constant(x)


# ---------------------------------------------------------------------------
# labels

def one_hot(ids, num_classes: int) -> np.ndarray:
    ids = check_labels(ids, "ids", low=0, high=num_classes - 1)
    out = np.zeros((ids.size, num_classes))
    out[np.arange(ids.size), ids] = 1.0
    return out


@dataclass(frozen=True)
class JointLabelMatrix:
    """One-hot semantic and instance labels plus their concatenation."""

    Y_sem: np.ndarray
    Y_ins: np.ndarray
    Y_joint: np.ndarray

    @property
    def num_sem(self) -> int:
        return self.Y_sem.shape[1]

    @property
    def num_ins(self) -> int:
        return self.Y_ins.shape[1]


def build_joint_labels(sem_ids, ins_ids, num_classes=None) -> JointLabelMatrix:
    """Instance ids are sample-local and get remapped to dense 0..K-1."""
    sem_ids = check_labels(sem_ids, "sem_ids", low=0)
    ins_ids = check_labels(ins_ids, "ins_ids", n=sem_ids.size)
    if sem_ids.size == 0:
        raise ContractError("joint labels need at least one point")
    if num_classes is None:
        num_classes = int(sem_ids.max()) + 1
    y_sem = one_hot(sem_ids, num_classes)
    _, dense = np.unique(ins_ids, return_inverse=True)
    y_ins = one_hot(dense, int(dense.max()) + 1)
    return JointLabelMatrix(y_sem, y_ins, np.hstack([y_sem, y_ins]))


# ---------------------------------------------------------------------------
# group dividing and pairing

@dataclass(frozen=True)
class GroupAssignment:
    group_ids: np.ndarray
    num_groups: int
    mode: str
    pairing: tuple


def assign_groups(instance_ids, num_groups: int, mode: str,
                  rng: np.random.Generator) -> np.ndarray:
    """Deal points to groups round-robin after a shuffle.

    Stratified mode deals each instance separately so its points spread
    evenly: per-instance per-group counts differ by at most one. Random
    mode shuffles the whole sample.
    """
    ids = check_labels(instance_ids, "instance_ids")
    n = ids.size
    if num_groups < 2:
        raise ContractError(f"need at least 2 groups, got {num_groups}")
    if num_groups > n:
        raise ContractError(f"cannot divide {n} points into {num_groups} groups")
    if mode not in ("stratified", "random"):
        raise ConfigError(f"unknown dividing mode: {mode!r}")

    group_ids = np.empty(n, dtype=np.int64)
    if mode == "random":
        buckets = [np.arange(n)]
    else:
        buckets = [np.flatnonzero(ids == u) for u in np.unique(ids)]
    for idx in buckets:
        order = rng.permutation(idx)
        # random offset so no group is systematically favored with leftovers
        offset = int(rng.integers(num_groups))
        group_ids[order] = (np.arange(idx.size) + offset) % num_groups
    return group_ids


def pair_groups(num_groups: int, rng: np.random.Generator) -> tuple:
    """Uniformly random perfect matching of group ids, in canonical order.

    Pairs are unordered (direction choices happen later), so each is
    stored low-id first and the list is sorted for reproducible output.
    """
    if num_groups % 2:
        raise ConfigError(f"group count must be even to pair, got {num_groups}")
    perm = rng.permutation(num_groups)
    pairs = [tuple(sorted((int(perm[i]), int(perm[i + 1]))))
             for i in range(0, num_groups, 2)]
    return tuple(sorted(pairs))


def divide_and_pair(instance_ids, num_groups: int, mode: str,
                    rng: np.random.Generator) -> GroupAssignment:
    group_ids = assign_groups(instance_ids, num_groups, mode, rng)
    return GroupAssignment(group_ids, num_groups, mode,
                           pair_groups(num_groups, rng))


def pair_point_indices(assignment: GroupAssignment):
    """(indices of group a, indices of group b) for each pair, in pair order."""
    return [(np.flatnonzero(assignment.group_ids == a),
             np.flatnonzero(assignment.group_ids == b))
            for a, b in assignment.pairing]


# ---------------------------------------------------------------------------
# affinity graph

def build_affinity(embeddings, sigma: float = 1.0, *, squared: bool = True,
                   unit_diagonal: bool = False) -> ad.Node:
    """Gaussian affinity W_ij = exp(-d_ij / (2 sigma^2)).

    d is the squared Euclidean distance by default (``squared=False``
    switches to the plain distance). The diagonal is zeroed unless
    ``unit_diagonal`` asks for the literal exp(0) = 1.
    """
    emb = _as_node(embeddings)
    n = emb.value.shape[0]
    if n < 2:
        raise ContractError(f"affinity graph needs at least 2 points, got {n}")
    check_positive(sigma, "sigma")

    sq = ad.reduce_sum(ad.square(emb), axis=1)
    gram = ad.matmul(emb, ad.transpose(emb))
    ones_row = ad.constant(np.ones((1, n)))
    ones_col = ad.constant(np.ones((n, 1)))
    d2 = ad.sub(ad.add(ad.matmul(sq, ones_row), ad.matmul(ones_col, ad.transpose(sq))),
                ad.scale(gram, 2.0))
    # clamp tiny negative float noise, then force exact symmetry
    d2 = ad.relu(d2)
    d2 = ad.scale(ad.add(d2, ad.transpose(d2)), 0.5)
    dist = d2 if squared else ad.sqrt(d2)
    w = ad.exp(ad.scale(dist, -1.0 / (2.0 * sigma * sigma)))
    if not unit_diagonal:
        w = ad.mul(w, ad.constant(1.0 - np.eye(n)))
    return w


def normalize_laplacian(w) -> ad.Node:
    """Symmetric normalization D^{-1/2} W D^{-1/2} of an affinity matrix."""
    w = _as_node(w)
    degrees = ad.reduce_sum(w, axis=1)
    if np.any(degrees.value <= 0.0):
        bad = int(np.argmax(degrees.value <= 0.0))
        raise DegenerateGraphError(
            f"vertex {bad} has zero affinity mass; graph is disconnected "
            "at numerical precision")
    inv_sqrt = ad.exp(ad.scale(ad.log(degrees), -0.5))
    return ad.mul(w, ad.matmul(inv_sqrt, ad.transpose(inv_sqrt)))


# ---------------------------------------------------------------------------
# propagation

@dataclass
class PropagationResult:
    S_star: ad.Node
    U_star: ad.Node
    Y_star: ad.Node
    labeled_count: int


def _check_seed_matrix(s0: np.ndarray, name: str):
    if not np.all(np.isin(s0, (0.0, 1.0))):
        raise ContractError(f"{name} entries must be 0 or 1")


def _nonzero_rows(m: np.ndarray) -> np.ndarray:
    return np.flatnonzero(m.sum(axis=1) > 0)


def propagate_closed(laplacian, s0, u0=None, alpha: float = 0.99):
    """Closed-form propagation (I - alpha L)^{-1} applied to seed labels.

    Rows 0..M-1 must carry the labels of ``s0`` (the rest zero); ``u0``,
    when given, must label exactly the complementary rows. With both
    directions the assembled result takes rows 0..M-1 from U* and the
    rest from S*, so every row is predicted by the opposite group.
    Labels are constants: gradients flow only through the Laplacian.
    """
    lap = _as_node(laplacian)
    n = lap.value.shape[0]
    if lap.value.shape != (n, n):
        raise DimensionError("laplacian must be square")
    if not (0.0 < alpha < 1.0):
        raise ConfigError(
            f"alpha must lie strictly between 0 and 1, got {alpha}")

    s0 = np.ascontiguousarray(s0, dtype=np.float64)
    if s0.shape[0] != n:
        raise DimensionError(f"s0 has {s0.shape[0]} rows, laplacian has {n}")
    _check_seed_matrix(s0, "s0")
    labeled = _nonzero_rows(s0)
    m = labeled.size
    if m == 0 or m == n:
        raise ContractError("s0 must label a proper nonempty subset of rows")
    if not np.array_equal(labeled, np.arange(m)):
        raise ContractError("labeled rows of s0 must be the leading block")

    c = s0.shape[1]
    system = ad.sub(ad.constant(np.eye(n)), ad.scale(lap, alpha))

    if u0 is None:
        s_star = ad.linear_solve(system, ad.constant(s0))
        return PropagationResult(s_star, None, None, m)

    u0 = np.ascontiguousarray(u0, dtype=np.float64)
    if u0.shape != s0.shape:
        raise DimensionError("u0 must match s0's shape")
    _check_seed_matrix(u0, "u0")
    if not np.array_equal(_nonzero_rows(u0), np.arange(m, n)):
        raise ContractError("u0 must label exactly the rows s0 leaves blank")

    both = ad.linear_solve(system, ad.constant(np.hstack([s0, u0])))
    s_star = ad.slice_cols(both, 0, c)
    u_star = ad.slice_cols(both, c, 2 * c)
    top = np.zeros((n, c))
    top[:m] = 1.0
    y_star = ad.add(ad.mul(u_star, ad.constant(top)),
                    ad.mul(s_star, ad.constant(1.0 - top)))
    return PropagationResult(s_star, u_star, y_star, m)


def propagate_iterative(laplacian: np.ndarray, s0: np.ndarray,
                        alpha: float, steps: int) -> np.ndarray:
    """Unrolled fixed-point iteration S <- alpha L S + (1-alpha) S0.

    Plain numpy; serves as the independent convergence reference for the
    closed form (the iterate tends to (1-alpha) times the solved result).
    """
    if steps < 1:
        raise ContractError(f"need at least one step, got {steps}")
    lap = np.asarray(laplacian, dtype=np.float64)
    s = np.asarray(s0, dtype=np.float64)
    out = s.copy()
    for _ in range(steps):
        out = alpha * (lap @ out) + (1.0 - alpha) * s
    return out


# ---------------------------------------------------------------------------
# loss

def _cross_entropy_rows(y_star: ad.Node, labels: JointLabelMatrix,
                        target_rows: np.ndarray) -> ad.Node:
    """Mean over rows of the summed semantic and instance cross-entropies."""
    c_sem = labels.num_sem
    total = c_sem + labels.num_ins
    sem_part = ad.row_log_softmax(ad.slice_cols(y_star, 0, c_sem))
    ins_part = ad.row_log_softmax(ad.slice_cols(y_star, c_sem, total))
    targets_sem = ad.constant(labels.Y_sem[target_rows])
    targets_ins = ad.constant(labels.Y_ins[target_rows])
    per_row = ad.add(ad.reduce_sum(ad.mul(sem_part, targets_sem), axis=1),
                     ad.reduce_sum(ad.mul(ins_part, targets_ins), axis=1))
    return ad.scale(ad.reduce_mean(per_row, axis=None), -1.0)


def pair_loss(f_joint: ad.Node, labels: JointLabelMatrix, idx_a, idx_b, *,
              sigma: float = 1.0, alpha: float = 0.99, squared: bool = True,
              unit_diagonal: bool = False, direction: str = "both") -> ad.Node:
    """Propagation loss for one group pair.

    ``direction`` is "both" (labels cross in both directions and every
    union row is scored), "a_to_b", or "b_to_a" (one direction, scored on
    the receiving rows only).
    """
    idx_a = np.asarray(idx_a, dtype=np.intp)
    idx_b = np.asarray(idx_b, dtype=np.intp)
    if idx_a.size == 0 or idx_b.size == 0:
        raise ContractError("both groups of a pair must be nonempty")
    if np.intersect1d(idx_a, idx_b).size:
        raise ContractError("paired groups must be disjoint")
    if direction not in ("both", "a_to_b", "b_to_a"):
        raise ConfigError(f"unknown propagation direction: {direction!r}")

    if direction == "b_to_a":
        idx_a, idx_b = idx_b, idx_a
    union = np.concatenate([idx_a, idx_b])
    n, m = union.size, idx_a.size

    emb = ad.gather_rows(f_joint, union)
    lap = normalize_laplacian(
        build_affinity(emb, sigma, squared=squared, unit_diagonal=unit_diagonal))

    y_union = labels.Y_joint[union]
    s0 = y_union.copy()
    s0[m:] = 0.0

    if direction == "both":
        u0 = y_union.copy()
        u0[:m] = 0.0
        result = propagate_closed(lap, s0, u0, alpha=alpha)
        return _cross_entropy_rows(result.Y_star, labels, union)

    result = propagate_closed(lap, s0, alpha=alpha)
    receiving = ad.gather_rows(result.S_star, np.arange(m, n))
    return _cross_entropy_rows(receiving, labels, union[m:])


def self_prediction_loss(f_joint: ad.Node, labels: JointLabelMatrix,
                         assignment: GroupAssignment, *, sigma: float = 1.0,
                         alpha: float = 0.99, bidirectional: bool = True,
                         squared: bool = True, unit_diagonal: bool = False,
                         rng: np.random.Generator = None) -> ad.Node:
    """Mean pair loss over the assignment's pairing, in pair order.

    Unidirectional mode draws each pair's direction uniformly at random,
    which requires ``rng``.
    """
    if f_joint.value.shape[0] != assignment.group_ids.size:
        raise DimensionError("embeddings and group assignment disagree on points")
    if not bidirectional and rng is None:
        raise ContractError("unidirectional mode needs an rng to pick directions")

    total = None
    pairs = pair_point_indices(assignment)
    for idx_a, idx_b in pairs:
        if bidirectional:
            direction = "both"
        else:
            direction = "a_to_b" if rng.integers(2) == 0 else "b_to_a"
        term = pair_loss(f_joint, labels, idx_a, idx_b, sigma=sigma,
                         alpha=alpha, squared=squared,
                         unit_diagonal=unit_diagonal, direction=direction)
        total = term if total is None else ad.add(total, term)
    return ad.scale(total, 1.0 / len(pairs))
