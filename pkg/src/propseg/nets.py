"""Point-set backbone and embedding heads.

The backbone processes each point identically with a shared MLP, pools a
global feature by column-wise max over all points, concatenates the
global vector back onto every per-point feature, and fuses with a second
shared MLP into the feature matrix F. Three heads map F to instance
embeddings, semantic embeddings plus class logits, and a joint embedding
of the concatenated pair.

All forward functions operate on graph nodes so the same code path
serves training (with gradients) and inference (values only).
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from . import autodiff as ad
from .errors import CheckpointError, ConfigError, DimensionError

CHECKPOINT_MAGIC = "PSPCKPT"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Arch:
    """Layer widths; fully determines every parameter shape."""

    input_dim: int = 9
    point_widths: tuple = (64, 128, 256)
    fuse_hidden: tuple = (256,)
    feature_dim: int = 256
    ins_hidden: int = 128
    ins_dim: int = 32
    sem_hidden: int = 128
    num_classes: int = 13

    def __post_init__(self):
        widths = [self.input_dim, self.feature_dim, self.ins_hidden,
                  self.ins_dim, self.sem_hidden,
                  *self.point_widths, *self.fuse_hidden]
        if not self.point_widths:
            raise ConfigError("point_widths must name at least one layer")
        for w in widths:
            if not (isinstance(w, (int, np.integer)) and w > 0):
                raise ConfigError(f"layer widths must be positive integers, got {w!r}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")

    @property
    def joint_dim(self) -> int:
        return self.ins_dim + self.sem_hidden

    def layer_shapes(self):
        """Ordered (name, (rows, cols)) pairs for every weight and bias."""
        shapes = []

        def dense(name, fan_in, fan_out):
            shapes.append((f"{name}_w", (fan_in, fan_out)))
            shapes.append((f"{name}_b", (1, fan_out)))

        prev = self.input_dim
        for i, w in enumerate(self.point_widths):
            dense(f"point{i}", prev, w)
            prev = w
        prev = 2 * self.point_widths[-1]
        for i, w in enumerate((*self.fuse_hidden, self.feature_dim)):
            dense(f"fuse{i}", prev, w)
            prev = w
        dense("ins0", self.feature_dim, self.ins_hidden)
        dense("ins1", self.ins_hidden, self.ins_dim)
        dense("sem0", self.feature_dim, self.sem_hidden)
        dense("sem_logits", self.sem_hidden, self.num_classes)
        dense("joint", self.joint_dim, self.joint_dim)
        return shapes


@dataclass
class ModelParams:
    """Named parameter matrices plus the architecture that shaped them."""

    arch: Arch
    seed: int
    tensors: dict = field(repr=False)

    def copy(self) -> "ModelParams":
        return ModelParams(self.arch, self.seed,
                           {k: v.copy() for k, v in self.tensors.items()})


@dataclass
class FeatureBundle:
    """Per-point outputs of one forward pass (graph nodes)."""

    F: ad.Node
    F_ins: ad.Node
    F_sem: ad.Node
    sem_logits: ad.Node
    F_joint: ad.Node


def init_params(seed: int, arch: Arch = None) -> ModelParams:
    """Glorot-uniform weights, zero biases, reproducible from the seed."""
    arch = arch if arch is not None else Arch()
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, (rows, cols) in arch.layer_shapes():
        if name.endswith("_b"):
            tensors[name] = np.zeros((rows, cols))
        else:
            bound = np.sqrt(6.0 / (rows + cols))
            tensors[name] = rng.uniform(-bound, bound, size=(rows, cols))
    return ModelParams(arch, int(seed), tensors)


def _dense(p: dict, name: str, x: ad.Node, ones: ad.Node) -> ad.Node:
    """x @ W + b with the bias row tiled through a ones column."""
    h = ad.matmul(x, p[f"{name}_w"])
    return ad.add(h, ad.matmul(ones, p[f"{name}_b"]))


def _ones_column(n: int) -> ad.Node:
    return ad.constant(np.ones((n, 1)))


def backbone_forward(p: dict, points: ad.Node, arch: Arch) -> ad.Node:
    """Input N x h -> feature matrix F of shape N x feature_dim."""
    n, h = points.value.shape
    if h != arch.input_dim:
        raise DimensionError(
            f"input has {h} columns, architecture expects {arch.input_dim}")
    ones = _ones_column(n)
    x = points
    for i in range(len(arch.point_widths)):
        x = ad.relu(_dense(p, f"point{i}", x, ones))
    pooled = ad.reduce_max(x, axis=0)
    tiled = ad.matmul(ones, pooled)
    x = ad.concat_cols(x, tiled)
    for i in range(len(arch.fuse_hidden) + 1):
        x = ad.relu(_dense(p, f"fuse{i}", x, ones))
    return x


def instance_head(p: dict, F: ad.Node) -> ad.Node:
    ones = _ones_column(F.value.shape[0])
    h = ad.relu(_dense(p, "ins0", F, ones))
    return _dense(p, "ins1", h, ones)


def semantic_head(p: dict, F: ad.Node):
    """Returns (F_sem, sem_logits)."""
    ones = _ones_column(F.value.shape[0])
    f_sem = ad.relu(_dense(p, "sem0", F, ones))
    return f_sem, _dense(p, "sem_logits", f_sem, ones)


def joint_embed(p: dict, f_ins: ad.Node, f_sem: ad.Node) -> ad.Node:
    if f_ins.value.shape[0] != f_sem.value.shape[0]:
        raise DimensionError("instance and semantic embeddings disagree on rows")
    cat = ad.concat_cols(f_ins, f_sem)
    return _dense(p, "joint", cat, _ones_column(cat.value.shape[0]))


def wrap_params(params: ModelParams) -> dict:
    """Fresh parameter nodes for one graph; keys match the tensor names."""
    return {name: ad.parameter(v) for name, v in params.tensors.items()}


def forward_bundle(p: dict, points: ad.Node, arch: Arch) -> FeatureBundle:
    F = backbone_forward(p, points, arch)
    f_ins = instance_head(p, F)
    f_sem, logits = semantic_head(p, F)
    return FeatureBundle(F, f_ins, f_sem, logits, joint_embed(p, f_ins, f_sem))


def forward_values(params: ModelParams, points: np.ndarray) -> FeatureBundle:
    """Inference-only forward; bundle fields still expose ``.value``."""
    node = ad.constant(points)
    return forward_bundle(wrap_params(params), node, params.arch)


# ---------------------------------------------------------------------------
# checkpoint persistence

_ARCH_FIELDS = {f.name: f for f in fields(Arch)}


def _arch_to_lines(arch: Arch):
    for name in _ARCH_FIELDS:
        v = getattr(arch, name)
        text = ",".join(str(x) for x in v) if isinstance(v, tuple) else str(v)
        yield f"{name} {text}"


def _arch_from_pairs(pairs: dict) -> Arch:
    kwargs = {}
    for key, text in pairs.items():
        f = _ARCH_FIELDS.get(key)
        if f is None:
            raise CheckpointError(f"unknown architecture key: {key}")
        if f.type == "tuple" or isinstance(f.default, tuple):
            kwargs[key] = tuple(int(x) for x in text.split(","))
        else:
            kwargs[key] = int(text)
    missing = set(_ARCH_FIELDS) - set(kwargs)
    if missing:
        raise CheckpointError(f"architecture keys missing: {sorted(missing)}")
    try:
        return Arch(**kwargs)
    except ConfigError as err:
        raise CheckpointError(f"invalid architecture in checkpoint: {err}") from err


def save_checkpoint(params: ModelParams, path):
    lines = [CHECKPOINT_MAGIC, f"version {CHECKPOINT_VERSION}",
             f"seed {params.seed}", *_arch_to_lines(params.arch),
             f"tensors {len(params.tensors)}"]
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n\n").encode("utf-8"))
        for name, arr in params.tensors.items():
            rows, cols = arr.shape
            fh.write(f"{name} {rows} {cols}\n".encode("utf-8"))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_line(fh, what: str) -> str:
    raw = fh.readline()
    if not raw.endswith(b"\n"):
        raise CheckpointError(f"truncated checkpoint: expected {what}")
    return raw[:-1].decode("utf-8")


def load_checkpoint(path) -> ModelParams:
    try:
        fh = open(path, "rb")
    except OSError as err:
        raise CheckpointError(f"cannot open checkpoint: {err}") from err
    with fh:
        if _read_line(fh, "magic") != CHECKPOINT_MAGIC:
            raise CheckpointError("not a checkpoint file (bad magic)")
        header = {}
        while True:
            line = _read_line(fh, "header line")
            if not line:
                break
            key, _, value = line.partition(" ")
            header[key] = value
        if header.pop("version", None) != str(CHECKPOINT_VERSION):
            raise CheckpointError("unsupported checkpoint version")
        try:
            seed = int(header.pop("seed"))
            count = int(header.pop("tensors"))
        except (KeyError, ValueError) as err:
            raise CheckpointError(f"malformed checkpoint header: {err}") from err
        arch = _arch_from_pairs(header)

        expected = dict(arch.layer_shapes())
        tensors = {}
        for _ in range(count):
            line = _read_line(fh, "tensor header")
            parts = line.split()
            if len(parts) != 3:
                raise CheckpointError(f"malformed tensor header: {line!r}")
            name = parts[0]
            try:
                rows, cols = int(parts[1]), int(parts[2])
            except ValueError as err:
                raise CheckpointError(f"malformed tensor header: {line!r}") from err
            if name not in expected:
                raise CheckpointError(f"unknown parameter name: {name}")
            if (rows, cols) != expected[name]:
                raise CheckpointError(
                    f"parameter {name} has shape {(rows, cols)}, "
                    f"architecture implies {expected[name]}")
            raw = fh.read(rows * cols * 8)
            if len(raw) != rows * cols * 8:
                raise CheckpointError(f"truncated data for parameter {name}")
            tensors[name] = np.frombuffer(raw, dtype="<f8").reshape(rows, cols).copy()
        missing = set(expected) - set(tensors)
        if missing:
            raise CheckpointError(f"parameters missing: {sorted(missing)}")
    # reorder to canonical layout so iteration order never depends on the file
    ordered = {name: tensors[name] for name in expected}
    return ModelParams(arch, seed, ordered)
