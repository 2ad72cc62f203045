"""Synthetic scenes, block splitting and sampling, and the disk formats.

Scenes are simple labeled rooms: a floor, optional perimeter walls, and
furniture-like objects (boxes and round point clusters), each object one
instance with one semantic class. Scenes split into non-overlapping 1 m
x-y blocks; training samples a fixed number of points per block and
builds 9-dim features (block-local position, color, room-normalized
position). A shape mode skips blocks and uses raw coordinates.

On disk, a scene is a "ptsseg" text file: a header line
``ptsseg 1 <N> <C_sem>`` followed by N lines ``x y z r g b sem ins``.
Predictions use ``ptspred 1 <N>`` and ``x y z sem ins`` rows. ``#``
starts a comment in both.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, DataError, GenerationError, ParseError
from .validation import check_labels, check_matrix

SCENE_CLASSES = ("floor", "wall", "box", "cluster")
SHAPE_CLASSES = ("body", "attachment")
COORD_DECIMALS = 6

_BASE_COLORS = {
    "floor": (0.45, 0.42, 0.40),
    "wall": (0.80, 0.78, 0.75),
    "box": (0.55, 0.30, 0.20),
    "cluster": (0.20, 0.40, 0.70),
    "body": (0.55, 0.30, 0.20),
    "attachment": (0.20, 0.40, 0.70),
}


@dataclass
class Scene:
    coords: np.ndarray
    colors: np.ndarray
    sem_ids: np.ndarray
    ins_ids: np.ndarray
    extents: np.ndarray
    class_names: tuple

    def __post_init__(self):
        self.coords = check_matrix(self.coords, "coords", cols=3)
        self.colors = check_matrix(self.colors, "colors",
                                   rows=self.coords.shape[0], cols=3)
        n = self.coords.shape[0]
        self.sem_ids = check_labels(self.sem_ids, "sem_ids", n=n, low=0,
                                    high=len(self.class_names) - 1)
        self.ins_ids = check_labels(self.ins_ids, "ins_ids", n=n, low=0)
        self.extents = np.asarray(self.extents, dtype=np.float64).reshape(3)
        if np.any(self.extents <= 0):
            raise DataError(f"extents must be positive, got {self.extents}")
        if n and (np.any(self.coords < -1e-9)
                  or np.any(self.coords > self.extents + 1e-9)):
            raise DataError("scene has points outside its extents")
        for u in np.unique(self.ins_ids):
            classes = np.unique(self.sem_ids[self.ins_ids == u])
            if classes.size != 1:
                raise DataError(
                    f"instance {u} spans semantic classes {classes.tolist()}")

    @property
    def num_points(self) -> int:
        return self.coords.shape[0]


@dataclass(frozen=True)
class SceneSpec:
    """Knobs for the synthetic room generator.

    Count fields take either an exact int or an inclusive (lo, hi) range.
    ``block_safe`` confines each object to a single cell of the implied
    block grid, which keeps cross-block merging out of the picture.
    """

    extents: tuple = (2.0, 2.0, 2.0)
    boxes: object = (2, 4)
    clusters: object = (1, 2)
    walls: bool = True
    floor_points: int = 600
    wall_points: int = 120
    box_points: int = 220
    cluster_points: int = 160
    box_size: tuple = (0.3, 0.7)
    cluster_radius: tuple = (0.15, 0.3)
    jitter: float = 0.005
    color_noise: float = 0.05
    block_safe: bool = False
    block_size: float = 1.0


@dataclass(frozen=True)
class PointCloudSample:
    features: np.ndarray
    sem_ids: np.ndarray
    ins_ids: np.ndarray
    origin: np.ndarray
    indices: np.ndarray  # rows of the source scene each sample row came from


@dataclass(frozen=True)
class Block:
    origin: np.ndarray
    indices: np.ndarray


def _count(rng, value) -> int:
    if isinstance(value, (int, np.integer)):
        return int(value)
    lo, hi = value
    return int(rng.integers(lo, hi + 1))


def _cell_ranges(extent: float, cell: float):
    """(lo, hi) x-range of every grid cell intersecting [0, extent]."""
    cells = max(1, int(np.ceil(extent / cell - 1e-9)))
    return [(i * cell, min((i + 1) * cell, extent)) for i in range(cells)]


def _color(rng, class_name: str, n: int, noise: float) -> np.ndarray:
    base = np.array(_BASE_COLORS[class_name])
    return np.clip(base + noise * rng.normal(size=(n, 3)), 0.0, 1.0)


def generate_scene(spec: SceneSpec, seed) -> Scene:
    """Deterministic labeled room for the given spec and seed."""
    rng = seed if isinstance(seed, np.random.Generator) \
        else np.random.default_rng(seed)
    ex, ey, ez = (float(v) for v in spec.extents)
    if min(ex, ey, ez) <= 0:
        raise GenerationError(f"extents must be positive, got {spec.extents}")

    coords, colors, sems, inss = [], [], [], []
    next_ins = 0

    def add(points, class_name, instance=None):
        nonlocal next_ins
        if instance is None:
            instance = next_ins
            next_ins += 1
        points = np.clip(points, 0.0, [ex, ey, ez])
        coords.append(points)
        colors.append(_color(rng, class_name, len(points), spec.color_noise))
        sems.append(np.full(len(points), SCENE_CLASSES.index(class_name)))
        inss.append(np.full(len(points), instance))

    floor = np.column_stack([
        rng.uniform(0, ex, spec.floor_points),
        rng.uniform(0, ey, spec.floor_points),
        np.abs(rng.normal(0, spec.jitter, spec.floor_points)),
    ])
    add(floor, "floor")

    if spec.walls:
        for axis, offset in ((0, 0.0), (0, ex), (1, 0.0), (1, ey)):
            span = ey if axis == 0 else ex
            u = rng.uniform(0, span, spec.wall_points)
            z = rng.uniform(0, ez, spec.wall_points)
            depth = np.abs(rng.normal(0, spec.jitter, spec.wall_points))
            depth = depth if offset == 0.0 else -depth
            pts = np.empty((spec.wall_points, 3))
            pts[:, axis] = offset + depth
            pts[:, 1 - axis] = u
            pts[:, 2] = z
            add(pts, "wall")

    def place(size3) -> np.ndarray:
        """Lower corner for an object of the given footprint, on the floor."""
        margin = 0.05
        if spec.block_safe:
            options = []
            for lox, hix in _cell_ranges(ex, spec.block_size):
                for loy, hiy in _cell_ranges(ey, spec.block_size):
                    if (hix - lox - 2 * margin >= size3[0]
                            and hiy - loy - 2 * margin >= size3[1]):
                        options.append((lox, hix, loy, hiy))
            if not options:
                raise GenerationError(
                    f"no block cell fits an object of footprint {size3[:2]}")
            lox, hix, loy, hiy = options[int(rng.integers(len(options)))]
        else:
            lox, hix, loy, hiy = 0.0, ex, 0.0, ey
            if hix - lox < size3[0] or hiy - loy < size3[1]:
                raise GenerationError(
                    f"object footprint {size3[:2]} exceeds room {spec.extents}")
        if size3[2] > ez:
            raise GenerationError(
                f"object height {size3[2]} exceeds room height {ez}")
        x = rng.uniform(lox + margin, hix - margin - size3[0])
        y = rng.uniform(loy + margin, hiy - margin - size3[1])
        return np.array([x, y, 0.0])

    for _ in range(_count(rng, spec.boxes)):
        size = rng.uniform(*spec.box_size, size=3)
        corner = place(size)
        add(_box_surface(rng, corner, size, spec.box_points, spec.jitter),
            "box")

    for _ in range(_count(rng, spec.clusters)):
        r = float(rng.uniform(*spec.cluster_radius))
        corner = place(np.array([2 * r, 2 * r, 2 * r]))
        center = corner + r
        center[2] = float(rng.uniform(r, max(ez - r, r)))
        dirs = rng.normal(size=(spec.cluster_points, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii = r * rng.uniform(0, 1, spec.cluster_points) ** (1.0 / 3.0)
        add(center + dirs * radii[:, None], "cluster")

    return Scene(np.vstack(coords), np.vstack(colors),
                 np.concatenate(sems), np.concatenate(inss),
                 np.array([ex, ey, ez]), SCENE_CLASSES)


def _box_surface(rng, corner, size, n, jitter) -> np.ndarray:
    areas = np.array([size[1] * size[2], size[1] * size[2],
                      size[0] * size[2], size[0] * size[2],
                      size[0] * size[1], size[0] * size[1]])
    faces = rng.choice(6, size=n, p=areas / areas.sum())
    uv = rng.uniform(0, 1, size=(n, 2))
    pts = np.empty((n, 3))
    for i in range(n):
        f = faces[i]
        axis = f // 2
        hi = f % 2
        others = [a for a in range(3) if a != axis]
        pts[i, axis] = hi * size[axis]
        pts[i, others[0]] = uv[i, 0] * size[others[0]]
        pts[i, others[1]] = uv[i, 1] * size[others[1]]
    return corner + pts + rng.normal(0, jitter, size=(n, 3))


def generate_shape(seed, parts=(1, 3), points_per_part=200,
                   body_points=400) -> Scene:
    """Single object: a box body with round attachments, unit-ish scale."""
    rng = seed if isinstance(seed, np.random.Generator) \
        else np.random.default_rng(seed)
    extent = np.array([1.0, 1.0, 1.0])
    size = rng.uniform(0.35, 0.6, size=3)
    corner = (extent - size) / 2.0
    coords = [np.clip(_box_surface(rng, corner, size, body_points, 0.003),
                      0, extent)]
    sems = [np.zeros(body_points, dtype=np.int64)]
    inss = [np.zeros(body_points, dtype=np.int64)]
    k = _count(rng, parts)
    for j in range(k):
        r = float(rng.uniform(0.08, 0.15))
        anchor = corner + rng.uniform(0, 1, size=3) * size
        dirs = rng.normal(size=(points_per_part, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii = r * rng.uniform(0, 1, points_per_part) ** (1.0 / 3.0)
        coords.append(np.clip(anchor + dirs * radii[:, None], 0, extent))
        sems.append(np.ones(points_per_part, dtype=np.int64))
        inss.append(np.full(points_per_part, j + 1))
    coords = np.vstack(coords)
    n = coords.shape[0]
    colors = np.empty((n, 3))
    sem_all = np.concatenate(sems)
    for c, name in enumerate(SHAPE_CLASSES):
        mask = sem_all == c
        colors[mask] = _color(rng, name, int(mask.sum()), 0.05)
    return Scene(coords, colors, sem_all, np.concatenate(inss),
                 extent, SHAPE_CLASSES)


# ---------------------------------------------------------------------------
# blocks and samples

def split_blocks(scene: Scene, block_size: float = 1.0):
    """Non-overlapping x-y grid; every point lands in exactly one block."""
    if block_size <= 0:
        raise ContractError(f"block_size must be positive, got {block_size}")
    ncx = max(1, int(np.ceil(scene.extents[0] / block_size - 1e-9)))
    ncy = max(1, int(np.ceil(scene.extents[1] / block_size - 1e-9)))
    ix = np.minimum((scene.coords[:, 0] // block_size).astype(np.int64), ncx - 1)
    iy = np.minimum((scene.coords[:, 1] // block_size).astype(np.int64), ncy - 1)
    blocks = []
    for cx in range(ncx):
        for cy in range(ncy):
            idx = np.flatnonzero((ix == cx) & (iy == cy))
            if idx.size:
                blocks.append(Block(
                    np.array([cx * block_size, cy * block_size]), idx))
    return blocks


def sample_block(scene: Scene, block: Block, n, rng=None, *,
                 shape_mode: bool = False) -> PointCloudSample:
    """Fixed-size training sample, or all points when ``n`` is None.

    Blocks smaller than ``n`` contribute every point at least once and
    fill the rest by resampling with replacement.
    """
    m = block.indices.size
    if m == 0:
        raise ContractError("cannot sample an empty block")
    if n is None:
        chosen = block.indices
    else:
        if rng is None:
            raise ContractError("sampling to a fixed size needs an rng")
        if m >= n:
            chosen = block.indices[rng.choice(m, size=n, replace=False)]
        else:
            extra = rng.integers(0, m, size=n - m)
            chosen = block.indices[np.concatenate([np.arange(m), extra])]

    coords = scene.coords[chosen]
    if shape_mode:
        feats = coords.copy()
    else:
        local = coords.copy()
        local[:, 0] -= block.origin[0]
        local[:, 1] -= block.origin[1]
        normalized = np.clip(coords / scene.extents, 0.0, 1.0)
        feats = np.hstack([local, scene.colors[chosen], normalized])
    _, dense = np.unique(scene.ins_ids[chosen], return_inverse=True)
    return PointCloudSample(feats, scene.sem_ids[chosen].copy(),
                            dense.astype(np.int64),
                            block.origin.copy(), chosen.copy())


# ---------------------------------------------------------------------------
# disk formats

PTSSEG_MAGIC = "ptsseg"
PRED_MAGIC = "ptspred"
FORMAT_VERSION = 1


def write_ptsseg(path, scene: Scene):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{PTSSEG_MAGIC} {FORMAT_VERSION} {scene.num_points} "
                 f"{len(scene.class_names)}\n")
        for i in range(scene.num_points):
            x, y, z = scene.coords[i]
            r, g, b = scene.colors[i]
            fh.write(f"{x:.6f} {y:.6f} {z:.6f} {r:.6f} {g:.6f} {b:.6f} "
                     f"{scene.sem_ids[i]} {scene.ins_ids[i]}\n")


def _data_lines(path):
    """Yield (line_number, stripped_text) skipping blanks and comments."""
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as err:
        raise DataError(f"cannot open {path}: {err}") from err
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if text:
                yield lineno, text


def _parse_floats(parts, lineno, path):
    try:
        return [float(p) for p in parts]
    except ValueError as err:
        raise ParseError(f"{path}:{lineno}: non-numeric token ({err})") from err


def _parse_int(token, lineno, path, what):
    try:
        return int(token)
    except ValueError as err:
        raise ParseError(f"{path}:{lineno}: {what} must be an integer, "
                         f"got {token!r}") from err


def read_ptsseg(path) -> Scene:
    lines = _data_lines(path)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise ParseError(f"{path}:1: empty file, expected header") from None
    parts = header.split()
    if len(parts) != 4 or parts[0] != PTSSEG_MAGIC:
        raise ParseError(f"{path}:{lineno}: bad header, expected "
                         f"'{PTSSEG_MAGIC} {FORMAT_VERSION} <N> <C>'")
    if _parse_int(parts[1], lineno, path, "format version") != FORMAT_VERSION:
        raise ParseError(f"{path}:{lineno}: unsupported format version {parts[1]}")
    n = _parse_int(parts[2], lineno, path, "point count")
    c = _parse_int(parts[3], lineno, path, "class count")
    if n < 0 or c < 1:
        raise ParseError(f"{path}:{lineno}: invalid header counts")

    coords = np.empty((n, 3))
    colors = np.empty((n, 3))
    sems = np.empty(n, dtype=np.int64)
    inss = np.empty(n, dtype=np.int64)
    got = 0
    last_line = lineno
    for lineno, text in lines:
        if got >= n:
            raise ParseError(f"{path}:{lineno}: more than {n} point lines")
        parts = text.split()
        if len(parts) != 8:
            raise ParseError(
                f"{path}:{lineno}: expected 8 fields, got {len(parts)}")
        vals = _parse_floats(parts[:6], lineno, path)
        sem = _parse_int(parts[6], lineno, path, "semantic label")
        ins = _parse_int(parts[7], lineno, path, "instance label")
        if not 0 <= sem < c:
            raise ParseError(
                f"{path}:{lineno}: semantic label {sem} outside 0..{c - 1}")
        if ins < 0:
            raise ParseError(f"{path}:{lineno}: negative instance label {ins}")
        coords[got] = vals[:3]
        colors[got] = vals[3:]
        sems[got] = sem
        inss[got] = ins
        got += 1
        last_line = lineno
    if got != n:
        raise ParseError(
            f"{path}:{last_line}: truncated file, {got} of {n} points")

    extents = np.maximum(coords.max(axis=0) if n else np.ones(3), 1e-6)
    try:
        return Scene(coords, colors, sems, inss, extents,
                     tuple(f"class{i}" for i in range(c)))
    except DataError as err:
        raise DataError(f"{path}: {err}") from err


def write_predictions(path, coords, sem_ids, ins_ids):
    coords = check_matrix(coords, "coords", cols=3)
    n = coords.shape[0]
    sem_ids = check_labels(sem_ids, "sem_ids", n=n, low=0)
    ins_ids = check_labels(ins_ids, "ins_ids", n=n, low=0)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{PRED_MAGIC} {FORMAT_VERSION} {n}\n")
        for i in range(n):
            x, y, z = coords[i]
            fh.write(f"{x:.6f} {y:.6f} {z:.6f} {sem_ids[i]} {ins_ids[i]}\n")


def read_predictions(path):
    """Returns (coords, sem_ids, ins_ids) in file order."""
    lines = _data_lines(path)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise ParseError(f"{path}:1: empty file, expected header") from None
    parts = header.split()
    if len(parts) != 3 or parts[0] != PRED_MAGIC:
        raise ParseError(f"{path}:{lineno}: bad header, expected "
                         f"'{PRED_MAGIC} {FORMAT_VERSION} <N>'")
    if _parse_int(parts[1], lineno, path, "format version") != FORMAT_VERSION:
        raise ParseError(f"{path}:{lineno}: unsupported format version {parts[1]}")
    n = _parse_int(parts[2], lineno, path, "point count")
    coords = np.empty((n, 3))
    sems = np.empty(n, dtype=np.int64)
    inss = np.empty(n, dtype=np.int64)
    got = 0
    last_line = lineno
    for lineno, text in lines:
        if got >= n:
            raise ParseError(f"{path}:{lineno}: more than {n} point lines")
        parts = text.split()
        if len(parts) != 5:
            raise ParseError(
                f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
        coords[got] = _parse_floats(parts[:3], lineno, path)
        sems[got] = _parse_int(parts[3], lineno, path, "semantic label")
        inss[got] = _parse_int(parts[4], lineno, path, "instance label")
        got += 1
        last_line = lineno
    if got != n:
        raise ParseError(
            f"{path}:{last_line}: truncated file, {got} of {n} points")
    return coords, sems, inss


# ---------------------------------------------------------------------------
# dataset manifest

MANIFEST_MAGIC = "ptsseg-manifest"
MANIFEST_NAME = "manifest.txt"


@dataclass
class Manifest:
    class_names: tuple
    mode: str
    train: list = field(default_factory=list)
    val: list = field(default_factory=list)


def write_manifest(path, manifest: Manifest):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{MANIFEST_MAGIC} {FORMAT_VERSION}\n")
        fh.write(f"mode {manifest.mode}\n")
        fh.write("classes " + ",".join(manifest.class_names) + "\n")
        for name in manifest.train:
            fh.write(f"train {name}\n")
        for name in manifest.val:
            fh.write(f"val {name}\n")


def read_manifest(path) -> Manifest:
    mode = None
    classes = None
    train, val = [], []
    lines = _data_lines(path)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise ParseError(f"{path}:1: empty manifest") from None
    parts = header.split()
    if len(parts) != 2 or parts[0] != MANIFEST_MAGIC:
        raise ParseError(f"{path}:{lineno}: bad manifest header")
    if _parse_int(parts[1], lineno, path, "version") != FORMAT_VERSION:
        raise ParseError(f"{path}:{lineno}: unsupported manifest version")
    for lineno, text in lines:
        key, _, value = text.partition(" ")
        value = value.strip()
        if key == "mode":
            if value not in ("scene", "shape"):
                raise ParseError(f"{path}:{lineno}: unknown mode {value!r}")
            mode = value
        elif key == "classes":
            classes = tuple(v for v in value.split(",") if v)
            if len(classes) < 2:
                raise ParseError(f"{path}:{lineno}: need at least 2 classes")
        elif key == "train":
            train.append(value)
        elif key == "val":
            val.append(value)
        else:
            raise ParseError(f"{path}:{lineno}: unknown manifest key {key!r}")
    if mode is None or classes is None:
        raise ParseError(f"{path}: manifest must declare mode and classes")
    return Manifest(classes, mode, train, val)


def load_split(manifest_path, manifest: Manifest, split: str):
    """Scenes for 'train' or 'val', in manifest order."""
    base = Path(manifest_path).parent
    names = manifest.train if split == "train" else manifest.val
    scenes = []
    for name in names:
        scene = read_ptsseg(base / name)
        if len(scene.class_names) != len(manifest.class_names):
            raise DataError(
                f"{name}: {len(scene.class_names)} classes, manifest has "
                f"{len(manifest.class_names)}")
        scene.class_names = manifest.class_names
        scenes.append(scene)
    return scenes
