"""Backbone and head behaviour plus checkpoint persistence."""

import numpy as np
import pytest

from propseg import autodiff as ad
from propseg import nets
from propseg.errors import CheckpointError, ConfigError, DimensionError

from oracles import assert_gradients_close

SMALL = nets.Arch(input_dim=3, point_widths=(8, 12), fuse_hidden=(10,),
                  feature_dim=16, ins_hidden=6, ins_dim=4, sem_hidden=5,
                  num_classes=3)


def _bundle(params, pts):
    return nets.forward_values(params, pts)


def test_init_deterministic_and_seed_sensitive():
    a = nets.init_params(7, SMALL)
    b = nets.init_params(7, SMALL)
    c = nets.init_params(8, SMALL)
    for name in a.tensors:
        assert np.array_equal(a.tensors[name], b.tensors[name])
    assert any(not np.array_equal(a.tensors[n], c.tensors[n]) for n in a.tensors)


def test_init_glorot_bounds_and_zero_biases():
    p = nets.init_params(0, SMALL)
    for name, arr in p.tensors.items():
        if name.endswith("_b"):
            assert np.array_equal(arr, np.zeros_like(arr))
        else:
            bound = np.sqrt(6.0 / sum(arr.shape))
            assert np.all(np.abs(arr) <= bound)


def test_default_arch_shapes():
    p = nets.init_params(1)
    pts = np.random.default_rng(2).normal(size=(4, 9))
    out = _bundle(p, pts)
    assert out.F.value.shape == (4, 256)
    assert out.F_ins.value.shape == (4, 32)
    assert out.F_sem.value.shape == (4, 128)
    assert out.sem_logits.value.shape == (4, 13)
    assert out.F_joint.value.shape == (4, 160)


@pytest.mark.parametrize("n", [1, 2, 7])
@pytest.mark.parametrize("h", [3, 9])
def test_shape_contract_all_sizes(n, h):
    arch = nets.Arch(input_dim=h, point_widths=(8,), fuse_hidden=(8,),
                     feature_dim=8, ins_hidden=4, ins_dim=3, sem_hidden=5,
                     num_classes=2)
    p = nets.init_params(3, arch)
    out = _bundle(p, np.random.default_rng(4).normal(size=(n, h)))
    assert out.F.value.shape == (n, 8)
    assert out.F_joint.value.shape == (n, 8)


def test_input_width_mismatch():
    p = nets.init_params(0, SMALL)
    with pytest.raises(DimensionError):
        _bundle(p, np.zeros((4, 9)))


def test_bad_arch_values():
    with pytest.raises(ConfigError):
        nets.Arch(num_classes=1)
    with pytest.raises(ConfigError):
        nets.Arch(feature_dim=0)
    with pytest.raises(ConfigError):
        nets.Arch(point_widths=())


def test_permutation_equivariance():
    rng = np.random.default_rng(5)
    pts = rng.normal(size=(6, 3))
    perm = rng.permutation(6)
    p = nets.init_params(6, SMALL)
    base = _bundle(p, pts)
    permed = _bundle(p, pts[perm])
    for field in ("F", "F_ins", "F_sem", "sem_logits", "F_joint"):
        assert np.allclose(getattr(base, field).value[perm],
                           getattr(permed, field).value)


def test_duplicated_points_duplicate_features():
    p = nets.init_params(9, SMALL)
    row = np.random.default_rng(10).normal(size=(1, 3))
    out = _bundle(p, np.vstack([row, row]))
    assert np.array_equal(out.F.value[0], out.F.value[1])
    assert np.array_equal(out.F_joint.value[0], out.F_joint.value[1])


def test_softmax_of_logits_normalized():
    p = nets.init_params(11, SMALL)
    out = _bundle(p, np.random.default_rng(12).normal(size=(5, 3)))
    probs = ad.row_softmax(out.sem_logits).value
    assert np.allclose(probs.sum(axis=1), 1.0)


def test_zero_instance_head_gives_zero_output():
    p = nets.init_params(13, SMALL)
    for name in ("ins0_w", "ins0_b", "ins1_w", "ins1_b"):
        p.tensors[name] = np.zeros_like(p.tensors[name])
    out = _bundle(p, np.random.default_rng(14).normal(size=(4, 3)))
    assert np.array_equal(out.F_ins.value, np.zeros((4, 4)))


def test_identity_joint_returns_concatenation():
    p = nets.init_params(15, SMALL)
    d = SMALL.joint_dim
    p.tensors["joint_w"] = np.eye(d)
    p.tensors["joint_b"] = np.zeros((1, d))
    out = _bundle(p, np.random.default_rng(16).normal(size=(4, 3)))
    cat = np.hstack([out.F_ins.value, out.F_sem.value])
    assert np.allclose(out.F_joint.value, cat)


def test_backbone_gradients_match_finite_differences():
    arch = nets.Arch(input_dim=3, point_widths=(4,), fuse_hidden=(4,),
                     feature_dim=4, ins_hidden=3, ins_dim=2, sem_hidden=3,
                     num_classes=2)
    base = nets.init_params(17, arch)
    pts = np.random.default_rng(18).normal(size=(3, 3))
    names = list(base.tensors)

    def run(tensors):
        nodes = {k: ad.parameter(v) for k, v in tensors.items()}
        out = nets.forward_bundle(nodes, ad.constant(pts), arch)
        loss = ad.reduce_mean(ad.square(out.F_joint))
        return nodes, ad.add(loss, ad.reduce_mean(ad.square(out.sem_logits)))

    nodes, loss = run(base.tensors)
    grads = ad.backward(loss, nodes.values())
    named = {k: grads[nodes[k]] for k in names}

    def f(vals):
        _, l = run(vals)
        return float(l.value[0, 0])

    assert_gradients_close(f, dict(base.tensors), named)


def test_checkpoint_round_trip(tmp_path):
    p = nets.init_params(19, SMALL)
    path = tmp_path / "model.ckpt"
    nets.save_checkpoint(p, path)
    q = nets.load_checkpoint(path)
    assert q.arch == p.arch
    assert q.seed == p.seed
    assert list(q.tensors) == list(p.tensors)
    for name in p.tensors:
        assert np.array_equal(q.tensors[name], p.tensors[name])


def test_checkpoint_default_arch_reports_feature_dim(tmp_path):
    p = nets.init_params(20)
    path = tmp_path / "d.ckpt"
    nets.save_checkpoint(p, path)
    assert nets.load_checkpoint(path).arch.feature_dim == 256


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "x.ckpt"
    path.write_bytes(b"NOTACKPT\n")
    with pytest.raises(CheckpointError):
        nets.load_checkpoint(path)


def test_checkpoint_truncated(tmp_path):
    p = nets.init_params(21, SMALL)
    path = tmp_path / "t.ckpt"
    nets.save_checkpoint(p, path)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) - 40])
    with pytest.raises(CheckpointError):
        nets.load_checkpoint(path)


def test_checkpoint_missing_parameter(tmp_path):
    p = nets.init_params(22, SMALL)
    path = tmp_path / "m.ckpt"
    nets.save_checkpoint(p, path)
    text = path.read_bytes()
    # drop the last tensor record and lower the declared count
    marker = b"joint_b 1 "
    idx = text.index(marker)
    trimmed = text[:idx]
    count = f"tensors {len(p.tensors)}".encode()
    trimmed = trimmed.replace(count, f"tensors {len(p.tensors) - 1}".encode())
    path.write_bytes(trimmed)
    with pytest.raises(CheckpointError, match="missing"):
        nets.load_checkpoint(path)


def test_checkpoint_unknown_parameter(tmp_path):
    p = nets.init_params(23, SMALL)
    path = tmp_path / "u.ckpt"
    nets.save_checkpoint(p, path)
    data = path.read_bytes().replace(b"ins0_w 16 6", b"rogueW 16 6")
    path.write_bytes(data)
    with pytest.raises(CheckpointError, match="unknown parameter"):
        nets.load_checkpoint(path)


def test_checkpoint_version_mismatch(tmp_path):
    p = nets.init_params(24, SMALL)
    path = tmp_path / "v.ckpt"
    nets.save_checkpoint(p, path)
    data = path.read_bytes().replace(b"version 1\n", b"version 9\n", 1)
    path.write_bytes(data)
    with pytest.raises(CheckpointError, match="version"):
        nets.load_checkpoint(path)


def test_missing_file():
    with pytest.raises(CheckpointError):
        nets.load_checkpoint("/nonexistent/path.ckpt")
