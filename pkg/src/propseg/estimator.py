"""Scikit-learn style front door for the whole pipeline."""

from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .config import RunConfig
from .data import Scene
from .inference import predict_scene
from .training import train


class SelfPredictionSegmenter(BaseEstimator):
    """Joint instance and semantic segmenter for point cloud scenes.

    Parameters mirror RunConfig one to one; see that class for meaning
    and defaults. ``fit`` trains from scratch on a list of Scene
    objects, ``predict`` runs block-wise inference on one scene and
    returns ``(sem_ids, ins_ids)`` aligned with ``scene.coords``.
    """

    def __init__(self, sigma=1.0, alpha=0.99, beta=0.8, groups=8,
                 bidirectional=True, stratified=True, squared_distance=True,
                 unit_diagonal=False, delta_v=0.5, delta_d=1.5, bandwidth=0.8,
                 merge_cell=0.5, merge_overlap=0.3, lr=0.01, lr_halve_every=20,
                 epochs=100, batch=8, momentum=0.0, points_per_block=512,
                 block_size=1.0, mode="scene", seed=0, validate_every=5,
                 point_widths=(64, 128, 256), fuse_hidden=(256,),
                 feature_dim=256, ins_hidden=128):
        self.sigma = sigma
        self.alpha = alpha
        self.beta = beta
        self.groups = groups
        self.bidirectional = bidirectional
        self.stratified = stratified
        self.squared_distance = squared_distance
        self.unit_diagonal = unit_diagonal
        self.delta_v = delta_v
        self.delta_d = delta_d
        self.bandwidth = bandwidth
        self.merge_cell = merge_cell
        self.merge_overlap = merge_overlap
        self.lr = lr
        self.lr_halve_every = lr_halve_every
        self.epochs = epochs
        self.batch = batch
        self.momentum = momentum
        self.points_per_block = points_per_block
        self.block_size = block_size
        self.mode = mode
        self.seed = seed
        self.validate_every = validate_every
        self.point_widths = point_widths
        self.fuse_hidden = fuse_hidden
        self.feature_dim = feature_dim
        self.ins_hidden = ins_hidden

    def _config(self) -> RunConfig:
        return RunConfig(**self.get_params())

    def fit(self, X, y=None, *, val_scenes=()):
        """Train on a list of scenes. ``y`` is ignored; labels live in X."""
        result = train(list(X), self._config(), val_scenes=list(val_scenes))
        self.params_ = result.params
        self.arch_ = result.params.arch
        self.train_log_ = result.log
        self.n_classes_ = result.params.arch.num_classes
        return self

    def predict(self, scene: Scene):
        if not hasattr(self, "params_"):
            raise NotFittedError("fit the segmenter before calling predict")
        pred = predict_scene(self.params_, scene, self._config())
        return pred.sem_ids, pred.ins_ids
