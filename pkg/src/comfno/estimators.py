"""Scikit-learn style regressors wrapping the operator models.

Rows of X are source-term samples at the mesh nodes (row-major flattened
for 2D meshes); rows of y are the matching solution values. Coordinate
channels are appended internally, so X carries only function values.
"""

import math
import numbers

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import ShapeError
from .grids import Mesh1D, Mesh2D, uniform_mesh
from .models import ComFnoConfig, FnoConfig, LayerBlockSpec
from .training import Dataset, TrainConfig, predict, stack_channels, train_loop


def _check_matrix(name, arr):
    arr = check_array(arr, dtype=np.float64, ensure_2d=True)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def _check_eps(eps, count):
    """Validate epsilon: scalar or per-sample; returns ((count,) array, mode)."""
    if eps is None:
        raise ValueError("eps is required: pass it to fit or set the estimator default")
    if isinstance(eps, numbers.Real):
        if not math.isfinite(eps) or eps <= 0:
            raise ValueError("eps must be finite and positive")
        return np.full(count, float(eps)), "shared"
    eps_arr = np.asarray(eps, dtype=np.float64).reshape(-1)
    if eps_arr.size != count:
        raise ShapeError(f"eps needs one value per sample, got {eps_arr.size} for {count}")
    if not np.all(np.isfinite(eps_arr)) or np.any(eps_arr <= 0):
        raise ValueError("eps values must be finite and positive")
    return eps_arr, "per-sample"


def _default_mesh(ndim, n_features):
    if ndim == 1:
        return uniform_mesh(n_features - 1)
    side = math.isqrt(n_features)
    if side * side != n_features:
        raise ShapeError(
            f"2D input with {n_features} features is not square; pass mesh= to fit")
    axis = uniform_mesh(side - 1)
    return Mesh2D(axis, axis)


def _mesh_size(mesh):
    if isinstance(mesh, Mesh2D):
        return int(np.prod(mesh.shape))
    return mesh.nodes.size


class _OperatorRegressor(BaseEstimator, RegressorMixin):
    """Shared fit/predict plumbing; subclasses supply the model config."""

    def fit(self, X, y, eps=None, mesh=None):
        X = _check_matrix("X", X)
        y = _check_matrix("y", y)
        if X.shape != y.shape:
            raise ShapeError(f"X and y must match node-for-node: {X.shape} vs {y.shape}")
        count, n_features = X.shape
        eps_arr, eps_mode = _check_eps(self.eps if eps is None else eps, count)
        if mesh is None:
            mesh = _default_mesh(self.ndim, n_features)
        if not isinstance(mesh, Mesh2D if self.ndim == 2 else Mesh1D):
            raise ShapeError(f"mesh does not match ndim={self.ndim}")
        if _mesh_size(mesh) != n_features:
            raise ShapeError(f"mesh has {_mesh_size(mesh)} nodes but X has "
                             f"{n_features} features")

        node_shape = mesh.shape if self.ndim == 2 else (n_features,)
        inputs = stack_channels(X, mesh, eps_arr if self.eps_as_input else None)
        targets = y.reshape((count,) + node_shape + (1,))
        dataset = Dataset("custom", inputs, targets, eps_arr, eps_mode,
                          mesh_override=mesh)
        cfg = self._model_config()
        tc = TrainConfig(lr=self.lr, epochs=self.epochs,
                         batch_size=self.batch_size, seed=self.seed)
        self.params_, self.loss_history_ = train_loop(cfg, dataset, tc)
        self.config_ = cfg
        self.mesh_ = mesh
        self.n_features_in_ = n_features
        return self

    def predict(self, X, eps=None):
        check_is_fitted(self, "params_")
        X = _check_matrix("X", X)
        if X.shape[1] != self.n_features_in_:
            raise ShapeError(f"X has {X.shape[1]} features; fitted on "
                             f"{self.n_features_in_}")
        eps_arr, _ = _check_eps(self.eps if eps is None else eps, X.shape[0])
        inputs = stack_channels(X, self.mesh_,
                                eps_arr if self.eps_as_input else None)
        out = predict(self.params_, self.config_, inputs, eps_arr, self.mesh_,
                      batch_size=self.batch_size)
        return out.reshape(X.shape[0], -1)


class FNORegressor(_OperatorRegressor):
    """Spectral operator network trained on value pairs at fixed nodes."""

    def __init__(self, width=64, modes=16, depth=4, ndim=1, eps=1e-3,
                 eps_as_input=False, lr=1e-3, epochs=500, batch_size=50, seed=0):
        self.width = width
        self.modes = modes
        self.depth = depth
        self.ndim = ndim
        self.eps = eps
        self.eps_as_input = eps_as_input
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed

    def _model_config(self):
        in_channels = (1 + self.ndim) + (1 if self.eps_as_input else 0)
        return FnoConfig(width=self.width, modes=self.modes, depth=self.depth,
                         in_channels=in_channels, ndim=self.ndim)


class ComFNORegressor(_OperatorRegressor):
    """Spectral network plus boundary-layer correction blocks.

    Each entry of layer_locations anchors one multiplicative correction
    block that additionally sees the input stack resampled on coordinates
    compressed toward that anchor at scale eps. For 2D, layer_axes picks
    the compressed axis per block (0 = x, 1 = y).
    """

    def __init__(self, width=64, modes=16, depth=4, ndim=1, eps=1e-3,
                 eps_as_input=False, layer_locations=(1.0,), layer_axes=None,
                 extra_width=32, extra_modes=8, extra_depth=2,
                 dense_hidden=(64,), lr=1e-3, epochs=500, batch_size=50, seed=0):
        self.width = width
        self.modes = modes
        self.depth = depth
        self.ndim = ndim
        self.eps = eps
        self.eps_as_input = eps_as_input
        self.layer_locations = layer_locations
        self.layer_axes = layer_axes
        self.extra_width = extra_width
        self.extra_modes = extra_modes
        self.extra_depth = extra_depth
        self.dense_hidden = dense_hidden
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed

    def _model_config(self):
        in_channels = (1 + self.ndim) + (1 if self.eps_as_input else 0)
        base = FnoConfig(width=self.width, modes=self.modes, depth=self.depth,
                         in_channels=in_channels, ndim=self.ndim)
        axes = self.layer_axes
        if axes is None:
            axes = (0,) * len(self.layer_locations)
        if len(axes) != len(self.layer_locations):
            raise ShapeError("layer_axes must pair with layer_locations")
        blocks = tuple(LayerBlockSpec(loc, axis=ax)
                       for loc, ax in zip(self.layer_locations, axes))
        return ComFnoConfig(base=base, blocks=blocks,
                            extra_width=self.extra_width,
                            extra_modes=self.extra_modes,
                            extra_depth=min(self.extra_depth, self.depth),
                            dense_hidden=tuple(self.dense_hidden))
