"""scikit-learn style wrappers.

Samples are segment indices (``X`` of shape ``(n,)`` or ``(n, 1)``) on a
fixed embedding given by ``coords``; repeated indices are separate noisy
measurements.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import fusion
from .gp import GpModel, greedy_select, posterior_full, posterior_sod
from .network import Embedding, KernelHyper, RoadNetwork, mds_embed, shortest_path_distances
from .validation import (
    check_coords,
    check_groups,
    check_segments,
    check_square_distances,
    check_targets,
)


class GeodesicMDS(TransformerMixin, BaseEstimator):
    """Classical MDS of a geodesic distance matrix or a road network.

    Parameters
    ----------
    dim : int, optional
        Embedding dimension; by default the smallest one reaching ``mass`` of
        the positive eigenvalue mass.
    mass : float
    """

    def __init__(self, dim=None, mass=0.95):
        self.dim = dim
        self.mass = mass

    def fit(self, X, y=None):
        d = shortest_path_distances(X) if isinstance(X, RoadNetwork) else check_square_distances(X)
        emb = mds_embed(d, self.dim, self.mass)
        self.embedding_ = emb
        self.stress_ = emb.stress
        self.n_components_ = emb.dim
        return self

    def transform(self, X=None):
        """Coordinates of the fitted segments; ``X`` is ignored."""
        check_is_fitted(self, "embedding_")
        return self.embedding_.coords.copy()

    def fit_transform(self, X, y=None):
        return self.fit(X).transform(X)


class _GpBase(RegressorMixin, BaseEstimator):
    def __init__(self, coords=None, signal_variance=1.0, length_scale=1.0, noise_variance=1.0,
                 prior_mean=None):
        self.coords = coords
        self.signal_variance = signal_variance
        self.length_scale = length_scale
        self.noise_variance = noise_variance
        self.prior_mean = prior_mean

    def _model(self, y):
        coords = check_coords(self.coords)
        hyper = KernelHyper(self.signal_variance, self.length_scale, self.noise_variance)
        mean = float(np.mean(y)) if self.prior_mean is None and y.size else (self.prior_mean or 0.0)
        return GpModel(Embedding(coords, 0.0), hyper, prior_mean=mean)

    def _prepare(self, X, y):
        if self.coords is None:
            raise ValueError("coords (segment embedding) is required")
        X = check_segments(X, check_coords(self.coords).shape[0])
        y = check_targets(y, X.size)
        return X, y, self._model(y)

    def predict(self, X, return_std=False):
        check_is_fitted(self, "model_")
        X = check_segments(X, self.model_.n_segments)
        p = self._posterior(X)
        if return_std:
            return p.mean, np.sqrt(np.clip(p.variance, 0.0, None))
        return p.mean


class FullGP(_GpBase):
    """Exact GP regression on all training measurements."""

    def fit(self, X, y):
        X, y, self.model_ = self._prepare(X, y)
        self.X_train_, self.y_train_ = X, y
        return self

    def _posterior(self, X):
        return posterior_full(self.model_, self.X_train_, self.y_train_, X, full_cov=False,
                              allow_overlap=True)


class SubsetOfDataGP(_GpBase):
    """Exact GP on a greedily chosen maximum-variance subset of the training data."""

    def __init__(self, coords=None, signal_variance=1.0, length_scale=1.0, noise_variance=1.0,
                 prior_mean=None, subset_size=64):
        super().__init__(coords, signal_variance, length_scale, noise_variance, prior_mean)
        self.subset_size = subset_size

    def fit(self, X, y):
        X, y, self.model_ = self._prepare(X, y)
        D, z = fusion.collapse_observations(X, y)
        sel = greedy_select(self.model_, D, min(self.subset_size, D.size))
        pos = {s: i for i, s in enumerate(D.tolist())}
        self.subset_ = np.array(sel, dtype=int)
        self.z_subset_ = z[[pos[s] for s in sel]]
        return self

    def _posterior(self, X):
        return posterior_sod(self.model_, self.subset_, self.z_subset_, X, full_cov=False,
                             allow_overlap=True)


class _SupportBase(_GpBase):
    def __init__(self, coords=None, signal_variance=1.0, length_scale=1.0, noise_variance=1.0,
                 prior_mean=None, support=None, support_size=16):
        super().__init__(coords, signal_variance, length_scale, noise_variance, prior_mean)
        self.support = support
        self.support_size = support_size

    def _support(self):
        if self.support is not None:
            return check_segments(self.support, self.model_.n_segments, "support")
        n = self.model_.n_segments
        return np.array(greedy_select(self.model_, np.arange(n), min(self.support_size, n)))


class PITCRegressor(_SupportBase):
    """Centralized partially independent conditional approximation.

    ``groups`` in ``fit`` labels the conditionally independent blocks
    (one block when omitted).
    """

    def fit(self, X, y, groups=None):
        X, y, self.model_ = self._prepare(X, y)
        groups = check_groups(groups, X.size)
        self.support_ = self._support()
        self.blocks_ = []
        self.z_blocks_ = []
        for g in np.unique(groups):
            D, z = fusion.collapse_observations(X[groups == g], y[groups == g])
            self.blocks_.append(D)
            self.z_blocks_.append(z)
        return self

    def _posterior(self, X):
        z = np.concatenate(self.z_blocks_) if self.z_blocks_ else np.zeros(0)
        return fusion.pitc_oracle(self.model_, self.support_, self.blocks_, z, X, full_cov=False)


class DecentralizedGP(_SupportBase):
    """Prediction from summed per-group local summaries on a common support set.

    Each group plays the role of one sensor; ``local_summaries_`` holds what
    the sensors would broadcast.
    """

    def fit(self, X, y, groups=None):
        X, y, self.model_ = self._prepare(X, y)
        groups = check_groups(groups, X.size)
        self.support_ = self._support()
        self.support_set_ = fusion.SupportSet.from_model(self.model_, self.support_)
        self.local_summaries_ = [
            fusion.local_summary(self.model_, self.support_set_, X[groups == g], y[groups == g], k)
            for k, g in enumerate(np.unique(groups))
        ]
        self.global_summary_ = fusion.global_summary(self.support_set_, self.local_summaries_)
        return self

    def _posterior(self, X):
        return fusion.predict_decentralized(self.model_, self.support_set_, self.global_summary_, X,
                                            full_cov=False)
