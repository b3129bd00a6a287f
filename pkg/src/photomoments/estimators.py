"""Transformer between photon statistics and normalized factorial moments."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import check_int, check_statistics_rows
from .fock import PhotonStatistics
from .moments import NormalizedMoments, normalized_moments, reconstruct_all


class FactorialMomentTransformer(TransformerMixin, BaseEstimator):
    """Map photon statistics to ``[mean, g2, ..., g_m_max]`` and back.

    ``transform`` takes one probability vector per row.  ``inverse_transform``
    reconstructs ``rho(0..m_max)`` from moment rows with all moments above
    ``m_max`` taken as zero, so rows may come back unphysical.

    Parameters
    ----------
    m_max : int, default=4
        Highest moment order kept.
    """

    def __init__(self, m_max=4):
        self.m_max = m_max

    def fit(self, X, y=None):
        check_int(self.m_max, "m_max", minimum=2)
        X = check_statistics_rows(X, estimator=self)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self)
        X = check_statistics_rows(X, estimator=self)
        out = np.empty((X.shape[0], self.m_max))
        for i, row in enumerate(X):
            g = normalized_moments(PhotonStatistics(row), self.m_max)
            out[i, 0] = g.mean
            out[i, 1:] = g.g
        return out

    def inverse_transform(self, X):
        check_is_fitted(self)
        X = check_array(X, estimator=self)
        if X.shape[1] != self.m_max:
            raise ValueError(f"expected {self.m_max} columns [mean, g2..g{self.m_max}], got {X.shape[1]}")
        return np.vstack([
            reconstruct_all(NormalizedMoments(row[1:], row[0])).probs for row in X
        ])

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self)
        return np.array(["mean"] + [f"g{m}" for m in range(2, self.m_max + 1)], dtype=object)
