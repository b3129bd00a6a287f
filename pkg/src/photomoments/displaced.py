"""Displaced single photons with imperfect mode overlap.

A fraction ``overlap`` of the reference field interferes with the signal and
displaces it by ``sqrt(overlap * b)``; the rest adds an independent Poisson
background of mean ``(1 - overlap) * b``.  Here ``b = |alpha|^2`` is the
displacement strength.  The detection efficiency drops out of every
normalized moment and is therefore not a model parameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ._validation import UndefinedEstimateError, check_int, check_real
from .fock import PhotonStatistics, _poisson, displace_statistics
from .moments import NormalizedMoments, factorial_moments

__all__ = [
    "DisplacedStateModel",
    "g_ideal",
    "mean_ideal",
    "displaced_part_moments",
    "background_moments",
    "g_eff",
    "mean_eff",
    "exact_statistics",
    "predict_moments",
    "g_eff_grid",
]


def g_ideal(m: int, b: float) -> float:
    """Normalized moment of ``D(alpha)|1>`` with ``b = |alpha|^2``."""
    m = check_int(m, "m", minimum=2)
    b = check_real(b, "b", low=0.0)
    return b ** (m - 1) * (m * m + b) / (1.0 + b) ** m


def mean_ideal(b: float) -> float:
    return 1.0 + check_real(b, "b", low=0.0)


@dataclass(frozen=True, eq=False)
class DisplacedStateModel:
    source: PhotonStatistics
    overlap: float
    disp_sq: float

    def __post_init__(self):
        if not isinstance(self.source, PhotonStatistics):
            object.__setattr__(self, "source", PhotonStatistics(self.source))
        object.__setattr__(self, "overlap", check_real(self.overlap, "overlap", low=0.0, high=1.0))
        object.__setattr__(self, "disp_sq", check_real(self.disp_sq, "disp_sq", low=0.0))

    def with_disp_sq(self, b: float) -> "DisplacedStateModel":
        return DisplacedStateModel(self.source, self.overlap, b)

    def at_mean(self, mean: float) -> "DisplacedStateModel":
        """Same source and overlap, displaced so that the total mean equals ``mean``."""
        b = mean - self.source_mean
        if b < -1e-12:
            raise ValueError(f"mean {mean} below the undisplaced mean {self.source_mean:.6g}")
        return self.with_disp_sq(max(b, 0.0))

    @cached_property
    def source_mean(self) -> float:
        return self.source.mean

    def source_moments(self, m_max: int) -> list[float]:
        """``<n^(j)>`` of the undisplaced source for ``j = 0..m_max``."""
        return _source_moments(self.source, m_max)


def _source_moments(source, m_max):
    if m_max == 0:
        return [1.0]
    return [1.0] + list(factorial_moments(source, m_max).values)


def displaced_part_moments(model: DisplacedStateModel, m: int, method: str = "closed") -> float:
    """Factorial moment ``<n^(m)>`` of the source displaced by ``sqrt(overlap * b)``.

    ``method="closed"`` uses the phase-averaged identity
    ``<n^(m)>_D = sum_j C(m, j)^2 (overlap b)^(m-j) <n^(j)>_source``;
    ``method="fock"`` displaces the photon statistics numerically and sums.
    """
    m = check_int(m, "m", minimum=0)
    if m == 0:
        return 1.0
    x = model.overlap * model.disp_sq
    if method == "closed":
        src = model.source_moments(m)
        return math.fsum(math.comb(m, j) ** 2 * x ** (m - j) * src[j] for j in range(m + 1))
    if method == "fock":
        displaced = displace_statistics(model.source, math.sqrt(x))
        return factorial_moments(displaced, m).order(m)
    raise ValueError(f"unknown method {method!r}")


def background_moments(model: DisplacedStateModel, m: int) -> float:
    m = check_int(m, "m", minimum=0)
    return ((1.0 - model.overlap) * model.disp_sq) ** m


def _total_moments(model, m_max, method="closed"):
    """Factorial moments ``<n_eff^(k)>`` for ``k = 0..m_max`` (binomial convolution)."""
    x = model.overlap * model.disp_sq
    bg = (1.0 - model.overlap) * model.disp_sq
    if method == "closed":
        src = model.source_moments(m_max)
        disp = [math.fsum(math.comb(k, j) ** 2 * x ** (k - j) * src[j] for j in range(k + 1))
                for k in range(m_max + 1)]
    else:
        disp = [displaced_part_moments(model, k, method) for k in range(m_max + 1)]
    return [
        math.fsum(math.comb(k, j) * disp[j] * bg ** (k - j) for j in range(k + 1))
        for k in range(m_max + 1)
    ]


def g_eff(model: DisplacedStateModel, m: int, method: str = "closed") -> float:
    """Normalized moment ``g^(m)`` of the displaced state with imperfect overlap."""
    m = check_int(m, "m", minimum=2)
    moments = _total_moments(model, m, method)
    mean = moments[1]
    if mean <= 0.0:
        raise UndefinedEstimateError("model has zero mean photon number")
    return moments[m] / mean ** m


def mean_eff(model: DisplacedStateModel) -> float:
    return model.source_mean + model.disp_sq


def exact_statistics(model: DisplacedStateModel, n_max: int | None = None) -> PhotonStatistics:
    """Photon statistics of the model: displaced source convolved with the Poisson background."""
    displaced = displace_statistics(model.source, math.sqrt(model.overlap * model.disp_sq), n_max)
    bg = (1.0 - model.overlap) * model.disp_sq
    size = displaced.probs.size
    probs = np.convolve(displaced.probs, _poisson(bg, size - 1))[:size]
    probs = np.clip(probs, 0.0, 1.0)
    deficit = max(displaced.deficit, 1.0 - math.fsum(probs))
    return PhotonStatistics(probs, min(deficit, 1.0))


def predict_moments(model: DisplacedStateModel, m_max: int, method: str = "closed") -> NormalizedMoments:
    m_max = check_int(m_max, "m_max", minimum=2)
    moments = _total_moments(model, m_max, method)
    mean = moments[1]
    if mean <= 0.0:
        raise UndefinedEstimateError("model has zero mean photon number")
    return NormalizedMoments([moments[m] / mean ** m for m in range(2, m_max + 1)], mean)


def g_eff_grid(source: PhotonStatistics, overlap: float, disp_sq, m_max: int) -> np.ndarray:
    """Normalized moments ``g^(2..m_max)`` for many displacement strengths at once.

    Returns an array of shape ``(len(disp_sq), m_max - 1)``.
    """
    m_max = check_int(m_max, "m_max", minimum=2)
    b = np.atleast_1d(np.asarray(disp_sq, dtype=float))
    if np.any(b < 0):
        raise ValueError("disp_sq must be non-negative")
    src = _source_moments(source, m_max)
    x = overlap * b
    bg = (1.0 - overlap) * b
    disp = [sum(math.comb(k, j) ** 2 * x ** (k - j) * src[j] for j in range(k + 1))
            for k in range(m_max + 1)]
    total = [sum(math.comb(k, j) * disp[j] * bg ** (k - j) for j in range(k + 1))
             for k in range(m_max + 1)]
    mean = total[1]
    if np.any(mean <= 0):
        raise UndefinedEstimateError("model has zero mean photon number")
    return np.column_stack([total[k] / mean ** k for k in range(2, m_max + 1)])
