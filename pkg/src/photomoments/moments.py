"""Factorial moments, the moment generating function and moment-based reconstruction.

Photon statistics are recovered from normalized moments by the alternating
finite-difference series

    rho(n) = sum_{m>=n} (-1)^(m+n) / (n! (m-n)!) * g(m) * mean^m,

with ``g(0) = g(1) = 1``.  Moments above the measured order count as zero, so
a truncated set of moments yields a truncated (and possibly unphysical)
reconstruction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._validation import UndefinedEstimateError, check_int, check_real
from .fock import PhotonStatistics, falling_factorial

__all__ = [
    "RawMoments",
    "NormalizedMoments",
    "Reconstruction",
    "ConvergenceDiagnostic",
    "factorial_moments",
    "normalize_moments",
    "normalized_moments",
    "mgf_from_statistics",
    "mgf_from_moments",
    "reconstruct_statistics",
    "reconstruct_all",
    "reconstruction_uncertainty",
    "convergence_check",
]


@dataclass(frozen=True, eq=False)
class RawMoments:
    """Unnormalized factorial moments ``<n^(m)>`` for ``m = 1..m_max``."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size == 0:
            raise ValueError("need at least the first moment")
        if not np.all(np.isfinite(values)):
            raise ValueError("factorial moments must be finite")
        if values[0] < 0:
            raise ValueError("mean photon number must be non-negative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def m_max(self) -> int:
        return self.values.size

    @property
    def mean(self) -> float:
        return float(self.values[0])

    def order(self, m: int) -> float:
        """``<n^(m)>`` with ``<n^(0)> = 1`` and zero above ``m_max``."""
        if m == 0:
            return 1.0
        if m > self.m_max:
            return 0.0
        return float(self.values[m - 1])


@dataclass(frozen=True, eq=False)
class NormalizedMoments:
    """Normalized moments ``g[m-2] = g^(m)`` for ``m = 2..m_max`` plus the mean.

    ``errors`` holds optional standard errors of the ``g`` entries and
    ``mean_error`` an optional standard error of the mean.
    """

    g: np.ndarray
    mean: float
    errors: np.ndarray | None = None
    mean_error: float | None = None

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float).ravel()
        if not np.all(np.isfinite(g)):
            raise ValueError("normalized moments must be finite")
        if np.any(g < 0):
            raise ValueError("normalized moments must be non-negative")
        mean = check_real(self.mean, "mean", low=0.0, low_open=True)
        g.setflags(write=False)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "mean", mean)
        if self.errors is not None:
            err = np.asarray(self.errors, dtype=float).ravel()
            if err.shape != g.shape or np.any(err < 0):
                raise ValueError("errors must be non-negative and match g in length")
            err.setflags(write=False)
            object.__setattr__(self, "errors", err)
        if self.mean_error is not None:
            object.__setattr__(self, "mean_error", check_real(self.mean_error, "mean_error", low=0.0))

    @property
    def m_max(self) -> int:
        return self.g.size + 1

    def order(self, m: int) -> float:
        """``g^(m)`` with ``g^(0) = g^(1) = 1`` and zero above ``m_max``."""
        if m <= 1:
            return 1.0
        if m > self.m_max:
            return 0.0
        return float(self.g[m - 2])

    def error(self, m: int) -> float:
        if self.errors is None or m <= 1 or m > self.m_max:
            return 0.0
        return float(self.errors[m - 2])

    def truncate(self, m_max: int) -> "NormalizedMoments":
        m_max = check_int(m_max, "m_max", minimum=1)
        k = max(0, min(m_max, self.m_max) - 1)
        errors = None if self.errors is None else self.errors[:k]
        return NormalizedMoments(self.g[:k], self.mean, errors, self.mean_error)

    def raw(self) -> RawMoments:
        return RawMoments([self.order(m) * self.mean ** m for m in range(1, self.m_max + 1)])


def factorial_moments(stats: PhotonStatistics, m_max: int) -> RawMoments:
    m_max = check_int(m_max, "m_max", minimum=1)
    n = np.arange(stats.probs.size)
    return RawMoments([math.fsum(falling_factorial(n, m) * stats.probs) for m in range(1, m_max + 1)])


def normalize_moments(raw: RawMoments) -> NormalizedMoments:
    mean = raw.mean
    if mean <= 0.0:
        raise UndefinedEstimateError("normalized moments are undefined at zero mean photon number")
    if mean ** raw.m_max == 0.0:
        raise UndefinedEstimateError("mean photon number too small to normalize moments")
    g = [raw.order(m) / mean ** m for m in range(2, raw.m_max + 1)]
    return NormalizedMoments(g, mean)


def normalized_moments(stats: PhotonStatistics, m_max: int) -> NormalizedMoments:
    """Shortcut for ``normalize_moments(factorial_moments(stats, m_max))``."""
    return normalize_moments(factorial_moments(stats, m_max))


def mgf_from_statistics(stats: PhotonStatistics, mu: float) -> float:
    """``M(mu) = sum_n rho(n) (1 - mu)^n`` on ``0 <= mu <= 2``."""
    mu = check_real(mu, "mu", low=0.0, high=2.0)
    n = np.arange(stats.probs.size)
    return math.fsum(stats.probs * (1.0 - mu) ** n)


def mgf_from_moments(raw: RawMoments, mu: float, m_max: int | None = None) -> float:
    """Partial sum of the factorial-moment expansion of ``M(mu)`` up to ``m_max``."""
    mu = check_real(mu, "mu", low=0.0, high=2.0)
    m_max = raw.m_max if m_max is None else check_int(m_max, "m_max", minimum=0)
    return math.fsum(_mgf_terms(raw, mu, m_max))


def _mgf_terms(raw, mu, m_max):
    return [(-1) ** m * raw.order(m) * mu ** m / math.factorial(m) for m in range(m_max + 1)]


def _reconstruction_weights(n, m_max, mean):
    """Coefficients ``c[m]`` with ``rho(n) = sum_m c[m] g^(m)``, ``m = 0..m_max``."""
    c = np.zeros(m_max + 1)
    for m in range(n, m_max + 1):
        c[m] = (-1) ** (m + n) * mean ** m / (math.factorial(n) * math.factorial(m - n))
    return c


def reconstruct_statistics(g: NormalizedMoments, n: int) -> float:
    """Photon-number probability ``rho(n)`` from truncated normalized moments.

    The result is returned as computed even when it lies outside ``[0, 1]``.
    """
    n = check_int(n, "n", minimum=0)
    if n > g.m_max:
        return 0.0
    c = _reconstruction_weights(n, g.m_max, g.mean)
    return math.fsum(c[m] * g.order(m) for m in range(n, g.m_max + 1))


@dataclass(frozen=True, eq=False)
class Reconstruction:
    """Reconstructed ``rho(0..m_max)`` with the indices breaking ``0 <= rho <= 1``."""

    probs: np.ndarray
    violations: tuple[int, ...]

    @property
    def physical(self) -> bool:
        return not self.violations

    def to_statistics(self) -> PhotonStatistics:
        if not self.physical:
            raise ValueError(f"reconstruction is unphysical at n={list(self.violations)}")
        return PhotonStatistics(self.probs)


def reconstruct_all(g: NormalizedMoments, tol: float = 1e-12) -> Reconstruction:
    probs = np.array([reconstruct_statistics(g, n) for n in range(g.m_max + 1)])
    bad = tuple(int(n) for n in np.flatnonzero((probs < -tol) | (probs > 1 + tol)))
    return Reconstruction(probs, bad)


def reconstruction_uncertainty(g: NormalizedMoments) -> np.ndarray:
    """First-order standard errors of ``rho(0..m_max)``.

    Errors of the normalized moments and of the mean are treated as
    independent.
    """
    mean = g.mean
    sigma_mean = g.mean_error or 0.0
    out = np.zeros(g.m_max + 1)
    for n in range(g.m_max + 1):
        c = _reconstruction_weights(n, g.m_max, mean)
        var = sum((c[m] * g.error(m)) ** 2 for m in range(2, g.m_max + 1))
        # d rho(n) / d mean
        dmean = math.fsum(c[m] * m / mean * g.order(m) for m in range(max(n, 1), g.m_max + 1))
        out[n] = math.sqrt(var + (dmean * sigma_mean) ** 2)
    return out


@dataclass(frozen=True)
class ConvergenceDiagnostic:
    terms: tuple[float, ...]
    ratio: float
    converged: bool


def convergence_check(raw: RawMoments, mu: float = 1.0, tol: float = 1e-4) -> ConvergenceDiagnostic:
    """Heuristic convergence test of the moment expansion of ``M(mu)``.

    Converged means the last three term magnitudes are non-increasing and the
    last one is below ``tol``.  ``ratio`` is the last-to-previous magnitude.
    """
    if raw.m_max < 3:
        raise ValueError("convergence check needs at least three moments")
    mu = check_real(mu, "mu", low=0.0, high=2.0)
    terms = tuple(abs(t) for t in _mgf_terms(raw, mu, raw.m_max))
    a, b, c = terms[-3:]
    ratio = c / b if b > 0 else (0.0 if c == 0 else math.inf)
    converged = a >= b >= c and c < tol
    return ConvergenceDiagnostic(terms, ratio, converged)
