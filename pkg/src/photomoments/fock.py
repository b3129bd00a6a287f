"""Truncated Fock-space numerics.

Photon statistics are stored as finite probability vectors over photon number
``n = 0..n_max``.  Mass beyond the cutoff is never silently renormalized away;
it is carried along as ``deficit`` so downstream reconstructions can judge how
much the tail matters.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln
from scipy.stats import binom

from ._validation import (
    TruncationError,
    TruncationWarning,
    check_int,
    check_probability_vector,
    check_real,
)

DEFAULT_N_MAX = 40
MAX_DISPLACEMENT_SQ = 50.0
TRUNCATION_TOL = 1e-6

__all__ = [
    "DEFAULT_N_MAX",
    "PhotonStatistics",
    "SourceSpec",
    "make_fock",
    "make_coherent",
    "make_heralded_pdc",
    "displacement_element",
    "displacement_probabilities",
    "displace_statistics",
    "binomial_thinning",
    "falling_factorial",
]


@dataclass(frozen=True, eq=False)
class PhotonStatistics:
    """Photon-number distribution ``probs[n]`` truncated at ``n_max``.

    ``deficit`` is the probability mass known to lie above the cutoff.  When
    omitted it is inferred as ``1 - sum(probs)``.
    """

    probs: np.ndarray
    deficit: float = field(default=None)

    def __post_init__(self):
        probs = check_probability_vector(self.probs)
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        total = math.fsum(probs)
        deficit = max(0.0, 1.0 - total) if self.deficit is None else float(self.deficit)
        if not 0.0 <= deficit <= 1.0:
            raise ValueError(f"deficit must lie in [0, 1], got {deficit}")
        if total < 1.0 - deficit - 1e-9:
            raise ValueError(
                f"probabilities sum to {total:.12g}; unexplained by deficit {deficit:.3g}"
            )
        object.__setattr__(self, "deficit", deficit)

    @property
    def n_max(self) -> int:
        return self.probs.size - 1

    @property
    def mean(self) -> float:
        return math.fsum(np.arange(self.probs.size) * self.probs)

    @property
    def truncated(self) -> bool:
        return self.deficit > TRUNCATION_TOL

    def __len__(self):
        return self.probs.size

    def __getitem__(self, n):
        return self.probs[n]

    def __array__(self, dtype=None, copy=None):
        return np.array(self.probs, dtype=dtype)

    def __repr__(self):
        head = ", ".join(f"{p:.4g}" for p in self.probs[:6])
        more = ", ..." if self.probs.size > 6 else ""
        return f"PhotonStatistics([{head}{more}], n_max={self.n_max}, deficit={self.deficit:.2g})"

    def padded(self, n_max: int) -> np.ndarray:
        """Probabilities as an array of length ``n_max + 1`` (zero padded or cut)."""
        out = np.zeros(n_max + 1)
        k = min(n_max, self.n_max) + 1
        out[:k] = self.probs[:k]
        return out


def falling_factorial(n, m: int):
    """``n (n-1) ... (n-m+1)`` elementwise; equals 1 for ``m = 0``."""
    n = np.asarray(n, dtype=float)
    out = np.ones_like(n)
    for k in range(m):
        out = out * (n - k)
    return out


def make_fock(n: int, n_max: int = DEFAULT_N_MAX) -> PhotonStatistics:
    n = check_int(n, "n", minimum=0)
    n_max = check_int(n_max, "n_max", minimum=0)
    if n > n_max:
        raise TruncationError(f"Fock state |{n}> does not fit below n_max={n_max}")
    probs = np.zeros(n_max + 1)
    probs[n] = 1.0
    return PhotonStatistics(probs, 0.0)


def make_coherent(b: float, n_max: int = DEFAULT_N_MAX) -> PhotonStatistics:
    """Poisson statistics with mean photon number ``b``."""
    b = check_real(b, "b", low=0.0)
    n_max = check_int(n_max, "n_max", minimum=0)
    probs = _poisson(b, n_max)
    return PhotonStatistics(probs, max(0.0, 1.0 - math.fsum(probs)))


def _poisson(b, n_max):
    n = np.arange(n_max + 1)
    if b == 0.0:
        return (n == 0).astype(float)
    return np.exp(n * math.log(b) - b - gammaln(n + 1))


def make_heralded_pdc(squeeze: float, herald_efficiency: float,
                      n_max: int = DEFAULT_N_MAX) -> PhotonStatistics:
    """Signal statistics of a two-mode squeezed source conditioned on a herald click.

    The herald is an on/off detector of efficiency ``herald_efficiency`` on the
    idler, so ``P(n) ~ lambda^(2n) [1 - (1 - eta_h)^n]`` with ``P(0) = 0``.
    """
    lam = check_real(squeeze, "squeeze", low=0.0, high=1.0, high_open=True)
    eta_h = check_real(herald_efficiency, "herald_efficiency", low=0.0, high=1.0, low_open=True)
    n_max = check_int(n_max, "n_max", minimum=1)
    if lam == 0.0:
        return make_fock(1, n_max)
    lam2 = lam * lam
    n = np.arange(n_max + 1)
    if eta_h == 1.0:
        click = (n > 0).astype(float)
    else:
        click = -np.expm1(n * math.log1p(-eta_h))
    # normalization of the untruncated distribution in closed form
    norm = lam2 * eta_h / (1.0 - lam2 + lam2 * eta_h)
    probs = (1.0 - lam2) * np.exp(2 * n * math.log(lam)) * click / norm
    probs[0] = 0.0
    return PhotonStatistics(probs, max(0.0, 1.0 - math.fsum(probs)))


def binomial_thinning(probs, eta: float) -> np.ndarray:
    """Photon statistics after each photon independently survives with probability ``eta``."""
    probs = np.asarray(probs, dtype=float)
    n = np.arange(probs.size)
    if eta == 1.0:
        return probs.copy()
    kernel = binom.pmf(n[:, None], n[None, :], eta)
    return kernel @ probs


def _laguerre_table(x: float, k_max: int, a_max: int) -> np.ndarray:
    """``T[k, a] = L_k^{(a)}(x)`` by the three-term recurrence in ``k``."""
    a = np.arange(a_max + 1, dtype=float)
    table = np.empty((k_max + 1, a_max + 1))
    table[0] = 1.0
    if k_max >= 1:
        table[1] = 1.0 + a - x
    for k in range(1, k_max):
        table[k + 1] = ((2 * k + 1 + a - x) * table[k] - (k + a) * table[k - 1]) / (k + 1)
    return table


def _check_displacement(b):
    if b > MAX_DISPLACEMENT_SQ:
        raise ValueError(f"|beta|^2 = {b:.4g} exceeds the supported maximum {MAX_DISPLACEMENT_SQ}")


def displacement_element(m: int, n: int, beta: complex) -> complex:
    """Matrix element ``<m| D(beta) |n>`` of the displacement operator."""
    m = check_int(m, "m", minimum=0)
    n = check_int(n, "n", minimum=0)
    beta = complex(beta)
    b = abs(beta) ** 2
    _check_displacement(b)
    if b == 0.0:
        return complex(m == n)
    lo, hi = min(m, n), max(m, n)
    lag = _laguerre_table(b, lo, hi - lo)[lo, hi - lo]
    log_pref = 0.5 * (gammaln(lo + 1) - gammaln(hi + 1)) - 0.5 * b
    phase_amp = beta if m >= n else -beta.conjugate()
    return complex(math.exp(log_pref) * lag) * phase_amp ** (hi - lo)


def displacement_probabilities(b: float, n_out: int, n_in: int) -> np.ndarray:
    """Transition matrix ``P[m, n] = |<m| D(beta) |n>|^2`` for ``|beta|^2 = b``.

    Shape is ``(n_out + 1, n_in + 1)``; columns lose mass above ``n_out``.
    """
    b = check_real(b, "b", low=0.0)
    _check_displacement(b)
    if b == 0.0:
        return np.eye(n_out + 1, n_in + 1)
    size = max(n_out, n_in)
    table = _laguerre_table(b, size, size)
    m = np.arange(n_out + 1)[:, None]
    n = np.arange(n_in + 1)[None, :]
    lo = np.minimum(m, n)
    d = np.abs(m - n)
    lag = table[lo, d]
    log_pref = gammaln(lo + 1) - gammaln(lo + d + 1) + d * math.log(b) - b
    return np.exp(log_pref) * lag * lag


def displace_statistics(stats: PhotonStatistics, beta_mag: float,
                        n_max_out: int | None = None) -> PhotonStatistics:
    """Phase-averaged displacement of Fock-diagonal statistics by ``|beta| = beta_mag``."""
    beta_mag = check_real(beta_mag, "beta_mag", low=0.0)
    if n_max_out is None:
        n_max_out = max(DEFAULT_N_MAX, stats.n_max)
    n_max_out = check_int(n_max_out, "n_max_out", minimum=0)
    if beta_mag == 0.0 and n_max_out >= stats.n_max:
        return PhotonStatistics(stats.padded(n_max_out), stats.deficit)
    kernel = displacement_probabilities(beta_mag ** 2, n_max_out, stats.n_max)
    out = np.clip(kernel @ stats.probs, 0.0, 1.0)
    deficit = min(1.0, max(stats.deficit, 1.0 - math.fsum(out)))
    if deficit > TRUNCATION_TOL:
        warnings.warn(
            f"displaced statistics lose {deficit:.2e} probability above n_max={n_max_out}",
            TruncationWarning,
            stacklevel=2,
        )
    return PhotonStatistics(out, deficit)


_VARIANTS = ("fock", "coherent", "heralded_pdc")


@dataclass(frozen=True)
class SourceSpec:
    """Serializable recipe for an undisplaced source.

    ``prep_efficiency`` applies binomial loss after heralding; it changes the
    mean photon number of a heralded source but none of its normalized moments.
    """

    variant: str
    n: int | None = None
    mean: float | None = None
    squeeze: float | None = None
    herald_efficiency: float = 1.0
    prep_efficiency: float = 1.0
    n_max: int = DEFAULT_N_MAX

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown source variant {self.variant!r}; expected one of {_VARIANTS}")
        check_int(self.n_max, "n_max", minimum=0)
        if self.variant == "fock":
            if self.n is None:
                raise ValueError("fock source requires 'n'")
            check_int(self.n, "n", minimum=0, maximum=self.n_max)
        elif self.variant == "coherent":
            if self.mean is None:
                raise ValueError("coherent source requires 'mean'")
            check_real(self.mean, "mean", low=0.0)
        else:
            if self.squeeze is None:
                raise ValueError("heralded_pdc source requires 'squeeze'")
            check_real(self.squeeze, "squeeze", low=0.0, high=1.0, high_open=True)
            check_real(self.herald_efficiency, "herald_efficiency", low=0.0, high=1.0, low_open=True)
        check_real(self.prep_efficiency, "prep_efficiency", low=0.0, high=1.0)

    def build(self) -> PhotonStatistics:
        if self.variant == "fock":
            stats = make_fock(self.n, self.n_max)
        elif self.variant == "coherent":
            stats = make_coherent(self.mean, self.n_max)
        else:
            stats = make_heralded_pdc(self.squeeze, self.herald_efficiency, self.n_max)
        if self.prep_efficiency != 1.0:
            stats = PhotonStatistics(binomial_thinning(stats.probs, self.prep_efficiency), stats.deficit)
        return stats

    @classmethod
    def heralded_for(cls, g2: float, mean: float | None = None, herald_efficiency: float = 0.1,
                     n_max: int = DEFAULT_N_MAX) -> "SourceSpec":
        """Heralded source whose second normalized moment equals ``g2``.

        The squeeze parameter is found by root finding at fixed herald
        efficiency.  If ``mean`` is given, a preparation loss brings the mean
        photon number down to it.
        """
        g2 = check_real(g2, "g2", low=0.0, low_open=True)

        def g2_of(lam):
            p = make_heralded_pdc(lam, herald_efficiency, n_max).probs
            n = np.arange(p.size)
            return math.fsum(n * (n - 1) * p) / math.fsum(n * p) ** 2

        hi = 0.95
        if not g2_of(1e-6) < g2 < g2_of(hi):
            raise ValueError(f"g2={g2} not reachable by a heralded source at n_max={n_max}")
        lam = brentq(lambda x: g2_of(x) - g2, 1e-6, hi, xtol=1e-14, rtol=1e-14)
        prep = 1.0
        if mean is not None:
            raw_mean = make_heralded_pdc(lam, herald_efficiency, n_max).mean
            if not 0.0 < mean <= raw_mean:
                raise ValueError(f"mean {mean} unreachable; heralded mean is {raw_mean:.6g}")
            prep = mean / raw_mean
        return cls("heralded_pdc", squeeze=lam, herald_efficiency=herald_efficiency,
                   prep_efficiency=prep, n_max=n_max)

    def to_dict(self) -> dict:
        out = {"variant": self.variant}
        if self.variant == "fock":
            out["n"] = self.n
        elif self.variant == "coherent":
            out["mean"] = self.mean
        else:
            out["squeeze"] = self.squeeze
            out["herald_efficiency"] = self.herald_efficiency
        if self.prep_efficiency != 1.0:
            out["prep_efficiency"] = self.prep_efficiency
        out["n_max"] = self.n_max
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SourceSpec":
        data = dict(data)
        variant = data.pop("variant", None)
        if variant == "heralded_pdc" and "squeeze" not in data and "g2" in data:
            return cls.heralded_for(
                data["g2"],
                mean=data.get("mean"),
                herald_efficiency=data.get("herald_efficiency", 0.1),
                n_max=data.get("n_max", DEFAULT_N_MAX),
            )
        allowed = {"n", "mean", "squeeze", "herald_efficiency", "prep_efficiency", "n_max"}
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"unknown source fields: {sorted(unknown)}")
        return cls(variant, **data)
