"""Loss, time-multiplexed click detection and Klyshko efficiency calibration.

The time-multiplexed detector (TMD) is modeled as ``bins`` independent on/off
detectors.  Each incoming photon independently survives with probability
``eta`` and lands in bin ``i`` with probability ``bin_probs[i]``.  Exact click
probabilities follow from the probability generating function
``G(z) = sum_n rho(n) z^n`` by inclusion-exclusion.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    UndefinedEstimateError,
    check_int,
    check_real,
    check_statistics_rows,
)
from .fock import PhotonStatistics, binomial_thinning

__all__ = [
    "LossChannel",
    "TmdConfig",
    "ClickCounts",
    "TwinBeamConfig",
    "KlyshkoResult",
    "apply_loss",
    "tmd_no_click",
    "tmd_click_joint",
    "tmd_estimate_g",
    "tmd_sample",
    "estimate_g_from_counts",
    "estimate_mean",
    "klyshko_efficiency",
]

CHUNK = 1 << 18


def apply_loss(stats: PhotonStatistics, eta: float) -> PhotonStatistics:
    """Binomial loss channel: every photon survives with probability ``eta``."""
    eta = check_real(eta, "eta", low=0.0, high=1.0)
    return PhotonStatistics(binomial_thinning(stats.probs, eta), stats.deficit)


class LossChannel(TransformerMixin, BaseEstimator):
    """Loss channel acting on rows of photon statistics.

    Composes with :class:`photomoments.estimators.FactorialMomentTransformer`
    in a pipeline; the normalized moments at the end do not depend on ``eta``.
    """

    def __init__(self, eta=1.0):
        self.eta = eta

    def fit(self, X, y=None):
        check_real(self.eta, "eta", low=0.0, high=1.0)
        X = check_statistics_rows(X, estimator=self)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self)
        X = check_statistics_rows(X, estimator=self)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} photon numbers, got {X.shape[1]}")
        return np.vstack([binomial_thinning(row, self.eta) for row in X])

    def apply(self, stats: PhotonStatistics) -> PhotonStatistics:
        return apply_loss(stats, self.eta)


@dataclass(frozen=True, eq=False)
class TmdConfig:
    """Detector topology.

    ``eta`` is the overall efficiency per photon; bin ``i`` sees a photon with
    probability ``eta * bin_probs[i]``.  ``dark_count`` is a per-bin, per-trial
    false click probability (off by default).
    """

    bins: int = 8
    bin_probs: np.ndarray | None = None
    eta: float = 1.0
    dark_count: float = 0.0

    def __post_init__(self):
        bins = check_int(self.bins, "bins", minimum=1, maximum=16)
        if self.bin_probs is None:
            p = np.full(bins, 1.0 / bins)
        else:
            p = np.asarray(self.bin_probs, dtype=float).ravel()
            if p.size != bins:
                raise ValueError(f"bin_probs has {p.size} entries for {bins} bins")
            if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
                raise ValueError("bin_probs must be non-negative and sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "bins", bins)
        object.__setattr__(self, "bin_probs", p)
        object.__setattr__(self, "eta", check_real(self.eta, "eta", low=0.0, high=1.0))
        object.__setattr__(self, "dark_count", check_real(self.dark_count, "dark_count", low=0.0, high=1.0))

    @property
    def uniform(self) -> bool:
        return bool(np.all(self.bin_probs == self.bin_probs[0]))

    def to_dict(self) -> dict:
        out = {"bins": self.bins, "eta": self.eta}
        if not self.uniform:
            out["bin_probs"] = self.bin_probs.tolist()
        if self.dark_count:
            out["dark_count"] = self.dark_count
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TmdConfig":
        return cls(**data)


def _pgf(stats, z):
    n = np.arange(stats.probs.size)
    return math.fsum(stats.probs * z ** n)


def tmd_no_click(stats: PhotonStatistics, cfg: TmdConfig, bins) -> float:
    """Probability that none of ``bins`` clicks."""
    bins = tuple(bins)
    reach = cfg.eta * math.fsum(cfg.bin_probs[i] for i in bins)
    return (1.0 - cfg.dark_count) ** len(bins) * _pgf(stats, 1.0 - reach)


def _check_subset(subset, cfg):
    subset = tuple(sorted(set(int(i) for i in subset)))
    if not subset:
        raise ValueError("subset must be non-empty")
    if subset[0] < 0 or subset[-1] >= cfg.bins:
        raise ValueError(f"bin indices must lie in [0, {cfg.bins})")
    return subset


def tmd_click_joint(stats: PhotonStatistics, cfg: TmdConfig, subset,
                    method: str = "recursive") -> float:
    """Probability that every bin in ``subset`` clicks in one trial.

    ``method="inclusion_exclusion"`` sums the alternating no-click terms
    directly.  That sum cancels badly at low efficiency (relative error grows
    like ``eps / eta^k``), so the default ``"recursive"`` route instead tracks
    which bins of the subset have been hit photon by photon, using only
    positive terms.
    """
    subset = _check_subset(subset, cfg)
    if method == "inclusion_exclusion":
        terms = []
        for k in range(len(subset) + 1):
            for part in itertools.combinations(subset, k):
                terms.append((-1) ** k * tmd_no_click(stats, cfg, part))
        return min(1.0, max(0.0, math.fsum(terms)))
    if method != "recursive":
        raise ValueError(f"unknown method {method!r}")
    k = len(subset)
    q = cfg.eta * cfg.bin_probs[list(subset)]
    miss = 1.0 - q.sum()
    masks = np.arange(1 << k)
    unhit = k - np.array([bin(x).count("1") for x in masks])
    # probability that the unhit bins of a mask all fire by dark counts
    finish = cfg.dark_count ** unhit
    state = np.zeros(1 << k)
    state[0] = 1.0
    total = 0.0
    for pn in stats.probs:
        total += pn * float(state @ finish)
        nxt = miss * state
        for j in range(k):
            nxt += np.bincount(masks | (1 << j), weights=q[j] * state, minlength=1 << k)
        state = nxt
    return min(1.0, max(0.0, total))


def tmd_estimate_g(stats: PhotonStatistics, cfg: TmdConfig, m: int) -> float:
    """Coincidence-ratio estimate of ``g^(m)`` from exact click probabilities.

    Ratio of the ``m``-fold coincidence probability to the product of the
    single-click probabilities, averaged over all ``m``-bin subsets (one
    subset suffices for uniform splitting).
    """
    m = check_int(m, "m", minimum=2, maximum=cfg.bins)
    singles = [tmd_click_joint(stats, cfg, (i,)) for i in range(cfg.bins)]
    subsets = [tuple(range(m))] if cfg.uniform else list(itertools.combinations(range(cfg.bins), m))
    ratios = []
    for s in subsets:
        denom = math.prod(singles[i] for i in s)
        if denom <= 0.0:
            raise UndefinedEstimateError(f"zero single-click probability in bins {s}")
        ratios.append(tmd_click_joint(stats, cfg, s) / denom)
    return math.fsum(ratios) / len(ratios)


@dataclass(eq=False)
class ClickCounts:
    """Click tallies from ``trials`` detector shots.

    ``patterns[k]`` counts shots whose click pattern, read as a bit mask over
    bins, equals ``k``.  Singles and subset coincidences derive from it.
    """

    trials: int
    patterns: np.ndarray
    seed: int | None = None
    bins: int = field(init=False)

    def __post_init__(self):
        self.patterns = np.asarray(self.patterns, dtype=np.int64)
        bins = int(round(math.log2(self.patterns.size)))
        if 1 << bins != self.patterns.size:
            raise ValueError("pattern histogram length must be a power of two")
        if self.patterns.sum() != self.trials:
            raise ValueError("pattern histogram does not add up to the number of trials")
        self.bins = bins

    def coincidences(self, subset) -> int:
        """Number of shots in which every bin of ``subset`` clicked."""
        mask = 0
        for i in subset:
            mask |= 1 << int(i)
        keys = np.arange(self.patterns.size)
        return int(self.patterns[(keys & mask) == mask].sum())

    @property
    def singles(self) -> np.ndarray:
        return np.array([self.coincidences((i,)) for i in range(self.bins)], dtype=np.int64)

    def coincidence_table(self, max_order: int = 4) -> dict[tuple[int, ...], int]:
        return {
            s: self.coincidences(s)
            for m in range(2, min(max_order, self.bins) + 1)
            for s in itertools.combinations(range(self.bins), m)
        }

    def merge(self, other: "ClickCounts") -> "ClickCounts":
        if other.bins != self.bins:
            raise ValueError("cannot merge counts from different detectors")
        return ClickCounts(self.trials + other.trials, self.patterns + other.patterns, self.seed)

    def to_dict(self, max_order: int = 4) -> dict:
        return {
            "trials": self.trials,
            "seed": self.seed,
            "bins": self.bins,
            "singles": self.singles.tolist(),
            "coincidences": {
                "-".join(map(str, s)): c for s, c in self.coincidence_table(max_order).items()
            },
            "patterns": self.patterns.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ClickCounts":
        return cls(int(data["trials"]), np.asarray(data["patterns"]), data.get("seed"))

    def to_csv(self, max_order: int = 4) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["subset", "count", "trials"])
        for i, c in enumerate(self.singles):
            writer.writerow([str(i), int(c), self.trials])
        for s, c in self.coincidence_table(max_order).items():
            writer.writerow(["-".join(map(str, s)), c, self.trials])
        return buf.getvalue()


def _sample_chunk(probs, cfg, size, seed_seq):
    rng = np.random.default_rng(seed_seq)
    n = rng.choice(probs.size, size=size, p=probs)
    pvals = np.append(cfg.eta * cfg.bin_probs, 1.0 - cfg.eta)
    pvals = np.clip(pvals, 0.0, 1.0)
    pvals /= pvals.sum()
    hits = rng.multinomial(n, pvals)[:, : cfg.bins] > 0
    if cfg.dark_count:
        hits |= rng.random((size, cfg.bins)) < cfg.dark_count
    keys = hits.astype(np.int64) @ (1 << np.arange(cfg.bins, dtype=np.int64))
    return np.bincount(keys, minlength=1 << cfg.bins)


def tmd_sample(stats: PhotonStatistics, cfg: TmdConfig, trials: int, seed: int,
               n_jobs: int | None = None) -> ClickCounts:
    """Monte Carlo click record of ``trials`` shots.

    Shots are split into fixed-size chunks, each with its own child seed of
    ``seed``, so the result does not depend on ``n_jobs``.
    """
    trials = check_int(trials, "trials", minimum=1)
    seed = check_int(seed, "seed", minimum=0)
    probs = stats.probs / stats.probs.sum()
    n_chunks = -(-trials // CHUNK)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    sizes = [CHUNK] * (n_chunks - 1) + [trials - CHUNK * (n_chunks - 1)]
    if n_jobs in (None, 1) or n_chunks == 1:
        parts = [_sample_chunk(probs, cfg, s, c) for s, c in zip(sizes, children)]
    else:
        parts = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_sample_chunk)(probs, cfg, s, c) for s, c in zip(sizes, children)
        )
    return ClickCounts(trials, np.sum(parts, axis=0), seed)


def estimate_g_from_counts(counts: ClickCounts, m: int, subsets=None) -> tuple[float, float]:
    """Empirical ``g^(m)`` and its standard error.

    The estimate averages coincidence ratios over ``subsets`` (all ``m``-bin
    subsets by default).  The error is the delta-method propagation of the
    multinomial spread of the click-pattern histogram.
    """
    m = check_int(m, "m", minimum=2, maximum=counts.bins)
    if subsets is None:
        subsets = list(itertools.combinations(range(counts.bins), m))
    keys = np.arange(counts.patterns.size)
    freq = counts.patterns / counts.trials
    clicked = (keys[:, None] >> np.arange(counts.bins)) & 1
    singles = clicked.T @ freq
    grad = np.zeros(keys.size)
    ratios, denoms = [], []
    for s in subsets:
        s = tuple(s)
        denom = math.prod(singles[i] for i in s)
        if denom <= 0.0:
            raise UndefinedEstimateError(f"no single clicks recorded in bins {s}")
        denoms.append(denom)
        in_s = np.all(clicked[:, s] == 1, axis=1)
        r = freq[in_s].sum() / denom
        ratios.append(r)
        grad += in_s / denom - r * (clicked[:, s] / singles[list(s)]).sum(axis=1)
    grad /= len(ratios)
    g = math.fsum(ratios) / len(ratios)
    if g == 0.0:
        # no coincidences at all: report the scale of a single count
        return g, 1.0 / counts.trials / (math.fsum(denoms) / len(denoms)) / len(denoms)
    var = (freq @ grad ** 2 - (freq @ grad) ** 2) / counts.trials
    return g, math.sqrt(max(var, 0.0))


def estimate_mean(counts: ClickCounts, eta_cal: float) -> float:
    """Mean photon number from the summed single-click rate divided by the calibrated efficiency."""
    eta_cal = check_real(eta_cal, "eta_cal")
    if eta_cal <= 0.0:
        raise ZeroDivisionError("calibrated efficiency must be positive")
    return float(counts.singles.sum()) / counts.trials / eta_cal


@dataclass(frozen=True)
class TwinBeamConfig:
    squeeze: float
    eta_signal: float
    eta_herald: float
    trials: int
    seed: int = 0

    def __post_init__(self):
        check_real(self.squeeze, "squeeze", low=0.0, high=1.0, high_open=True)
        check_real(self.eta_signal, "eta_signal", low=0.0, high=1.0)
        check_real(self.eta_herald, "eta_herald", low=0.0, high=1.0)
        check_int(self.trials, "trials", minimum=2)
        check_int(self.seed, "seed", minimum=0)


@dataclass(frozen=True)
class KlyshkoResult:
    efficiency: float
    stderr: float
    coincidences: int
    accidentals: int
    herald_counts: int
    low_statistics: bool

    def __float__(self):
        return self.efficiency

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _twin_beam_chunk(cfg, size, seed_seq):
    rng = np.random.default_rng(seed_seq)
    lam2 = cfg.squeeze ** 2
    # thermal pair number: P(n) = (1 - lam^2) lam^(2n)
    if lam2 == 0.0:
        n = np.zeros(size, dtype=np.int64)
    else:
        n = rng.geometric(1.0 - lam2, size=size) - 1
    herald = rng.binomial(n, cfg.eta_herald) > 0
    signal = rng.binomial(n, cfg.eta_signal) > 0
    return herald, signal


def klyshko_efficiency(cfg: TwinBeamConfig, n_jobs: int | None = None) -> KlyshkoResult:
    """Signal-arm efficiency from heralded coincidences minus accidentals.

    Accidentals are counted by pairing each herald with the signal record of
    the next trial.
    """
    n_chunks = -(-cfg.trials // CHUNK)
    children = np.random.SeedSequence(cfg.seed).spawn(n_chunks)
    sizes = [CHUNK] * (n_chunks - 1) + [cfg.trials - CHUNK * (n_chunks - 1)]
    if n_jobs in (None, 1) or n_chunks == 1:
        parts = [_twin_beam_chunk(cfg, s, c) for s, c in zip(sizes, children)]
    else:
        parts = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_twin_beam_chunk)(cfg, s, c) for s, c in zip(sizes, children)
        )
    herald = np.concatenate([p[0] for p in parts])
    signal = np.concatenate([p[1] for p in parts])
    n_herald = int(herald.sum())
    if n_herald == 0:
        raise UndefinedEstimateError("no herald clicks recorded")
    coinc = int(np.count_nonzero(herald & signal))
    acc = int(np.count_nonzero(herald & np.roll(signal, -1)))
    eff = (coinc - acc) / n_herald
    # add-one estimate keeps the error honest when few heralds were recorded
    p = (coinc + 1) / (n_herald + 2)
    stderr = math.sqrt(p * (1 - p) / n_herald + acc / n_herald ** 2)
    return KlyshkoResult(eff, stderr, coinc, acc, n_herald, stderr > 0.01)
