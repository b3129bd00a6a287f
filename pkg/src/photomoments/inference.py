"""Classicality tests, overlap fitting and reconstruction-range analysis."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._validation import check_int, check_real
from .displaced import DisplacedStateModel, exact_statistics, g_eff_grid, predict_moments
from .fock import PhotonStatistics, SourceSpec, make_fock
from .moments import NormalizedMoments, reconstruct_all, reconstruction_uncertainty

__all__ = [
    "Violation",
    "ClassicalityReport",
    "FitResult",
    "RangeResult",
    "ReportRow",
    "ReconstructionReport",
    "OverlapRegressor",
    "classicality_violations",
    "fit_overlap",
    "golden_section",
    "truncation_bound",
    "truncation_range",
    "reliable_range",
    "ordering_artifact_range",
    "reconstruction_report",
    "DEVIATION_TOL",
]

# absolute deviation in a photon-number probability counted as significant;
# matches the statistical spread of rho(4) from a fourth moment known to +-0.15
DEVIATION_TOL = 0.02


@dataclass(frozen=True)
class Violation:
    """One inequality of the classical chain ``g(m+1) >= g(m) >= 1``.

    ``kind`` is ``"sub_poissonian"`` for ``g(m) < 1`` and ``"ordering"`` for
    ``g(m+1) < g(m)``.  A positive ``margin`` means the inequality is broken.
    """

    kind: str
    m: int
    margin: float
    error: float
    significant: bool


@dataclass(frozen=True)
class ClassicalityReport:
    checks: tuple[Violation, ...]

    @property
    def violations(self) -> tuple[Violation, ...]:
        return tuple(c for c in self.checks if c.significant)

    @property
    def nonclassical(self) -> bool:
        return bool(self.violations)


def classicality_violations(g: NormalizedMoments, n_sigma: float = 3.0,
                            atol: float = 1e-12) -> ClassicalityReport:
    """Check every order of ``g(m+1) >= g(m) >= 1`` available in ``g``.

    A broken inequality counts only if its margin exceeds ``n_sigma`` times
    its propagated error (or ``atol`` when no errors are given).
    """
    if g.m_max < 2:
        raise ValueError("need at least g^(2)")
    checks = []
    for m in range(2, g.m_max + 1):
        margin = 1.0 - g.order(m)
        err = g.error(m)
        checks.append(Violation("sub_poissonian", m, margin, err, margin > max(n_sigma * err, atol)))
    for m in range(2, g.m_max):
        margin = g.order(m) - g.order(m + 1)
        err = math.hypot(g.error(m), g.error(m + 1))
        checks.append(Violation("ordering", m, margin, err, margin > max(n_sigma * err, atol)))
    return ClassicalityReport(tuple(checks))


@dataclass(frozen=True)
class FitResult:
    overlap_hat: float
    residual_sum: float
    stderr: float
    n_points: int
    source_mean: float

    def to_dict(self) -> dict:
        return asdict(self)


def golden_section(f, lo: float, hi: float, tol: float = 1e-4) -> float:
    """Minimize a unimodal ``f`` on ``[lo, hi]``; endpoints are candidates too."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    candidates = [(f(x), x), (f(lo), lo), (f(hi), hi)]
    return min(candidates)[1]


def _coerce_source(source) -> PhotonStatistics:
    if source is None:
        return make_fock(1)
    if isinstance(source, PhotonStatistics):
        return source
    if isinstance(source, SourceSpec):
        return source.build()
    if isinstance(source, dict):
        return SourceSpec.from_dict(source).build()
    return PhotonStatistics(source)


def _chi2_function(source, b, y, w):
    mask = np.isfinite(y) & (w > 0)
    m_max = y.shape[1] + 1

    def chi2(overlap):
        model = g_eff_grid(source, overlap, b, m_max)
        r = np.where(mask, (model - np.nan_to_num(y)) * w, 0.0)
        return float(np.sum(r * r))

    return chi2


def fit_overlap(dataset, source=None, tol: float = 1e-4) -> FitResult:
    """Least-squares estimate of the mode overlap from measured normalized moments.

    ``dataset`` is a sequence of ``(mean, g_values, errors)`` with
    ``g_values = (g2, g3, ...)``.  Every point is displaced by
    ``mean - <n>_source``; residuals are weighted by ``1 / errors`` and the
    standard error comes from the curvature of chi-square at its minimum.
    """
    points = list(dataset)
    if len(points) < 2:
        raise ValueError("need at least two data points to fit the overlap")
    src = _coerce_source(source)
    k = max(len(p[1]) for p in points)
    means = np.array([float(p[0]) for p in points])
    y = np.full((len(points), k), np.nan)
    sigma = np.full((len(points), k), np.nan)
    for i, (_, gv, ev) in enumerate(points):
        y[i, : len(gv)] = gv
        sigma[i, : len(ev)] = ev
    return _fit(src, means, y, sigma, tol)


def _fit(src, means, y, sigma, tol):
    src_mean = src.mean
    if np.any(means < src_mean - 1e-9):
        raise ValueError(f"data means must not lie below the source mean {src_mean:.6g}")
    b = np.clip(means - src_mean, 0.0, None)
    with np.errstate(divide="ignore"):
        w = np.where(np.isfinite(sigma) & (sigma > 0), 1.0 / sigma, 0.0)
    if not np.any(w > 0):
        raise ValueError("all residual weights are zero")
    chi2 = _chi2_function(src, b, y, w)
    best = golden_section(chi2, 0.0, 1.0, tol)
    h = 1e-3
    x0 = min(max(best, h), 1.0 - h)
    curvature = (chi2(x0 + h) - 2.0 * chi2(x0) + chi2(x0 - h)) / (h * h)
    stderr = math.sqrt(2.0 / curvature) if curvature > 0 else math.inf
    used = int(np.count_nonzero(np.any(np.isfinite(y) & (w > 0), axis=1)))
    return FitResult(best, chi2(best), stderr, used, src_mean)


class OverlapRegressor(RegressorMixin, BaseEstimator):
    """Estimator wrapper around :func:`fit_overlap`.

    ``X`` holds calibrated mean photon numbers (one column), ``y`` the
    normalized moments ``g^(2)..g^(K)`` per row.  ``predict`` returns the
    model moments at the fitted overlap.
    """

    def __init__(self, source=None, tol=1e-4):
        self.source = source
        self.tol = tol

    def fit(self, X, y, sigma=None):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        if X.shape[1] != 1:
            raise ValueError("X must have exactly one column of mean photon numbers")
        y = y.reshape(len(y), -1)
        if sigma is None:
            sigma = np.ones_like(y)
        sigma = np.broadcast_to(np.asarray(sigma, dtype=float), y.shape)
        self.source_ = _coerce_source(self.source)
        self.fit_result_ = _fit(self.source_, X[:, 0], y, sigma, self.tol)
        self.overlap_ = self.fit_result_.overlap_hat
        self.stderr_ = self.fit_result_.stderr
        self.n_outputs_ = y.shape[1]
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = check_array(X)
        b = np.clip(X[:, 0] - self.source_.mean, 0.0, None)
        return g_eff_grid(self.source_, self.overlap_, b, self.n_outputs_ + 1)


def truncation_bound(g3: float, g4: float) -> float:
    """Largest mean for which ``rho(3) >= 0`` under fourth-order truncation.

    Returns ``inf`` when ``g4 == 0`` (no bound).
    """
    g3 = check_real(g3, "g3", low=0.0)
    g4 = check_real(g4, "g4", low=0.0)
    if g4 == 0.0:
        return math.inf
    return g3 / g4


@dataclass(frozen=True)
class RangeResult:
    """Upper end of a reconstruction range in mean photon number.

    ``bounded`` is false when nothing failed up to the scan ceiling, in which
    case ``mean`` is that ceiling.
    """

    mean: float
    bounded: bool
    m_max: int
    criterion: str

    def __float__(self):
        return self.mean

    def to_dict(self) -> dict:
        return asdict(self)


def _first_failure(fails, b_hi, step, tol_b):
    """Smallest ``b`` in ``[0, b_hi]`` where ``fails(b)`` turns true, to ``tol_b``."""
    grid = np.arange(0.0, b_hi + step / 2, step)
    prev = None
    for b in grid:
        if fails(b):
            if prev is None:
                return 0.0, True
            lo, hi = prev, b
            while hi - lo > tol_b:
                mid = 0.5 * (lo + hi)
                if fails(mid):
                    hi = mid
                else:
                    lo = mid
            return float(0.5 * (lo + hi)), True
        prev = b
    return float(grid[-1]), False


def truncation_range(source, overlap: float, m_max: int = 4, mean_max: float = 8.0) -> RangeResult:
    """Mean at which truncated reconstruction first gives ``rho(m_max - 1) < 0``.

    Along the model curve this is the fixed point ``mean = g(m_max-1) / g(m_max)``
    (``truncation_bound`` applied to the model's own moments).
    """
    m_max = check_int(m_max, "m_max", minimum=3)
    src = _coerce_source(source)
    src_mean = src.mean

    def slack(b):
        g = g_eff_grid(src, overlap, [b], m_max)[0]
        return g[m_max - 3] - g[m_max - 2] * (src_mean + b)

    b, bounded = _first_failure(lambda b: slack(b) < 0, mean_max - src_mean, 0.05, 1e-7)
    return RangeResult(src_mean + b, bounded, m_max, "negative")


def _truncated_reconstruction(model, m_max):
    return reconstruct_all(predict_moments(model, m_max)).probs


def reliable_range(model: DisplacedStateModel, m_max: int, tol: float = DEVIATION_TOL,
                   mean_max: float | None = None) -> RangeResult:
    """Mean up to which the order-``m_max`` reconstruction follows the exact statistics.

    The boundary is the smallest mean where any reconstructed ``rho(n)``,
    ``n <= m_max``, differs from the model's exact photon statistics by more
    than ``tol``.  Only the source and overlap of ``model`` are used; the
    displacement is scanned.  Resolution is 1e-3 in mean.
    """
    m_max = check_int(m_max, "m_max", minimum=3)
    tol = check_real(tol, "tol", low=0.0, low_open=True)
    src_mean = model.source_mean
    mean_max = src_mean + 6.0 if mean_max is None else mean_max

    def fails(b):
        m = model.with_disp_sq(b)
        rec = _truncated_reconstruction(m, m_max)
        exact = exact_statistics(m).padded(m_max)
        return float(np.max(np.abs(rec - exact))) > tol

    b, bounded = _first_failure(fails, mean_max - src_mean, 0.02, 1e-3)
    return RangeResult(src_mean + b, bounded, m_max, "deviation")


def ordering_artifact_range(model: DisplacedStateModel, m_max: int,
                            mean_max: float | None = None) -> RangeResult:
    """Smallest mean where the truncated reconstruction gives ``rho(m_max-1) < rho(m_max)``."""
    m_max = check_int(m_max, "m_max", minimum=3)
    src_mean = model.source_mean
    mean_max = src_mean + 6.0 if mean_max is None else mean_max

    def fails(b):
        rec = _truncated_reconstruction(model.with_disp_sq(b), m_max)
        return rec[m_max - 1] < rec[m_max]

    b, bounded = _first_failure(fails, mean_max - src_mean, 0.02, 1e-3)
    return RangeResult(src_mean + b, bounded, m_max, "ordering")


@dataclass(frozen=True)
class ReportRow:
    n: int
    reconstructed: float
    stderr: float
    exact: float
    deviation: float
    unphysical: bool
    deviates: bool
    ordering_artifact: bool


@dataclass(frozen=True)
class ReconstructionReport:
    mean: float
    m_max: int
    reliable_mean: float
    rows: tuple[ReportRow, ...] = field(default_factory=tuple)

    @property
    def within_reliable_range(self) -> bool:
        return self.mean <= self.reliable_mean

    @property
    def flagged(self) -> tuple[int, ...]:
        return tuple(r.n for r in self.rows if r.unphysical or r.deviates or r.ordering_artifact)

    def to_csv(self) -> str:
        buf = io.StringIO()
        names = list(ReportRow.__dataclass_fields__)
        writer = csv.DictWriter(buf, fieldnames=names, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow(asdict(row))
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "m_max": self.m_max,
            "reliable_mean": self.reliable_mean,
            "within_reliable_range": self.within_reliable_range,
            "rows": [asdict(r) for r in self.rows],
        }


def reconstruction_report(g: NormalizedMoments, model: DisplacedStateModel,
                          tol: float = DEVIATION_TOL) -> ReconstructionReport:
    """Compare the truncated reconstruction from ``g`` with the model's exact statistics.

    A row deviates when ``|reconstructed - exact|`` exceeds both ``tol`` and
    twice its propagated standard error.  An ordering artifact is a pair
    ``rho(n) < rho(n+1)`` in the reconstruction whose order the exact
    statistics do not share.
    """
    rec = reconstruct_all(g)
    err = reconstruction_uncertainty(g)
    exact = exact_statistics(model).padded(g.m_max)
    rows = []
    for n in range(g.m_max + 1):
        dev = rec.probs[n] - exact[n]
        artifact = (
            n < g.m_max
            and rec.probs[n] < rec.probs[n + 1]
            and exact[n] >= exact[n + 1]
        )
        rows.append(ReportRow(
            n=n,
            reconstructed=float(rec.probs[n]),
            stderr=float(err[n]),
            exact=float(exact[n]),
            deviation=float(dev),
            unphysical=n in rec.violations,
            deviates=abs(dev) > max(tol, 2.0 * err[n]),
            ordering_artifact=bool(artifact),
        ))
    limit = reliable_range(model, max(g.m_max, 3), tol)
    return ReconstructionReport(g.mean, g.m_max, limit.mean, tuple(rows))
