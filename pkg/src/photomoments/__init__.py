"""Loss-tolerant photon statistics of displaced single photons from normalized factorial moments."""

from ._validation import TruncationError, TruncationWarning, UndefinedEstimateError
from .detection import (
    ClickCounts,
    KlyshkoResult,
    LossChannel,
    TmdConfig,
    TwinBeamConfig,
    apply_loss,
    estimate_g_from_counts,
    estimate_mean,
    klyshko_efficiency,
    tmd_click_joint,
    tmd_estimate_g,
    tmd_sample,
)
from .displaced import (
    DisplacedStateModel,
    background_moments,
    displaced_part_moments,
    exact_statistics,
    g_eff,
    g_eff_grid,
    g_ideal,
    mean_eff,
    mean_ideal,
    predict_moments,
)
from .estimators import FactorialMomentTransformer
from .fock import (
    PhotonStatistics,
    SourceSpec,
    displace_statistics,
    displacement_element,
    displacement_probabilities,
    make_coherent,
    make_fock,
    make_heralded_pdc,
)
from .inference import (
    ClassicalityReport,
    FitResult,
    OverlapRegressor,
    RangeResult,
    classicality_violations,
    fit_overlap,
    ordering_artifact_range,
    reconstruction_report,
    reliable_range,
    truncation_bound,
    truncation_range,
)
from .moments import (
    NormalizedMoments,
    RawMoments,
    Reconstruction,
    convergence_check,
    factorial_moments,
    mgf_from_moments,
    mgf_from_statistics,
    normalize_moments,
    normalized_moments,
    reconstruct_all,
    reconstruct_statistics,
    reconstruction_uncertainty,
)

__version__ = "0.1.0"
