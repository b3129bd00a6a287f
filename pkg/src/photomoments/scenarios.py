"""Reference scenario: heralded photons from a pulsed twin-beam source.

The heralded state has ``g2 = 0.184`` and mean photon number 1.07; the
displacement mode overlap is 0.71.  These are the only source properties
used; the underlying pair statistics are a modeling choice.
"""

from functools import lru_cache

from .displaced import DisplacedStateModel
from .fock import DEFAULT_N_MAX, PhotonStatistics, SourceSpec

SOURCE_G2 = 0.184
SOURCE_MEAN = 1.07
OVERLAP = 0.71
HERALD_EFFICIENCY = 0.1
# per-bin efficiency of the eight-bin detector
BIN_EFFICIENCY = 0.01


@lru_cache(maxsize=8)
def reference_source_spec(n_max: int = DEFAULT_N_MAX) -> SourceSpec:
    return SourceSpec.heralded_for(SOURCE_G2, mean=SOURCE_MEAN,
                                   herald_efficiency=HERALD_EFFICIENCY, n_max=n_max)


def reference_source(n_max: int = DEFAULT_N_MAX) -> PhotonStatistics:
    return reference_source_spec(n_max).build()


def reference_model(disp_sq: float = 0.0, overlap: float = OVERLAP) -> DisplacedStateModel:
    return DisplacedStateModel(reference_source(), overlap, disp_sq)
