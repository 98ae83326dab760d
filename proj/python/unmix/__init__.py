"""Blind separation of convolutive stereo mixtures.

Frequency-domain separation with joint cumulant diagonalization per bin,
lagged-correlation permutation alignment, least-squares filter-support
compaction, and a sliding-window dynamic update loop.
"""

from ._core import (
    LagAggregate,
    ReferenceMode,
    SeparationConfig,
    babble_noise,
    default_filter_taps,
    display_envelope,
    evaluate,
    harmonic,
    mix,
    preset_case1,
    preset_case2,
    preset_case3,
    read_wav,
    rho_maxlag,
    separate_batch,
    separate_dynamic,
    speech_like,
    write_wav,
)

__all__ = [
    "LagAggregate",
    "ReferenceMode",
    "SeparationConfig",
    "babble_noise",
    "default_filter_taps",
    "display_envelope",
    "evaluate",
    "harmonic",
    "mix",
    "preset_case1",
    "preset_case2",
    "preset_case3",
    "read_wav",
    "rho_maxlag",
    "separate_batch",
    "separate_dynamic",
    "speech_like",
    "write_wav",
]

__version__ = "0.1.0"
