"""Controller synthesis programs."""

from .conic import ConicProgram, ConicSolution, solver_settings
from .programs import (
    brunovsky,
    petersen_block,
    synth_ct,
    synth_exact,
    synth_extended,
    synth_min_norm,
    synth_normal_form,
    synth_robust,
    synth_sparse,
    verify_given_K,
)
from .result import RobustParams, SynthesisResult

__all__ = [
    "ConicProgram",
    "ConicSolution",
    "RobustParams",
    "SynthesisResult",
    "brunovsky",
    "petersen_block",
    "solver_settings",
    "synth_ct",
    "synth_exact",
    "synth_extended",
    "synth_min_norm",
    "synth_normal_form",
    "synth_robust",
    "synth_sparse",
    "verify_given_K",
]
