"""Angle, delay and Doppler estimation for AFDM sensing with a planar-array MIMO radar.

The package is organized along the processing chain:

* :mod:`.waveform` -- AFDM numerology, DAFT/IDAFT, chirp-periodic prefix, QAM frames.
* :mod:`.channel` -- targets, near/far-field steering, received tensor synthesis.
* :mod:`.tensor` -- unfoldings, Khatri-Rao products, spatial smoothing, rank selection.
* :mod:`.cpd` -- structured CP decomposition and an ALS reference.
* :mod:`.estimators` -- AoD, AoA and delay/Doppler estimation.
* :mod:`.crlb` -- Fisher information and Cramer-Rao bounds.
* :mod:`.harness` / :mod:`.cli` -- Monte Carlo sweeps and the command line.
"""

from .channel import SceneConfig, Target, default_scene, desk_scene, synthesize_tensor
from .cpd import CpdError, als_baseline, structured_cpd
from .crlb import compute_crlb
from .estimators import estimate_all
from .harness import ExperimentPlan, run_sweep
from .waveform import AfdmConfig, daft, gen_qam_frame, idaft

__version__ = "0.1.0"

__all__ = [
    "AfdmConfig", "SceneConfig", "Target", "CpdError", "ExperimentPlan",
    "als_baseline", "compute_crlb", "daft", "default_scene", "desk_scene",
    "estimate_all", "gen_qam_frame", "idaft", "run_sweep", "structured_cpd",
    "synthesize_tensor",
]
