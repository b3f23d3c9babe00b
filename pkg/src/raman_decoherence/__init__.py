"""Collisional decoherence in Raman quantum memories: spectral models,
pulse-counting statistics, fitting and a collision Monte Carlo."""

from .collisions import CollisionParams, TrajectoryConfig, simulate_dipole, simulate_spectrum
from .counting import CountLink, JointCountModel, degrade_g2, estimate_g2, exact_g2, sample_joint_counts
from .fitting import FitProblem, FitResult, FreeParameter, fit
from .lineshape import EtalonConfig, FrequencyGrid, ProfileParams, airy_transmission, voigt_density
from .scan import AnalysisTemplate, ScanConfig, ScanTrace, analyze_scan, run_synthetic_scan
from .spectrum import ChannelModel, LineComponent, default_paper_model, predict_mean_counts

__version__ = "0.1.0"

__all__ = [
    "AnalysisTemplate",
    "ChannelModel",
    "CollisionParams",
    "CountLink",
    "EtalonConfig",
    "FitProblem",
    "FitResult",
    "FreeParameter",
    "FrequencyGrid",
    "JointCountModel",
    "LineComponent",
    "ProfileParams",
    "ScanConfig",
    "ScanTrace",
    "TrajectoryConfig",
    "airy_transmission",
    "analyze_scan",
    "default_paper_model",
    "degrade_g2",
    "estimate_g2",
    "exact_g2",
    "fit",
    "predict_mean_counts",
    "run_synthetic_scan",
    "sample_joint_counts",
    "simulate_dipole",
    "simulate_spectrum",
    "voigt_density",
]
