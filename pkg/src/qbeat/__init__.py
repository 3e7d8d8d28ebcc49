"""Heralded ground-state quantum beats in a driven two-mode cavity: trajectories, theory, analysis."""
__version__ = "0.1.0"

from .atoms import (build_level_scheme, zeeman_shift, dipole_coupling, lowering_operator,
                    FourLevelScheme, LevelScheme)
from .model import SystemModel, build_operators
from .theory import delta_jump, gamma_decoh, ac_stark, resolvedness, predicted_beat, BeatPrediction
from .feedback import FeedbackConfig, DriveSchedule, on_herald, drive_amplitude
from .trajectory import run_trajectory, ClickRecord, AtomSource, RecordSpec, EngineOptions
from .beam import BeamGeometry, BeamTransit, coupling_profile, calibrate_flux
from .master import master_equation_oracle, MasterEquation
from .correlator import g2_from_clicks, homodyne_basis, CorrelationEstimate
from .analysis import fit_damped_sinusoid, post_revival_fit, BeatFit, ScanResult
from .config import load_config, RunConfig

__all__ = [n for n in dir() if not n.startswith("_")]
