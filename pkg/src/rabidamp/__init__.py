"""Damped Rabi and Ramsey dynamics of thermal two-level ensembles.

Atoms flying through a spatially varying drive or splitting field
dephase; this package simulates that Monte Carlo style, carries the
matching closed forms, models finite imaging resolution, and fits the
resulting decays.  The command-line entry point is ``rabidamp``.
"""

from .config import VERSION as __version__
from .config import RunConfig, load_config
from .dynamics import (STEPS_PER_CYCLE, PulseSequence, Segment, SegmentKind,
                       SpinState, Trajectory, bloch_angle, propagate_ode,
                       propagate_resonant_analytic, ramsey_phase)
from .ensemble import (EnsembleConfig, LocalDensityMatrix, PhaseSpaceSample,
                       coherence_envelope, derive_seed, gaussian_density,
                       local_population_closed_form, rho11_closed_form,
                       rho12_closed_form, rho22_closed_form,
                       sample_phase_space, sequence_population_closed_form,
                       simulate_local_population, tau_v, tau_v_value)
from .errors import ConfigError, NumericsError
from .fields import (CONSTANTS, INVERSE_R, LINEAR, FieldMap,
                     PhysicalConstants, eval_drive, eval_splitting,
                     rabi_from_B_field)
from .fitting import (DecayFitResult, DecayFitter, DecayModel, LocalRabiScan,
                      ModelKind, ScanPoint, extract_local_rabi, fit_decay,
                      pi_half_fidelity, sensing_error_scaling)
from .imaging import (FringeFitResult, FringeFitter, ResolutionModel,
                      SyntheticImage, convolve_profile, fit_spatial_fringes,
                      horizontal_strip, render_image, tau_x)
from .io import read_pgm16, read_table, write_csv, write_pgm16
from .lm import LMResult, levenberg
from .validation import as_1d_floats, check_positive, check_xy, uniform_pitch

__all__ = [
    "__version__",
    "CONSTANTS", "ConfigError", "DecayFitResult", "DecayFitter", "DecayModel",
    "EnsembleConfig", "FieldMap", "FringeFitResult", "FringeFitter",
    "INVERSE_R", "LINEAR", "LMResult", "LocalDensityMatrix", "LocalRabiScan",
    "ModelKind", "NumericsError", "PhaseSpaceSample", "PhysicalConstants",
    "PulseSequence", "ResolutionModel", "RunConfig", "STEPS_PER_CYCLE",
    "ScanPoint", "Segment", "SegmentKind", "SpinState", "SyntheticImage",
    "Trajectory", "as_1d_floats", "bloch_angle", "check_positive", "check_xy",
    "coherence_envelope", "convolve_profile", "derive_seed",
    "eval_drive", "eval_splitting",
    "extract_local_rabi", "fit_decay", "fit_spatial_fringes",
    "gaussian_density", "horizontal_strip", "levenberg", "load_config",
    "local_population_closed_form", "pi_half_fidelity", "propagate_ode",
    "propagate_resonant_analytic", "rabi_from_B_field", "ramsey_phase",
    "read_pgm16", "read_table", "render_image", "rho11_closed_form",
    "rho12_closed_form", "rho22_closed_form", "sample_phase_space",
    "sensing_error_scaling", "sequence_population_closed_form",
    "simulate_local_population", "tau_v", "tau_v_value", "tau_x",
    "uniform_pitch", "write_csv", "write_pgm16",
]
