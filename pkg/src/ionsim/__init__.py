"""Desk-scale simulator of a single trapped ion on an optical qubit:
resolved-sideband ground-state cooling, Fock-state engineering, Rabi
flopping under decoherence, electron-shelving detection, and the analysis
toolkit that turns simulated records into temperatures, populations,
cooling rates, and heating rates."""

__version__ = "0.1.0"

from .analysis import (FitResult, dominant_frequency, extract_populations,
                       fit_exponential_decay, fit_linear,
                       thermometry_from_sidebands, wilson_interval)
from .cooling import (CoolingParams, NoCoolingError, calibrate_omega0,
                      cooling_limit, cooling_rates, doppler_limit,
                      sideband_cool)
from .dynamics import (SIDEBAND_BLUE, SIDEBAND_CARRIER, SIDEBAND_RED,
                       DriveParams, FloppingTrace, NoiseModel, Regime,
                       Spectrum, StabilityError, analytic_flopping,
                       drive_hamiltonian, evolve, flopping_trace,
                       lamb_dicke, rabi_frequency, sideband_spectrum)
from .hilbert import (ElectronicLevel, FockSpace, JointState, Mode,
                      TruncationWarning, excited_population, fock_state,
                      mean_phonon, phonon_distribution, state_from_json,
                      state_to_json, thermal_state, truncate_state)
from .measurement import (DetectionParams, choose_threshold,
                          discrimination_error, sample_detection)
from .sequence import (CompileError, PulseSequence, SequenceSyntaxError,
                       Timeline, compile_sequence, estimate_excitation,
                       format_sequence, parse_sequence, run)
from .config import ExperimentConfig, load_config, parse_config
