"""Simulation of stress-triggered airborne plant-to-plant signalling.

Submodules: :mod:`~plantcomm.transmitter` (emission model),
:mod:`~plantcomm.channel` (puff transport), :mod:`~plantcomm.receiver`
(leaf uptake, noise, CSK), :mod:`~plantcomm.rsk` (ratio shift keying),
:mod:`~plantcomm.calibration` (model fitting) and
:mod:`~plantcomm.experiments` (Monte Carlo sweeps).
"""

from ._validation import DomainError
from .calibration import (
    FitReport,
    GeneEmissionRegressor,
    PolynomialStressRegressor,
    TimeSeries,
    fit_gene_params,
    fit_polynomial,
)
from .channel import ChannelParams, DiffusivityProfile, FieldPoint, concentration, delay, eddy_k
from .experiments import AnalysisConfig, GridSpec, SweepResult, load_preset, reach, run_analysis, snr_sweep
from .receiver import (
    CSKDemodulator,
    LeafParams,
    NoiseModel,
    ReceiverLocation,
    add_noise,
    demodulate,
    leaf_concentration,
    noise_mean,
    snr_db,
)
from .rsk import BlendSpec, RatioWindow, decode_ratio, rsk_decode_range, simulate_blend
from .transmitter import (
    EmissionTrace,
    GeneParams,
    MessageSignal,
    StressProfile,
    extract_message,
    production_rate,
    simulate_emission,
)

__version__ = "0.1.0"
