"""Entangled photon pairs from a quantum-dot biexciton-exciton cascade.

A numpy/scipy toolkit covering the full characterization chain: analytic
cascade model, Monte Carlo time-tag simulation, coincidence correlation and
pulsed g2, polarization contrasts, 16-setting density-matrix tomography with
maximum-likelihood refinement, and the nonlinear fits (lifetimes, Rabi,
splitting, Lorentzian trends, ensemble yield).
"""

from .cascade import (
    DetectorParams,
    EmitterParams,
    ExcitationParams,
    cascade_decay_curve,
    ensemble_density_matrix,
    fidelity_vs_splitting,
    predicted_fidelity,
    rabi_population,
    reference_emitter,
    simulator_equivalent_params,
    state_at_delay,
    xx_population,
)
from .config import load_config, parse_config, save_config, serialize_config
from .correlate import (
    CoincidenceHistogram,
    Measurement,
    contrast,
    correlate_channels,
    cross_correlate,
    fidelity_from_contrasts,
    fold_histogram,
    g2_zero,
    integrate_peaks,
    true_coincidences,
)
from .fitting import (
    FitResult,
    SpectrumSeries,
    ensemble_yield,
    fit_decay,
    fit_fss,
    fit_lorentzian,
    fit_rabi,
    sample_stats,
)
from .qdtt import read_qdtt, write_qdtt
from .simulate import PhotonEvent, SimConfig, TimeTagStream, derive_block_seed, simulate
from .states import (
    ANALYZER_SETTINGS,
    HBAR_UEV_PS,
    AnalyzerSetting,
    DensityMatrix,
    PolarizationKet,
    TwoPhotonKet,
    analyzer_ket,
    bell_psi_plus,
    concurrence,
    density_matrix_from_text,
    density_matrix_to_text,
    fidelity,
    maximally_mixed,
    pair_projection_probability,
    purity,
)
from .tomography import (
    MLEResult,
    TomoRecord,
    background_correct,
    bootstrap_errors,
    ideal_counts,
    linear_reconstruct,
    mle_reconstruct,
    projection_probabilities,
    standard_settings,
)

__version__ = "0.1.0"
