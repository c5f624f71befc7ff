"""Simulation and ergodicity diagnostics for regime-switching delay SDEs.

The package splits into: exact rate-matrix linear algebra and spectral
certificates (:mod:`switchsde.generator`), exact chain simulation and
couplings (:mod:`switchsde.chain`), the sliding delay window
(:mod:`switchsde.segment`), the Euler-Maruyama integrator and coupled
Monte Carlo drivers (:mod:`switchsde.sde`), statistical post-processing
(:mod:`switchsde.ergodics`), and a reproducible CLI
(:mod:`switchsde.cli`).
"""

__version__ = "0.1.0"

from .chain import (
    CoupledPath,
    CouplingTimes,
    MCEstimate,
    RegimePath,
    coupling_time_mc,
    discretized_state,
    exp_functional_mc,
    exp_functional_profile,
    integrate_along,
    merged_coupling,
    simulate_ctmc,
    state_at,
)
from .ergodics import (
    DecaySeries,
    EmpiricalMeasure1D,
    InvariantSample,
    RateFit,
    SeriesEnsemble,
    bootstrap_threshold,
    fit_exponential_rate,
    invariant_sampler,
    rho_series,
    stationarity_diagnostic,
    theoretical_rate,
    wasserstein1_sorted,
)
from .generator import (
    ETA_TOLERANCE,
    ErgodicityReport,
    Example1Report,
    GeneratorMatrix,
    RegimeCoefficients,
    Variant,
    certify,
    characteristic_root,
    check_example1,
    check_remark_conditions,
    feynman_kac_expectation,
    lyapunov_diagonal,
    matrix_exponential,
    spectral_abscissa_rate,
    stationary_distribution,
    validate_generator,
)
from .sde import (
    ModelSpec,
    NoiseKind,
    SwitchingDelayOU,
    Trajectory,
    WassersteinEnsemble,
    em_step,
    head_series,
    one_step_head_samples,
    second_moment_series,
    simulate,
    simulate_coupled_synchronous,
    simulate_coupled_wasserstein,
)
from .segment import DelayMeasure, Segment, difference, integrate_squared_diff
from .streams import bootstrap_stream, chain_stream, noise_stream, substream
