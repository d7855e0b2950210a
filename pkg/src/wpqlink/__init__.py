"""Helstrom-bound performance of coherent-state M-PSK and harvest-then-transmit rate optimisation."""

__version__ = "0.1.0"

from .binary import BinaryDiscriminationResult, helstrom_binary, helstrom_bpsk_noiseless
from .errors import (
    BackendMismatch,
    BracketError,
    ConvergenceError,
    DimensionMismatch,
    DomainError,
    TruncationError,
    WpqError,
)
from .fock import (
    DensityOperator,
    EigenDecomposition,
    hermitian_eig,
    make_coherent_state,
    matrix_sqrt_inv,
    thermal_displaced_rho,
)
from .povm import (
    DiscriminationProblem,
    Povm,
    SolverOptions,
    SolverReport,
    check_optimality_certificate,
    evaluate_error,
    solve_min_error_povm,
)
from .srm import GramSpectrum, gram_spectrum, srm_error_exact, srm_error_large_m, srm_povm
from .wpcn import (
    EnergySplit,
    ErrorBackend,
    RateProfile,
    SystemConfig,
    effective_rate,
    energy_split,
    optimize_time_fraction,
    photon_rate,
    refine_t_star,
)
