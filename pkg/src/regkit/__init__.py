"""regkit: kernel-regularized and robust FIR system identification.

Impulse-response estimation from input/output records with least
squares, kernel-regularized least squares, worst-case robust variants
over three perturbation families, an l1 atomic-decomposition baseline,
and empirical Bayes hyperparameter tuning with an optional sparsity
prior, plus Monte Carlo harnesses comparing them on two benchmark
plants.
"""

from ._version import __version__
from .errors import (
    ConfigError,
    ConjugateClosureError,
    GridError,
    InfiniteRhoError,
    InsufficientDataError,
    InvalidModelError,
    NotInSpanError,
    RegkitError,
    SingularFactorError,
    SingularRegressorError,
    UnstablePoleError,
)
from .estimators import (
    EstimateResult,
    InnerMax,
    SolverOptions,
    UncertaintySpec,
    atom_estimate,
    krls,
    krregls,
    regls,
    rho_from_lambda,
    rls,
    robust_estimate,
    rregls,
    srls,
    srregls,
    structured_inner_ascent,
    structured_inner_max,
    worst_case_delta,
    worst_case_value,
)
from .experiments import (
    BENCHMARKS,
    ExperimentConfig,
    McReport,
    atomic_noise_config,
    disturbed_input_config,
    run_atomic_noise,
    run_disturbed_input,
    run_experiment,
)
from .kernels import (
    AtomicDictionary,
    KernelMatrix,
    assemble_S_eta,
    atomic_response,
    build_grid,
    decompose_sample,
    sample_prior,
    tc_kernel,
)
from .lti import (
    SignalSpec,
    TransferFunction,
    disturb,
    generate_signal,
    impulse_response,
    simulate,
)
from .metrics import bias_var_mse, fit_w, r_squared
from .regression import Dataset, build_phi, ls_estimate
from .tuning import (
    CvResult,
    MarginalModel,
    TuneConfig,
    TuneResult,
    cross_validate,
    eb_solve,
    estimate_noise_var,
    posterior_mean,
    reb_solve,
    tune_tc_kernel,
)

__all__ = [
    "__version__",
    "RegkitError",
    "InvalidModelError",
    "UnstablePoleError",
    "GridError",
    "ConfigError",
    "SingularRegressorError",
    "SingularFactorError",
    "ConjugateClosureError",
    "NotInSpanError",
    "InsufficientDataError",
    "InfiniteRhoError",
    "TransferFunction",
    "SignalSpec",
    "impulse_response",
    "generate_signal",
    "simulate",
    "disturb",
    "Dataset",
    "build_phi",
    "ls_estimate",
    "KernelMatrix",
    "AtomicDictionary",
    "tc_kernel",
    "atomic_response",
    "build_grid",
    "assemble_S_eta",
    "sample_prior",
    "decompose_sample",
    "UncertaintySpec",
    "SolverOptions",
    "EstimateResult",
    "InnerMax",
    "regls",
    "rls",
    "krls",
    "rregls",
    "krregls",
    "srls",
    "srregls",
    "structured_inner_max",
    "structured_inner_ascent",
    "worst_case_value",
    "worst_case_delta",
    "rho_from_lambda",
    "atom_estimate",
    "robust_estimate",
    "MarginalModel",
    "TuneConfig",
    "TuneResult",
    "reb_solve",
    "eb_solve",
    "estimate_noise_var",
    "posterior_mean",
    "cross_validate",
    "CvResult",
    "tune_tc_kernel",
    "fit_w",
    "r_squared",
    "bias_var_mse",
    "ExperimentConfig",
    "McReport",
    "BENCHMARKS",
    "disturbed_input_config",
    "atomic_noise_config",
    "run_experiment",
    "run_disturbed_input",
    "run_atomic_noise",
]
