"""Regularized polynomial functional regression on sampled curves."""

from .errors import (
    ConfigError,
    InvalidArgumentError,
    NoRootError,
    ParseError,
    SolveError,
    UnsupportedVersionError,
)
from .filters import FilterSpec, check_qualification, filter_value, residual_value
from .funcdata import (
    DEFAULT_GRID,
    Curve,
    Grid,
    GramMatrix,
    gram,
    kappa_tilde,
    l2_inner,
    l2_norm,
    poly_kernel,
    read_curves,
    write_curves,
)
from .groundtruth import (
    TruthSpec,
    cosine_projection,
    linear_truth,
    model_truth_error,
    benchmark_truth,
)
from .simulate import NoiseSpec, ProcessSpec, draw_process, make_dataset, response_oracle
from .solver import (
    FitReport,
    KernelSpectrum,
    PfrModel,
    fit_iterated,
    fit_spectral,
    fit_tikhonov_direct,
    fit_tikhonov_reduced,
    load_model,
    predict,
    save_model,
)
from .diagnostics import (
    SpectrumView,
    effective_dimension,
    empirical_spectrum,
    excess_risk_mc,
    lambda_star,
    s_quantity,
    upsilon,
    xi_bound,
)

__version__ = "0.1.0"
