"""Gaussian bosonic channels in truncated Fock space: output norms, the Theta operator, and optimizers."""

__version__ = "0.1.0"

from ._kernels import backend
from .channels import (
    ChannelSpec,
    apply_channel,
    apply_classical_noise,
    apply_gaussian_displacement,
    apply_squeezed_env_loss,
    apply_thermal_loss,
    channel_adjoint_apply,
    kraus_operators,
)
from .errors import (
    ConfigError,
    ConsistencyError,
    CutoffError,
    GaussaddError,
    LeakageWarning,
    NotHermitianError,
    ParameterError,
    ResourceError,
)
from .fock import (
    DensityMatrix,
    PureState,
    TruncatedOperator,
    beam_splitter_op,
    coherent_state,
    displacement_op,
    fock_state,
    make_state,
    partial_trace,
    squeeze_op,
    thermal_state,
    trace_distance,
    trace_power,
    vacuum,
)
from .norms import bounds_nu, closed_form_nu, coherent_output_norm, renyi_entropy, renyi_monotonicity_check, z_norm
from .optimize import OptimizationResult, OptimizerConfig, maximize_output_norm
from .quadrature import QuadratureGrid, anisotropic_grid, circular_grid
from .structure import build_circulant_triple, dft_spectral_data, lambda0, lambda0_routes, squeeze_decomposition
from .theta import (
    ThetaOperator,
    build_theta,
    laguerre_integral_oracle,
    optimal_eigenvector,
    spectral_bound_check,
    trace_identity_check,
)
