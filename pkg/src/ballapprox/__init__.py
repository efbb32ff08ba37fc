"""Approximating the indicator of a ball by Fourier partial sums and by a sparse ReLU network."""

from .errors import (
    BesselEvaluationError,
    BudgetExceededError,
    OutOfCubeError,
    RegionBoundaryError,
    SlabOverlapError,
    UnstableStepError,
)
from .fourier import (
    PartialSumScan,
    RadialCoefficientTable,
    ShellTable,
    ball_coefficient,
    divergence_scan,
    fourier_gd,
    partial_sum_at,
    partial_sum_center,
    projection_coefficient,
    shell_counts,
)
from .geometry import (
    Domain,
    FacetMeasureEstimate,
    HalfSpaceFamily,
    ball_indicator,
    excess_volume,
    facet_measure,
    make_directions,
    polytope_contains,
)
from .relu_net import (
    NetworkWeights,
    RegionCode,
    explicit_value,
    forward,
    limit_indicator,
    locate_region,
    region_code,
    spatial_gradient,
)
from .training import (
    EnergyEstimate,
    TrainConfig,
    TrainTrace,
    energy_decomposed,
    energy_direct,
    fit_power_law,
    full_grad_step,
    lr_error,
    radial_exact,
    radial_step,
    train,
)

__version__ = "0.1.0"
