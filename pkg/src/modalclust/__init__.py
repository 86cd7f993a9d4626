"""Modal clustering: density modes, basins of attraction and partition distances."""

__version__ = "0.1.0"

from .assignment import brute_force_assignment, solve_lbap, solve_lsap
from .cluster_tree_1d import build_tree, component_counts, coverage_level, level_set, minima_partition
from .density_models import (
    CriticalPoint,
    KernelModel,
    NormalMixture,
    eval_density,
    eval_gradient,
    eval_hessian,
    normal_reference_bandwidth,
    posterior_weights,
    sample,
    scalar_bandwidth,
    sigma_star,
)
from .errors import (
    CarrierMismatchError,
    DegenerateDensityError,
    DimensionError,
    IllConditionedModelError,
    InputError,
    ModalClustError,
    NumericalError,
    ShiftUndefinedError,
    UnsupportedOperationError,
)
from .harness import ExperimentConfig, run_consistency
from .metrics import (
    OverlapTable,
    dist_dp_family,
    dist_hausdorff,
    dist_transfer,
    empirical_overlap,
    overlap_from_partitions,
    transfer_details,
)
from .mode_seek import (
    UNASSIGNED,
    ModeSet,
    Partition,
    ShiftConfig,
    ascend,
    classify_critical,
    find_modes,
    grid_carrier,
    partition_carrier,
    shift_step,
)

__all__ = [
    "__version__",
    "CriticalPoint",
    "KernelModel",
    "NormalMixture",
    "eval_density",
    "eval_gradient",
    "eval_hessian",
    "normal_reference_bandwidth",
    "posterior_weights",
    "sample",
    "scalar_bandwidth",
    "sigma_star",
    "CarrierMismatchError",
    "DegenerateDensityError",
    "DimensionError",
    "IllConditionedModelError",
    "InputError",
    "ModalClustError",
    "NumericalError",
    "ShiftUndefinedError",
    "UnsupportedOperationError",
    "OverlapTable",
    "dist_dp_family",
    "dist_hausdorff",
    "dist_transfer",
    "empirical_overlap",
    "overlap_from_partitions",
    "transfer_details",
    "UNASSIGNED",
    "ModeSet",
    "Partition",
    "ShiftConfig",
    "ascend",
    "classify_critical",
    "find_modes",
    "grid_carrier",
    "partition_carrier",
    "shift_step",
    "brute_force_assignment",
    "solve_lbap",
    "solve_lsap",
    "build_tree",
    "component_counts",
    "coverage_level",
    "level_set",
    "minima_partition",
    "ExperimentConfig",
    "run_consistency",
]
