"""Persistence weighted kernel statistics for planar point sets."""
from .errors import (
    ConfigError,
    EmptyInput,
    IncompatibleExpansion,
    InsufficientData,
    InvalidGram,
    InvalidSubsampleSize,
    PwkError,
    UnsupportedDimension,
)
from .geometry import (
    EssentialClasses,
    FilteredComplex,
    PersistenceDiagram,
    alpha_filtration,
    bottleneck_distance,
    delaunay,
    diagram,
    diagrams,
    hausdorff_distance,
    persistence,
)
from .inference import (
    ConfidenceBand,
    EvaluationGrid,
    TwoSampleReport,
    bootstrap_band,
    error_rate,
    error_rate_from_gram,
    index_grid,
    mmd_u,
    permutation_null_quantile,
    spectral_null_quantile,
)
from .point_processes import (
    LatticeSpec,
    MaternSpec,
    matern_process,
    matern_thin,
    perturbed_lattice,
    poisson_process,
)
from .vectorization import (
    DiagramGram,
    DiagramKernel,
    KernelSpec,
    RkhsExpansion,
    WeightSpec,
    diagram_gram,
    evaluate,
    landscape,
    landscape_kernel,
    median_heuristics,
    plane_kernel,
    pssk,
    pwk_diagram_kernel,
    pwk_vector,
    rkhs_inner,
    rkhs_mean,
    sliced_wasserstein,
    sw_kernel,
    upssk,
    weight,
)

__version__ = "0.1.0"
