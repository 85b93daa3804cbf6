"""Multiscale spectral wavelet descriptors for triangulated surfaces."""

__version__ = "0.1.0"

from .bof import (
    Dictionary,
    SurfaceHistogram,
    WaveletBrainMatrix,
    assemble_waveletbrain,
    build_dictionary,
    pool_histogram,
    soft_assign,
)
from .laplacian import (
    EigenSystem,
    LaplacianSystem,
    cotangent_system,
    eigendecompose,
    imht,
    mht,
    shape_dna,
)
from .learn import (
    ClassificationReport,
    LabeledDataset,
    RegressionReport,
    balance_classes,
    cross_validate_svm,
    paired_comparison,
    pls_fit,
    pls_loocv,
)
from .mesh import (
    TriangleMesh,
    ValidationReport,
    load_mesh,
    surface_area,
    validate_mesh,
    write_mesh,
)
from .sgwt import (
    KernelConfig,
    SgwsMatrix,
    chi2_distance_map,
    compute_sgws,
    kernel_g,
    kernel_h,
    select_scales,
)
from .synth import SynthSpec, bump_sphere, generate_cohort, icosphere

__all__ = [
    "Dictionary",
    "SurfaceHistogram",
    "WaveletBrainMatrix",
    "assemble_waveletbrain",
    "build_dictionary",
    "pool_histogram",
    "soft_assign",
    "EigenSystem",
    "LaplacianSystem",
    "cotangent_system",
    "eigendecompose",
    "imht",
    "mht",
    "shape_dna",
    "ClassificationReport",
    "LabeledDataset",
    "RegressionReport",
    "balance_classes",
    "cross_validate_svm",
    "paired_comparison",
    "pls_fit",
    "pls_loocv",
    "TriangleMesh",
    "ValidationReport",
    "load_mesh",
    "surface_area",
    "validate_mesh",
    "write_mesh",
    "KernelConfig",
    "SgwsMatrix",
    "chi2_distance_map",
    "compute_sgws",
    "kernel_g",
    "kernel_h",
    "select_scales",
    "SynthSpec",
    "bump_sphere",
    "generate_cohort",
    "icosphere",
]
