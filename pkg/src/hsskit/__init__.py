"""Randomized compression of hierarchically semi-separable (HSS) matrices."""
from .compress import (
    CompressionConfig,
    compress,
    compress_nonsymmetric,
    compress_symmetric,
    two_sided_id_factor,
)
from .estimator import HSSCompressor
from .exceptions import (
    CorruptFileError,
    HssError,
    InterpolationBoundError,
    InvalidInputError,
    RankOverflowError,
)
from .factorization import DiagonalBlock, HssFactorization
from .ops import apply, apply_transpose, stats, to_dense
from .orthonormalize import orthonormalize, orthonormalize_nonsymmetric
from .source import (
    DenseAccessor,
    InstrumentationCounters,
    KernelAccessor,
    KernelSpec,
    MatrixAccessor,
    dense_accessor,
    kernel_accessor,
    synthetic_hss_accessor,
)
from .tree import HssTree, build_uniform_tree

__version__ = "0.1.0"
