"""
Random Projection Hash Toolkit
Hash family H_{R,a,b}, tuple geometry and k-way collision-rate estimators
"""

from .errors import (
    CholeskyFail,
    Degenerate,
    DegenerateTriangle,
    DomainError,
    NotUnit,
    PreconditionError,
    RPHashError,
    ToleranceNotMet,
    UnsupportedConfiguration,
    UsageError,
    ZeroVector,
)
from .geometry import (
    TupleConfig,
    UnitTuple,
    gram_matrix,
    is_positive_semidefinite,
    make_tuple,
    sampling_factor,
)
from .hashing import HashFamilyParams, HashInstance, HashValue, hash_value, k_collision, sample_instance

__version__ = "0.1.0"
