"""Block-cyclic multi-device dense linear algebra on a simulated runtime.

Matrices are distributed over simulated devices one column-tile at a
time, redistributed in place via permutation-cycle decomposition, and
factored with distributed Cholesky-based routines (solve, inverse,
Hermitian eigendecomposition).  Everything runs on host memory arenas
that model device allocation, peer-to-peer copies and address-space
isolation, so layouts and transfer schedules can be verified exactly.
"""

from .core import (
    DescriptorError,
    ElementType,
    MatrixDescriptor,
    MatrixFileError,
    RhsDescriptor,
    Structure,
    TileSpec,
    read_matrix,
    validate_descriptor,
    validate_tile,
    write_matrix,
)
from .layout import (
    ColumnPermutation,
    RedistributionPlan,
    build_permutation,
    decompose_cycles,
    device_column_counts,
    device_column_offsets,
    execute_plan,
    invert_plan,
    map_column,
    serialize_plan,
)
from .runtime import (
    SCRATCH_DEVICE,
    ArenaExhaustedError,
    BufferHandle,
    ConcurrentCallError,
    CopyRecord,
    DeviceMesh,
    HandleDomainError,
    HandleRegistry,
    RegistryError,
    StaleHandleError,
    audit_copy_order,
    replay_log,
    write_trace,
)
from .solvers import (
    ConvergenceError,
    DistributedMatrix,
    FactorizationResult,
    NotPositiveDefiniteError,
    Timings,
    create_distributed,
    eigh_hermitian,
    free_distributed,
    gather_array,
    invert_positive_definite,
    potrf,
    potri,
    potrs,
    redistribute_in,
    redistribute_out,
    solve_positive_definite,
    syevd,
    workspace_nbytes,
    write_array,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # descriptors and files
    "DescriptorError",
    "ElementType",
    "MatrixDescriptor",
    "MatrixFileError",
    "RhsDescriptor",
    "Structure",
    "TileSpec",
    "read_matrix",
    "validate_descriptor",
    "validate_tile",
    "write_matrix",
    # layout
    "ColumnPermutation",
    "RedistributionPlan",
    "build_permutation",
    "decompose_cycles",
    "device_column_counts",
    "device_column_offsets",
    "execute_plan",
    "invert_plan",
    "map_column",
    "serialize_plan",
    # runtime
    "SCRATCH_DEVICE",
    "ArenaExhaustedError",
    "BufferHandle",
    "ConcurrentCallError",
    "CopyRecord",
    "DeviceMesh",
    "HandleDomainError",
    "HandleRegistry",
    "RegistryError",
    "StaleHandleError",
    "audit_copy_order",
    "replay_log",
    "write_trace",
    # solvers
    "ConvergenceError",
    "DistributedMatrix",
    "FactorizationResult",
    "NotPositiveDefiniteError",
    "Timings",
    "create_distributed",
    "eigh_hermitian",
    "free_distributed",
    "gather_array",
    "invert_positive_definite",
    "potrf",
    "potri",
    "potrs",
    "redistribute_in",
    "redistribute_out",
    "solve_positive_definite",
    "syevd",
    "workspace_nbytes",
    "write_array",
]
