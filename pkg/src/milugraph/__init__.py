"""MILU preconditioning on weighted graphs with local condition estimates."""

from .adaptive import (
    AdaptiveTree,
    ScalarField,
    build_root,
    fvm_matrix,
    random_tree,
    refine,
    sigma_field,
    smallest_cell,
    tree_order,
    uniform_refine,
)
from .krylov import (
    SolveReport,
    SpectralEstimate,
    condition_number,
    dense_eigen_oracle,
    jacobi_eigenvalues,
    lambda_max_power,
    lambda_min_inverse,
    pcg,
)
from .lecn import (
    LecnReport,
    lecn_bound,
    tau_direct,
    tau_recursive,
    theoretical_bound,
    write_tau_csv,
)
from .ordering import (
    VertexOrdering,
    lexicographic_order,
    partition,
    sector_order,
    validate_ordering,
)
from .precond import (
    Ilu0Preconditioner,
    IdentityPreconditioner,
    JacobiPreconditioner,
    MiluFactorization,
    MiluPreconditioner,
    Preconditioner,
    identity_preconditioner,
    ilu0_factor,
    jacobi_factor,
    milu_apply_inverse,
    milu_densify,
    milu_factor,
    milu_matvec,
    milu_preconditioner,
    residual_rowsums,
)
from .stencils import (
    HIFD22,
    IFD11,
    IFD22,
    SCHEMES,
    Domain,
    UniformGridSpec,
    WideStencilScheme,
    boundary_distance,
    box_domain,
    disk_domain,
    domain_from_name,
    gibou_matrix,
    ifd_matrix,
    sphere_domain,
    stencil_vector,
    unit_box_spec,
)
from .system import (
    SpdMSystem,
    assemble,
    densify,
    matvec,
    read_json,
    read_matrix_market,
    validate,
    write_json,
    write_matrix_market,
)

__version__ = "0.1.0"
