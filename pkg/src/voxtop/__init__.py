"""voxtop: matrix-free 3D compliance minimization on structured voxel grids.

The state equation is solved by conjugate gradients preconditioned with a
geometric multigrid V cycle whose coarse operators are either exact Galerkin
triple products or rebuilt on the fly from averaged densities.
"""

from .element import (
    ElementStiffness,
    MaterialModel,
    element_gravity_load,
    simp_scale,
    simp_scale_derivative,
    unit_stiffness,
)
from .errors import (
    ConfigError,
    NumericalError,
    SetupError,
    SolverBreakdown,
    VolumeInfeasible,
)
from .grid import (
    BoundarySpec,
    Box,
    GravitySpec,
    Region,
    RegionMask,
    StructuredGrid,
    build_grid,
    classify_regions,
    element_nodes,
    make_boundary,
)
from .multigrid import MgHierarchy, build_hierarchy, max_feasible_levels
from .operator import OperatorState, apply, assemble_dense, diagonal, residual
from .optimize import (
    DensityField,
    FilterWeights,
    OptConfig,
    OptResult,
    Problem,
    RunRecord,
    build_filter,
    compliance,
    filter_sensitivities,
    oc_update,
    run,
    sensitivities,
    update_gravity_load,
)
from .solver import SolveReport, SolverConfig, mgcg_solve, pcg

__version__ = "0.1.0"
