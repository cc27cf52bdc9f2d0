"""Mixed finite elements for the clamped plate (biharmonic) eigenproblem."""
from .assembly import MixedSystem, assemble_mixed, build_system
from .eigensolve import EigenPair, solve_generalized, stability_constant, subspace_gap
from .errors import PlateEigError
from .mesh import Triangulation, make_mesh, refine_uniform
from .multilevel import LevelHierarchy, build_hierarchy, multilevel_eigs
from .spaces import FESpace, build_prolongation, build_space
from .study import StudyConfig, StudyResult, run_study, summary_table

__all__ = [
    "EigenPair", "FESpace", "LevelHierarchy", "MixedSystem", "PlateEigError",
    "Triangulation", "assemble_mixed", "build_hierarchy", "build_prolongation",
    "build_space", "build_system", "make_mesh", "multilevel_eigs", "refine_uniform",
    "solve_generalized", "stability_constant", "subspace_gap",
    "StudyConfig", "StudyResult", "run_study", "summary_table",
]
__version__ = "0.1.0"
