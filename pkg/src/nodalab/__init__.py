"""Numerical laboratory for Dirichlet eigenfunctions, nodal sets and doubling indices.

Submodules
----------
geometry    domains, Lipschitz boundary patches, balls, cubes and clipping
meshing     constrained Delaunay meshes and uniform refinement
spectral    P1 finite elements and closed-form eigenpairs
fields      scalar fields, harmonic extensions and suprema over balls
nodal       zero-set extraction and its length inside balls and cubes
doubling    masses, doubling indices, maximal doubling indices, chains of balls
verify      falsification experiments with CSV and JSON reports
cli         command-line entry point
"""

from .doubling import (ChainReport, DoublingReport, chain_of_balls, doubling_index,
                       doubling_profile, mass, max_doubling)
from .fields import (DiskMode, ExtensionField, FEMField, FunctionField, HarmonicPolynomialField,
                     IntervalMode, RectangleMode, ScalarField, make_extension, sup_on_ball)
from .geometry import (Ball, Cube, HalfPlane, LipschitzPatch, Plane, PolygonDomain, clip_cell,
                       classify, standard_construction, star_shaped_check)
from .meshing import TriangleMesh, refine, triangulate
from .nodal import NodalSet, extract_nodal, measure_in_ball, measure_in_cube
from .spectral import EigenPair, assemble, eigenfields, solve_eigen
from .verify import CheckReport

__version__ = "0.1.0"

__all__ = [
    "Ball", "ChainReport", "CheckReport", "Cube", "DiskMode", "DoublingReport", "EigenPair",
    "ExtensionField", "FEMField", "FunctionField", "HalfPlane", "HarmonicPolynomialField",
    "IntervalMode", "LipschitzPatch", "NodalSet", "Plane", "PolygonDomain", "RectangleMode",
    "ScalarField", "TriangleMesh", "assemble", "chain_of_balls", "classify", "clip_cell",
    "doubling_index", "doubling_profile", "eigenfields", "extract_nodal", "make_extension",
    "mass", "max_doubling", "measure_in_ball", "measure_in_cube", "refine", "solve_eigen",
    "standard_construction", "star_shaped_check", "sup_on_ball", "triangulate",
]
