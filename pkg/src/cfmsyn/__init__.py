"""Synthesis of monolithic constant-force compliant mechanisms.

Ground-structure topologies of curved members are meshed into quadrilateral
continua, analyzed by a geometrically nonlinear plane-stress solver with
frictionless penalty contact (self, rigid obstacles, flexible workpiece),
scored by force-deflection constancy objectives, and evolved with a
random-mutation hill climber.
"""

from .domain import (
    BoundsTable,
    DesignVector,
    DomainSpec,
    ExternalSurface,
    GroundStructure,
    NeoHookeanMaterial,
    Reinforcement,
    Support,
    Workpiece,
    build_ground_structure,
    mutate,
    random_design,
    remove_dangling_members,
    remove_intersecting_members,
    validate_candidate,
)
from .material import PlaneStressNeoHookean, elastic_to_neo_hookean, neo_hookean_to_elastic
from .meshing import MeshModel, MeshParams, MeshingError, mesh_candidate
from .model import AnalysisModel, candidate_model, dump_model, load_model
from .objectives import ObjectiveConfig, objective_value, segment_response
from .optimizer import PipelineContext, RmhcParams, evaluate, rmhc
from .solver import (
    BoundaryConditions,
    DeflectionHistory,
    LoadSchedule,
    SolverParams,
    first_contact_displacement,
    solve,
)

__version__ = "0.1.0"
