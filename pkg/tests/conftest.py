import numpy as np
import pytest

from cfmsyn.domain import (
    BoundsTable,
    DesignVector,
    DomainSpec,
    NeoHookeanMaterial,
    Reinforcement,
    Support,
    Workpiece,
    _freeze_reinforcement,
    build_ground_structure,
)
from cfmsyn.material import PlaneStressNeoHookean
from cfmsyn.meshing import MeshParams, QUAD_WORKPIECE
from cfmsyn.objectives import ObjectiveConfig
from cfmsyn.optimizer import PipelineContext
from cfmsyn.solver import SolverParams

MECH_MAT = PlaneStressNeoHookean.from_elastic(20.0, 0.33)
WP_MAT = PlaneStressNeoHookean(0.376, 1.020)


@pytest.fixture(scope="session")
def one_block():
    """1x1-block playground: spec, ground structure, bounds."""
    bounds = BoundsTable()
    spec = DomainSpec(
        width=25.0,
        height=25.0,
        blocks_x=1,
        blocks_y=1,
        input_vertex=0,
        input_direction=(1.0, 0.0),
        output_vertices=(2,),
        output_direction=(1.0, 0.0),
        supports=(Support(1, "fixed"),),
    )
    return spec, build_ground_structure(spec, bounds), bounds


@pytest.fixture(scope="session")
def reference_problem():
    """The 4x3-block constant-output reference domain used across tests."""
    bounds = BoundsTable(
        end_slope=(-0.5, 0.5),
        width=(1.4, 2.0),
        thickness=(2.0, 5.0),
        vertex_x=(-5.0, 5.0),
        vertex_y=(-5.0, 5.0),
        input_force=(0.5, 5.0),
    )
    wp = Workpiece(
        shape="rect",
        size=(10.0, 24.0),
        material=NeoHookeanMaterial(0.376, 1.020),
        gap=1.9,
        placement=(113.9, 12.0),
        mesh_size=2.0,
        fixed_side="right",
    )
    spec = DomainSpec(
        width=100.0,
        height=100.0,
        blocks_x=4,
        blocks_y=3,
        input_vertex=0,
        input_direction=(1.0, 0.0),
        output_vertices=(16,),
        output_direction=(1.0, 0.0),
        supports=(
            Support(2, "fixed"),
            Support(3, "fixed"),
            Support(0, "roller", (0.0, 1.0)),
            Support(4, "roller", (0.0, 1.0)),
            Support(8, "roller", (0.0, 1.0)),
            Support(12, "roller", (0.0, 1.0)),
            Support(16, "roller", (0.0, 1.0)),
        ),
        workpiece=wp,
        reinforcements=(
            Reinforcement(16, (106.0, 0.0), width=2.0),
            Reinforcement((106.0, 0.0), (106.0, 10.0), width=2.0),
            Reinforcement((106.0, 10.0), (106.0, 20.0), width=2.0),
        ),
        symmetry="mirror-horizontal",
    )
    gs = build_ground_structure(spec, bounds)
    obj = ObjectiveConfig(
        kind="output_weighted",
        weight_slope=1e6,
        weight_range=1e2,
        weight_force=1e6,
        target_force=0.02,
        gate_factor=1.2,
    )
    return PipelineContext(
        spec=spec,
        gs=gs,
        bounds=bounds,
        mesh_params=MeshParams(),
        solver_params=SolverParams(n_steps=12, max_bisections=4, max_total_iterations=250),
        objective=obj,
        continuum=MECH_MAT,
    )


def design_with(gs, topology, slopes=0.0, widths=2.0, thickness=3.0, force=2.0, offsets=None):
    """Hand-built design vector over a ground structure."""
    n = gs.n_members
    t = np.zeros(n, np.uint8)
    t[list(topology)] = 1
    dv = DesignVector(
        topology=t,
        slopes=np.full((n, 2), float(slopes)),
        widths=np.full(n, float(widths)),
        thickness=float(thickness),
        input_force=float(force),
        vertex_offsets=np.zeros((gs.n_vertices, 2)) if offsets is None else np.asarray(offsets),
        surfaces=np.zeros((0, 7)),
    )
    return _freeze_reinforcement(dv, gs)


def as_workpiece_body(mesh):
    """Retag a plain mesh as workpiece body 1 (for hand-built fixtures)."""
    mesh.body[:] = 1
    mesh.node_body[:] = 1
    mesh.quad_kind[:] = QUAD_WORKPIECE
    mesh.node_kind[:] = QUAD_WORKPIECE
    for lp in mesh.loops:
        object.__setattr__(lp, "body", 1)
    return mesh
