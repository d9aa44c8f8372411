"""Analysis model: mesh + constraints + load + contact, with text round-trip.

This is the unit the solver consumes and the geometry files store.  The text
format is line-oriented, whitespace-separated, uses repr() floats so files
reload bit-exactly, and is documented in docs/formats.md.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace

import numpy as np

from .contact import ContactPair, tributary_lengths
from .domain import DesignVector, DomainSpec, ExternalSurface, GroundStructure
from .material import PlaneStressNeoHookean
from .meshing import MeshModel, MeshParams, extract_boundary_loops, mesh_candidate
from .solver import (
    BoundaryConditions,
    DeflectionHistory,
    LoadSchedule,
    SolverParams,
    default_penalty_line_stiffness,
    solve,
)

MIN_SELF_CONTACT_NODES = 8  # loops shorter than this cannot fold onto themselves


@dataclass
class AnalysisModel:
    mesh: MeshModel
    materials: dict[int, PlaneStressNeoHookean]  # per body
    body_thickness: dict[int, float]
    bcs: BoundaryConditions
    schedule: LoadSchedule
    output_direction: tuple[float, float]
    surfaces: list[ExternalSurface] = field(default_factory=list)
    penalty_line: float | None = None  # N/mm per mm; None = solver default
    declared_gap: float | None = None

    def contact_pairs(self, params: SolverParams) -> list[ContactPair]:
        k_line = self.penalty_line
        if k_line is None:
            k_line = default_penalty_line_stiffness(
                self.mesh, self.materials, params.penalty_factor
            )
        return build_contact_pairs(self.mesh, k_line, self.surfaces)

    def run(self, params: SolverParams) -> DeflectionHistory:
        return solve(
            self.mesh,
            self.materials,
            self.bcs,
            replace(self.schedule, n_steps=params.n_steps),
            self.contact_pairs(params),
            params,
            output_direction=self.output_direction,
            body_thickness=self.body_thickness,
            declared_gap=self.declared_gap,
        )


def build_contact_pairs(
    mesh: MeshModel, k_line: float, surfaces: list[ExternalSurface]
) -> list[ContactPair]:
    """Self contact per mechanism loop, mechanism-workpiece both ways, and
    mechanism onto each rigid surface."""
    pairs: list[ContactPair] = []
    mech = [lp for lp in mesh.loops if lp.body == 0]
    outer = [lp for lp in mech if lp.is_outer]
    inners = [lp for lp in mech if not lp.is_outer]

    def loop_pair(lp, name):
        segs = np.stack([lp.nodes, np.roll(lp.nodes, -1)], axis=1)
        trib = tributary_lengths(mesh.nodes, lp.nodes)
        return ContactPair(
            group=name,
            kind="self",
            slave_nodes=lp.nodes,
            slave_k=k_line * trib,
            master_nodes=segs,
            slave_loop_pos=np.arange(len(lp.nodes)),
            self_loop_len=len(lp.nodes),
            slave_cap=0.75 * trib,
            slave_loops=[lp.nodes],
        )

    if outer and len(outer[0].nodes) >= MIN_SELF_CONTACT_NODES:
        pairs.append(loop_pair(outer[0], "self_outer"))
    for i, lp in enumerate(inners):
        if len(lp.nodes) >= MIN_SELF_CONTACT_NODES:
            pairs.append(loop_pair(lp, f"self_inner_{i}"))

    wp_loops = [lp for lp in mesh.loops if lp.body >= 1 and lp.is_outer]
    if outer and wp_loops:
        mech_loop = outer[0]
        mech_segs = np.stack([mech_loop.nodes, np.roll(mech_loop.nodes, -1)], axis=1)
        mech_trib = tributary_lengths(mesh.nodes, mech_loop.nodes)
        for lp in wp_loops:
            wp_segs = np.stack([lp.nodes, np.roll(lp.nodes, -1)], axis=1)
            wp_trib = tributary_lengths(mesh.nodes, lp.nodes)
            pairs.append(
                ContactPair(
                    group="workpiece",
                    kind="workpiece",
                    slave_nodes=mech_loop.nodes,
                    slave_k=k_line * mech_trib,
                    master_nodes=wp_segs,
                    wp_master=True,
                    slave_cap=0.75 * mech_trib,
                    slave_loops=[mech_loop.nodes],
                )
            )
            pairs.append(
                ContactPair(
                    group="workpiece",
                    kind="workpiece",
                    slave_nodes=lp.nodes,
                    slave_k=k_line * wp_trib,
                    master_nodes=mech_segs,
                    wp_slave=True,
                    slave_cap=0.75 * wp_trib,
                    slave_loops=[lp.nodes],
                )
            )

    if surfaces:
        slave_ids = np.concatenate([lp.nodes for lp in mech])
        trib_parts = [tributary_lengths(mesh.nodes, lp.nodes) for lp in mech]
        slave_k = k_line * np.concatenate(trib_parts)
        slave_cap = 0.75 * np.concatenate(trib_parts)
        for s_idx, srf in enumerate(surfaces):
            poly = srf.polygon()
            segs = np.stack([poly, np.roll(poly, -1, axis=0)], axis=1)
            pairs.append(
                ContactPair(
                    group=f"surface_{s_idx}",
                    kind="surface",
                    slave_nodes=slave_ids,
                    slave_k=slave_k,
                    master_nodes=None,
                    master_xy=segs,
                    slave_cap=slave_cap,
                    slave_loops=[lp.nodes for lp in mech],
                )
            )
    return pairs


def candidate_model(
    dv: DesignVector,
    gs: GroundStructure,
    spec: DomainSpec,
    mesh_params: MeshParams,
    continuum: PlaneStressNeoHookean,
    n_steps: int = 20,
    member_ids=None,
) -> tuple[AnalysisModel, dict]:
    """Mesh a candidate and wrap it with its loads, constraints and contact.

    Raises MeshingError for unmeshable geometry; the evaluation pipeline
    turns that into a penalty.
    """
    mesh, meta = mesh_candidate(dv, gs, spec, mesh_params, member_ids=member_ids)
    fixed: list[int] = list(meta["workpiece_fixed"])
    rollers: list[tuple[list[int], tuple[float, float]]] = []
    for support, ids in meta["support_nodes"]:
        if support.kind == "fixed":
            fixed.extend(ids)
        elif support.kind == "roller":
            rollers.append((ids, support.normal))
        else:
            raise ValueError(f"unknown support kind {support.kind!r}")
    materials = {0: continuum}
    body_thickness = {0: float(dv.thickness)}
    if spec.workpiece is not None:
        materials[1] = PlaneStressNeoHookean(
            spec.workpiece.material.c10, spec.workpiece.material.d1
        )
        body_thickness[1] = spec.workpiece.thickness
    model = AnalysisModel(
        mesh=mesh,
        materials=materials,
        body_thickness=body_thickness,
        bcs=BoundaryConditions(fixed_nodes=sorted(set(fixed)), rollers=rollers),
        schedule=LoadSchedule(
            node=meta["input_node"],
            direction=spec.input_direction,
            peak=float(dv.input_force),
            n_steps=n_steps,
        ),
        output_direction=spec.output_direction,
        surfaces=dv.active_surfaces(),
        declared_gap=spec.workpiece.gap if spec.workpiece is not None else None,
    )
    return model, meta


def _r(x) -> str:
    """repr of a python float: shortest digits that reload bit-exactly."""
    return repr(float(x))


def dump_model(model: AnalysisModel) -> str:
    """Serialize to the structured-text geometry format (bit-exact floats)."""
    m = model.mesh
    out = io.StringIO()
    w = out.write
    w("cfm-model 1\n")
    w(f"thickness {_r(m.thickness)}\n")
    w(f"output_direction {_r(model.output_direction[0])} {_r(model.output_direction[1])}\n")
    w(f"declared_gap {'none' if model.declared_gap is None else _r(model.declared_gap)}\n")
    w(f"penalty_line {'none' if model.penalty_line is None else _r(model.penalty_line)}\n")
    for b in sorted(model.materials):
        mat = model.materials[b]
        th = model.body_thickness.get(b, m.thickness)
        w(f"material {b} {_r(mat.c10)} {_r(mat.d1)} {_r(th)}\n")
    s = model.schedule
    w(f"schedule {s.node} {_r(s.direction[0])} {_r(s.direction[1])} {_r(s.peak)} {s.n_steps}\n")
    for nid, direction in s.extra_loads:
        w(f"extra_load {nid} {_r(direction[0])} {_r(direction[1])}\n")
    w(f"nodes {m.n_nodes}\n")
    for i in range(m.n_nodes):
        w(
            f"{_r(m.nodes[i, 0])} {_r(m.nodes[i, 1])} "
            f"{int(m.node_kind[i])} {int(m.node_tag[i])} {int(m.node_body[i])}\n"
        )
    w(f"quads {m.n_quads}\n")
    for i in range(m.n_quads):
        q = m.quads[i]
        w(
            f"{q[0]} {q[1]} {q[2]} {q[3]} "
            f"{int(m.quad_kind[i])} {int(m.quad_tag[i])} {int(m.body[i])}\n"
        )
    w(f"loops {len(m.loops)}\n")
    for lp in m.loops:
        ids = " ".join(str(int(n)) for n in lp.nodes)
        w(f"{'outer' if lp.is_outer else 'inner'} {lp.body} {len(lp.nodes)} {ids}\n")
    w("fixed " + " ".join(str(int(n)) for n in model.bcs.fixed_nodes) + "\n")
    for nodes, normal in model.bcs.rollers:
        ids = " ".join(str(int(n)) for n in nodes)
        w(f"roller {_r(normal[0])} {_r(normal[1])} {ids}\n")
    for srf in model.surfaces:
        w(
            f"surface {srf.shape} {_r(srf.center[0])} {_r(srf.center[1])} "
            f"{_r(srf.rotation)} {_r(srf.params[0])} {_r(srf.params[1])}\n"
        )
    return out.getvalue()


def load_model(text: str) -> AnalysisModel:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    it = iter(lines)
    head = next(it).split()
    if head[:2] != ["cfm-model", "1"]:
        raise ValueError("not a cfm-model version 1 file")
    thickness = output_direction = declared_gap = penalty_line = schedule = None
    materials: dict[int, PlaneStressNeoHookean] = {}
    body_thickness: dict[int, float] = {}
    nodes = quads = None
    node_meta = []
    quad_meta = []
    fixed: list[int] = []
    rollers = []
    surfaces = []
    loops_declared = 0
    for ln in it:
        tok = ln.split()
        key = tok[0]
        if key == "thickness":
            thickness = float(tok[1])
        elif key == "output_direction":
            output_direction = (float(tok[1]), float(tok[2]))
        elif key == "declared_gap":
            declared_gap = None if tok[1] == "none" else float(tok[1])
        elif key == "penalty_line":
            penalty_line = None if tok[1] == "none" else float(tok[1])
        elif key == "material":
            materials[int(tok[1])] = PlaneStressNeoHookean(float(tok[2]), float(tok[3]))
            body_thickness[int(tok[1])] = float(tok[4])
        elif key == "schedule":
            schedule = LoadSchedule(
                node=int(tok[1]),
                direction=(float(tok[2]), float(tok[3])),
                peak=float(tok[4]),
                n_steps=int(tok[5]),
            )
        elif key == "extra_load":
            schedule.extra_loads.append((int(tok[1]), (float(tok[2]), float(tok[3]))))
        elif key == "nodes":
            n = int(tok[1])
            nodes = np.empty((n, 2))
            for i in range(n):
                t = next(it).split()
                nodes[i] = (float(t[0]), float(t[1]))
                node_meta.append((int(t[2]), int(t[3]), int(t[4])))
        elif key == "quads":
            n = int(tok[1])
            quads = np.empty((n, 4), np.int64)
            for i in range(n):
                t = next(it).split()
                quads[i] = [int(x) for x in t[:4]]
                quad_meta.append((int(t[4]), int(t[5]), int(t[6])))
        elif key == "loops":
            loops_declared = int(tok[1])
            for _ in range(loops_declared):
                next(it)  # loops are recomputed from the quads below
        elif key == "fixed":
            fixed = [int(x) for x in tok[1:]]
        elif key == "roller":
            rollers.append(([int(x) for x in tok[3:]], (float(tok[1]), float(tok[2]))))
        elif key == "surface":
            surfaces.append(
                ExternalSurface(
                    shape=tok[1],
                    center=(float(tok[2]), float(tok[3])),
                    rotation=float(tok[4]),
                    params=(float(tok[5]), float(tok[6])),
                )
            )
        else:
            raise ValueError(f"unknown record {key!r} in model file")
    nm = np.array(node_meta, np.int64).reshape(-1, 3)
    qm = np.array(quad_meta, np.int64).reshape(-1, 3)
    mesh = MeshModel(
        nodes=nodes,
        quads=quads,
        quad_kind=qm[:, 0].astype(np.int8),
        quad_tag=qm[:, 1],
        body=qm[:, 2].astype(np.int8),
        node_kind=nm[:, 0].astype(np.int8),
        node_tag=nm[:, 1],
        node_body=nm[:, 2].astype(np.int8),
        thickness=thickness,
    )
    mesh.loops = extract_boundary_loops(mesh)
    if loops_declared and len(mesh.loops) != loops_declared:
        raise ValueError("stored loop count disagrees with the mesh")
    return AnalysisModel(
        mesh=mesh,
        materials=materials,
        body_thickness=body_thickness,
        bcs=BoundaryConditions(fixed_nodes=fixed, rollers=rollers),
        schedule=schedule,
        output_direction=output_direction,
        surfaces=surfaces,
        penalty_line=penalty_line,
        declared_gap=declared_gap,
    )
