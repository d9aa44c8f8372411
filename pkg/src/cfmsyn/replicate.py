"""Symmetric replication of an evolved half-mechanism.

The half model is optionally scaled, mirrored about its symmetry line, the
two copies are pulled apart by a configurable gap, and rectangular extension
blocks are meshed across the gap at every roller-supported junction sitting
on the symmetry line (those rollers modeled the mirror constraint during
synthesis).  The result is one monolithic mesh whose seam holes become
ordinary inner loops, so the standard self-contact declaration covers them.

The workpiece is mirrored too and kept as a second flexible body; the
actuation is applied at both half inputs, which is why the full mechanism
needs roughly twice the input force of its half.
"""

from __future__ import annotations

import numpy as np

from .meshing import (
    MeshingError,
    MeshModel,
    QUAD_EXTENSION,
    extract_boundary_loops,
)
from .model import AnalysisModel
from .solver import BoundaryConditions, LoadSchedule


def _reflect(axis: str):
    if axis == "mirror-horizontal":
        return np.array([1.0, -1.0]), np.array([0.0, 1.0])  # flip y; shift along y
    if axis == "mirror-vertical":
        return np.array([-1.0, 1.0]), np.array([1.0, 0.0])
    raise ValueError(f"cannot replicate symmetry {axis!r}")


def mirror_model(
    model: AnalysisModel,
    meta: dict,
    axis: str,
    gap: float = 5.0,
    scale: float = 1.0,
    roller_vertices=None,
) -> AnalysisModel:
    """Full mechanism from a half model and its meshing metadata.

    `meta` is the metadata dict produced by mesh_candidate for the half.
    Requires gap > 0: the halves join only through the extension blocks.
    """
    if gap <= 0:
        raise MeshingError("replication needs a positive gap between the halves")
    if scale <= 0:
        raise MeshingError("scale factor must be positive")
    flip, shift_dir = _reflect(axis)
    mesh = model.mesh
    nodes = mesh.nodes * scale
    n = len(nodes)

    nodes_orig = nodes + 0.5 * gap * shift_dir
    nodes_mirr = nodes * flip - 0.5 * gap * shift_dir
    all_nodes = np.vstack([nodes_orig, nodes_mirr])

    quads_orig = mesh.quads
    quads_mirr = mesh.quads[:, ::-1] + n  # reversed winding survives reflection
    body_mirr = np.where(mesh.body >= 1, mesh.body + 1, mesh.body)

    ext_quads: list[tuple[int, int, int, int]] = []
    ext_tags: list[int] = []
    new_nodes: list[tuple[float, float]] = []
    areas = np.abs(mesh.quad_areas())
    el_size = float(np.sqrt(np.median(areas))) * scale

    junctions = meta["junctions"]
    if roller_vertices is None:
        roller_vertices = [s.vertex for s, _ in meta["support_nodes"] if s.kind == "roller"]
    made_extension = False
    for v in sorted(set(roller_vertices)):
        if v not in junctions:
            continue
        jn = junctions[v]
        center = jn.center * scale
        axis_dist = abs(center @ shift_dir)
        if axis_dist > jn.radius * scale + 1e-9:
            continue  # roller junction away from the symmetry line
        rim = np.array(jn.rim_nodes, int)
        d = nodes[rim] - center
        norm = np.linalg.norm(d, axis=1)
        norm[norm == 0] = 1.0
        facing = (d / norm[:, None]) @ (-shift_dir)
        sel = rim[facing >= 0.45]
        if len(sel) < 2:
            raise MeshingError(f"no axis-facing rim nodes at roller junction {v}")
        tangent = np.array([-shift_dir[1], shift_dir[0]])
        order = np.argsort(nodes[sel] @ tangent)
        sel = sel[order]
        n_rows = max(1, int(round(gap / max(el_size, 1e-9))))
        top = nodes_orig[sel]
        bot = nodes_mirr[sel]
        prev = list(sel)
        for r in range(1, n_rows + 1):
            t = r / n_rows
            if r == n_rows:
                cur = [int(s) + n for s in sel]
            else:
                cur = []
                for p0, p1 in zip(top, bot):
                    new_nodes.append(tuple(p0 + t * (p1 - p0)))
                    cur.append(2 * n + len(new_nodes) - 1)
            for k in range(len(sel) - 1):
                ext_quads.append((prev[k], cur[k], cur[k + 1], prev[k + 1]))
                ext_tags.append(v)
            prev = cur
        made_extension = True
    if not made_extension:
        raise MeshingError("no roller junction on the symmetry line to bridge the halves")

    if new_nodes:
        all_nodes = np.vstack([all_nodes, np.array(new_nodes)])
    quads = np.vstack([quads_orig, quads_mirr, np.array(ext_quads, np.int64).reshape(-1, 4)])
    quad_kind = np.concatenate(
        [mesh.quad_kind, mesh.quad_kind, np.full(len(ext_quads), QUAD_EXTENSION, np.int8)]
    )
    quad_tag = np.concatenate([mesh.quad_tag, mesh.quad_tag, np.array(ext_tags, np.int64)])
    body = np.concatenate([mesh.body, body_mirr, np.zeros(len(ext_quads), np.int8)])
    node_kind = np.concatenate(
        [mesh.node_kind, mesh.node_kind, np.full(len(new_nodes), QUAD_EXTENSION, np.int8)]
    )
    node_tag = np.concatenate([mesh.node_tag, mesh.node_tag, np.zeros(len(new_nodes), np.int64)])
    node_body = np.concatenate(
        [mesh.node_body,
         np.where(mesh.node_body >= 1, mesh.node_body + 1, mesh.node_body),
         np.zeros(len(new_nodes), np.int8)]
    )

    full = MeshModel(
        nodes=all_nodes,
        quads=quads,
        quad_kind=quad_kind,
        quad_tag=quad_tag,
        body=body,
        node_kind=node_kind,
        node_tag=node_tag,
        node_body=node_body,
        thickness=mesh.thickness,
    )
    jac = full.corner_jacobians()
    if np.any(jac.min(axis=1) <= 0):
        # extension winding depends on the rim ordering; flip if needed
        bad = np.nonzero(jac.min(axis=1) <= 0)[0]
        ext_range = np.arange(len(quads_orig) + len(quads_mirr), len(quads))
        if np.all(np.isin(bad, ext_range)):
            full.quads[ext_range] = full.quads[ext_range][:, ::-1]
            jac = full.corner_jacobians()
        if np.any(jac.min(axis=1) <= 0):
            raise MeshingError("replication produced an inverted quad")
    full.loops = extract_boundary_loops(full)

    fixed = list(model.bcs.fixed_nodes) + [int(i) + n for i in model.bcs.fixed_nodes]
    direction = np.asarray(model.schedule.direction, float)
    mirrored_dir = direction * flip
    schedule = LoadSchedule(
        node=model.schedule.node,
        direction=tuple(direction),
        peak=model.schedule.peak,
        n_steps=model.schedule.n_steps,
        extra_loads=[(model.schedule.node + n, tuple(mirrored_dir))],
    )
    materials = dict(model.materials)
    body_thickness = dict(model.body_thickness)
    for b in list(model.materials):
        if b >= 1:
            materials[b + 1] = model.materials[b]
            body_thickness[b + 1] = model.body_thickness.get(b, mesh.thickness)
    surfaces = []
    for srf in model.surfaces:
        surfaces.append(_transform_surface(srf, scale, np.ones(2), 0.5 * gap * shift_dir))
        surfaces.append(_transform_surface(srf, scale, flip, -0.5 * gap * shift_dir))
    return AnalysisModel(
        mesh=full,
        materials=materials,
        body_thickness=body_thickness,
        bcs=BoundaryConditions(fixed_nodes=sorted(set(fixed)), rollers=[]),
        schedule=schedule,
        output_direction=model.output_direction,
        surfaces=surfaces,
        penalty_line=model.penalty_line,
        declared_gap=None if model.declared_gap is None else model.declared_gap * scale,
    )


def _transform_surface(srf, scale, flip, shift):
    from .domain import ExternalSurface

    center = np.asarray(srf.center, float) * scale * flip + shift
    mirrored = flip[0] * flip[1] < 0
    return ExternalSurface(
        shape=srf.shape,
        center=(float(center[0]), float(center[1])),
        rotation=-srf.rotation if mirrored else srf.rotation,
        params=(srf.params[0] * scale, srf.params[1] * scale),
    )
