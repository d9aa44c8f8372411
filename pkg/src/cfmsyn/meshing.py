"""Quadrilateral meshing of candidate designs.

Pipeline per candidate: trim each active member's centerline where it meets
the junction discs at its end vertices, mesh the trimmed strip with
length-major quads, mesh every junction disc so that the incident strips'
end rows land exactly on disc rim nodes (watertight stitching), then shrink
the junctions by pulling the free rim nodes onto the envelope of the
incident strips while keeping every quad valid.  The flexible workpiece is
meshed separately (structured grid or polar O-grid) as its own body.

All candidate-dependent failures raise MeshingError; the evaluation pipeline
converts those into penalties instead of repairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import DesignVector, DomainSpec, GroundStructure, Workpiece
from .hermite import MemberCurve, polygon_area, unit_normals

QUAD_MEMBER, QUAD_JUNCTION, QUAD_WORKPIECE, QUAD_EXTENSION = 0, 1, 2, 3
KIND_NAMES = {QUAD_MEMBER: "member", QUAD_JUNCTION: "junction",
              QUAD_WORKPIECE: "workpiece", QUAD_EXTENSION: "extension"}


class MeshingError(RuntimeError):
    """Candidate geometry cannot be meshed; penalized downstream."""


@dataclass
class MeshParams:
    n_el: int = 20  # elements along the member length
    n_ew: int = 4  # elements across the member width
    junction_radius_factor: float = 1.25  # times max incident half-width
    junction_gap_abs_min: float = 0.04  # rad, hard floor between exit directions
    junction_radius_cap: float = 0.45  # times the shortest incident chord
    arc_pinch_margin: float = 0.45  # fraction of the angular gap an arc may take
    arc_min_fraction: float = 0.3  # smallest tolerated arc vs natural width span
    width_blend_rows: int = 4  # strip rows over which a pinched end recovers width
    clearance_margin: float = 0.1  # mm kept free between unrelated strips
    min_trim_span: float = 0.02  # parameter span a trimmed member must keep
    compress_iters: int = 10
    compress_step: float = 0.5
    compress_floor: float = 0.45  # times disc radius, inner compression target
    jacobian_keep: float = 0.05  # times initial min jacobian, per spec
    intersect_samples: int = 64


@dataclass(frozen=True)
class Loop:
    nodes: np.ndarray  # ordered node cycle
    body: int
    is_outer: bool
    area: float  # signed shoelace area


@dataclass
class MeshModel:
    """Immutable-by-convention quadrilateral mesh with provenance and loops."""

    nodes: np.ndarray  # (n, 2)
    quads: np.ndarray  # (m, 4) counterclockwise
    quad_kind: np.ndarray  # (m,) QUAD_* codes
    quad_tag: np.ndarray  # (m,) member id / junction vertex id / body index
    body: np.ndarray  # (m,) 0 = mechanism, >= 1 = workpiece bodies
    node_kind: np.ndarray  # (n,)
    node_tag: np.ndarray  # (n,)
    node_body: np.ndarray  # (n,)
    thickness: float
    loops: list[Loop] = field(default_factory=list)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_quads(self) -> int:
        return len(self.quads)

    def quad_areas(self) -> np.ndarray:
        p = self.nodes[self.quads]
        x, y = p[..., 0], p[..., 1]
        xn, yn = np.roll(x, -1, axis=1), np.roll(y, -1, axis=1)
        return 0.5 * np.sum(x * yn - y * xn, axis=1)

    def corner_jacobians(self, quad_idx=None) -> np.ndarray:
        """Cross product of the two edges at each quad corner, (m, 4)."""
        q = self.quads if quad_idx is None else self.quads[quad_idx]
        p = self.nodes[q]
        e_next = np.roll(p, -1, axis=1) - p
        e_prev = np.roll(p, 1, axis=1) - p
        return e_next[..., 0] * e_prev[..., 1] - e_next[..., 1] * e_prev[..., 0]

    def mechanism_loops(self) -> list[Loop]:
        return [lp for lp in self.loops if lp.body == 0]

    def workpiece_loops(self) -> list[Loop]:
        return [lp for lp in self.loops if lp.body >= 1]


def hermite_strip(
    curve: MemberCurve,
    n_el: int,
    n_ew: int,
    t_start: float = 0.0,
    t_end: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Standalone quad strip over a centerline span: nodes, quads (length-major).

    Raises MeshingError when the offset construction folds over (centerline
    curvature radius below half the width).
    """
    if n_el < 1 or n_ew < 1 or curve.width <= 0:
        raise MeshingError("strip needs n_el >= 1, n_ew >= 1 and positive width")
    ts = np.linspace(t_start, t_end, n_el + 1)
    pos, tan = curve.evaluate(ts)
    nrm = unit_normals(tan)
    offsets = np.linspace(-0.5 * curve.width, 0.5 * curve.width, n_ew + 1)
    nodes = (pos[:, None, :] + offsets[None, :, None] * nrm[:, None, :]).reshape(-1, 2)
    idx = np.arange((n_el + 1) * (n_ew + 1)).reshape(n_el + 1, n_ew + 1)
    quads = np.stack(
        [
            idx[:-1, :-1].ravel(),
            idx[1:, :-1].ravel(),
            idx[1:, 1:].ravel(),
            idx[:-1, 1:].ravel(),
        ],
        axis=1,
    )
    p = nodes[quads]
    e_next = np.roll(p, -1, axis=1) - p
    e_prev = np.roll(p, 1, axis=1) - p
    jac = e_next[..., 0] * e_prev[..., 1] - e_next[..., 1] * e_prev[..., 0]
    if np.any(jac <= 0):
        raise MeshingError("strip offset self-overlaps (width exceeds curvature radius)")
    return nodes, quads


class _NodeBank:
    def __init__(self):
        self.xy: list[tuple[float, float]] = []
        self.kind: list[int] = []
        self.tag: list[int] = []
        self.body: list[int] = []

    def add(self, x: float, y: float, kind: int, tag: int, body: int) -> int:
        self.xy.append((float(x), float(y)))
        self.kind.append(kind)
        self.tag.append(tag)
        self.body.append(body)
        return len(self.xy) - 1


@dataclass
class _Junction:
    vertex: int
    center: np.ndarray
    radius: float
    center_node: int = -1
    rim_nodes: list[int] = field(default_factory=list)  # cyclic, by angle
    rim_movable: list[bool] = field(default_factory=list)
    ring_nodes: list[int] = field(default_factory=list)
    incident: list[tuple[float, float]] = field(default_factory=list)  # (exit angle, width)
    quad_rows: list[int] = field(default_factory=list)  # indices into global quad list
    trims: dict = field(default_factory=dict)  # (member, at_start) -> trim parameter
    ring_factor: list[float] = field(default_factory=list)


def _trim_parameter(curve: MemberCurve, at_start: bool, radius: float, samples: int = 256):
    """First parameter (from the given end) where the centerline leaves the disc."""
    ts = np.linspace(0.0, 1.0, samples + 1)
    pos, _ = curve.evaluate(ts)
    center = pos[0] if at_start else pos[-1]
    d = np.linalg.norm(pos - center, axis=1)
    if at_start:
        beyond = np.nonzero(d >= radius)[0]
        if len(beyond) == 0:
            return None
        i = beyond[0]
        lo, hi = ts[i - 1], ts[i]
    else:
        beyond = np.nonzero(d[::-1] >= radius)[0]
        if len(beyond) == 0:
            return None
        i = len(ts) - 1 - beyond[0]
        lo, hi = ts[i], ts[i + 1]

    def dist(t):
        p, _ = curve.evaluate(np.array([t]))
        return np.linalg.norm(p[0] - center) - radius

    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if at_start:
            if dist(mid) < 0:
                lo = mid
            else:
                hi = mid
        else:
            if dist(mid) < 0:
                hi = mid
            else:
                lo = mid
    return 0.5 * (lo + hi)


def _exit_angle(curve: MemberCurve, at_start: bool, t: float, center: np.ndarray) -> float:
    pos, _ = curve.evaluate(np.array([t]))
    v = pos[0] - center
    return float(np.arctan2(v[1], v[0]))


def mesh_candidate(
    dv: DesignVector,
    gs: GroundStructure,
    spec: DomainSpec,
    params: MeshParams,
    member_ids=None,
) -> tuple[MeshModel, dict]:
    """Mesh the given members (default: all active) plus junctions and workpiece.

    Returns the mesh and a metadata dict with the input node, per-support
    node lists, workpiece restraint nodes and per-vertex junction data.
    """
    members = list(dv.active_members()) if member_ids is None else sorted(member_ids)
    if not members:
        raise MeshingError("no members to mesh")
    curves = {m: dv.member_curve(gs, m) for m in members}
    pos = dv.vertex_positions(gs)

    # vertices that receive a junction disc, each with its incident member ends
    incidence: dict[int, list[tuple[int, bool]]] = {}
    for m in members:
        a, b = gs.members[m]
        incidence.setdefault(int(a), []).append((m, True))
        incidence.setdefault(int(b), []).append((m, False))

    junctions: dict[int, _Junction] = {}
    arc_half: dict[tuple[int, bool], float] = {}  # pinched rim arc half-angles
    for v in sorted(incidence):
        ends = incidence[v]
        widths = [curves[m].width for m, _ in ends]
        if len(ends) == 1:
            radius = 0.5 * widths[0]
        else:
            radius = params.junction_radius_factor * 0.5 * max(widths)
        chord_cap = params.junction_radius_cap * min(
            curves[m].chord_length() for m, _ in ends
        )
        trims: dict[tuple[int, bool], float] = {}
        min_gap = np.full(len(ends), 2 * np.pi)
        for _ in range(5):
            angles = []
            for m, at_start in ends:
                t = _trim_parameter(curves[m], at_start, radius)
                if t is None:
                    raise MeshingError(f"member {m} swallowed by junction at vertex {v}")
                trims[(m, at_start)] = t
                angles.append(_exit_angle(curves[m], at_start, t, pos[v]))
            if len(ends) == 1:
                break
            order = np.argsort(angles)
            min_gap = np.full(len(ends), 2 * np.pi)
            for k in range(len(order)):
                i, j = order[k], order[(k + 1) % len(order)]
                gap = (angles[j] - angles[i]) % (2 * np.pi)
                if gap <= params.junction_gap_abs_min:
                    raise MeshingError(f"members meet at vertex {v} at nearly equal angles")
                min_gap[i] = min(min_gap[i], gap)
                min_gap[j] = min(min_gap[j], gap)
            # radius at which every pinched arc keeps arc_min_fraction of its
            # natural span: alpha_i = min(w_i/2r, margin*min_gap_i) >= frac*w_i/2r
            need = radius
            for i, (m, _) in enumerate(ends):
                need = max(
                    need,
                    params.arc_min_fraction
                    * widths[i]
                    / (2.0 * params.arc_pinch_margin * min_gap[i]),
                )
            if need <= radius * (1 + 1e-9):
                break
            if need > chord_cap:
                raise MeshingError(f"junction at vertex {v} grows beyond the member scale")
            radius = need
        for i, (m, at_start) in enumerate(ends):
            natural = widths[i] / (2.0 * radius)
            alpha = min(natural, params.arc_pinch_margin * float(min_gap[i]))
            if alpha < params.arc_min_fraction * natural * (1 - 1e-9):
                raise MeshingError(f"rim arcs too crowded at vertex {v}")
            arc_half[(m, at_start)] = alpha
        junctions[v] = _Junction(vertex=v, center=pos[v].copy(), radius=radius, trims=dict(trims))

    # junction discs must not collide with each other
    vs = sorted(junctions)
    for i in range(len(vs)):
        for j in range(i + 1, len(vs)):
            ji, jj = junctions[vs[i]], junctions[vs[j]]
            if np.linalg.norm(ji.center - jj.center) < ji.radius + jj.radius:
                raise MeshingError(f"junction discs at vertices {vs[i]} and {vs[j]} overlap")

    bank = _NodeBank()
    quads: list[tuple[int, int, int, int]] = []
    quad_kind: list[int] = []
    quad_tag: list[int] = []
    quad_body: list[int] = []

    def push_quad(n0, n1, n2, n3, kind, tag, body=0):
        quads.append((n0, n1, n2, n3))
        quad_kind.append(kind)
        quad_tag.append(tag)
        quad_body.append(body)
        return len(quads) - 1

    n_ew = params.n_ew
    # member end rows on the junction rims, keyed by (member, at_start)
    end_rows: dict[tuple[int, bool], list[int]] = {}
    # build rims: arcs in lateral row order, then fillers, sorted by angle
    for v in vs:
        jn = junctions[v]
        ends = incidence[v]
        r = jn.radius
        arcs = []  # (exit angle, per-lateral-station angles, member, at_start)
        for m, at_start in ends:
            t = jn.trims[(m, at_start)]
            phi = _exit_angle(curves[m], at_start, t, jn.center)
            alpha = arc_half[(m, at_start)]
            sgn = 1.0 if at_start else -1.0
            angles = phi + sgn * alpha * np.linspace(-1.0, 1.0, n_ew + 1)
            jn.incident.append((phi, curves[m].width))
            arcs.append((phi, angles, m, at_start))
        arcs.sort(key=lambda a: a[0] % (2 * np.pi))

        spacing = np.median([abs(a[1][1] - a[1][0]) for a in arcs])
        rim_entries: list[tuple[float, int, bool]] = []  # (angle, node id, movable)
        gap_fills: list[tuple[int, list[float]]] = []
        for k, (phi, angles, m, at_start) in enumerate(arcs):
            ids_for_angles = []
            for ang in angles:
                nid = bank.add(
                    jn.center[0] + r * np.cos(ang),
                    jn.center[1] + r * np.sin(ang),
                    QUAD_JUNCTION,
                    v,
                    0,
                )
                ids_for_angles.append(nid)
            end_rows[(m, at_start)] = ids_for_angles
            for ang, nid in zip(angles, ids_for_angles):
                rim_entries.append((ang % (2 * np.pi), nid, False))
            # gap from this arc's counterclockwise end to the next arc (cyclic)
            nxt = arcs[(k + 1) % len(arcs)]
            a_end = angles[-1] if at_start else angles[0]
            a_next = nxt[1][0] if nxt[3] else nxt[1][-1]
            gap = (a_next - a_end) % (2 * np.pi)
            n_fill = max(0, int(round(gap * r / spacing)) - 1)
            gap_fills.append((k, [a_end + gap * (f + 1) / (n_fill + 1) for f in range(n_fill)]))

        n_rim = sum(n_ew + 1 for _ in arcs) + sum(len(f[1]) for f in gap_fills)
        if n_rim % 2 == 1:  # all-quad disc meshes need an even rim
            widest = max(range(len(gap_fills)), key=lambda i: len(gap_fills[i][1]))
            k, fills = gap_fills[widest]
            phi_k, angles_k, _, at_start_k = arcs[k]
            a_end = angles_k[-1] if at_start_k else angles_k[0]
            nxt = arcs[(k + 1) % len(arcs)]
            a_next = nxt[1][0] if nxt[3] else nxt[1][-1]
            gap = (a_next - a_end) % (2 * np.pi)
            n_fill = len(fills) + 1
            gap_fills[widest] = (k, [a_end + gap * (f + 1) / (n_fill + 1) for f in range(n_fill)])

        for k, fills in gap_fills:
            for ang in fills:
                nid = bank.add(
                    jn.center[0] + r * np.cos(ang),
                    jn.center[1] + r * np.sin(ang),
                    QUAD_JUNCTION,
                    v,
                    0,
                )
                rim_entries.append((ang % (2 * np.pi), nid, True))

        rim_entries.sort(key=lambda e: e[0])
        jn.rim_nodes = [e[1] for e in rim_entries]
        jn.rim_movable = [e[2] for e in rim_entries]
        n = len(jn.rim_nodes)
        ring = []
        # staggered ring radii keep the center fan quads away from 180-degree
        # corners: the middle node of each fan quad bulges toward the rim
        jn.ring_factor = [0.5 if k % 2 == 0 else 0.62 for k in range(n)]
        for k, nid in enumerate(jn.rim_nodes):
            x, y = bank.xy[nid]
            f = jn.ring_factor[k]
            rx = jn.center[0] + f * (x - jn.center[0])
            ry = jn.center[1] + f * (y - jn.center[1])
            ring.append(bank.add(rx, ry, QUAD_JUNCTION, v, 0))
        jn.ring_nodes = ring
        jn.center_node = bank.add(jn.center[0], jn.center[1], QUAD_JUNCTION, v, 0)
        for k in range(n):
            q = push_quad(
                jn.rim_nodes[k],
                jn.rim_nodes[(k + 1) % n],
                ring[(k + 1) % n],
                ring[k],
                QUAD_JUNCTION,
                v,
            )
            jn.quad_rows.append(q)
        for k in range(0, n, 2):
            q = push_quad(
                jn.center_node,
                ring[k],
                ring[(k + 1) % n],
                ring[(k + 2) % n],
                QUAD_JUNCTION,
                v,
            )
            jn.quad_rows.append(q)

    # member strips between their junction rims; pinched ends ease back to
    # full width over the first few rows
    for m in members:
        c = curves[m]
        a, b = gs.members[m]
        t0 = junctions[int(a)].trims[(m, True)]
        t1 = junctions[int(b)].trims[(m, False)]
        if t1 - t0 < params.min_trim_span:
            raise MeshingError(f"member {m} fully consumed by its junctions")
        ts = np.linspace(t0, t1, params.n_el + 1)
        p_mid, tan = c.evaluate(ts[1:-1])
        nrm = unit_normals(tan)
        natural0 = c.width / (2.0 * junctions[int(a)].radius)
        natural1 = c.width / (2.0 * junctions[int(b)].radius)
        s0 = arc_half[(m, True)] / natural0
        s1 = arc_half[(m, False)] / natural1
        kb = max(2, min(params.width_blend_rows, params.n_el // 2))
        lat = np.linspace(-1.0, 1.0, n_ew + 1)
        rows = [end_rows[(m, True)]]
        for i in range(1, params.n_el):
            fs = min(1.0, s0 + (1.0 - s0) * i / kb)
            fe = min(1.0, s1 + (1.0 - s1) * (params.n_el - i) / kb)
            h = 0.5 * c.width * min(fs, fe)
            rows.append(
                [
                    bank.add(
                        p_mid[i - 1, 0] + o * h * nrm[i - 1, 0],
                        p_mid[i - 1, 1] + o * h * nrm[i - 1, 1],
                        QUAD_MEMBER,
                        m,
                        0,
                    )
                    for o in lat
                ]
            )
        rows.append(end_rows[(m, False)])
        for i in range(params.n_el):
            for k in range(n_ew):
                push_quad(rows[i][k], rows[i + 1][k], rows[i + 1][k + 1], rows[i][k + 1],
                          QUAD_MEMBER, m)

    meta: dict = {
        "junctions": junctions,
        "input_node": None,
        "support_nodes": [],
        "workpiece_fixed": [],
        "workpiece_center": None,
    }

    # workpiece body
    wp = spec.workpiece
    if wp is not None:
        out_pos = gs.vertex_pos[spec.output_vertices[0]]
        center = wp.center(out_pos, np.asarray(spec.output_direction))
        meta["workpiece_center"] = center
        if wp.shape == "rect":
            wn, wq, fixed = _mesh_rect(wp, center, np.asarray(spec.output_direction))
        else:
            wn, wq, fixed = _mesh_ellipse(wp, center, np.asarray(spec.output_direction))
        base = len(bank.xy)
        for (x, y) in wn:
            bank.add(x, y, QUAD_WORKPIECE, 0, 1)
        for (q0, q1, q2, q3) in wq:
            push_quad(base + q0, base + q1, base + q2, base + q3, QUAD_WORKPIECE, 0, body=1)
        meta["workpiece_fixed"] = [base + int(i) for i in fixed]

    mesh = MeshModel(
        nodes=np.array(bank.xy, float),
        quads=np.array(quads, np.int64).reshape(-1, 4),
        quad_kind=np.array(quad_kind, np.int8),
        quad_tag=np.array(quad_tag, np.int64),
        body=np.array(quad_body, np.int8),
        node_kind=np.array(bank.kind, np.int8),
        node_tag=np.array(bank.tag, np.int64),
        node_body=np.array(bank.body, np.int8),
        thickness=float(dv.thickness),
    )

    jac = mesh.corner_jacobians()
    if np.any(jac.min(axis=1) <= 0):
        bad = int(np.argmin(jac.min(axis=1)))
        raise MeshingError(
            f"non-positive jacobian in {KIND_NAMES[int(mesh.quad_kind[bad])]} quad {bad}"
        )

    _check_part_clearance(dv, gs, curves, members, junctions, params.clearance_margin)
    _compress_junctions(mesh, junctions, params)
    mesh.loops = extract_boundary_loops(mesh)

    if spec.input_vertex not in junctions:
        raise MeshingError("input port vertex carries no active member")
    meta["input_node"] = junctions[spec.input_vertex].center_node
    # supports whose vertex is not in the meshed component simply do not act;
    # an under-constrained model then fails in the solver, not here
    for s in spec.supports:
        if s.vertex in junctions:
            jn = junctions[s.vertex]
            ids = [jn.center_node] + jn.rim_nodes + jn.ring_nodes
            meta["support_nodes"].append((s, sorted(ids)))
    return mesh, meta


def _check_part_clearance(dv, gs, curves, members, junctions, margin):
    """Reject geometry whose strips graze unrelated strips or junction discs."""
    polys = {m: curves[m].polyline(32) for m in members}
    for i in range(len(members)):
        mi = members[i]
        pa = polys[mi]
        wa = curves[mi].width
        for j in range(i + 1, len(members)):
            mj = members[j]
            if set(gs.members[mi]) & set(gs.members[mj]):
                continue  # adjacent strips meet legitimately at their junction
            pb = polys[mj]
            lim = 0.5 * (wa + curves[mj].width) + margin
            lo_a, hi_a = pa.min(axis=0) - lim, pa.max(axis=0) + lim
            if np.any(pb.max(axis=0) < lo_a) or np.any(pb.min(axis=0) > hi_a):
                continue
            d2 = np.sum((pa[:, None, :] - pb[None, :, :]) ** 2, axis=-1)
            if d2.min() < lim * lim:
                raise MeshingError(f"members {mi} and {mj} touch without sharing a vertex")
        a, b = gs.members[mi]
        for v, jn in junctions.items():
            if v in (int(a), int(b)):
                continue
            d = np.linalg.norm(polys[mi] - jn.center, axis=1).min()
            if d < jn.radius + 0.5 * wa + margin:
                raise MeshingError(f"member {mi} passes through the junction at vertex {v}")


def _polygon_is_simple(pts: np.ndarray) -> bool:
    """True when no two non-adjacent edges of the closed polygon cross."""
    n = len(pts)
    a = pts
    b = np.roll(pts, -1, axis=0)
    ii, jj = np.triu_indices(n, k=2)
    keep = ~((ii == 0) & (jj == n - 1))  # first and last edge are adjacent
    ii, jj = ii[keep], jj[keep]
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    box = np.all((lo[ii] <= hi[jj]) & (lo[jj] <= hi[ii]), axis=1)
    ii, jj = ii[box], jj[box]
    if not len(ii):
        return True
    d1 = b[ii] - a[ii]
    d2 = b[jj] - a[jj]
    denom = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    ok = np.abs(denom) > 1e-300
    diff = a[jj] - a[ii]
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (diff[:, 0] * d2[:, 1] - diff[:, 1] * d2[:, 0]) / denom
        t = (diff[:, 0] * d1[:, 1] - diff[:, 1] * d1[:, 0]) / denom
    crossing = ok & (s > 0) & (s < 1) & (t > 0) & (t < 1)
    return not bool(crossing.any())


def _envelope_radius(jn: _Junction, angle: float, floor_frac: float) -> float:
    """Radius of the incident-strip envelope along a rim direction."""
    r = jn.radius
    best = floor_frac * r
    for phi, w in jn.incident:
        d = abs((angle - phi + np.pi) % (2 * np.pi) - np.pi)
        if d >= 0.5 * np.pi:
            continue  # behind the member: the strip does not cover this ray
        sin_d = max(np.sin(d), 0.5 * w / r)  # inside the strip span: keep full radius
        best = max(best, min(r, 1.05 * 0.5 * w / sin_d))
    return best


def _compress_junctions(mesh: MeshModel, junctions: dict[int, _Junction], params: MeshParams):
    nodes = mesh.nodes
    for v in sorted(junctions):
        jn = junctions[v]
        movable = [k for k, mv in enumerate(jn.rim_movable) if mv]
        if not movable:
            continue
        qidx = np.array(jn.quad_rows, int)
        j0 = mesh.corner_jacobians(qidx).min()
        keep = params.jacobian_keep * j0
        for _ in range(params.compress_iters):
            saved = nodes.copy()
            moved = False
            for k in movable:
                nid = jn.rim_nodes[k]
                d = nodes[nid] - jn.center
                r_cur = np.linalg.norm(d)
                ang = np.arctan2(d[1], d[0])
                r_t = _envelope_radius(jn, ang, params.compress_floor)
                if r_t < r_cur - 1e-12:
                    r_new = r_cur + params.compress_step * (r_t - r_cur)
                    nodes[nid] = jn.center + (r_new / r_cur) * d
                    moved = True
                rid = jn.ring_nodes[k]
                nodes[rid] = jn.center + jn.ring_factor[k] * (nodes[nid] - jn.center)
            if not moved:
                break
            # keep quads valid and the rim silhouette simple: the back pocket
            # of a sparse junction can fold onto itself without inverting any
            # quad, which would break self-contact and loop geometry
            rim_poly = nodes[np.array(jn.rim_nodes, int)]
            if mesh.corner_jacobians(qidx).min() <= keep or not _polygon_is_simple(rim_poly):
                nodes[:] = saved
                break


def _mesh_rect(wp: Workpiece, center: np.ndarray, out_dir: np.ndarray):
    w, h = wp.size
    nx = max(1, int(round(w / wp.mesh_size)))
    ny = max(1, int(round(h / wp.mesh_size)))
    xs = np.linspace(center[0] - w / 2, center[0] + w / 2, nx + 1)
    ys = np.linspace(center[1] - h / 2, center[1] + h / 2, ny + 1)
    nid = lambda i, j: i * (ny + 1) + j
    nodes = [(x, y) for x in xs for y in ys]
    quads = [
        (nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1))
        for i in range(nx)
        for j in range(ny)
    ]
    side = wp.fixed_side
    if side == "far":
        d = -np.asarray(out_dir)
        side = (
            ("left" if d[0] < 0 else "right")
            if abs(d[0]) >= abs(d[1])
            else ("bottom" if d[1] < 0 else "top")
        )
    side = {"left": 0, "right": 1, "bottom": 2, "top": 3}[side]
    if side == 0:
        fixed = [nid(0, j) for j in range(ny + 1)]
    elif side == 1:
        fixed = [nid(nx, j) for j in range(ny + 1)]
    elif side == 2:
        fixed = [nid(i, 0) for i in range(nx + 1)]
    else:
        fixed = [nid(i, ny) for i in range(nx + 1)]
    return np.array(nodes), quads, fixed


def _mesh_ellipse(wp: Workpiece, center: np.ndarray, out_dir: np.ndarray):
    """Polar O-grid on the unit disc, scaled to the semi-axes."""
    a, b = 0.5 * wp.size[0], 0.5 * wp.size[1]
    # perimeter resolution drives the silhouette fidelity: 8*n_c boundary
    # segments must resolve the mean radius at the configured element size
    n_c = max(2, int(round(2 * np.pi * 0.5 * (a + b) / (8 * wp.mesh_size))))
    n_r = max(2, int(round(0.5 * min(a, b) / wp.mesh_size)))
    s = 0.5
    lin = np.linspace(-s, s, 2 * n_c + 1)
    core_id = {}
    nodes = []
    for i, x in enumerate(lin):
        for j, y in enumerate(lin):
            core_id[(i, j)] = len(nodes)
            nodes.append((x, y))
    quads = []
    for i in range(2 * n_c):
        for j in range(2 * n_c):
            quads.append(
                (core_id[(i, j)], core_id[(i + 1, j)], core_id[(i + 1, j + 1)], core_id[(i, j + 1)])
            )
    # counterclockwise square perimeter
    per = (
        [(i, 0) for i in range(2 * n_c)]
        + [(2 * n_c, j) for j in range(2 * n_c)]
        + [(i, 2 * n_c) for i in range(2 * n_c, 0, -1)]
        + [(0, j) for j in range(2 * n_c, 0, -1)]
    )
    per_ids = [core_id[p] for p in per]
    n_per = len(per_ids)
    prev = per_ids
    for l in range(1, n_r + 1):
        layer = []
        for pid in per_ids:
            q = np.array(nodes[pid])
            cq = q / np.linalg.norm(q)
            p = q + (l / n_r) * (cq - q)
            layer.append(len(nodes))
            nodes.append((p[0], p[1]))
        for k in range(n_per):
            quads.append((prev[k], layer[k], layer[(k + 1) % n_per], prev[(k + 1) % n_per]))
        prev = layer
    nodes = np.array(nodes)
    nodes[:, 0] = center[0] + a * nodes[:, 0]
    nodes[:, 1] = center[1] + b * nodes[:, 1]
    d = -np.asarray(out_dir)
    proj = nodes @ d
    fixed = list(np.nonzero(proj >= proj.max() - 0.35 * wp.mesh_size)[0])
    return nodes, quads, fixed


def extract_boundary_loops(mesh: MeshModel) -> list[Loop]:
    """Chain the free quad edges into closed cycles, one outer loop per body.

    Quads wind counterclockwise, so every boundary edge keeps the material on
    its left and outer/inner loops come out counterclockwise/clockwise.
    """
    edge_count: dict[tuple[int, int], int] = {}
    directed: dict[tuple[int, int], int] = {}
    quad_of_edge: dict[tuple[int, int], int] = {}
    for qi, q in enumerate(mesh.quads):
        for k in range(4):
            a, b = int(q[k]), int(q[(k + 1) % 4])
            key = (min(a, b), max(a, b))
            edge_count[key] = edge_count.get(key, 0) + 1
            if edge_count[key] > 2:
                raise MeshingError("non-manifold edge (shared by more than two quads)")
            directed[(a, b)] = directed.get((a, b), 0) + 1
            quad_of_edge[(a, b)] = qi
            if directed[(a, b)] > 1:
                raise MeshingError("duplicate directed edge (inconsistent quad winding)")

    boundary = [(a, b) for (a, b) in directed if (b, a) not in directed]
    out_of: dict[int, list[tuple[int, int]]] = {}
    for a, b in boundary:
        out_of.setdefault(a, []).append((a, b))
    for a, edges in out_of.items():
        if len(edges) != 1:
            raise MeshingError(f"boundary pinches at node {a}")

    loops: list[Loop] = []
    seen: set[tuple[int, int]] = set()
    for start in sorted(boundary):
        if start in seen:
            continue
        cycle = []
        e = start
        while True:
            seen.add(e)
            cycle.append(e[0])
            e = out_of[e[1]][0]
            if e == start:
                break
        arr = np.array(cycle, int)
        body = int(mesh.body[quad_of_edge[(start[0], start[1])]])
        area = polygon_area(mesh.nodes[arr])
        loops.append(Loop(nodes=arr, body=body, is_outer=False, area=area))

    out: list[Loop] = []
    for body in sorted({lp.body for lp in loops}):
        group = [lp for lp in loops if lp.body == body]
        outer = max(range(len(group)), key=lambda i: abs(group[i].area))
        for i, lp in enumerate(group):
            is_outer = i == outer
            if is_outer and lp.area <= 0 or (not is_outer and lp.area >= 0):
                raise MeshingError("boundary loop orientation inconsistent with winding")
            out.append(Loop(nodes=lp.nodes, body=lp.body, is_outer=is_outer, area=lp.area))
    return out


def _wrap_mesh(nodes, quads, thickness, kind=QUAD_MEMBER, tag=0, body=0) -> MeshModel:
    nodes = np.asarray(nodes, float)
    quads = np.asarray(quads, np.int64).reshape(-1, 4)
    m = MeshModel(
        nodes=nodes,
        quads=quads,
        quad_kind=np.full(len(quads), kind, np.int8),
        quad_tag=np.full(len(quads), tag, np.int64),
        body=np.full(len(quads), body, np.int8),
        node_kind=np.full(len(nodes), kind, np.int8),
        node_tag=np.full(len(nodes), tag, np.int64),
        node_body=np.full(len(nodes), body, np.int8),
        thickness=float(thickness),
    )
    m.loops = extract_boundary_loops(m)
    return m


def rectangle_mesh(length, height, nx, ny, thickness, origin=(0.0, 0.0)) -> MeshModel:
    """Axis-aligned structured strip, nodes ordered x-major from the origin."""
    xs = np.linspace(origin[0], origin[0] + length, nx + 1)
    ys = np.linspace(origin[1], origin[1] + height, ny + 1)
    nid = lambda i, j: i * (ny + 1) + j
    nodes = [(x, y) for x in xs for y in ys]
    quads = [
        (nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1))
        for i in range(nx)
        for j in range(ny)
    ]
    return _wrap_mesh(nodes, quads, thickness)


def ring_mesh(r_inner, r_outer, n_theta, n_r, thickness, center=(0.0, 0.0)) -> MeshModel:
    """Structured annulus (one outer and one inner loop)."""
    if not 0 < r_inner < r_outer or n_theta < 3 or n_r < 1:
        raise MeshingError("invalid annulus parameters")
    t = np.linspace(0.0, 2 * np.pi, n_theta, endpoint=False)
    rr = np.linspace(r_inner, r_outer, n_r + 1)
    nodes = []
    for r in rr:
        for ang in t:
            nodes.append((center[0] + r * np.cos(ang), center[1] + r * np.sin(ang)))
    nid = lambda ir, it: ir * n_theta + it % n_theta
    quads = [
        (nid(ir, it), nid(ir + 1, it), nid(ir + 1, it + 1), nid(ir, it + 1))
        for ir in range(n_r)
        for it in range(n_theta)
    ]
    return _wrap_mesh(nodes, quads, thickness)


def merge_meshes(meshes: list[MeshModel], tol: float = 1e-9) -> MeshModel:
    """Concatenate meshes, welding nodes that coincide within tol.

    Thickness is taken from the first mesh; body ids are preserved, so give
    the parts distinct bodies beforehand if they must stay separate.
    """
    if not meshes:
        raise MeshingError("nothing to merge")
    all_nodes = np.vstack([m.nodes for m in meshes])
    key = np.round(all_nodes / tol).astype(np.int64)
    _, first_idx, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    # keep deterministic ordering by first appearance
    order = np.argsort(first_idx, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    remap = rank[inverse]
    nodes = all_nodes[np.sort(first_idx)]

    quads, qk, qt, qb = [], [], [], []
    nk = np.zeros(len(nodes), np.int8)
    nt = np.zeros(len(nodes), np.int64)
    nb = np.zeros(len(nodes), np.int8)
    offset = 0
    for m in meshes:
        quads.append(remap[m.quads + offset])
        qk.append(m.quad_kind)
        qt.append(m.quad_tag)
        qb.append(m.body)
        ids = remap[np.arange(m.n_nodes) + offset]
        nk[ids] = m.node_kind
        nt[ids] = m.node_tag
        nb[ids] = m.node_body
        offset += m.n_nodes
    merged = MeshModel(
        nodes=nodes,
        quads=np.vstack(quads),
        quad_kind=np.concatenate(qk),
        quad_tag=np.concatenate(qt),
        body=np.concatenate(qb),
        node_kind=nk,
        node_tag=nt,
        node_body=nb,
        thickness=meshes[0].thickness,
    )
    merged.loops = extract_boundary_loops(merged)
    return merged


def remap_node_ids(meshes: list[MeshModel], ids: list[int], mesh_index: int,
                   merged: MeshModel, tol: float = 1e-9) -> list[int]:
    """Translate node ids of one input mesh into ids of the merged mesh."""
    src = meshes[mesh_index].nodes[np.asarray(ids, int)]
    key = {tuple(np.round(p / tol).astype(np.int64)): i for i, p in enumerate(merged.nodes)}
    return [key[tuple(np.round(p / tol).astype(np.int64))] for p in src]


def euler_inner_loop_count(mesh: MeshModel, body: int = 0) -> int:
    """1 - V + E - F over one body's mesh graph (its number of holes)."""
    sel = mesh.body == body
    quads = mesh.quads[sel]
    vs = np.unique(quads)
    edges = set()
    for q in quads:
        for k in range(4):
            a, b = int(q[k]), int(q[(k + 1) % 4])
            edges.add((min(a, b), max(a, b)))
    return 1 - len(vs) + len(edges) - len(quads)
