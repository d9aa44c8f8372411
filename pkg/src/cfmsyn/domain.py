"""Design domain, ground structure and candidate design vectors.

Units are mm / N / rad throughout. The design region is a grid of blocks;
each block contributes four corner vertices, one center vertex, four edge
members and four corner-to-center diagonal members, with grid-shared corners
and edges stored once. Candidate designs are fixed-length vectors over that
ground structure: one topology bit, two end slopes and one width per member,
one thickness and one input-force magnitude, one (x, y) offset per vertex,
and a fixed number of external-surface slots.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from .hermite import (
    MemberCurve,
    points_in_polygon,
    polygon_area,
    polygons_overlap,
    polyline_intersections,
)

SURFACE_SHAPES = ("rect", "circle", "ellipse")
# per-slot surface columns: active, shape code, cx, cy, rotation, p1, p2
SURFACE_COLS = 7


class ConfigurationError(ValueError):
    """Raised for invalid problem definitions (not for bad candidates)."""


@dataclass(frozen=True)
class NeoHookeanMaterial:
    """Compressible Neo-Hookean constants (c10 in N/mm^2, d1 in mm^2/N)."""

    c10: float
    d1: float

    def __post_init__(self):
        if self.c10 <= 0 or self.d1 <= 0:
            raise ConfigurationError("material constants must be positive")


@dataclass(frozen=True)
class Workpiece:
    """Flexible body the mechanism presses against.

    `size` holds the rectangle sides, or the full axis lengths of the
    ellipse.  `placement` is the shape center; when omitted the workpiece is
    auto-placed along the output direction so its near face sits `gap` mm
    from the output port's rest position.
    """

    shape: str  # "rect" | "ellipse"
    size: tuple[float, float]
    material: NeoHookeanMaterial
    gap: float = 0.0
    placement: tuple[float, float] | None = None
    mesh_size: float = 2.0
    fixed_side: str = "far"  # far | left | right | top | bottom
    thickness: float = 3.0  # out-of-plane, fixed (not a design variable)

    def __post_init__(self):
        if self.shape not in ("rect", "ellipse"):
            raise ConfigurationError(f"unknown workpiece shape {self.shape!r}")
        if self.gap < 0:
            raise ConfigurationError("workpiece gap must be >= 0")
        if min(self.size) <= 0 or self.mesh_size <= 0:
            raise ConfigurationError("workpiece dimensions must be positive")

    def support_extent(self, direction: np.ndarray) -> float:
        """Distance from center to the boundary tangent plane normal to `direction`."""
        d = np.asarray(direction, float)
        w, h = self.size
        if self.shape == "rect":
            return 0.5 * (abs(d[0]) * w + abs(d[1]) * h)
        return float(np.hypot(0.5 * w * d[0], 0.5 * h * d[1]))

    def center(self, output_pos: np.ndarray, output_dir: np.ndarray) -> np.ndarray:
        if self.placement is not None:
            return np.asarray(self.placement, float)
        d = np.asarray(output_dir, float)
        return np.asarray(output_pos, float) + d * (self.gap + self.support_extent(d))

    def polygon(self, center: np.ndarray, n: int = 48) -> np.ndarray:
        cx, cy = center
        w, h = self.size
        if self.shape == "rect":
            return np.array(
                [
                    [cx - w / 2, cy - h / 2],
                    [cx + w / 2, cy - h / 2],
                    [cx + w / 2, cy + h / 2],
                    [cx - w / 2, cy + h / 2],
                ]
            )
        t = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
        return np.column_stack([cx + 0.5 * w * np.cos(t), cy + 0.5 * h * np.sin(t)])


@dataclass(frozen=True)
class ExternalSurface:
    """Rigid contact obstacle: rectangle, circle or ellipse with a pose."""

    shape: str
    center: tuple[float, float]
    rotation: float = 0.0
    params: tuple[float, float] = (1.0, 1.0)

    def polygon(self, n: int = 48) -> np.ndarray:
        cx, cy = self.center
        p1, p2 = self.params
        if self.shape == "rect":
            base = np.array(
                [[-p1 / 2, -p2 / 2], [p1 / 2, -p2 / 2], [p1 / 2, p2 / 2], [-p1 / 2, p2 / 2]]
            )
        elif self.shape == "circle":
            t = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
            base = np.column_stack([p1 * np.cos(t), p1 * np.sin(t)])
        elif self.shape == "ellipse":
            t = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
            base = np.column_stack([p1 * np.cos(t), p2 * np.sin(t)])
        else:
            raise ConfigurationError(f"unknown surface shape {self.shape!r}")
        c, s = np.cos(self.rotation), np.sin(self.rotation)
        rot = np.array([[c, -s], [s, c]])
        return base @ rot.T + np.array([cx, cy])


@dataclass(frozen=True)
class Support:
    vertex: int
    kind: str  # "fixed" | "roller"
    normal: tuple[float, float] = (0.0, 1.0)


@dataclass(frozen=True)
class Reinforcement:
    """A fixed, non-design member appended at the output port.

    Endpoints are either existing vertex ids (int) or new points (x, y).
    """

    a: int | tuple[float, float]
    b: int | tuple[float, float]
    width: float = 2.0
    slopes: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class BoundsTable:
    """Lower/upper bounds per design-variable class."""

    end_slope: tuple[float, float] = (-0.5, 0.5)
    width: tuple[float, float] = (1.4, 2.0)
    thickness: tuple[float, float] = (2.0, 5.0)
    vertex_x: tuple[float, float] = (-5.0, 5.0)
    vertex_y: tuple[float, float] = (-5.0, 5.0)
    input_force: tuple[float, float] = (0.5, 5.0)
    surface_x: tuple[float, float] = (0.0, 100.0)
    surface_y: tuple[float, float] = (0.0, 100.0)
    surface_rotation: tuple[float, float] = (0.0, 3.141592653589793)
    surface_size: tuple[float, float] = (2.0, 15.0)

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ConfigurationError(f"bounds for {name} need LB < UB, got ({lo}, {hi})")


@dataclass(frozen=True)
class DomainSpec:
    """Everything that defines one synthesis problem except the optimizer."""

    width: float
    height: float
    blocks_x: int
    blocks_y: int
    input_vertex: int
    input_direction: tuple[float, float]
    output_vertices: tuple[int, ...]
    output_direction: tuple[float, float]
    supports: tuple[Support, ...]
    workpiece: Workpiece | None = None
    reinforcements: tuple[Reinforcement, ...] = ()
    symmetry: str = "none"  # none | mirror-horizontal | mirror-vertical
    surfaces_allowed: int = 0
    surface_shapes: tuple[str, ...] = SURFACE_SHAPES

    def __post_init__(self):
        if self.blocks_x < 1 or self.blocks_y < 1:
            raise ConfigurationError("need at least one block per direction")
        if self.width <= 0 or self.height <= 0:
            raise ConfigurationError("domain dimensions must be positive")
        if not 0 <= self.surfaces_allowed <= 11:
            raise ConfigurationError("surfaces_allowed must be in 0..11")
        if self.symmetry not in ("none", "mirror-horizontal", "mirror-vertical"):
            raise ConfigurationError(f"unknown symmetry {self.symmetry!r}")
        for d in (self.input_direction, self.output_direction):
            if abs(np.hypot(*d) - 1.0) > 1e-9:
                raise ConfigurationError("port directions must be unit vectors")


@dataclass(frozen=True)
class GroundStructure:
    """Grid of candidate members with per-vertex movement boxes.

    `counts` reports the sharing convention: grid-shared corner vertices and
    edge members are stored exactly once, so an nx-by-ny grid has
    (nx+1)(ny+1) + nx*ny vertices and nx(ny+1) + (nx+1)ny + 4 nx ny members
    before reinforcements.
    """

    vertex_pos: np.ndarray  # (n_v, 2) rest positions
    vertex_box: np.ndarray  # (n_v, 2) half-widths of the movement box
    members: np.ndarray  # (n_m, 2) endpoint vertex ids
    member_reinforced: np.ndarray  # (n_m,) bool
    reinf_slopes: np.ndarray  # (n_m, 2) frozen values where reinforced
    reinf_widths: np.ndarray  # (n_m,) frozen values where reinforced
    counts: dict = field(default_factory=dict)

    @property
    def n_vertices(self) -> int:
        return len(self.vertex_pos)

    @property
    def n_members(self) -> int:
        return len(self.members)

    def incident_members(self, vertex: int) -> np.ndarray:
        return np.nonzero((self.members[:, 0] == vertex) | (self.members[:, 1] == vertex))[0]

    def dump(self) -> str:
        """Structured-text adjacency dump for debugging."""
        lines = ["cfm-ground-structure 1"]
        lines.append(f"vertices {self.n_vertices}")
        for i, ((x, y), (bx, by)) in enumerate(zip(self.vertex_pos, self.vertex_box)):
            lines.append(f"{i} {x!r} {y!r} {bx!r} {by!r}")
        lines.append(f"members {self.n_members}")
        for j, (a, b) in enumerate(self.members):
            tag = "reinforcement" if self.member_reinforced[j] else "design"
            lines.append(f"{j} {a} {b} {tag}")
        return "\n".join(lines) + "\n"


def build_ground_structure(spec: DomainSpec, bounds: BoundsTable) -> GroundStructure:
    """Assemble the block grid, reinforcements and per-vertex movement boxes.

    Vertices referenced by ports or supports, and vertices used only by
    reinforcement members, get a zero movement box so mutation cannot move
    them.
    """
    nx, ny = spec.blocks_x, spec.blocks_y
    bw, bh = spec.width / nx, spec.height / ny
    grid_id = lambda i, j: i * (ny + 1) + j
    pos = [(i * bw, j * bh) for i in range(nx + 1) for j in range(ny + 1)]
    n_grid = len(pos)
    center_id = lambda bi, bj: n_grid + bi * ny + bj
    pos += [((bi + 0.5) * bw, (bj + 0.5) * bh) for bi in range(nx) for bj in range(ny)]

    members = []
    for i in range(nx):  # horizontal edges, bottom row up
        for j in range(ny + 1):
            members.append((grid_id(i, j), grid_id(i + 1, j)))
    for i in range(nx + 1):  # vertical edges, left column right
        for j in range(ny):
            members.append((grid_id(i, j), grid_id(i, j + 1)))
    for bi in range(nx):  # corner-to-center diagonals
        for bj in range(ny):
            c = center_id(bi, bj)
            members.append((grid_id(bi, bj), c))
            members.append((grid_id(bi + 1, bj), c))
            members.append((grid_id(bi + 1, bj + 1), c))
            members.append((grid_id(bi, bj + 1), c))
    n_design = len(members)

    # reinforcements may introduce new vertices
    new_vertex = {}

    def vertex_of(endpoint):
        if isinstance(endpoint, (int, np.integer)):
            if not 0 <= endpoint < len(pos):
                raise ConfigurationError(f"reinforcement endpoint {endpoint} out of range")
            return int(endpoint)
        key = (float(endpoint[0]), float(endpoint[1]))
        if key not in new_vertex:
            new_vertex[key] = len(pos)
            pos.append(key)
        return new_vertex[key]

    reinf_rows = [(vertex_of(r.a), vertex_of(r.b)) for r in spec.reinforcements]
    members += reinf_rows

    vertex_pos = np.array(pos, float)
    members_arr = np.array(members, int).reshape(-1, 2)
    if len(np.unique(members_arr.min(axis=1) * len(pos) + members_arr.max(axis=1))) != len(
        members_arr
    ):
        raise ConfigurationError("two members share both endpoints")

    reinforced = np.zeros(len(members_arr), bool)
    reinforced[n_design:] = True
    reinf_slopes = np.zeros((len(members_arr), 2))
    reinf_widths = np.full(len(members_arr), bounds.width[0])
    for k, r in enumerate(spec.reinforcements):
        reinf_slopes[n_design + k] = r.slopes
        reinf_widths[n_design + k] = r.width

    dx = 0.5 * (bounds.vertex_x[1] - bounds.vertex_x[0])
    dy = 0.5 * (bounds.vertex_y[1] - bounds.vertex_y[0])
    box = np.tile([dx, dy], (len(vertex_pos), 1))
    frozen = set()
    port_ids = {spec.input_vertex, *spec.output_vertices, *(s.vertex for s in spec.supports)}
    for vid in port_ids:
        if not 0 <= vid < len(vertex_pos):
            raise ConfigurationError(f"port/support vertex {vid} not in ground structure")
        frozen.add(vid)
    frozen.update(new_vertex.values())
    # vertices touched only by reinforcement members do not move either
    for v in range(len(vertex_pos)):
        inc = np.nonzero((members_arr[:, 0] == v) | (members_arr[:, 1] == v))[0]
        if len(inc) and np.all(reinforced[inc]):
            frozen.add(v)
    box[sorted(frozen)] = 0.0

    counts = {
        "vertices": len(vertex_pos),
        "grid_vertices": n_grid,
        "center_vertices": nx * ny,
        "members": len(members_arr),
        "design_members": n_design,
        "reinforcement_members": len(reinf_rows),
        "per_block_members": 8,
        "per_block_vertices": 5,
        "convention": "grid-shared corners and edges stored once",
    }
    return GroundStructure(
        vertex_pos=vertex_pos,
        vertex_box=box,
        members=members_arr,
        member_reinforced=reinforced,
        reinf_slopes=reinf_slopes,
        reinf_widths=reinf_widths,
        counts=counts,
    )


@dataclass(frozen=True)
class DesignVector:
    """One candidate design over a ground structure."""

    topology: np.ndarray  # (n_m,) uint8
    slopes: np.ndarray  # (n_m, 2) rad
    widths: np.ndarray  # (n_m,) mm
    thickness: float
    input_force: float
    vertex_offsets: np.ndarray  # (n_v, 2) mm
    surfaces: np.ndarray  # (n_slots, SURFACE_COLS)

    def active_members(self) -> np.ndarray:
        return np.nonzero(self.topology)[0]

    def active_surfaces(self) -> list[ExternalSurface]:
        out = []
        for row in self.surfaces:
            if row[0] >= 0.5:
                out.append(
                    ExternalSurface(
                        shape=SURFACE_SHAPES[int(row[1])],
                        center=(float(row[2]), float(row[3])),
                        rotation=float(row[4]),
                        params=(float(row[5]), float(row[6])),
                    )
                )
        return out

    def vertex_positions(self, gs: GroundStructure) -> np.ndarray:
        return gs.vertex_pos + self.vertex_offsets

    def member_curve(self, gs: GroundStructure, m: int) -> MemberCurve:
        pos = self.vertex_positions(gs)
        a, b = gs.members[m]
        return MemberCurve(
            p0=tuple(pos[a]),
            p1=tuple(pos[b]),
            slope0=float(self.slopes[m, 0]),
            slope1=float(self.slopes[m, 1]),
            width=float(self.widths[m]),
        )

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for arr in (
            self.topology.astype(np.uint8),
            self.slopes.astype(np.float64),
            self.widths.astype(np.float64),
            np.array([self.thickness, self.input_force], np.float64),
            self.vertex_offsets.astype(np.float64),
            self.surfaces.astype(np.float64),
        ):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def to_jsonable(self) -> dict:
        return {
            "topology": self.topology.astype(int).tolist(),
            "slopes": self.slopes.tolist(),
            "widths": self.widths.tolist(),
            "thickness": self.thickness,
            "input_force": self.input_force,
            "vertex_offsets": self.vertex_offsets.tolist(),
            "surfaces": self.surfaces.tolist(),
        }

    @staticmethod
    def from_jsonable(d: dict) -> "DesignVector":
        return DesignVector(
            topology=np.array(d["topology"], np.uint8),
            slopes=np.array(d["slopes"], float).reshape(-1, 2),
            widths=np.array(d["widths"], float),
            thickness=float(d["thickness"]),
            input_force=float(d["input_force"]),
            vertex_offsets=np.array(d["vertex_offsets"], float).reshape(-1, 2),
            surfaces=np.array(d["surfaces"], float).reshape(-1, SURFACE_COLS),
        )

    def within_bounds(self, gs: GroundStructure, bounds: BoundsTable) -> bool:
        checks = [
            np.all((self.slopes >= bounds.end_slope[0]) & (self.slopes <= bounds.end_slope[1])),
            np.all((self.widths >= bounds.width[0]) & (self.widths <= bounds.width[1])),
            bounds.thickness[0] <= self.thickness <= bounds.thickness[1],
            bounds.input_force[0] <= self.input_force <= bounds.input_force[1],
            np.all(np.abs(self.vertex_offsets) <= gs.vertex_box + 1e-12),
        ]
        if len(self.surfaces):
            s = self.surfaces
            checks += [
                np.all((s[:, 2] >= bounds.surface_x[0]) & (s[:, 2] <= bounds.surface_x[1])),
                np.all((s[:, 3] >= bounds.surface_y[0]) & (s[:, 3] <= bounds.surface_y[1])),
                np.all(
                    (s[:, 4] >= bounds.surface_rotation[0])
                    & (s[:, 4] <= bounds.surface_rotation[1])
                ),
                np.all((s[:, 5:7] >= bounds.surface_size[0]) & (s[:, 5:7] <= bounds.surface_size[1])),
            ]
        return bool(np.all(checks))


def _freeze_reinforcement(dv: DesignVector, gs: GroundStructure) -> DesignVector:
    topo = dv.topology.copy()
    slopes = dv.slopes.copy()
    widths = dv.widths.copy()
    r = gs.member_reinforced
    topo[r] = 1
    slopes[r] = gs.reinf_slopes[r]
    widths[r] = gs.reinf_widths[r]
    return replace(dv, topology=topo, slopes=slopes, widths=widths)


def _draw_surfaces(rng, n_slots: int, bounds: BoundsTable, shapes: tuple[str, ...]) -> np.ndarray:
    s = np.zeros((n_slots, SURFACE_COLS))
    if n_slots == 0:
        return s
    codes = [SURFACE_SHAPES.index(name) for name in shapes]
    s[:, 0] = (rng.random(n_slots) < 0.5).astype(float)
    s[:, 1] = rng.choice(codes, size=n_slots)
    s[:, 2] = rng.uniform(*bounds.surface_x, n_slots)
    s[:, 3] = rng.uniform(*bounds.surface_y, n_slots)
    s[:, 4] = rng.uniform(*bounds.surface_rotation, n_slots)
    s[:, 5] = rng.uniform(*bounds.surface_size, n_slots)
    s[:, 6] = rng.uniform(*bounds.surface_size, n_slots)
    return s


def random_design(
    gs: GroundStructure,
    bounds: BoundsTable,
    seed: int,
    n_surface_slots: int = 0,
    surface_shapes: tuple[str, ...] = SURFACE_SHAPES,
) -> DesignVector:
    """Uniform random candidate; reproducible for a fixed seed."""
    rng = np.random.default_rng(seed)
    n_m, n_v = gs.n_members, gs.n_vertices
    dv = DesignVector(
        topology=(rng.random(n_m) < 0.5).astype(np.uint8),
        slopes=rng.uniform(*bounds.end_slope, (n_m, 2)),
        widths=rng.uniform(*bounds.width, n_m),
        thickness=float(rng.uniform(*bounds.thickness)),
        input_force=float(rng.uniform(*bounds.input_force)),
        vertex_offsets=rng.uniform(-1.0, 1.0, (n_v, 2)) * gs.vertex_box,
        surfaces=_draw_surfaces(rng, n_surface_slots, bounds, surface_shapes),
    )
    return _freeze_reinforcement(dv, gs)


def mutate(
    dv: DesignVector,
    gs: GroundStructure,
    bounds: BoundsTable,
    p_mut: float,
    seed: int,
    surface_shapes: tuple[str, ...] = SURFACE_SHAPES,
) -> DesignVector:
    """Independently select each design variable with probability p_mut.

    Selected topology bits flip; selected continuous variables are resampled
    uniformly within their bounds.  Reinforcement members and frozen vertices
    are untouched.
    """
    if not 0 <= p_mut <= 1:
        raise ConfigurationError("mutation probability must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    n_m, n_v = gs.n_members, gs.n_vertices

    flip = rng.random(n_m) < p_mut
    topo = dv.topology ^ flip.astype(np.uint8)

    sel = rng.random((n_m, 2)) < p_mut
    slopes = np.where(sel, rng.uniform(*bounds.end_slope, (n_m, 2)), dv.slopes)
    sel = rng.random(n_m) < p_mut
    widths = np.where(sel, rng.uniform(*bounds.width, n_m), dv.widths)
    thickness = float(
        rng.uniform(*bounds.thickness) if rng.random() < p_mut else dv.thickness
    )
    input_force = float(
        rng.uniform(*bounds.input_force) if rng.random() < p_mut else dv.input_force
    )
    sel = rng.random((n_v, 2)) < p_mut
    offsets = np.where(sel, rng.uniform(-1.0, 1.0, (n_v, 2)) * gs.vertex_box, dv.vertex_offsets)

    surfaces = dv.surfaces.copy()
    if len(surfaces):
        n_s = len(surfaces)
        fresh = _draw_surfaces(rng, n_s, bounds, surface_shapes)
        act_flip = rng.random(n_s) < p_mut
        surfaces[act_flip, 0] = 1.0 - surfaces[act_flip, 0]
        for col in range(1, SURFACE_COLS):
            sel = rng.random(n_s) < p_mut
            surfaces[sel, col] = fresh[sel, col]

    out = DesignVector(
        topology=topo,
        slopes=slopes,
        widths=widths,
        thickness=thickness,
        input_force=input_force,
        vertex_offsets=offsets,
        surfaces=surfaces,
    )
    return _freeze_reinforcement(out, gs)


def junction_radius_floor(dv: DesignVector, gs: GroundStructure, vertex: int) -> float:
    """Nominal junction disc radius at a vertex: 1.25 * max incident width / 2."""
    inc = [m for m in gs.incident_members(vertex) if dv.topology[m]]
    if not inc:
        return 0.0
    return 1.25 * 0.5 * float(np.max(dv.widths[inc]))


def remove_intersecting_members(
    dv: DesignVector, gs: GroundStructure, samples: int = 64
) -> DesignVector:
    """Zero the topology bits of every pair of active members whose centerlines cross.

    Crossings closer than half the junction radius to a shared vertex do not
    count: members legitimately meet there.  The operation only performs
    1 -> 0 transitions, so it is idempotent and monotone.
    """
    active = dv.active_members()
    if len(active) < 2:
        return dv
    polys = {m: dv.member_curve(gs, m).polyline(samples) for m in active}
    boxes = {m: (polys[m].min(axis=0), polys[m].max(axis=0)) for m in active}
    pos = dv.vertex_positions(gs)
    kill = set()
    for ii in range(len(active)):
        a = active[ii]
        for b in active[ii + 1 :]:
            lo_a, hi_a = boxes[a]
            lo_b, hi_b = boxes[b]
            if np.any(hi_a < lo_b) or np.any(hi_b < lo_a):
                continue
            shared = set(gs.members[a]) & set(gs.members[b])
            hits = polyline_intersections(polys[a], polys[b])
            for p in hits:
                excluded = False
                for v in shared:
                    r_excl = 0.5 * junction_radius_floor(dv, gs, v)
                    if np.linalg.norm(p - pos[v]) <= r_excl:
                        excluded = True
                        break
                if not excluded:
                    kill.add(a)
                    kill.add(b)
                    break
    if not kill:
        return dv
    topo = dv.topology.copy()
    topo[sorted(kill)] = 0
    return _freeze_reinforcement(replace(dv, topology=topo), gs)


@dataclass(frozen=True)
class ValidityReport:
    connected: bool
    active_member_count: int
    component_members: tuple[int, ...]  # active members in the input-port component
    overlapping_surfaces: int
    notes: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return self.connected and self.overlapping_surfaces == 0


def _components(members: np.ndarray, active: np.ndarray, n_vertices: int):
    parent = list(range(n_vertices))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for m in active:
        a, b = members[m]
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    return find


def validate_candidate(dv: DesignVector, gs: GroundStructure, spec: DomainSpec) -> ValidityReport:
    """Connectivity and overlap screening; always returns a report.

    A support only counts when it can actually carry the structure: rollers
    alone leave a rigid sliding mode, so when the problem declares any fixed
    support, one of them must be in the candidate's input component.
    """
    active = dv.active_members()
    notes = []
    find = _components(gs.members, active, gs.n_vertices)
    root_in = find(spec.input_vertex)
    vertices_with_members = set(gs.members[active].ravel().tolist())
    anchors = [s for s in spec.supports if s.kind == "fixed"] or list(spec.supports)
    connected = (
        spec.input_vertex in vertices_with_members
        and any(find(o) == root_in and o in vertices_with_members for o in spec.output_vertices)
        and any(
            find(s.vertex) == root_in and s.vertex in vertices_with_members
            for s in anchors
        )
    )
    if not connected:
        notes.append("input/output/support not connected by active members")
    comp = tuple(int(m) for m in active if find(gs.members[m][0]) == root_in) if connected else ()

    # overlap screen: rigid surfaces against the candidate outline and workpiece
    overlapping = 0
    surfs = dv.active_surfaces()
    if surfs:
        outline_polys = []
        for m in active:
            outline_polys.append(dv.member_curve(gs, m).outline(48))
        pos = dv.vertex_positions(gs)
        for v in sorted(vertices_with_members):
            r = junction_radius_floor(dv, gs, v)
            if r > 0:
                t = np.linspace(0, 2 * np.pi, 24, endpoint=False)
                outline_polys.append(
                    np.column_stack([pos[v][0] + r * np.cos(t), pos[v][1] + r * np.sin(t)])
                )
        wp_poly = None
        if spec.workpiece is not None:
            out_pos = gs.vertex_pos[spec.output_vertices[0]]
            wp_poly = spec.workpiece.polygon(
                spec.workpiece.center(out_pos, np.asarray(spec.output_direction))
            )
        for srf in surfs:
            poly = srf.polygon()
            hit = any(polygons_overlap(poly, other) for other in outline_polys)
            if not hit and wp_poly is not None:
                hit = polygons_overlap(poly, wp_poly)
            if hit:
                overlapping += 1
        if overlapping:
            notes.append(f"{overlapping} external surface(s) overlap the continuum/workpiece")

    return ValidityReport(
        connected=connected,
        active_member_count=int(len(active)),
        component_members=comp,
        overlapping_surfaces=overlapping,
        notes=tuple(notes),
    )


def remove_dangling_members(
    dv: DesignVector,
    member_peak_energy: dict[int, float],
    eps_energy: float,
    gs: GroundStructure,
    spec: DomainSpec,
) -> DesignVector:
    """Drop active members whose peak strain energy over the history stays below eps_energy.

    Members absent from the energy map count as storing nothing.  If the
    removal would disconnect the input/output/support path the input vector
    is returned unchanged.
    """
    active = dv.active_members()
    drop = [m for m in active if member_peak_energy.get(int(m), 0.0) < eps_energy]
    drop = [m for m in drop if not gs.member_reinforced[m]]
    if not drop:
        return dv
    topo = dv.topology.copy()
    topo[drop] = 0
    trial = _freeze_reinforcement(replace(dv, topology=topo), gs)
    if not validate_candidate(trial, gs, spec).connected:
        return dv
    return trial
