"""Quasi-static geometrically nonlinear solver for the meshed candidate.

Total-Lagrangian 4-node plane-stress quads with 2x2 quadrature, proportional
load ramping, full-Newton iterations with penalty contact, and step
bisection on non-convergence.  Non-convergence is recorded in the returned
history, never raised: bad candidates are penalized downstream.

The history stores one record per scheduled load factor (plus the rest state
at factor zero): input displacement, input force, workpiece contact
resultant, per-interface activity and minimum gaps, stored energies and the
displacement field itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .contact import ContactPair, ContactState, evaluate_contact
from .material import PlaneStressNeoHookean
from .meshing import MeshModel, QUAD_MEMBER

_GP = np.array([(-1, -1), (1, -1), (1, 1), (-1, 1)], float) / np.sqrt(3.0)


class SetupError(ValueError):
    """Invalid analysis setup (zero load, missing constraints, bad mesh)."""


@dataclass
class SolverParams:
    n_steps: int = 20
    tol_residual: float = 1e-6
    tol_displacement: float = 1e-8
    max_iterations: int = 30
    max_bisections: int = 6
    # contact penalty line stiffness = penalty_factor * E_max * thickness /
    # characteristic element size; stiffer values make penetrations smaller
    # but destabilize Newton once a contact activates mid-step
    penalty_factor: float = 2.0
    stall_iterations: int = 8  # abort Newton when this many iterations bring no progress
    inversion_backoffs: int = 6  # step halvings allowed when an update inverts elements
    # largest nodal displacement per Newton iterate (mm); larger jumps can
    # tunnel straight through the shallow contact-detection band
    max_increment: float = 2.0
    # secant extrapolation of each load step from the previous two converged
    # states; helps smooth paths, wastes a few iterations on kinky ones
    use_predictor: bool = True
    # factor the tangent in single precision (the residual and convergence
    # checks stay in double); cheaper factorizations but a noisier Newton
    # path that can cost more iterations than it saves
    single_precision_lu: bool = False
    # modified-Newton knob: reuse the factored tangent while each iteration
    # still cuts the residual by this factor.  0 disables reuse (full Newton);
    # reuse saves factorizations on mildly nonlinear problems but lengthens
    # the path on strongly rotating geometry.
    reuse_progress: float = 0.0
    # hard budget on Newton iterations over the whole load schedule, so
    # hopeless candidates cannot consume unbounded solver time
    max_total_iterations: int = 600
    # early hopelessness gates: (load factor, iteration allowance); a run
    # still short of the load factor after spending the allowance is declared
    # non-convergent without grinding the rest of the budget
    progress_gates: tuple = ((0.25, 0.4), (0.55, 0.7))
    # a stalled iteration is still accepted when the residual sits below this
    # multiple of the primary tolerance: sliding-contact knife edges can pin
    # the residual at a tiny fraction of the load with no descent direction
    stagnation_tol_factor: float = 100.0
    contact_candidates: int = 8
    store_displacements: bool = True


@dataclass
class LoadSchedule:
    node: int
    direction: tuple[float, float]
    peak: float  # N, reached at load factor 1
    n_steps: int = 20
    # additional loaded nodes, each carrying the full peak magnitude along its
    # own direction (used by symmetric replication); the input displacement is
    # always measured at `node`
    extra_loads: list[tuple[int, tuple[float, float]]] = field(default_factory=list)

    def __post_init__(self):
        if abs(np.hypot(*self.direction) - 1.0) > 1e-9:
            raise SetupError("load direction must be a unit vector")
        if self.peak <= 0:
            raise SetupError("peak load must be positive")
        if self.n_steps < 1:
            raise SetupError("need at least one load step")


@dataclass
class BoundaryConditions:
    fixed_nodes: list[int] = field(default_factory=list)
    rollers: list[tuple[list[int], tuple[float, float]]] = field(default_factory=list)


@dataclass
class StepRecord:
    load_factor: float
    delta_in: float  # input-port displacement along the load direction, mm
    f_in: float  # applied input force, N
    f_out: float  # workpiece contact resultant along the output direction, N
    f_out_vec: tuple[float, float]
    contact_active: dict[str, bool]
    min_gap: dict[str, float]
    strain_energy: float  # continuum + workpiece, N mm
    contact_energy: float
    converged: bool
    displacement: np.ndarray | None = None


@dataclass
class DeflectionHistory:
    steps: list[StepRecord]
    member_energy: dict[int, list[float]]  # member id -> energy per recorded step
    converged: bool  # every scheduled step converged
    declared_gap: float | None
    output_direction: tuple[float, float]
    n_steps_scheduled: int

    def member_peak_energy(self) -> dict[int, float]:
        return {m: float(np.max(e)) if len(e) else 0.0 for m, e in self.member_energy.items()}

    def final_strain_energy(self) -> float:
        return self.steps[-1].strain_energy if self.steps else 0.0

    def delta_in(self) -> np.ndarray:
        return np.array([s.delta_in for s in self.steps])

    def f_in(self) -> np.ndarray:
        return np.array([s.f_in for s in self.steps])

    def f_out(self) -> np.ndarray:
        return np.array([s.f_out for s in self.steps])

    def external_work(self) -> float:
        """Trapezoidal integral of the input force over the input displacement."""
        return float(np.trapezoid(self.f_in(), self.delta_in()))


def first_contact_displacement(history: DeflectionHistory, group: str = "workpiece"):
    """Input displacement at first workpiece contact, gap-interpolated.

    Returns None when the pair never activates over the recorded history.
    """
    steps = history.steps
    for k, s in enumerate(steps):
        if s.contact_active.get(group, False):
            if k == 0:
                return 0.0
            prev = steps[k - 1]
            g0 = prev.min_gap.get(group, np.inf)
            g1 = s.min_gap.get(group, 0.0)
            if np.isfinite(g0) and g0 > 0.0 and g1 < g0:
                w = g0 / (g0 - g1)
                return float(prev.delta_in + w * (s.delta_in - prev.delta_in))
            return float(s.delta_in)
    return None


class _ElementGroup:
    """Vectorized total-Lagrangian state for all quads of one material."""

    def __init__(self, mesh: MeshModel, quad_idx: np.ndarray,
                 material: PlaneStressNeoHookean, thickness: float):
        self.material = material
        self.idx = quad_idx
        self.conn = mesh.quads[quad_idx]
        X = mesh.nodes[self.conn]  # (e, 4, 2)
        dN = np.empty((4, 4, 2))
        for g, (xi, eta) in enumerate(_GP):
            dN[g] = 0.25 * np.array(
                [
                    [-(1 - eta), -(1 - xi)],
                    [(1 - eta), -(1 + xi)],
                    [(1 + eta), (1 + xi)],
                    [-(1 + eta), (1 - xi)],
                ]
            )
        J = np.einsum("eai,gaj->egij", X, dN)
        detJ = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
        if np.any(detJ <= 0):
            raise SetupError("reference mesh contains inverted quads")
        invJ = np.empty_like(J)
        invJ[..., 0, 0] = J[..., 1, 1] / detJ
        invJ[..., 1, 1] = J[..., 0, 0] / detJ
        invJ[..., 0, 1] = -J[..., 0, 1] / detJ
        invJ[..., 1, 0] = -J[..., 1, 0] / detJ
        self.dNdX = np.einsum("gaj,egji->egai", dN, invJ)  # (e, gp, node, dim)
        self.dNdX_T = np.ascontiguousarray(self.dNdX.swapaxes(-1, -2))
        self.wdet = detJ * thickness  # unit gauss weights
        dofs = np.empty((len(self.conn), 8), int)
        dofs[:, 0::2] = 2 * self.conn
        dofs[:, 1::2] = 2 * self.conn + 1
        self.rows = np.repeat(dofs, 8, axis=1).ravel()
        self.cols = np.tile(dofs, (1, 8)).ravel()
        e, g = self.dNdX.shape[0], self.dNdX.shape[1]
        self._B = np.empty((e, g, 3, 4, 2))
        self._Bt = np.empty((e, g, 8, 3))
        self._S2 = np.empty((e, g, 2, 2))

    def state(self, u: np.ndarray, forces_only: bool = False):
        """Internal forces, tangent blocks and per-element energies at u,
        or None when any quadrature point inverts.

        Voigt kernel: the strain-displacement operator of the current
        configuration feeds batched matmuls, and the geometric stiffness is
        the 2nd Piola stress contracted over the shape gradients.
        """
        ue = u[self.conn]  # (e, 4, 2)
        dN = self.dNdX
        F = self.dNdX_T @ ue[:, None]  # (e, g, J, i) = grad u, transposed
        F = F.swapaxes(-1, -2)
        F[..., 0, 0] += 1.0
        F[..., 1, 1] += 1.0
        C = F.swapaxes(-1, -2) @ F
        S_v, D, W, _, ok = self.material.evaluate(C)
        if not ok.all():
            return None
        energy = (W * self.wdet).sum(axis=1)

        # current-configuration strain-displacement operator (e, g, 3, 8)
        e, g = dN.shape[0], dN.shape[1]
        B5 = self._B
        np.multiply(dN[..., :, None, 0], F[..., None, :, 0], out=B5[..., 0, :, :])
        np.multiply(dN[..., :, None, 1], F[..., None, :, 1], out=B5[..., 1, :, :])
        np.multiply(dN[..., :, None, 1], F[..., None, :, 0], out=B5[..., 2, :, :])
        B5[..., 2, :, :] += dN[..., :, None, 0] * F[..., None, :, 1]
        B = B5.reshape(e, g, 3, 8)
        Sw = S_v * self.wdet[..., None]
        Bt = np.copyto(self._Bt, B.swapaxes(-1, -2)) or self._Bt
        f_el = (Bt @ Sw[..., None])[..., 0].sum(axis=1).reshape(e, 4, 2)
        if forces_only:
            return f_el, None, energy

        D *= self.wdet[..., None, None]
        K_el = (Bt @ (D @ B)).sum(axis=1)
        # geometric part: dN . S . dN^T on the diagonal displacement blocks
        S2 = self._S2
        S2[..., 0, 0] = S_v[..., 0]
        S2[..., 1, 1] = S_v[..., 1]
        S2[..., 0, 1] = S2[..., 1, 0] = S_v[..., 2]
        S2 *= self.wdet[..., None, None]
        Hs = ((dN @ S2) @ self.dNdX_T).sum(axis=1)
        K_el[:, 0::2, 0::2] += Hs
        K_el[:, 1::2, 1::2] += Hs
        return f_el, K_el, energy


def _reduction_matrix(n_nodes: int, bcs: BoundaryConditions) -> sp.csr_matrix:
    """Maps reduced unknowns to full dofs: fixed nodes dropped, roller nodes
    keep a single unknown along the rolling direction."""
    role: dict[int, tuple[str, np.ndarray | None]] = {}
    for nid in bcs.fixed_nodes:
        role[int(nid)] = ("fixed", None)
    for nodes, normal in bcs.rollers:
        n = np.asarray(normal, float)
        n = n / np.linalg.norm(n)
        t = np.array([-n[1], n[0]])
        for nid in nodes:
            role.setdefault(int(nid), ("roller", t))
    rows, cols, vals = [], [], []
    col = 0
    for nid in range(n_nodes):
        kind, t = role.get(nid, ("free", None))
        if kind == "fixed":
            continue
        if kind == "roller":
            rows += [2 * nid, 2 * nid + 1]
            cols += [col, col]
            vals += [t[0], t[1]]
            col += 1
        else:
            rows += [2 * nid, 2 * nid + 1]
            cols += [col, col + 1]
            vals += [1.0, 1.0]
            col += 2
    if col == 0:
        raise SetupError("all degrees of freedom are constrained")
    return sp.csr_matrix((vals, (rows, cols)), shape=(2 * n_nodes, col))


def default_penalty_line_stiffness(
    mesh: MeshModel, materials: dict[int, PlaneStressNeoHookean],
    penalty_factor: float = 100.0,
) -> float:
    from .material import neo_hookean_to_elastic

    e_max = max(neo_hookean_to_elastic(m.c10, m.d1)[0] for m in materials.values())
    areas = np.abs(mesh.quad_areas())
    char = float(np.sqrt(np.median(areas)))
    return penalty_factor * e_max * mesh.thickness / max(char, 1e-9)


def solve(
    mesh: MeshModel,
    materials: dict[int, PlaneStressNeoHookean],
    bcs: BoundaryConditions,
    schedule: LoadSchedule,
    pairs: list[ContactPair],
    params: SolverParams,
    output_direction: tuple[float, float] = (1.0, 0.0),
    body_thickness: dict[int, float] | None = None,
    declared_gap: float | None = None,
) -> DeflectionHistory:
    """Incremental-iterative solution of the loaded, contacting model."""
    bodies = sorted(set(int(b) for b in np.unique(mesh.body)))
    groups: list[_ElementGroup] = []
    for b in bodies:
        if b not in materials:
            raise SetupError(f"no material for body {b}")
        th = mesh.thickness if body_thickness is None else body_thickness.get(b, mesh.thickness)
        idx = np.nonzero(mesh.body == b)[0]
        groups.append(_ElementGroup(mesh, idx, materials[b], th))

    member_quads: dict[int, np.ndarray] = {}
    if 0 in bodies:
        g0 = groups[bodies.index(0)]
        kinds = mesh.quad_kind[g0.idx]
        tags = mesh.quad_tag[g0.idx]
        for m in np.unique(tags[kinds == QUAD_MEMBER]):
            member_quads[int(m)] = np.nonzero((kinds == QUAD_MEMBER) & (tags == m))[0]

    n_nodes = mesh.n_nodes
    if not bcs.fixed_nodes and not bcs.rollers:
        raise SetupError("boundary conditions do not constrain rigid-body motion")
    A = _reduction_matrix(n_nodes, bcs)
    AT = A.T.tocsr()
    f_ext_unit = np.zeros(2 * n_nodes)
    f_ext_unit[2 * schedule.node : 2 * schedule.node + 2] = (
        schedule.peak * np.asarray(schedule.direction)
    )
    for nid, direction in schedule.extra_loads:
        f_ext_unit[2 * nid : 2 * nid + 2] += schedule.peak * np.asarray(direction)
    ref_norm = np.linalg.norm(AT @ f_ext_unit)
    if ref_norm == 0.0:
        raise SetupError("external load vanishes after applying constraints")
    in_dir = np.asarray(schedule.direction, float)
    out_dir = np.asarray(output_direction, float)

    def assemble(u, lam, with_tangent=True):
        f_int = np.zeros((n_nodes, 2))
        rows_all, cols_all, vals_all = [], [], []
        energies = []
        for g in groups:
            st = g.state(u, forces_only=not with_tangent)
            if st is None:
                return None
            f_el, K_el, energy = st
            np.add.at(f_int, g.conn, f_el)
            if with_tangent:
                rows_all.append(g.rows)
                cols_all.append(g.cols)
                vals_all.append(K_el.ravel())
            energies.append(energy)
        cst = evaluate_contact(mesh.nodes + u, pairs, params.contact_candidates)
        r = f_int.ravel() - lam * f_ext_unit - cst.force.ravel()
        if not with_tangent:
            return AT @ r, None, cst, energies
        rows_all.append(cst.triplets[0])
        cols_all.append(cst.triplets[1])
        vals_all.append(cst.triplets[2])
        K = sp.coo_matrix(
            (np.concatenate(vals_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
            shape=(2 * n_nodes, 2 * n_nodes),
        ).tocsc()
        return AT @ r, (AT @ K @ A).tocsc(), cst, energies

    iteration_budget = [params.max_total_iterations]

    def newton(u0, lam, max_its=None):
        """Modified Newton with an inversion backoff and a stall watchdog.

        The factored tangent is reused while each iteration keeps cutting the
        residual well; transient residual growth is allowed (contact
        activations overshoot before settling); only element inversion forces
        a shorter update, and a run of iterations without progress aborts to
        the load bisection."""
        u = u0.copy()
        u_prev = step_prev = None
        alpha = 1.0
        backoffs = 0
        du_ok = False
        was_capped = False
        best = np.inf
        stall = 0
        lu = None
        rnorm_prev = None
        budget = (max_its or params.max_iterations) + params.inversion_backoffs
        for _ in range(budget):
            if iteration_budget[0] <= 0:
                return None
            iteration_budget[0] -= 1
            refactor = (
                lu is None
                or params.reuse_progress <= 0.0
                or (rnorm_prev is not None and stale_ratio > params.reuse_progress)
            )
            out = assemble(u, lam, with_tangent=refactor)
            if out is None:
                if step_prev is None or backoffs >= params.inversion_backoffs:
                    return None
                alpha *= 0.5
                backoffs += 1
                u = u_prev + alpha * step_prev
                du_ok = False
                lu = None
                continue
            rhs, K_r, cst, energies = out
            rnorm = np.linalg.norm(rhs)
            stale_ratio = 1.0 if rnorm_prev is None else rnorm / max(rnorm_prev, 1e-300)
            rnorm_prev = rnorm
            first = step_prev is None
            if rnorm <= params.tol_residual * lam * ref_norm and (first or du_ok):
                return u, cst, energies
            if rnorm < best * (1.0 - 1e-3):
                best = rnorm
                stall = 0
            elif not was_capped:
                # capped iterates crawl toward distant contact at a flat
                # residual; only uncapped stagnation counts as failure
                stall += 1
                if stall > params.stall_iterations:
                    if rnorm <= (
                        params.stagnation_tol_factor
                        * params.tol_residual
                        * lam
                        * ref_norm
                    ):
                        return u, cst, energies
                    return None
            if K_r is not None:
                try:
                    lu = spla.splu(
                        K_r.astype(np.float32) if params.single_precision_lu else K_r,
                        permc_spec="MMD_AT_PLUS_A",
                        options=dict(SymmetricMode=True),
                    )
                except RuntimeError:
                    # a singular entry tangent does not depend on the load
                    # target, so bisecting the step cannot help
                    return "singular" if first else None
                stale_ratio = 0.0
            dq = lu.solve((-rhs).astype(np.float32) if params.single_precision_lu else -rhs)
            dq = np.asarray(dq, np.float64)
            if not np.all(np.isfinite(dq)) or np.abs(dq).max() > 1e10:
                if K_r is not None:
                    return "singular" if first else None
                lu = None  # stale tangent went bad; refactor and retry
                continue
            step = (A @ dq).reshape(n_nodes, 2)
            biggest = float(np.max(np.linalg.norm(step, axis=1)))
            was_capped = biggest > params.max_increment
            if was_capped:
                step = step * (params.max_increment / biggest)
            u_prev, step_prev, alpha, backoffs = u, step, 1.0, 0
            u = u + step
            du_ok = np.linalg.norm(step) <= params.tol_displacement * max(
                1.0, np.linalg.norm(u)
            )
        return None

    def advance(u, lam_from, lam_to, bisections_left):
        got = newton(u, lam_to)
        if got == "singular":
            return None  # entry tangent singular: smaller steps cannot help
        if got is not None:
            return got
        if bisections_left == 0:
            return None
        mid = 0.5 * (lam_from + lam_to)
        half = advance(u, lam_from, mid, bisections_left - 1)
        if half is None:
            return None
        return advance(half[0], mid, lam_to, bisections_left - 1)

    steps: list[StepRecord] = []
    member_energy: dict[int, list[float]] = {}

    def record(u, lam, cst: ContactState, energies):
        mech_energies = energies[bodies.index(0)] if 0 in bodies else None
        for m, idx in member_quads.items():
            member_energy.setdefault(m, []).append(float(mech_energies[idx].sum()))
        f_out_vec = cst.wp_force
        steps.append(
            StepRecord(
                load_factor=float(lam),
                delta_in=float(u[schedule.node] @ in_dir),
                f_in=float(lam * schedule.peak),
                f_out=float(f_out_vec @ out_dir),
                f_out_vec=(float(f_out_vec[0]), float(f_out_vec[1])),
                contact_active=dict(cst.group_active),
                min_gap={k: float(v) for k, v in cst.group_min_gap.items()},
                strain_energy=float(sum(e.sum() for e in energies)),
                contact_energy=float(cst.energy),
                converged=True,
                displacement=u.copy() if params.store_displacements else None,
            )
        )

    u = np.zeros((n_nodes, 2))
    cst0 = evaluate_contact(mesh.nodes, pairs, params.contact_candidates)
    record(u, 0.0, cst0, [np.zeros(len(g.conn)) for g in groups])

    all_ok = True
    lam = 0.0
    converged_path = [(0.0, u)]
    for k in range(1, schedule.n_steps + 1):
        target = k / schedule.n_steps
        got = None
        if params.use_predictor and len(converged_path) >= 2:
            # secant predictor from the last two converged states; a failed
            # prediction just falls back to the plain step
            (l1, u1), (l2, u2) = converged_path[-2], converged_path[-1]
            if l2 > l1 + 1e-12:
                du = (u2 - u1) * ((target - l2) / (l2 - l1))
                biggest = float(np.max(np.linalg.norm(du, axis=1)))
                if biggest > 3.0 * params.max_increment:
                    du *= 3.0 * params.max_increment / biggest
                trial = newton(u2 + du, target, max_its=10)
                if trial is not None and trial != "singular":
                    got = trial
        if got is None:
            got = advance(u, lam, target, params.max_bisections)
            if got is None:
                all_ok = False
                break
        u, cst, energies = got
        lam = target
        converged_path.append((lam, u))
        record(u, lam, cst, energies)
        spent = params.max_total_iterations - iteration_budget[0]
        if any(
            lam < lam_gate and spent > frac * params.max_total_iterations
            for lam_gate, frac in params.progress_gates
        ):
            all_ok = False
            break

    return DeflectionHistory(
        steps=steps,
        member_energy=member_energy,
        converged=all_ok,
        declared_gap=declared_gap,
        output_direction=(float(out_dir[0]), float(out_dir[1])),
        n_steps_scheduled=schedule.n_steps,
    )
