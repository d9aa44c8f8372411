"""Frictionless node-to-segment penalty contact on boundary loops.

Loops carry the material on the left of their travel direction, so the
outward normal of a master segment is the tangent rotated clockwise.  A
slave node is in contact when its signed distance to the nearest master
segment goes negative; it then receives k * |gap| along the + normal and the
master segment nodes take the opposite reaction split by the projection
weights.  Deformable-deformable interfaces are declared twice (each side
slave once); rigid obstacles act as master only.

Nodal penalty stiffness is the configured line stiffness times the slave
node's reference tributary boundary length, so the implied contact pressure
is mesh-independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree


@dataclass
class ContactPair:
    """One slave-onto-master pass; logical interfaces may own several passes."""

    group: str  # logical pair name ("workpiece", "self_outer", "surface_0", ...)
    kind: str  # "self" | "workpiece" | "surface"
    slave_nodes: np.ndarray  # node ids
    slave_k: np.ndarray  # nodal penalty stiffness (N/mm per node)
    master_nodes: np.ndarray | None  # (n_seg, 2) node ids, or None for rigid
    master_xy: np.ndarray | None = None  # (n_seg, 2, 2) fixed coords for rigid masters
    slave_loop_pos: np.ndarray | None = None  # position of slave along its own loop
    self_loop_len: int = 0  # loop length for self-contact exclusion
    wp_master: bool = False  # master side belongs to the workpiece
    wp_slave: bool = False  # slave side belongs to the workpiece
    # a node counts as penetrating only within this depth behind the surface;
    # being far behind a face (the normal state on one's own body) is not
    # contact.  Defaults to 0.75 x the slave tributary length at build time.
    slave_cap: np.ndarray | None = None
    # ordered boundary cycles composing the slave set, in slave_nodes order;
    # when given, slave outward normals are computed and a candidate face
    # must oppose them (boundary wrapping sharply around compressed junctions
    # otherwise fakes penetrations against same-facing walls)
    slave_loops: list | None = None
    # candidate-search tree cache: (midpoints at build time, tree, refresh tol)
    _tree: tuple | None = None


@dataclass
class ContactState:
    """Result of one contact evaluation at a given configuration."""

    force: np.ndarray  # (n_nodes, 2) nodal contact forces
    triplets: tuple  # (rows, cols, vals) tangent contribution
    group_active: dict[str, bool]
    group_min_gap: dict[str, float]
    wp_force: np.ndarray  # total force transmitted to the workpiece
    energy: float  # stored penalty energy
    n_active: int


def tributary_lengths(nodes_xy: np.ndarray, loop: np.ndarray) -> np.ndarray:
    """Half the length of the two boundary segments adjacent to each loop node."""
    p = nodes_xy[loop]
    seg = np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1)
    return 0.5 * (seg + np.roll(seg, 1))


def _loop_node_normals(x: np.ndarray, loops: list) -> np.ndarray:
    """Outward unit normal per node, averaged over the two adjacent segments."""
    out = []
    for loop in loops:
        p = x[loop]
        e = np.roll(p, -1, axis=0) - p
        n_seg = np.stack([e[:, 1], -e[:, 0]], axis=-1)
        norm = np.linalg.norm(n_seg, axis=1, keepdims=True)
        n_seg /= np.where(norm < 1e-300, 1.0, norm)
        n_node = n_seg + np.roll(n_seg, 1, axis=0)
        norm = np.linalg.norm(n_node, axis=1, keepdims=True)
        out.append(n_node / np.where(norm < 1e-12, 1.0, norm))
    return np.vstack(out)


def evaluate_contact(
    x: np.ndarray,
    pairs: list[ContactPair],
    n_candidates: int = 8,
) -> ContactState:
    n_nodes = len(x)
    force = np.zeros((n_nodes, 2))
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    group_active: dict[str, bool] = {}
    group_min_gap: dict[str, float] = {}
    wp_force = np.zeros(2)
    energy = 0.0
    n_active_total = 0

    for pair in pairs:
        group_active.setdefault(pair.group, False)
        group_min_gap.setdefault(pair.group, np.inf)

        if pair.master_xy is not None:
            p1 = pair.master_xy[:, 0]
            p2 = pair.master_xy[:, 1]
        else:
            p1 = x[pair.master_nodes[:, 0]]
            p2 = x[pair.master_nodes[:, 1]]
        n_seg = len(p1)
        if n_seg == 0 or len(pair.slave_nodes) == 0:
            continue
        mid = 0.5 * (p1 + p2)
        # the tree only ranks candidates (gaps use exact coordinates), so it
        # is refreshed only once the masters have drifted a fraction of a
        # segment length since it was built
        if pair._tree is not None:
            old_mid, tree, tol = pair._tree
            if old_mid.shape == mid.shape and np.abs(mid - old_mid).max() <= tol:
                pass
            else:
                pair._tree = None
        if pair._tree is None:
            tree = cKDTree(mid)
            seg_len = np.linalg.norm(p2 - p1, axis=1)
            pair._tree = (mid.copy(), tree, 0.25 * float(np.median(seg_len)))
        else:
            tree = pair._tree[1]
        sx = x[pair.slave_nodes]
        kq = min(n_candidates, n_seg)
        _, cand = tree.query(sx, k=kq)
        cand = cand.reshape(len(sx), kq)

        if pair.self_loop_len:
            # segments touching the slave node or its immediate neighbours
            rel = (cand - pair.slave_loop_pos[:, None]) % pair.self_loop_len
            excl = (rel == 0) | (rel == 1) | (rel == pair.self_loop_len - 1) | (
                rel == pair.self_loop_len - 2
            )
        else:
            excl = np.zeros_like(cand, dtype=bool)

        a = p1[cand]  # (n_s, kq, 2)
        b = p2[cand]
        e = b - a
        ee = np.einsum("skd,skd->sk", e, e)
        ee = np.where(ee < 1e-300, 1.0, ee)
        xi_raw = np.einsum("skd,skd->sk", sx[:, None, :] - a, e) / ee
        xi = np.clip(xi_raw, 0.0, 1.0)
        closest = a + xi[..., None] * e
        diff = sx[:, None, :] - closest
        # outward normal: material lies left of the segment direction
        nrm = np.stack([e[..., 1], -e[..., 0]], axis=-1)
        nrm /= np.linalg.norm(nrm, axis=-1, keepdims=True)
        gap = np.einsum("skd,skd->sk", diff, nrm)
        dist = np.linalg.norm(diff, axis=-1)
        cap = (
            0.75 * np.median(np.sqrt(ee)) * np.ones(len(sx))
            if pair.slave_cap is None
            else pair.slave_cap
        )
        # a candidate only counts when the node projects (nearly) inside the
        # segment -- clamped far projections on convex boundaries fake
        # penetrations -- when it is not deeper behind the face than the cap
        # (being far behind one's own far faces is the normal state), and
        # when the two faces actually oppose each other
        spurious = (xi_raw < -0.25) | (xi_raw > 1.25)
        if pair.slave_loops is not None:
            n_slave = _loop_node_normals(x, pair.slave_loops)
            facing = np.einsum("sd,skd->sk", n_slave, nrm) >= -0.1
            spurious |= facing
        dist = np.where(excl | spurious | (gap < -cap[:, None]), np.inf, dist)
        # bias equidistant candidates by index so knife-edge ties cannot flip
        # the selected segment between Newton iterations
        best = np.argmin(dist + 1e-11 * cand, axis=1)
        rows_idx = np.arange(len(sx))
        g = gap[rows_idx, best]
        d = dist[rows_idx, best]
        valid = np.isfinite(d)
        if valid.any():
            group_min_gap[pair.group] = min(
                group_min_gap[pair.group], float(g[valid].min())
            )
        active = valid & (g < 0.0)
        if not active.any():
            continue
        group_active[pair.group] = True
        n_active_total += int(active.sum())

        s_idx = np.nonzero(active)[0]
        seg_idx = cand[s_idx, best[s_idx]]
        depth = -g[s_idx]
        nn = nrm[s_idx, best[s_idx]]
        xx = xi[s_idx, best[s_idx]]
        kk = pair.slave_k[s_idx]
        # quadratic smoothing of the force law over a shallow band keeps the
        # stiffness continuous at activation (otherwise flat-on-flat contact
        # chatters in Newton)
        g_s = 0.05 * cap[s_idx]
        shallow = depth < g_s
        f_mag = np.where(shallow, kk * depth**2 / (2 * g_s), kk * (depth - 0.5 * g_s))
        k_eff = np.where(shallow, kk * depth / g_s, kk)
        e_node = np.where(
            shallow,
            kk * depth**3 / (6 * g_s),
            0.5 * kk * (depth - 0.5 * g_s) ** 2 + kk * g_s**2 / 24.0,
        )
        f_slave = f_mag[:, None] * nn  # pushes the slave out along +n
        energy += float(e_node.sum())

        slave_ids = pair.slave_nodes[s_idx]
        np.add.at(force, slave_ids, f_slave)
        if pair.wp_slave:
            wp_force += f_slave.sum(axis=0)
        if pair.master_nodes is not None:
            m1 = pair.master_nodes[seg_idx, 0]
            m2 = pair.master_nodes[seg_idx, 1]
            w1 = (1.0 - xx)[:, None]
            w2 = xx[:, None]
            np.add.at(force, m1, -w1 * f_slave)
            np.add.at(force, m2, -w2 * f_slave)
            if pair.wp_master:
                wp_force += -(w1 * f_slave).sum(axis=0) - (w2 * f_slave).sum(axis=0)

        # tangent: k * v v^T with v the gap gradient (frozen normal and xi)
        if pair.master_nodes is not None:
            m1 = pair.master_nodes[seg_idx, 0]
            m2 = pair.master_nodes[seg_idx, 1]
            w = np.stack(
                [np.ones_like(xx), np.ones_like(xx), -(1.0 - xx), -(1.0 - xx), -xx, -xx],
                axis=1,
            )
            comp = np.stack([nn[:, 0], nn[:, 1]] * 3, axis=1)
            dofs = np.stack(
                [2 * slave_ids, 2 * slave_ids + 1, 2 * m1, 2 * m1 + 1, 2 * m2, 2 * m2 + 1],
                axis=1,
            )
            v = w * comp  # (n_a, 6)
        else:
            v = nn  # (n_a, 2)
            dofs = np.stack([2 * slave_ids, 2 * slave_ids + 1], axis=1)
        kvv = k_eff[:, None, None] * v[:, :, None] * v[:, None, :]
        nd = dofs.shape[1]
        rows.append(np.repeat(dofs, nd, axis=1).ravel())
        cols.append(np.tile(dofs, (1, nd)).ravel())
        vals.append(kvv.ravel())

    if rows:
        triplets = (np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))
    else:
        triplets = (np.zeros(0, int), np.zeros(0, int), np.zeros(0))
    return ContactState(
        force=force,
        triplets=triplets,
        group_active=group_active,
        group_min_gap=group_min_gap,
        wp_force=wp_force,
        energy=energy,
        n_active=n_active_total,
    )
