"""Acceptance suite: one test per headline criterion, each printing a
PASS/FAIL line with its measured numbers.

The evolved-topology results of long stochastic runs are not bitwise
reproducible, so acceptance rests on analytic benchmarks, oracle
equivalence, property suites, and a reduced-budget end-to-end run.
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import ndimage

from cfmsyn.config import apply_overrides, build_context, build_rmhc_params, load_config
from cfmsyn.contact import evaluate_contact
from cfmsyn.domain import (
    DesignVector,
    random_design,
    remove_intersecting_members,
    validate_candidate,
)
from cfmsyn.material import (
    PlaneStressNeoHookean,
    elastic_to_neo_hookean,
    neo_hookean_to_elastic,
)
from cfmsyn.meshing import MeshingError, euler_inner_loop_count, mesh_candidate
from cfmsyn.objectives import ObjectiveConfig, objective_value, segment_response
from cfmsyn.optimizer import EvalResult, RmhcParams, rmhc, save_checkpoint, load_checkpoint
from cfmsyn.runio import history_csv, records_csv
from cfmsyn.solver import SolverParams, first_contact_displacement

from conftest import design_with
from solver_fixtures import (
    cantilever_model,
    guided_block_model,
    guided_pusher_model,
    ring_contact_model,
    strip_on_column_model,
)
from test_material import uniaxial_nominal_stress
from test_objectives import make_history


def report(criterion, ok, detail):
    print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
    assert ok, f"criterion {criterion}: {detail}"


class TestCriterion1Cantilever:
    def test_tip_deflection_within_2_percent(self):
        t0 = time.perf_counter()
        model, tip = cantilever_model(nx=400, ny=8, peak=1.2e-4, n_steps=2)
        hist = model.run(SolverParams(n_steps=2))
        wall = time.perf_counter() - t0
        tipdef = -hist.steps[-1].displacement[tip, 1]
        I = 3.0 * 2.0**3 / 12.0
        exact = 1.2e-4 * 100.0**3 / (3.0 * 20.0 * I)
        rel = abs(tipdef - exact) / exact
        assert tipdef < 0.011 * 100.0  # small-deflection regime
        report(
            "1 (cantilever benchmark)",
            hist.converged and rel < 0.02 and wall < 5.0,
            f"tip {tipdef:.5f} mm vs {exact:.5f} mm ({rel:.2%}), wall {wall:.2f} s",
        )

    def test_mesh_refinement_doubling_below_1_percent(self):
        tips = {}
        for nx, ny in ((400, 8), (800, 16)):
            model, tip = cantilever_model(nx=nx, ny=ny, peak=1.2e-4, n_steps=2)
            hist = model.run(SolverParams(n_steps=2))
            tips[nx] = -hist.steps[-1].displacement[tip, 1]
        change = abs(tips[800] - tips[400]) / tips[400]
        report(
            "1b (refinement monotonicity)",
            change < 0.01,
            f"doubling n_el and n_ew changes the tip by {change:.3%}",
        )


class TestCriterion2Material:
    def test_uniaxial_response_against_symbolic_oracle(self):
        mat = PlaneStressNeoHookean(0.376, 1.020)
        from scipy.optimize import brentq

        impl = []
        oracle = []
        for stretch in np.linspace(0.8, 1.3, 11):
            l2 = brentq(
                lambda l2: mat.evaluate(
                    np.array([[[stretch**2, 0.0], [0.0, l2 * l2]]])
                )[0][0, 1],
                0.3,
                3.0,
                xtol=1e-14,
            )
            S, *_ = mat.evaluate(np.array([[[stretch**2, 0.0], [0.0, l2 * l2]]]))
            impl.append(stretch * S[0, 0])
            oracle.append(uniaxial_nominal_stress(mat, stretch))
        impl, oracle = np.array(impl), np.array(oracle)
        # the stress crosses zero at the undeformed state, so normalize by the
        # stress scale of the sweep rather than pointwise
        worst = float(np.abs(impl - oracle).max() / np.abs(oracle).max())
        report(
            "2 (uniaxial response)",
            worst < 0.005,
            f"worst deviation from the energy-derivative oracle {worst:.3%} over [0.8, 1.3]",
        )

    def test_conversion_round_trip(self):
        worst = 0.0
        for E, nu in ((20.0, 0.33), (2.0, 0.33), (77.7, 0.05)):
            c10, d1 = elastic_to_neo_hookean(E, nu)
            E2, nu2 = neo_hookean_to_elastic(c10, d1)
            worst = max(worst, abs(E2 - E) / E, abs(nu2 - nu) / max(abs(nu), 1e-12))
        report("2b (conversion identity)", worst < 1e-12, f"round-trip error {worst:.2e}")


class TestCriterion3ContactBalance:
    def test_strip_vs_workpiece_force_balance(self):
        model = guided_block_model(peak=0.5, n_steps=10)
        params = SolverParams(n_steps=10)
        hist = model.run(params)
        worst_balance = max(
            abs(s.f_out - s.f_in) / s.f_in for s in hist.steps[1:]
        )
        worst_third_law = 0.0
        pairs = model.contact_pairs(params)
        for s in hist.steps[1:]:
            st = evaluate_contact(model.mesh.nodes + s.displacement, pairs)
            worst_third_law = max(worst_third_law, float(np.abs(st.force.sum(axis=0)).max()))
        report(
            "3 (contact force balance)",
            hist.converged and worst_third_law < 1e-10 and worst_balance < 1e-4,
            f"third law {worst_third_law:.2e} N, resultant vs load {worst_balance:.2e} rel",
        )


class TestCriterion4Energy:
    @pytest.mark.parametrize(
        "name,builder,params",
        [
            ("straight strip", lambda: cantilever_model(nx=100, ny=4, peak=2.4e-4, n_steps=50)[0], {}),
            ("ring in self-contact", lambda: ring_contact_model(peak=60.0, n_steps=60), {"contact_candidates": 12}),
            ("strip plus workpiece", lambda: strip_on_column_model(peak=0.7, n_steps=50), {"contact_candidates": 12}),
        ],
    )
    def test_external_work_matches_stored_energy(self, name, builder, params):
        model = builder()
        n = model.schedule.n_steps
        hist = model.run(SolverParams(n_steps=n, **params))
        work = hist.external_work()
        stored = hist.final_strain_energy() + hist.steps[-1].contact_energy
        rel = abs(work - stored) / work
        report(
            f"4 ({name})",
            hist.converged and rel < 0.01 and n >= 50,
            f"work {work:.6g} vs stored {stored:.6g} ({rel:.3%}) at {n} steps",
        )


class TestCriterion5ObjectiveOracles:
    def test_ten_synthetic_histories_match_hand_values(self):
        c_out = ObjectiveConfig(kind="output_weighted", weight_slope=1e6, weight_range=1e2,
                                weight_force=1e6, target_force=0.02, gate_factor=1.0)
        worst = 0.0
        checked = 0

        def hand_segments(delta, force, f_ref, d_ref):
            dl = np.diff(delta)
            ang = [math.atan((df / f_ref) / (dd / d_ref)) for df, dd in zip(np.diff(force), dl)]
            return dl, ang

        rng = np.random.default_rng(5)
        for trial in range(10):
            n = int(rng.integers(3, 8))
            delta = np.cumsum(rng.uniform(0.5, 4.0, n))
            f_out = rng.uniform(0.005, 0.08, n)
            f_in = rng.uniform(0.05, 2.0, n)
            h = make_history(delta, f_out, f_in=f_in)
            for kind in ("output_weighted", "output_ratio", "input_weighted", "input_ratio"):
                cfg = ObjectiveConfig(
                    kind=kind, weight_slope=1e6, weight_range=1e2, weight_force=1e6,
                    weight_output=1e2 if kind == "input_weighted" else 0.0,
                    target_force=0.02, gate_factor=1.0,
                )
                value, _ = objective_value(h, cfg, None)
                f = f_out if kind.startswith("output") else f_in
                f_ref = float(np.max(np.abs(f)))
                if kind.startswith("output"):
                    f_ref = max(f_ref, 0.02)
                d_ref = float(delta[-1] - delta[0])
                dl, ang = hand_segments(delta, f, f_ref, d_ref)
                slope = math.sqrt(sum(a * a for a in ang))
                span = float(sum(dl))
                if kind == "output_weighted":
                    hand = 1e6 * slope + 1e2 / span + 1e6 * abs(f_out[0] - 0.02)
                elif kind == "output_ratio":
                    hand = abs(f_out[0] - 0.02) * slope / span
                elif kind == "input_weighted":
                    hand = 1e6 * slope + 1e2 / span + 1e6 * abs(f_in[0]) + 1e2 / f_out[-1]
                else:
                    hand = abs(f_in[0] / f_out[0]) * slope / span
                worst = max(worst, abs(value - hand) / max(abs(hand), 1e-300))
                checked += 1
        # the documented collapse: output_ratio vanishes when the gate-sample
        # force hits the target exactly, whatever the slopes do
        h = make_history([3, 6, 9], [0.02, 0.07, 0.01])
        v_collapse, _ = objective_value(
            h, ObjectiveConfig(kind="output_ratio", target_force=0.02, gate_factor=1.0), None
        )
        report(
            "5 (objective oracle equivalence)",
            worst < 1e-12 and v_collapse == 0.0 and checked == 40,
            f"{checked} objective values within {worst:.2e} of hand arithmetic; "
            f"ratio objective collapses to {v_collapse}",
        )


def rasterized_hole_count(mesh, res=1024):
    """Flood-fill oracle: rasterize the mechanism quads, count enclosed voids.

    Quad interiors are filled by pixel-center tests and quad edges are traced
    explicitly, so compressed junction quads thinner than one pixel cannot
    leave cracks that would split the material.
    """
    sel = mesh.body == 0
    quads = mesh.quads[sel]
    pts = mesh.nodes
    lo = pts.min(axis=0) - 1.0
    hi = pts.max(axis=0) + 1.0
    scale = (res - 1) / max(hi - lo)
    img = np.zeros((res, res), bool)
    for q in quads:
        poly = (pts[q] - lo) * scale
        x0, y0 = np.floor(poly.min(axis=0)).astype(int)
        x1, y1 = np.ceil(poly.max(axis=0)).astype(int) + 1
        xs = np.arange(max(x0, 0), min(x1, res))
        ys = np.arange(max(y0, 0), min(y1, res))
        if not len(xs) or not len(ys):
            continue
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        P = np.stack([X.ravel(), Y.ravel()], axis=1) + 0.5
        inside = np.ones(len(P), bool)
        for k in range(4):
            a, b = poly[k], poly[(k + 1) % 4]
            cross = (b[0] - a[0]) * (P[:, 1] - a[1]) - (b[1] - a[1]) * (P[:, 0] - a[0])
            inside &= cross >= 0
        img[X.ravel()[inside], Y.ravel()[inside]] = True
        for k in range(4):
            a, b = poly[k], poly[(k + 1) % 4]
            n = max(2, int(np.ceil(np.hypot(*(b - a)) * 3)))
            t = np.linspace(0.0, 1.0, n)
            # a point at scaled coordinate c lies in pixel floor(c), matching
            # the pixel-center convention of the interior fill
            px = np.clip(np.floor(a[0] + t * (b[0] - a[0])).astype(int), 0, res - 1)
            py = np.clip(np.floor(a[1] + t * (b[1] - a[1])).astype(int), 0, res - 1)
            img[px, py] = True
    background, _ = ndimage.label(~img)
    edge_labels = set(np.unique(background[0, :])) | set(np.unique(background[-1, :]))
    edge_labels |= set(np.unique(background[:, 0])) | set(np.unique(background[:, -1]))
    edge_labels.discard(0)
    all_labels = set(np.unique(background))
    all_labels.discard(0)
    # a real hole spans at least a member width (thousands of pixels); a few
    # enclosed pixels at a re-entrant corner apex are quantization noise
    sizes = ndimage.sum_labels(np.ones_like(background), background,
                               sorted(all_labels - edge_labels))
    return int(np.sum(np.asarray(sizes) >= 16))


class TestCriterion6Loops:
    def test_flood_fill_oracle_on_random_candidates(self, one_block, reference_problem):
        from cfmsyn.domain import DomainSpec, Support, build_ground_structure

        spec1, gs1, bounds1 = one_block
        spec2 = DomainSpec(
            width=50.0, height=25.0, blocks_x=2, blocks_y=1,
            input_vertex=0, input_direction=(1.0, 0.0),
            output_vertices=(4,), output_direction=(1.0, 0.0),
            supports=(Support(1, "fixed"),),
        )
        gs2 = build_ground_structure(spec2, bounds1)
        ctx = reference_problem
        matched = 0
        for seed in range(200):
            if matched >= 20:
                break
            if seed % 2 == 0:
                gs, spec = gs1, spec1
            else:
                gs, spec = gs2, spec2
            dv = random_design(gs, bounds1, seed)
            dv = remove_intersecting_members(dv, gs)
            rep = validate_candidate(dv, gs, spec)
            if not rep.connected:
                continue
            try:
                mesh, _ = mesh_candidate(dv, gs, spec, ctx.mesh_params,
                                         member_ids=rep.component_members)
            except MeshingError:
                continue
            inner = sum(1 for lp in mesh.loops if lp.body == 0 and not lp.is_outer)
            oracle = rasterized_hole_count(mesh)
            if inner != oracle:
                report("6 (loop oracle)", False,
                       f"seed {seed}: extractor {inner} vs flood fill {oracle}")
            matched += 1
        report(
            "6 (loop oracle equivalence)",
            matched >= 20,
            f"{matched} random small candidates matched the rasterized flood fill",
        )

    def test_nine_inner_loop_candidate(self, reference_problem):
        ctx = reference_problem
        gs, spec = ctx.gs, ctx.spec
        interior_vertical = []
        for i in range(5):
            for j in range(3):
                vid = 16 + i * 3 + j
                a, _ = gs.members[vid]
                if 0 < gs.vertex_pos[a][0] < 100:
                    interior_vertical.append(vid)
        keep = [m for m in range(31) if m not in interior_vertical[:3]]
        dv = design_with(gs, keep, widths=2.0)
        rep = validate_candidate(dv, gs, spec)
        mesh, _ = mesh_candidate(dv, gs, spec, ctx.mesh_params,
                                 member_ids=rep.component_members)
        inner = sum(1 for lp in mesh.loops if lp.body == 0 and not lp.is_outer)
        oracle = rasterized_hole_count(mesh)
        report(
            "6b (one outer, nine inner)",
            inner == 9 and oracle == 9 and euler_inner_loop_count(mesh, 0) == 9,
            f"extractor {inner}, euler {euler_inner_loop_count(mesh, 0)}, flood fill {oracle}",
        )


class TestCriterion7Rmhc:
    def test_hamming_toy_and_determinism(self, one_block, tmp_path):
        spec, gs, bounds = one_block
        from cfmsyn.meshing import MeshParams
        from cfmsyn.optimizer import PipelineContext

        from conftest import MECH_MAT

        ctx = PipelineContext(
            spec=spec, gs=gs, bounds=bounds, mesh_params=MeshParams(),
            solver_params=SolverParams(),
            objective=ObjectiveConfig(kind="output_weighted"), continuum=MECH_MAT,
        )
        target = np.array([1, 0, 1, 1, 0, 0, 1, 0], np.uint8)

        def ev(dv):
            d = float(np.sum(dv.topology != target))
            return EvalResult(value=d, terms={})

        hits = 0
        monotone = True
        for seed in range(100):
            _, best_value, records, _ = rmhc(
                ctx, RmhcParams(p_mut=0.08, max_evaluations=5000, seed=seed), evaluator=ev
            )
            if best_value == 0.0:
                hits += 1
            best = [r.best_value for r in records]
            monotone &= all(b2 <= b1 for b1, b2 in zip(best, best[1:]))

        params = RmhcParams(p_mut=0.08, max_evaluations=120, seed=17)
        full = rmhc(ctx, params, evaluator=ev)[2]
        *_, recs_a, state = rmhc(ctx, RmhcParams(p_mut=0.08, max_evaluations=60, seed=17),
                                 evaluator=ev)
        ck = tmp_path / "ck.json"
        save_checkpoint(ck, state)
        *_, recs_b, _ = rmhc(ctx, params, state=load_checkpoint(ck), evaluator=ev)
        key = lambda rs: [(r.index, r.value, r.accepted, r.candidate_hash) for r in rs]
        resume_ok = key(recs_a) + key(recs_b) == key(full)
        report(
            "7 (hill-climber behavior)",
            hits >= 95 and monotone and resume_ok,
            f"{hits}/100 seeds reached the target within 5000 evaluations; "
            f"monotone best-so-far {monotone}; checkpoint/resume bitwise {resume_ok}",
        )


class TestCriterion8ReducedSynthesis:
    def test_reduced_budget_end_to_end(self, tmp_path):
        cfg = load_config("configs/constant_output_a.json")
        ctx = build_context(cfg)
        params = build_rmhc_params(cfg)
        assert params.max_evaluations == 2000
        assert ctx.objective.target_force == 0.02 and ctx.objective.gate_factor == 1.2
        assert ctx.mesh_params.n_el == 20 and ctx.mesh_params.n_ew == 4
        assert ctx.spec.blocks_x == 4 and ctx.spec.blocks_y == 3

        from cfmsyn.optimizer import evaluate

        t0 = time.perf_counter()
        best, best_value, records, state = rmhc(ctx, params)
        wall = time.perf_counter() - t0

        initial = random_design(ctx.gs, ctx.bounds, params.seed)
        res0 = evaluate(initial, ctx)
        seg0 = segment_response(res0.history, ctx.objective)
        res_best = evaluate(best, ctx)
        seg_best = segment_response(res_best.history, ctx.objective)
        slope0 = float(np.sum(seg0.angles**2))
        slope1 = float(np.sum(seg_best.angles**2))
        reduction = 1.0 - slope1 / slope0

        h = res_best.history
        onset = first_contact_displacement(h)
        pre_contact_zero = all(
            s.f_out == 0.0 for s in h.steps if s.delta_in < onset - 1e-9
        )
        flags = [s.contact_active.get("workpiece", False) for s in h.steps]
        persistent = any(flags) and all(flags[flags.index(True):])

        run_dir = tmp_path / "accept_run"
        run_dir.mkdir()
        (run_dir / "records.csv").write_text(records_csv(records))
        (run_dir / "best_history.csv").write_text(history_csv(h))
        from cfmsyn.model import dump_model, load_model
        from cfmsyn.svgout import curves_svg

        (run_dir / "best_geometry.txt").write_text(dump_model(res_best.model))
        curves_svg([("F_out", h.delta_in(), h.f_out())], path=run_dir / "curves.svg")
        save_checkpoint(run_dir / "checkpoint.json", state)
        # schema validation: artifacts reload / reparse
        assert load_model((run_dir / "best_geometry.txt").read_text()).mesh.n_nodes > 0
        assert load_checkpoint(run_dir / "checkpoint.json").evaluations == 2000
        header = (run_dir / "records.csv").read_text().splitlines()[0]
        assert header.startswith("index,value,accepted,best_value")
        assert (run_dir / "curves.svg").read_text().startswith("<?xml")
        assert len(records) == 2000

        report(
            "8 (reduced-budget synthesis)",
            (wall < 4 * 3600) and reduction >= 0.70 and pre_contact_zero
            and persistent and h.converged,
            f"wall {wall / 3600:.2f} h; gated slope-squared sum {slope0:.4f} -> {slope1:.4f} "
            f"({reduction:.1%} reduction); F_out zero before onset {pre_contact_zero}; "
            f"contact persistent {persistent}; best objective {best_value:.6g}",
        )


class TestCriterion9WorkpieceSweep:
    def test_stiffer_workpiece_raises_the_plateau(self):
        curves = {}
        for mult in (0.5, 1.0, 2.0):
            model = guided_pusher_model(gap=1.0, peak=0.8, n_steps=40, wp_E_scale=mult)
            hist = model.run(SolverParams(n_steps=40, contact_candidates=12))
            assert hist.converged
            curves[mult] = (hist.delta_in(), hist.f_out())
        # compare the transmitted force at common post-contact displacements
        lo = max(c[0][np.nonzero(c[1] > 1e-6)[0][0]] for c in curves.values())
        hi = min(c[0][-1] for c in curves.values())
        probes = np.linspace(lo + 0.25 * (hi - lo), hi, 5)
        levels = {m: np.interp(probes, d, f) for m, (d, f) in curves.items()}
        ordered = all(
            np.all(levels[0.5][k] < levels[1.0][k]) and np.all(levels[1.0][k] < levels[2.0][k])
            for k in range(len(probes))
        )
        report(
            "9 (workpiece stiffness sweep)",
            ordered,
            "plateau force ordering 0.5x < 1x < 2x at common displacements: "
            + ", ".join(f"{m}x: {levels[m][-1]:.4f} N" for m in (0.5, 1.0, 2.0)),
        )
