"""Command line front end: synthesize, analyze, sweep, postprocess.

Every run writes into a run directory (unique unless --resume) containing a
config snapshot and the produced artifacts; CFMSYN_RUN_ROOT sets the default
parent for relative run directories.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .domain import (
    DesignVector,
    remove_dangling_members,
    remove_intersecting_members,
    validate_candidate,
)
from .meshing import MeshingError
from .model import candidate_model, dump_model, load_model
from .objectives import segment_response
from .optimizer import (
    PipelineContext,
    RmhcParams,
    evaluate,
    load_checkpoint,
    random_design,
    rmhc,
    save_checkpoint,
)
from .replicate import mirror_model
from .runio import (
    convergence_csv,
    history_csv,
    history_summary,
    member_energy_csv,
    records_csv,
    RECORDS_COLUMNS,
    record_row,
)
from .solver import SolverParams
from .svgout import curves_svg, silhouette_svg


def _run_dir(args, resume_ok=False) -> Path:
    root = Path(os.environ.get("CFMSYN_RUN_ROOT", "."))
    rd = Path(args.run_dir)
    if not rd.is_absolute():
        rd = root / rd
    if rd.exists() and any(rd.iterdir()):
        if not (resume_ok and args.resume):
            raise SystemExit(f"run directory {rd} already exists (use --resume to continue)")
    rd.mkdir(parents=True, exist_ok=True)
    return rd


def _load_ctx(args) -> tuple[dict, PipelineContext]:
    cfg = cfgmod.load_config(args.config)
    cfg = cfgmod.apply_overrides(cfg, args.override or [])
    return cfg, cfgmod.build_context(cfg)


def _initial_design(cfg: dict, ctx: PipelineContext, params: RmhcParams):
    spec = cfg.get("optimizer", {}).get("initial", "random")
    if spec == "random":
        return None
    if spec == "full":
        from .domain import _freeze_reinforcement

        gs = ctx.gs
        n = gs.n_members
        lo = np.array([ctx.bounds.width[0]])
        dv = DesignVector(
            topology=np.ones(n, np.uint8),
            slopes=np.zeros((n, 2)),
            widths=np.full(n, 0.5 * (ctx.bounds.width[0] + ctx.bounds.width[1])),
            thickness=0.5 * (ctx.bounds.thickness[0] + ctx.bounds.thickness[1]),
            input_force=ctx.bounds.input_force[1],
            vertex_offsets=np.zeros((gs.n_vertices, 2)),
            surfaces=np.zeros((ctx.spec.surfaces_allowed, 7)),
        )
        return _freeze_reinforcement(dv, gs)
    with open(spec) as fh:
        return DesignVector.from_jsonable(json.load(fh))


def _emit_best(run_dir: Path, ctx: PipelineContext, best: DesignVector, tag="best"):
    """Re-evaluate the best candidate and write all its artifacts."""
    res = evaluate(best, ctx)
    (run_dir / f"{tag}_design.json").write_text(json.dumps(best.to_jsonable()) + "\n")
    if res.model is not None:
        (run_dir / f"{tag}_geometry.txt").write_text(dump_model(res.model))
    if res.history is not None:
        h = res.history
        (run_dir / f"{tag}_history.csv").write_text(history_csv(h))
        (run_dir / f"{tag}_member_energy.csv").write_text(member_energy_csv(h))
        curves_svg(
            [("F_out", h.delta_in(), h.f_out()), ("F_in", h.delta_in(), h.f_in())],
            path=run_dir / f"{tag}_curves.svg",
            marker_y=ctx.objective.target_force or None,
        )
        if res.model is not None:
            disp = h.steps[-1].displacement
            silhouette_svg(
                res.model.mesh,
                displacement=disp,
                surfaces=res.model.surfaces,
                path=run_dir / f"{tag}_shape.svg",
            )
    (run_dir / f"{tag}_summary.json").write_text(
        json.dumps(
            {
                "value": res.value,
                "terms": res.terms,
                "note": res.note,
                **(history_summary(res.history, ctx.objective) if res.history else {}),
            },
            indent=2,
            default=float,
        )
        + "\n"
    )
    return res


def cmd_synthesize(args) -> int:
    cfg, ctx = _load_ctx(args)
    run_dir = _run_dir(args, resume_ok=True)
    params = cfgmod.build_rmhc_params(cfg, seed_override=args.seed)
    snapshot_every = args.snapshot_every or cfg.get("optimizer", {}).get("snapshot_every", 0)
    (run_dir / "config_snapshot.json").write_text(cfgmod.config_snapshot(cfg))

    ckpt_path = run_dir / "checkpoint.json"
    records_path = run_dir / "records.csv"
    state = None
    if args.resume and ckpt_path.exists():
        state = load_checkpoint(ckpt_path)
        print(f"resuming at evaluation {state.evaluations}")
    if not records_path.exists() or state is None:
        records_path.write_text(RECORDS_COLUMNS + "\n")

    rec_fh = open(records_path, "a")
    snap_dir = run_dir / "snapshots"
    all_records = []

    def on_record(rec, live_state):
        rec_fh.write(record_row(rec) + "\n")
        rec_fh.flush()
        all_records.append(rec)
        if rec.index % 25 == 0:
            save_checkpoint(ckpt_path, live_state)
        if snapshot_every and rec.index % snapshot_every == 0:
            snap_dir.mkdir(exist_ok=True)
            _emit_best(snap_dir, ctx, live_state.best, tag=f"eval{rec.index:06d}")
        if rec.index % 10 == 0 or rec.accepted:
            print(
                f"eval {rec.index}: value {rec.value:.6g} best {rec.best_value:.6g}"
                + (" *" if rec.accepted else "")
            )

    t0 = time.time()
    initial = _initial_design(cfg, ctx, params)
    best, best_value, _, final_state = rmhc(
        ctx, params, initial=initial, state=state, on_record=on_record
    )
    rec_fh.close()
    save_checkpoint(ckpt_path, final_state)
    (run_dir / "convergence.csv").write_text(convergence_csv(all_records))
    _emit_best(run_dir, ctx, best)
    print(
        f"done: {final_state.evaluations} evaluations, best {best_value:.6g}, "
        f"{time.time() - t0:.0f} s; artifacts in {run_dir}"
    )
    return 0


def cmd_analyze(args) -> int:
    run_dir = _run_dir(args, resume_ok=False)
    objective = None
    solver = SolverParams()
    if args.config:
        cfg = cfgmod.load_config(args.config)
        cfg = cfgmod.apply_overrides(cfg, args.override or [])
        from .config import _dataclass_from

        solver = _dataclass_from(cfg.get("solver", {}), SolverParams, "solver")
        if "objective" in cfg:
            from .objectives import ObjectiveConfig

            objective = _dataclass_from(cfg["objective"], ObjectiveConfig, "objective")
    model = load_model(Path(args.geometry).read_text())
    solver = replace(solver, n_steps=model.schedule.n_steps)
    history = model.run(solver)
    (run_dir / "history.csv").write_text(history_csv(history))
    (run_dir / "member_energy.csv").write_text(member_energy_csv(history))
    steps = (
        [int(s) for s in args.snapshot_steps.split(",")]
        if args.snapshot_steps
        else [len(history.steps) - 1]
    )
    for k in steps:
        k = max(0, min(k, len(history.steps) - 1))
        silhouette_svg(
            model.mesh,
            displacement=history.steps[k].displacement,
            surfaces=model.surfaces,
            path=run_dir / f"deformed_step{k:03d}.svg",
        )
    curves_svg(
        [("F_out", history.delta_in(), history.f_out()),
         ("F_in", history.delta_in(), history.f_in())],
        path=run_dir / "curves.svg",
    )
    summary = history_summary(history, objective)
    (run_dir / "summary.json").write_text(json.dumps(summary, indent=2, default=float) + "\n")
    if not history.converged:
        print(f"non-convergence: last converged step {len(history.steps) - 1}")
    print(json.dumps(summary, indent=2, default=float))
    return 0


def _load_design(path) -> DesignVector:
    with open(path) as fh:
        return DesignVector.from_jsonable(json.load(fh))


def cmd_sweep(args) -> int:
    cfg, ctx = _load_ctx(args)
    run_dir = _run_dir(args)
    dv = _load_design(args.design)
    stiffness = [float(s) for s in args.stiffness.split(",")] if args.stiffness else [1.0]
    shapes = args.shapes.split(",") if args.shapes else [ctx.spec.workpiece.shape]
    if ctx.spec.workpiece is None:
        raise SystemExit("sweep needs a workpiece block in the config")
    curves = []
    rows = ["variant,step,load_factor,delta_in_mm,F_in_N,F_out_N,converged"]
    for shape in shapes:
        for mult in stiffness:
            label = f"{shape}_E x{mult:g}".replace(" ", "")
            wp0 = ctx.spec.workpiece
            from .domain import NeoHookeanMaterial, Workpiece

            wp = Workpiece(
                shape=shape,
                size=wp0.size,
                material=NeoHookeanMaterial(wp0.material.c10 * mult, wp0.material.d1 / mult),
                gap=wp0.gap,
                placement=wp0.placement,
                mesh_size=wp0.mesh_size,
                fixed_side=wp0.fixed_side,
                thickness=wp0.thickness,
            )
            spec = replace(ctx.spec, workpiece=wp)
            dv_clean = remove_intersecting_members(dv, ctx.gs)
            validity = validate_candidate(dv_clean, ctx.gs, spec)
            try:
                model, _ = candidate_model(
                    dv_clean, ctx.gs, spec, ctx.mesh_params, ctx.continuum,
                    n_steps=ctx.solver_params.n_steps,
                    member_ids=validity.component_members if validity.connected else None,
                )
            except MeshingError as err:
                print(f"{label}: meshing failed ({err}); skipped")
                continue
            h = model.run(ctx.solver_params)
            if not h.converged:
                print(f"{label}: non-convergence after step {len(h.steps) - 1}; curve truncated")
            curves.append((label, h.delta_in(), h.f_out()))
            for k, s in enumerate(h.steps):
                rows.append(
                    f"{label},{k},{s.load_factor!r},{s.delta_in!r},{s.f_in!r},{s.f_out!r},"
                    f"{1 if s.converged else 0}"
                )
    (run_dir / "sweep.csv").write_text("\n".join(rows) + "\n")
    curves_svg(curves, ylabel="F_out (N)", path=run_dir / "sweep_curves.svg")
    print(f"swept {len(curves)} variants; artifacts in {run_dir}")
    return 0


def cmd_postprocess(args) -> int:
    cfg, ctx = _load_ctx(args)
    run_dir = _run_dir(args)
    dv = _load_design(args.design)
    dv = remove_intersecting_members(dv, ctx.gs)
    validity = validate_candidate(dv, ctx.gs, ctx.spec)
    if not validity.connected:
        raise SystemExit("design is not a connected input-output-support structure")
    model, meta = candidate_model(
        dv, ctx.gs, ctx.spec, ctx.mesh_params, ctx.continuum,
        n_steps=ctx.solver_params.n_steps, member_ids=validity.component_members,
    )
    history = model.run(ctx.solver_params)
    eps = args.energy_threshold * max(history.final_strain_energy(), 1e-300)
    trimmed = remove_dangling_members(dv, history.member_peak_energy(), eps, ctx.gs, ctx.spec)
    n_removed = int(dv.topology.sum() - trimmed.topology.sum())
    if n_removed == 0 and any(
        e < eps for e in history.member_peak_energy().values()
    ):
        print("dangling members present but removal would disconnect the ports; kept")
    else:
        print(f"removed {n_removed} dangling members")
    validity = validate_candidate(trimmed, ctx.gs, ctx.spec)
    model, meta = candidate_model(
        trimmed, ctx.gs, ctx.spec, ctx.mesh_params, ctx.continuum,
        n_steps=ctx.solver_params.n_steps, member_ids=validity.component_members,
    )
    (run_dir / "half_design.json").write_text(json.dumps(trimmed.to_jsonable()) + "\n")
    if args.mirror:
        full = mirror_model(model, meta, ctx.spec.symmetry, gap=args.gap, scale=args.scale)
        (run_dir / "full_geometry.txt").write_text(dump_model(full))
        h = full.run(ctx.solver_params)
        (run_dir / "full_history.csv").write_text(history_csv(h))
        silhouette_svg(
            full.mesh,
            displacement=h.steps[-1].displacement,
            surfaces=full.surfaces,
            path=run_dir / "full_shape.svg",
        )
        curves_svg(
            [("F_out", h.delta_in(), h.f_out()), ("F_in", h.delta_in(), h.f_in())],
            path=run_dir / "full_curves.svg",
        )
        (run_dir / "full_summary.json").write_text(
            json.dumps(history_summary(h, None), indent=2, default=float) + "\n"
        )
        if not h.converged:
            print(f"full-mechanism analysis stopped at step {len(h.steps) - 1}")
    else:
        (run_dir / "half_geometry.txt").write_text(dump_model(model))
        h = model.run(ctx.solver_params)
        (run_dir / "half_history.csv").write_text(history_csv(h))
        silhouette_svg(
            model.mesh, displacement=h.steps[-1].displacement,
            surfaces=model.surfaces, path=run_dir / "half_shape.svg",
        )
    print(f"artifacts in {run_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="cfmsyn",
        description="Constant-force compliant mechanism synthesis and analysis",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="problem configuration JSON")
        sp.add_argument("--run-dir", required=True, help="output directory")
        sp.add_argument("--override", action="append", metavar="KEY=VALUE",
                        help="config override with a dotted key path")

    sp = sub.add_parser("synthesize", help="evolve a mechanism with the hill climber")
    common(sp)
    sp.add_argument("--seed", type=int, default=None, help="override the optimizer seed")
    sp.add_argument("--resume", action="store_true", help="continue from the checkpoint")
    sp.add_argument("--snapshot-every", type=int, default=0,
                    help="emit SVG snapshots of the best design every N evaluations")
    sp.set_defaults(func=cmd_synthesize)

    sp = sub.add_parser("analyze", help="solve one exported geometry file")
    sp.add_argument("--geometry", required=True, help="cfm-model geometry file")
    common(sp, config_required=False)
    sp.add_argument("--snapshot-steps", default="", help="comma list of steps to render")
    sp.set_defaults(func=cmd_analyze, resume=False)

    sp = sub.add_parser("sweep", help="re-analyze a design against workpiece variants")
    common(sp)
    sp.add_argument("--design", required=True, help="design-vector JSON")
    sp.add_argument("--stiffness", default="", help="comma list of stiffness multipliers")
    sp.add_argument("--shapes", default="", help="comma list of workpiece shapes")
    sp.set_defaults(func=cmd_sweep, resume=False)

    sp = sub.add_parser("postprocess", help="dangling removal, mirroring and scaling")
    common(sp)
    sp.add_argument("--design", required=True, help="design-vector JSON")
    sp.add_argument("--mirror", action="store_true", help="replicate about the symmetry line")
    sp.add_argument("--gap", type=float, default=5.0, help="gap between mirrored halves (mm)")
    sp.add_argument("--scale", type=float, default=1.0, help="uniform scale factor")
    sp.add_argument("--energy-threshold", type=float, default=1e-9,
                    help="dangling threshold relative to the final total strain energy")
    sp.set_defaults(func=cmd_postprocess, resume=False)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except cfgmod.ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
