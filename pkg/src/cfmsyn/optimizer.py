"""Random-mutation hill climbing over candidate designs.

The evaluation pipeline runs intersection deletion, connectivity/overlap
screening, meshing, the nonlinear contact solve and the objective; every
failure mode maps to a penalty value, so the evaluator is total.  The
climber mutates the current iterate, accepts strictly improving values (ties
optionally), and is bitwise reproducible for a fixed seed, including across
checkpoint/resume.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .domain import (
    BoundsTable,
    DesignVector,
    DomainSpec,
    GroundStructure,
    mutate,
    random_design,
    remove_intersecting_members,
    validate_candidate,
)
from .material import PlaneStressNeoHookean
from .meshing import MeshingError, MeshParams
from .model import AnalysisModel, candidate_model
from .objectives import ObjectiveConfig, objective_value
from .solver import DeflectionHistory, SolverParams


@dataclass
class PipelineContext:
    """Everything a candidate evaluation needs."""

    spec: DomainSpec
    gs: GroundStructure
    bounds: BoundsTable
    mesh_params: MeshParams
    solver_params: SolverParams
    objective: ObjectiveConfig
    continuum: PlaneStressNeoHookean


@dataclass
class EvalResult:
    value: float
    terms: dict[str, float]
    history: DeflectionHistory | None = None
    model: AnalysisModel | None = None
    note: str = ""


def evaluate(dv: DesignVector, ctx: PipelineContext) -> EvalResult:
    """Total evaluator: any candidate badness becomes a penalty value."""
    dv = remove_intersecting_members(dv, ctx.gs, ctx.mesh_params.intersect_samples)
    validity = validate_candidate(dv, ctx.gs, ctx.spec)
    if not validity.connected:
        value, terms = objective_value(None, ctx.objective, validity)
        return EvalResult(value=value, terms=terms, note="disconnected")
    try:
        model, _ = candidate_model(
            dv,
            ctx.gs,
            ctx.spec,
            ctx.mesh_params,
            ctx.continuum,
            n_steps=ctx.solver_params.n_steps,
            member_ids=validity.component_members,
        )
    except MeshingError as err:
        value, terms = objective_value(None, ctx.objective, validity)
        return EvalResult(value=value, terms=terms, note=f"meshing: {err}")
    history = model.run(ctx.solver_params)
    value, terms = objective_value(history, ctx.objective, validity)
    return EvalResult(value=value, terms=terms, history=history, model=model)


@dataclass
class RmhcParams:
    p_mut: float = 0.08
    max_evaluations: int = 1000
    seed: int = 0
    accept_ties: bool = False
    restarts: int = 0
    restart_keep_topology: bool = True
    # >1 evaluates several mutants of the current iterate per round and
    # accepts the best improving one; changes the search trajectory but stays
    # seed-deterministic for a fixed width
    speculative_width: int = 1
    workers: int = 1  # process pool size for speculative evaluation

    def __post_init__(self):
        if not 0 < self.p_mut < 1:
            raise ValueError("mutation probability must lie in (0, 1)")
        if self.max_evaluations < 1:
            raise ValueError("need at least one evaluation")
        if self.speculative_width < 1 or self.workers < 1:
            raise ValueError("speculative width and workers must be >= 1")


@dataclass
class RunRecord:
    index: int
    value: float
    accepted: bool
    best_value: float
    candidate_hash: str
    wall_time: float
    terms: dict[str, float] = field(default_factory=dict)
    note: str = ""


@dataclass
class RmhcState:
    """Everything needed to continue a run bitwise-identically."""

    evaluations: int
    current: DesignVector
    current_value: float
    best: DesignVector
    best_value: float
    rng_state: dict

    def to_jsonable(self) -> dict:
        return {
            "evaluations": self.evaluations,
            "current": self.current.to_jsonable(),
            "current_value": self.current_value,
            "best": self.best.to_jsonable(),
            "best_value": self.best_value,
            "rng_state": self.rng_state,
        }

    @staticmethod
    def from_jsonable(d: dict) -> "RmhcState":
        return RmhcState(
            evaluations=int(d["evaluations"]),
            current=DesignVector.from_jsonable(d["current"]),
            current_value=float(d["current_value"]),
            best=DesignVector.from_jsonable(d["best"]),
            best_value=float(d["best_value"]),
            rng_state=d["rng_state"],
        )


def save_checkpoint(path, state: RmhcState) -> None:
    with open(path, "w") as fh:
        json.dump(state.to_jsonable(), fh)


def load_checkpoint(path) -> RmhcState:
    with open(path) as fh:
        data = json.load(fh)
    try:
        return RmhcState.from_jsonable(data)
    except (KeyError, TypeError, ValueError) as err:
        raise ValueError(f"corrupt checkpoint {path}: {err}") from err


def _evaluate_task(args):
    dv, ctx = args
    res = evaluate(dv, ctx)
    # histories and meshes are heavy and not needed by the search loop
    return EvalResult(value=res.value, terms=res.terms, note=res.note)


def _fresh_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.PCG64(seed))


def _rng_from_state(state: dict) -> np.random.Generator:
    bg = np.random.PCG64()
    bg.state = state
    return np.random.Generator(bg)


def rmhc(
    ctx: PipelineContext,
    params: RmhcParams,
    initial: DesignVector | None = None,
    state: RmhcState | None = None,
    evaluator=None,
    on_record=None,
) -> tuple[DesignVector, float, list[RunRecord], RmhcState]:
    """Serial hill climb; `evaluator` defaults to the full pipeline.

    Returns the best design, its value, the records produced by THIS call,
    and the final state (resume continues the trajectory bitwise).
    `on_record(record, state)` fires after every evaluation with the live
    state, so callers can checkpoint and snapshot mid-run.
    """
    pool = None
    if evaluator is None:
        if params.workers > 1 and params.speculative_width > 1:
            import concurrent.futures as cf

            pool = cf.ProcessPoolExecutor(max_workers=params.workers)
        evaluator = lambda dv: evaluate(dv, ctx)
    records: list[RunRecord] = []

    def timed(dv):
        t0 = time.perf_counter()
        res = evaluator(dv)
        return res, time.perf_counter() - t0

    def timed_batch(cands):
        if pool is None or len(cands) == 1:
            return [timed(c) for c in cands]
        t0 = time.perf_counter()
        results = list(pool.map(_evaluate_task, [(c, ctx) for c in cands]))
        dt = (time.perf_counter() - t0) / len(cands)
        return [(r, dt) for r in results]

    def push(idx, value, accepted, best_value, dv, terms, note, dt):
        rec = RunRecord(
            index=idx,
            value=value,
            accepted=accepted,
            best_value=best_value,
            candidate_hash=dv.content_hash(),
            wall_time=dt,
            terms=terms,
            note=note,
        )
        records.append(rec)
        if on_record is not None:
            on_record(rec, state)

    n_slots = ctx.spec.surfaces_allowed
    shapes = ctx.spec.surface_shapes
    if state is None:
        rng = _fresh_rng(params.seed)
        dv0 = (
            initial
            if initial is not None
            else random_design(ctx.gs, ctx.bounds, params.seed, n_slots, shapes)
        )
        res, dt = timed(dv0)
        state = RmhcState(
            evaluations=1,
            current=dv0,
            current_value=res.value,
            best=dv0,
            best_value=res.value,
            rng_state=rng.bit_generator.state,
        )
        push(1, res.value, True, res.value, dv0, res.terms, res.note, dt)
    else:
        rng = _rng_from_state(state.rng_state)

    chunk = params.max_evaluations // (params.restarts + 1)
    while state.evaluations < params.max_evaluations:
        remaining = params.max_evaluations - state.evaluations
        width = min(params.speculative_width, remaining)
        at_restart = (
            params.restarts > 0
            and chunk > 0
            and state.evaluations % chunk == 0
            and state.evaluations // chunk <= params.restarts
        )
        if at_restart:
            seed = int(rng.integers(2**63))
            cand = random_design(ctx.gs, ctx.bounds, seed, n_slots, shapes)
            if params.restart_keep_topology:
                cand = DesignVector(
                    topology=state.best.topology.copy(),
                    slopes=cand.slopes,
                    widths=cand.widths,
                    thickness=cand.thickness,
                    input_force=cand.input_force,
                    vertex_offsets=cand.vertex_offsets,
                    surfaces=cand.surfaces,
                )
            res, dt = timed(cand)
            state.evaluations += 1
            state.current, state.current_value = cand, res.value
            if res.value < state.best_value:
                state.best, state.best_value = cand, res.value
            push(state.evaluations, res.value, True, state.best_value, cand,
                 res.terms, "restart", dt)
            state.rng_state = rng.bit_generator.state
            continue

        seeds = [int(rng.integers(2**63)) for _ in range(width)]
        cands = [
            mutate(state.current, ctx.gs, ctx.bounds, params.p_mut, seed, shapes)
            for seed in seeds
        ]
        batch = [(c, res, dt) for c, (res, dt) in zip(cands, timed_batch(cands))]
        best_k = min(range(width), key=lambda k: (batch[k][1].value, k))
        for k, (cand, res, dt) in enumerate(batch):
            state.evaluations += 1
            accept = k == best_k and (
                res.value < state.current_value
                or (params.accept_ties and res.value <= state.current_value)
            )
            if accept:
                state.current, state.current_value = cand, res.value
                if res.value < state.best_value:
                    state.best, state.best_value = cand, res.value
            push(state.evaluations, res.value, accept, state.best_value, cand,
                 res.terms, res.note, dt)
        state.rng_state = rng.bit_generator.state

    if pool is not None:
        pool.shutdown()
    return state.best, state.best_value, records, state
