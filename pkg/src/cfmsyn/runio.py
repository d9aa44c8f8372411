"""Run-directory artifacts: schema-stable CSV emitters.

Floats are written with repr() so identical runs produce identical bytes and
golden-file comparisons are meaningful.
"""

from __future__ import annotations

import io

from .objectives import ObjectiveConfig, segment_response
from .optimizer import RunRecord
from .solver import DeflectionHistory, first_contact_displacement

HISTORY_COLUMNS = "step,load_factor,delta_in_mm,F_in_N,F_out_N,converged,contact_flags"
RECORD_TERMS = (
    "term_slope",
    "term_range",
    "term_force",
    "term_product",
    "term_output",
    "penalty_nonconverged",
    "penalty_no_force_transfer",
    "penalty_surface_overlap",
    "penalty_empty_range",
)
RECORDS_COLUMNS = (
    "index,value,accepted,best_value,candidate_hash,wall_time_s,note," + ",".join(RECORD_TERMS)
)


def history_csv(history: DeflectionHistory) -> str:
    out = io.StringIO()
    out.write(HISTORY_COLUMNS + "\n")
    for k, s in enumerate(history.steps):
        flags = ";".join(
            f"{name}={1 if s.contact_active[name] else 0}" for name in sorted(s.contact_active)
        )
        out.write(
            f"{k},{s.load_factor!r},{s.delta_in!r},{s.f_in!r},{s.f_out!r},"
            f"{1 if s.converged else 0},{flags}\n"
        )
    return out.getvalue()


def member_energy_csv(history: DeflectionHistory) -> str:
    members = sorted(history.member_energy)
    out = io.StringIO()
    out.write("step," + ",".join(f"member_{m}" for m in members) + "\n")
    n = len(history.steps)
    for k in range(n):
        row = [str(k)] + [repr(history.member_energy[m][k]) for m in members]
        out.write(",".join(row) + "\n")
    return out.getvalue()


def record_row(rec: RunRecord) -> str:
    terms = [repr(float(rec.terms.get(t, 0.0))) for t in RECORD_TERMS]
    note = rec.note.replace(",", ";")
    return (
        f"{rec.index},{rec.value!r},{1 if rec.accepted else 0},{rec.best_value!r},"
        f"{rec.candidate_hash},{rec.wall_time!r},{note}," + ",".join(terms)
    )


def records_csv(records: list[RunRecord]) -> str:
    return RECORDS_COLUMNS + "\n" + "".join(record_row(r) + "\n" for r in records)


def convergence_csv(records: list[RunRecord]) -> str:
    out = io.StringIO()
    out.write("evaluation,best_value\n")
    for r in records:
        out.write(f"{r.index},{r.best_value!r}\n")
    return out.getvalue()


def history_summary(history: DeflectionHistory, objective: ObjectiveConfig | None) -> dict:
    onset = first_contact_displacement(history)
    info = {
        "converged": history.converged,
        "steps_recorded": len(history.steps) - 1,
        "final_delta_in_mm": history.steps[-1].delta_in if history.steps else None,
        "final_f_in_N": history.steps[-1].f_in if history.steps else None,
        "final_f_out_N": history.steps[-1].f_out if history.steps else None,
        "contact_onset_delta_in_mm": onset,
        "external_work_Nmm": history.external_work(),
        "stored_energy_Nmm": (
            history.final_strain_energy() + history.steps[-1].contact_energy
            if history.steps
            else None
        ),
    }
    if objective is not None:
        from .objectives import objective_value

        value, terms = objective_value(history, objective)
        seg = segment_response(history, objective)
        info["objective_value"] = value
        info["objective_terms"] = terms
        if seg is not None:
            info["gated_span_mm"] = seg.span
            info["gated_slope_term"] = seg.slope_term
            info["force_at_gate_N"] = seg.force_at_gate
    return info
