"""Scalar objectives over a force-deflection history.

The recorded curve is gated: only converged samples whose input displacement
exceeds gate_factor times the contact-onset displacement enter the
segmentation.  Each pair of consecutive gated samples forms a segment with a
length along the displacement axis and a slope angle; the objectives combine
the slope magnitude, the covered displacement span, and force terms taken at
the first gated sample (and, for the weighted input objective, the final
transmitted force).

Candidates that fail upstream (non-convergence, lost or absent force
transfer, overlapping obstacle surfaces, too-short gated range) receive
additive penalty magnitudes that dominate every achievable objective value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import ValidityReport
from .solver import DeflectionHistory, first_contact_displacement

OBJECTIVE_KINDS = ("output_ratio", "output_weighted", "input_ratio", "input_weighted")


@dataclass(frozen=True)
class ObjectiveConfig:
    kind: str  # one of OBJECTIVE_KINDS
    weight_slope: float = 1e6  # multiplies sqrt(sum of squared segment slopes)
    weight_range: float = 1e2  # multiplies 1 / displacement span
    weight_force: float = 1e6  # force deviation (output) or magnitude (input)
    weight_output: float = 0.0  # 1/F_out term, weighted input objective only
    target_force: float = 0.0  # desired constant output force, N
    gate_factor: float = 1.2  # demand constancy only past gate_factor * onset
    slope_mode: str = "normalized_angle"  # or "raw"
    force_ref: float | None = None  # slope normalization; None = auto
    disp_ref: float | None = None
    penalty_nonconverged: float = 1e12
    penalty_no_force_transfer: float = 1e12
    penalty_surface_overlap: float = 1e11
    penalty_empty_range: float = 1e10

    def __post_init__(self):
        if self.kind not in OBJECTIVE_KINDS:
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if self.gate_factor < 1.0:
            raise ValueError("gate_factor must be >= 1")
        if self.slope_mode not in ("normalized_angle", "raw"):
            raise ValueError(f"unknown slope mode {self.slope_mode!r}")

    @property
    def output_channel(self) -> bool:
        return self.kind.startswith("output")


@dataclass(frozen=True)
class SegmentedResponse:
    lengths: np.ndarray  # per-segment span along the input-displacement axis
    angles: np.ndarray  # per-segment slope measure
    span: float  # sum of lengths
    gate_index: int  # history step index of the first gated sample
    force_at_gate: float
    onset: float  # input displacement at first workpiece contact
    force_ref: float
    disp_ref: float

    @property
    def slope_term(self) -> float:
        return float(np.sqrt(np.sum(self.angles**2)))


def segment_response(
    history: DeflectionHistory, config: ObjectiveConfig, channel: str | None = None
):
    """Gated piecewise segmentation of the F(delta_in) curve, or None.

    None means the gated window holds fewer than two samples or spans zero
    displacement (the objective then falls back to penalties).
    """
    if channel is None:
        channel = "out" if config.output_channel else "in"
    onset = first_contact_displacement(history)
    if onset is None:
        return None
    delta = history.delta_in()
    force = history.f_out() if channel == "out" else history.f_in()
    gate = config.gate_factor * onset
    idx = np.nonzero(delta > gate)[0]
    if len(idx) < 2:
        return None
    first = int(idx[0])
    d = delta[first:]
    f = force[first:]
    span = float(d[-1] - d[0])
    if span <= 1e-12:
        return None
    f_ref = config.force_ref
    if f_ref is None:
        f_ref = float(np.max(np.abs(f)))
        if config.output_channel:
            f_ref = max(f_ref, config.target_force)
        if f_ref == 0.0:
            f_ref = 1.0
    d_ref = config.disp_ref if config.disp_ref is not None else span

    dl = np.diff(d)
    df = np.diff(f)
    if config.slope_mode == "normalized_angle":
        with np.errstate(divide="ignore", invalid="ignore"):
            ang = np.arctan((df / f_ref) / (dl / d_ref))
        ang = np.where(dl <= 1e-12 * d_ref, np.where(np.abs(df) > 1e-12 * f_ref, np.pi / 2, 0.0), ang)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            ang = df / dl
        ang = np.where(dl <= 1e-15, np.where(np.abs(df) > 0, 1e6, 0.0), ang)
    return SegmentedResponse(
        lengths=dl,
        angles=ang,
        span=span,
        gate_index=first,
        force_at_gate=float(f[0]),
        onset=float(onset),
        force_ref=float(f_ref),
        disp_ref=float(d_ref),
    )


def _force_transfer_ok(history: DeflectionHistory) -> bool:
    """Workpiece contact, once established, must persist to the final step."""
    flags = [s.contact_active.get("workpiece", False) for s in history.steps]
    if not any(flags):
        return False
    first = flags.index(True)
    return all(flags[first:])


def apply_penalties(
    validity: ValidityReport | None, history: DeflectionHistory | None, config: ObjectiveConfig
) -> dict[str, float]:
    """Additive penalty terms; zero-valued entries are omitted."""
    pen: dict[str, float] = {}
    if history is None or not history.converged:
        pen["penalty_nonconverged"] = config.penalty_nonconverged
    if history is not None and not _force_transfer_ok(history):
        pen["penalty_no_force_transfer"] = config.penalty_no_force_transfer
    if validity is not None and validity.overlapping_surfaces:
        pen["penalty_surface_overlap"] = (
            validity.overlapping_surfaces * config.penalty_surface_overlap
        )
    if validity is not None and not validity.connected:
        pen.setdefault("penalty_no_force_transfer", config.penalty_no_force_transfer)
    return pen


def objective_value(
    history: DeflectionHistory | None,
    config: ObjectiveConfig,
    validity: ValidityReport | None = None,
) -> tuple[float, dict[str, float]]:
    """Objective scalar plus its term-by-term breakdown."""
    terms = apply_penalties(validity, history, config)
    seg = segment_response(history, config) if history is not None else None
    if seg is None:
        terms["penalty_empty_range"] = config.penalty_empty_range
        return sum(terms.values()), terms

    slope = seg.slope_term
    span = seg.span
    if config.kind == "output_weighted":
        terms["term_slope"] = config.weight_slope * slope
        terms["term_range"] = config.weight_range / span
        terms["term_force"] = config.weight_force * abs(
            seg.force_at_gate - config.target_force
        )
    elif config.kind == "output_ratio":
        terms["term_product"] = abs(seg.force_at_gate - config.target_force) * slope / span
    elif config.kind == "input_weighted":
        terms["term_slope"] = config.weight_slope * slope
        terms["term_range"] = config.weight_range / span
        terms["term_force"] = config.weight_force * abs(seg.force_at_gate)
        if config.weight_output > 0.0:
            f_final = history.steps[-1].f_out
            if f_final <= 0.0:
                terms.setdefault(
                    "penalty_no_force_transfer", config.penalty_no_force_transfer
                )
            else:
                terms["term_output"] = config.weight_output / f_final
    elif config.kind == "input_ratio":
        out_seg = segment_response(history, config, channel="out")
        f_out_star = out_seg.force_at_gate if out_seg is not None else 0.0
        if f_out_star <= 0.0:
            terms.setdefault("penalty_no_force_transfer", config.penalty_no_force_transfer)
        else:
            terms["term_product"] = (
                abs(seg.force_at_gate / f_out_star) * slope / span
            )
    return sum(terms.values()), terms
