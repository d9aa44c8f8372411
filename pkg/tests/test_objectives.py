import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfmsyn.domain import ValidityReport
from cfmsyn.objectives import (
    ObjectiveConfig,
    apply_penalties,
    objective_value,
    segment_response,
)
from cfmsyn.solver import DeflectionHistory, StepRecord


def make_history(delta, f_out, f_in=None, contact_from=0, converged=True, gaps=None):
    """Synthetic force-deflection history (the rest record is step 0)."""
    delta = [0.0] + list(delta)
    f_out = [0.0] + list(f_out)
    f_in = [0.0] + list(f_in if f_in is not None else np.linspace(0.1, 1.0, len(delta) - 1))
    steps = []
    for k in range(len(delta)):
        active = k >= contact_from + 1 or (contact_from == 0 and k == 0)
        if contact_from == 0:
            active = True
        else:
            active = k > contact_from
        gap = 0.0 if active else (gaps[k] if gaps is not None else np.inf)
        steps.append(
            StepRecord(
                load_factor=k / max(1, len(delta) - 1),
                delta_in=float(delta[k]),
                f_in=float(f_in[k]),
                f_out=float(f_out[k]),
                f_out_vec=(float(f_out[k]), 0.0),
                contact_active={"workpiece": bool(active)},
                min_gap={"workpiece": float(gap) if np.isfinite(gap) else np.inf},
                strain_energy=0.0,
                contact_energy=0.0,
                converged=True,
            )
        )
    return DeflectionHistory(
        steps=steps,
        member_energy={},
        converged=converged,
        declared_gap=None,
        output_direction=(1.0, 0.0),
        n_steps_scheduled=len(delta) - 1,
    )


VALID = ValidityReport(connected=True, active_member_count=5, component_members=(0,),
                       overlapping_surfaces=0)


def cfg(kind="output_weighted", **kw):
    base = dict(
        kind=kind,
        weight_slope=1e6,
        weight_range=1e2,
        weight_force=1e6,
        target_force=0.02,
        gate_factor=1.0,
    )
    base.update(kw)
    return ObjectiveConfig(**base)


class TestSegmentation:
    def test_hand_computed_four_sample_history(self):
        # contact from the start; gate 1.0 * 0 keeps every positive sample
        h = make_history([10, 12, 15, 20], [0.02, 0.021, 0.020, 0.020])
        c = cfg()
        seg = segment_response(h, c)
        # the rest record at delta 0 is not past the gate of 0 (strict)
        assert np.allclose(seg.lengths, [2, 3, 5])
        assert seg.span == pytest.approx(10.0)
        f_ref = max(0.02, 0.021)
        d_ref = 10.0
        expected = [
            math.atan((0.001 / f_ref) / (2 / d_ref)),
            math.atan((-0.001 / f_ref) / (3 / d_ref)),
            math.atan((0.0 / f_ref) / (5 / d_ref)),
        ]
        assert np.allclose(seg.angles, expected, rtol=1e-12)
        assert seg.force_at_gate == pytest.approx(0.02)

    def test_flat_curve_has_zero_slopes(self):
        h = make_history([5, 10, 15], [0.02, 0.02, 0.02])
        seg = segment_response(h, cfg())
        assert np.all(seg.angles == 0.0)
        assert seg.span == pytest.approx(10.0)

    def test_unit_slope_with_unit_normalization(self):
        h = make_history([1, 2, 3], [1.0, 2.0, 3.0])
        seg = segment_response(h, cfg(force_ref=1.0, disp_ref=1.0))
        assert np.allclose(seg.angles, math.pi / 4)

    def test_gate_excludes_early_samples(self):
        # contact first reported active at the sample with delta_in = 6
        h = make_history([2, 4, 6, 8, 10, 12], [0, 0, 0.01, 0.02, 0.02, 0.02],
                         contact_from=2, gaps=[np.inf, np.inf, 1.0, 0, 0, 0, 0])
        c = cfg(gate_factor=1.2)
        seg = segment_response(h, c)
        assert seg.onset == pytest.approx(6.0)
        # gate at 7.2 admits the samples at 8, 10 and 12 only
        assert seg.gate_index == 4
        assert np.allclose(seg.lengths, [2, 2])

    def test_too_few_gated_samples_is_none(self):
        h = make_history([1.0], [0.02])
        assert segment_response(h, cfg()) is None

    def test_raw_slope_mode(self):
        h = make_history([1, 3], [1.0, 2.0])
        seg = segment_response(h, cfg(slope_mode="raw"))
        assert seg.angles[0] == pytest.approx(0.5)


class TestObjectives:
    def test_weighted_output_flat_at_target(self):
        # flat F_out = target beyond the gate over a 10 mm span: only the
        # range term survives and equals weight_range / span = 10
        h = make_history([5, 10, 15], [0.02, 0.02, 0.02])
        value, terms = objective_value(h, cfg(), VALID)
        assert value == pytest.approx(10.0)
        assert terms["term_range"] == pytest.approx(10.0)
        assert terms["term_slope"] == 0.0
        assert terms["term_force"] == 0.0

    def test_weighted_output_hand_value(self):
        h = make_history([10, 12, 15, 20], [0.02, 0.021, 0.020, 0.020])
        c = cfg()
        value, terms = objective_value(h, c, VALID)
        f_ref, d_ref = 0.021, 10.0
        ang = [
            math.atan((0.001 / f_ref) / (2 / d_ref)),
            math.atan((-0.001 / f_ref) / (3 / d_ref)),
            0.0,
        ]
        expected = 1e6 * math.sqrt(sum(a * a for a in ang)) + 1e2 / 10.0 + 1e6 * 0.0
        assert value == pytest.approx(expected, rel=1e-12)

    def test_ratio_output_collapses_at_target(self):
        # the documented caveat: hitting the target at the gate sample zeroes
        # the product regardless of the slopes
        h = make_history([5, 10, 15], [0.02, 0.05, 0.01])
        value, terms = objective_value(h, cfg(kind="output_ratio"), VALID)
        assert value == 0.0

    def test_ratio_output_zero_slope_factor(self):
        h = make_history([5, 10, 15], [0.04, 0.04, 0.04])
        value, _ = objective_value(h, cfg(kind="output_ratio"), VALID)
        assert value == 0.0

    def test_ratio_output_product(self):
        h = make_history([5, 10], [0.04, 0.05])
        c = cfg(kind="output_ratio", force_ref=1.0, disp_ref=1.0)
        value, _ = objective_value(h, c, VALID)
        expected = abs(0.04 - 0.02) * math.atan(0.01 / 5.0) / 5.0
        assert value == pytest.approx(expected, rel=1e-12)

    def test_weighted_input_static_balance_ideal(self):
        # zero input force over the span with live output force: only the
        # range and output terms remain
        h = make_history([5, 10, 15], [0.05, 0.06, 0.07], f_in=[0.0, 0.0, 0.0])
        c = cfg(kind="input_weighted", weight_slope=1e8, weight_range=1e3,
                weight_force=1e2, weight_output=1e2)
        value, terms = objective_value(h, c, VALID)
        assert value == pytest.approx(1e3 / 10.0 + 1e2 / 0.07, rel=1e-12)

    def test_weighted_input_requires_force_transfer_when_maximizing(self):
        h = make_history([5, 10, 15], [0.0, 0.0, 0.0], f_in=[0.1, 0.1, 0.1])
        c = cfg(kind="input_weighted", weight_output=1e2)
        value, terms = objective_value(h, c, VALID)
        assert terms.get("penalty_no_force_transfer", 0) > 0

    def test_ratio_input_zero_cases(self):
        h = make_history([5, 10], [0.05, 0.05], f_in=[0.0, 0.5])
        c = cfg(kind="input_ratio")
        value, _ = objective_value(h, c, VALID)
        assert value == 0.0  # zero input force at the gate sample
        h2 = make_history([5, 10], [0.05, 0.05], f_in=[0.3, 0.3])
        value2, _ = objective_value(h2, c, VALID)
        assert value2 == 0.0  # flat input force: zero slope factor

    def test_ratio_input_hand_product(self):
        h = make_history([5, 10], [0.05, 0.06], f_in=[0.5, 0.6])
        c = cfg(kind="input_ratio", force_ref=1.0, disp_ref=1.0)
        value, _ = objective_value(h, c, VALID)
        expected = (0.5 / 0.05) * math.atan(0.1 / 5.0) / 5.0
        assert value == pytest.approx(expected, rel=1e-12)


class TestPenalties:
    def test_clean_run_has_zero_addon(self):
        h = make_history([5, 10], [0.02, 0.02])
        assert apply_penalties(VALID, h, cfg()) == {}

    def test_contact_separation_penalized(self):
        h = make_history([5, 10, 15], [0.02, 0.02, 0.02])
        h.steps[-1].contact_active["workpiece"] = False  # separates at the end
        pen = apply_penalties(VALID, h, cfg())
        assert pen["penalty_no_force_transfer"] == 1e12

    def test_never_touching_penalized(self):
        h = make_history([5, 10], [0.0, 0.0], contact_from=99)
        pen = apply_penalties(VALID, h, cfg())
        assert "penalty_no_force_transfer" in pen

    def test_overlaps_are_additive(self):
        bad = ValidityReport(connected=True, active_member_count=3,
                             component_members=(0,), overlapping_surfaces=2)
        h = make_history([5, 10], [0.02, 0.02])
        pen = apply_penalties(bad, h, cfg())
        assert pen["penalty_surface_overlap"] == pytest.approx(2e11)

    def test_nonconverged_dominates(self):
        h = make_history([5, 10], [0.02, 0.02], converged=False)
        value, terms = objective_value(h, cfg(), VALID)
        assert terms["penalty_nonconverged"] == 1e12
        assert value >= 1e12

    def test_missing_history_falls_back_to_penalties(self):
        value, terms = objective_value(None, cfg(), None)
        assert terms["penalty_nonconverged"] == 1e12
        assert terms["penalty_empty_range"] == 1e10


class TestProperties:
    @settings(max_examples=40, deadline=None)
    @given(st.floats(1.0, 3.0), st.floats(1.0, 3.0))
    def test_gate_monotonicity(self, g1, g2):
        rng = np.random.default_rng(7)
        delta = np.cumsum(rng.uniform(0.5, 2.0, 12))
        f = rng.uniform(0.01, 0.05, 12)
        h = make_history(delta, f, contact_from=2,
                         gaps=[np.inf] * 3 + [0.0] * 10)
        lo, hi = sorted((g1, g2))
        seg_lo = segment_response(h, cfg(gate_factor=lo))
        seg_hi = segment_response(h, cfg(gate_factor=hi))
        r_lo = seg_lo.span if seg_lo else 0.0
        r_hi = seg_hi.span if seg_hi else 0.0
        assert r_hi <= r_lo + 1e-12

    def test_force_scaling_moves_only_force_terms(self):
        h1 = make_history([5, 10, 15], [0.02, 0.03, 0.04], f_in=[0.2, 0.3, 0.4])
        s = 3.0
        h2 = make_history([5, 10, 15], [s * 0.02, s * 0.03, s * 0.04],
                          f_in=[s * 0.2, s * 0.3, s * 0.4])
        c = cfg(kind="input_weighted", weight_output=0.0, force_ref=1.0, disp_ref=1.0)
        _, t1 = objective_value(h1, c, VALID)
        _, t2 = objective_value(h2, c, VALID)
        assert t2["term_force"] == pytest.approx(s * t1["term_force"], rel=1e-12)
        assert t2["term_range"] == pytest.approx(t1["term_range"], rel=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_objectives_finite_and_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        n = rng.integers(3, 10)
        delta = np.cumsum(rng.uniform(0.1, 3.0, n))
        f_out = rng.uniform(0.0, 0.1, n)
        f_in = rng.uniform(0.0, 2.0, n)
        h = make_history(delta, f_out, f_in=f_in)
        for kind in ("output_ratio", "output_weighted", "input_ratio", "input_weighted"):
            value, _ = objective_value(h, cfg(kind=kind, weight_output=1e2), VALID)
            assert np.isfinite(value) and value >= 0
