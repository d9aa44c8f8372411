import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from cfmsyn.cli import main

MINI = "tests/data/mini.json"


def run_cli(*args):
    rc = main(list(args))
    assert rc == 0
    return rc


class TestSynthesize:
    def test_run_produces_all_artifacts(self, tmp_path):
        rd = tmp_path / "run"
        run_cli(
            "synthesize", "--config", MINI, "--run-dir", str(rd),
            "--override", "optimizer.max_evaluations=5",
        )
        for name in (
            "config_snapshot.json",
            "records.csv",
            "convergence.csv",
            "checkpoint.json",
            "best_design.json",
            "best_geometry.txt",
            "best_history.csv",
            "best_member_energy.csv",
            "best_curves.svg",
            "best_shape.svg",
            "best_summary.json",
        ):
            assert (rd / name).exists(), name
        records = (rd / "records.csv").read_text().splitlines()
        assert len(records) == 6  # header + 5 evaluations
        best = [float(r.split(",")[3]) for r in records[1:]]
        assert all(b2 <= b1 for b1, b2 in zip(best, best[1:]))

    def test_existing_run_dir_requires_resume(self, tmp_path):
        rd = tmp_path / "run"
        rd.mkdir()
        (rd / "stale.txt").write_text("x")
        with pytest.raises(SystemExit):
            run_cli("synthesize", "--config", MINI, "--run-dir", str(rd),
                    "--override", "optimizer.max_evaluations=2")

    def test_resume_matches_uninterrupted(self, tmp_path):
        full = tmp_path / "full"
        run_cli("synthesize", "--config", MINI, "--run-dir", str(full),
                "--override", "optimizer.max_evaluations=8")
        split = tmp_path / "split"
        run_cli("synthesize", "--config", MINI, "--run-dir", str(split),
                "--override", "optimizer.max_evaluations=4")
        run_cli("synthesize", "--config", MINI, "--run-dir", str(split), "--resume",
                "--override", "optimizer.max_evaluations=8")

        def essence(path):
            rows = (path / "records.csv").read_text().splitlines()[1:]
            # drop the wall-time column (6th field is note; 5th wall time)
            out = []
            for r in rows:
                f = r.split(",")
                out.append((f[0], f[1], f[2], f[3], f[4]))
            return out

        assert essence(full) == essence(split)
        a = json.loads((full / "best_design.json").read_text())
        b = json.loads((split / "best_design.json").read_text())
        assert a == b

    def test_missing_workpiece_block_fails_with_schema_error(self, tmp_path, capsys):
        cfg = json.loads(Path(MINI).read_text())
        del cfg["workpiece"]
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(cfg))
        rc = main(["synthesize", "--config", str(bad), "--run-dir", str(tmp_path / "r")])
        assert rc == 2
        assert "workpiece" in capsys.readouterr().err


class TestAnalyze:
    def test_analyze_reproduces_history_bitwise(self, tmp_path):
        rd = tmp_path / "syn"
        run_cli("synthesize", "--config", MINI, "--run-dir", str(rd),
                "--override", "optimizer.max_evaluations=3")
        ad = tmp_path / "ana"
        run_cli("analyze", "--geometry", str(rd / "best_geometry.txt"),
                "--config", MINI, "--run-dir", str(ad))
        assert (ad / "history.csv").read_text() == (rd / "best_history.csv").read_text()
        assert (ad / "summary.json").exists()
        assert list(ad.glob("deformed_step*.svg"))

    def test_analyze_twice_identical(self, tmp_path):
        rd = tmp_path / "syn"
        run_cli("synthesize", "--config", MINI, "--run-dir", str(rd),
                "--override", "optimizer.max_evaluations=2")
        a1 = tmp_path / "a1"
        a2 = tmp_path / "a2"
        for ad in (a1, a2):
            run_cli("analyze", "--geometry", str(rd / "best_geometry.txt"),
                    "--config", MINI, "--run-dir", str(ad))
        assert (a1 / "history.csv").read_text() == (a2 / "history.csv").read_text()


class TestSweep:
    def test_stiffness_sweep_emits_labeled_curves(self, tmp_path):
        rd = tmp_path / "syn"
        run_cli("synthesize", "--config", MINI, "--run-dir", str(rd),
                "--override", "optimizer.max_evaluations=2")
        sd = tmp_path / "sweep"
        run_cli("sweep", "--config", MINI, "--design", str(rd / "best_design.json"),
                "--run-dir", str(sd), "--stiffness", "0.5,1,2")
        text = (sd / "sweep.csv").read_text()
        labels = {row.split(",")[0] for row in text.splitlines()[1:]}
        assert len(labels) == 3
        assert (sd / "sweep_curves.svg").exists()

    def test_identical_variants_identical_curves(self, tmp_path):
        rd = tmp_path / "syn"
        run_cli("synthesize", "--config", MINI, "--run-dir", str(rd),
                "--override", "optimizer.max_evaluations=2")
        outs = []
        for name in ("s1", "s2"):
            sd = tmp_path / name
            run_cli("sweep", "--config", MINI, "--design", str(rd / "best_design.json"),
                    "--run-dir", str(sd), "--stiffness", "1")
            outs.append((sd / "sweep.csv").read_text())
        assert outs[0] == outs[1]

    def test_shape_family(self, tmp_path):
        rd = tmp_path / "syn"
        run_cli("synthesize", "--config", MINI, "--run-dir", str(rd),
                "--override", "optimizer.max_evaluations=2")
        sd = tmp_path / "shapes"
        run_cli("sweep", "--config", MINI, "--design", str(rd / "best_design.json"),
                "--run-dir", str(sd), "--shapes", "rect,ellipse")
        labels = {row.split(",")[0] for row in (sd / "sweep.csv").read_text().splitlines()[1:]}
        assert any(l.startswith("rect") for l in labels)
        assert any(l.startswith("ellipse") for l in labels)


class TestPostprocess:
    def test_half_only_postprocess(self, tmp_path):
        rd = tmp_path / "syn"
        run_cli("synthesize", "--config", MINI, "--run-dir", str(rd),
                "--override", "optimizer.max_evaluations=2")
        pd = tmp_path / "post"
        run_cli("postprocess", "--config", MINI, "--design", str(rd / "best_design.json"),
                "--run-dir", str(pd))
        assert (pd / "half_geometry.txt").exists()
        assert (pd / "half_history.csv").exists()

    def test_mirror_gap_and_scale(self, tmp_path):
        rd = tmp_path / "syn"
        run_cli("synthesize", "--config", MINI, "--run-dir", str(rd),
                "--override", "optimizer.max_evaluations=2")
        pd = tmp_path / "full"
        run_cli("postprocess", "--config", MINI, "--design", str(rd / "best_design.json"),
                "--run-dir", str(pd), "--mirror", "--gap", "5.0", "--scale", "1.4")
        from cfmsyn.model import load_model

        half = load_model((tmp_path / "syn" / "best_geometry.txt").read_text())
        full = load_model((pd / "full_geometry.txt").read_text())
        # mirrored axis nodes sit exactly one gap apart
        mech = half.mesh.node_body == 0
        on_axis = np.nonzero(mech & (np.abs(half.mesh.nodes[:, 1]) < 1e-9))[0]
        assert len(on_axis) > 0
        n_half = half.mesh.n_nodes
        for nid in on_axis[:4]:
            a = full.mesh.nodes[nid]
            b = full.mesh.nodes[nid + n_half]
            assert np.hypot(*(a - b)) == pytest.approx(5.0, abs=1e-9)
        # scaling by 1.4 applies to the x extent of the mechanism
        w_half = half.mesh.nodes[mech, 0].max() - half.mesh.nodes[mech, 0].min()
        fm = full.mesh.node_body == 0
        w_full = full.mesh.nodes[fm, 0].max() - full.mesh.nodes[fm, 0].min()
        assert w_full == pytest.approx(1.4 * w_half, rel=1e-9)
        # the loop structure at least doubles (seam loops may add more)
        half_inner = sum(1 for lp in half.mesh.loops if lp.body == 0 and not lp.is_outer)
        full_inner = sum(1 for lp in full.mesh.loops if lp.body == 0 and not lp.is_outer)
        assert full_inner >= 2 * half_inner
        assert (pd / "full_history.csv").exists()
