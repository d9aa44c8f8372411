#!/usr/bin/env python3
"""Workpiece variation study on an evolved design.

Re-analyzes the given design against rectangular and elliptical workpieces at
several stiffness multipliers and overlays the force-deflection curves.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from cfmsyn.cli import main

if __name__ == "__main__":
    if len(sys.argv) < 3:
        print("usage: workpiece_sweep.py <best_design.json> <run-dir>")
        raise SystemExit(2)
    raise SystemExit(
        main(
            [
                "sweep",
                "--config", str(Path(__file__).resolve().parents[1] / "configs/constant_output_a.json"),
                "--design", sys.argv[1],
                "--run-dir", sys.argv[2],
                "--stiffness", "0.5,1,2",
                "--shapes", "rect,ellipse",
            ]
        )
    )
