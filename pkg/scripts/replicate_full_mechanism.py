#!/usr/bin/env python3
"""Mirror an evolved half mechanism into the full device and re-analyze it.

Removes members that store no energy anywhere in the deformation history,
mirrors the half about its symmetry line with a 5 mm gap bridged at the
roller junctions, applies the manufacturing scale factor, and solves the
replicated model with self-contact declared on every loop.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from cfmsyn.cli import main

if __name__ == "__main__":
    if len(sys.argv) < 3:
        print("usage: replicate_full_mechanism.py <best_design.json> <run-dir> [scale]")
        raise SystemExit(2)
    scale = sys.argv[3] if len(sys.argv) > 3 else "1.4"
    raise SystemExit(
        main(
            [
                "postprocess",
                "--config", str(Path(__file__).resolve().parents[1] / "configs/constant_output_a.json"),
                "--design", sys.argv[1],
                "--run-dir", sys.argv[2],
                "--mirror", "--gap", "5.0", "--scale", scale,
            ]
        )
    )
