#!/usr/bin/env python3
"""Reference synthesis run: constant output force, 4x3-block half domain.

Reproduces the reduced-budget evolution (2000 evaluations) and leaves every
artifact in the run directory.  Expect a couple of hours of wall time.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from cfmsyn.cli import main

if __name__ == "__main__":
    run_dir = sys.argv[1] if len(sys.argv) > 1 else "runs/constant_output_a"
    raise SystemExit(
        main(
            [
                "synthesize",
                "--config", str(Path(__file__).resolve().parents[1] / "configs/constant_output_a.json"),
                "--run-dir", run_dir,
                "--snapshot-every", "250",
            ]
        )
    )
