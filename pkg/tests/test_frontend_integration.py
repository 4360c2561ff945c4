"""Criterion 12: the plot component renders the documented artifacts of
real runs without error.  These tests skip when the frontend is not built,
so the primary suite never depends on it."""

import os
import shutil
import subprocess

import pytest

from axirmhd import bench

FRONTEND = os.path.join(os.path.dirname(__file__), "..", "frontend")
CLI = os.path.join(FRONTEND, "dist", "cli.js")

needs_frontend = pytest.mark.skipif(
    shutil.which("node") is None or not os.path.exists(CLI),
    reason="plot frontend not built; primary suite runs without it")


@needs_frontend
def test_criterion_12_plots_from_run_artifacts(tmp_path):
    # criterion-1-style flow artifacts
    out = tmp_path / "ff"
    bench.run({"problem": "freefall", "nr": 40, "ntheta": 12, "max_steps": 120,
               "residual_target": 1e-3}, outdir=str(out))
    # criterion-8-style spectrum artifacts
    sed_out = tmp_path / "sed"
    code = bench.run({"problem": "sed-diagnostic", "nr": 16, "ntheta": 6,
                      "nu_points": 32, "nu_min": 1e12, "nu_max": 1e18},
                     outdir=str(sed_out))
    assert code == 0

    jobs = [
        ("residual", out / "runlog_stage0.csv", []),
        ("fieldmap", out / "snapshot_final.dat", ["--field", "rho"]),
        ("vectors", out / "snapshot_final.dat", []),
        ("sed", sed_out / "sed.dat", []),
    ]
    for kind, src, extra in jobs:
        dest = tmp_path / f"{kind}.svg"
        proc = subprocess.run(["node", CLI, kind, str(src), "-o", str(dest)] + extra,
                              capture_output=True, text=True)
        assert proc.returncode == 0, f"{kind}: {proc.stderr}"
        body = dest.read_text()
        assert body.startswith("<svg") and body.rstrip().endswith("</svg>")
    print("\nACCEPTANCE 12: PASS - plot component renders residual, fieldmap, "
          "vectors and sed from run artifacts")
