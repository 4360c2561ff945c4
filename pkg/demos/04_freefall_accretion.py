"""Spherical accretion onto a point mass: march the sequential implicit
stage to a steady state and read off the analytic power laws."""

import os
import tempfile

from axirmhd import bench
from axirmhd.driver import StageSpec, run_stage
from axirmhd.state import write_snapshot

prob = bench.setup("freefall", {"nr": 64, "ntheta": 20, "max_steps": 600,
                                "residual_target": 1e-3})
f, log = run_stage(prob.fieldset, prob.stages[0], prob.disc)
print(f"stage I: {len(log.rows)} iterations")

polish = StageSpec(stage="II", max_steps=80, residual_target=1e-8,
                   cfl=10.0, cfl_max=3e3, cfl_ramp=1.3, krylov_tol=1e-11)
f, log2 = run_stage(f, polish, prob.disc)
print(f"stage II polish: {len(log2.rows)} coupled implicit steps")

path = os.path.join(tempfile.mkdtemp(), "freefall.dat")
write_snapshot(f, path, {})
(sr, er), (sv, ev) = bench.analyze_slopes(path)
print(f"equatorial slopes over r in [5, 50]:")
print(f"  density  {sr:+.4f} +- {er:.1e}   (free fall: -1.5)")
print(f"  velocity {sv:+.4f} +- {ev:.1e}   (free fall: -0.5)")
