"""Frequency-resolved transfer on a disk-corona snapshot: solve the
7-point implicit system with colored line sweeps and extract the spectrum."""

import os
import tempfile

import numpy as np

from axirmhd import bench, rt

out = tempfile.mkdtemp()
code = bench.run({"problem": "sed-diagnostic", "nr": 32, "ntheta": 12,
                  "nu_points": 64, "nu_min": 1e10, "nu_max": 1e19}, outdir=out)
print("exit code:", code)
nu, nul = rt.read_sed(os.path.join(out, "sed.dat"))
peak = np.argmax(nul)
print(f"SED peak: nu = {nu[peak]:.3e} Hz, nu L_nu = {nul[peak]:.3e} erg/s")
lines = open(os.path.join(out, "rt_residuals.csv")).read().strip().splitlines()
print(f"line Gauss-Seidel iterations: {len(lines) - 3}")
print(f"first/last residuals: {lines[2].split(',')[1]} -> {lines[-1].split(',')[1]}")
