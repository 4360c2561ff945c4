"""Free fall against a static cold disk: a curved shock front forms around
the barrier, the spherical analog of the forward-facing step."""

import numpy as np

from axirmhd import bench
from axirmhd.constants import EI, GAMMA, RHO
from axirmhd.driver import StageSpec, cfl_dt, step
from axirmhd.jacobian import ModeKind, SolverMode

prob = bench.setup("shock-disk", {"nr": 64, "ntheta": 20, "order": 1, "limiter": 0})
disc, f = prob.disc, prob.fieldset
g = disc.grid
spec = StageSpec(krylov_tol=1e-10)
mode = SolverMode(ModeKind.EXPLICIT, tuple(disc.eqs))
for it in range(1200):
    f = step(f, mode, cfl_dt(f, g, 0.4, disc.phys), disc, spec).fieldset

qi = f.interior()
ti = GAMMA * (GAMMA - 1.0) * qi[EI] / qi[RHO]
print("temperature maxima along latitude rays (the curved shock front):")
js = np.where(g.r_c > 10.5)[0]
for k in (0, 2, 5, 8):
    j = js[np.argmax(ti[js, k])]
    print(f"  theta = {g.th_c[k]:.2f}: front at r = {g.r_c[j]:6.2f},"
          f" T jump x{ti[j, k] / ti[-1, k]:6.1f}")
print(f"peak temperature {ti.max():.0f} (inflow temperature {ti[-1,0]:.1f})")
