"""One coefficient cluster drives five solution procedures.

Assemble the cluster once on a free-fall state, generate every mode view
without re-assembly, and advance a few steps with each."""

import numpy as np

from axirmhd import bench
from axirmhd.driver import StageSpec, cfl_dt, step
from axirmhd.jacobian import ModeKind, SolverMode, assemble_cluster, generate_matrix

prob = bench.setup("freefall", {"nr": 40, "ntheta": 12})
disc, f = prob.disc, prob.fieldset

cluster = assemble_cluster(f, disc, dt=0.01)
x = np.random.default_rng(1).standard_normal((disc.grid.nr, disc.grid.nth, len(disc.eqs)))
print("one cluster, five views:")
for kind in ModeKind:
    view = generate_matrix(cluster, SolverMode(kind, disc.eqs))
    print(f"  {kind.value}: |A x|_max = {np.abs(view.apply(x)).max():.4e}")

print("\nfive steps with each procedure (max-norm residual):")
spec = StageSpec(krylov_tol=1e-10)
for kind in ModeKind:
    cur = f.copy()
    cfl = 0.5 if kind in (ModeKind.EXPLICIT,) else 5.0
    res = None
    for _ in range(5):
        r = step(cur, SolverMode(kind, disc.eqs), cfl_dt(cur, disc.grid, cfl, disc.phys), disc, spec)
        cur = r.fieldset
        res = r.residual.max()
    print(f"  {kind.value}: residual after 5 steps = {res:.4e}")
