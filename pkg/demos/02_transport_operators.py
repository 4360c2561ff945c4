"""Exercise the discrete transport operators: upwind advection orders,
central diffusion against an exact similarity solution, and the two
asymptotic regimes of the flux-limited diffusion coefficient."""

import numpy as np

from axirmhd import operators as ops
from axirmhd.constants import NG
from axirmhd.grid import build_grid

print("advection reconstruction error vs exact face fluxes (q = sin 2 pi r):")
for order in (1, 2, 3):
    errs = []
    for nr in (32, 64, 128):
        g = build_grid(nr, 2, 2.0)
        q = np.sin(2 * np.pi * g.r_pad)[:, None] * np.ones((1, g.nth + 2 * NG))
        vrf = np.broadcast_to(g.r_faces[:, None] ** -2, (g.nr + 1, g.nth)).copy()
        vthf = np.zeros((g.nr, g.nth + 1))
        d = ops.divergence(ops.advect(q, vrf, vthf, order, g), g)
        exact_face = np.broadcast_to(np.sin(2 * np.pi * g.r_faces[:, None])
                                     * g.r_faces[:, None] ** -2, (g.nr + 1, g.nth)).copy()
        d_exact = ops.divergence(ops.FaceFluxField(fr=exact_face, fth=vthf), g)
        errs.append(np.sqrt(((d - d_exact) ** 2).mean()))
    rates = [np.log2(errs[i] / errs[i + 1]) for i in range(2)]
    print(f"  order {order}: L2 errors {[f'{e:.2e}' for e in errs]}, observed rates {np.round(rates, 2)}")

print("\nflux-limited diffusion against its limits:")
g = build_grid(32, 4, 2.0)
shape = (g.nr + 2 * NG, g.nth + 2 * NG)
e = np.broadcast_to(1.0 + 0.3 * (g.r_pad[:, None] - 1.0), shape).copy()
for chi_val, label in ((1e3, "optically thick"), (1e-3, "optically thin")):
    lim = ops.fld_coefficient(e, np.full(shape, chi_val), g)
    flux = lim.eta_r * 0.3
    if chi_val > 1:
        print(f"  {label}: flux/(grad E/3chi) = {(flux / (0.3 / (3 * chi_val))).mean():.4f}")
    else:
        e_face = 0.5 * (e[NG - 1:NG + g.nr, NG:-NG] + e[NG:NG + g.nr + 1, NG:-NG])
        print(f"  {label}: |flux|/E (streaming bound) = {(flux / e_face).mean():.4f}")
