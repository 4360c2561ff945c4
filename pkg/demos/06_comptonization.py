"""Repeated Compton scattering in frequency space: a soft photon line
relaxes toward the Wien equilibrium under the frequency-space operator."""

import numpy as np

from axirmhd import constants as cst
from axirmhd import rt
from axirmhd.linsolve import _thomas_scalar
from axirmhd.state import ScalingSet

s = ScalingSet.agn_reference()
fg = rt.build_frequency_grid(96, 1e13, 1e20)
te = 2.0  # a 1e8 K electron bath; Wien peak sits inside the grid
kt = cst.K_BOLTZ * te * s.temperature
kc = rt.kompaneets_coeffs(fg, np.array([te]), s)

e = np.exp(-0.5 * ((np.log(fg.nu) - np.log(3e14)) / 0.3) ** 2)


def mean_over_kt(ev):
    num = (ev * fg.dnu).sum()
    cnt = (ev / (cst.H_PLANCK * fg.nu) * fg.dnu).sum()
    return num / cnt / kt


print(f"electron bath: kT/h = {kt / cst.H_PLANCK:.2e} Hz")
print(f"{'scattering depth':>18} {'<h nu>/kT':>10}   (Wien equilibrium: 3)")
dtau = 0.5
done = 0
for target in (0, 20, 100, 400, 2000):
    while done < target:
        e = _thomas_scalar((-dtau * kc.sub[0])[None], (1 - dtau * kc.diag[0])[None],
                           (-dtau * kc.sup[0])[None], e[None])[0]
        done += 1
    print(f"{target * dtau:>18.0f} {mean_over_kt(e):>10.4f}")
wien = fg.nu ** 3 * np.exp(-cst.H_PLANCK * fg.nu / kt)
corr = np.corrcoef(e / e.max(), wien / wien.max())[0, 1]
print(f"shape correlation with the Wien spectrum: {corr:.5f}")
