"""Stretched axisymmetric spherical staggered mesh and finite-volume metrics.

Coordinates are (r, theta) with theta the *latitude* (pi/2 minus colatitude):
theta = 0 is the equator, theta = pi/2 the rotation axis.  The azimuthal
2*pi is included in every volume and face area.  Radii are in units of the
inner radius, so r_faces[0] == 1 always.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constants import NG
from .errors import ConfigurationError

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class CellMetrics:
    """Finite-volume metric factors of a single (j, k) cell."""

    volume: float
    area_r_low: float
    area_r_high: float
    area_th_low: float
    area_th_high: float
    r_center: float
    th_center: float
    inv_r2_center: float
    inv_rcos_center: float
    tan_center: float
    inv_r2_faces: tuple  # (r-low, r-high)
    inv_rcos_faces: tuple  # (th-low, th-high) evaluated at r_center
    tan_faces: tuple  # (th-low, th-high)


class Grid:
    """Immutable stretched spherical mesh; safe to share between threads."""

    def __init__(self, r_faces: np.ndarray, th_faces: np.ndarray, stretch_ratio: float = 1.0):
        r_faces = np.asarray(r_faces, dtype=float)
        th_faces = np.asarray(th_faces, dtype=float)
        if r_faces.ndim != 1 or th_faces.ndim != 1:
            raise ConfigurationError("face arrays must be one-dimensional")
        if np.any(np.diff(r_faces) <= 0) or np.any(np.diff(th_faces) <= 0):
            raise ConfigurationError("face coordinates must be strictly increasing")
        if abs(r_faces[0] - 1.0) > 1e-14:
            raise ConfigurationError("inner radius must be 1 (units of R_in)")

        self.r_faces = r_faces
        self.th_faces = th_faces
        self.stretch_ratio = float(stretch_ratio)
        self.nr = len(r_faces) - 1
        self.nth = len(th_faces) - 1

        self.r_c = 0.5 * (r_faces[:-1] + r_faces[1:])
        self.th_c = 0.5 * (th_faces[:-1] + th_faces[1:])
        self.dr = np.diff(r_faces)
        self.dth = np.diff(th_faces)

        self.sin_f = np.sin(th_faces)
        self.cos_f = np.cos(th_faces)
        self.cos_c = np.cos(self.th_c)
        self.tan_c = np.tan(self.th_c)

        dsin = np.diff(self.sin_f)
        r3 = r_faces**3
        r2 = r_faces**2
        # volume / areas, azimuthal 2*pi included
        self.vol = (TWO_PI / 3.0) * (r3[1:] - r3[:-1])[:, None] * dsin[None, :]
        self.area_r = TWO_PI * r2[:, None] * dsin[None, :]          # (nr+1, nth)
        self.area_th = np.pi * self.cos_f[None, :] * (r2[1:] - r2[:-1])[:, None]  # (nr, nth+1)

        # ghost-cell centers: faces extended geometrically on each side
        self._rp = self._padded_centers_r()
        self._thp = self._padded_centers_th()
        self.r_pad = self._rp
        self.th_pad = self._thp
        self.cos_pad = np.cos(self._thp)
        # center-to-center spacings across faces (ghost-aware)
        self.dr_cc = np.diff(self._rp)[NG - 1 : NG + self.nr]
        self.dth_cc = np.diff(self._thp)[NG - 1 : NG + self.nth]

    def _padded_centers_r(self) -> np.ndarray:
        s = max(self.stretch_ratio, 1.0)
        dr0, drn = self.dr[0], self.dr[-1]
        f = self.r_faces
        lo1 = f[0] - dr0 / s
        lo2 = lo1 - dr0 / s**2
        hi1 = f[-1] + drn * s
        hi2 = hi1 + drn * s**2
        lo2 = max(lo2, 1e-3 * f[0])  # keep ghost radii positive on wild stretches
        lo1 = max(lo1, 0.5 * (lo2 + f[0]))
        faces = np.concatenate([[lo2, lo1], f, [hi1, hi2]])
        return 0.5 * (faces[:-1] + faces[1:])

    def _padded_centers_th(self) -> np.ndarray:
        f = self.th_faces
        dlo, dhi = self.dth[0], self.dth[-1]
        faces = np.concatenate([[f[0] - 2 * dlo, f[0] - dlo], f, [f[-1] + dhi, f[-1] + 2 * dhi]])
        return 0.5 * (faces[:-1] + faces[1:])

    @property
    def shape(self):
        return (self.nr, self.nth)

    def total_volume(self) -> float:
        return float(np.sum(self.vol))

    def analytic_volume(self) -> float:
        return (TWO_PI / 3.0) * (self.r_faces[-1] ** 3 - 1.0) * (self.sin_f[-1] - self.sin_f[0])


def solve_stretch_ratio(nr: int, span: float, dr_inner: float) -> float:
    """Geometric ratio s with dr_inner * (s^nr - 1)/(s - 1) == span."""
    if not 0 < dr_inner < span:
        raise ConfigurationError("dr_inner must lie in (0, r_out - 1)")
    target = span / dr_inner
    if abs(target - nr) < 1e-12:
        return 1.0
    if target < nr:
        raise ConfigurationError("dr_inner too large for a stretched mesh")
    lo, hi = 1.0 + 1e-15, 2.0
    while (hi**nr - 1.0) / (hi - 1.0) < target:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if (mid**nr - 1.0) / (mid - 1.0) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def build_grid(nr: int, ntheta: int, r_out: float, stretch_ratio: float | None = 1.0,
               dr_inner: float | None = None, th_max: float = np.pi / 2.0,
               th_stretch: float = 1.0) -> Grid:
    """Build the mesh with a geometric radial stretching law.

    Either pass stretch_ratio directly or give dr_inner (width of the
    innermost cell) and the ratio is solved internally.  The latitude mesh
    is uniform by default; th_stretch > 1 packs cells toward the equator
    with the same geometric law.
    """
    if nr < 4 or ntheta < 2:
        raise ConfigurationError(f"grid too small: nr={nr}, ntheta={ntheta} (need nr>=4, ntheta>=2)")
    if r_out <= 1.0:
        raise ConfigurationError(f"r_out must exceed the inner radius 1, got {r_out}")
    span = r_out - 1.0
    if dr_inner is not None:
        stretch_ratio = solve_stretch_ratio(nr, span, dr_inner)
    if stretch_ratio is None or stretch_ratio < 1.0:
        raise ConfigurationError("stretch_ratio must be >= 1")

    s = float(stretch_ratio)
    if s == 1.0:
        r_faces = np.linspace(1.0, r_out, nr + 1)
    else:
        dr0 = span * (s - 1.0) / (s**nr - 1.0)
        widths = dr0 * s ** np.arange(nr)
        r_faces = 1.0 + np.concatenate([[0.0], np.cumsum(widths)])
    r_faces[0] = 1.0
    r_faces[-1] = r_out
    if th_stretch > 1.0:
        d0 = th_max * (th_stretch - 1.0) / (th_stretch**ntheta - 1.0)
        widths = d0 * th_stretch ** np.arange(ntheta)
        th_faces = np.concatenate([[0.0], np.cumsum(widths)])
    else:
        th_faces = np.linspace(0.0, th_max, ntheta + 1)
    th_faces[-1] = th_max
    return Grid(r_faces, th_faces, stretch_ratio=s)


def metrics(g: Grid, j: int, k: int) -> CellMetrics:
    """Metric factors of cell (j, k); pure function of the grid."""
    if not (0 <= j < g.nr and 0 <= k < g.nth):
        raise IndexError(f"cell index out of range: ({j}, {k}) for grid {g.shape}")
    rj, rj1 = g.r_faces[j], g.r_faces[j + 1]
    rc = g.r_c[j]
    thc = g.th_c[k]
    return CellMetrics(
        volume=float(g.vol[j, k]),
        area_r_low=float(g.area_r[j, k]),
        area_r_high=float(g.area_r[j + 1, k]),
        area_th_low=float(g.area_th[j, k]),
        area_th_high=float(g.area_th[j, k + 1]),
        r_center=float(rc),
        th_center=float(thc),
        inv_r2_center=float(1.0 / rc**2),
        inv_rcos_center=float(1.0 / (rc * np.cos(thc))),
        tan_center=float(np.tan(thc)),
        inv_r2_faces=(float(1.0 / rj**2), float(1.0 / rj1**2)),
        inv_rcos_faces=(float(1.0 / (rc * g.cos_f[k])) if g.cos_f[k] != 0.0 else np.inf,
                        float(1.0 / (rc * g.cos_f[k + 1])) if g.cos_f[k + 1] != 0.0 else np.inf),
        tan_faces=(float(np.tan(g.th_faces[k])), float(np.tan(g.th_faces[k + 1]))),
    )
