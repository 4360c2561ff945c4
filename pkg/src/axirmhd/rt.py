"""Frequency-resolved axisymmetric radiative transfer.

Solves the reduced moment equation for E_nu(r, theta, nu): upwind spatial
advection, flux-limited diffusion, absorption/emission against the
modified blackbody source, the Kompaneets frequency-space operator for
repeated Compton scattering, and the synchrotron source with its
self-absorption switch.  The implicit 7-point system is inverted by a
colored line Gauss-Seidel iteration sweeping the three directions.

Internal units: lengths in R0, E_nu in erg/cm^3/Hz, nu in Hz; every
operator term is expressed per code length (optical-depth-like), so the
steady balance needs no time normalization.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import constants as cst
from . import operators as ops
from . import synchro
from .constants import BR, BT, BTH, ER, NG, RHO
from .errors import AssemblyError, ConfigurationError
from .grid import Grid
from .linsolve import SolveReport, _thomas_scalar
from .state import FieldSet, primitives


# ---------------------------------------------------------------------------
# grids and fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FrequencyGrid:
    nu: np.ndarray        # (M,) centers, Hz
    nu_faces: np.ndarray  # (M+1,)
    dnu: np.ndarray       # (M,)
    ratio: float

    @property
    def m(self):
        return len(self.nu)


def build_frequency_grid(m: int, nu_min: float, nu_max: float) -> FrequencyGrid:
    """Logarithmic frequency mesh; face ratios are constant by construction."""
    if m < 4 or nu_min <= 0 or nu_max <= nu_min:
        raise ConfigurationError("need m >= 4 and 0 < nu_min < nu_max")
    nu = np.geomspace(nu_min, nu_max, m)
    ratio = (nu_max / nu_min) ** (1.0 / (m - 1))
    faces = np.empty(m + 1)
    faces[1:-1] = np.sqrt(nu[:-1] * nu[1:])
    faces[0] = nu[0] / np.sqrt(ratio)
    faces[-1] = nu[-1] * np.sqrt(ratio)
    return FrequencyGrid(nu=nu, nu_faces=faces, dnu=np.diff(faces), ratio=ratio)


def freefree_opacity(rho_code, te_code, nu_hz, scaling):
    """Kramers-type free-free absorption opacity in cm^2/g."""
    rho_cgs = rho_code * scaling.density
    t_cgs = np.maximum(te_code, 1e-8) * scaling.temperature
    x = cst.H_PLANCK * nu_hz / (cst.K_BOLTZ * t_cgs)
    stim = -np.expm1(-np.minimum(x, 200.0))
    return 3.7e8 * rho_cgs * t_cgs**-3.5 * nu_hz**-3.0 * stim


@dataclass
class SpectralField:
    """E_nu(j, k, m) with the plasma snapshot it was built against."""

    e: np.ndarray             # (nr, nth, M) erg/cm^3/Hz
    fgrid: FrequencyGrid
    rho: np.ndarray           # (nr, nth) code units
    te: np.ndarray
    bmag: np.ndarray
    kappa_nu: np.ndarray      # (nr, nth, M) cm^2/g
    sigma: float              # cm^2/g scattering
    scaling: object
    vr: np.ndarray | None = None
    vth: np.ndarray | None = None
    floored: int = 0

    @classmethod
    def from_fieldset(cls, f: FieldSet, fgrid: FrequencyGrid, phys,
                      opacity=None) -> "SpectralField":
        inner = lambda a: a[NG:-NG, NG:-NG]
        prims = primitives(f)
        rho = inner(f.q[RHO])
        te = inner(prims.te)
        b2 = inner(f.q[BR]) ** 2 + inner(f.q[BTH]) ** 2 + inner(f.q[BT]) ** 2
        bmag = np.sqrt(np.maximum(b2, 1e-30))
        opacity = opacity or (lambda r, t, nu: freefree_opacity(r, t, nu, f.scaling) + phys.kappa_abs)
        kap = opacity(rho[..., None], te[..., None], fgrid.nu[None, None, :])
        e0 = np.zeros(rho.shape + (fgrid.m,))
        return cls(e=e0, fgrid=fgrid, rho=rho, te=te, bmag=bmag,
                   kappa_nu=np.asarray(kap, dtype=float), sigma=phys.sigma_sc,
                   scaling=f.scaling, vr=inner(prims.vr), vth=inner(prims.vth))

    def gray_moment(self) -> np.ndarray:
        return (self.e * self.fgrid.dnu).sum(axis=-1)

    def photon_number(self) -> float:
        return float(((self.e / (cst.H_PLANCK * self.fgrid.nu)) * self.fgrid.dnu).sum())


def planck_energy_density(nu_hz, t_code, scaling):
    """(4 pi / c) B_nu: the isotropic radiation energy density per Hz."""
    t_cgs = np.maximum(np.asarray(t_code, dtype=float), 1e-12) * scaling.temperature
    x = cst.H_PLANCK * nu_hz / (cst.K_BOLTZ * t_cgs)
    with np.errstate(over="ignore"):
        occ = 1.0 / np.expm1(np.clip(x, 1e-12, 500.0))
    return (8.0 * np.pi * cst.H_PLANCK * nu_hz**3 / cst.C_LIGHT**3) * occ


# ---------------------------------------------------------------------------
# frequency-space operators
# ---------------------------------------------------------------------------

@dataclass
class KompaneetsCoeffs:
    """Discrete frequency-operator entries per (cell, m), per scattering depth."""

    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray


def kompaneets_coeffs(fgrid: FrequencyGrid, te_code, scaling, e_nu=None) -> KompaneetsCoeffs:
    """Upwind drift + central diffusion form of the Compton operator.

    K(E)(m) = sub*E_{m-1} + diag*E_m + sup*E_{m+1}; the drift direction
    follows the sign of (4 k T - h nu) and both terms carry zero-flux
    frequency boundaries.  Multiply by the scattering depth per length
    (sigma * rho) to place it in the transfer equation.
    """
    te = np.atleast_1d(np.asarray(te_code, dtype=float))
    shape = te.shape
    kt = cst.K_BOLTZ * te * scaling.temperature  # erg
    mec2 = cst.M_ELECTRON * cst.C_LIGHT**2
    theta = kt / mec2
    if np.any(theta > 0.3):
        warnings.warn("Kompaneets expansion pushed beyond kT/mec^2 = 0.3", stacklevel=2)
    if cst.H_PLANCK * fgrid.nu_faces[-1] / mec2 > 0.3:
        warnings.warn("frequency grid reaches h nu ~ me c^2; expansion marginal", stacklevel=2)

    nu = fgrid.nu
    faces = fgrid.nu_faces[1:-1]  # interior faces (M-1,)
    dnu = fgrid.dnu
    m = fgrid.m
    sub = np.zeros(shape + (m,))
    diag = np.zeros(shape + (m,))
    sup = np.zeros(shape + (m,))

    # drift: -(nu/mec2) d_nu[(4kT - h nu) E], flux G*E_up on interior faces
    g_face = 4.0 * kt[..., None] - cst.H_PLANCK * faces  # (..., M-1)
    up_lo = g_face >= 0.0  # upwind = lower cell when the drift pushes up
    pref = -(nu / mec2)
    fl_lo = np.where(up_lo, g_face, 0.0)   # coefficient on E_m at face m+1/2
    fl_hi = np.where(up_lo, 0.0, g_face)   # coefficient on E_{m+1}
    # cell m: ( F_{m+1/2} - F_{m-1/2} ) / dnu_m
    diag[..., :-1] += pref[:-1] * fl_lo / dnu[:-1]
    sup[..., :-1] += pref[:-1] * fl_hi / dnu[:-1]
    diag[..., 1:] -= pref[1:] * fl_hi / dnu[1:]
    sub[..., 1:] -= pref[1:] * fl_lo / dnu[1:]

    # diffusion: (kT nu / mec2) d2/dnu2 (nu E), zero flux at the ends
    dface = np.diff(nu)  # center-to-center (M-1,)
    w = kt[..., None] * nu / mec2
    cp = np.zeros(m)
    cm = np.zeros(m)
    cp[:-1] = 1.0 / (dface * dnu[:-1])
    cm[1:] = 1.0 / (dface * dnu[1:])
    sup[..., :-1] += w[..., :-1] * cp[:-1] * nu[1:]
    diag[..., :-1] -= w[..., :-1] * cp[:-1] * nu[:-1]
    sub[..., 1:] += w[..., 1:] * cm[1:] * nu[:-1]
    diag[..., 1:] -= w[..., 1:] * cm[1:] * nu[1:]
    return KompaneetsCoeffs(sub=sub, diag=diag, sup=sup)


def synchrotron_emissivity(rho_code, te_code, b_code, nu_hz, scaling):
    """Optically thin synchrotron emissivity, erg/cm^3/s/Hz."""
    theta = cst.K_BOLTZ * np.maximum(te_code, 1e-10) * scaling.temperature \
        / (cst.M_ELECTRON * cst.C_LIGHT**2)
    return synchro.emissivity(rho_code * scaling.density, theta,
                              np.maximum(b_code, 1e-12) * scaling.bfield, nu_hz)


def critical_frequency(rho_code, te_code, b_code, volume_code, surface_code, scaling,
                       nu_min: float, nu_max: float, tol: float = 1e-10, max_iter: int = 60):
    """Self-absorption turnover: volume emission equals surface blackbody.

    Newton iteration on log nu of eps_nu * V = (2 pi nu^2 k T / c^2) * S,
    with a bisection-style clamp into [nu_min, nu_max]; cells that never
    balance pin to the nearest bound and are flagged.
    """
    rho = np.atleast_1d(np.asarray(rho_code, dtype=float))
    te = np.broadcast_to(np.asarray(te_code, dtype=float), rho.shape)
    b = np.broadcast_to(np.asarray(b_code, dtype=float), rho.shape)
    vol = np.broadcast_to(np.asarray(volume_code, dtype=float), rho.shape) * scaling.length**3
    sur = np.broadcast_to(np.asarray(surface_code, dtype=float), rho.shape) * scaling.length**2
    theta = cst.K_BOLTZ * np.maximum(te, 1e-10) * scaling.temperature / (cst.M_ELECTRON * cst.C_LIGHT**2)
    kt = cst.K_BOLTZ * np.maximum(te, 1e-10) * scaling.temperature
    b_gauss = np.maximum(b, 1e-12) * scaling.bfield
    rho_cgs = rho * scaling.density

    def g_and_slope(lognu):
        nu = np.exp(lognu)
        zeta = synchro.ZETA_COEFF * nu / (b_gauss * theta**2)
        logeps = np.log(synchro.PREFACTOR * rho_cgs * nu) + synchro.log_shape_factor(zeta) \
            - synchro.log_k2(1.0 / theta)
        lhs = logeps + np.log(vol)
        rhs = np.log(2.0 * np.pi * kt / cst.C_LIGHT**2 * sur) + 2.0 * lognu
        slope = (1.0 + synchro.dlog_shape_dlog_zeta(zeta)) - 2.0
        return lhs - rhs, slope

    lo, hi = np.log(nu_min), np.log(nu_max)
    x = np.full(rho.shape, 0.5 * (lo + hi))
    pinned = np.zeros(rho.shape, dtype=bool)
    for _ in range(max_iter):
        gval, slope = g_and_slope(x)
        step = -gval / np.where(np.abs(slope) > 1e-14, slope, -1.0)
        step = np.clip(step, -5.0, 5.0)
        x_new = np.clip(x + step, lo, hi)
        moved = np.abs(x_new - x)
        x = x_new
        if np.all(moved <= tol):
            break
    gval, _ = g_and_slope(x)
    pinned = (np.abs(gval) > 1e-6) & ((x <= lo + 1e-12) | (x >= hi - 1e-12))
    # fully thin cells (emission never reaches the blackbody line) sit at nu_min
    x = np.where(pinned & (gval < 0), lo, x)
    x = np.where(pinned & (gval > 0), hi, x)
    return np.exp(x), pinned


def modified_sources(nu_hz, nu_c, t_code, kappa_nu, sigma, scaling,
                     rho_code=None, b_code=None, surface_to_volume=1.0):
    """Modified blackbody source and the bridged synchrotron emissivity.

    S_nu = 2 B_nu / (1 + sqrt(1 + sigma/kappa_nu)) in energy-density units;
    eps_mod = xi eps_nu + (1 - xi) eps_BB with xi = exp(-(nu_c/nu)^2) and
    eps_BB = (2 pi nu^2 k T / c^2) * (S/V) placed in volume-rate units.
    """
    if np.any(np.asarray(kappa_nu) <= 0.0):
        raise ConfigurationError("kappa_nu must be positive")
    b_nu = planck_energy_density(nu_hz, t_code, scaling)
    s_nu = 2.0 * b_nu / (1.0 + np.sqrt(1.0 + sigma / np.asarray(kappa_nu)))
    xi = np.exp(-((np.asarray(nu_c) / nu_hz) ** 2))
    eps_mod = None
    if rho_code is not None and b_code is not None:
        eps = synchrotron_emissivity(rho_code, t_code, b_code, nu_hz, scaling)
        t_cgs = np.maximum(np.asarray(t_code, dtype=float), 1e-12) * scaling.temperature
        eps_bb = 2.0 * np.pi * nu_hz**2 * cst.K_BOLTZ * t_cgs / cst.C_LIGHT**2 * surface_to_volume
        eps_mod = xi * eps + (1.0 - xi) * eps_bb
    return s_nu, eps_mod, xi


# ---------------------------------------------------------------------------
# assembly of the 7-point implicit system
# ---------------------------------------------------------------------------

@dataclass
class RTStencil:
    d: np.ndarray
    srm: np.ndarray
    srp: np.ndarray
    stm: np.ndarray
    stp: np.ndarray
    svm: np.ndarray
    svp: np.ndarray
    grid: Grid
    dominance_violations: int = 0
    extra: dict = field(default_factory=dict)

    def offdiag_sum(self):
        return (np.abs(self.srm) + np.abs(self.srp) + np.abs(self.stm)
                + np.abs(self.stp) + np.abs(self.svm) + np.abs(self.svp))

    def apply(self, e: np.ndarray) -> np.ndarray:
        out = self.d * e
        out[1:] += self.srm[1:] * e[:-1]
        out[:-1] += self.srp[:-1] * e[1:]
        out[:, 1:] += self.stm[:, 1:] * e[:, :-1]
        out[:, :-1] += self.stp[:, :-1] * e[:, 1:]
        out[..., 1:] += self.svm[..., 1:] * e[..., :-1]
        out[..., :-1] += self.svp[..., :-1] * e[..., 1:]
        return out

    def to_dense(self):
        nr, nth, m = self.d.shape
        n = nr * nth * m
        A = np.zeros((n, n))
        def idx(j, k, mm):
            return (j * nth + k) * m + mm
        for j in range(nr):
            for k in range(nth):
                for mm in range(m):
                    r = idx(j, k, mm)
                    A[r, r] = self.d[j, k, mm]
                    if j > 0:
                        A[r, idx(j - 1, k, mm)] = self.srm[j, k, mm]
                    if j < nr - 1:
                        A[r, idx(j + 1, k, mm)] = self.srp[j, k, mm]
                    if k > 0:
                        A[r, idx(j, k - 1, mm)] = self.stm[j, k, mm]
                    if k < nth - 1:
                        A[r, idx(j, k + 1, mm)] = self.stp[j, k, mm]
                    if mm > 0:
                        A[r, idx(j, k, mm - 1)] = self.svm[j, k, mm]
                    if mm < m - 1:
                        A[r, idx(j, k, mm + 1)] = self.svp[j, k, mm]
        return A


def assemble_rt(f: FieldSet, s: SpectralField, dt, disc, kompaneets: bool = True,
                advection: bool = True) -> tuple:
    """Implicit 7-point system A E_new = rhs, every term at the new level.

    Term scales are per code length: absorption ~ kappa*rho*R0, diffusion
    ~ 1/(3 chi), advection and time terms carry V0/c.  dt = np.inf selects
    the steady balance (the default operating mode).
    """
    g = disc.grid
    sc = s.scaling
    fg = s.fgrid
    m = fg.m
    nr, nth = g.nr, g.nth
    kap_code = s.kappa_nu * sc.density * sc.length  # 1/length per unit rho_code
    sig_code = s.sigma * sc.density * sc.length
    chi = (kap_code + sig_code) * s.rho[..., None]  # (nr, nth, M) per code length

    d = np.zeros((nr, nth, m))
    srm = np.zeros_like(d)
    srp = np.zeros_like(d)
    stm = np.zeros_like(d)
    stp = np.zeros_like(d)
    svm = np.zeros_like(d)
    svp = np.zeros_like(d)
    rhs = np.zeros_like(d)

    vratio = sc.velocity / cst.C_LIGHT
    inv_dt = 0.0 if np.isinf(dt) else vratio / float(dt)
    d += inv_dt
    rhs += inv_dt * s.e

    # sources: modified blackbody + bridged synchrotron
    vol_cgs = g.vol
    surf = g.area_r[:-1, :] + g.area_r[1:, :] + g.area_th[:, :-1] + g.area_th[:, 1:]
    if np.any(s.bmag > 1e-10):
        nu_c, _ = critical_frequency(s.rho, s.te, s.bmag, g.vol, surf, sc,
                                     fg.nu[0], fg.nu[-1])
    else:
        nu_c = np.full((nr, nth), fg.nu[0])
    stov = (surf / g.vol) / sc.length  # 1/cm
    s_nu, eps_mod, _ = modified_sources(fg.nu[None, None, :], nu_c[..., None],
                                        s.te[..., None], s.kappa_nu, s.sigma, sc,
                                        rho_code=s.rho[..., None], b_code=s.bmag[..., None],
                                        surface_to_volume=stov[..., None])
    # absorption/emission: kappa rho (S - E)
    kr = kap_code * s.rho[..., None]
    d += kr
    rhs += kr * s_nu
    if np.any(s.bmag > 1e-10):
        eps_code = eps_mod * sc.length / cst.C_LIGHT
        rhs += eps_code
        # Kirchhoff pairing: the bridged source absorbs at the rate that
        # caps E_nu at the local blackbody level (self-absorption)
        u_planck = planck_energy_density(fg.nu[None, None, :], s.te[..., None], sc)
        d += eps_code / np.maximum(u_planck, 1e-300)

    # flux-limited diffusion per frequency plane
    pad = np.zeros((nr + 2 * NG, nth + 2 * NG))
    for mm in range(m):
        pad[NG:-NG, NG:-NG] = s.e[:, :, mm]
        pad[NG - 1, :] = pad[NG, :]
        pad[NG - 2, :] = pad[NG, :]
        pad[NG + nr, :] = 0.0   # vacuum beyond the outer edge
        pad[NG + nr + 1, :] = 0.0
        pad[:, NG - 1] = pad[:, NG]
        pad[:, NG - 2] = pad[:, NG + 1]
        pad[:, NG + nth] = pad[:, NG + nth - 1]
        pad[:, NG + nth + 1] = pad[:, NG + nth - 2]
        chi_pad = np.zeros_like(pad)
        chi_pad[NG:-NG, NG:-NG] = chi[:, :, mm]
        for sl, edge in (((NG - 1, slice(None)), (NG, slice(None))),
                         ((NG - 2, slice(None)), (NG, slice(None))),
                         ((NG + nr, slice(None)), (NG + nr - 1, slice(None))),
                         ((NG + nr + 1, slice(None)), (NG + nr - 1, slice(None)))):
            chi_pad[sl] = chi_pad[edge]
        chi_pad[:, NG - 1] = chi_pad[:, NG]
        chi_pad[:, NG - 2] = chi_pad[:, NG]
        chi_pad[:, NG + nth] = chi_pad[:, NG + nth - 1]
        chi_pad[:, NG + nth + 1] = chi_pad[:, NG + nth - 1]
        # per-frequency limiter argument: R = |grad E| / (kappa rho S + sigma rho E)
        den_pad = np.zeros_like(pad)
        den_pad[NG:-NG, NG:-NG] = (kap_code[:, :, mm] * s.rho * s_nu[:, :, mm]
                                   + sig_code * s.rho * np.maximum(s.e[:, :, mm], 0.0))
        den_pad[NG - 1, :] = den_pad[NG, :]
        den_pad[NG - 2, :] = den_pad[NG, :]
        den_pad[NG + nr :, :] = den_pad[NG + nr - 1, :]
        den_pad[:, NG - 1] = den_pad[:, NG]
        den_pad[:, NG - 2] = den_pad[:, NG]
        den_pad[:, NG + nth :] = den_pad[:, NG + nth - 1 : NG + nth]
        lim = ops.fld_coefficient(np.maximum(pad, 0.0), np.maximum(chi_pad, 1e-12), g,
                                  denom_pad=den_pad)
        tr = g.area_r * lim.eta_r / g.dr_cc[:, None]
        tt = g.area_th * lim.eta_th / (g.dth_cc[None, :] * g.r_c[:, None])
        d[:, :, mm] += (tr[1:, :] + tr[:-1, :] + tt[:, 1:] + tt[:, :-1]) / g.vol
        srm[:, :, mm] += -tr[:-1, :] / g.vol
        srp[:, :, mm] += -tr[1:, :] / g.vol
        stm[:, :, mm] += -tt[:, :-1] / g.vol
        stp[:, :, mm] += -tt[:, 1:] / g.vol
        # inner/theta edges reflect (zero net flux): fold the ghost column
        d[0, :, mm] += srm[0, :, mm]
        d[:, 0, mm] += stm[:, 0, mm]
        d[:, -1, mm] += stp[:, -1, mm]
        # outer edge: ghost E = 0 (free escape), leg simply drops
    srm[0, :, :] = 0.0
    stm[:, 0, :] = 0.0
    stp[:, -1, :] = 0.0
    srp[-1, :, :] = 0.0

    # advection and compression at V0/c scale
    if advection and s.vr is not None:
        vr_pad = np.zeros((nr + 2 * NG, nth + 2 * NG))
        vr_pad[NG:-NG, NG:-NG] = s.vr
        vth_pad = np.zeros_like(vr_pad)
        vth_pad[NG:-NG, NG:-NG] = s.vth
        vrf, _ = ops.face_average(vr_pad, g)
        _, vthf = ops.face_average(vth_pad, g)
        ap_r, am_r = ops.upwind_weights(vrf * vratio)
        ap_t, am_t = ops.upwind_weights(vthf * vratio)
        apr = g.area_r * ap_r
        amr = g.area_r * am_r
        apt = g.area_th * ap_t
        amt = g.area_th * am_t
        d += ((apr[1:, :] - amr[:-1, :] + apt[:, 1:] - amt[:, :-1]) / g.vol)[..., None]
        srm += (-apr[:-1, :] / g.vol)[..., None]
        srp += (amr[1:, :] / g.vol)[..., None]
        stm += (-apt[:, :-1] / g.vol)[..., None]
        stp += (amt[:, 1:] / g.vol)[..., None]
        srm[0, :, :] = 0.0
        srp[-1, :, :] = 0.0
        stm[:, 0, :] = 0.0
        stp[:, -1, :] = 0.0
        div_v = ops.divergence(ops.FaceFluxField(fr=vrf, fth=vthf), g) * vratio
        lam = np.minimum(1.0 / 3.0, 1.0 / (3.0 * np.maximum(chi, 1e-12)))
        d += lam * div_v[..., None]

    # Kompaneets terms, scaled by the scattering depth per length
    if kompaneets and sig_code > 0.0:
        kc = kompaneets_coeffs(fg, s.te, sc)
        depth = sig_code * s.rho[..., None]
        d += -depth * kc.diag
        svm += -depth * kc.sub
        svp += -depth * kc.sup

    stencil = RTStencil(d=d, srm=srm, srp=srp, stm=stm, stp=stp, svm=svm, svp=svp, grid=g)
    off = stencil.offdiag_sum()
    viol = int((np.abs(d) < off).sum())
    stencil.dominance_violations = viol
    if np.any(np.abs(d) < 0.5 * off):
        worst = np.unravel_index(np.argmax(off - np.abs(d)), d.shape)
        raise AssemblyError(f"radiative-transfer stencil lost diagonal dominance at {worst}")
    return stencil, rhs


# ---------------------------------------------------------------------------
# the colored line solver over (r, theta, nu)
# ---------------------------------------------------------------------------

def _solve_lines_r(st: RTStencil, rhs_rows, e, rows):
    """rhs_rows holds only the selected latitude rows, shape (nr, R, m)."""
    nr = st.d.shape[0]
    sub = np.transpose(st.srm[:, rows, :], (1, 2, 0)).reshape(-1, nr)
    diag = np.transpose(st.d[:, rows, :], (1, 2, 0)).reshape(-1, nr)
    sup = np.transpose(st.srp[:, rows, :], (1, 2, 0)).reshape(-1, nr)
    b = np.transpose(rhs_rows, (1, 2, 0)).reshape(-1, nr)
    x = _thomas_scalar(sub, diag, sup, b)
    e[:, rows, :] = np.transpose(x.reshape(len(rows), st.d.shape[2], nr), (2, 0, 1))


def _solve_lines_th(st: RTStencil, rhs_rows, e, rows):
    nth = st.d.shape[1]
    sub = np.transpose(st.stm[rows, :, :], (0, 2, 1)).reshape(-1, nth)
    diag = np.transpose(st.d[rows, :, :], (0, 2, 1)).reshape(-1, nth)
    sup = np.transpose(st.stp[rows, :, :], (0, 2, 1)).reshape(-1, nth)
    b = np.transpose(rhs_rows, (0, 2, 1)).reshape(-1, nth)
    x = _thomas_scalar(sub, diag, sup, b)
    e[rows, :, :] = np.transpose(x.reshape(len(rows), st.d.shape[2], nth), (0, 2, 1))


def _solve_lines_nu(st: RTStencil, rhs_rows, e, rows):
    m = st.d.shape[2]
    sub = st.svm[:, rows, :].reshape(-1, m)
    diag = st.d[:, rows, :].reshape(-1, m)
    sup = st.svp[:, rows, :].reshape(-1, m)
    b = rhs_rows.reshape(-1, m)
    x = _thomas_scalar(sub, diag, sup, b)
    e[:, rows, :] = x.reshape(st.d.shape[0], len(rows), m)


def rt_step(stencil: RTStencil, rhs: np.ndarray, s: SpectralField,
            tol: float = 1e-8, max_iters: int = 200) -> tuple:
    """Invert the 7-point system by colored line sweeps in all three
    directions (two colors each: six tridiagonal inversions per iteration).
    """
    t0 = time.perf_counter()
    st = stencil
    e = s.e.copy()
    n_before = s.photon_number() if s.e.any() else 0.0

    def residual(ev):
        return float(np.abs(rhs - st.apply(ev)).max())

    r0 = residual(e)
    history = [r0]
    scale = max(r0, float(np.abs(rhs).max()), 1e-300)
    it = 0
    nth = st.d.shape[1]
    nr = st.d.shape[0]
    if r0 > tol * scale:
        odd_k = np.arange(1, nth, 2)
        even_k = np.arange(0, nth, 2)
        odd_j = np.arange(1, nr, 2)
        even_j = np.arange(0, nr, 2)
        for it in range(1, max_iters + 1):
            # radial lines, colored by latitude row
            for rows in (odd_k, even_k):
                if len(rows) == 0:
                    continue
                b = rhs[:, rows, :].copy()
                lo, hi = rows - 1, rows + 1
                ok = lo >= 0
                b[:, ok, :] -= st.stm[:, rows[ok], :] * e[:, lo[ok], :]
                ok = hi < nth
                b[:, ok, :] -= st.stp[:, rows[ok], :] * e[:, hi[ok], :]
                b[:, :, 1:] -= st.svm[:, rows, 1:] * e[:, rows, :-1]
                b[:, :, :-1] -= st.svp[:, rows, :-1] * e[:, rows, 1:]
                _solve_lines_r(st, b, e, rows)
            # latitude lines, colored by radial row
            for rows in (odd_j, even_j):
                if len(rows) == 0:
                    continue
                b = rhs[rows, :, :].copy()
                lo, hi = rows - 1, rows + 1
                ok = lo >= 0
                b[ok, :, :] -= st.srm[rows[ok], :, :] * e[lo[ok], :, :]
                ok = hi < nr
                b[ok, :, :] -= st.srp[rows[ok], :, :] * e[hi[ok], :, :]
                b[:, :, 1:] -= st.svm[rows, :, 1:] * e[rows, :, :-1]
                b[:, :, :-1] -= st.svp[rows, :, :-1] * e[rows, :, 1:]
                _solve_lines_th(st, b, e, rows)
            # frequency lines, colored by latitude row
            for rows in (odd_k, even_k):
                if len(rows) == 0:
                    continue
                b = rhs[:, rows, :].copy()
                b[1:, :, :] -= st.srm[1:, rows, :] * e[:-1, rows, :]
                b[:-1, :, :] -= st.srp[:-1, rows, :] * e[1:, rows, :]
                lo, hi = rows - 1, rows + 1
                ok = lo >= 0
                b[:, ok, :] -= st.stm[:, rows[ok], :] * e[:, lo[ok], :]
                ok = hi < nth
                b[:, ok, :] -= st.stp[:, rows[ok], :] * e[:, hi[ok], :]
                _solve_lines_nu(st, b, e, rows)
            r = residual(e)
            history.append(r)
            if r <= tol * scale:
                break

    # non-negativity floor (counted, never silently large)
    emax = float(e.max()) if e.size else 0.0
    neg = e < 0.0
    floored = int(neg.sum())
    if floored:
        worst = float(e.min())
        if emax > 0 and worst < -1e-10 * emax:
            warnings.warn(f"rt_step floored {floored} cells, worst {worst:.3e}", stacklevel=2)
        e = np.maximum(e, 0.0)

    out = SpectralField(e=e, fgrid=s.fgrid, rho=s.rho, te=s.te, bmag=s.bmag,
                        kappa_nu=s.kappa_nu, sigma=s.sigma, scaling=s.scaling,
                        vr=s.vr, vth=s.vth, floored=floored)
    r_final = residual(e)
    history[-1] = r_final
    n_after = out.photon_number()
    rep = SolveReport(it, r_final, float(np.linalg.norm(rhs - st.apply(e))), history,
                      time.perf_counter() - t0, r_final <= tol * scale,
                      ops_estimate=it * e.size * 6.0 * (8.0 / 3.0 + 6.0 + 9.0) / 2.0,
                      extra={"photon_before": n_before, "photon_after": n_after,
                             "photon_drift": (n_after - n_before) / max(n_before, 1e-300)})
    return out, rep


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------

def sed(s: SpectralField, g: Grid):
    """nu L_nu from the flux-limited flux through the outer boundary."""
    sc = s.scaling
    kap_code = s.kappa_nu * sc.density * sc.length
    sig_code = s.sigma * sc.density * sc.length
    chi_last = (kap_code[-1, :, :] + sig_code) * s.rho[-1, :, None]
    e_last = s.e[-1, :, :]
    dr_half = g.r_faces[-1] - g.r_c[-1]
    grad = e_last / dr_half  # ghost E = 0 beyond the boundary
    alpha = np.exp(-np.where(chi_last * e_last > 0, grad / np.maximum(chi_last * e_last, 1e-300), 0.0))
    eta = (1.0 - alpha) * np.where(grad > 0, e_last / np.maximum(grad, 1e-300), 0.0) \
        + alpha / (3.0 * np.maximum(chi_last, 1e-300))
    flux = cst.C_LIGHT * eta * grad  # erg/cm^2/s/Hz
    lum = (flux * g.area_r[-1, :, None] * sc.length**2).sum(axis=0)
    return s.fgrid.nu.copy(), s.fgrid.nu * lum


def write_sed(path, nu, nul, meta=None):
    meta = dict(meta or {})
    with open(path, "w") as fh:
        fh.write(f"# axirmhd sed version=0.1.0 config_hash={meta.get('config_hash', 'none')}\n")
        fh.write("# nu_Hz nuLnu_erg_s\n")
        for a, b in zip(nu, nul):
            fh.write(f"{a:.17g} {b:.17g}\n")


def read_sed(path):
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ConfigurationError(f"bad SED row: '{line[:40]}'")
            rows.append((float(parts[0]), float(parts[1])))
    arr = np.asarray(rows)
    return arr[:, 0], arr[:, 1]
