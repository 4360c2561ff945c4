"""Source terms: two-temperature cooling, Lorentz forces, viscosity,
conduction coefficients, turbulent dissipation, and self-gravity.

Every function is pure: the same FieldSet gives bit-identical outputs.
Rates are normalized by the exchange normalization N = ((gamma-1)/gamma) *
V0^2 * Vk0 / R0 of the ScalingSet, so an exchange term and its partner
carry literally opposite floating-point values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import constants as cst
from . import synchro
from .constants import GAMMA, MU_ELECTRON, MU_ION, NG
from .errors import SolverFailure, StateError
from .grid import Grid
from .state import FieldSet, ScalingSet, primitives


@dataclass
class PhysicsConfig:
    """Which physics is active and with what coefficients."""

    gravity: str = "point"          # point | pseudo | self | none
    gm: float | None = None         # GM/(R0 V0^2); None = ScalingSet value
    r_horizon: float = 1.0 / 3.0    # pseudo-Newtonian singularity radius
    include_b: bool = False
    include_rad: bool = False
    coulomb: bool = False
    brems: bool = False
    compton: bool = False
    synchrotron: bool = False
    conduction: bool = False
    viscosity_eta: float = 0.0      # dynamic viscosity, code units (0 = off)
    alpha_dyn: float = 0.0
    nu_mag: float = 0.0
    kappa_abs: float = 0.4          # cm^2/g
    sigma_sc: float = 0.4           # cm^2/g
    lorentz_form: str = "component"   # component | standard
    syn_nu_bounds: tuple = (1e8, 1e22)
    syn_quad_points: int = 64

    def gm_value(self, s: ScalingSet) -> float:
        return s.grav_parameter if self.gm is None else self.gm


# ---------------------------------------------------------------------------
# cooling / coupling
# ---------------------------------------------------------------------------

@dataclass
class CoolingConstants:
    """Dimensionless prefactors of the exchange rates."""

    coulomb: float
    brems: float
    compton: float
    opacity_code: float  # multiplies a cm^2/g opacity into 1/length code units

    @classmethod
    def from_scaling(cls, s: ScalingSet) -> "CoolingConstants":
        n_i = s.density / (MU_ION * cst.M_ATOMIC)
        n_e = s.density / (MU_ELECTRON * cst.M_ATOMIC)
        norm = s.density * s.exchange_norm
        coulomb = 5.94e-3 * n_i * n_e * cst.C_LIGHT * cst.K_BOLTZ / np.sqrt(s.temperature) / norm
        brems = cst.C_LIGHT * s.rad_energy / s.exchange_norm  # times kappa*rho_code*(T^4-E)
        compton = (4.0 * cst.SIGMA_THOMSON * n_e * cst.C_LIGHT
                   * (cst.K_BOLTZ * s.temperature / (cst.M_ELECTRON * cst.C_LIGHT**2))
                   * s.rad_energy) / norm
        return cls(coulomb=coulomb, brems=brems, compton=compton,
                   opacity_code=s.density * s.length)


@dataclass
class CoolingTerms:
    """Per-cell exchange rates (interior arrays, common N units)."""

    lam_ie: np.ndarray
    lam_b: np.ndarray
    lam_c: np.ndarray
    lam_syn: np.ndarray
    derivs: dict = field(default_factory=dict)  # name -> {var: d lam/d var}


def _interior(a):
    return a[NG:-NG, NG:-NG]


def cooling_rates(f: FieldSet, cfg: PhysicsConfig, with_derivs: bool = False,
                  b_frozen: np.ndarray | None = None) -> CoolingTerms:
    """Coulomb, bremsstrahlung, Compton and synchrotron exchange rates.

    lam_ie enters the ion equation with -, the electron equation with +.
    lam_b/lam_c/lam_syn enter the electron equation with - and the
    radiation equation with + (after unit conversion by the caller).
    """
    s = f.scaling
    cc = CoolingConstants.from_scaling(s)
    prims = primitives(f)
    rho = _interior(f.q[cst.RHO])
    ti = _interior(prims.ti)
    te = _interior(prims.te)
    er = np.maximum(_interior(f.q[cst.ER]), 0.0)
    if np.any(te <= 0.0):
        j, k = np.argwhere(te <= 0.0)[0]
        raise StateError(f"non-positive electron temperature at cell ({j}, {k})")
    shape = rho.shape
    zero = np.zeros(shape)
    derivs = {}

    if cfg.coulomb:
        te32 = te**1.5
        lam_ie = cc.coulomb * rho**2 * (ti - te) / te32
    else:
        lam_ie = zero.copy()

    kap = cfg.kappa_abs * cc.opacity_code  # 1/length per unit code density
    if cfg.brems and cfg.include_rad:
        lam_b = cc.brems * kap * rho * (te**4 - er)
    else:
        lam_b = zero.copy()

    if cfg.compton and cfg.include_rad:
        trad = er**0.25
        lam_c = cc.compton * rho * (te - trad) * er
    else:
        lam_c = zero.copy()

    if cfg.synchrotron and cfg.include_b:
        if b_frozen is None:
            b2 = (_interior(f.q[cst.BR])**2 + _interior(f.q[cst.BTH])**2
                  + _interior(f.q[cst.BT])**2)
            b_frozen = np.sqrt(np.maximum(b2, 1e-30))
        lam_syn, dsyn_dte, dsyn_drho = _gray_synchrotron(rho, te, b_frozen, s, cfg)
    else:
        lam_syn = zero.copy()
        dsyn_dte = dsyn_drho = zero

    if with_derivs:
        # chain factors: dT/dEi etc. applied by the caller
        if cfg.coulomb:
            te32 = te**1.5
            derivs["ie"] = {
                "rho": 2.0 * lam_ie / rho,
                "ti": cc.coulomb * rho**2 / te32,
                "te": cc.coulomb * rho**2 * (-1.0 / te32 - 1.5 * (ti - te) / te**2.5),
            }
        if cfg.brems and cfg.include_rad:
            derivs["b"] = {
                "rho": cc.brems * kap * (te**4 - er),
                "te": cc.brems * kap * rho * 4.0 * te**3,
                "er": -cc.brems * kap * rho,
            }
        if cfg.compton and cfg.include_rad:
            safe = np.where(er > 0.0, er, 1.0)
            derivs["c"] = {
                "rho": cc.compton * (te - er**0.25) * er,
                "te": cc.compton * rho * er,
                "er": cc.compton * rho * np.where(er > 0.0, te - 1.25 * safe**0.25, te),
            }
        if cfg.synchrotron and cfg.include_b:
            derivs["syn"] = {"rho": dsyn_drho, "te": dsyn_dte}
    return CoolingTerms(lam_ie=lam_ie, lam_b=lam_b, lam_c=lam_c, lam_syn=lam_syn, derivs=derivs)


def _gray_synchrotron(rho, te, b_code, s: ScalingSet, cfg: PhysicsConfig):
    """Frequency-integrated emissivity by fixed log quadrature (cgs -> N units)."""
    nu = np.geomspace(*cfg.syn_nu_bounds, cfg.syn_quad_points)
    dnu = np.gradient(nu)
    theta0 = cst.K_BOLTZ * s.temperature / (cst.M_ELECTRON * cst.C_LIGHT**2)
    theta = np.maximum(theta0 * te, 1e-8)
    b_gauss = np.maximum(b_code, 1e-12) * s.bfield
    rho_cgs = rho * s.density
    eps = synchro.emissivity(rho_cgs[..., None], theta[..., None], b_gauss[..., None], nu)
    deps = synchro.demissivity_dtheta(rho_cgs[..., None], theta[..., None], b_gauss[..., None], nu)
    norm = s.density * s.exchange_norm
    lam = (eps * dnu).sum(axis=-1) / norm
    dlam_dte = (deps * dnu).sum(axis=-1) * theta0 / norm
    dlam_drho = lam / rho
    return lam, dlam_dte, dlam_drho


@dataclass
class SourceTerms:
    """Exchange contributions per equation, common N units, term by term.

    The paired entries carry literally opposite floats: the ion and
    electron Coulomb terms cancel bitwise, as do the electron and
    radiation radiative terms.
    """

    ion_coulomb: np.ndarray
    electron_coulomb: np.ndarray
    electron_radiative: np.ndarray
    radiation_radiative: np.ndarray

    @property
    def electron_total(self):
        return self.electron_coulomb + self.electron_radiative


def exchange_sources(f: FieldSet, cfg: PhysicsConfig) -> SourceTerms:
    ct = cooling_rates(f, cfg)
    radiative = ct.lam_b + ct.lam_c + ct.lam_syn
    return SourceTerms(ion_coulomb=-ct.lam_ie,
                       electron_coulomb=ct.lam_ie,
                       electron_radiative=-radiative,
                       radiation_radiative=radiative)


# ---------------------------------------------------------------------------
# magnetic forces
# ---------------------------------------------------------------------------

def _ddr(a, g: Grid):
    """Central radial derivative of a padded array, interior result."""
    dr2 = (g.r_pad[NG + 1 : NG + g.nr + 1] - g.r_pad[NG - 1 : NG + g.nr - 1])[:, None]
    return (a[NG + 1 : NG + g.nr + 1, NG:-NG] - a[NG - 1 : NG + g.nr - 1, NG:-NG]) / dr2


def _ddth(a, g: Grid):
    dt2 = (g.th_pad[NG + 1 : NG + g.nth + 1] - g.th_pad[NG - 1 : NG + g.nth - 1])[None, :]
    return (a[NG:-NG, NG + 1 : NG + g.nth + 1] - a[NG:-NG, NG - 1 : NG + g.nth - 1]) / dt2


def lorentz_forces(br_pad, bth_pad, bt_pad, g: Grid, form: str = "component"):
    """Magnetic source terms of the (m, n, l) equations.

    'component' evaluates the tabulated componentwise expressions directly;
    'standard' derives them from J = curl(B) with the n and l equations
    weighted by r and r*cos(theta).
    """
    rc = g.r_c[:, None]
    cosc = g.cos_c[None, :]
    rp = g.r_pad[:, None]
    cosp = g.cos_pad[None, :]
    if form == "component":
        f_r = (_interior(bth_pad) / rc) * _ddth(br_pad, g) \
            - _ddr(rp * (bth_pad**2 + bt_pad**2), g) / rc \
            + 0.5 * _ddr(bth_pad**2 + bt_pad**2, g)
        f_th = _interior(br_pad) * _ddr(rp * bth_pad, g) \
            - 0.5 * _ddth(br_pad**2, g) \
            - (_ddth(cosp * bt_pad**2, g) / cosc - 0.5 * _ddth(bt_pad**2, g))
        s_bt = rp * cosp * bt_pad
        f_ph = _interior(br_pad) * _ddr(s_bt, g) + (_interior(bth_pad) / rc) * _ddth(s_bt, g)
        return f_r, f_th, f_ph
    if form != "standard":
        raise SolverFailure(f"unknown lorentz_forces form '{form}'")
    # J in latitude components
    j_r = -_ddth(cosp * bt_pad, g) / (rc * cosc)
    j_th = _ddr(rp * bt_pad, g) / rc
    j_ph = -(_ddr(rp * bth_pad, g) - _ddth(br_pad, g)) / rc
    br = _interior(br_pad)
    bth = _interior(bth_pad)
    bt = _interior(bt_pad)
    # latitude-frame cross product (see viscous/induction conventions)
    f_r = j_ph * bth - j_th * bt
    f_th = j_r * bt - j_ph * br
    f_ph = j_th * br - j_r * bth
    return f_r, rc * f_th, rc * cosc * f_ph


# ---------------------------------------------------------------------------
# viscosity
# ---------------------------------------------------------------------------

@dataclass
class StressTensor:
    """Six stress components on interior cells plus one ring (pad=1)."""

    t_rr: np.ndarray
    t_thth: np.ndarray
    t_phph: np.ndarray
    t_rth: np.ndarray
    t_rph: np.ndarray
    t_thph: np.ndarray


def _ring_ddr(a, g: Grid):
    """Central d/dr on interior plus one ring (needs 2 ghost layers)."""
    n = g.nr + 2
    rp = g.r_pad
    dr2 = (rp[2 : n + 2] - rp[0:n])[:, None]
    return (a[2 : n + 2, 1:-1] - a[0:n, 1:-1]) / dr2


def _ring_ddth(a, g: Grid):
    n = g.nth + 2
    tp = g.th_pad
    dt2 = (tp[2 : n + 2] - tp[0:n])[None, :]
    return (a[1:-1, 2 : n + 2] - a[1:-1, 0:n]) / dt2


def viscous_stress(vr_pad, vth_pad, vphi_pad, eta_pad, g: Grid) -> StressTensor:
    """Trace-free turbulent stress tensor (interior + one ring)."""
    rp = g.r_pad[1:-1, None]
    cosr = g.cos_pad[None, 1:-1]
    tanr = np.tan(g.th_pad)[None, 1:-1]
    eta = eta_pad[1:-1, 1:-1]
    vr = vr_pad[1:-1, 1:-1]
    vth = vth_pad[1:-1, 1:-1]

    dvr_dr = _ring_ddr(vr_pad, g)
    dvth_dth = _ring_ddth(vth_pad, g)
    # the discrete divergence is the sum of the three discrete normal
    # strains, so the deviator trace vanishes identically
    div_v = dvr_dr + dvth_dth / rp + 2.0 * vr / rp - vth * tanr / rp
    t_rr = 2.0 * eta * (dvr_dr - div_v / 3.0)
    t_thth = 2.0 * eta * (dvth_dth / rp + vr / rp - div_v / 3.0)
    # sign of the tan term fixed so the deviator stays trace-free
    t_phph = 2.0 * eta * (vr / rp - vth * tanr / rp - div_v / 3.0)
    t_thph = eta * (cosr / rp) * _ring_ddth(vphi_pad / g.cos_pad[None, :], g)
    t_rph = eta * rp * _ring_ddr(vphi_pad / g.r_pad[:, None], g)
    t_rth = eta * (rp * _ring_ddr(vth_pad / g.r_pad[:, None], g) + _ring_ddth(vr_pad, g) / rp)
    return StressTensor(t_rr, t_thth, t_phph, t_rth, t_rph, t_thph)


def _fv_div_ring(flux_r_ring, flux_th_ring, g: Grid):
    """FV divergence of ring-padded center fluxes via face averaging."""
    fr = 0.5 * (flux_r_ring[:-1, 1:-1] + flux_r_ring[1:, 1:-1])
    fth = 0.5 * (flux_th_ring[1:-1, :-1] + flux_th_ring[1:-1, 1:])
    afr = g.area_r * fr
    afth = g.area_th * fth
    return (afr[1:, :] - afr[:-1, :] + afth[:, 1:] - afth[:, :-1]) / g.vol


def viscous_forces(t: StressTensor, g: Grid):
    """Viscous sources of the m, n and l equations.

    The l source is the angular-momentum-conserving torque density
    div(s * T_phi) with s = r cos(theta): its volume-weighted sum
    telescopes to the boundary stresses exactly.
    """
    rc = g.r_c[:, None]
    cosc = g.cos_c[None, :]
    tanc = g.tan_c[None, :]
    rr = g.r_pad[1:-1, None]
    cosr = g.cos_pad[None, 1:-1]

    inner = lambda a: a[1:-1, 1:-1]
    q_r = _fv_div_ring(t.t_rr, t.t_rth, g) + inner(t.t_rr) / rc
    # n-equation source is r * (theta force); r-weighted fluxes absorb it
    q_n = _fv_div_ring(rr * t.t_rth, rr * t.t_thth, g) \
        + inner(t.t_rth) + tanc * inner(t.t_phph)
    s_ring = rr * cosr
    q_l = _fv_div_ring(s_ring * t.t_rph, s_ring * t.t_thph, g)
    return q_r, q_n, q_l


def dissipation(t: StressTensor, eta_pad, br_pad, bth_pad, bt_pad, nu_mag: float, g: Grid):
    """Phi_HD + Phi_MHD >= 0; the HD part uses T:T/(2 eta)."""
    eta = eta_pad[NG:-NG, NG:-NG]
    inner = lambda a: a[1:-1, 1:-1]
    tsq = inner(t.t_rr)**2 + inner(t.t_thth)**2 + inner(t.t_phph)**2 \
        + 2.0 * (inner(t.t_rth)**2 + inner(t.t_rph)**2 + inner(t.t_thph)**2)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi_hd = np.where(eta > 0.0, tsq / (2.0 * np.maximum(eta, 1e-300)), 0.0)
    if nu_mag > 0.0:
        rc = g.r_c[:, None]
        cosc = g.cos_c[None, :]
        rp = g.r_pad[:, None]
        cosp = g.cos_pad[None, :]
        j_r = -_ddth(cosp * bt_pad, g) / (rc * cosc)
        j_th = _ddr(rp * bt_pad, g) / rc
        j_ph = -(_ddr(rp * bth_pad, g) - _ddth(br_pad, g)) / rc
        phi_mhd = nu_mag * (j_r**2 + j_th**2 + j_ph**2)
    else:
        phi_mhd = np.zeros_like(phi_hd)
    return phi_hd + phi_mhd


# ---------------------------------------------------------------------------
# conduction and gravity
# ---------------------------------------------------------------------------

def conduction_coefficients(ti, te):
    """kappa_i = 3.2 T_i^{3/2}, kappa_e = 7.8 T_e^{3/2} (code units)."""
    ti = np.maximum(np.asarray(ti, dtype=float), 0.0)
    te = np.maximum(np.asarray(te, dtype=float), 0.0)
    return 3.2 * ti**1.5, 7.8 * te**1.5


def gravity(rho_pad, mode: str, g: Grid, scaling: ScalingSet | None = None,
            gm: float | None = None, r_horizon: float = 1.0 / 3.0, tol: float = 1e-10):
    """Gravitational potential and its gradient at cell centers.

    point: psi = -GM/r.  pseudo: -GM/(r - r_horizon).  self: discrete
    Poisson solve with a monopole Dirichlet value at r_out (Krylov
    iteration, residual <= tol).
    """
    scaling = scaling or ScalingSet.agn_reference()
    gm = scaling.grav_parameter if gm is None else gm
    rp = g.r_pad[:, None]
    rc = g.r_c[:, None]
    shape = (g.nr + 2 * NG, g.nth + 2 * NG)
    zero = np.zeros((g.nr, g.nth))
    if mode == "none":
        return np.zeros(shape), zero, zero.copy()
    if mode == "point":
        psi = np.broadcast_to(-gm / rp, shape).copy()
        return psi, np.broadcast_to(gm / rc**2, zero.shape).copy(), zero
    if mode == "pseudo":
        psi = np.broadcast_to(-gm / np.maximum(rp - r_horizon, 1e-6), shape).copy()
        return psi, np.broadcast_to(gm / np.maximum(rc - r_horizon, 1e-6) ** 2, zero.shape).copy(), zero
    if mode == "self":
        psi = _solve_poisson(rho_pad, g, 4.0 * np.pi * gm_selfgrav(scaling), tol)
        return psi, _ddr(psi, g), _ddth(psi, g)
    raise SolverFailure(f"unknown gravity mode '{mode}'")


def gm_selfgrav(s: ScalingSet) -> float:
    """G rho0 R0^2 / V0^2: self-gravity coupling in code units."""
    return cst.G_NEWTON * s.density * s.length**2 / s.velocity**2


def _solve_poisson(rho_pad, g: Grid, coupling: float, tol: float):
    """- div(grad psi) = -coupling * rho, outer monopole Dirichlet."""
    from .linsolve import BlockStencil5, krylov, lgs_two_sweep

    nr, nth = g.nr, g.nth
    rho = rho_pad[NG:-NG, NG:-NG]
    # equatorial symmetry: the grid holds the northern half of the sphere
    mass = 2.0 * float((rho * g.vol).sum())
    psi_out = -coupling / (4.0 * np.pi) * mass / g.r_faces[-1]

    tr = g.area_r / np.broadcast_to(g.dr_cc[:, None], g.area_r.shape)  # transmissibilities
    tt = g.area_th / (g.dth_cc[None, :] * g.r_c[:, None])
    diag = np.zeros((nr, nth, 1, 1))
    srm = np.zeros_like(diag)
    srp = np.zeros_like(diag)
    stm = np.zeros_like(diag)
    stp = np.zeros_like(diag)
    rhs = -(coupling * rho)[..., None].copy()

    diag[..., 0, 0] = (tr[1:, :] + tr[:-1, :] + tt[:, 1:] + tt[:, :-1]) / g.vol
    srm[..., 0, 0] = -tr[:-1, :] / g.vol
    srp[..., 0, 0] = -tr[1:, :] / g.vol
    stm[..., 0, 0] = -tt[:, :-1] / g.vol
    stp[..., 0, 0] = -tt[:, 1:] / g.vol
    # inner edge & theta edges: zero-flux (drop the leg)
    diag[0, :, 0, 0] -= tr[0, :] / g.vol[0, :]
    srm[0, :, 0, 0] = 0.0
    diag[:, 0, 0, 0] -= tt[:, 0] / g.vol[:, 0]
    stm[:, 0, 0, 0] = 0.0
    diag[:, -1, 0, 0] -= tt[:, -1] / g.vol[:, -1]
    stp[:, -1, 0, 0] = 0.0
    # outer edge: Dirichlet value on the face itself (half-cell distance)
    t_out = g.area_r[-1, :] / (g.r_faces[-1] - g.r_c[-1])
    diag[-1, :, 0, 0] += (t_out - tr[-1, :]) / g.vol[-1, :]
    rhs[-1, :, 0] += t_out / g.vol[-1, :] * psi_out
    srp[-1, :, 0, 0] = 0.0

    A = BlockStencil5(diag, srm, srp, stm, stp, inv_dt=0.0,
                      dr_diag=diag * 0.0, dth_diag=diag * 0.0)

    def ap(v):
        return A.apply(v.reshape(nr, nth, 1)).ravel()

    def pc(v):
        z, _ = lgs_two_sweep(A, v.reshape(nr, nth, 1), sweeps=3, tol=0.0)
        return z.ravel()

    x, rep = krylov(ap, pc, rhs.ravel(), tol=tol, max_it=500, probe=False)
    if not rep.converged:
        raise SolverFailure("Poisson solver did not converge", report=rep)
    psi = np.empty((nr + 2 * NG, nth + 2 * NG))
    psi[NG:-NG, NG:-NG] = x.reshape(nr, nth)
    # ghost fill: zero-gradient inner/theta, Dirichlet outer
    psi[NG - 1, :] = psi[NG, :]
    psi[NG - 2, :] = psi[NG, :]
    psi[NG + nr, :] = psi_out
    psi[NG + nr + 1, :] = psi_out
    psi[:, NG - 1] = psi[:, NG]
    psi[:, NG - 2] = psi[:, NG]
    psi[:, NG + nth] = psi[:, NG + nth - 1]
    psi[:, NG + nth + 1] = psi[:, NG + nth - 1]
    return psi
