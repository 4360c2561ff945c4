"""Residual assembly, the per-cell coefficient cluster, and matrix views.

One discretization drives five solution procedures.  assemble_cluster
produces, per cell, the per-equation transport Jacobians (A), the
cross-variable transport couplings (B) and the local source couplings (H);
generate_matrix exposes any solver mode as a live view of that storage:

    M5 explicit        I/dt only
    M4 semi-explicit   scalar diagonal of D_mod
    M3 semi-implicit   block-diagonal D_mod
    M2 per-equation    scalar 5-point stencil from A alone
    M1 fully implicit  all blocks

Linearization is Picard for advecting velocities, transport/limiter
coefficients and viscous terms (they are frozen in the cluster and in the
matching linearized residual path); pressure, gravity, radiation-force,
geometric and cooling couplings carry full analytic derivatives, and the
magnetic force terms are differentiated exactly (they are quadratic).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import operators as ops
from . import physics as ph
from .constants import (BR, BT, BTH, EE, EI, ER, GAMMA, LPHI, MR, MU_ELECTRON,
                        MU_ION, NEQ, NG, NTH, RHO, VAR_NAMES)
from .errors import AssemblyError, ConfigurationError
from .grid import Grid
from .state import BoundarySpec, FieldSet, ScalingSet, _PARITY, apply_boundary, primitives

ALL_EQS = tuple(range(NEQ))
TRANSPORTED = (RHO, MR, NTH, LPHI, EI, EE, ER)

PROV_A, PROV_B, PROV_H = 1, 2, 4

A_ION = GAMMA * (GAMMA - 1.0)
A_ELE = GAMMA * (GAMMA - 1.0) * MU_ELECTRON / MU_ION


class ModeKind(Enum):
    EXPLICIT = "M5"
    SEMI_EXPLICIT = "M4"
    SEMI_IMPLICIT = "M3"
    IOS_BLOCK = "M2"
    FULLY_IMPLICIT = "M1"


@dataclass(frozen=True)
class SolverMode:
    kind: ModeKind
    eqs: tuple = ALL_EQS  # global variable indices

    def __post_init__(self):
        if len(self.eqs) == 0:
            raise ConfigurationError("solver mode needs a nonempty equation subset")


HD_BLOCK = (RHO, MR, NTH, LPHI, EI, EE, ER)
MHD_BLOCK = (BR, BTH, BT)


# ---------------------------------------------------------------------------
# frozen (Picard) coefficient snapshot
# ---------------------------------------------------------------------------

@dataclass
class FrozenCoeffs:
    vrf: np.ndarray
    vthf: np.ndarray
    ap_r: np.ndarray
    am_r: np.ndarray
    ap_t: np.ndarray
    am_t: np.ndarray
    vth_rf: np.ndarray
    vph_rf: np.ndarray
    vr_tf: np.ndarray
    vph_tf: np.ndarray
    div_v: np.ndarray
    lam_rad: np.ndarray | None = None
    eta_rf: np.ndarray | None = None
    eta_tf: np.ndarray | None = None
    ki_rf: np.ndarray | None = None
    ki_tf: np.ndarray | None = None
    ke_rf: np.ndarray | None = None
    ke_tf: np.ndarray | None = None
    visc: dict = field(default_factory=dict)   # eq -> frozen source array
    b_syn: np.ndarray | None = None
    mixed_br: np.ndarray | None = None         # frozen d_r(r Bth) on theta faces
    mixed_bth: np.ndarray | None = None        # frozen d_th(Br) on r faces
    grav: tuple | None = None                  # (dpsi_dr, dpsi_dth) for self mode


# ---------------------------------------------------------------------------
# discretization context
# ---------------------------------------------------------------------------

class Discretization:
    """Grid + physics + boundary context shared by residual and cluster."""

    def __init__(self, grid: Grid, scaling: ScalingSet | None = None,
                 bspec: BoundarySpec | None = None, phys: ph.PhysicsConfig | None = None,
                 eqs=ALL_EQS, order: int = 1, limiter: bool = False,
                 blocked_r=None, blocked_th=None, frozen_mask=None):
        self.grid = grid
        self.scaling = scaling or ScalingSet.agn_reference()
        self.bspec = bspec or BoundarySpec()
        self.phys = phys or ph.PhysicsConfig()
        self.eqs = tuple(eqs)
        self.order = order
        self.limiter = limiter
        self.pos = {v: i for i, v in enumerate(self.eqs)}
        self.blocked_r = blocked_r
        self.blocked_th = blocked_th
        self.frozen_mask = frozen_mask
        g = grid
        self.d2r = (g.r_pad[NG + 1 : NG + g.nr + 1] - g.r_pad[NG - 1 : NG + g.nr - 1])
        self.d2t = (g.th_pad[NG + 1 : NG + g.nth + 1] - g.th_pad[NG - 1 : NG + g.nth - 1])
        self._ww_r = None
        self._ww_t = None
        if self.phys.gravity in ("point", "pseudo", "none"):
            _, self.grav_r, self.grav_th = ph.gravity(
                np.zeros((g.nr + 2 * NG, g.nth + 2 * NG)), self.phys.gravity, g,
                self.scaling, self.phys.gm, self.phys.r_horizon)
        else:
            self.grav_r = self.grav_th = None

    # -- helpers ----------------------------------------------------------
    def ddr(self, a_pad):
        g = self.grid
        return (a_pad[NG + 1 : NG + g.nr + 1, NG:-NG] - a_pad[NG - 1 : NG + g.nr - 1, NG:-NG]) / self.d2r[:, None]

    def ddth(self, a_pad):
        g = self.grid
        return (a_pad[NG:-NG, NG + 1 : NG + g.nth + 1] - a_pad[NG:-NG, NG - 1 : NG + g.nth - 1]) / self.d2t[None, :]

    def _wall_weights_r(self):
        """Per-cell central/one-sided weights for radial gradients of
        non-flux terms (pressure, radiation force) beside blocked faces:
        a rigid wall mirrors the gas value, so the difference never reaches
        across it.  Returns (w_m, w_p): gradient = w_p*a(j+1) - w_m*a(j-1)
        + (w_m - w_p)*a(j)."""
        g = self.grid
        if self._ww_r is not None:
            return self._ww_r
        w_m = 1.0 / np.broadcast_to(self.d2r[:, None], (g.nr, g.nth)).copy()
        w_p = w_m.copy()
        if self.blocked_r is not None:
            dlo = np.broadcast_to((g.r_pad[NG : NG + g.nr] - g.r_pad[NG - 1 : NG + g.nr - 1])[:, None],
                                  (g.nr, g.nth))
            dhi = np.broadcast_to((g.r_pad[NG + 1 : NG + g.nr + 1] - g.r_pad[NG : NG + g.nr])[:, None],
                                  (g.nr, g.nth))
            blk_lo = self.blocked_r[:-1, :]
            blk_hi = self.blocked_r[1:, :]
            w_m = np.where(blk_lo & ~blk_hi, 0.0, w_m)
            w_p = np.where(blk_lo & ~blk_hi, 1.0 / dhi, w_p)
            w_p = np.where(blk_hi & ~blk_lo, 0.0, w_p)
            w_m = np.where(blk_hi & ~blk_lo, 1.0 / dlo, w_m)
            w_m = np.where(blk_lo & blk_hi, 0.0, w_m)
            w_p = np.where(blk_lo & blk_hi, 0.0, w_p)
        self._ww_r = (w_m, w_p)
        return self._ww_r

    def _wall_weights_th(self):
        g = self.grid
        if self._ww_t is not None:
            return self._ww_t
        w_m = 1.0 / np.broadcast_to(self.d2t[None, :], (g.nr, g.nth)).copy()
        w_p = w_m.copy()
        if self.blocked_th is not None:
            dlo = np.broadcast_to((g.th_pad[NG : NG + g.nth] - g.th_pad[NG - 1 : NG + g.nth - 1])[None, :],
                                  (g.nr, g.nth))
            dhi = np.broadcast_to((g.th_pad[NG + 1 : NG + g.nth + 1] - g.th_pad[NG : NG + g.nth])[None, :],
                                  (g.nr, g.nth))
            blk_lo = self.blocked_th[:, :-1]
            blk_hi = self.blocked_th[:, 1:]
            w_m = np.where(blk_lo & ~blk_hi, 0.0, w_m)
            w_p = np.where(blk_lo & ~blk_hi, 1.0 / dhi, w_p)
            w_p = np.where(blk_hi & ~blk_lo, 0.0, w_p)
            w_m = np.where(blk_hi & ~blk_lo, 1.0 / dlo, w_m)
            w_m = np.where(blk_lo & blk_hi, 0.0, w_m)
            w_p = np.where(blk_lo & blk_hi, 0.0, w_p)
        self._ww_t = (w_m, w_p)
        return self._ww_t

    def grad_r(self, a_pad):
        """Radial gradient of a non-flux term, one-sided beside walls."""
        if self.blocked_r is None:
            return self.ddr(a_pad)
        g = self.grid
        w_m, w_p = self._wall_weights_r()
        a_c = a_pad[NG : NG + g.nr, NG:-NG]
        a_m = a_pad[NG - 1 : NG + g.nr - 1, NG:-NG]
        a_p = a_pad[NG + 1 : NG + g.nr + 1, NG:-NG]
        return w_p * a_p - w_m * a_m + (w_m - w_p) * a_c

    def grad_th(self, a_pad):
        if self.blocked_th is None:
            return self.ddth(a_pad)
        g = self.grid
        w_m, w_p = self._wall_weights_th()
        a_c = a_pad[NG:-NG, NG : NG + g.nth]
        a_m = a_pad[NG:-NG, NG - 1 : NG + g.nth - 1]
        a_p = a_pad[NG:-NG, NG + 1 : NG + g.nth + 1]
        return w_p * a_p - w_m * a_m + (w_m - w_p) * a_c

    def active(self, var: int) -> bool:
        return var in self.pos

    # -- coefficient snapshot ----------------------------------------------
    def freeze(self, f: FieldSet) -> FrozenCoeffs:
        g = self.grid
        prims = primitives(f)
        vrf, _ = ops.face_average(prims.vr, g)
        _, vthf = ops.face_average(prims.vth, g)
        vth_rf, _ = ops.face_average(prims.vth, g)
        vph_rf, vph_tf = ops.face_average(prims.vphi, g)
        _, vr_tf = ops.face_average(prims.vr, g)
        if self.blocked_r is not None:
            vrf = np.where(self.blocked_r, 0.0, vrf)
        if self.blocked_th is not None:
            vthf = np.where(self.blocked_th, 0.0, vthf)
        ap_r, am_r = ops.upwind_weights(vrf)
        ap_t, am_t = ops.upwind_weights(vthf)
        div_v = ops.divergence(ops.FaceFluxField(fr=vrf, fth=vthf), g)
        fc = FrozenCoeffs(vrf=vrf, vthf=vthf, ap_r=ap_r, am_r=am_r, ap_t=ap_t, am_t=am_t,
                          vth_rf=vth_rf, vph_rf=vph_rf, vr_tf=vr_tf, vph_tf=vph_tf,
                          div_v=div_v)
        cfg = self.phys
        s = self.scaling
        cc = ph.CoolingConstants.from_scaling(s)
        if cfg.include_rad and self.active(ER):
            chi = cfg.kappa_abs * cc.opacity_code * f.q[RHO] + cfg.sigma_sc * cc.opacity_code * f.q[RHO]
            lim = ops.fld_coefficient(np.maximum(f.q[ER], 0.0), chi, g)
            fc.eta_rf, fc.eta_tf = lim.eta_r, lim.eta_th
            chi_c = chi[NG:-NG, NG:-NG]
            eta_c = 0.5 * (lim.eta_r[:-1, :] + lim.eta_r[1:, :])
            fc.lam_rad = np.minimum(eta_c * chi_c, 1.0 / 3.0)
        if cfg.conduction:
            ki, ke = ph.conduction_coefficients(prims.ti, prims.te)
            fc.ki_rf, fc.ki_tf = ops.face_harmonic(ki, g)
            fc.ke_rf, fc.ke_tf = ops.face_harmonic(ke, g)
        if cfg.viscosity_eta > 0.0:
            eta = np.full_like(prims.vr, cfg.viscosity_eta)
            st = ph.viscous_stress(prims.vr, prims.vth, prims.vphi, eta, g)
            q_r, q_n, q_l = ph.viscous_forces(st, g)
            fc.visc = {MR: q_r, NTH: q_n, LPHI: q_l,
                       EI: ph.dissipation(st, eta, f.q[BR], f.q[BTH], f.q[BT], cfg.nu_mag, g)}
        elif cfg.nu_mag > 0.0 and cfg.include_b:
            eta = np.zeros_like(prims.vr)
            st = ph.viscous_stress(prims.vr * 0, prims.vth * 0, prims.vphi * 0, eta, g)
            fc.visc = {EI: ph.dissipation(st, eta, f.q[BR], f.q[BTH], f.q[BT], cfg.nu_mag, g)}
        if cfg.synchrotron and cfg.include_b:
            b2 = sum(f.q[i][NG:-NG, NG:-NG] ** 2 for i in (BR, BTH, BT))
            fc.b_syn = np.sqrt(np.maximum(b2, 1e-30))
        if cfg.include_b and cfg.nu_mag != 0.0:
            rbth = g.r_pad[:, None] * f.q[BTH]
            fc.mixed_br = self.ddth_face_r(f.q[BR])       # d_th Br on r faces
            fc.mixed_bth = self.ddr_face_t(rbth)          # d_r(r Bth) on theta faces
        if cfg.gravity == "self":
            _, gr, gt = ph.gravity(f.q[RHO], "self", g, self.scaling)
            fc.grav = (gr, gt)
        return fc

    def ddth_face_r(self, a_pad):
        """Central theta derivative interpolated onto radial faces."""
        g = self.grid
        c = self.ddth(a_pad)
        p = np.pad(c, ((1, 1), (0, 0)), mode="edge")
        return 0.5 * (p[:-1, :] + p[1:, :])

    def ddr_face_t(self, a_pad):
        g = self.grid
        c = self.ddr(a_pad)
        p = np.pad(c, ((0, 0), (1, 1)), mode="edge")
        return 0.5 * (p[:, :-1] + p[:, 1:])


# ---------------------------------------------------------------------------
# residual assembly
# ---------------------------------------------------------------------------

def assemble_rhs(f: FieldSet, disc: Discretization, frozen: FrozenCoeffs | None = None) -> np.ndarray:
    """Per-cell residual RHS = sources - flux divergences, (nr, nth, Qa).

    With `frozen` given, every Picard coefficient (face velocities, upwind
    directions, diffusion/limiter coefficients, viscous sources, mixed
    induction terms) is taken from the snapshot, making the result an
    affine function of f whose exact derivative is the assembled cluster.
    """
    g = disc.grid
    cfg = disc.phys
    s = disc.scaling
    live = frozen is None
    fz = frozen if frozen is not None else disc.freeze(f)
    nr, nth = g.nr, g.nth
    rhs = np.zeros((nr, nth, len(disc.eqs)))
    inner = lambda a: a[NG:-NG, NG:-NG]
    rc = g.r_c[:, None]
    cosc = g.cos_c[None, :]

    order = disc.order if live else 1
    for var in TRANSPORTED:
        if not disc.active(var):
            continue
        if live:
            flux = ops.advect(f.q[var], fz.vrf, fz.vthf, order, g,
                              disc.blocked_r, disc.blocked_th, limiter=disc.limiter)
        else:
            flux = _frozen_advect(f.q[var], fz, g, disc)
        rhs[:, :, disc.pos[var]] -= ops.divergence(flux, g)

    prims = primitives(f)
    rho_i = inner(f.q[RHO])

    if disc.active(MR):
        row = disc.pos[MR]
        rhs[:, :, row] -= disc.grad_r(prims.pgas)
        n_i = inner(f.q[NTH])
        l_i = inner(f.q[LPHI])
        rhs[:, :, row] += n_i**2 / (rho_i * rc**3) + l_i**2 / (rho_i * rc**3 * cosc**2)
        gr = fz.grav[0] if fz.grav is not None else disc.grav_r
        if gr is not None:
            rhs[:, :, row] -= rho_i * gr
        if cfg.include_rad and disc.active(ER) and fz.lam_rad is not None:
            rhs[:, :, row] -= s.rad_to_gas * fz.lam_rad * disc.grad_r(f.q[ER])
        if cfg.include_b:
            f_r, _, _ = ph.lorentz_forces(f.q[BR], f.q[BTH], f.q[BT], g, cfg.lorentz_form)
            rhs[:, :, row] += f_r
        if MR in fz.visc:
            rhs[:, :, row] += fz.visc[MR]

    if disc.active(NTH):
        row = disc.pos[NTH]
        rhs[:, :, row] -= disc.grad_th(prims.pgas)
        l_i = inner(f.q[LPHI])
        sinc = np.sin(g.th_c)[None, :]
        rhs[:, :, row] -= l_i**2 * sinc / (rho_i * rc**2 * cosc**3)
        gt = fz.grav[1] if fz.grav is not None else disc.grav_th
        if gt is not None:
            rhs[:, :, row] -= rho_i * gt
        if cfg.include_rad and disc.active(ER) and fz.lam_rad is not None:
            rhs[:, :, row] -= s.rad_to_gas * fz.lam_rad * disc.grad_th(f.q[ER])
        if cfg.include_b:
            _, f_th, _ = ph.lorentz_forces(f.q[BR], f.q[BTH], f.q[BT], g, cfg.lorentz_form)
            rhs[:, :, row] += f_th
        if NTH in fz.visc:
            rhs[:, :, row] += fz.visc[NTH]

    if disc.active(LPHI):
        row = disc.pos[LPHI]
        if cfg.include_b:
            _, _, f_ph = ph.lorentz_forces(f.q[BR], f.q[BTH], f.q[BT], g, cfg.lorentz_form)
            rhs[:, :, row] += f_ph
        if LPHI in fz.visc:
            rhs[:, :, row] += fz.visc[LPHI]

    c_gas = ((GAMMA - 1.0) / GAMMA) * s.ang_velocity / s.velocity
    c_rad = c_gas / s.rad_to_gas
    needs_cooling = (cfg.coulomb or cfg.brems or cfg.compton or cfg.synchrotron) \
        and (disc.active(EI) or disc.active(EE) or disc.active(ER))
    ct = ph.cooling_rates(f, cfg, b_frozen=fz.b_syn) if needs_cooling else None

    if disc.active(EI):
        row = disc.pos[EI]
        rhs[:, :, row] -= (GAMMA - 1.0) * inner(f.q[EI]) * fz.div_v
        if cfg.conduction and fz.ki_rf is not None:
            ti = A_ION * f.q[EI] / f.q[RHO]
            rhs[:, :, row] -= ops.divergence(
                ops.diffuse(ti, fz.ki_rf, fz.ki_tf, g, disc.blocked_r, disc.blocked_th), g)
        if ct is not None:
            rhs[:, :, row] -= c_gas * ct.lam_ie
        if EI in fz.visc:
            rhs[:, :, row] += fz.visc[EI]

    if disc.active(EE):
        row = disc.pos[EE]
        rhs[:, :, row] -= (GAMMA - 1.0) * inner(f.q[EE]) * fz.div_v
        if cfg.conduction and fz.ke_rf is not None:
            te = A_ELE * f.q[EE] / f.q[RHO]
            rhs[:, :, row] -= ops.divergence(
                ops.diffuse(te, fz.ke_rf, fz.ke_tf, g, disc.blocked_r, disc.blocked_th), g)
        if ct is not None:
            rhs[:, :, row] += c_gas * (ct.lam_ie - ct.lam_b - ct.lam_c - ct.lam_syn)

    if disc.active(ER) and cfg.include_rad:
        row = disc.pos[ER]
        chat = ph.cst.C_LIGHT / s.velocity
        if fz.eta_rf is not None:
            rhs[:, :, row] -= chat * ops.divergence(
                ops.diffuse(f.q[ER], fz.eta_rf, fz.eta_tf, g, disc.blocked_r, disc.blocked_th), g)
        if ct is not None:
            rhs[:, :, row] += c_rad * (ct.lam_b + ct.lam_c + ct.lam_syn)

    if cfg.include_b and all(disc.active(v) for v in (BR, BTH, BT)):
        dbr, dbth, dbt = _induction_rhs(f, fz, disc)
        rhs[:, :, disc.pos[BR]] += dbr
        rhs[:, :, disc.pos[BTH]] += dbth
        rhs[:, :, disc.pos[BT]] += dbt

    if disc.frozen_mask is not None:
        rhs[disc.frozen_mask] = 0.0

    if not np.all(np.isfinite(rhs)):
        bad = np.argwhere(~np.isfinite(rhs))[0]
        raise AssemblyError(
            f"non-finite residual at cell ({bad[0]}, {bad[1]}) equation {VAR_NAMES[disc.eqs[bad[2]]]}")
    return rhs


def _frozen_advect(q_pad, fz: FrozenCoeffs, g: Grid, disc: Discretization) -> ops.FaceFluxField:
    """Donor-cell fluxes with frozen upwind weights."""
    L = q_pad[NG - 1 : NG + g.nr, NG:-NG]
    R = q_pad[NG : NG + g.nr + 1, NG:-NG]
    fr = fz.ap_r * L + fz.am_r * R
    L = q_pad[NG:-NG, NG - 1 : NG + g.nth]
    R = q_pad[NG:-NG, NG : NG + g.nth + 1]
    fth = fz.ap_t * L + fz.am_t * R
    return ops.FaceFluxField(fr=fr, fth=fth).blocked(disc.blocked_r, disc.blocked_th)


def _induction_rhs(f: FieldSet, fz: FrozenCoeffs, disc: Discretization):
    """Cell-centered EMF-curl rates for (Br, Bth, BT); linear in B."""
    g = disc.grid
    cfg = disc.phys
    nu = cfg.nu_mag
    al = cfg.alpha_dyn
    br_rf, br_tf = ops.face_average(f.q[BR], g)
    bth_rf, bth_tf = ops.face_average(f.q[BTH], g)
    bt_rf, bt_tf = ops.face_average(f.q[BT], g)

    # E_phi on theta faces (for the Br equation)
    e_phi_t = fz.vthf * br_tf - fz.vr_tf * bth_tf
    if al != 0.0:
        e_phi_t = e_phi_t + al * bt_tf
    if nu != 0.0:
        dbr_dth = (f.q[BR][NG:-NG, NG : NG + g.nth + 1] - f.q[BR][NG:-NG, NG - 1 : NG + g.nth]) / g.dth_cc[None, :]
        curl_phi_t = -(fz.mixed_bth - dbr_dth) / g.r_c[:, None]
        e_phi_t = e_phi_t - nu * curl_phi_t
    dsin = np.diff(g.sin_f)[None, :]
    cos_e = g.cos_f[None, :] * e_phi_t
    dbr = -(cos_e[:, 1:] - cos_e[:, :-1]) / (g.r_c[:, None] * dsin)

    # E_phi on r faces (for the Bth equation)
    e_phi_r = fz.vth_rf * br_rf - fz.vrf * bth_rf
    if al != 0.0:
        e_phi_r = e_phi_r + al * bt_rf
    if nu != 0.0:
        rbth = g.r_pad[:, None] * f.q[BTH]
        d_rbth = (rbth[NG : NG + g.nr + 1, NG:-NG] - rbth[NG - 1 : NG + g.nr, NG:-NG]) / g.dr_cc[:, None]
        curl_phi_r = -(d_rbth - fz.mixed_br) / g.r_faces[:, None]
        e_phi_r = e_phi_r - nu * curl_phi_r
    r_e = g.r_faces[:, None] * e_phi_r
    dbth = (r_e[1:, :] - r_e[:-1, :]) / (g.r_c[:, None] * g.dr[:, None])

    # BT equation from E_theta (r faces) and E_r (theta faces)
    e_th = fz.vrf * bt_rf - fz.vph_rf * br_rf
    if al != 0.0:
        e_th = e_th + al * bth_rf
    if nu != 0.0:
        rbt = g.r_pad[:, None] * f.q[BT]
        d_rbt = (rbt[NG : NG + g.nr + 1, NG:-NG] - rbt[NG - 1 : NG + g.nr, NG:-NG]) / g.dr_cc[:, None]
        e_th = e_th - nu * d_rbt / g.r_faces[:, None]
    e_r = fz.vph_tf * bth_tf - fz.vthf * bt_tf
    if al != 0.0:
        e_r = e_r + al * br_tf
    if nu != 0.0:
        cbt = g.cos_pad[None, :] * f.q[BT]
        d_cbt = (cbt[NG:-NG, NG : NG + g.nth + 1] - cbt[NG:-NG, NG - 1 : NG + g.nth]) / g.dth_cc[None, :]
        safe = np.where(g.cos_f > 1e-12, g.cos_f, 1.0)
        curl_r = np.where(g.cos_f[None, :] > 1e-12, -d_cbt / (g.r_c[:, None] * safe[None, :]), 0.0)
        e_r = e_r - nu * curl_r
    r_eth = g.r_faces[:, None] * e_th
    dbt = -(r_eth[1:, :] - r_eth[:-1, :]) / (g.r_c[:, None] * g.dr[:, None]) \
        + (e_r[:, 1:] - e_r[:, :-1]) / (g.r_c[:, None] * g.dth[None, :])
    return dbr, dbth, dbt


def linearized_rhs(f0: FieldSet, f: FieldSet, disc: Discretization,
                   frozen: FrozenCoeffs | None = None) -> np.ndarray:
    """The frozen-coefficient residual of f around linearization point f0."""
    fz = frozen if frozen is not None else disc.freeze(f0)
    fb = f.copy()
    apply_boundary(fb, disc.bspec, disc.grid)
    return assemble_rhs(fb, disc, frozen=fz)


def residual_norms(rhs: np.ndarray):
    """(max-norm, L2) per equation column."""
    flat = rhs.reshape(-1, rhs.shape[-1])
    return np.abs(flat).max(axis=0), np.linalg.norm(flat, axis=0)


# ---------------------------------------------------------------------------
# the coefficient cluster
# ---------------------------------------------------------------------------

LEGS = ("d", "rm", "rp", "tm", "tp")


class CoefficientCluster:
    """Per-cell Jacobian storage split by provenance.

    A entries (per-equation self transport) live in scalar arrays, B and H
    entries in full blocks; D composes as diag(drA+dthA) + drB + dthB + dH.
    All views generated from the cluster read this storage live.
    """

    def __init__(self, disc: Discretization, inv_dt):
        nr, nth = disc.grid.shape
        qa = len(disc.eqs)
        self.disc = disc
        self.eqs = disc.eqs
        self.inv_dt = inv_dt
        self.qa = qa
        self.drA = np.zeros((nr, nth, qa))
        self.dthA = np.zeros((nr, nth, qa))
        self.srmA = np.zeros((nr, nth, qa))
        self.srpA = np.zeros((nr, nth, qa))
        self.stmA = np.zeros((nr, nth, qa))
        self.stpA = np.zeros((nr, nth, qa))
        self.drB = np.zeros((nr, nth, qa, qa))
        self.dthB = np.zeros((nr, nth, qa, qa))
        self.dH = np.zeros((nr, nth, qa, qa))
        self.srmB = np.zeros((nr, nth, qa, qa))
        self.srpB = np.zeros((nr, nth, qa, qa))
        self.stmB = np.zeros((nr, nth, qa, qa))
        self.stpB = np.zeros((nr, nth, qa, qa))
        self.prov = {leg: np.zeros((qa, qa), dtype=np.uint8) for leg in LEGS}
        self.frozen = None

    # -- composition -------------------------------------------------------
    def diag_block(self) -> np.ndarray:
        d = self.drB + self.dthB + self.dH
        idx = np.arange(self.qa)
        d = d.copy()
        d[..., idx, idx] += self.drA + self.dthA
        return d

    def scalar_diag(self) -> np.ndarray:
        d = self.drA + self.dthA
        idx = np.arange(self.qa)
        return d + (self.drB + self.dthB + self.dH)[..., idx, idx]

    def leg_block(self, leg: str) -> np.ndarray:
        a = {"rm": self.srmA, "rp": self.srpA, "tm": self.stmA, "tp": self.stpA}[leg]
        b = {"rm": self.srmB, "rp": self.srpB, "tm": self.stmB, "tp": self.stpB}[leg]
        out = b.copy()
        idx = np.arange(self.qa)
        out[..., idx, idx] += a
        return out

    def check_finite(self):
        for name in ("drA", "dthA", "srmA", "srpA", "stmA", "stpA",
                     "drB", "dthB", "dH", "srmB", "srpB", "stmB", "stpB"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)):
                bad = np.argwhere(~np.isfinite(arr))[0]
                raise AssemblyError(f"non-finite cluster entry in {name} at {tuple(bad)}")

    def mark(self, leg: str, row: int, col: int, prov: int):
        self.prov[leg][row, col] |= prov


def assemble_cluster(f: FieldSet, disc: Discretization, dt) -> CoefficientCluster:
    """Analytic partial derivatives of the discrete operator L = -RHS.

    The returned blocks reproduce finite differences of the frozen-
    coefficient assemble_rhs to round-off; dt may be a scalar or a per-cell
    array (residual smoothing), and np.inf drops the identity part.
    """
    g = disc.grid
    cfg = disc.phys
    s = disc.scaling
    inv_dt = 0.0 if np.all(np.isinf(dt)) else 1.0 / np.asarray(dt, dtype=float)
    cl = CoefficientCluster(disc, inv_dt)
    fz = disc.freeze(f)
    cl.frozen = fz
    nr, nth = g.nr, g.nth
    inner = lambda a: a[NG:-NG, NG:-NG]
    rc = g.r_c[:, None]
    cosc = g.cos_c[None, :]
    d2r = disc.d2r[:, None]
    d2t = disc.d2t[None, :]
    prims = primitives(f)
    rho_i = inner(f.q[RHO])

    # -- A: donor-cell transport, identical stencil for every advected row
    ar = g.area_r * np.where(disc.blocked_r, 0.0, 1.0) if disc.blocked_r is not None else g.area_r
    at = g.area_th * np.where(disc.blocked_th, 0.0, 1.0) if disc.blocked_th is not None else g.area_th
    apr = ar * fz.ap_r
    amr = ar * fz.am_r
    apt = at * fz.ap_t
    amt = at * fz.am_t
    tr_dr = (apr[1:, :] - amr[:-1, :]) / g.vol
    tr_srm = -apr[:-1, :] / g.vol
    tr_srp = amr[1:, :] / g.vol
    tr_dth = (apt[:, 1:] - amt[:, :-1]) / g.vol
    tr_stm = -apt[:, :-1] / g.vol
    tr_stp = amt[:, 1:] / g.vol
    for var in TRANSPORTED:
        if not disc.active(var):
            continue
        i = disc.pos[var]
        cl.drA[:, :, i] += tr_dr
        cl.srmA[:, :, i] += tr_srm
        cl.srpA[:, :, i] += tr_srp
        cl.dthA[:, :, i] += tr_dth
        cl.stmA[:, :, i] += tr_stm
        cl.stpA[:, :, i] += tr_stp
        for leg in LEGS:
            cl.mark(leg, i, i, PROV_A)

    # -- momentum sources --------------------------------------------------
    wr_m, wr_p = disc._wall_weights_r() if disc.blocked_r is not None else (1.0 / d2r, 1.0 / d2r)
    wt_m, wt_p = disc._wall_weights_th() if disc.blocked_th is not None else (1.0 / d2t, 1.0 / d2t)
    if disc.active(MR):
        row = disc.pos[MR]
        for col, fac in ((EI, GAMMA - 1.0), (EE, GAMMA - 1.0)):
            if disc.active(col):
                c = disc.pos[col]
                cl.srpB[:, :, row, c] += fac * wr_p          # L += +grad_r(P)
                cl.srmB[:, :, row, c] += -fac * wr_m
                cl.dH[:, :, row, c] += fac * (wr_m - wr_p)
                cl.mark("rp", row, c, PROV_B)
                cl.mark("rm", row, c, PROV_B)
        if cfg.include_rad and disc.active(ER) and fz.lam_rad is not None:
            c = disc.pos[ER]
            w = s.rad_to_gas * fz.lam_rad
            cl.srpB[:, :, row, c] += w * wr_p
            cl.srmB[:, :, row, c] += -w * wr_m
            cl.dH[:, :, row, c] += w * (wr_m - wr_p)
            cl.mark("rp", row, c, PROV_B)
            cl.mark("rm", row, c, PROV_B)
        n_i = inner(f.q[NTH])
        l_i = inner(f.q[LPHI])
        z = n_i**2 / (rho_i * rc**3) + l_i**2 / (rho_i * rc**3 * cosc**2)
        _add_h(cl, row, RHO, z / rho_i)
        if disc.active(NTH):
            _add_h(cl, row, NTH, -2.0 * n_i / (rho_i * rc**3))
        if disc.active(LPHI):
            _add_h(cl, row, LPHI, -2.0 * l_i / (rho_i * rc**3 * cosc**2))
        gr = fz.grav[0] if fz.grav is not None else disc.grav_r
        if gr is not None:
            _add_h(cl, row, RHO, gr)

    if disc.active(NTH):
        row = disc.pos[NTH]
        for col, fac in ((EI, GAMMA - 1.0), (EE, GAMMA - 1.0)):
            if disc.active(col):
                c = disc.pos[col]
                cl.stpB[:, :, row, c] += fac * wt_p
                cl.stmB[:, :, row, c] += -fac * wt_m
                cl.dH[:, :, row, c] += fac * (wt_m - wt_p)
                cl.mark("tp", row, c, PROV_B)
                cl.mark("tm", row, c, PROV_B)
        if cfg.include_rad and disc.active(ER) and fz.lam_rad is not None:
            c = disc.pos[ER]
            w = s.rad_to_gas * fz.lam_rad
            cl.stpB[:, :, row, c] += w * wt_p
            cl.stmB[:, :, row, c] += -w * wt_m
            cl.dH[:, :, row, c] += w * (wt_m - wt_p)
            cl.mark("tp", row, c, PROV_B)
            cl.mark("tm", row, c, PROV_B)
        l_i = inner(f.q[LPHI])
        sinc = np.sin(g.th_c)[None, :]
        w = l_i**2 * sinc / (rho_i * rc**2 * cosc**3)
        _add_h(cl, row, RHO, -w / rho_i)
        if disc.active(LPHI):
            _add_h(cl, row, LPHI, 2.0 * l_i * sinc / (rho_i * rc**2 * cosc**3))
        gt = fz.grav[1] if fz.grav is not None else disc.grav_th
        if gt is not None:
            _add_h(cl, row, RHO, gt)

    # -- energy sources ------------------------------------------------------
    c_gas = ((GAMMA - 1.0) / GAMMA) * s.ang_velocity / s.velocity
    c_rad = c_gas / s.rad_to_gas
    needs_cooling = (cfg.coulomb or cfg.brems or cfg.compton or cfg.synchrotron) \
        and (disc.active(EI) or disc.active(EE) or disc.active(ER))
    ct = ph.cooling_rates(f, cfg, with_derivs=True, b_frozen=fz.b_syn) if needs_cooling else None
    ti = inner(prims.ti)
    te = inner(prims.te)
    dti = {"rho": -ti / rho_i, "ei": A_ION / rho_i}
    dte = {"rho": -te / rho_i, "ee": A_ELE / rho_i}

    if disc.active(EI):
        row = disc.pos[EI]
        _add_h(cl, row, EI, (GAMMA - 1.0) * fz.div_v)
        if cfg.conduction and fz.ki_rf is not None:
            _add_diffusion(cl, disc, row, fz.ki_rf, fz.ki_tf,
                           chain={RHO: -A_ION * f.q[EI] / f.q[RHO] ** 2, EI: A_ION / f.q[RHO]})
        if ct is not None and "ie" in ct.derivs:
            d = ct.derivs["ie"]
            _add_h(cl, row, RHO, c_gas * (d["rho"] + d["ti"] * dti["rho"] + d["te"] * dte["rho"]))
            _add_h(cl, row, EI, c_gas * d["ti"] * dti["ei"])
            _add_h(cl, row, EE, c_gas * d["te"] * dte["ee"])

    if disc.active(EE):
        row = disc.pos[EE]
        _add_h(cl, row, EE, (GAMMA - 1.0) * fz.div_v)
        if cfg.conduction and fz.ke_rf is not None:
            _add_diffusion(cl, disc, row, fz.ke_rf, fz.ke_tf,
                           chain={RHO: -A_ELE * f.q[EE] / f.q[RHO] ** 2, EE: A_ELE / f.q[RHO]})
        if ct is not None:
            dl_rho = np.zeros_like(rho_i)
            dl_ee = np.zeros_like(rho_i)
            dl_er = np.zeros_like(rho_i)
            if "ie" in ct.derivs:
                d = ct.derivs["ie"]
                dl_rho -= d["rho"] + d["ti"] * dti["rho"] + d["te"] * dte["rho"]
                dl_ee -= d["te"] * dte["ee"]
                _add_h(cl, row, EI, -c_gas * d["ti"] * dti["ei"])
            for key in ("b", "c", "syn"):
                if key in ct.derivs:
                    d = ct.derivs[key]
                    dl_rho += d.get("rho", 0.0) + d.get("te", 0.0) * dte["rho"]
                    dl_ee += d.get("te", 0.0) * dte["ee"]
                    dl_er += d.get("er", 0.0)
            _add_h(cl, row, RHO, c_gas * dl_rho)
            _add_h(cl, row, EE, c_gas * dl_ee)
            if disc.active(ER):
                _add_h(cl, row, ER, c_gas * dl_er)

    if disc.active(ER) and cfg.include_rad:
        row = disc.pos[ER]
        chat = ph.cst.C_LIGHT / s.velocity
        if fz.eta_rf is not None:
            _add_diffusion(cl, disc, row, chat * fz.eta_rf, chat * fz.eta_tf, chain={ER: None})
        if ct is not None:
            dl_rho = np.zeros_like(rho_i)
            dl_ee = np.zeros_like(rho_i)
            dl_er = np.zeros_like(rho_i)
            for key in ("b", "c", "syn"):
                if key in ct.derivs:
                    d = ct.derivs[key]
                    dl_rho += d.get("rho", 0.0) + d.get("te", 0.0) * dte["rho"]
                    dl_ee += d.get("te", 0.0) * dte["ee"]
                    dl_er += d.get("er", 0.0)
            _add_h(cl, row, RHO, -c_rad * dl_rho)
            if disc.active(EE):
                _add_h(cl, row, EE, -c_rad * dl_ee)
            _add_h(cl, row, ER, -c_rad * dl_er)

    if cfg.include_b and all(disc.active(v) for v in (BR, BTH, BT)):
        _assemble_induction(cl, f, fz, disc)
        if cfg.lorentz_form == "component":
            _assemble_lorentz(cl, f, disc)

    if disc.frozen_mask is not None:
        m = disc.frozen_mask
        for name in ("drA", "dthA", "srmA", "srpA", "stmA", "stpA"):
            getattr(cl, name)[m] = 0.0
        for name in ("drB", "dthB", "dH", "srmB", "srpB", "stmB", "stpB"):
            getattr(cl, name)[m] = 0.0

    _fold_boundaries(cl, disc, f)
    cl.check_finite()
    return cl


def _add_h(cl: CoefficientCluster, row: int, var: int, value):
    """Accumulate dL/d(var) of a local source into the diagonal block.

    The self-derivative of a source belongs to the per-equation Jacobian
    A_i (it keeps the sequential per-equation solves implicit); only the
    cross-variable part is an H coupling.
    """
    if not cl.disc.active(var):
        return
    c = cl.disc.pos[var]
    if c == row:
        cl.drA[:, :, row] += value
        cl.mark("d", row, c, PROV_A | PROV_H)
    else:
        cl.dH[:, :, row, c] += value
        cl.mark("d", row, c, PROV_H)


def _add_diffusion(cl: CoefficientCluster, disc: Discretization, row: int,
                   k_rf, k_tf, chain: dict):
    """L += -div(k grad u) with u = u(q) via per-column chain factors.

    chain maps a global variable to d u/d var as a padded array (None = 1).
    """
    g = disc.grid
    ar = g.area_r * np.where(disc.blocked_r, 0.0, 1.0) if disc.blocked_r is not None else g.area_r
    at = g.area_th * np.where(disc.blocked_th, 0.0, 1.0) if disc.blocked_th is not None else g.area_th
    tr = ar * k_rf / g.dr_cc[:, None]
    tt = at * k_tf / (g.dth_cc[None, :] * g.r_c[:, None])
    for var, du in chain.items():
        if not disc.active(var):
            continue
        c = disc.pos[var]
        if du is None:
            du_c = du_rm = du_rp = du_tm = du_tp = 1.0
        else:
            du_c = du[NG:-NG, NG:-NG]
            du_rm = du[NG - 1 : NG + g.nr - 1, NG:-NG]
            du_rp = du[NG + 1 : NG + g.nr + 1, NG:-NG]
            du_tm = du[NG:-NG, NG - 1 : NG + g.nth - 1]
            du_tp = du[NG:-NG, NG + 1 : NG + g.nth + 1]
        dc_r = (tr[1:, :] + tr[:-1, :]) / g.vol
        dc_t = (tt[:, 1:] + tt[:, :-1]) / g.vol
        if c == row:  # self-transport entries stay in the A storage
            cl.drA[:, :, row] += dc_r * du_c
            cl.dthA[:, :, row] += dc_t * du_c
            cl.srmA[:, :, row] += -tr[:-1, :] / g.vol * du_rm
            cl.srpA[:, :, row] += -tr[1:, :] / g.vol * du_rp
            cl.stmA[:, :, row] += -tt[:, :-1] / g.vol * du_tm
            cl.stpA[:, :, row] += -tt[:, 1:] / g.vol * du_tp
            for leg in LEGS:
                cl.mark(leg, row, c, PROV_A)
        else:
            cl.drB[:, :, row, c] += dc_r * du_c
            cl.dthB[:, :, row, c] += dc_t * du_c
            cl.srmB[:, :, row, c] += -tr[:-1, :] / g.vol * du_rm
            cl.srpB[:, :, row, c] += -tr[1:, :] / g.vol * du_rp
            cl.stmB[:, :, row, c] += -tt[:, :-1] / g.vol * du_tm
            cl.stpB[:, :, row, c] += -tt[:, 1:] / g.vol * du_tp
            for leg in LEGS:
                cl.mark(leg, row, c, PROV_B)


def _assemble_lorentz(cl: CoefficientCluster, f: FieldSet, disc: Discretization):
    """Exact derivatives of the componentwise magnetic force expressions."""
    g = disc.grid
    d2r = disc.d2r[:, None]
    d2t = disc.d2t[None, :]
    rc = g.r_c[:, None]
    cosc = g.cos_c[None, :]
    inner = lambda a: a[NG:-NG, NG:-NG]
    rp_p = g.r_pad[NG + 1 : NG + g.nr + 1, None]   # r at j+1 cells
    rp_m = g.r_pad[NG - 1 : NG + g.nr - 1, None]
    cos_p = g.cos_pad[None, NG + 1 : NG + g.nth + 1]
    cos_m = g.cos_pad[None, NG - 1 : NG + g.nth - 1]
    br = f.q[BR]
    bth = f.q[BTH]
    bt = f.q[BT]

    def sh(a, dj, dk):
        return a[NG + dj : NG + g.nr + dj, NG + dk : NG + g.nth + dk]

    pr, pn, pl = disc.pos[MR], disc.pos[NTH], disc.pos[LPHI]
    cbr, cbth, cbt = disc.pos[BR], disc.pos[BTH], disc.pos[BT]

    # F_r = (Bth/r) Dth(Br) - (1/r) Dr(r(Bth^2+BT^2)) + (1/2) Dr(Bth^2+BT^2)
    dth_br = disc.ddth(br)
    cl.dH[:, :, pr, cbth] += -dth_br / rc                    # L = -F
    cl.mark("d", pr, cbth, PROV_H)
    cl.stpB[:, :, pr, cbr] += -(inner(bth) / rc) / d2t
    cl.stmB[:, :, pr, cbr] += (inner(bth) / rc) / d2t
    for col, arr in ((cbth, bth), (cbt, bt)):
        cl.srpB[:, :, pr, col] += -2.0 * sh(arr, 1, 0) * (0.5 - rp_p / rc) / d2r
        cl.srmB[:, :, pr, col] += 2.0 * sh(arr, -1, 0) * (0.5 - rp_m / rc) / d2r
        cl.mark("rp", pr, col, PROV_B)
        cl.mark("rm", pr, col, PROV_B)
    cl.mark("tp", pr, cbr, PROV_B)
    cl.mark("tm", pr, cbr, PROV_B)

    # F_th = Br Dr(r Bth) - (1/2) Dth(Br^2) - [ (1/cos) Dth(cos BT^2) - (1/2) Dth(BT^2) ]
    dr_rbth = disc.ddr(g.r_pad[:, None] * bth)
    cl.dH[:, :, pn, cbr] += -dr_rbth
    cl.mark("d", pn, cbr, PROV_H)
    cl.srpB[:, :, pn, cbth] += -inner(br) * rp_p / d2r
    cl.srmB[:, :, pn, cbth] += inner(br) * rp_m / d2r
    cl.stpB[:, :, pn, cbr] += sh(br, 0, 1) / d2t
    cl.stmB[:, :, pn, cbr] += -sh(br, 0, -1) / d2t
    cl.stpB[:, :, pn, cbt] += 2.0 * sh(bt, 0, 1) * (cos_p / cosc - 0.5) / d2t
    cl.stmB[:, :, pn, cbt] += -2.0 * sh(bt, 0, -1) * (cos_m / cosc - 0.5) / d2t
    for leg, col in (("rp", cbth), ("rm", cbth), ("tp", cbr), ("tm", cbr), ("tp", cbt), ("tm", cbt)):
        cl.mark(leg, pn, col, PROV_B)

    # F_phi = Br Dr(s BT) + (Bth/r) Dth(s BT), s = r cos(theta)
    s_pad = g.r_pad[:, None] * g.cos_pad[None, :]
    dr_sbt = disc.ddr(s_pad * bt)
    dth_sbt = disc.ddth(s_pad * bt)
    cl.dH[:, :, pl, cbr] += -dr_sbt
    cl.dH[:, :, pl, cbth] += -dth_sbt / rc
    cl.mark("d", pl, cbr, PROV_H)
    cl.mark("d", pl, cbth, PROV_H)
    cl.srpB[:, :, pl, cbt] += -inner(br) * rp_p * cosc / d2r
    cl.srmB[:, :, pl, cbt] += inner(br) * rp_m * cosc / d2r
    cl.stpB[:, :, pl, cbt] += -(inner(bth) / rc) * rc * cos_p / d2t
    cl.stmB[:, :, pl, cbt] += (inner(bth) / rc) * rc * cos_m / d2t
    for leg in ("rp", "rm", "tp", "tm"):
        cl.mark(leg, pl, cbt, PROV_B)


def _assemble_induction(cl: CoefficientCluster, f: FieldSet, fz: FrozenCoeffs,
                        disc: Discretization):
    """Exact derivatives of the frozen-velocity EMF curl (linear in B)."""
    g = disc.grid
    cfg = disc.phys
    nu, al = cfg.nu_mag, cfg.alpha_dyn
    rbr, rbth, rbt = disc.pos[BR], disc.pos[BTH], disc.pos[BT]
    dsin = np.diff(g.sin_f)[None, :]
    rc = g.r_c[:, None]

    # Br row: rhs = -[cos_f+ Ephi_t(k+1) - cos_f- Ephi_t(k)] / (rc dsin)
    wp = -g.cos_f[None, 1:] / (rc * dsin)    # d rhs / d Ephi_t(k+1)
    wm = g.cos_f[None, :-1] / (rc * dsin)    # d rhs / d Ephi_t(k)
    # Ephi_t(kf) = vthf Br_f - vr_tf Bth_f + al BT_f - nu*curl; Xf = (X(kf-1)+X(kf))/2
    de_br_hi = 0.5 * fz.vthf    # d Ephi_t(kf)/d Br(kf)
    de_br_lo = 0.5 * fz.vthf    # d Ephi_t(kf)/d Br(kf-1)
    if nu != 0.0:
        resist = nu / (g.dth_cc[None, :] * rc)
        de_br_hi = de_br_hi + resist
        de_br_lo = de_br_lo - resist
    # L = -rhs: negate everything
    cl.drA[:, :, rbr] += -(wp * de_br_lo[:, 1:] + wm * de_br_hi[:, :-1])
    cl.stpA[:, :, rbr] += -(wp * de_br_hi[:, 1:])
    cl.stmA[:, :, rbr] += -(wm * de_br_lo[:, :-1])
    for leg in ("d", "tp", "tm"):
        cl.mark(leg, rbr, rbr, PROV_A)
    de_bth = -0.5 * fz.vr_tf
    cl.dH[:, :, rbr, rbth] += -(wp * de_bth[:, 1:] + wm * de_bth[:, :-1])
    cl.stpB[:, :, rbr, rbth] += -(wp * de_bth[:, 1:])
    cl.stmB[:, :, rbr, rbth] += -(wm * de_bth[:, :-1])
    cl.mark("d", rbr, rbth, PROV_H)
    cl.mark("tp", rbr, rbth, PROV_B)
    cl.mark("tm", rbr, rbth, PROV_B)
    if al != 0.0:
        de_bt = 0.5 * al
        cl.dH[:, :, rbr, rbt] += -(wp + wm) * de_bt
        cl.stpB[:, :, rbr, rbt] += -wp * de_bt
        cl.stmB[:, :, rbr, rbt] += -wm * de_bt
        cl.mark("d", rbr, rbt, PROV_H)

    # Bth row: rhs = +[rf+ Ephi_r(j+1) - rf- Ephi_r(j)]/(rc dr)
    wp = g.r_faces[1:, None] / (rc * g.dr[:, None])
    wm = -g.r_faces[:-1, None] / (rc * g.dr[:, None])
    de_bth_hi = -0.5 * fz.vrf
    de_bth_lo = -0.5 * fz.vrf
    if nu != 0.0:
        rr = nu / (g.dr_cc[:, None] * g.r_faces[:, None])
        de_bth_hi = de_bth_hi + rr * g.r_pad[NG : NG + g.nr + 1, None]
        de_bth_lo = de_bth_lo - rr * g.r_pad[NG - 1 : NG + g.nr, None]
    cl.drA[:, :, rbth] += -(wp * de_bth_lo[1:, :] + wm * de_bth_hi[:-1, :])
    cl.srpA[:, :, rbth] += -(wp * de_bth_hi[1:, :])
    cl.srmA[:, :, rbth] += -(wm * de_bth_lo[:-1, :])
    for leg in ("d", "rp", "rm"):
        cl.mark(leg, rbth, rbth, PROV_A)
    de_br = 0.5 * fz.vth_rf
    cl.dH[:, :, rbth, rbr] += -(wp * de_br[1:, :] + wm * de_br[:-1, :])
    cl.srpB[:, :, rbth, rbr] += -(wp * de_br[1:, :])
    cl.srmB[:, :, rbth, rbr] += -(wm * de_br[:-1, :])
    cl.mark("d", rbth, rbr, PROV_H)
    cl.mark("rp", rbth, rbr, PROV_B)
    cl.mark("rm", rbth, rbr, PROV_B)
    if al != 0.0:
        de_bt = 0.5 * al
        cl.dH[:, :, rbth, rbt] += -(wp + wm) * de_bt
        cl.srpB[:, :, rbth, rbt] += -wp * de_bt
        cl.srmB[:, :, rbth, rbt] += -wm * de_bt
        cl.mark("d", rbth, rbt, PROV_H)

    # BT row: rhs = -[rf+ Eth(j+1) - rf- Eth(j)]/(rc dr) + [Er(k+1) - Er(k)]/(rc dth)
    wpr = -g.r_faces[1:, None] / (rc * g.dr[:, None])
    wmr = g.r_faces[:-1, None] / (rc * g.dr[:, None])
    de_bt_hi = 0.5 * fz.vrf
    de_bt_lo = 0.5 * fz.vrf
    if nu != 0.0:
        rr = nu / (g.dr_cc[:, None] * g.r_faces[:, None])
        de_bt_hi = de_bt_hi - rr * g.r_pad[NG : NG + g.nr + 1, None]
        de_bt_lo = de_bt_lo + rr * g.r_pad[NG - 1 : NG + g.nr, None]
    cl.drA[:, :, rbt] += -(wpr * de_bt_lo[1:, :] + wmr * de_bt_hi[:-1, :])
    cl.srpA[:, :, rbt] += -(wpr * de_bt_hi[1:, :])
    cl.srmA[:, :, rbt] += -(wmr * de_bt_lo[:-1, :])
    de_br = -0.5 * fz.vph_rf
    cl.dH[:, :, rbt, rbr] += -(wpr * de_br[1:, :] + wmr * de_br[:-1, :])
    cl.srpB[:, :, rbt, rbr] += -(wpr * de_br[1:, :])
    cl.srmB[:, :, rbt, rbr] += -(wmr * de_br[:-1, :])
    if al != 0.0:
        de_bth = 0.5 * al
        cl.dH[:, :, rbt, rbth] += -(wpr + wmr) * de_bth
        cl.srpB[:, :, rbt, rbth] += -wpr * de_bth
        cl.srmB[:, :, rbt, rbth] += -wmr * de_bth
    wpt = 1.0 / (rc * g.dth[None, :])
    wmt = -1.0 / (rc * g.dth[None, :])
    de_bt_hi = -0.5 * fz.vthf
    de_bt_lo = -0.5 * fz.vthf
    if nu != 0.0:
        safe = np.where(g.cos_f > 1e-12, g.cos_f, np.inf)
        rr = nu / (g.dth_cc[None, :] * rc * safe[None, :])
        de_bt_hi = de_bt_hi + rr * g.cos_pad[None, NG : NG + g.nth + 1]
        de_bt_lo = de_bt_lo - rr * g.cos_pad[None, NG - 1 : NG + g.nth]
    cl.dthA[:, :, rbt] += -(wpt * de_bt_lo[:, 1:] + wmt * de_bt_hi[:, :-1])
    cl.stpA[:, :, rbt] += -(wpt * de_bt_hi[:, 1:])
    cl.stmA[:, :, rbt] += -(wmt * de_bt_lo[:, :-1])
    for leg in ("d", "rp", "rm", "tp", "tm"):
        cl.mark(leg, rbt, rbt, PROV_A)
    de_bth2 = 0.5 * fz.vph_tf
    cl.dH[:, :, rbt, rbth] += -(wpt * de_bth2[:, 1:] + wmt * de_bth2[:, :-1])
    cl.stpB[:, :, rbt, rbth] += -(wpt * de_bth2[:, 1:])
    cl.stmB[:, :, rbt, rbth] += -(wmt * de_bth2[:, :-1])
    cl.mark("d", rbt, rbr, PROV_H)
    cl.mark("d", rbt, rbth, PROV_H)
    if al != 0.0:
        de_br2 = 0.5 * al
        cl.dH[:, :, rbt, rbr] += -(wpt + wmt) * de_br2
        cl.stpB[:, :, rbt, rbr] += -wpt * de_br2
        cl.stmB[:, :, rbt, rbr] += -wmt * de_br2


def _fold_boundaries(cl: CoefficientCluster, disc: Discretization, f: FieldSet):
    """Eliminate ghost columns: mirror/copy ghosts fold into interior
    columns, Dirichlet ghosts drop.

    The inflow-forbidding clamp on the outflow normal momentum makes the
    ghost insensitive to the interior value where it is active, so the
    fold carries the clamp indicator for that column.
    """
    b = disc.bspec
    for c, var in enumerate(disc.eqs):
        kind = b.kind_for("r_inner", var)
        if kind == "outflow":
            gate = 1.0
            if var == MR:
                gate = (f.q[MR, NG, NG:-NG] < 0.0).astype(float)
            cl.dH[0, :, :, c] += gate * cl.srmB[0, :, :, c] if np.ndim(gate) == 0                 else gate[:, None] * cl.srmB[0, :, :, c]
            cl.drA[0, :, c] += gate * cl.srmA[0, :, c]
        cl.srmB[0, :, :, c] = 0.0
        kind = b.kind_for("r_outer", var)
        if kind == "outflow":
            gate = 1.0
            if var == MR:
                gate = (f.q[MR, NG + disc.grid.nr - 1, NG:-NG] > 0.0).astype(float)
            cl.dH[-1, :, :, c] += gate * cl.srpB[-1, :, :, c] if np.ndim(gate) == 0                 else gate[:, None] * cl.srpB[-1, :, :, c]
            cl.drA[-1, :, c] += gate * cl.srpA[-1, :, c]
        cl.srpB[-1, :, :, c] = 0.0
        kind = b.kind_for("th_lower", var)
        if kind in ("symmetry", "antisymmetry"):
            sign = _PARITY[kind][var]
            cl.dH[:, 0, :, c] += sign * cl.stmB[:, 0, :, c]
            cl.dthA[:, 0, c] += sign * cl.stmA[:, 0, c]
        elif kind == "outflow":
            cl.dH[:, 0, :, c] += cl.stmB[:, 0, :, c]
            cl.dthA[:, 0, c] += cl.stmA[:, 0, c]
        cl.stmB[:, 0, :, c] = 0.0
        kind = b.kind_for("th_upper", var)
        if kind in ("symmetry", "antisymmetry"):
            sign = _PARITY[kind][var]
            cl.dH[:, -1, :, c] += sign * cl.stpB[:, -1, :, c]
            cl.dthA[:, -1, c] += sign * cl.stpA[:, -1, c]
        elif kind == "outflow":
            cl.dH[:, -1, :, c] += cl.stpB[:, -1, :, c]
            cl.dthA[:, -1, c] += cl.stpA[:, -1, c]
        cl.stpB[:, -1, :, c] = 0.0
    cl.srmA[0, :, :] = 0.0
    cl.srpA[-1, :, :] = 0.0
    cl.stmA[:, 0, :] = 0.0
    cl.stpA[:, -1, :] = 0.0


# ---------------------------------------------------------------------------
# matrix views
# ---------------------------------------------------------------------------

class StencilMatrix:
    """Live view of a CoefficientCluster for one solver mode and subset.

    Reads cluster storage at apply time, so cluster edits are visible
    through every generated view.  materialize() snapshots the blocks for
    the direct/iterative solvers in `linsolve`.
    """

    def __init__(self, cluster: CoefficientCluster, mode: SolverMode):
        self.cluster = cluster
        self.mode = mode
        missing = [v for v in mode.eqs if v not in cluster.disc.pos]
        if missing:
            raise ConfigurationError(f"mode equations {missing} not in the assembled cluster")
        self.cols = np.array([cluster.disc.pos[v] for v in mode.eqs])
        self.q = len(self.cols)
        self.shape = cluster.disc.grid.shape

    # -- composition helpers -------------------------------------------------
    def _inv_dt(self):
        inv = self.cluster.inv_dt
        return inv if np.ndim(inv) == 0 else np.asarray(inv)[..., None]

    def diag_blocks(self) -> np.ndarray:
        cl = self.cluster
        k = self.mode.kind
        nr, nth = self.shape
        sub = np.ix_(range(nr), range(nth), self.cols, self.cols)
        eye = np.eye(self.q)
        inv = cl.inv_dt
        inv_term = (inv if np.ndim(inv) == 0 else np.asarray(inv)[..., None, None]) * eye
        if k == ModeKind.EXPLICIT:
            return np.broadcast_to(inv_term, (nr, nth, self.q, self.q)).copy() if np.ndim(inv) == 0 \
                else inv_term * np.ones((nr, nth, 1, 1))
        if k == ModeKind.IOS_BLOCK:
            d = np.zeros((nr, nth, self.q, self.q))
            idx = np.arange(self.q)
            d[..., idx, idx] = (cl.drA + cl.dthA)[:, :, self.cols]
            return d + inv_term
        full = cl.diag_block()[sub]
        if k == ModeKind.SEMI_EXPLICIT:
            idx = np.arange(self.q)
            d = np.zeros_like(full)
            d[..., idx, idx] = full[..., idx, idx]
            return d + inv_term
        return full + inv_term

    def scalar_diag(self) -> np.ndarray:
        cl = self.cluster
        inv = cl.inv_dt if np.ndim(cl.inv_dt) == 0 else np.asarray(cl.inv_dt)[..., None]
        return cl.scalar_diag()[:, :, self.cols] + inv

    def leg(self, name: str) -> np.ndarray | None:
        cl = self.cluster
        k = self.mode.kind
        if k in (ModeKind.EXPLICIT, ModeKind.SEMI_EXPLICIT, ModeKind.SEMI_IMPLICIT):
            return None
        if k == ModeKind.IOS_BLOCK:
            a = {"rm": cl.srmA, "rp": cl.srpA, "tm": cl.stmA, "tp": cl.stpA}[name]
            idx = np.arange(self.q)
            out = np.zeros(self.shape + (self.q, self.q))
            out[..., idx, idx] = a[:, :, self.cols]
            return out
        nr, nth = self.shape
        sub = np.ix_(range(nr), range(nth), self.cols, self.cols)
        return cl.leg_block(name)[sub]

    def apply(self, x: np.ndarray) -> np.ndarray:
        out = (self.diag_blocks() @ x[..., None])[..., 0]
        for name, sl_out, sl_in in (("rm", np.s_[1:, :], np.s_[:-1, :]),
                                    ("rp", np.s_[:-1, :], np.s_[1:, :]),
                                    ("tm", np.s_[:, 1:], np.s_[:, :-1]),
                                    ("tp", np.s_[:, :-1], np.s_[:, 1:])):
            blk = self.leg(name)
            if blk is not None:
                out[sl_out] += (blk[sl_out] @ x[sl_in][..., None])[..., 0]
        return out

    def materialize(self):
        from .linsolve import BlockStencil5
        cl = self.cluster
        nr, nth = self.shape
        zeros = lambda: np.zeros((nr, nth, self.q, self.q))
        legs = {name: (self.leg(name) if self.leg(name) is not None else zeros())
                for name in ("rm", "rp", "tm", "tp")}
        idx = np.arange(self.q)
        dr_d = np.zeros((nr, nth, self.q, self.q))
        dth_d = np.zeros((nr, nth, self.q, self.q))
        if self.mode.kind == ModeKind.IOS_BLOCK:
            dr_d[..., idx, idx] = cl.drA[:, :, self.cols]
            dth_d[..., idx, idx] = cl.dthA[:, :, self.cols]
        elif self.mode.kind != ModeKind.EXPLICIT:
            sub = np.ix_(range(nr), range(nth), self.cols, self.cols)
            dr_d = (cl.drB + cl.dH)[sub].copy()
            dth_d = cl.dthB[sub].copy()
            dr_d[..., idx, idx] += cl.drA[:, :, self.cols]
            dth_d[..., idx, idx] += cl.dthA[:, :, self.cols]
            if self.mode.kind == ModeKind.SEMI_EXPLICIT:
                for m in (dr_d, dth_d):
                    off = m.copy()
                    m[...] = 0.0
                    m[..., idx, idx] = off[..., idx, idx]
        return BlockStencil5(self.diag_blocks(), legs["rm"], legs["rp"], legs["tm"], legs["tp"],
                             inv_dt=cl.inv_dt, dr_diag=dr_d, dth_diag=dth_d)

    def dump_coo(self, path):
        """Coordinate-format triples (row, col, value) of the dense layout."""
        A = self.materialize()
        nr, nth = self.shape
        q = self.q
        with open(path, "w") as fh:
            fh.write("# row col value\n")
            def emit(blocks, dj, dk):
                for j in range(nr):
                    for k in range(nth):
                        jj, kk = j + dj, k + dk
                        if not (0 <= jj < nr and 0 <= kk < nth):
                            continue
                        base_r = (j * nth + k) * q
                        base_c = (jj * nth + kk) * q
                        blk = blocks[j, k]
                        for a in range(q):
                            for bcol in range(q):
                                v = blk[a, bcol]
                                if v != 0.0:
                                    fh.write(f"{base_r + a} {base_c + bcol} {v:.17g}\n")
            emit(A.diag, 0, 0)
            emit(A.srm, -1, 0)
            emit(A.srp, 1, 0)
            emit(A.stm, 0, -1)
            emit(A.stp, 0, 1)


def generate_matrix(cluster: CoefficientCluster, mode: SolverMode) -> StencilMatrix:
    """Expose the cluster as the operator of a solver mode, no re-assembly."""
    return StencilMatrix(cluster, mode)
