"""Discrete spherical-coordinate transport operators.

All cell fields arrive ghost-padded (NG = 2 layers); face arrays are
interior-only with shapes (nr+1, nth) radial and (nr, nth+1) latitudinal.
theta is latitude: cos(theta) is the cylindrical-radius factor and the
theta boundary faces at the axis carry zero area.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constants import NG
from .errors import ConfigurationError
from .grid import Grid


@dataclass
class FaceFluxField:
    """Physical flux components on the interior faces of the mesh."""

    fr: np.ndarray   # (nr+1, nth)
    fth: np.ndarray  # (nr, nth+1)

    def blocked(self, blocked_r=None, blocked_th=None) -> "FaceFluxField":
        if blocked_r is not None:
            self.fr = np.where(blocked_r, 0.0, self.fr)
        if blocked_th is not None:
            self.fth = np.where(blocked_th, 0.0, self.fth)
        return self


@dataclass
class FluxLimiter:
    """Per-face flux-limited-diffusion coefficient and blending weight."""

    eta_r: np.ndarray
    eta_th: np.ndarray
    alpha_r: np.ndarray
    alpha_th: np.ndarray


def divergence(flux: FaceFluxField, g: Grid) -> np.ndarray:
    """Face-area weighted finite-volume divergence, exact telescoping."""
    afr = g.area_r * flux.fr
    afth = g.area_th * flux.fth
    return (afr[1:, :] - afr[:-1, :] + afth[:, 1:] - afth[:, :-1]) / g.vol


def face_average(c_pad: np.ndarray, g: Grid):
    """Arithmetic face means of a padded cell field."""
    lo, hi = NG - 1, NG + g.nr
    fr = 0.5 * (c_pad[lo:hi, NG:-NG] + c_pad[lo + 1 : hi + 1, NG:-NG])
    lo, hi = NG - 1, NG + g.nth
    fth = 0.5 * (c_pad[NG:-NG, lo:hi] + c_pad[NG:-NG, lo + 1 : hi + 1])
    return fr, fth


def face_harmonic(c_pad: np.ndarray, g: Grid):
    """Harmonic face means; preserves flux continuity across jumps."""
    lo, hi = NG - 1, NG + g.nr
    a = c_pad[lo:hi, NG:-NG]
    b = c_pad[lo + 1 : hi + 1, NG:-NG]
    with np.errstate(divide="ignore", invalid="ignore"):
        fr = np.where(a + b > 0.0, 2.0 * a * b / (a + b), 0.0)
    lo, hi = NG - 1, NG + g.nth
    a = c_pad[NG:-NG, lo:hi]
    b = c_pad[NG:-NG, lo + 1 : hi + 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        fth = np.where(a + b > 0.0, 2.0 * a * b / (a + b), 0.0)
    return fr, fth


def upwind_weights(vf: np.ndarray):
    """Donor-cell splitting: (v+|v|)/2 picks the low side, ties average."""
    vplus = 0.5 * (vf + np.abs(vf))
    vminus = 0.5 * (vf - np.abs(vf))
    tie = vf == 0.0
    return np.where(tie, 0.5 * vf, vplus), np.where(tie, 0.5 * vf, vminus)


def _face_states_r(q, g: Grid, order: int):
    """Reconstructed radial face states seen from the left and the right."""
    L = q[NG - 1 : NG + g.nr, NG:-NG]
    R = q[NG : NG + g.nr + 1, NG:-NG]
    if order == 1:
        return L, R
    LL = q[NG - 2 : NG + g.nr - 1, NG:-NG]
    RR = q[NG + 1 : NG + g.nr + 2, NG:-NG]
    if order == 3:
        from_left = (6.0 * L + 3.0 * R - LL) / 8.0
        from_right = (6.0 * R + 3.0 * L - RR) / 8.0
        return from_left, from_right
    # order 2: linear reconstruction toward the face with a central slope
    rp = g.r_pad
    rc_L = rp[NG - 1 : NG + g.nr, None]
    rc_R = rp[NG : NG + g.nr + 1, None]
    rc_LL = rp[NG - 2 : NG + g.nr - 1, None]
    rc_RR = rp[NG + 1 : NG + g.nr + 2, None]
    rf = g.r_faces[:, None]
    slope_L = (R - LL) / (rc_R - rc_LL)
    slope_R = (RR - L) / (rc_RR - rc_L)
    return L + (rf - rc_L) * slope_L, R + (rf - rc_R) * slope_R


def _face_states_th(q, g: Grid, order: int):
    L = q[NG:-NG, NG - 1 : NG + g.nth]
    R = q[NG:-NG, NG : NG + g.nth + 1]
    if order == 1:
        return L, R
    LL = q[NG:-NG, NG - 2 : NG + g.nth - 1]
    RR = q[NG:-NG, NG + 1 : NG + g.nth + 2]
    if order == 3:
        return (6.0 * L + 3.0 * R - LL) / 8.0, (6.0 * R + 3.0 * L - RR) / 8.0
    tp = g.th_pad
    tc_L = tp[None, NG - 1 : NG + g.nth]
    tc_R = tp[None, NG : NG + g.nth + 1]
    tc_LL = tp[None, NG - 2 : NG + g.nth - 1]
    tc_RR = tp[None, NG + 1 : NG + g.nth + 2]
    tf = g.th_faces[None, :]
    slope_L = (R - LL) / (tc_R - tc_LL)
    slope_R = (RR - L) / (tc_RR - tc_L)
    return L + (tf - tc_L) * slope_L, R + (tf - tc_R) * slope_R


def _minmod(a, b):
    return np.where(a * b > 0.0, np.where(np.abs(a) < np.abs(b), a, b), 0.0)


def _limited_states_r(q, g: Grid):
    """Monotonized linear reconstruction (for shock-dominated runs)."""
    L = q[NG - 1 : NG + g.nr, NG:-NG]
    R = q[NG : NG + g.nr + 1, NG:-NG]
    LL = q[NG - 2 : NG + g.nr - 1, NG:-NG]
    RR = q[NG + 1 : NG + g.nr + 2, NG:-NG]
    rp = g.r_pad
    rc_L = rp[NG - 1 : NG + g.nr, None]
    rc_R = rp[NG : NG + g.nr + 1, None]
    rc_LL = rp[NG - 2 : NG + g.nr - 1, None]
    rc_RR = rp[NG + 1 : NG + g.nr + 2, None]
    rf = g.r_faces[:, None]
    sl = _minmod((R - L) / (rc_R - rc_L), (L - LL) / (rc_L - rc_LL))
    sr = _minmod((RR - R) / (rc_RR - rc_R), (R - L) / (rc_R - rc_L))
    return L + (rf - rc_L) * sl, R + (rf - rc_R) * sr


def _limited_states_th(q, g: Grid):
    L = q[NG:-NG, NG - 1 : NG + g.nth]
    R = q[NG:-NG, NG : NG + g.nth + 1]
    LL = q[NG:-NG, NG - 2 : NG + g.nth - 1]
    RR = q[NG:-NG, NG + 1 : NG + g.nth + 2]
    tp = g.th_pad
    tc_L = tp[None, NG - 1 : NG + g.nth]
    tc_R = tp[None, NG : NG + g.nth + 1]
    tc_LL = tp[None, NG - 2 : NG + g.nth - 1]
    tc_RR = tp[None, NG + 1 : NG + g.nth + 2]
    tf = g.th_faces[None, :]
    sl = _minmod((R - L) / (tc_R - tc_L), (L - LL) / (tc_L - tc_LL))
    sr = _minmod((RR - R) / (tc_RR - tc_R), (R - L) / (tc_R - tc_L))
    return L + (tf - tc_L) * sl, R + (tf - tc_R) * sr


def advect(q_pad: np.ndarray, vrf: np.ndarray, vthf: np.ndarray, order: int,
           g: Grid, blocked_r=None, blocked_th=None, limiter: bool = False) -> FaceFluxField:
    """Upwind advective face fluxes of a cell quantity.

    order 1 = donor cell, 2 = linear reconstruction, 3 = quadratic
    upstream-biased (third order on uniform spacing).  limiter=True swaps
    the order>1 reconstruction for a monotonized linear one.
    """
    if order not in (1, 2, 3):
        raise ConfigurationError(f"unsupported advection order {order}")
    if order > 1 and limiter:
        from_left, from_right = _limited_states_r(q_pad, g)
        from_lo, from_hi = _limited_states_th(q_pad, g)
    else:
        from_left, from_right = _face_states_r(q_pad, g, order)
        from_lo, from_hi = _face_states_th(q_pad, g, order)
    ap, am = upwind_weights(vrf)
    fr = ap * from_left + am * from_right
    ap, am = upwind_weights(vthf)
    fth = ap * from_lo + am * from_hi
    return FaceFluxField(fr=fr, fth=fth).blocked(blocked_r, blocked_th)


def diffuse(q_pad: np.ndarray, kr_face: np.ndarray, kth_face: np.ndarray,
            g: Grid, blocked_r=None, blocked_th=None) -> FaceFluxField:
    """Central diffusive face fluxes -kappa * (face-normal gradient)."""
    if np.any(kr_face < 0.0) or np.any(kth_face < 0.0):
        raise ConfigurationError("diffusion coefficients must be non-negative")
    dqr = (q_pad[NG : NG + g.nr + 1, NG:-NG] - q_pad[NG - 1 : NG + g.nr, NG:-NG]) / g.dr_cc[:, None]
    dqt = (q_pad[NG:-NG, NG : NG + g.nth + 1] - q_pad[NG:-NG, NG - 1 : NG + g.nth]) / g.dth_cc[None, :]
    dqt = dqt / g.r_c[:, None]
    return FaceFluxField(fr=-kr_face * dqr, fth=-kth_face * dqt).blocked(blocked_r, blocked_th)


def grad_mag_faces(e_pad: np.ndarray, g: Grid):
    """|grad E| on radial and latitudinal faces (both components)."""
    nr, nth = g.nr, g.nth
    dedr = (e_pad[NG : NG + nr + 1, NG:-NG] - e_pad[NG - 1 : NG + nr, NG:-NG]) / g.dr_cc[:, None]
    dedt = (e_pad[NG:-NG, NG : NG + nth + 1] - e_pad[NG:-NG, NG - 1 : NG + nth]) / (g.dth_cc[None, :] * g.r_c[:, None])
    # cell-centered gradients feed the tangential part on the other family
    dr2 = (g.r_pad[NG + 1 : NG + nr + 1] - g.r_pad[NG - 1 : NG + nr - 1])[:, None]
    gradr_c = (e_pad[NG + 1 : NG + nr + 1, NG:-NG] - e_pad[NG - 1 : NG + nr - 1, NG:-NG]) / dr2
    dt2 = (g.th_pad[NG + 1 : NG + nth + 1] - g.th_pad[NG - 1 : NG + nth - 1])[None, :]
    gradt_c = (e_pad[NG:-NG, NG + 1 : NG + nth + 1] - e_pad[NG:-NG, NG - 1 : NG + nth - 1]) / (dt2 * g.r_c[:, None])
    p = np.pad(gradt_c, ((1, 1), (0, 0)), mode="edge")
    tang_r = 0.5 * (p[:-1, :] + p[1:, :])
    p = np.pad(gradr_c, ((0, 0), (1, 1)), mode="edge")
    tang_t = 0.5 * (p[:, :-1] + p[:, 1:])
    return np.hypot(dedr, tang_r), np.hypot(dedt, tang_t)


def fld_coefficient(e_pad: np.ndarray, chi_pad: np.ndarray, g: Grid,
                    denom_pad: np.ndarray | None = None, tiny: float = 1e-300) -> FluxLimiter:
    """Flux-limited diffusion coefficient per face.

    eta = (1-alpha)^2 * E/|grad E| + alpha/(3*chi) with alpha = exp(-R) and
    R = |grad E| / denom; the default denom is chi*E (gray source choice).
    The flux -eta*grad(E) spans 1/(3*chi) diffusion (R -> 0) through
    |flux| -> E free streaming (R -> inf).  The squared weight on the
    streaming branch makes it O(R) relative to diffusion in optically
    thick regions, so both limits hold to first order; a single (1-alpha)
    factor would leave a spurious streaming flux of fixed 3x the diffusive
    one however deep the diffusion regime.  |grad E| = 0 falls back to the
    pure-diffusion branch with alpha = 1.
    """
    mag_r, mag_t = grad_mag_faces(e_pad, g)
    er_f, et_f = face_average(e_pad, g)
    chi_r, chi_t = face_harmonic(chi_pad, g)
    if denom_pad is None:
        denom_pad = chi_pad * e_pad
    den_r, den_t = face_average(denom_pad, g)

    out = []
    for mag, ef, chif, den in ((mag_r, er_f, chi_r, den_r), (mag_t, et_f, chi_t, den_t)):
        r_fld = np.where(den > tiny, mag / np.maximum(den, tiny), 0.0)
        alpha = np.exp(-r_fld)
        stream = np.where(mag > tiny, ef / np.maximum(mag, tiny), 0.0)
        eta = (1.0 - alpha) ** 2 * stream + alpha / (3.0 * np.maximum(chif, tiny))
        out.append((eta, alpha))
    return FluxLimiter(eta_r=out[0][0], eta_th=out[1][0], alpha_r=out[0][1], alpha_th=out[1][1])


# ---------------------------------------------------------------------------
# constrained-transport induction on the staggered poloidal field
# ---------------------------------------------------------------------------

@dataclass
class PoloidalField:
    """Staggered magnetic field: Br on r-faces, Bth on theta-faces, BT centered."""

    br: np.ndarray   # (nr+1, nth)
    bth: np.ndarray  # (nr, nth+1)
    bt: np.ndarray   # (nr, nth)

    def copy(self) -> "PoloidalField":
        return PoloidalField(self.br.copy(), self.bth.copy(), self.bt.copy())


def div_poloidal(b: PoloidalField, g: Grid) -> np.ndarray:
    """Discrete divergence of the face-centered poloidal field."""
    afr = g.area_r * b.br
    afth = g.area_th * b.bth
    return (afr[1:, :] - afr[:-1, :] + afth[:, 1:] - afth[:, :-1]) / g.vol


def _corner_from_cells(c: np.ndarray) -> np.ndarray:
    """Average a (nr, nth) cell array onto (nr+1, nth+1) corners."""
    p = np.pad(c, 1, mode="edge")
    return 0.25 * (p[:-1, :-1] + p[1:, :-1] + p[:-1, 1:] + p[1:, 1:])


def _corner_from_rfaces(fr: np.ndarray) -> np.ndarray:
    """(nr+1, nth) r-face array onto corners by theta averaging."""
    p = np.pad(fr, ((0, 0), (1, 1)), mode="edge")
    return 0.5 * (p[:, :-1] + p[:, 1:])


def _corner_from_thfaces(fth: np.ndarray) -> np.ndarray:
    p = np.pad(fth, ((1, 1), (0, 0)), mode="edge")
    return 0.5 * (p[:-1, :] + p[1:, :])


def emf_corner(v_cells, b: PoloidalField, alpha_dyn: float, nu_mag: float, g: Grid) -> np.ndarray:
    """phi-EMF at cell corners: (V x B)_phi + alpha*BT - nu*(curl B)_phi."""
    vr, vth, _ = v_cells
    vr_c = _corner_from_cells(vr[NG:-NG, NG:-NG])
    vth_c = _corner_from_cells(vth[NG:-NG, NG:-NG])
    br_c = _corner_from_rfaces(b.br)
    bth_c = _corner_from_thfaces(b.bth)
    emf = vth_c * br_c - vr_c * bth_c
    if alpha_dyn != 0.0:
        emf = emf + alpha_dyn * _corner_from_cells(b.bt)
    if nu_mag != 0.0:
        rbth = g.r_c[:, None] * b.bth                      # (nr, nth+1)
        d_rbth = np.zeros((g.nr + 1, g.nth + 1))
        dr_cc = np.diff(g.r_c)
        d_rbth[1:-1, :] = (rbth[1:, :] - rbth[:-1, :]) / dr_cc[:, None]
        d_rbth[0, :] = d_rbth[1, :]
        d_rbth[-1, :] = d_rbth[-2, :]
        d_br = np.zeros((g.nr + 1, g.nth + 1))
        dth_cc = np.diff(g.th_c)
        d_br[:, 1:-1] = (b.br[:, 1:] - b.br[:, :-1]) / dth_cc[None, :]
        d_br[:, 0] = d_br[:, 1]
        d_br[:, -1] = d_br[:, -2]
        curl_phi = -(d_rbth - d_br) / g.r_faces[:, None]
        emf = emf - nu_mag * curl_phi
    return emf


def curl_induction(v_cells, b: PoloidalField, alpha_dyn: float, nu_mag: float, g: Grid):
    """Rate of change of (Br, Bth, BT) from curl of the electromotive force.

    The poloidal update is the exact circulation form, so the discrete
    divergence of (Br, Bth) is preserved to round-off for any EMF.
    """
    emf = emf_corner(v_cells, b, alpha_dyn, nu_mag, g)
    dbr, dbth = poloidal_rate_from_emf(emf, g)

    vr, vth, vphi = v_cells
    vr_i = vr[NG:-NG, NG:-NG]
    vth_i = vth[NG:-NG, NG:-NG]
    vphi_i = vphi[NG:-NG, NG:-NG]

    # E_theta on r-faces: Vr*BT - Vphi*Br + alpha*Bth - nu*(curl B)_theta
    btp = np.pad(b.bt, ((1, 1), (0, 0)), mode="edge")
    bt_rf = 0.5 * (btp[:-1, :] + btp[1:, :])
    vrp = np.pad(vr_i, ((1, 1), (0, 0)), mode="edge")
    vphp = np.pad(vphi_i, ((1, 1), (0, 0)), mode="edge")
    vr_rf = 0.5 * (vrp[:-1, :] + vrp[1:, :])
    vph_rf = 0.5 * (vphp[:-1, :] + vphp[1:, :])
    e_th = vr_rf * bt_rf - vph_rf * b.br
    if alpha_dyn != 0.0:
        bthp = np.pad(0.5 * (b.bth[:, :-1] + b.bth[:, 1:]), ((1, 1), (0, 0)), mode="edge")
        e_th = e_th + alpha_dyn * 0.5 * (bthp[:-1, :] + bthp[1:, :])
    if nu_mag != 0.0:
        rbt = g.r_c[:, None] * b.bt
        curl_th = np.zeros((g.nr + 1, g.nth))
        curl_th[1:-1, :] = (rbt[1:, :] - rbt[:-1, :]) / np.diff(g.r_c)[:, None]
        curl_th[0, :] = curl_th[1, :]
        curl_th[-1, :] = curl_th[-2, :]
        curl_th = curl_th / g.r_faces[:, None]
        e_th = e_th - nu_mag * curl_th

    # E_r on theta-faces: Vphi*Bth - Vth*BT + alpha*Br - nu*(curl B)_r
    btq = np.pad(b.bt, ((0, 0), (1, 1)), mode="edge")
    bt_tf = 0.5 * (btq[:, :-1] + btq[:, 1:])
    vtq = np.pad(vth_i, ((0, 0), (1, 1)), mode="edge")
    vpq = np.pad(vphi_i, ((0, 0), (1, 1)), mode="edge")
    vth_tf = 0.5 * (vtq[:, :-1] + vtq[:, 1:])
    vph_tf = 0.5 * (vpq[:, :-1] + vpq[:, 1:])
    e_r = vph_tf * b.bth - vth_tf * bt_tf
    if alpha_dyn != 0.0:
        brp = np.pad(0.5 * (b.br[:-1, :] + b.br[1:, :]), ((0, 0), (1, 1)), mode="edge")
        e_r = e_r + alpha_dyn * 0.5 * (brp[:, :-1] + brp[:, 1:])
    if nu_mag != 0.0:
        cbt = g.cos_c[None, :] * b.bt
        curl_r = np.zeros((g.nr, g.nth + 1))
        curl_r[:, 1:-1] = -(cbt[:, 1:] - cbt[:, :-1]) / np.diff(g.th_c)[None, :]
        curl_r[:, 0] = curl_r[:, 1]
        curl_r[:, -1] = curl_r[:, -2]
        safe_cos = np.where(g.cos_f > 1e-12, g.cos_f, 1.0)
        curl_r = np.where(g.cos_f[None, :] > 1e-12, curl_r / (g.r_c[:, None] * safe_cos[None, :]), 0.0)
        e_r = e_r - nu_mag * curl_r

    # dBT/dt = -(1/r) [ d_r(r E_th) - d_th(E_r) ]
    r_eth = g.r_faces[:, None] * e_th
    dbt = -(r_eth[1:, :] - r_eth[:-1, :]) / (g.r_c[:, None] * g.dr[:, None]) \
        + (e_r[:, 1:] - e_r[:, :-1]) / (g.r_c[:, None] * g.dth[None, :])
    return dbr, dbth, dbt


def poloidal_rate_from_emf(emf: np.ndarray, g: Grid):
    """Circulation-form poloidal rates from a corner phi-EMF array."""
    cos_e = g.cos_f[None, :] * emf  # (nr+1, nth+1)
    dsin = np.diff(g.sin_f)[None, :]
    dbr = -(cos_e[:, 1:] - cos_e[:, :-1]) / (g.r_faces[:, None] * dsin)
    r_e = g.r_faces[:, None] * emf
    r2 = g.r_faces**2
    dbth = 2.0 * (r_e[1:, :] - r_e[:-1, :]) / (r2[1:] - r2[:-1])[:, None]
    return dbr, dbth
