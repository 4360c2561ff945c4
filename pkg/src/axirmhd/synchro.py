"""Thermal synchrotron emissivity of relativistic electrons (cgs fit).

epsilon_nu = 2.73e-5 * rho * nu * I(zeta) / K2(1/theta_e)  erg/cm^3/s/Hz,
I(zeta) = (4.05/zeta^(1/6)) (1 + 0.4/zeta^(1/4) + 0.53/zeta^(1/2)) e^(-1.89 zeta^(1/3)),
zeta = 2.38e-7 * nu / (B * theta_e^2),  theta_e = k T_e / (m_e c^2).

Everything is evaluated in log space; K2 uses the scaled Bessel function so
mildly relativistic temperatures do not underflow.
"""

from __future__ import annotations

import numpy as np
from scipy import special

ZETA_COEFF = 2.38e-7
PREFACTOR = 2.73e-5
_EXP_CLIP = 700.0


def shape_factor(zeta):
    """The dimensionless spectral shape I(zeta)."""
    zeta = np.asarray(zeta, dtype=float)
    return (4.05 / zeta ** (1.0 / 6.0)) * (1.0 + 0.4 / zeta**0.25 + 0.53 / np.sqrt(zeta)) \
        * np.exp(-1.89 * zeta ** (1.0 / 3.0))


def log_shape_factor(zeta):
    zeta = np.asarray(zeta, dtype=float)
    return np.log(4.05) - np.log(zeta) / 6.0 \
        + np.log1p(0.4 / zeta**0.25 + 0.53 / np.sqrt(zeta)) \
        - 1.89 * zeta ** (1.0 / 3.0)


def dlog_shape_dlog_zeta(zeta):
    zeta = np.asarray(zeta, dtype=float)
    poly = 1.0 + 0.4 / zeta**0.25 + 0.53 / np.sqrt(zeta)
    dpoly = -0.1 / zeta**0.25 - 0.265 / np.sqrt(zeta)
    return -1.0 / 6.0 + dpoly / poly - 0.63 * zeta ** (1.0 / 3.0)


def log_k2(x):
    """log K2(x) via the exponentially scaled Bessel function."""
    return np.log(special.kve(2, x)) - x


def dlog_k2_dx(x):
    """d log K2 / dx = -K1/K2 - 2/x (Bessel recurrence)."""
    return -special.kve(1, x) / special.kve(2, x) - 2.0 / x


def emissivity(rho_cgs, theta_e, b_gauss, nu_hz):
    """epsilon_nu in erg/cm^3/s/Hz; broadcasts over its arguments."""
    rho_cgs, theta_e, b_gauss, nu_hz = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (rho_cgs, theta_e, b_gauss, nu_hz)))
    zeta = ZETA_COEFF * nu_hz / (b_gauss * theta_e**2)
    logeps = np.log(PREFACTOR * rho_cgs * nu_hz) + log_shape_factor(zeta) - log_k2(1.0 / theta_e)
    return np.exp(np.clip(logeps, -_EXP_CLIP, _EXP_CLIP))


def demissivity_dtheta(rho_cgs, theta_e, b_gauss, nu_hz):
    """d epsilon_nu / d theta_e (same broadcasting as emissivity)."""
    eps = emissivity(rho_cgs, theta_e, b_gauss, nu_hz)
    zeta = ZETA_COEFF * nu_hz / (b_gauss * theta_e**2)
    dlog = dlog_shape_dlog_zeta(zeta) * (-2.0 / theta_e) \
        - dlog_k2_dx(1.0 / theta_e) * (-1.0 / theta_e**2)
    return eps * dlog


def dlog_emissivity_dlog_nu(zeta):
    """d log eps / d log nu at fixed plasma state (zeta grows like nu)."""
    return 1.0 + dlog_shape_dlog_zeta(zeta)
