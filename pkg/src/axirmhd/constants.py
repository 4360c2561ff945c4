"""Physical constants (cgs) and global solver conventions."""

# cgs constants
C_LIGHT = 2.99792458e10        # cm / s
K_BOLTZ = 1.380649e-16         # erg / K
M_ELECTRON = 9.1093837015e-28  # g
M_ATOMIC = 1.66053906660e-24   # g
A_RAD = 7.565723e-15           # erg / cm^3 / K^4
SIGMA_THOMSON = 6.6524587321e-25  # cm^2
G_NEWTON = 6.674e-8            # cm^3 / g / s^2
R_GAS = 8.314462618e7          # erg / K / mol
M_SUN = 1.98892e33             # g
H_PLANCK = 6.62607015e-27      # erg s

# plasma composition
GAMMA = 5.0 / 3.0
MU_ION = 1.23
MU_ELECTRON = 1.14

# ghost-layer width (third-order advection needs 2)
NG = 2

# conserved-variable ordering inside a FieldSet
RHO, MR, NTH, LPHI, EI, EE, ER, BR, BTH, BT = range(10)
NEQ = 10

VAR_NAMES = ("rho", "m", "n", "l", "Ei", "Ee", "Er", "Br", "Bth", "BT")

# post-update floors (dimensionless)
RHO_FLOOR = 1e-10
ENERGY_FLOOR = 1e-12
