"""Conserved-variable field set, cgs scalings, boundary conditions, snapshots.

The per-cell unknown vector is q = (rho, m, n, l, Ei, Ee, Er, Br, Bth, BT)
with m = rho*Vr, n = rho*r*Vth, l = rho*r*cos(th)*Vphi.  All entries are
dimensionless; the gas energies are scaled by rho0*V0^2 and the radiation
energy by a_rad*T0^4 so that T^4 == Er marks radiative equilibrium.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import constants as cst
from .constants import (BR, BT, BTH, EE, EI, ER, GAMMA, LPHI, MR, MU_ELECTRON,
                        MU_ION, NEQ, NG, NTH, RHO, VAR_NAMES)
from .errors import ConfigurationError, FormatError, StateError
from .grid import Grid


@dataclass(frozen=True)
class ScalingSet:
    """Positive cgs constants that nondimensionalize the equations."""

    mass: float
    mdot: float
    length: float
    temperature: float
    velocity: float
    ang_velocity: float
    bfield: float
    density: float

    @classmethod
    def agn_reference(cls) -> "ScalingSet":
        """Scales for a 3e8 M_sun object accreting at a tenth Eddington."""
        mass = 3e8 * cst.M_SUN
        r_s = 2.0 * cst.G_NEWTON * mass / cst.C_LIGHT**2
        length = 3.0 * r_s
        temperature = 5e7
        velocity = np.sqrt(GAMMA * cst.R_GAS * temperature / MU_ION)
        ang_velocity = np.sqrt(cst.G_NEWTON * mass / length)
        density = 2.5e-12
        # B chosen so the Alfven speed equals the sound-speed scale at rho=1
        bfield = velocity * np.sqrt(4.0 * np.pi * density)
        mdot_edd = 4.0 * np.pi * cst.G_NEWTON * mass * cst.M_ATOMIC / (0.1 * cst.SIGMA_THOMSON * cst.C_LIGHT)
        return cls(mass=mass, mdot=0.1 * mdot_edd, length=length,
                   temperature=temperature, velocity=velocity,
                   ang_velocity=ang_velocity, bfield=bfield, density=density)

    # ---- derived scales -------------------------------------------------
    @property
    def time(self) -> float:
        return self.length / self.velocity

    @property
    def gas_energy(self) -> float:
        return self.density * self.velocity**2

    @property
    def rad_energy(self) -> float:
        return cst.A_RAD * self.temperature**4

    @property
    def rad_to_gas(self) -> float:
        """Multiplies a radiation-unit energy density into gas units."""
        return self.rad_energy / self.gas_energy

    @property
    def exchange_norm(self) -> float:
        """Exchange-rate normalization: ((gamma-1)/gamma) * V^2 * Vk / R."""
        return ((GAMMA - 1.0) / GAMMA) * self.velocity**2 * self.ang_velocity / self.length

    @property
    def grav_parameter(self) -> float:
        """G*M / (R * V^2): dimensionless potential depth at r = 1."""
        return cst.G_NEWTON * self.mass / (self.length * self.velocity**2)

    def scale_for(self, kind: str) -> float:
        table = {
            "length": self.length,
            "velocity": self.velocity,
            "ang_velocity": self.ang_velocity,
            "density": self.density,
            "temperature": self.temperature,
            "bfield": self.bfield,
            "mass": self.mass,
            "mdot": self.mdot,
            "time": self.time,
            "gas_energy": self.gas_energy,
            "rad_energy": self.rad_energy,
            "momentum": self.density * self.velocity,
        }
        if kind not in table:
            raise ConfigurationError(f"unknown scaling kind '{kind}' (known: {sorted(table)})")
        return table[kind]


def nondim(value, kind: str, s: ScalingSet):
    return np.asarray(value, dtype=float) / s.scale_for(kind)


def redim(value, kind: str, s: ScalingSet):
    return np.asarray(value, dtype=float) * s.scale_for(kind)


# ---------------------------------------------------------------------------
# boundaries
# ---------------------------------------------------------------------------

EDGES = ("r_inner", "r_outer", "th_lower", "th_upper")
KINDS = ("inflow", "outflow", "symmetry", "antisymmetry")

# sign of the mirrored ghost value per variable under symmetry/antisymmetry.
# th_lower is the equator, th_upper the rotation axis.
_PARITY = {
    "symmetry": np.array([1, 1, -1, 1, 1, 1, 1, 1, -1, 1], dtype=float),
    "antisymmetry": np.array([1, 1, -1, -1, 1, 1, 1, 1, -1, -1], dtype=float),
}

# rest-state ghost values used when an inflow edge gives no explicit value
# (rho = 1, T_i = T_e = 1 and everything else zero)
_INFLOW_DEFAULTS = np.array([1.0, 0.0, 0.0, 0.0,
                             1.0 / (GAMMA * (GAMMA - 1.0)),
                             (MU_ION / MU_ELECTRON) / (GAMMA * (GAMMA - 1.0)),
                             0.0, 0.0, 0.0, 0.0])


@dataclass
class BoundarySpec:
    """Edge kinds plus Dirichlet values for inflow edges."""

    r_inner: str = "outflow"
    r_outer: str = "inflow"
    th_lower: str = "symmetry"
    th_upper: str = "antisymmetry"
    # inflow ghost values per variable: scalar or (nth,) / (nr,) profile
    inflow_values: dict = field(default_factory=dict)
    overrides: dict = field(default_factory=dict)  # (edge, var_index) -> kind

    def __post_init__(self):
        for edge in EDGES:
            kind = getattr(self, edge)
            if kind not in KINDS:
                raise ConfigurationError(f"unknown boundary kind '{kind}' on {edge}")
            if kind in ("symmetry", "antisymmetry") and edge.startswith("r_"):
                raise ConfigurationError("symmetry kinds are only valid on theta edges")

    def kind_for(self, edge: str, var: int) -> str:
        return self.overrides.get((edge, var), getattr(self, edge))


class FieldSet:
    """Value object holding the padded conserved fields and the potential."""

    def __init__(self, grid: Grid, scaling: ScalingSet | None = None, q: np.ndarray | None = None):
        self.grid = grid
        self.scaling = scaling or ScalingSet.agn_reference()
        shape = (NEQ, grid.nr + 2 * NG, grid.nth + 2 * NG)
        if q is None:
            q = np.zeros(shape)
            q[RHO] = 1.0
            q[EI] = 1.0 / (GAMMA * (GAMMA - 1.0))
            q[EE] = 1.0 / (GAMMA * (GAMMA - 1.0))
        if q.shape != shape:
            raise ConfigurationError(f"field array shape {q.shape} != {shape}")
        self.q = q
        self.psi = np.zeros(shape[1:])

    # padded accessors
    @property
    def rho(self):
        return self.q[RHO]

    def interior(self, i: int | None = None) -> np.ndarray:
        if i is None:
            return self.q[:, NG:-NG, NG:-NG]
        return self.q[i, NG:-NG, NG:-NG]

    def copy(self) -> "FieldSet":
        out = FieldSet(self.grid, self.scaling, self.q.copy())
        out.psi = self.psi.copy()
        return out

    def apply_floors(self) -> int:
        """Clip density/energies to their floors; returns #clipped values."""
        n = 0
        for i, lo in ((RHO, cst.RHO_FLOOR), (EI, cst.ENERGY_FLOOR), (EE, cst.ENERGY_FLOOR)):
            bad = self.q[i] < lo
            n += int(bad.sum())
            np.clip(self.q[i], lo, None, out=self.q[i])
        bad = self.q[ER] < 0.0
        n += int(bad.sum())
        np.clip(self.q[ER], 0.0, None, out=self.q[ER])
        return n


@dataclass
class Primitives:
    vr: np.ndarray
    vth: np.ndarray
    vphi: np.ndarray
    ti: np.ndarray
    te: np.ndarray
    pgas: np.ndarray


def primitives(f: FieldSet, g: Grid | None = None) -> Primitives:
    """Velocities, temperatures and gas pressure on the padded mesh."""
    g = g or f.grid
    rho = f.q[RHO]
    ng_int = f.interior(RHO)
    if np.any(ng_int <= 0.0):
        j, k = np.argwhere(ng_int <= 0.0)[0]
        raise StateError(f"non-positive density at cell ({j}, {k}): rho={ng_int[j, k]}")
    r = g.r_pad[:, None]
    cos = g.cos_pad[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        vr = f.q[MR] / rho
        vth = f.q[NTH] / (rho * r)
        vphi = f.q[LPHI] / (rho * r * cos)
    vphi = np.where(np.abs(cos) < 1e-12, 0.0, vphi)
    # P_i = rho*T_i/gamma (code units), T_e carries the mu_e/mu_i weight
    ti = GAMMA * (GAMMA - 1.0) * f.q[EI] / rho
    te = GAMMA * (GAMMA - 1.0) * (MU_ELECTRON / MU_ION) * f.q[EE] / rho
    pgas = (GAMMA - 1.0) * (f.q[EI] + f.q[EE])
    return Primitives(vr=vr, vth=vth, vphi=vphi, ti=ti, te=te, pgas=pgas)


def from_primitives(grid: Grid, rho, vr=0.0, vth=0.0, vphi=0.0, ti=1.0, te=None,
                    er=0.0, br=0.0, bth=0.0, bt=0.0, scaling=None) -> FieldSet:
    """Build a FieldSet from primitive fields (padded or broadcastable)."""
    f = FieldSet(grid, scaling)
    shape = f.q.shape[1:]
    r = grid.r_pad[:, None]
    cos = grid.cos_pad[None, :]
    rho = np.broadcast_to(np.asarray(rho, dtype=float), shape)
    te = ti if te is None else te
    f.q[RHO] = rho
    f.q[MR] = rho * np.broadcast_to(np.asarray(vr, dtype=float), shape)
    f.q[NTH] = rho * r * np.broadcast_to(np.asarray(vth, dtype=float), shape)
    f.q[LPHI] = rho * r * cos * np.broadcast_to(np.asarray(vphi, dtype=float), shape)
    f.q[EI] = rho * np.broadcast_to(np.asarray(ti, dtype=float), shape) / (GAMMA * (GAMMA - 1.0))
    f.q[EE] = rho * np.broadcast_to(np.asarray(te, dtype=float), shape) * (MU_ION / MU_ELECTRON) / (GAMMA * (GAMMA - 1.0))
    f.q[ER] = np.broadcast_to(np.asarray(er, dtype=float), shape)
    f.q[BR] = np.broadcast_to(np.asarray(br, dtype=float), shape)
    f.q[BTH] = np.broadcast_to(np.asarray(bth, dtype=float), shape)
    f.q[BT] = np.broadcast_to(np.asarray(bt, dtype=float), shape)
    return f


def apply_boundary(f: FieldSet, b: BoundarySpec, g: Grid | None = None) -> FieldSet:
    """Fill the two ghost layers on every edge; idempotent, returns f."""
    g = g or f.grid
    q = f.q
    nr, nth = g.nr, g.nth

    for var in range(NEQ):
        # radial edges ----------------------------------------------------
        # outflow ghosts copy the last interior zone; the normal momentum is
        # additionally clamped so nothing upstream of the edge can feed back
        # into the domain
        kind = b.kind_for("r_inner", var)
        if kind == "outflow":
            src = q[var, NG, :]
            if var == MR:
                src = np.minimum(src, 0.0)
            q[var, 0, :] = src
            q[var, 1, :] = src
        elif kind == "inflow":
            val = b.inflow_values.get(("r_inner", var), _INFLOW_DEFAULTS[var])
            q[var, 0, :] = val
            q[var, 1, :] = val
        else:
            raise ConfigurationError(f"kind {kind} not valid on r_inner")

        kind = b.kind_for("r_outer", var)
        hi = NG + nr
        if kind == "outflow":
            src = q[var, hi - 1, :]
            if var == MR:
                src = np.maximum(src, 0.0)
            q[var, hi, :] = src
            q[var, hi + 1, :] = src
        elif kind == "inflow":
            val = b.inflow_values.get(("r_outer", var), _INFLOW_DEFAULTS[var])
            q[var, hi, :] = val
            q[var, hi + 1, :] = val
        else:
            raise ConfigurationError(f"kind {kind} not valid on r_outer")

        # theta edges -------------------------------------------------------
        for edge, lo_side in (("th_lower", True), ("th_upper", False)):
            kind = b.kind_for(edge, var)
            if kind in ("symmetry", "antisymmetry"):
                sign = _PARITY[kind][var]
                if lo_side:
                    q[var, :, 1] = sign * q[var, :, NG]
                    q[var, :, 0] = sign * q[var, :, NG + 1]
                else:
                    hi = NG + nth
                    q[var, :, hi] = sign * q[var, :, hi - 1]
                    q[var, :, hi + 1] = sign * q[var, :, hi - 2]
            elif kind == "outflow":
                if lo_side:
                    q[var, :, 0] = q[var, :, NG]
                    q[var, :, 1] = q[var, :, NG]
                else:
                    hi = NG + nth
                    q[var, :, hi] = q[var, :, hi - 1]
                    q[var, :, hi + 1] = q[var, :, hi - 1]
            elif kind == "inflow":
                val = b.inflow_values.get((edge, var), _INFLOW_DEFAULTS[var])
                if lo_side:
                    q[var, :, 0] = val
                    q[var, :, 1] = val
                else:
                    q[var, :, NG + nth] = val
                    q[var, :, NG + nth + 1] = val
    return f


# ---------------------------------------------------------------------------
# snapshots
# ---------------------------------------------------------------------------

SNAPSHOT_COLUMNS = ("j", "k", "r", "theta") + VAR_NAMES + ("psi",)


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def write_snapshot(f: FieldSet, path, meta: dict | None = None) -> None:
    """Columnar text dump, one row per interior cell, full float precision."""
    g = f.grid
    meta = dict(meta or {})
    lines = [f"# axirmhd snapshot version=0.1.0 config_hash={meta.get('config_hash', 'none')}"]
    for key, val in sorted(meta.items()):
        if key != "config_hash":
            lines.append(f"# {key}={val}")
    lines.append("# " + " ".join(SNAPSHOT_COLUMNS))
    qi = f.interior()
    psi = f.psi[NG:-NG, NG:-NG]
    for j in range(g.nr):
        for k in range(g.nth):
            vals = [f"{j:d}", f"{k:d}", f"{g.r_c[j]:.17g}", f"{g.th_c[k]:.17g}"]
            vals += [f"{qi[i, j, k]:.17g}" for i in range(NEQ)]
            vals.append(f"{psi[j, k]:.17g}")
            lines.append(" ".join(vals))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_snapshot(path):
    """Returns (grid-free record dict of 1-D column arrays, meta dict)."""
    meta = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body and not body.startswith("j "):
                    for tok in body.split():
                        if "=" in tok:
                            key, _, val = tok.partition("=")
                            meta[key] = val
                continue
            parts = line.split()
            if len(parts) != len(SNAPSHOT_COLUMNS):
                raise FormatError(f"snapshot row has {len(parts)} columns, expected {len(SNAPSHOT_COLUMNS)}: '{line[:60]}'")
            rows.append([float(p) for p in parts])
    if not rows:
        raise FormatError(f"empty snapshot file: {path}")
    arr = np.asarray(rows)
    return {name: arr[:, i] for i, name in enumerate(SNAPSHOT_COLUMNS)}, meta


def snapshot_to_fieldset(path, grid: Grid, scaling: ScalingSet | None = None) -> FieldSet:
    rec, _ = read_snapshot(path)
    nr, nth = grid.nr, grid.nth
    if len(rec["r"]) != nr * nth:
        raise FormatError("snapshot size does not match the grid")
    f = FieldSet(grid, scaling)
    for i, name in enumerate(VAR_NAMES):
        f.q[i, NG:-NG, NG:-NG] = rec[name].reshape(nr, nth)
    f.psi[NG:-NG, NG:-NG] = rec["psi"].reshape(nr, nth)
    return f
