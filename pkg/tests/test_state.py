import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from axirmhd import constants as cst
from axirmhd.constants import (BR, BT, BTH, EE, EI, ER, GAMMA, LPHI, MR, NEQ,
                               NG, NTH, RHO)
from axirmhd.errors import ConfigurationError, StateError
from axirmhd.grid import build_grid
from axirmhd.state import (BoundarySpec, FieldSet, ScalingSet, apply_boundary,
                           from_primitives, nondim, primitives, read_snapshot,
                           redim, snapshot_to_fieldset, write_snapshot)


def test_scaling_velocity_consistent(scaling):
    v = np.sqrt(GAMMA * cst.R_GAS * scaling.temperature / cst.MU_ION)
    assert abs(scaling.velocity - v) <= 1e-12 * v


def test_scaling_bfield_equipartition(scaling):
    b = scaling.velocity * np.sqrt(4 * np.pi * scaling.density)
    assert abs(scaling.bfield - b) <= 1e-12 * b
    # Alfven speed at rho = 1 equals the velocity scale
    assert abs(scaling.bfield / np.sqrt(4 * np.pi * scaling.density) - scaling.velocity) < 1e-6 * scaling.velocity


def test_table_values(scaling):
    assert scaling.temperature == 5e7
    assert scaling.density == 2.5e-12
    assert abs(nondim(5e7, "temperature", scaling) - 1.0) < 1e-15
    assert abs(nondim(2.5e-12, "density", scaling) - 1.0) < 1e-15


def test_nondim_round_trip(scaling, rng):
    for kind in ("length", "velocity", "density", "temperature", "bfield",
                 "time", "gas_energy", "rad_energy", "mass", "mdot", "momentum"):
        x = float(rng.uniform(0.1, 10.0))
        assert abs(redim(nondim(x, kind, scaling), kind, scaling) - x) <= 1e-14 * x


def test_nondim_unknown_kind(scaling):
    with pytest.raises(ConfigurationError):
        nondim(1.0, "flux-capacitance", scaling)


def test_primitives_basic(grid_small, scaling):
    f = from_primitives(grid_small, rho=1.0, vr=1.0, ti=1.0, scaling=scaling)
    p = primitives(f)
    assert np.allclose(p.vr[NG:-NG, NG:-NG], 1.0)
    f0 = from_primitives(grid_small, rho=2.0, ti=1.0, scaling=scaling)
    p0 = primitives(f0)
    assert np.abs(p0.vr[NG:-NG, NG:-NG]).max() == 0.0
    assert np.abs(p0.vth[NG:-NG, NG:-NG]).max() == 0.0


def test_primitives_keplerian_profile(grid_small, scaling):
    g = grid_small
    vkep = g.r_pad[:, None] ** -0.5 * np.ones((1, g.nth + 2 * NG))
    f = from_primitives(g, rho=1.3, vphi=vkep, ti=1.0, scaling=scaling)
    p = primitives(f)
    expect = g.r_c[:, None] ** -0.5
    assert np.abs(p.vphi[NG:-NG, NG:-NG] - expect).max() < 1e-13


def test_primitives_round_trip(grid_small, scaling, rng):
    shape = (grid_small.nr + 2 * NG, grid_small.nth + 2 * NG)
    rho = rng.uniform(0.5, 3.0, shape)
    vr = rng.normal(size=shape)
    vth = rng.normal(size=shape)
    vphi = rng.normal(size=shape)
    ti = rng.uniform(0.5, 2.0, shape)
    te = rng.uniform(0.5, 2.0, shape)
    f = from_primitives(grid_small, rho=rho, vr=vr, vth=vth, vphi=vphi, ti=ti, te=te, scaling=scaling)
    p = primitives(f)
    sl = np.s_[NG:-NG, NG:-NG]
    for got, want in ((p.vr, vr), (p.vth, vth), (p.ti, ti), (p.te, te)):
        assert np.abs(got[sl] - want[sl]).max() < 1e-13 * max(1.0, np.abs(want[sl]).max())


def test_primitives_negative_density_names_cell(grid_small, scaling):
    f = FieldSet(grid_small, scaling)
    f.q[RHO, NG + 3, NG + 1] = -1.0
    with pytest.raises(StateError, match=r"\(3, 1\)"):
        primitives(f)


def test_boundary_symmetric_scalar_and_antisymmetric_vth(grid_small, scaling, rng):
    f = FieldSet(grid_small, scaling)
    f.q[:] = rng.uniform(0.5, 1.5, f.q.shape)
    b = BoundarySpec()
    apply_boundary(f, b, grid_small)
    # equator: scalar mirrors with +, n mirrors with -
    assert np.array_equal(f.q[RHO, :, 1], f.q[RHO, :, NG])
    assert np.array_equal(f.q[NTH, :, 1], -f.q[NTH, :, NG])
    # axis: l and n flip sign
    hi = NG + grid_small.nth
    assert np.array_equal(f.q[LPHI, :, hi], -f.q[LPHI, :, hi - 1])
    assert np.array_equal(f.q[EI, :, hi], f.q[EI, :, hi - 1])


def test_boundary_outflow_copies_first_interior(grid_small, scaling, rng):
    f = FieldSet(grid_small, scaling)
    f.q[:] = rng.uniform(0.5, 1.5, f.q.shape)
    apply_boundary(f, BoundarySpec(), grid_small)
    assert np.array_equal(f.q[RHO, 0, :], f.q[RHO, NG, :])
    assert np.array_equal(f.q[RHO, 1, :], f.q[RHO, NG, :])
    # zero first derivative across the inner edge for second-order operators
    assert np.array_equal(f.q[MR, 0, :] - f.q[MR, 1, :], np.zeros_like(f.q[MR, 0, :]))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_boundary_idempotent(seed):
    g = build_grid(8, 5, 6.0)
    f = FieldSet(g)
    f.q[:] = np.random.default_rng(seed).uniform(0.5, 2.0, f.q.shape)
    b = BoundarySpec()
    apply_boundary(f, b, g)
    once = f.q.copy()
    apply_boundary(f, b, g)
    assert np.array_equal(once, f.q)


def test_boundary_override_and_errors():
    with pytest.raises(ConfigurationError):
        BoundarySpec(r_inner="symmetry")
    with pytest.raises(ConfigurationError):
        BoundarySpec(th_lower="weird")
    b = BoundarySpec(overrides={("th_lower", RHO): "outflow"})
    assert b.kind_for("th_lower", RHO) == "outflow"
    assert b.kind_for("th_lower", MR) == "symmetry"


def test_floors(grid_small, scaling):
    f = FieldSet(grid_small, scaling)
    f.q[RHO, NG + 1, NG + 1] = -5.0
    f.q[EI, NG + 1, NG + 1] = -5.0
    f.q[ER, NG + 2, NG + 1] = -1.0
    n = f.apply_floors()
    assert n == 3
    assert f.q[RHO, NG + 1, NG + 1] == cst.RHO_FLOOR
    assert f.q[ER, NG + 2, NG + 1] == 0.0


def test_snapshot_round_trip(grid_small, scaling, rng, tmp_path):
    f = FieldSet(grid_small, scaling)
    f.q[:] = rng.uniform(0.5, 1.5, f.q.shape)
    f.psi[:] = rng.normal(size=f.psi.shape)
    path = tmp_path / "snap.dat"
    write_snapshot(f, path, {"config_hash": "cafe", "note": "t"})
    rec, meta = read_snapshot(path)
    assert meta["config_hash"] == "cafe"
    g = snapshot_to_fieldset(path, grid_small, scaling)
    assert np.array_equal(g.interior(), f.interior())
    assert np.array_equal(g.psi[NG:-NG, NG:-NG], f.psi[NG:-NG, NG:-NG])
