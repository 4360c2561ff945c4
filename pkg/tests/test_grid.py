import numpy as np
import pytest

from axirmhd.errors import ConfigurationError
from axirmhd.grid import build_grid, metrics, solve_stretch_ratio


def test_uniform_spacing_example():
    g = build_grid(4, 2, 100.0, stretch_ratio=1.0)
    assert np.allclose(g.dr, 24.75)
    assert g.r_faces[0] == 1.0
    assert g.r_faces[-1] == 100.0


def test_geometric_spacing_closed_form():
    # dr_0 = span*(s-1)/(s^n - 1), cells sum to the span exactly
    s = 1.1
    g = build_grid(8, 2, 2.0, stretch_ratio=s)
    dr0 = 1.0 * (s - 1.0) / (s**8 - 1.0)
    assert abs(g.dr[0] - dr0) < 1e-14
    ratios = g.dr[1:] / g.dr[:-1]
    assert np.abs(ratios - s).max() < 1e-12
    assert abs(g.dr.sum() - 1.0) < 1e-12


def test_paper_scale_mesh_shape():
    g = build_grid(200, 60, 100.0, dr_inner=0.01)
    assert g.shape == (200, 60)
    assert g.r_faces[0] == 1.0 and g.r_faces[-1] == 100.0
    assert g.dr[0] == pytest.approx(0.01, rel=1e-10)
    assert np.all(np.diff(g.dr) > 0)  # strongly stretched outward
    assert abs(g.th_faces[-1] - np.pi / 2) < 1e-15


def test_invalid_configuration():
    with pytest.raises(ConfigurationError):
        build_grid(2, 2, 10.0)
    with pytest.raises(ConfigurationError):
        build_grid(8, 1, 10.0)
    with pytest.raises(ConfigurationError):
        build_grid(8, 4, 0.5)
    with pytest.raises(ConfigurationError):
        build_grid(8, 4, 10.0, stretch_ratio=0.9)
    with pytest.raises(ConfigurationError):
        solve_stretch_ratio(8, 1.0, 2.0)


def test_cell_volume_analytic():
    g = build_grid(12, 6, 10.0, stretch_ratio=1.15)
    for j, k in ((0, 0), (5, 3), (11, 5)):
        m = metrics(g, j, k)
        r0, r1 = g.r_faces[j], g.r_faces[j + 1]
        t0, t1 = g.th_faces[k], g.th_faces[k + 1]
        exact = 2 * np.pi / 3 * (r1**3 - r0**3) * (np.sin(t1) - np.sin(t0))
        assert abs(m.volume - exact) <= 1e-12 * exact


def test_total_volume_matches_domain():
    g = build_grid(30, 12, 40.0, stretch_ratio=1.05)
    assert abs(g.total_volume() - g.analytic_volume()) <= 1e-10 * g.analytic_volume()


def test_metrics_small_cell_quadrature():
    # nearly point-like cell: volume ~ r^2 cos(th) dr dth * 2pi to 0.1%
    g = build_grid(400, 200, 1.05)
    j, k = 200, 50
    m = metrics(g, j, k)
    approx = 2 * np.pi * m.r_center**2 * np.cos(m.th_center) * g.dr[j] * g.dth[k]
    assert abs(m.volume - approx) / approx < 1e-3


def test_equator_face_tan_zero():
    g = build_grid(8, 4, 5.0)
    m = metrics(g, 0, 0)
    assert m.tan_faces[0] == 0.0


def test_index_error():
    g = build_grid(8, 4, 5.0)
    with pytest.raises(IndexError):
        metrics(g, 8, 0)
    with pytest.raises(IndexError):
        metrics(g, 0, -1)


def test_refinement_halves_spacing():
    g1 = build_grid(10, 4, 9.0, stretch_ratio=1.0)
    g2 = build_grid(20, 4, 9.0, stretch_ratio=1.0)
    assert np.abs(g2.dr - 0.5 * g1.dr[0]).max() < 1e-13


def test_metrics_pure():
    g = build_grid(8, 4, 5.0)
    a = metrics(g, 3, 2)
    b = metrics(g, 3, 2)
    assert a == b
