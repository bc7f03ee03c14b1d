import numpy as np
import pytest

from pipn.geometry import CAVITY_BOUNDARY
from pipn.oracle import (
    Material,
    build_mesh,
    interpolate_to_cloud,
    locate_points,
    solve_domain,
)
from pipn.oracle.interpolate import interpolate_nodal


@pytest.fixture(scope="module")
def mesh(hexagon_spec):
    return build_mesh(hexagon_spec, 64, 16)


def test_mesh_node_reproduces_nodal_value(mesh):
    probe = mesh.coords[[5, 100, 700]]
    tri_idx, bary = locate_points(mesh, probe)
    field = np.arange(mesh.n_nodes, dtype=float)
    values = interpolate_nodal(mesh, field, tri_idx, bary)
    assert values == pytest.approx([5.0, 100.0, 700.0], abs=1e-9)


def test_linear_field_exact_values_and_gradient(mesh, hexagon_spec, small_cloud):
    x, y = mesh.coords[:, 0], mesh.coords[:, 1]
    field = 0.3 + 1.7 * x - 2.2 * y
    cloud, _ = interpolate_to_cloud(mesh, field, (field, field), small_cloud)
    expected = 0.3 + 1.7 * cloud.coords[:, 0] - 2.2 * cloud.coords[:, 1]
    assert np.abs(cloud.temperature - expected).max() < 1e-12
    assert np.abs(cloud.temp_grad[:, 0] - 1.7).max() < 1e-12
    assert np.abs(cloud.temp_grad[:, 1] + 2.2).max() < 1e-12


def test_cavity_boundary_temperature_near_zero(hexagon_spec, small_cloud):
    cloud, _, _ = solve_domain(hexagon_spec, 128, 32, Material(), small_cloud)
    on_cavity = cloud.temperature[cloud.kind == CAVITY_BOUNDARY]
    assert np.abs(on_cavity).max() < 1e-6


def test_sensor_extraction(hexagon_spec, small_cloud):
    indices = np.array([3, 50, 90])
    cloud, sensors, _ = solve_domain(hexagon_spec, 64, 16, Material(), small_cloud, indices)
    assert np.array_equal(sensors.indices, indices)
    assert np.array_equal(sensors.u_sensor, cloud.ref_u[indices])
    assert np.array_equal(sensors.v_sensor, cloud.ref_v[indices])


def test_outside_point_reports_index(mesh):
    points = np.array([[0.1, 0.1], [0.0, 0.0]])  # cavity center is outside the domain
    with pytest.raises(ValueError, match="point 0"):
        locate_points(mesh, points)


def test_tie_break_lowest_triangle_index(mesh):
    # a mesh node interior to the domain belongs to several triangles; the
    # lookup must pick the smallest containing index
    node = 5 * 64 + 7
    probe = mesh.coords[[node]]
    tri_idx, _ = locate_points(mesh, probe)
    containing = [
        t
        for t in range(len(mesh.triangles))
        if node in mesh.triangles[t]
    ]
    assert tri_idx[0] == min(containing)


def test_barycentric_weights_sum_to_one(mesh, small_cloud):
    _, bary = locate_points(mesh, small_cloud.coords)
    assert np.abs(bary.sum(axis=1) - 1.0).max() < 1e-12
    assert bary.min() >= 0.0
