"""Transfer of nodal finite-element fields onto point clouds.

Values use barycentric interpolation; temperature gradients use the
containing triangle's constant P1 gradient.  Triangle lookup is
deterministic: the lowest-index triangle containing the point (within a
geometric snap tolerance) wins, which also fixes the adjacent-triangle
choice for boundary points.
"""

from __future__ import annotations

import numpy as np

from pipn.geometry import PointCloud, SensorSet
from pipn.oracle.fem import temperature_gradients
from pipn.oracle.mesh import Mesh

_CHUNK = 128


def locate_points(mesh: Mesh, points: np.ndarray, snap_tol: float = 1e-9):
    """Containing triangle index and barycentric coordinates per point.

    A point within ``snap_tol`` meters outside a triangle still counts as
    contained (covers boundary points and roundoff); its barycentric
    coordinates are clipped back onto the triangle.  Raises when a point
    lies beyond every triangle, reporting the first offending index.
    """
    points = np.asarray(points, dtype=float)
    tri_pts = mesh.coords[mesh.triangles]  # (T, 3, 2)
    a, b, c = tri_pts[:, 0], tri_pts[:, 1], tri_pts[:, 2]
    det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])
    # snap_tol in meters -> barycentric units, per triangle (shortest altitude)
    edge_len = np.stack(
        [
            np.linalg.norm(c - b, axis=1),
            np.linalg.norm(a - c, axis=1),
            np.linalg.norm(b - a, axis=1),
        ],
        axis=1,
    )
    bary_tol = snap_tol * edge_len.max(axis=1) / np.abs(det)

    n = len(points)
    tri_idx = np.full(n, -1, dtype=np.intp)
    bary = np.zeros((n, 3))
    for lo in range(0, n, _CHUNK):
        p = points[lo : lo + _CHUNK]
        rel = p[:, None, :] - a[None, :, :]
        w1 = (rel[..., 0] * (c[:, 1] - a[:, 1]) - rel[..., 1] * (c[:, 0] - a[:, 0])) / det
        w2 = (rel[..., 1] * (b[:, 0] - a[:, 0]) - rel[..., 0] * (b[:, 1] - a[:, 1])) / det
        w0 = 1.0 - w1 - w2
        inside = (w0 >= -bary_tol) & (w1 >= -bary_tol) & (w2 >= -bary_tol)
        found = inside.any(axis=1)
        first = np.argmax(inside, axis=1)  # lowest triangle index on ties
        tri_idx[lo : lo + _CHUNK][found] = first[found]
        rows = np.flatnonzero(found)
        bary[lo + rows, 0] = w0[rows, first[rows]]
        bary[lo + rows, 1] = w1[rows, first[rows]]
        bary[lo + rows, 2] = w2[rows, first[rows]]
    missing = np.flatnonzero(tri_idx < 0)
    if len(missing):
        i = int(missing[0])
        raise ValueError(
            f"point {i} at {tuple(points[i])} lies outside the mesh "
            f"(beyond snap tolerance {snap_tol:g}; {len(missing)} such points)"
        )
    np.clip(bary, 0.0, 1.0, out=bary)
    bary /= bary.sum(axis=1, keepdims=True)
    return tri_idx, bary


def interpolate_nodal(mesh: Mesh, field: np.ndarray, tri_idx: np.ndarray, bary: np.ndarray):
    return (field[mesh.triangles[tri_idx]] * bary).sum(axis=1)


def interpolate_to_cloud(
    mesh: Mesh,
    temperature: np.ndarray,
    displacement: tuple[np.ndarray, np.ndarray],
    cloud: PointCloud,
    sensor_indices: np.ndarray | None = None,
    snap_tol: float = 1e-9,
) -> tuple[PointCloud, SensorSet | None]:
    """Fill the cloud's temperature, temperature gradient and reference
    displacement fields; optionally extract sensor displacement readings."""
    u, v = displacement
    tri_idx, bary = locate_points(mesh, cloud.coords, snap_tol=snap_tol)
    cloud.temperature = interpolate_nodal(mesh, temperature, tri_idx, bary)
    cloud.temp_grad = temperature_gradients(mesh, temperature)[tri_idx]
    cloud.ref_u = interpolate_nodal(mesh, u, tri_idx, bary)
    cloud.ref_v = interpolate_nodal(mesh, v, tri_idx, bary)
    sensors = None
    if sensor_indices is not None:
        sensors = SensorSet(
            indices=np.asarray(sensor_indices, dtype=np.intp),
            u_sensor=cloud.ref_u[sensor_indices].copy(),
            v_sensor=cloud.ref_v[sensor_indices].copy(),
        )
    return cloud, sensors
