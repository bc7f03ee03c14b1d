"""Structured transfinite meshing of the plate-minus-cavity annulus.

Both boundaries are star-shaped about the common center, so a valid mesh
is obtained by sampling each boundary at matching normalized-arc-length
parameters (measured from the intersection with a common start ray) and
linearly blending the paired samples through interpolation rings.  The
boundary sampling always lands exactly on every polygon vertex, so the
mesh boundary coincides with the true boundary and cloud boundary points
lie on the meshed domain to machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pipn.geometry import DomainSpec, cavity_polygon, square_polygon

_MIN_TRIANGLE_AREA = 1e-14


@dataclass
class Mesh:
    """Conforming triangle mesh with tagged boundary nodes."""

    coords: np.ndarray  # (n_nodes, 2)
    triangles: np.ndarray  # (n_triangles, 3) int, counter-clockwise
    outer_nodes: np.ndarray  # indices on the outer square
    cavity_nodes: np.ndarray  # indices on the cavity polygon

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def boundary_nodes(self) -> np.ndarray:
        return np.concatenate([self.outer_nodes, self.cavity_nodes])

    def triangle_areas(self) -> np.ndarray:
        p = self.coords[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def max_element_diameter(self) -> float:
        p = self.coords[self.triangles]
        edges = np.stack(
            [p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1
        )
        return float(np.linalg.norm(edges, axis=2).max())


def _ray_boundary_start(vertices: np.ndarray, angle_rad: float) -> np.ndarray:
    """Close the polygon's vertex loop so it starts at the point where the
    ray from the origin at ``angle_rad`` meets the boundary."""
    direction = np.array([np.cos(angle_rad), np.sin(angle_rad)])
    n = len(vertices)
    for e in range(n):
        v0, v1 = vertices[e], vertices[(e + 1) % n]
        edge = v1 - v0
        denom = direction[0] * (-edge[1]) - direction[1] * (-edge[0])
        if abs(denom) < 1e-15:
            continue
        t = (v0[0] * (-edge[1]) - v0[1] * (-edge[0])) / denom
        u = (direction[0] * v0[1] - direction[1] * v0[0]) / denom
        if t > 0 and -1e-12 <= u <= 1 + 1e-12:
            if u <= 1e-12:
                return np.vstack([vertices[e:], vertices[:e]])
            if u >= 1 - 1e-12:
                k = (e + 1) % n
                return np.vstack([vertices[k:], vertices[:k]])
            start = v0 + u * edge
            return np.vstack([start[None, :], vertices[e + 1 :], vertices[: e + 1]])
    raise ValueError("start ray does not intersect the boundary (polygon not star-shaped?)")


def _apportion(lengths: np.ndarray, total: int) -> np.ndarray:
    """Split ``total`` samples across segments proportionally to length,
    at least one per segment, largest fractional remainders first."""
    n_seg = len(lengths)
    if total < n_seg:
        raise ValueError(f"need at least {n_seg} samples for {n_seg} boundary segments")
    quota = total * lengths / lengths.sum()
    counts = np.maximum(1, np.floor(quota).astype(int))
    while counts.sum() > total:
        candidates = np.where(counts > 1)[0]
        counts[candidates[np.argmin((quota - counts)[candidates])]] -= 1
    remainder = quota - counts
    while counts.sum() < total:
        i = int(np.argmax(remainder))
        counts[i] += 1
        remainder[i] = -np.inf
    return counts


def boundary_ring(vertices: np.ndarray, start_angle_rad: float, n_samples: int) -> np.ndarray:
    """``n_samples`` points around a closed CCW polygon, near-uniform in arc
    length from the common start ray, hitting every vertex exactly."""
    loop = _ray_boundary_start(vertices, start_angle_rad)
    nxt = np.roll(loop, -1, axis=0)
    seg_len = np.linalg.norm(nxt - loop, axis=1)
    counts = _apportion(seg_len, n_samples)
    pieces = []
    for v0, v1, c in zip(loop, nxt, counts):
        t = np.arange(c) / c
        pieces.append(v0 + t[:, None] * (v1 - v0))
    return np.vstack(pieces)


def build_mesh(spec: DomainSpec, n_ring: int, n_layers: int) -> Mesh:
    """Transfinite annular mesh: ``n_ring`` samples around each boundary,
    ``n_layers`` blended quad layers, each quad split along its shorter
    diagonal into two triangles (2 * n_ring * n_layers total)."""
    if n_ring < 3 * spec.n_poly:
        raise ValueError(f"n_ring must be at least {3 * spec.n_poly} (3 per cavity edge), got {n_ring}")
    if n_layers < 4:
        raise ValueError(f"n_layers must be at least 4, got {n_layers}")

    start = np.radians(spec.orientation_deg)
    inner = boundary_ring(cavity_polygon(spec), start, n_ring)
    outer = boundary_ring(square_polygon(spec), start, n_ring)

    t = (np.arange(n_layers + 1) / n_layers)[:, None, None]
    rings = (1.0 - t) * inner[None, :, :] + t * outer[None, :, :]
    coords = rings.reshape(-1, 2)

    def node(r: int, k: int) -> int:
        return r * n_ring + (k % n_ring)

    triangles = np.empty((2 * n_ring * n_layers, 3), dtype=np.intp)
    cell = 0
    for r in range(n_layers):
        for k in range(n_ring):
            p0, p1 = node(r, k), node(r + 1, k)
            p2, p3 = node(r + 1, k + 1), node(r, k + 1)
            d02 = np.sum((coords[p0] - coords[p2]) ** 2)
            d13 = np.sum((coords[p1] - coords[p3]) ** 2)
            if d02 <= d13:
                triangles[cell] = (p0, p1, p2)
                triangles[cell + 1] = (p0, p2, p3)
            else:
                triangles[cell] = (p0, p1, p3)
                triangles[cell + 1] = (p1, p2, p3)
            cell += 2

    mesh = Mesh(
        coords=coords,
        triangles=triangles,
        outer_nodes=np.arange(n_layers * n_ring, (n_layers + 1) * n_ring),
        cavity_nodes=np.arange(n_ring),
    )
    areas = mesh.triangle_areas()
    bad = np.flatnonzero(areas <= _MIN_TRIANGLE_AREA)
    if len(bad):
        raise ValueError(
            f"degenerate or inverted triangle (cell {int(bad[0])}, "
            f"area {areas[bad[0]]:.3e}) in mesh for {spec.label}"
        )
    return mesh


def mesh_to_text(mesh: Mesh) -> str:
    """Plain-text export: node and triangle lists plus boundary tags.

    Line 1: ``nodes <n> triangles <t>``; then one ``x y`` line per node,
    one ``i j k`` line per triangle, and two tag lines listing the outer
    and cavity node indices.
    """
    lines = [f"nodes {mesh.n_nodes} triangles {len(mesh.triangles)}"]
    lines += [f"{float(x)!r} {float(y)!r}" for x, y in mesh.coords]
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles]
    lines.append("outer " + " ".join(map(str, mesh.outer_nodes)))
    lines.append("cavity " + " ".join(map(str, mesh.cavity_nodes)))
    return "\n".join(lines) + "\n"
