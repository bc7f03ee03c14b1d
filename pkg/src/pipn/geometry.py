"""Parametric plate-with-cavity domains, point-cloud sampling, sensor placement.

Every domain is a thin square plate centered at the origin with a regular
polygonal cavity.  The family is enumerated from a fixed table of cavity
shapes, cavity orientations (odd degrees) and plate side lengths.  Point
clouds tag each point as interior, outer-boundary or cavity-boundary;
field values (temperature, gradients, reference displacements) are filled
in later by the finite-element oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np

# Point kind tags used in PointCloud.kind.
INTERIOR = 0
OUTER_BOUNDARY = 1
CAVITY_BOUNDARY = 2

# shape name -> (polygon side count, cavity circumradius [m], max odd orientation [deg])
_SHAPE_TABLE: dict[str, tuple[int, float, int]] = {
    "square": (4, 0.35, 89),
    "pentagon": (5, 0.30, 71),
    "hexagon": (6, 0.30, 59),
    "heptagon": (7, 0.30, 51),
    "octagon": (8, 0.30, 45),
    "nonagon": (9, 0.30, 39),
}

_NPOLY_TO_NAME = {v[0]: k for k, v in _SHAPE_TABLE.items()}

SIDE_LENGTHS: tuple[float, ...] = (1.6, 1.8, 2.0)


class Membership(Enum):
    INTERIOR = "interior"
    ON_BOUNDARY = "on_boundary"
    OUTSIDE = "outside"


@dataclass(frozen=True)
class DomainSpec:
    """One plate-with-cavity geometry.

    The cavity is a regular polygon with ``n_poly`` sides inscribed in a
    circle of radius ``circumradius``, rotated by ``orientation_deg`` and
    centered (like the plate) at the origin.
    """

    n_poly: int
    circumradius: float
    orientation_deg: float
    side_length: float

    def __post_init__(self):
        if not 3 <= self.n_poly:
            raise ValueError(f"cavity polygon needs at least 3 sides, got {self.n_poly}")
        if not self.circumradius < self.side_length / 2.0:
            raise ValueError(
                f"cavity (R={self.circumradius}) does not fit strictly inside "
                f"a square of side {self.side_length}"
            )

    @property
    def shape_name(self) -> str:
        return _NPOLY_TO_NAME.get(self.n_poly, f"polygon{self.n_poly}")

    @property
    def label(self) -> str:
        """Stable identifier used for dataset file names."""
        return f"{self.shape_name}_side{self.side_length:.1f}_omega{self.orientation_deg:05.1f}"


@dataclass
class PointCloud:
    """N labeled points on one domain, plus per-point field data.

    ``coords`` is (N, 2), ``kind`` is (N,) with INTERIOR / OUTER_BOUNDARY /
    CAVITY_BOUNDARY tags.  ``temperature``, ``temp_grad`` and the reference
    displacements stay None until the oracle fills them.
    """

    spec: DomainSpec
    coords: np.ndarray
    kind: np.ndarray
    temperature: np.ndarray | None = None
    temp_grad: np.ndarray | None = None
    ref_u: np.ndarray | None = None
    ref_v: np.ndarray | None = None

    @property
    def n_points(self) -> int:
        return self.coords.shape[0]

    def permuted(self, perm: np.ndarray) -> "PointCloud":
        """Same geometry with points reordered by ``perm``."""
        pick = lambda a: None if a is None else a[perm]
        return PointCloud(
            spec=self.spec,
            coords=self.coords[perm],
            kind=self.kind[perm],
            temperature=pick(self.temperature),
            temp_grad=pick(self.temp_grad),
            ref_u=pick(self.ref_u),
            ref_v=pick(self.ref_v),
        )


@dataclass
class SensorSet:
    """Indices into a point cloud where displacements are observed."""

    indices: np.ndarray
    u_sensor: np.ndarray | None = None
    v_sensor: np.ndarray | None = None

    @property
    def m(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class FamilyFilter:
    """Predicate over the enumerated family.

    Empty/None fields match everything.  ``omegas`` matches exact
    orientation values; ``omega_range`` is an inclusive (lo, hi) interval.
    """

    shapes: frozenset[str] | None = None
    sides: frozenset[float] | None = None
    omegas: frozenset[float] | None = None
    omega_range: tuple[float, float] | None = None

    def __call__(self, spec: DomainSpec) -> bool:
        if self.shapes is not None and spec.shape_name not in self.shapes:
            return False
        if self.sides is not None and not any(
            math.isclose(spec.side_length, s) for s in self.sides
        ):
            return False
        if self.omegas is not None and not any(
            math.isclose(spec.orientation_deg, w) for w in self.omegas
        ):
            return False
        if self.omega_range is not None:
            lo, hi = self.omega_range
            if not lo <= spec.orientation_deg <= hi:
                return False
        return True


def parse_filter(expr: str) -> FamilyFilter:
    """Parse a filter expression like ``shape=hexagon|square,side=2.0,omega=1..9``.

    Clauses are comma separated.  Values are ``|``-separated alternatives;
    ``omega`` additionally accepts an inclusive ``lo..hi`` range.
    """
    shapes = sides = omegas = omega_range = None
    expr = expr.strip()
    if not expr:
        return FamilyFilter()
    for clause in expr.split(","):
        if "=" not in clause:
            raise ValueError(f"bad filter clause {clause!r} (expected key=value)")
        key, _, value = clause.partition("=")
        key, value = key.strip(), value.strip()
        if key == "shape":
            shapes = frozenset(v.strip() for v in value.split("|"))
            unknown = shapes - set(_SHAPE_TABLE)
            if unknown:
                raise ValueError(f"unknown shape(s) {sorted(unknown)}; choose from {sorted(_SHAPE_TABLE)}")
        elif key == "side":
            sides = frozenset(float(v) for v in value.split("|"))
        elif key == "omega":
            if ".." in value:
                lo, _, hi = value.partition("..")
                omega_range = (float(lo), float(hi))
            else:
                omegas = frozenset(float(v) for v in value.split("|"))
        else:
            raise ValueError(f"unknown filter key {key!r} (use shape/side/omega)")
    return FamilyFilter(shapes=shapes, sides=sides, omegas=omegas, omega_range=omega_range)


def enumerate_domains(
    family_filter: Callable[[DomainSpec], bool] | None = None,
) -> list[DomainSpec]:
    """Enumerate the full geometry family, optionally filtered.

    The unfiltered enumeration is every cavity shape x every odd
    orientation within the shape's range x every plate side length, in
    deterministic (shape, side, orientation) ascending order.  Note this
    is a superset (540) of the 532 configurations used in the published
    study, which does not document its per-shape exclusions; callers
    select subsets through the filter.
    """
    out = []
    for name, (n_poly, radius, omega_max) in sorted(_SHAPE_TABLE.items(), key=lambda kv: kv[1][0]):
        for side in SIDE_LENGTHS:
            for omega in range(1, omega_max + 1, 2):
                spec = DomainSpec(
                    n_poly=n_poly,
                    circumradius=radius,
                    orientation_deg=float(omega),
                    side_length=side,
                )
                if family_filter is None or family_filter(spec):
                    out.append(spec)
    return out


def cavity_polygon(spec: DomainSpec) -> np.ndarray:
    """Cavity vertices (n_poly, 2), counter-clockwise, implicitly closed."""
    k = np.arange(spec.n_poly)
    theta = np.radians(spec.orientation_deg + 360.0 * k / spec.n_poly)
    return spec.circumradius * np.column_stack([np.cos(theta), np.sin(theta)])


def square_polygon(spec: DomainSpec) -> np.ndarray:
    """Outer square vertices, counter-clockwise from the (+,+) corner."""
    h = spec.side_length / 2.0
    return np.array([[h, h], [-h, h], [-h, -h], [h, -h]])


def _edge_signed_distances(polygon: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Signed distance of each point to each edge line of a CCW polygon.

    Positive outside the polygon.  Shape (n_points, n_edges).
    """
    v0 = polygon
    v1 = np.roll(polygon, -1, axis=0)
    edge = v1 - v0
    # outward (right-hand) unit normal of a CCW polygon
    normal = np.column_stack([edge[:, 1], -edge[:, 0]])
    normal /= np.linalg.norm(normal, axis=1, keepdims=True)
    rel = points[:, None, :] - v0[None, :, :]
    return np.einsum("pek,ek->pe", rel, normal)


def cavity_clearance(spec: DomainSpec, points: np.ndarray) -> np.ndarray:
    """max-over-edges signed distance to the cavity: <0 inside, 0 on boundary.

    For convex polygons this equals the true distance wherever the nearest
    feature is an edge and is a (safe) underestimate near vertices.
    """
    return _edge_signed_distances(cavity_polygon(spec), np.atleast_2d(points)).max(axis=1)


def square_clearance(spec: DomainSpec, points: np.ndarray) -> np.ndarray:
    """Distance inward from the outer square: >0 inside, <0 outside."""
    points = np.atleast_2d(points)
    return spec.side_length / 2.0 - np.abs(points).max(axis=1)


def point_in_domain(spec: DomainSpec, p: Sequence[float], tol: float = 1e-12) -> Membership:
    """Classify a point against the plate-minus-cavity domain."""
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    sq = float(square_clearance(spec, np.asarray(p, dtype=float))[0])
    cav = float(cavity_clearance(spec, np.asarray(p, dtype=float))[0])
    if sq < -tol or cav < -tol:
        return Membership.OUTSIDE
    if sq <= tol or cav <= tol:
        return Membership.ON_BOUNDARY
    return Membership.INTERIOR


def polyline_arc_points(vertices: np.ndarray, params: np.ndarray) -> np.ndarray:
    """Points on a closed polyline at the given normalized arc-length params.

    ``vertices`` is CCW and implicitly closed; ``params`` in [0, 1).
    """
    v0 = vertices
    v1 = np.roll(vertices, -1, axis=0)
    seg_len = np.linalg.norm(v1 - v0, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = cum[-1]
    s = np.asarray(params) * total
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg_len) - 1)
    t = (s - cum[idx]) / seg_len[idx]
    return v0[idx] + t[:, None] * (v1[idx] - v0[idx])


def edge_midpoint_points(vertices: np.ndarray, n: int) -> np.ndarray:
    """``n`` points on a closed polygon, equally spaced per edge with a
    half-step offset, so no point ever lands on a vertex.

    Cloud boundary points must stay off the polygon corners: the cavity
    corners are reentrant for the plate-minus-cavity domain, so the
    temperature gradient is singular there and pointwise residual data at
    a corner would be unusable.
    """
    n_edges = len(vertices)
    if n < n_edges:
        raise ValueError(f"need at least {n_edges} boundary points for {n_edges} edges")
    v0 = vertices
    v1 = np.roll(vertices, -1, axis=0)
    lengths = np.linalg.norm(v1 - v0, axis=1)
    quota = n * lengths / lengths.sum()
    counts = np.maximum(1, np.floor(quota).astype(int))
    while counts.sum() > n:
        over = np.where(counts > 1)[0]
        counts[over[np.argmin((quota - counts)[over])]] -= 1
    remainder = quota - counts
    while counts.sum() < n:
        i = int(np.argmax(remainder))
        counts[i] += 1
        remainder[i] = -np.inf
    pieces = [
        a + ((np.arange(c) + 0.5) / c)[:, None] * (b - a)
        for a, b, c in zip(v0, v1, counts)
    ]
    return np.vstack(pieces)


def _boundary_points(spec: DomainSpec, n_outer: int, n_cavity: int) -> tuple[np.ndarray, np.ndarray]:
    outer = edge_midpoint_points(square_polygon(spec), n_outer)
    cavity = edge_midpoint_points(cavity_polygon(spec), n_cavity)
    return outer, cavity


def _interior_grid(spec: DomainSpec, n_grid: int) -> np.ndarray:
    """Cell-centered n_grid x n_grid candidates, clipped half a cell from both boundaries."""
    h = spec.side_length / n_grid
    axis = -spec.side_length / 2.0 + (np.arange(n_grid) + 0.5) * h
    xx, yy = np.meshgrid(axis, axis, indexing="xy")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    keep = (cavity_clearance(spec, pts) >= h / 2.0) & (square_clearance(spec, pts) >= h / 2.0)
    return pts[keep]


def farthest_point_subset(
    candidates: np.ndarray,
    n_select: int,
    anchors: np.ndarray | None,
    seed: int,
) -> np.ndarray:
    """Greedy farthest-point reduction of ``candidates`` to ``n_select`` points.

    Candidates are canonicalized by lexicographic sort first, so the result
    is invariant to their input order.  ``anchors`` (already-fixed points,
    e.g. boundary samples) seed the distance field; the first pick is drawn
    from ``seed``, every later pick maximizes the distance to everything
    selected so far, breaking ties at the lowest candidate index.
    """
    if n_select > len(candidates):
        raise ValueError(f"need {n_select} interior points but only {len(candidates)} candidates")
    order = np.lexsort((candidates[:, 1], candidates[:, 0]))
    cand = candidates[order]
    dmin = np.full(len(cand), np.inf)
    if anchors is not None and len(anchors):
        for chunk in np.array_split(anchors, max(1, len(anchors) // 512)):
            d = np.linalg.norm(cand[:, None, :] - chunk[None, :, :], axis=2).min(axis=1)
            np.minimum(dmin, d, out=dmin)
    rng = np.random.default_rng(seed)
    picked = np.empty(n_select, dtype=np.intp)
    current = int(rng.integers(len(cand)))
    for i in range(n_select):
        picked[i] = current
        dmin[current] = -1.0  # never re-picked
        if i + 1 == n_select:
            break
        d = np.linalg.norm(cand - cand[current], axis=1)
        np.minimum(dmin, d, out=dmin)
        current = int(np.argmax(dmin))
    picked.sort()
    return cand[picked]


def sample_point_cloud(
    spec: DomainSpec,
    n_points: int,
    n_outer_bdry: int,
    n_cavity_bdry: int,
    seed: int,
    grid_resolution: int | None = None,
    oversample: float = 3.0,
) -> PointCloud:
    """Sample a deterministic point cloud of exactly ``n_points`` points.

    Boundary points are arc-length uniform on each boundary.  Interior
    points come from a cell-centered uniform grid clipped half a cell away
    from both boundaries, reduced to the required count by seeded
    farthest-point sampling (anchored on the boundary points).  If
    ``grid_resolution`` is given it is used as-is and an error is raised
    when the clipped grid cannot supply enough candidates.
    """
    if n_points < 50:
        raise ValueError(f"n_points must be at least 50, got {n_points}")
    n_interior = n_points - n_outer_bdry - n_cavity_bdry
    if n_interior <= 0:
        raise ValueError(
            f"n_points={n_points} must exceed the boundary budget "
            f"{n_outer_bdry}+{n_cavity_bdry}"
        )
    outer, cavity = _boundary_points(spec, n_outer_bdry, n_cavity_bdry)

    if grid_resolution is not None:
        candidates = _interior_grid(spec, grid_resolution)
        if len(candidates) < n_interior:
            raise ValueError(
                f"interior grid ({grid_resolution}x{grid_resolution}) too coarse: "
                f"required {n_interior} candidates, available {len(candidates)}"
            )
    else:
        n_grid = max(8, math.isqrt(int(oversample * n_interior)))
        while True:
            candidates = _interior_grid(spec, n_grid)
            if len(candidates) >= oversample * n_interior:
                break
            n_grid += max(1, n_grid // 8)

    anchors = np.vstack([outer, cavity])
    interior = farthest_point_subset(candidates, n_interior, anchors, seed)

    coords = np.vstack([outer, cavity, interior])
    kind = np.concatenate(
        [
            np.full(n_outer_bdry, OUTER_BOUNDARY, dtype=np.int8),
            np.full(n_cavity_bdry, CAVITY_BOUNDARY, dtype=np.int8),
            np.full(n_interior, INTERIOR, dtype=np.int8),
        ]
    )
    return PointCloud(spec=spec, coords=coords, kind=kind)


def place_sensors(cloud: PointCloud, m: int) -> np.ndarray:
    """Pick ``m`` unique cloud indices on an approximately uniform lattice.

    A k x k lattice (k starting at ceil(sqrt(m))) is spread over the plate
    interior; nodes inside or within one lattice cell of the cavity are
    discarded and the survivors are mapped to their nearest distinct
    non-cavity cloud points.  If too few survive, the lattice is densified;
    if too many, the nodes closest to the cavity are dropped first.
    """
    spec = cloud.spec
    eligible = np.flatnonzero(cloud.kind != CAVITY_BOUNDARY)
    if m > len(eligible):
        raise ValueError(f"asked for {m} sensors but only {len(eligible)} non-cavity points exist")
    half = spec.side_length / 2.0

    k = max(1, math.isqrt(m - 1) + 1) if m > 1 else 1
    while True:
        spacing = spec.side_length / (k + 1)
        axis = -half + spacing * (np.arange(k) + 1)
        xx, yy = np.meshgrid(axis, axis, indexing="xy")
        nodes = np.column_stack([xx.ravel(), yy.ravel()])
        clear = cavity_clearance(spec, nodes)
        nodes = nodes[clear >= spacing]
        clear = clear[clear >= spacing]

        # nearest distinct eligible cloud point per node, row-major node order
        taken: list[int] = []
        taken_clear: list[float] = []
        used = set()
        pts = cloud.coords[eligible]
        for node, c in zip(nodes, clear):
            d = np.linalg.norm(pts - node, axis=1)
            for j in np.argsort(d, kind="stable"):
                idx = int(eligible[j])
                if idx not in used:
                    used.add(idx)
                    taken.append(idx)
                    taken_clear.append(float(c))
                    break
        if len(taken) >= m:
            break
        if k > 4 * (math.isqrt(m) + 2):
            raise ValueError(f"could not place {m} sensors on {spec.label}")
        k += 1

    if len(taken) > m:
        # drop the sensors whose lattice nodes sit closest to the cavity
        keep = np.argsort(-np.asarray(taken_clear), kind="stable")[:m]
        taken = [taken[i] for i in sorted(keep)]
    return np.asarray(taken, dtype=np.intp)
