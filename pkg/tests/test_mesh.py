import numpy as np
import pytest

from pipn.geometry import (
    DomainSpec,
    cavity_clearance,
    cavity_polygon,
    enumerate_domains,
    parse_filter,
    square_polygon,
)
from pipn.oracle import boundary_ring, build_mesh, mesh_to_text


def test_counts_2048_triangles(hexagon_spec):
    mesh = build_mesh(hexagon_spec, 64, 16)
    assert len(mesh.triangles) == 2048  # 64 x 16 quads, two triangles each
    assert mesh.n_nodes == 64 * 17


def test_all_triangles_positively_oriented(hexagon_spec):
    mesh = build_mesh(hexagon_spec, 64, 16)
    assert mesh.triangle_areas().min() > 1e-14


def test_refinement_halves_max_diameter(hexagon_spec):
    coarse = build_mesh(hexagon_spec, 64, 16)
    fine = build_mesh(hexagon_spec, 128, 32)
    ratio = coarse.max_element_diameter() / fine.max_element_diameter()
    assert 1.8 <= ratio <= 2.2


def test_layer_precondition():
    spec = DomainSpec(6, 0.3, 7.0, 2.0)
    with pytest.raises(ValueError):
        build_mesh(spec, 64, 1)
    with pytest.raises(ValueError):
        build_mesh(spec, 10, 8)  # fewer than 3 samples per cavity edge


def test_boundary_nodes_tagged_and_on_boundaries(hexagon_spec):
    mesh = build_mesh(hexagon_spec, 48, 8)
    h = hexagon_spec.side_length / 2
    outer = mesh.coords[mesh.outer_nodes]
    assert np.abs(np.abs(outer).max(axis=1) - h).max() < 1e-12
    cavity = mesh.coords[mesh.cavity_nodes]
    assert np.abs(cavity_clearance(hexagon_spec, cavity)).max() < 1e-12
    assert len(mesh.outer_nodes) == len(mesh.cavity_nodes) == 48


def test_rings_include_polygon_vertices(hexagon_spec):
    ring = boundary_ring(square_polygon(hexagon_spec), np.radians(7.0), 40)
    for corner in square_polygon(hexagon_spec):
        assert np.linalg.norm(ring - corner, axis=1).min() < 1e-12
    cav = boundary_ring(cavity_polygon(hexagon_spec), np.radians(7.0), 30)
    for vertex in cavity_polygon(hexagon_spec):
        assert np.linalg.norm(cav - vertex, axis=1).min() < 1e-12


def test_ring_sample_count_exact(hexagon_spec):
    for n in (19, 32, 57):
        ring = boundary_ring(square_polygon(hexagon_spec), np.radians(7.0), n)
        assert len(ring) == n


def test_start_ray_through_corner():
    # orientation 45 deg puts the alignment ray exactly through a plate corner
    mesh = build_mesh(DomainSpec(4, 0.35, 45.0, 1.6), 64, 16)
    assert mesh.triangle_areas().min() > 1e-14


@pytest.mark.parametrize("side", [1.6, 1.8, 2.0])
def test_every_family_shape_meshes(side):
    for spec in enumerate_domains(parse_filter(f"side={side},omega=1|31")):
        mesh = build_mesh(spec, max(3 * spec.n_poly, 27), 6)
        assert mesh.triangle_areas().min() > 1e-14


def test_text_export_roundtrips_counts(hexagon_spec):
    mesh = build_mesh(hexagon_spec, 48, 8)
    text = mesh_to_text(mesh)
    lines = text.strip().splitlines()
    header = lines[0].split()
    assert header == ["nodes", str(mesh.n_nodes), "triangles", str(len(mesh.triangles))]
    assert len(lines) == 1 + mesh.n_nodes + len(mesh.triangles) + 2
    x, y = map(float, lines[1].split())
    assert (x, y) == tuple(mesh.coords[0])
