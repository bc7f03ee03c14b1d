"""Finite-element ground truth: meshing, solves, interpolation, verification."""

from pipn.oracle.fem import (
    Material,
    SolverError,
    assemble_laplace,
    assemble_plane_stress,
    conjugate_gradient,
    solve_plane_stress,
    solve_temperature,
    temperature_gradients,
)
from pipn.oracle.interpolate import interpolate_to_cloud, locate_points
from pipn.oracle.manufactured import ManufacturedCase, case_ids, manufactured_case
from pipn.oracle.mesh import Mesh, boundary_ring, build_mesh, mesh_to_text

__all__ = [
    "ManufacturedCase",
    "Material",
    "Mesh",
    "SolverError",
    "assemble_laplace",
    "assemble_plane_stress",
    "boundary_ring",
    "build_mesh",
    "case_ids",
    "conjugate_gradient",
    "interpolate_to_cloud",
    "locate_points",
    "manufactured_case",
    "mesh_to_text",
    "solve_plane_stress",
    "solve_temperature",
    "temperature_gradients",
]


def solve_domain(spec, n_ring, n_layers, mat, cloud, sensor_indices=None):
    """Mesh one domain, solve both fields, and fill the given cloud.

    Returns (cloud, sensors, mesh); the convenience path used by dataset
    generation.
    """
    mesh = build_mesh(spec, n_ring, n_layers)
    temperature = solve_temperature(mesh)
    u, v = solve_plane_stress(mesh, temperature, mat)
    cloud, sensors = interpolate_to_cloud(mesh, temperature, (u, v), cloud, sensor_indices)
    return cloud, sensors, mesh
