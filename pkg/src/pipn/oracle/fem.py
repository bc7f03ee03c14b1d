"""Linear-triangle finite elements for the temperature and displacement fields.

Temperature: Galerkin P1 for the Laplace equation with Dirichlet data
(1 on the outer square, 0 on the cavity by default).

Displacement: plane-stress thermoelasticity assembled in the same
normalization as the training residuals — the elastic modulus is fixed at
1 + nu, which reduces the constitutive matrix to

    C = 1/(1-nu) * [[1, nu, 0], [nu, 1, 0], [0, 0, (1-nu)/2]]

and the thermal stress to alpha/(1-nu) * T * [1, 1, 0], so the strong form
of the assembled system is exactly the residual operator the network is
trained against (the modulus cancels there and is not a problem input).

Both systems are symmetric positive definite after constraint elimination
and are solved with a Jacobi-preconditioned conjugate-gradient iteration
with a fixed summation order, so solves are bitwise reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from pipn.oracle.mesh import Mesh


@dataclass(frozen=True)
class Material:
    """Poisson ratio and thermal expansion coefficient.

    Young's modulus is intentionally absent: it cancels from the
    normalized residuals, so it never enters the pipeline.
    """

    nu: float = 0.3
    alpha: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.nu < 0.5:
            raise ValueError(f"Poisson ratio must lie in (0, 0.5), got {self.nu}")
        if self.alpha <= 0.0:
            raise ValueError(f"thermal expansion coefficient must be positive, got {self.alpha}")


class SolverError(RuntimeError):
    pass


def conjugate_gradient(
    matrix: sp.csr_matrix,
    rhs: np.ndarray,
    tol: float = 1e-10,
    max_iter: int | None = None,
) -> np.ndarray:
    """Jacobi-preconditioned CG to relative residual ``tol``.

    Raises :class:`SolverError` with the final residual when the iteration
    does not converge (which also flags a non-SPD system).
    """
    n = len(rhs)
    if max_iter is None:
        max_iter = max(1000, 20 * n)
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        return np.zeros(n)
    inv_diag = 1.0 / matrix.diagonal()
    x = np.zeros(n)
    r = rhs.copy()
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    for _ in range(max_iter):
        ap = matrix @ p
        alpha = rz / float(p @ ap)
        x += alpha * p
        r -= alpha * ap
        res = float(np.linalg.norm(r))
        if res <= tol * rhs_norm:
            return x
        z = inv_diag * r
        rz_next = float(r @ z)
        p = z + (rz_next / rz) * p
        rz = rz_next
    raise SolverError(
        f"CG failed to reach relative residual {tol:g} within {max_iter} iterations "
        f"(final {res / rhs_norm:.3e})"
    )


def _gradients(mesh: Mesh) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-triangle areas and P1 shape-function gradients.

    Returns (areas, bx, cy) where grad(phi_i) = (bx[:, i], cy[:, i]).
    """
    p = mesh.coords[mesh.triangles]  # (T, 3, 2)
    x, y = p[..., 0], p[..., 1]
    det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    area = 0.5 * det
    bx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1) / det[:, None]
    cy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1) / det[:, None]
    return area, bx, cy


def assemble_laplace(mesh: Mesh) -> sp.csr_matrix:
    """P1 stiffness matrix of the Laplace operator."""
    area, bx, cy = _gradients(mesh)
    ke = area[:, None, None] * (
        bx[:, :, None] * bx[:, None, :] + cy[:, :, None] * cy[:, None, :]
    )
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    k = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes))
    return k.tocsr()


def _solve_with_dirichlet(
    k: sp.csr_matrix,
    rhs: np.ndarray,
    fixed: np.ndarray,
    fixed_values: np.ndarray,
    tol: float,
    max_iter: int | None,
) -> np.ndarray:
    n = k.shape[0]
    free = np.setdiff1d(np.arange(n), fixed, assume_unique=False)
    full = np.zeros(n)
    full[fixed] = fixed_values
    reduced_rhs = rhs[free] - k[free][:, fixed] @ fixed_values
    kff = k[free][:, free].tocsr()
    full[free] = conjugate_gradient(kff, reduced_rhs, tol=tol, max_iter=max_iter)
    return full


def solve_temperature(
    mesh: Mesh,
    outer_value: float = 1.0,
    cavity_value: float = 0.0,
    dirichlet: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
    tol: float = 1e-10,
    max_iter: int | None = None,
) -> np.ndarray:
    """Nodal temperature solving the Laplace equation with Dirichlet data.

    By default the outer boundary is held at ``outer_value`` and the
    cavity at ``cavity_value``; passing ``dirichlet`` (a function of the
    node coordinates) overrides both, which is how manufactured harmonic
    cases are imposed.
    """
    k = assemble_laplace(mesh)
    fixed = mesh.boundary_nodes
    if dirichlet is not None:
        xy = mesh.coords[fixed]
        values = np.asarray(dirichlet(xy[:, 0], xy[:, 1]), dtype=float)
    else:
        values = np.concatenate(
            [
                np.full(len(mesh.outer_nodes), float(outer_value)),
                np.full(len(mesh.cavity_nodes), float(cavity_value)),
            ]
        )
        fixed = np.concatenate([mesh.outer_nodes, mesh.cavity_nodes])
    return _solve_with_dirichlet(k, np.zeros(mesh.n_nodes), fixed, values, tol, max_iter)


def constitutive_matrix(nu: float) -> np.ndarray:
    """Plane-stress matrix with the modulus normalized to 1 + nu."""
    return np.array(
        [
            [1.0 / (1.0 - nu), nu / (1.0 - nu), 0.0],
            [nu / (1.0 - nu), 1.0 / (1.0 - nu), 0.0],
            [0.0, 0.0, 0.5],
        ]
    )


def assemble_plane_stress(mesh: Mesh, mat: Material) -> sp.csr_matrix:
    """Stiffness of the normalized plane-stress operator, 2 dofs per node
    interleaved as (u0, v0, u1, v1, ...)."""
    area, bx, cy = _gradients(mesh)
    n_tri = len(mesh.triangles)
    c = constitutive_matrix(mat.nu)
    b = np.zeros((n_tri, 3, 6))
    b[:, 0, 0::2] = bx
    b[:, 1, 1::2] = cy
    b[:, 2, 0::2] = cy
    b[:, 2, 1::2] = bx
    ke = area[:, None, None] * np.einsum("tia,ij,tjb->tab", b, c, b)
    dofs = np.empty((n_tri, 6), dtype=np.intp)
    dofs[:, 0::2] = 2 * mesh.triangles
    dofs[:, 1::2] = 2 * mesh.triangles + 1
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    n = 2 * mesh.n_nodes
    return sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def thermal_load(mesh: Mesh, temperature: np.ndarray, mat: Material) -> np.ndarray:
    """Load vector of the thermal stress alpha/(1-nu) * T * [1, 1, 0].

    T is P1 and the strain-displacement matrix is constant per element, so
    centroid evaluation integrates the product exactly.
    """
    area, bx, cy = _gradients(mesh)
    coeff = mat.alpha / (1.0 - mat.nu)
    t_bar = temperature[mesh.triangles].mean(axis=1)
    scale = coeff * t_bar * area
    fe = np.zeros((len(mesh.triangles), 6))
    fe[:, 0::2] = bx * scale[:, None]
    fe[:, 1::2] = cy * scale[:, None]
    f = np.zeros(2 * mesh.n_nodes)
    np.add.at(f, 2 * mesh.triangles, fe[:, 0::2])
    np.add.at(f, 2 * mesh.triangles + 1, fe[:, 1::2])
    return f


def body_force_load(
    mesh: Mesh, force: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]
) -> np.ndarray:
    """Consistent load for a smooth body force, edge-midpoint quadrature
    (degree-2 exact, enough to preserve O(h^2) convergence)."""
    p = mesh.coords[mesh.triangles]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    area = np.abs(0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]))
    mids = 0.5 * (p + np.roll(p, -1, axis=1))  # midpoints of edges (0-1, 1-2, 2-0)
    # P1 shape values at the three midpoints
    shape = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
    fx, fy = force(mids[..., 0], mids[..., 1])
    w = area[:, None] / 3.0
    fe_x = w * np.einsum("tq,qi->ti", np.asarray(fx, float), shape)
    fe_y = w * np.einsum("tq,qi->ti", np.asarray(fy, float), shape)
    f = np.zeros(2 * mesh.n_nodes)
    np.add.at(f, 2 * mesh.triangles, fe_x)
    np.add.at(f, 2 * mesh.triangles + 1, fe_y)
    return f


def solve_plane_stress(
    mesh: Mesh,
    temperature: np.ndarray,
    mat: Material,
    body_force: Callable | None = None,
    dirichlet: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None,
    tol: float = 1e-10,
    max_iter: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Nodal displacements (u, v) under the given nodal temperature.

    Boundary conditions are zero displacement on every boundary node unless
    ``dirichlet`` supplies values (manufactured verification cases).  An
    optional ``body_force`` (x, y) -> (fx, fy) is added to the thermal load.
    """
    if len(temperature) != mesh.n_nodes:
        raise ValueError(
            f"temperature field has {len(temperature)} entries for {mesh.n_nodes} nodes"
        )
    k = assemble_plane_stress(mesh, mat)
    f = thermal_load(mesh, temperature, mat)
    if body_force is not None:
        f += body_force_load(mesh, body_force)
    bnodes = mesh.boundary_nodes
    fixed = np.concatenate([2 * bnodes, 2 * bnodes + 1])
    if dirichlet is not None:
        xy = mesh.coords[bnodes]
        ub, vb = dirichlet(xy[:, 0], xy[:, 1])
        fixed_values = np.concatenate([np.asarray(ub, float), np.asarray(vb, float)])
    else:
        fixed_values = np.zeros(len(fixed))
    solution = _solve_with_dirichlet(k, f, fixed, fixed_values, tol, max_iter)
    return solution[0::2], solution[1::2]


def temperature_gradients(mesh: Mesh, temperature: np.ndarray) -> np.ndarray:
    """Per-triangle constant gradient of a nodal field, shape (T, 2)."""
    _, bx, cy = _gradients(mesh)
    t = temperature[mesh.triangles]
    return np.stack([(t * bx).sum(axis=1), (t * cy).sum(axis=1)], axis=1)
