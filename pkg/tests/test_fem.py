import numpy as np
import pytest

from pipn.geometry import DomainSpec
from pipn.oracle import (
    Material,
    SolverError,
    assemble_laplace,
    assemble_plane_stress,
    build_mesh,
    conjugate_gradient,
    manufactured_case,
    solve_plane_stress,
    solve_temperature,
)


@pytest.fixture(scope="module")
def mesh(hexagon_spec):
    return build_mesh(hexagon_spec, 64, 16)


class TestMaterial:
    def test_defaults(self):
        mat = Material()
        assert mat.nu == 0.3 and mat.alpha == 1.0

    @pytest.mark.parametrize("nu", [-0.1, 0.0, 0.5, 0.7])
    def test_poisson_range(self, nu):
        with pytest.raises(ValueError):
            Material(nu=nu)

    def test_alpha_positive(self):
        with pytest.raises(ValueError):
            Material(alpha=0.0)


class TestTemperature:
    def test_constant_dirichlet_gives_constant_field(self, mesh):
        T = solve_temperature(mesh, outer_value=0.7, cavity_value=0.7)
        assert np.abs(T - 0.7).max() < 1e-8

    def test_standard_problem_bounds(self, mesh):
        T = solve_temperature(mesh)
        assert np.abs(T[mesh.cavity_nodes]).max() == 0.0
        assert np.abs(T[mesh.outer_nodes] - 1.0).max() == 0.0
        assert T.min() >= -1e-9 and T.max() <= 1.0 + 1e-9  # discrete maximum principle

    def test_manufactured_harmonic_converges(self, hexagon_spec):
        errs = []
        for n_ring, n_layers in [(32, 8), (64, 16)]:
            m = build_mesh(hexagon_spec, n_ring, n_layers)
            T = solve_temperature(m, dirichlet=lambda x, y: x**2 - y**2)
            exact = m.coords[:, 0] ** 2 - m.coords[:, 1] ** 2
            errs.append(np.abs(T - exact).max())
        assert errs[0] / errs[1] > 3.0  # ~O(h^2) in the nodal max norm


class TestPlaneStress:
    def test_zero_temperature_zero_displacement(self, mesh):
        u, v = solve_plane_stress(mesh, np.zeros(mesh.n_nodes), Material())
        assert np.abs(u).max() == 0.0 and np.abs(v).max() == 0.0

    def test_uniform_temperature_zero_displacement(self, mesh):
        # constant thermal stress is divergence-free, so clamped boundaries
        # leave the interior unmoved
        u, v = solve_plane_stress(mesh, np.ones(mesh.n_nodes), Material())
        assert max(np.abs(u).max(), np.abs(v).max()) < 1e-10

    def test_field_size_mismatch(self, mesh):
        with pytest.raises(ValueError):
            solve_plane_stress(mesh, np.zeros(3), Material())

    def test_manufactured_converges(self, hexagon_spec):
        mat = Material()
        case = manufactured_case("trigonometric", mat)
        errs = []
        for n_ring, n_layers in [(32, 8), (64, 16)]:
            m = build_mesh(hexagon_spec, n_ring, n_layers)
            x, y = m.coords[:, 0], m.coords[:, 1]
            u, v = solve_plane_stress(
                m,
                case.temperature(x, y),
                mat,
                body_force=case.forcing,
                dirichlet=case.displacement,
            )
            ue, ve = case.displacement(x, y)
            errs.append(np.sqrt(np.mean((u - ue) ** 2 + (v - ve) ** 2)))
        assert errs[0] / errs[1] > 3.0

    def test_quarter_turn_symmetry(self):
        # a square cavity rotated 90 degrees is the same domain; the mesh
        # construction maps node-for-node, so the solution must rotate too
        mat = Material()
        a = DomainSpec(4, 0.35, 13.0, 2.0)
        b = DomainSpec(4, 0.35, 103.0, 2.0)
        mesh_a = build_mesh(a, 48, 12)
        mesh_b = build_mesh(b, 48, 12)
        rot = np.array([[0.0, -1.0], [1.0, 0.0]])
        assert np.abs(mesh_b.coords - mesh_a.coords @ rot.T).max() < 1e-12
        ua, va = solve_plane_stress(mesh_a, solve_temperature(mesh_a), mat)
        ub, vb = solve_plane_stress(mesh_b, solve_temperature(mesh_b), mat)
        # (u, v) rotates like a vector: expected_b = R (ua, va)
        assert np.abs(ub - (-va)).max() < 1e-8
        assert np.abs(vb - ua).max() < 1e-8

    def test_standard_problem_magnitude(self, mesh):
        T = solve_temperature(mesh)
        u, v = solve_plane_stress(mesh, T, Material())
        assert 0.01 < np.abs(u).max() < 0.5  # meters, well inside (-1, 1)


class TestSolverProperties:
    def test_stiffness_symmetric(self, mesh):
        for k in (assemble_laplace(mesh), assemble_plane_stress(mesh, Material())):
            asym = np.abs((k - k.T).data).max() if (k - k.T).nnz else 0.0
            assert asym <= 1e-12 * np.abs(k.data).max()

    def test_cg_reports_nonconvergence(self):
        import scipy.sparse as sp

        n = 400
        laplacian_1d = sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(n, n)).tocsr()
        with pytest.raises(SolverError, match="relative residual"):
            conjugate_gradient(laplacian_1d, np.ones(n), max_iter=3)

    def test_cg_zero_rhs(self, mesh):
        k = assemble_laplace(mesh)
        assert np.all(conjugate_gradient(k, np.zeros(k.shape[0])) == 0.0)
