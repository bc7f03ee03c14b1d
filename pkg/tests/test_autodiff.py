import numpy as np
import pytest

from pipn.autodiff import (
    DXY,
    VAL,
    Jet2,
    Layer,
    ParamStore,
    Tape,
    affine_shared_forward,
    concat,
    finite_difference_probe,
    pool,
    tanh_jet,
)
from pipn.model import ArchDescriptor, build_pipn

from conftest import fd_output_jets, slot_errors


def random_jets(rng, n, c):
    return Jet2(rng.normal(0.0, 1.0, (6, n, c)))


class TestAffine:
    def test_identity_layer_passes_jets_through(self):
        rng = np.random.default_rng(0)
        jets = random_jets(rng, 7, 3)
        layer = Layer(weight=np.eye(3), bias=np.zeros(3))
        out = affine_shared_forward(layer, jets)
        assert np.array_equal(out.data, jets.data)

    def test_bias_shifts_only_values(self):
        rng = np.random.default_rng(1)
        jets = random_jets(rng, 5, 3)
        bias = np.array([0.5, -1.0, 2.0])
        layer = Layer(weight=np.eye(3), bias=bias)
        out = affine_shared_forward(layer, jets)
        assert np.allclose(out.val, jets.val + bias)
        assert np.array_equal(out.data[1:], jets.data[1:])

    def test_first_derivative_is_weight_column(self):
        rng = np.random.default_rng(2)
        w = rng.normal(0, 1, (4, 2))
        layer = Layer(weight=w, bias=rng.normal(0, 1, 4))
        coords = rng.uniform(-1, 1, (6, 2))
        out = affine_shared_forward(layer, Jet2.seed_coords(coords))
        assert np.allclose(out.d_x, np.broadcast_to(w[:, 0], (6, 4)))
        assert np.allclose(out.d_y, np.broadcast_to(w[:, 1], (6, 4)))
        # and against the numeric probe
        probe = finite_difference_probe(
            lambda x, y: w @ np.array([x, y]) + layer.bias, coords[0], 1e-4
        )
        rel = np.abs(out.d_x[0] - probe.d_x) / np.maximum(np.abs(probe.d_x), 1e-6)
        assert rel.max() < 1e-6

    def test_shape_mismatch(self):
        layer = Layer(weight=np.eye(3), bias=np.zeros(3))
        with pytest.raises(ValueError, match="input channels"):
            affine_shared_forward(layer, Jet2.zeros((4, 2)))

    def test_inconsistent_layer_rejected(self):
        with pytest.raises(ValueError):
            Layer(weight=np.eye(3), bias=np.zeros(2))


class TestTanh:
    def test_origin_jet(self):
        jets = Jet2.from_slots(val=np.zeros(1), d_x=np.ones(1))
        out = tanh_jet(jets)
        assert out.val[0] == 0.0
        assert out.d_x[0] == 1.0
        assert out.d_xx[0] == 0.0

    def test_value_at_one(self):
        out = tanh_jet(Jet2.from_slots(val=np.ones(1)))
        assert out.val[0] == pytest.approx(0.7615941559557649, abs=1e-15)

    def test_composed_second_derivative_vs_probe(self):
        rng = np.random.default_rng(3)
        w = rng.normal(0, 0.8, (3, 2))
        b = rng.normal(0, 0.3, 3)
        layer = Layer(weight=w, bias=b)
        point = np.array([0.37, -0.9])
        out = tanh_jet(affine_shared_forward(layer, Jet2.seed_coords(point[None, :])))
        probe = finite_difference_probe(
            lambda x, y: np.tanh(w @ np.array([x, y]) + b), point, 1e-3
        )
        for k in range(6):
            rel = np.abs(out.data[k, 0] - probe.data[k]) / np.maximum(
                np.abs(probe.data[k]), 1e-6
            )
            assert rel.max() < 1e-5


class TestPool:
    def test_identical_features_idempotent(self):
        jets = Jet2(np.tile(np.random.default_rng(4).normal(0, 1, (6, 1, 5)), (1, 8, 1)))
        for kind in ("max", "average"):
            out, _ = pool(jets, kind)
            assert np.allclose(out.val, jets.val)

    def test_single_point_identity(self):
        jets = random_jets(np.random.default_rng(5), 1, 4)
        for kind in ("max", "average"):
            out, _ = pool(jets, kind)
            assert np.allclose(out.data, jets.data)

    def test_tie_breaks_to_lowest_index(self):
        data = np.zeros((6, 10, 1))
        data[VAL, 3, 0] = 7.0
        data[VAL, 7, 0] = 7.0
        _, record = pool(Jet2(data), "max")
        assert record.winners[0] == 3

    def test_average_derivative_rows_are_own_over_n(self):
        rng = np.random.default_rng(6)
        jets = random_jets(rng, 4, 3)
        out, _ = pool(jets, "average")
        assert np.allclose(out.data[1:], jets.data[1:] / 4)
        assert np.allclose(out.val, np.broadcast_to(jets.val.mean(axis=0), (4, 3)))

    def test_max_nonwinner_rows_zero(self):
        rng = np.random.default_rng(7)
        jets = random_jets(rng, 5, 3)
        out, record = pool(jets, "max")
        mask = np.ones((5, 3), dtype=bool)
        mask[record.winners, np.arange(3)] = False
        assert np.all(out.data[1:, mask] == 0.0)

    def test_empty_and_bad_kind(self):
        with pytest.raises(ValueError):
            pool(Jet2.zeros((0, 3)), "max")
        with pytest.raises(ValueError):
            pool(Jet2.zeros((3, 3)), "median")


class TestConcat:
    def test_width_adds(self):
        a = Jet2.zeros((5, 3))
        b = Jet2.zeros((5, 7))
        assert concat(a, b).shape == (5, 10)

    def test_mismatched_points_rejected(self):
        with pytest.raises(ValueError):
            concat(Jet2.zeros((5, 3)), Jet2.zeros((4, 3)))

    def test_average_pool_halves_own_derivative(self):
        # two points, global channel derivative of each point is half its own
        # pre-pool derivative; verified against the numeric probe
        rng = np.random.default_rng(8)
        w = rng.normal(0, 0.7, (3, 2))
        layer = Layer(weight=w, bias=np.zeros(3))
        coords = rng.uniform(-1, 1, (2, 2))

        def network(c):
            h = tanh_jet(affine_shared_forward(layer, Jet2.seed_coords(c)))
            pooled, _ = pool(h, "average")
            return concat(h, pooled)

        out = network(coords)
        step = 1e-4
        for j in range(2):
            def global_channel(x, y):
                c = coords.copy()
                c[j] = (x, y)
                return network(c).val[j, 3:]

            probe = finite_difference_probe(global_channel, coords[j], step)
            assert np.abs(out.d_x[j, 3:] - probe.d_x).max() < 1e-6
            h = tanh_jet(affine_shared_forward(layer, Jet2.seed_coords(coords)))
            assert np.allclose(out.d_x[j, 3:], h.d_x[j] / 2)


class TestBackward:
    def test_bias_gradient_counts_points(self):
        n = 9
        layer = Layer(weight=np.eye(2), bias=np.zeros(2))
        tape = Tape()
        out = affine_shared_forward(layer, Jet2.seed_coords(np.random.rand(n, 2)), tape)
        seed = np.zeros_like(out.data)
        seed[VAL] = 1.0  # loss = sum of output values
        tape.backward(out, seed)
        assert np.allclose(layer.grad_bias, n)

    def test_zero_seed_zero_gradients(self):
        model = build_pipn(ArchDescriptor(n_s=1 / 64), seed=1)
        jets, tape = model.forward(np.random.default_rng(0).uniform(-1, 1, (5, 2)), record=True)
        tape.backward(jets, np.zeros_like(jets.data))
        for layer in model.params.layers:
            assert np.all(layer.grad_weight == 0.0)
            assert np.all(layer.grad_bias == 0.0)

    def test_repeated_backward_rejected(self):
        model = build_pipn(ArchDescriptor(n_s=1 / 64), seed=1)
        jets, tape = model.forward(np.random.rand(4, 2), record=True)
        tape.backward(jets, np.zeros_like(jets.data))
        with pytest.raises(RuntimeError, match="already consumed"):
            tape.backward(jets, np.zeros_like(jets.data))

    def test_backward_without_forward_rejected(self):
        with pytest.raises(RuntimeError, match="without a recorded forward"):
            Tape().backward(Jet2.zeros((3, 2)), np.zeros((6, 3, 2)))

    def test_foreign_root_rejected(self):
        model = build_pipn(ArchDescriptor(n_s=1 / 64), seed=1)
        _, tape = model.forward(np.random.rand(4, 2), record=True)
        stranger = Jet2.zeros((4, 2))
        with pytest.raises(RuntimeError, match="not produced by this tape"):
            tape.backward(stranger, np.zeros((6, 4, 2)))

    def test_gradients_deterministic(self):
        coords = np.random.default_rng(3).uniform(-1, 1, (6, 2))
        grads = []
        for _ in range(2):
            model = build_pipn(ArchDescriptor(n_s=1 / 64, pooling="max"), seed=2)
            jets, tape = model.forward(coords, record=True)
            seed = np.ones_like(jets.data)
            tape.backward(jets, seed)
            grads.append([l.grad_weight.copy() for l in model.params.layers])
        for a, b in zip(*grads):
            assert np.array_equal(a, b)


class TestJetProperties:
    def test_affine_chain_keeps_second_derivatives_zero(self):
        # polynomial exactness: without nonlinearities, coordinates stay
        # degree-1 so all second-derivative slots remain identically zero
        rng = np.random.default_rng(9)
        h = Jet2.seed_coords(rng.uniform(-1, 1, (8, 2)))
        for dims in ((2, 5), (5, 3), (3, 4)):
            layer = Layer(weight=rng.normal(0, 1, dims[::-1]), bias=rng.normal(0, 1, dims[1]))
            h = affine_shared_forward(layer, h)
        assert np.all(h.data[3:] == 0.0)

    def test_mixed_derivative_symmetry_via_swapped_inputs(self):
        # swapping the input columns of the first layer swaps the roles of x
        # and y; d_xy of the swapped run must equal d_yx == d_xy of the original
        rng = np.random.default_rng(10)
        model = build_pipn(ArchDescriptor(n_s=1 / 64, pooling="average"), seed=4)
        coords = rng.uniform(-1, 1, (6, 2))
        jets, _ = model.forward(coords)

        first = model.params.layers[0]
        first.weight[:] = first.weight[:, ::-1]
        swapped, _ = model.forward(coords[:, ::-1])
        assert np.abs(swapped.data[DXY] - jets.data[DXY]).max() < 1e-14

    def test_full_network_jets_match_probe(self):
        for case, pooling in ((0, "max"), (1, "average")):
            model = build_pipn(ArchDescriptor(n_s=1 / 64, pooling=pooling), seed=100 + case)
            rng = np.random.default_rng(case)
            coords = rng.uniform(-0.9, 0.9, (6, 2))
            jets, _ = model.forward(coords)
            fd = fd_output_jets(model, coords, 1e-3)
            assert max(slot_errors(jets.data, fd)) < 1e-4


class TestProbe:
    def test_quadratic(self):
        probe = finite_difference_probe(lambda x, y: x**2, (3.0, 0.0), 1e-4)
        assert probe.d_x == pytest.approx(6.0, abs=1e-7)
        assert probe.d_xx == pytest.approx(2.0, abs=1e-4)

    def test_sine(self):
        probe = finite_difference_probe(lambda x, y: np.sin(x), (0.0, 0.0), 1e-5)
        assert probe.d_x == pytest.approx(1.0, abs=1e-9)

    def test_mixed_bilinear(self):
        probe = finite_difference_probe(lambda x, y: x * y, (0.3, -0.7), 1e-4)
        assert probe.d_xy == pytest.approx(1.0, abs=1e-8)

    def test_step_must_be_positive(self):
        with pytest.raises(ValueError):
            finite_difference_probe(lambda x, y: x, (0.0, 0.0), 0.0)


class TestParamStore:
    def test_zero_grad_and_count(self):
        layers = [
            Layer(weight=np.ones((3, 2)), bias=np.ones(3)),
            Layer(weight=np.ones((1, 3)), bias=np.ones(1)),
        ]
        store = ParamStore(layers)
        assert store.n_parameters() == (6 + 3) + (3 + 1)
        store.layers[0].grad_weight += 5.0
        store.zero_grad()
        assert np.all(store.layers[0].grad_weight == 0.0)

    def test_jet_requires_six_slots(self):
        with pytest.raises(ValueError):
            Jet2(np.zeros((5, 3, 2)))
