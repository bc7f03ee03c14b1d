"""Point-cloud network: shared-MLP encoders, symmetric pooling, decoders.

The architecture is controlled by a single width multiplier ``n_s``:
encoder stacks of widths (64, 64) and (64, 128, 1024) scaled by ``n_s``,
a max or average pooled global feature, concatenation of the first
encoder's per-point feature with the global feature, then decoder stacks
(512, 256, 128) and (128, n_pde).  Hyperbolic tangent follows every
layer; the output layer's activation is configurable (tanh by default,
which bounds predictions to (-1, 1) — fine for the meter-scale plates
here whose displacements are well below that).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pipn.autodiff import (
    POOL_AVERAGE,
    POOL_MAX,
    Jet2,
    Layer,
    ParamStore,
    Tape,
    affine_shared_forward,
    concat,
    glorot_uniform,
    pool,
    tanh_jet,
)
from pipn.geometry import PointCloud

_ENCODER1 = (64, 64)
_ENCODER2 = (64, 128, 1024)
_DECODER1 = (512, 256, 128)
_DECODER2 = (128,)  # followed by the n_pde output layer

# every base width that gets multiplied by n_s
_SCALED_WIDTHS = sorted(set(_ENCODER1 + _ENCODER2 + _DECODER1 + _DECODER2))

FINAL_TANH = "tanh"
FINAL_LINEAR = "linear"


@dataclass(frozen=True)
class ArchDescriptor:
    """Architecture knobs: width multiplier, pooling, output activation.

    ``n_s`` must make every scaled width a positive integer (e.g. 0.125,
    0.25, 0.5, 1.0, 1.5, 2.0, 2.5, 4.0, or 1/64 for test micro-nets).
    """

    n_s: float = 1.0
    pooling: str = POOL_MAX
    final_activation: str = FINAL_TANH
    input_dim: int = 2
    n_pde: int = 2

    def __post_init__(self):
        if self.pooling not in (POOL_MAX, POOL_AVERAGE):
            raise ValueError(f"pooling must be '{POOL_MAX}' or '{POOL_AVERAGE}'")
        if self.final_activation not in (FINAL_TANH, FINAL_LINEAR):
            raise ValueError(f"final_activation must be '{FINAL_TANH}' or '{FINAL_LINEAR}'")
        for w in _SCALED_WIDTHS:
            if self.scaled(w) < 1:
                raise ValueError(f"n_s={self.n_s} collapses width {w} below 1")

    def scaled(self, width: int) -> int:
        value = self.n_s * width
        rounded = round(value)
        if abs(value - rounded) > 1e-9 or rounded < 1:
            raise ValueError(
                f"n_s={self.n_s} makes width {width} non-integral ({value}); "
                "pick a multiplier that keeps every layer width a positive integer"
            )
        return int(rounded)

    def layer_plan(self) -> list[tuple[str, int, int]]:
        """(name, in_dim, out_dim) for every affine layer, in forward order."""
        plan = []

        def chain(stack: str, widths, d_in: int) -> int:
            for i, w in enumerate(widths):
                plan.append((f"{stack}{i}", d_in, w))
                d_in = w
            return d_in

        d = chain("encoder1_", [self.scaled(w) for w in _ENCODER1], self.input_dim)
        local_width = d
        d = chain("encoder2_", [self.scaled(w) for w in _ENCODER2], d)
        d = chain("decoder1_", [self.scaled(w) for w in _DECODER1], local_width + d)
        d = chain("decoder2_", [self.scaled(w) for w in _DECODER2], d)
        plan.append(("output", d, self.n_pde))
        return plan

    @property
    def concat_width(self) -> int:
        return self.scaled(_ENCODER1[-1]) + self.scaled(_ENCODER2[-1])


@dataclass
class PipnModel:
    """Architecture descriptor plus the shared-layer parameters."""

    arch: ArchDescriptor
    params: ParamStore

    def forward(self, cloud: PointCloud | np.ndarray, record: bool = False):
        """Run the network on one cloud (or a batch); returns (jets, tape).

        Output jets have shape (6, N, n_pde) — channel 0 is the first
        displacement component, channel 1 the second — carrying the exact
        first and second derivatives of each point's outputs with respect
        to that point's own coordinates, including the paths through the
        pooled global feature.  Coordinates of shape (B, N, 2) run B
        same-size clouds in one pass (pooling stays per cloud) and yield
        (6, B, N, n_pde).
        """
        coords = cloud.coords if isinstance(cloud, PointCloud) else np.asarray(cloud, float)
        if coords.ndim not in (2, 3) or coords.shape[-1] != self.arch.input_dim:
            raise ValueError(f"expected coordinates of shape (..., N, {self.arch.input_dim})")
        if coords.shape[-2] < 1:
            raise ValueError("cannot run the network on an empty cloud")
        tape = Tape() if record else None
        layers = self.params.layers
        n_enc1 = len(_ENCODER1)
        n_enc2 = len(_ENCODER2)

        h = Jet2.seed_coords(coords)
        for layer in layers[:n_enc1]:
            h = tanh_jet(affine_shared_forward(layer, h, tape), tape)
        local = h
        for layer in layers[n_enc1 : n_enc1 + n_enc2]:
            h = tanh_jet(affine_shared_forward(layer, h, tape), tape)
        pooled, _ = pool(h, self.arch.pooling, tape)
        h = concat(local, pooled, tape)
        for layer in layers[n_enc1 + n_enc2 : -1]:
            h = tanh_jet(affine_shared_forward(layer, h, tape), tape)
        h = affine_shared_forward(layers[-1], h, tape)
        if self.arch.final_activation == FINAL_TANH:
            h = tanh_jet(h, tape)
        return h, tape

    def predict(self, cloud: PointCloud | np.ndarray) -> np.ndarray:
        """Displacement values only, shape (N, n_pde)."""
        jets, _ = self.forward(cloud, record=False)
        return jets.val.copy()


def build_pipn(arch: ArchDescriptor, seed: int) -> PipnModel:
    """Initialize a model with seeded uniform Glorot weights, zero biases."""
    rng = np.random.default_rng(seed)
    layers = [
        Layer(weight=glorot_uniform(rng, out_dim, in_dim), bias=np.zeros(out_dim), name=name)
        for name, in_dim, out_dim in arch.layer_plan()
    ]
    return PipnModel(arch=arch, params=ParamStore(layers))


def count_parameters(model: PipnModel) -> int:
    """Exact number of weight and bias entries."""
    return model.params.n_parameters()
