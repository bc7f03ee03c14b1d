"""Second-order forward jets with reverse-mode parameter gradients.

Every quantity flowing through the network is an order-2 jet: its value
together with exact first and second partial derivatives with respect to
the two spatial inputs of the *owning* point.  Because the input dimension
is fixed at two, carrying the six slots (val, d_x, d_y, d_xx, d_yy, d_xy)
costs a small constant factor and avoids nested reverse-mode entirely.

Parameter gradients of any scalar built from the output jets are obtained
by reverse mode *over the jet program*: each forward operation records a
closure on a :class:`Tape`, and the backward pass propagates cotangents
for all six slots, so losses may freely consume first and second input
derivatives.

Pooling semantics: the pooled "global" feature is represented as a
per-point jet whose value rows are identical while the derivative rows of
point ``j`` hold the derivative of the pooled value with respect to point
``j``'s own coordinates.  For max pooling that is the winning point's
derivatives on its own row and zero elsewhere (fixed-winner subgradient,
lowest index on ties); for average pooling it is the point's own
derivatives divided by N.  Concatenating this onto the per-point local
feature is exactly what makes output derivatives depend on the global
feature.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

SLOT_NAMES = ("val", "d_x", "d_y", "d_xx", "d_yy", "d_xy")
VAL, DX, DY, DXX, DYY, DXY = range(6)

POOL_MAX = "max"
POOL_AVERAGE = "average"


@njit(cache=True)
def _tanh_forward_kernel(z, out):
    """Single-pass jet propagation through tanh; z and out are (6, M) flat."""
    for i in range(z.shape[1]):
        t = np.tanh(z[0, i])
        s1 = 1.0 - t * t
        s2 = -2.0 * t * s1
        zx, zy = z[1, i], z[2, i]
        out[0, i] = t
        out[1, i] = s1 * zx
        out[2, i] = s1 * zy
        out[3, i] = s2 * zx * zx + s1 * z[3, i]
        out[4, i] = s2 * zy * zy + s1 * z[4, i]
        out[5, i] = s2 * zx * zy + s1 * z[5, i]


@njit(cache=True)
def _tanh_backward_kernel(t_row, z, g, gi):
    """Single-pass cotangent propagation through the tanh jet rules.

    ``t_row`` is the forward pass's tanh values, avoiding a recompute.
    """
    for i in range(z.shape[1]):
        t = t_row[i]
        s1 = 1.0 - t * t
        s2 = -2.0 * t * s1
        s3 = -2.0 * (s1 * s1 + t * s2)
        zx, zy = z[1, i], z[2, i]
        g0, g1, g2 = g[0, i], g[1, i], g[2, i]
        g3, g4, g5 = g[3, i], g[4, i], g[5, i]
        gi[0, i] = (
            g0 * s1
            + g1 * s2 * zx
            + g2 * s2 * zy
            + g3 * (s3 * zx * zx + s2 * z[3, i])
            + g4 * (s3 * zy * zy + s2 * z[4, i])
            + g5 * (s3 * zx * zy + s2 * z[5, i])
        )
        gi[1, i] = g1 * s1 + 2.0 * g3 * s2 * zx + g5 * s2 * zy
        gi[2, i] = g2 * s1 + 2.0 * g4 * s2 * zy + g5 * s2 * zx
        gi[3, i] = g3 * s1
        gi[4, i] = g4 * s1
        gi[5, i] = g5 * s1


class Jet2:
    """A stack of order-2 jets: array of shape (6, *shape).

    Axis 0 indexes the slots (val, d_x, d_y, d_xx, d_yy, d_xy); the single
    stored mixed slot d_xy relies on symmetry of second derivatives.
    Network code uses shape (6, N, C) for N points with C channels.
    """

    __slots__ = ("data",)

    def __init__(self, data: np.ndarray):
        data = np.asarray(data, dtype=np.float64)
        if data.shape[0] != 6:
            raise ValueError(f"jet data must have leading axis 6, got shape {data.shape}")
        self.data = data

    @classmethod
    def zeros(cls, shape) -> "Jet2":
        return cls(np.zeros((6, *shape)))

    @classmethod
    def from_slots(cls, val, d_x=0.0, d_y=0.0, d_xx=0.0, d_yy=0.0, d_xy=0.0) -> "Jet2":
        val = np.asarray(val, dtype=np.float64)
        out = np.zeros((6, *val.shape))
        for i, s in enumerate((val, d_x, d_y, d_xx, d_yy, d_xy)):
            out[i] = s
        return cls(out)

    @classmethod
    def seed_coords(cls, coords: np.ndarray) -> "Jet2":
        """Input jets for raw (x, y) coordinates, shape (6, ..., 2).

        Values are the coordinates; the first-derivative slots carry the
        identity seeds d(x)/dx = 1, d(y)/dy = 1; all second derivatives
        are zero.  Leading axes (e.g. a geometry batch) pass through.
        """
        coords = np.asarray(coords, dtype=np.float64)
        data = np.zeros((6, *coords.shape))
        data[VAL] = coords
        data[DX, ..., 0] = 1.0
        data[DY, ..., 1] = 1.0
        return cls(data)

    @property
    def val(self) -> np.ndarray:
        return self.data[VAL]

    @property
    def d_x(self) -> np.ndarray:
        return self.data[DX]

    @property
    def d_y(self) -> np.ndarray:
        return self.data[DY]

    @property
    def d_xx(self) -> np.ndarray:
        return self.data[DXX]

    @property
    def d_yy(self) -> np.ndarray:
        return self.data[DYY]

    @property
    def d_xy(self) -> np.ndarray:
        return self.data[DXY]

    @property
    def shape(self):
        return self.data.shape[1:]

    def copy(self) -> "Jet2":
        return Jet2(self.data.copy())


@dataclass
class Layer:
    """One shared affine layer: the same weight/bias applied to every point."""

    weight: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)
    name: str = ""
    grad_weight: np.ndarray = field(init=False)
    grad_bias: np.ndarray = field(init=False)

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.shape[0] != self.bias.shape[0]:
            raise ValueError(
                f"layer {self.name!r}: weight rows {self.weight.shape[0]} "
                f"!= bias size {self.bias.shape[0]}"
            )
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]


class ParamStore:
    """Ordered shared layers with their gradient accumulators."""

    def __init__(self, layers: list[Layer]):
        self.layers = list(layers)

    def __iter__(self):
        return iter(self.layers)

    def __len__(self):
        return len(self.layers)

    def __getitem__(self, i) -> Layer:
        return self.layers[i]

    def zero_grad(self) -> None:
        for layer in self.layers:
            layer.grad_weight[:] = 0.0
            layer.grad_bias[:] = 0.0

    def n_parameters(self) -> int:
        return sum(l.weight.size + l.bias.size for l in self.layers)

    def grads(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(l.grad_weight, l.grad_bias) for l in self.layers]


@dataclass
class PoolRecord:
    """What the pooling forward pass stored for the backward pass."""

    kind: str
    winners: np.ndarray | None = None  # (C,) point index per channel, max pooling only
    n_points: int = 0


class Tape:
    """Recorded forward operations, replayed in reverse for gradients.

    Cotangents are full jet-shaped arrays: the loss may depend on any of
    the six slots of any recorded jet.  Accumulation order is the fixed
    reverse execution order, so gradients are bitwise reproducible.
    """

    def __init__(self):
        self._ops: list = []
        self._produced: set[int] = set()
        self._consumed = False

    def _record(self, out: Jet2, backward_fn) -> None:
        self._produced.add(id(out))
        self._ops.append((out, backward_fn))

    def backward(self, root: Jet2, seed: np.ndarray) -> None:
        """Propagate the cotangent ``seed`` (shape (6, *root.shape)) to all
        recorded layers' gradient accumulators."""
        if self._consumed:
            raise RuntimeError("tape already consumed; run a new forward pass before backward")
        if not self._ops:
            raise RuntimeError("backward called without a recorded forward pass")
        if id(root) not in self._produced:
            raise RuntimeError("root jet was not produced by this tape")
        seed = np.asarray(seed, dtype=np.float64)
        if seed.shape != root.data.shape:
            raise ValueError(f"seed shape {seed.shape} != root jet shape {root.data.shape}")
        cot: dict[int, np.ndarray] = {id(root): seed.copy()}
        for out, backward_fn in reversed(self._ops):
            g = cot.pop(id(out), None)
            if g is not None:
                backward_fn(g, cot)
        self._consumed = True


def _accumulate(cot: dict, node: Jet2, value: np.ndarray) -> None:
    key = id(node)
    if key in cot:
        cot[key] += value
    else:
        cot[key] = value


def affine_shared_forward(layer: Layer, jets: Jet2, tape: Tape | None = None) -> Jet2:
    """Apply the shared affine map to every point's jet.

    Values map through W x + b; every derivative slot maps through W alone
    (the bias is constant).  All six slots go through a single flat matmul.
    """
    data = jets.data
    if data.shape[-1] != layer.in_dim:
        raise ValueError(
            f"layer {layer.name!r} expects {layer.in_dim} input channels, "
            f"got {data.shape[-1]}"
        )
    shape = data.shape
    flat_in = np.ascontiguousarray(data).reshape(-1, layer.in_dim)
    out_data = (flat_in @ layer.weight.T).reshape(*shape[:-1], layer.out_dim)
    out_data[VAL] += layer.bias
    out = Jet2(out_data)

    if tape is not None:
        in_jets = jets

        def _backward(g: np.ndarray, cot: dict) -> None:
            # weight gradient sums over all slots and points; bias only over values
            flat_g = np.ascontiguousarray(g).reshape(-1, layer.out_dim)
            layer.grad_weight += flat_g.T @ flat_in
            layer.grad_bias += g[VAL].reshape(-1, layer.out_dim).sum(axis=0)
            _accumulate(cot, in_jets, (flat_g @ layer.weight).reshape(shape))

        tape._record(out, _backward)
    return out


def tanh_jet(jets: Jet2, tape: Tape | None = None) -> Jet2:
    """Elementwise hyperbolic tangent pushed through the jet slots.

    With t = tanh(z), s1 = 1 - t^2 and s2 = -2 t s1 the chain rule gives
        out.d_x  = s1 z_x
        out.d_xx = s2 z_x^2 + s1 z_xx
        out.d_xy = s2 z_x z_y + s1 z_xy
    and analogously for the y slots.
    """
    z = jets.data
    flat_z = np.ascontiguousarray(z).reshape(6, -1)
    out_data = np.empty(z.shape)  # C order, so the flat view aliases it
    flat_out = out_data.reshape(6, -1)
    _tanh_forward_kernel(flat_z, flat_out)
    out = Jet2(out_data)

    if tape is not None:
        in_jets = jets
        t_row = flat_out[0]

        def _backward(g: np.ndarray, cot: dict) -> None:
            gi = np.empty(g.shape)
            _tanh_backward_kernel(
                t_row, flat_z, np.ascontiguousarray(g).reshape(6, -1), gi.reshape(6, -1)
            )
            _accumulate(cot, in_jets, gi)

        tape._record(out, _backward)
    return out


def pool(jets: Jet2, kind: str, tape: Tape | None = None) -> tuple[Jet2, PoolRecord]:
    """Symmetric pooling over points, returned as a per-point jet.

    Jets are (6, ..., N, C); pooling reduces the point axis (second from
    last) independently for any leading batch axes.  The value rows of the
    result are all equal to the pooled value.  The derivative rows of
    point j hold d(pooled)/d(point j's inputs): for ``max`` only the
    winning point's row is nonzero (ties break to the lowest point index);
    for ``average`` every row is the point's own derivative divided by N.
    """
    data = jets.data
    if data.ndim < 3:
        raise ValueError("pool expects jets of shape (6, ..., N, C)")
    n = data.shape[-2]
    if n < 1:
        raise ValueError("cannot pool an empty point set")

    if kind == POOL_AVERAGE:
        out_data = data / n
        out_data[VAL] = np.broadcast_to(data[VAL].mean(axis=-2, keepdims=True), data[VAL].shape)
        record = PoolRecord(kind=kind, n_points=n)
    elif kind == POOL_MAX:
        winners = np.argmax(data[VAL], axis=-2)  # first occurrence = lowest index
        idx = np.expand_dims(winners, axis=-2)  # (..., 1, C)
        out_data = np.zeros(data.shape)
        out_data[VAL] = np.broadcast_to(
            np.take_along_axis(data[VAL], idx, axis=-2), data[VAL].shape
        )
        big_idx = np.broadcast_to(idx, (5, *idx.shape))
        np.put_along_axis(
            out_data[1:], big_idx, np.take_along_axis(data[1:], big_idx, axis=-2), axis=-2
        )
        record = PoolRecord(kind=kind, winners=winners, n_points=n)
    else:
        raise ValueError(f"unknown pooling kind {kind!r}")
    out = Jet2(out_data)

    if tape is not None:
        in_jets = jets

        def _backward(g: np.ndarray, cot: dict) -> None:
            if kind == POOL_AVERAGE:
                gi = g / n
                gi[VAL] = np.broadcast_to(g[VAL].sum(axis=-2, keepdims=True) / n, g[VAL].shape)
            else:
                idx_ = np.expand_dims(winners, axis=-2)
                gi = np.zeros(data.shape)
                np.put_along_axis(
                    gi[VAL], idx_, g[VAL].sum(axis=-2, keepdims=True), axis=-2
                )
                big = np.broadcast_to(idx_, (5, *idx_.shape))
                np.put_along_axis(
                    gi[1:], big, np.take_along_axis(g[1:], big, axis=-2), axis=-2
                )
            _accumulate(cot, in_jets, gi)

        tape._record(out, _backward)
    return out, record


def concat(local: Jet2, global_: Jet2, tape: Tape | None = None) -> Jet2:
    """Concatenate local per-point jets with the broadcast pooled jets."""
    if local.data.shape[:-1] != global_.data.shape[:-1]:
        raise ValueError(
            f"cannot concat jets with point shapes {local.data.shape[:-1]} "
            f"and {global_.data.shape[:-1]}"
        )
    split = local.data.shape[-1]
    out = Jet2(np.concatenate([local.data, global_.data], axis=-1))

    if tape is not None:
        a, b = local, global_

        def _backward(g: np.ndarray, cot: dict) -> None:
            _accumulate(cot, a, g[..., :split].copy())
            _accumulate(cot, b, g[..., split:].copy())

        tape._record(out, _backward)
    return out


def finite_difference_probe(f, point, step: float) -> Jet2:
    """Numeric order-2 jet of ``f`` at ``point`` by central differences.

    ``f`` maps (x, y) to a scalar or array; the mixed derivative uses the
    four-point stencil.  This is the test oracle the analytic jet
    propagation is checked against.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x, y = float(point[0]), float(point[1])
    h = step
    f0 = np.asarray(f(x, y), dtype=np.float64)
    fxp = np.asarray(f(x + h, y), dtype=np.float64)
    fxm = np.asarray(f(x - h, y), dtype=np.float64)
    fyp = np.asarray(f(x, y + h), dtype=np.float64)
    fym = np.asarray(f(x, y - h), dtype=np.float64)
    fpp = np.asarray(f(x + h, y + h), dtype=np.float64)
    fpm = np.asarray(f(x + h, y - h), dtype=np.float64)
    fmp = np.asarray(f(x - h, y + h), dtype=np.float64)
    fmm = np.asarray(f(x - h, y - h), dtype=np.float64)
    return Jet2.from_slots(
        val=f0,
        d_x=(fxp - fxm) / (2 * h),
        d_y=(fyp - fym) / (2 * h),
        d_xx=(fxp - 2 * f0 + fxm) / h**2,
        d_yy=(fyp - 2 * f0 + fym) / h**2,
        d_xy=(fpp - fpm - fmp + fmm) / (4 * h**2),
    )


def glorot_uniform(rng: np.random.Generator, out_dim: int, in_dim: int) -> np.ndarray:
    """Uniform Glorot draw with bound sqrt(6 / (fan_in + fan_out))."""
    bound = np.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-bound, bound, size=(out_dim, in_dim))
