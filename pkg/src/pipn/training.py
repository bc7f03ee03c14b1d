"""Residuals, loss weighting schedules, Adam, the mini-batch loop, metrics.

The per-geometry loss combines the mean squared momentum residuals (built
from the output jets' second derivatives and the known temperature
gradient) with the mean squared sensor mismatch, weighted by a fixed
momentum weight of one and a scheduled sensor weight.  Batches are over
geometries: every optimizer step consumes the mean loss of one shuffled
slice of the dataset.  Boundary conditions are deliberately absent from
the loss; the sensor term is the only data anchor.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from pipn.autodiff import DXX, DXY, DYY, VAL, Jet2, ParamStore
from pipn.geometry import PointCloud, SensorSet
from pipn.model import ArchDescriptor, PipnModel, build_pipn
from pipn.oracle.fem import Material

SCHEDULE_KINDS = ("constant_equal", "constant_high", "exp_decay", "log_decay")


@dataclass(frozen=True)
class WeightSchedule:
    """Sensor-weight schedule; the momentum weight is fixed at one.

    constant_equal: 1
    constant_high:  omega0
    exp_decay:      max(omega1 * exp(-epoch / r1), 1)
    log_decay:      max(omega2 * ln(r2 - epoch), 1), argument clamped at 1
    """

    kind: str = "constant_high"
    omega0: float = 50.0
    omega1: float = 50.0
    r1: float = 800.0
    omega2: float = 50.0 / 8.0
    r2: float = 3002.0

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"schedule kind must be one of {SCHEDULE_KINDS}, got {self.kind!r}")
        if self.kind == "constant_high" and not self.omega0 > 1.0:
            raise ValueError(f"constant_high needs omega0 > 1, got {self.omega0}")
        if self.kind == "exp_decay" and not (self.omega1 > 1.0 and self.r1 > 0.0):
            raise ValueError(f"exp_decay needs omega1 > 1 and r1 > 0, got {self.omega1}, {self.r1}")
        if self.kind == "log_decay" and not (self.omega2 > 1.0 and self.r2 > 0.0):
            raise ValueError(f"log_decay needs omega2 > 1 and r2 > 0, got {self.omega2}, {self.r2}")

    def __call__(self, epoch: int) -> float:
        return weight_sensor(self, epoch)


def weight_sensor(schedule: WeightSchedule, epoch: int) -> float:
    """Sensor weight at the given epoch; never drops below one."""
    if epoch < 0:
        raise ValueError(f"epoch must be non-negative, got {epoch}")
    if schedule.kind == "constant_equal":
        return 1.0
    if schedule.kind == "constant_high":
        return float(schedule.omega0)
    if schedule.kind == "exp_decay":
        return float(max(schedule.omega1 * np.exp(-epoch / schedule.r1), 1.0))
    arg = max(schedule.r2 - epoch, 1.0)
    return float(max(schedule.omega2 * np.log(arg), 1.0))


OMEGA_MOMENTUM = 1.0


@dataclass
class ResidualBreakdown:
    """Unweighted loss components of one geometry."""

    j_mom_x: float
    j_mom_y: float
    j_sensor: float
    n_points: int
    n_sensors: int

    def weighted(self, omega_momentum: float, omega_sensor: float) -> float:
        return omega_momentum * (self.j_mom_x + self.j_mom_y) + omega_sensor * self.j_sensor


@dataclass
class GeometrySample:
    """One training example: cloud with oracle fields, sensors, optional
    manufactured forcing values (N, 2)."""

    cloud: PointCloud
    sensors: SensorSet
    forcing: np.ndarray | None = None

    @property
    def n_points(self) -> int:
        return self.cloud.n_points


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run (desk-scale defaults)."""

    n_s: float = 0.5
    pooling: str = "max"
    final_activation: str = "tanh"
    batch_size: int = 4
    epochs: int = 2500
    learning_rate: float = 0.0003
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon_hat: float = 1e-6
    schedule: WeightSchedule = field(default_factory=WeightSchedule)
    seed: int = 0
    dataset_filter: str | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch size must be at least 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be non-negative, got {self.epochs}")

    def arch(self) -> ArchDescriptor:
        return ArchDescriptor(
            n_s=self.n_s, pooling=self.pooling, final_activation=self.final_activation
        )


@dataclass
class AdamState:
    """First/second moment estimates per parameter array, plus the step count."""

    m: list[tuple[np.ndarray, np.ndarray]]
    v: list[tuple[np.ndarray, np.ndarray]]
    t: int = 0

    @classmethod
    def for_params(cls, params: ParamStore) -> "AdamState":
        zeros = lambda: [
            (np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in params.layers
        ]
        return cls(m=zeros(), v=zeros())


@dataclass
class HistoryRow:
    epoch: int
    loss: float
    omega_sensor: float
    seconds: float


def momentum_coefficients(mat: Material) -> tuple[float, float, float]:
    """(a, b, d) = (1/(1-nu), nu/(1-nu), alpha/(1-nu))."""
    return (
        1.0 / (1.0 - mat.nu),
        mat.nu / (1.0 - mat.nu),
        mat.alpha / (1.0 - mat.nu),
    )


def momentum_residual_fields(
    jets: Jet2,
    temp_grad: np.ndarray,
    mat: Material,
    forcing: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise momentum residuals (r_x, r_y), each of shape (N,).

    r_x = -a u_xx - (b + 1/2) v_xy - 1/2 u_yy + d Tx - s_x
    r_y = -a v_yy - (b + 1/2) u_xy - 1/2 v_xx + d Ty - s_y
    """
    a, b, d = momentum_coefficients(mat)
    u, v = jets.data[..., 0], jets.data[..., 1]
    r_x = -a * u[DXX] - (b + 0.5) * v[DXY] - 0.5 * u[DYY] + d * temp_grad[..., 0]
    r_y = -a * v[DYY] - (b + 0.5) * u[DXY] - 0.5 * v[DXX] + d * temp_grad[..., 1]
    if forcing is not None:
        r_x = r_x - forcing[..., 0]
        r_y = r_y - forcing[..., 1]
    return r_x, r_y


def residual_momentum(
    jets: Jet2,
    temp_grad: np.ndarray,
    mat: Material,
    forcing: np.ndarray | None = None,
) -> tuple[float, float]:
    """Mean squared momentum residuals (J_mom_x, J_mom_y) over one cloud."""
    if temp_grad.shape[:-1] != jets.shape[:-1]:
        raise ValueError(
            f"temperature gradient shape {temp_grad.shape} does not match "
            f"cloud jets of shape {jets.shape}"
        )
    r_x, r_y = momentum_residual_fields(jets, temp_grad, mat, forcing)
    return float(np.mean(r_x**2)), float(np.mean(r_y**2))


def residual_sensor(u_values: np.ndarray, v_values: np.ndarray, sensors: SensorSet) -> float:
    """Mean squared displacement mismatch at the sensor points."""
    if sensors.m == 0:
        raise ValueError("sensor residual needs at least one sensor")
    du = u_values[sensors.indices] - sensors.u_sensor
    dv = v_values[sensors.indices] - sensors.v_sensor
    return float(np.mean(du**2 + dv**2))


def batch_loss(
    breakdowns: Sequence[ResidualBreakdown],
    omega_momentum: float,
    omega_sensor: float,
) -> float:
    """Mean weighted loss over one batch of geometries."""
    if not breakdowns:
        raise ValueError("batch must be non-empty")
    return float(np.mean([b.weighted(omega_momentum, omega_sensor) for b in breakdowns]))


def geometry_breakdown(
    model: PipnModel, sample: GeometrySample, mat: Material
) -> ResidualBreakdown:
    """Forward one geometry without recording and collect its residuals."""
    jets, _ = model.forward(sample.cloud, record=False)
    jx, jy = residual_momentum(jets, sample.cloud.temp_grad, mat, sample.forcing)
    js = residual_sensor(jets.val[:, 0], jets.val[:, 1], sample.sensors)
    return ResidualBreakdown(jx, jy, js, sample.n_points, sample.sensors.m)


def dataset_loss(
    model: PipnModel,
    dataset: Sequence[GeometrySample],
    mat: Material,
    omega_momentum: float,
    omega_sensor: float,
) -> float:
    """Mean weighted loss over the whole dataset at fixed parameters."""
    return batch_loss(
        [geometry_breakdown(model, s, mat) for s in dataset], omega_momentum, omega_sensor
    )


# geometries per stacked forward pass: keep 6 * chunk * N matmul rows near the
# cache-friendly sweet spot measured on desktop CPUs
_CHUNK_ROW_TARGET = 8192


def _chunk_loss_and_backward(
    model: PipnModel,
    chunk: Sequence[GeometrySample],
    mat: Material,
    omega_sensor: float,
    scale: float,
) -> list[float]:
    """One stacked forward/backward over a chunk of same-size clouds."""
    a, b, d = momentum_coefficients(mat)
    coords = np.stack([s.cloud.coords for s in chunk])  # (B, N, 2)
    temp_grad = np.stack([s.cloud.temp_grad for s in chunk])
    forcing = None
    if any(s.forcing is not None for s in chunk):
        forcing = np.stack(
            [
                s.forcing if s.forcing is not None else np.zeros((s.n_points, 2))
                for s in chunk
            ]
        )
    n = coords.shape[1]

    jets, tape = model.forward(coords, record=True)  # (6, B, N, 2)
    r_x, r_y = momentum_residual_fields(jets, temp_grad, mat, forcing)  # (B, N)
    jx = np.mean(r_x**2, axis=1)
    jy = np.mean(r_y**2, axis=1)

    seed = np.zeros(jets.data.shape)
    w_mom = scale * OMEGA_MOMENTUM * 2.0 / n
    gx, gy = w_mom * r_x, w_mom * r_y
    seed[DXX, :, :, 0] = -a * gx
    seed[DYY, :, :, 0] = -0.5 * gx
    seed[DXY, :, :, 1] = -(b + 0.5) * gx
    seed[DYY, :, :, 1] = -a * gy
    seed[DXX, :, :, 1] = -0.5 * gy
    seed[DXY, :, :, 0] = -(b + 0.5) * gy

    losses = []
    for bi, sample in enumerate(chunk):
        sensors = sample.sensors
        du = jets.val[bi, sensors.indices, 0] - sensors.u_sensor
        dv = jets.val[bi, sensors.indices, 1] - sensors.v_sensor
        js = float(np.mean(du**2 + dv**2))
        losses.append(float(OMEGA_MOMENTUM * (jx[bi] + jy[bi]) + omega_sensor * js))
        w_sen = scale * omega_sensor * 2.0 / sensors.m
        seed[VAL, bi, sensors.indices, 0] = w_sen * du
        seed[VAL, bi, sensors.indices, 1] = w_sen * dv
    tape.backward(jets, seed)
    return losses


def _loss_and_backward(
    model: PipnModel,
    batch: Sequence[GeometrySample],
    mat: Material,
    omega_sensor: float,
) -> list[float]:
    """Accumulate gradients of the batch-mean loss; returns per-geometry losses.

    The batch is processed in fixed order as one or more stacked passes;
    gradients sum into the parameter accumulators either way, so the
    result is independent of the chunk size.
    """
    scale = 1.0 / len(batch)
    n = batch[0].n_points
    chunk_size = max(1, _CHUNK_ROW_TARGET // (6 * n))
    losses: list[float] = []
    for lo in range(0, len(batch), chunk_size):
        losses.extend(
            _chunk_loss_and_backward(model, batch[lo : lo + chunk_size], mat, omega_sensor, scale)
        )
    return losses


def adam_step(
    params: ParamStore,
    grads: Sequence[tuple[np.ndarray, np.ndarray]],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon_hat: float = 1e-6,
) -> None:
    """One bias-corrected Adam update, in place."""
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    for i, (layer, (gw, gb)) in enumerate(zip(params.layers, grads)):
        if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
            raise FloatingPointError(
                f"non-finite gradient in layer {i} ({layer.name or 'unnamed'})"
            )
        for p, g, m, v in (
            (layer.weight, gw, state.m[i][0], state.v[i][0]),
            (layer.bias, gb, state.m[i][1], state.v[i][1]),
        ):
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + epsilon_hat)


def _epoch_rng(root_seed: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=(int(root_seed), 7, int(epoch))))


def train(
    dataset: Sequence[GeometrySample],
    config: TrainConfig,
    mat: Material | None = None,
    model: PipnModel | None = None,
    adam_state: AdamState | None = None,
    start_epoch: int = 0,
    on_epoch=None,
) -> tuple[PipnModel, list[HistoryRow]]:
    """Mini-batch training over geometries.

    Per epoch the geometry order is reshuffled (seeded per epoch from the
    root seed, so resumed runs match uninterrupted ones), partitioned into
    ceil(m / B) batches (the last may be smaller; its loss is the mean
    over its actual size), and one Adam step is taken per batch.  The
    history records, per epoch, the mean loss over all geometries as
    accumulated batch-wise, the sensor weight, and elapsed wall time.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    sizes = {s.n_points for s in dataset}
    if len(sizes) != 1:
        raise ValueError(f"all clouds must share the same point count, got {sorted(sizes)}")
    mat = mat if mat is not None else Material()
    if model is None:
        model = build_pipn(config.arch(), seed=config.seed)
    if adam_state is None:
        adam_state = AdamState.for_params(model.params)
    m = len(dataset)
    batch_size = min(config.batch_size, m)

    history: list[HistoryRow] = []
    t0 = time.perf_counter()
    for epoch in range(start_epoch, config.epochs):
        omega_sensor = weight_sensor(config.schedule, epoch)
        order = _epoch_rng(config.seed, epoch).permutation(m)
        loss_sum = 0.0
        for batch_index, lo in enumerate(range(0, m, batch_size)):
            batch = [dataset[i] for i in order[lo : lo + batch_size]]
            model.params.zero_grad()
            losses = _loss_and_backward(model, batch, mat, omega_sensor)
            batch_mean = float(np.mean(losses))
            if not np.isfinite(batch_mean):
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch}, batch {batch_index}"
                )
            loss_sum += batch_mean * len(batch)
            adam_step(
                model.params,
                model.params.grads(),
                adam_state,
                lr=config.learning_rate,
                beta1=config.beta1,
                beta2=config.beta2,
                epsilon_hat=config.epsilon_hat,
            )
        row = HistoryRow(
            epoch=epoch,
            loss=loss_sum / m,
            omega_sensor=omega_sensor,
            seconds=time.perf_counter() - t0,
        )
        history.append(row)
        if on_epoch is not None:
            on_epoch(model, adam_state, row)
    return model, history


@dataclass
class GeometryErrors:
    """Relative L2 displacement errors of one geometry (absolute when the
    reference norm is zero, flagged by ``degenerate``)."""

    err_u: float
    err_v: float
    degenerate: bool = False


@dataclass
class EvalReport:
    per_geometry: list[GeometryErrors]

    def _stats(self, values: list[float]) -> tuple[float, float, float]:
        return float(np.min(values)), float(np.mean(values)), float(np.max(values))

    @property
    def u_stats(self) -> tuple[float, float, float]:
        """(min, mean, max) of the relative u errors across geometries."""
        return self._stats([g.err_u for g in self.per_geometry])

    @property
    def v_stats(self) -> tuple[float, float, float]:
        return self._stats([g.err_v for g in self.per_geometry])


def _relative_l2(pred: np.ndarray, ref: np.ndarray) -> tuple[float, bool]:
    ref_norm = float(np.linalg.norm(ref))
    diff = float(np.linalg.norm(pred - ref))
    if ref_norm == 0.0:
        return diff, True
    return diff / ref_norm, False


def evaluate(model: PipnModel, dataset: Sequence[GeometrySample]) -> EvalReport:
    """Relative L2 error of the predicted displacements per geometry."""
    rows = []
    for sample in dataset:
        if sample.cloud.ref_u is None or sample.cloud.ref_v is None:
            raise ValueError("evaluation needs reference displacements on every cloud")
        pred = model.predict(sample.cloud)
        eu, du = _relative_l2(pred[:, 0], sample.cloud.ref_u)
        ev, dv = _relative_l2(pred[:, 1], sample.cloud.ref_v)
        rows.append(GeometryErrors(err_u=eu, err_v=ev, degenerate=du or dv))
    return EvalReport(per_geometry=rows)
