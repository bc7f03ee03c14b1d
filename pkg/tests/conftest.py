"""Shared fixtures and finite-difference oracles for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from pipn.geometry import DomainSpec, PointCloud, SensorSet, sample_point_cloud
from pipn.training import GeometrySample


def fd_output_jets(model, coords: np.ndarray, step: float) -> np.ndarray:
    """Numeric jets of the network outputs at every point, shape (6, N, 2).

    Each point's own coordinates are perturbed (the whole cloud is re-run,
    so paths through the pooled global feature are included) and central
    differences assemble the first and second derivatives.
    """
    n = len(coords)
    out0, _ = model.forward(coords)

    def value(c):
        out, _ = model.forward(c)
        return out.val

    fd = np.zeros_like(out0.data)
    fd[0] = out0.val
    for j in range(n):
        def pert(dx, dy):
            c = coords.copy()
            c[j, 0] += dx
            c[j, 1] += dy
            return value(c)[j]

        f0 = out0.val[j]
        fxp, fxm = pert(step, 0), pert(-step, 0)
        fyp, fym = pert(0, step), pert(0, -step)
        fpp, fpm = pert(step, step), pert(step, -step)
        fmp, fmm = pert(-step, step), pert(-step, -step)
        fd[1, j] = (fxp - fxm) / (2 * step)
        fd[2, j] = (fyp - fym) / (2 * step)
        fd[3, j] = (fxp - 2 * f0 + fxm) / step**2
        fd[4, j] = (fyp - 2 * f0 + fym) / step**2
        fd[5, j] = (fpp - fpm - fmp + fmm) / (4 * step**2)
    return fd


def slot_errors(analytic: np.ndarray, reference: np.ndarray) -> list[float]:
    """Relative 2-norm disagreement per jet slot."""
    return [
        float(np.linalg.norm(analytic[k] - reference[k]) / max(np.linalg.norm(reference[k]), 1e-12))
        for k in range(6)
    ]


def fd_param_gradients(model, loss_fn, step: float = 1e-4):
    """Central-difference gradient of ``loss_fn()`` w.r.t. every parameter."""
    grads = []
    for layer in model.params.layers:
        pair = []
        for arr in (layer.weight, layer.bias):
            flat = arr.ravel()
            g = np.empty_like(flat)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                lp = loss_fn()
                flat[i] = orig - step
                lm = loss_fn()
                flat[i] = orig
                g[i] = (lp - lm) / (2 * step)
            pair.append(g.reshape(arr.shape))
        grads.append(tuple(pair))
    return grads


def synthetic_sample(rng: np.random.Generator, n_points: int, n_sensors: int = 3) -> GeometrySample:
    """A cloud with random field data, for loss/gradient tests that do not
    need the oracle."""
    spec = DomainSpec(n_poly=4, circumradius=0.35, orientation_deg=1.0, side_length=2.0)
    cloud = PointCloud(
        spec=spec,
        coords=rng.uniform(-0.9, 0.9, (n_points, 2)),
        kind=np.zeros(n_points, dtype=np.int8),
        temp_grad=rng.normal(0.0, 1.0, (n_points, 2)),
    )
    indices = rng.choice(n_points, size=n_sensors, replace=False)
    sensors = SensorSet(
        indices=np.asarray(indices, dtype=np.intp),
        u_sensor=rng.normal(0.0, 0.05, n_sensors),
        v_sensor=rng.normal(0.0, 0.05, n_sensors),
    )
    return GeometrySample(cloud=cloud, sensors=sensors)


@pytest.fixture(scope="session")
def hexagon_spec() -> DomainSpec:
    return DomainSpec(n_poly=6, circumradius=0.3, orientation_deg=7.0, side_length=2.0)


@pytest.fixture(scope="session")
def small_cloud(hexagon_spec) -> PointCloud:
    return sample_point_cloud(hexagon_spec, 120, 28, 12, seed=5)
