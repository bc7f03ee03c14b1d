"""Closed-form verification cases with exactly matching forcing terms.

Each case provides analytic displacement and temperature fields together
with the forcing (s_x, s_y) obtained by evaluating the normalized
momentum residual operator

    s_x = -a u_xx - (b + 1/2) v_xy - 1/2 u_yy + d T_x
    s_y = -a v_yy - (b + 1/2) u_xy - 1/2 v_xx + d T_y

(a = 1/(1-nu), b = nu/(1-nu), d = alpha/(1-nu)) symbolically at the true
fields, hand-expanded below.  By construction, the residual of the true
fields minus this forcing vanishes identically, which pins down both the
finite-element weak form and the training residuals against the same
closed form through two independent code paths.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from pipn.autodiff import Jet2
from pipn.oracle.fem import Material


@dataclass(frozen=True)
class ManufacturedCase:
    """Analytic (u, v, T) evaluators plus the induced residual forcing."""

    name: str
    material: Material
    displacement: Callable  # (x, y) -> (u, v)
    displacement_jets: Callable  # (x, y) -> (Jet2 u, Jet2 v), full order-2 jets
    temperature: Callable  # (x, y) -> T
    temperature_grad: Callable  # (x, y) -> (Tx, Ty)
    forcing: Callable  # (x, y) -> (s_x, s_y)


def _coeffs(mat: Material) -> tuple[float, float, float]:
    a = 1.0 / (1.0 - mat.nu)
    b = mat.nu / (1.0 - mat.nu)
    d = mat.alpha / (1.0 - mat.nu)
    return a, b, d


def _trigonometric(mat: Material) -> ManufacturedCase:
    # u = v = sin(pi x) sin(pi y) / 50,  T = x^2 - y^2
    q = 1.0 / 50.0
    a, b, d = _coeffs(mat)

    def displacement(x, y):
        w = q * np.sin(np.pi * x) * np.sin(np.pi * y)
        return w, w.copy() if isinstance(w, np.ndarray) else w

    def displacement_jets(x, y):
        x, y = np.asarray(x, float), np.asarray(y, float)
        sx, cx = np.sin(np.pi * x), np.cos(np.pi * x)
        sy, cy = np.sin(np.pi * y), np.cos(np.pi * y)
        jet = Jet2.from_slots(
            val=q * sx * sy,
            d_x=q * np.pi * cx * sy,
            d_y=q * np.pi * sx * cy,
            d_xx=-q * np.pi**2 * sx * sy,
            d_yy=-q * np.pi**2 * sx * sy,
            d_xy=q * np.pi**2 * cx * cy,
        )
        return jet, jet.copy()

    def temperature(x, y):
        return np.asarray(x, float) ** 2 - np.asarray(y, float) ** 2

    def temperature_grad(x, y):
        x, y = np.asarray(x, float), np.asarray(y, float)
        return 2.0 * x, -2.0 * y

    def forcing(x, y):
        x, y = np.asarray(x, float), np.asarray(y, float)
        ss = np.sin(np.pi * x) * np.sin(np.pi * y)
        cc = np.cos(np.pi * x) * np.cos(np.pi * y)
        common = q * np.pi**2 * ((a + 0.5) * ss - (b + 0.5) * cc)
        return common + 2.0 * d * x, common - 2.0 * d * y

    return ManufacturedCase(
        name="trigonometric",
        material=mat,
        displacement=displacement,
        displacement_jets=displacement_jets,
        temperature=temperature,
        temperature_grad=temperature_grad,
        forcing=forcing,
    )


def _polynomial(mat: Material) -> ManufacturedCase:
    # u = x^2 y / 100,  v = x y^2 / 100,  T = x^2 - y^2
    a, b, d = _coeffs(mat)

    def displacement(x, y):
        x, y = np.asarray(x, float), np.asarray(y, float)
        return x**2 * y / 100.0, x * y**2 / 100.0

    def displacement_jets(x, y):
        x, y = np.asarray(x, float), np.asarray(y, float)
        zero = np.zeros_like(x)
        jet_u = Jet2.from_slots(
            val=x**2 * y / 100.0,
            d_x=x * y / 50.0,
            d_y=x**2 / 100.0,
            d_xx=y / 50.0,
            d_yy=zero,
            d_xy=x / 50.0,
        )
        jet_v = Jet2.from_slots(
            val=x * y**2 / 100.0,
            d_x=y**2 / 100.0,
            d_y=x * y / 50.0,
            d_xx=zero,
            d_yy=x / 50.0,
            d_xy=y / 50.0,
        )
        return jet_u, jet_v

    def temperature(x, y):
        return np.asarray(x, float) ** 2 - np.asarray(y, float) ** 2

    def temperature_grad(x, y):
        x, y = np.asarray(x, float), np.asarray(y, float)
        return 2.0 * x, -2.0 * y

    def forcing(x, y):
        x, y = np.asarray(x, float), np.asarray(y, float)
        s_x = -(a + b + 0.5) * y / 50.0 + 2.0 * d * x
        s_y = -(a + b + 0.5) * x / 50.0 - 2.0 * d * y
        return s_x, s_y

    return ManufacturedCase(
        name="polynomial",
        material=mat,
        displacement=displacement,
        displacement_jets=displacement_jets,
        temperature=temperature,
        temperature_grad=temperature_grad,
        forcing=forcing,
    )


_REGISTRY = {
    "trigonometric": _trigonometric,
    "polynomial": _polynomial,
}


def manufactured_case(case_id: str, mat: Material | None = None) -> ManufacturedCase:
    """Look up a verification case; raises for unknown ids."""
    try:
        builder = _REGISTRY[case_id]
    except KeyError:
        raise ValueError(
            f"unknown manufactured case {case_id!r}; available: {sorted(_REGISTRY)}"
        ) from None
    return builder(mat if mat is not None else Material())


def case_ids() -> list[str]:
    return sorted(_REGISTRY)
