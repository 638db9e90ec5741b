"""Linear lumped-parameter model with an inextensible helical fiber constraint.

The fibers fix the outer radius as a function of length and twist; the fluid
volume derived from it gives the pressure-to-force map, and a constant
symmetric stiffness matrix adds the wall's elastic response.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    FiberOverstretch, FreeDesign, GeneralizedForce, KinematicState, RecordArrays,
    SingularConfiguration,
)

SINGULAR_TOL = 1e-6  # rad, distance of phi from -Phi


@dataclass(frozen=True)
class StiffnessMatrix:
    """Wall stiffness ``[[k_a, k_c], [k_c, k_b]]`` acting on ``[l - L (m), phi (rad)]``."""

    k_a: float
    k_b: float
    k_c: float

    def __post_init__(self):
        if not (self.k_a > 0 and self.k_b > 0 and self.k_a * self.k_b - self.k_c ** 2 > 0):
            raise ValueError(f"stiffness matrix is not positive definite: {self}")

    def matrix(self) -> np.ndarray:
        return np.array([[self.k_a, self.k_c], [self.k_c, self.k_b]])

    @classmethod
    def from_cholesky(cls, l11: float, l21: float, l22: float) -> "StiffnessMatrix":
        return cls(l11 * l11, l21 * l21 + l22 * l22, l11 * l21)

    def cholesky(self) -> tuple[float, float, float]:
        l11 = math.sqrt(self.k_a)
        l21 = self.k_c / l11
        return l11, l21, math.sqrt(self.k_b - l21 * l21)

    def to_json(self) -> dict:
        return {"k_a": self.k_a, "k_b": self.k_b, "k_c": self.k_c}

    @classmethod
    def from_json(cls, obj: dict) -> "StiffnessMatrix":
        return cls(float(obj["k_a"]), float(obj["k_b"]), float(obj["k_c"]))


@dataclass(frozen=True)
class LumpedGeometry:
    fiber_length_B: float
    wrap_angle_Phi: float

    @classmethod
    def of(cls, design: FreeDesign) -> "LumpedGeometry":
        return cls(*fiber_geometry(design.gamma, design.length_L, design.outer_radius_Ro))


def fiber_geometry(gamma, L, Ro):
    """Fiber length ``B = L / cos(gamma)`` and unloaded wrap angle ``Phi = L tan(gamma) / Ro``."""
    return L / np.cos(gamma), L * np.tan(gamma) / Ro


def _checked(q: KinematicState, design: FreeDesign):
    B, Phi = fiber_geometry(design.gamma, design.length_L, design.outer_radius_Ro)
    l, phi = q.length_l, q.twist_phi
    s = Phi + phi
    if abs(s) <= SINGULAR_TOL:
        raise SingularConfiguration(
            f"twist {phi:.9g} rad is within {SINGULAR_TOL} rad of -Phi = {-Phi:.9g} rad; "
            "fibers are parallel to the axis and radius/volume are undefined"
        )
    if l > B:
        raise FiberOverstretch(f"length {l:.9g} m exceeds fiber length {B:.9g} m")
    return B, s, l


def outer_radius(q: KinematicState, design: FreeDesign) -> float:
    B, s, l = _checked(q, design)
    return math.sqrt(B * B - l * l) / abs(s)


def volume(q: KinematicState, design: FreeDesign) -> float:
    B, s, l = _checked(q, design)
    return math.pi * (l * B * B - l ** 3) / (s * s)


def fluid_jacobian(q: KinematicState, design: FreeDesign) -> np.ndarray:
    B, s, l = _checked(q, design)
    return np.array([
        math.pi * (B * B - 3 * l * l) / (s * s),
        -2 * math.pi * (l * B * B - l ** 3) / s ** 3,
    ])


def predict(q: KinematicState, P: float, design: FreeDesign, K: StiffnessMatrix) -> GeneralizedForce:
    J = fluid_jacobian(q, design)
    tau = J * P - K.matrix() @ q.delta(design)
    return GeneralizedForce(float(tau[0]), float(tau[1]))


def predict_arrays(a: RecordArrays, K: StiffnessMatrix):
    """Vectorized prediction; returns ``(F, M, ok)`` with NaN where the model is undefined."""
    B, Phi = fiber_geometry(a.gamma, a.L, a.Ro)
    s = Phi + a.phi
    ok = (np.abs(s) > SINGULAR_TOL) & (a.l <= B)
    with np.errstate(divide="ignore", invalid="ignore"):
        J1 = np.pi * (B * B - 3 * a.l ** 2) / s ** 2
        J2 = -2 * np.pi * (a.l * B * B - a.l ** 3) / s ** 3
    dl = a.l - a.L
    F = J1 * a.P - (K.k_a * dl + K.k_c * a.phi)
    M = J2 * a.P - (K.k_c * dl + K.k_b * a.phi)
    F = np.where(ok, F, np.nan)
    M = np.where(ok, M, np.nan)
    return F, M, ok


def fluid_forces_arrays(a: RecordArrays):
    """Pressure part ``J_V^T P`` and the deflection ``dq``, used by the linear fit."""
    B, Phi = fiber_geometry(a.gamma, a.L, a.Ro)
    s = Phi + a.phi
    ok = (np.abs(s) > SINGULAR_TOL) & (a.l <= B)
    with np.errstate(divide="ignore", invalid="ignore"):
        fF = np.pi * (B * B - 3 * a.l ** 2) / s ** 2 * a.P
        fM = -2 * np.pi * (a.l * B * B - a.l ** 3) / s ** 3 * a.P
    return fF, fM, a.l - a.L, a.phi, ok
