"""Nonlinear continuum model of a thick-walled, incompressible, fiber-reinforced tube.

The wall is a neo-Hookean matrix with one homogenized fiber family. For a
prescribed length, twist and pressure the inner radius is found from radial
equilibrium; axial force and moment then follow from integrating the wall
stresses over the current radius.

Tensor components are ordered (r, theta, z).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from . import kernels
from ._pykernels import stress_at
from .core import (
    ConvergenceError, FreeDesign, GeneralizedForce, KinematicState, NoEquilibrium, RecordArrays,
)

DEFAULT_ORDER = 32
ROOT_XTOL = 1e-15  # m; the unloaded reference then holds to ~1e-12 N
ROOT_MAXITER = 200
LAMBDA_BAND = (0.5, 2.0)
BRACKET = (0.2, 5.0)  # multiples of Ri


@dataclass(frozen=True)
class MaterialParams:
    """Neo-Hookean modulus ``C1`` and fiber modulus ``C2`` (Pa)."""

    C1: float
    C2: float

    def __post_init__(self):
        if not (self.C1 > 0 and self.C2 > 0):
            raise ValueError(f"material constants must be positive, got C1={self.C1}, C2={self.C2}")

    def to_json(self) -> dict:
        return {"C1": self.C1, "C2": self.C2}

    @classmethod
    def from_json(cls, obj: dict) -> "MaterialParams":
        return cls(float(obj["C1"]), float(obj["C2"]))


@dataclass(frozen=True)
class DeformedGeometry:
    inner_radius_ri: float
    outer_radius_ro: float
    stretch_lambda_z: float

    @classmethod
    def from_inner(cls, ri: float, stretch: float, design: FreeDesign) -> "DeformedGeometry":
        Ri, Ro = design.inner_radius_Ri, design.outer_radius_Ro
        return cls(ri, math.sqrt(ri * ri + (Ro * Ro - Ri * Ri) / stretch), stretch)

    def current_radius(self, R, design: FreeDesign):
        """Radius of the material shell that sat at ``R`` before loading."""
        Ri = design.inner_radius_Ri
        return np.sqrt((np.asarray(R) ** 2 - Ri * Ri) / self.stretch_lambda_z + self.inner_radius_ri ** 2)

    def reference_radius(self, r, design: FreeDesign):
        Ri = design.inner_radius_Ri
        return np.sqrt(self.stretch_lambda_z * (np.asarray(r) ** 2 - self.inner_radius_ri ** 2) + Ri * Ri)


class WallStressState(NamedTuple):
    """Stresses at current radii ``r``; the full Cauchy stress is ``sigma_hat - b I``."""

    r: np.ndarray
    s_rr: np.ndarray
    s_tt: np.ndarray
    s_zz: np.ndarray
    s_tz: np.ndarray
    sigma_rr: np.ndarray
    b: np.ndarray

    @property
    def sigma_zz(self) -> np.ndarray:
        return self.s_zz - self.b

    @property
    def sigma_tt(self) -> np.ndarray:
        return self.s_tt - self.b


@lru_cache(maxsize=16)
def gauss_legendre(order: int = DEFAULT_ORDER) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def fiber_direction(design: FreeDesign) -> np.ndarray:
    return np.array([0.0, math.sin(design.gamma), math.cos(design.gamma)])


def deformation_gradient(R: float, q: KinematicState, geom: DeformedGeometry,
                         design: FreeDesign) -> np.ndarray:
    Ri, Ro = design.inner_radius_Ri, design.outer_radius_Ro
    tol = 1e-12 * Ro
    if not (Ri - tol <= R <= Ro + tol):
        raise ValueError(f"R = {R} lies outside the wall [{Ri}, {Ro}]")
    lam = geom.stretch_lambda_z
    r = float(geom.current_radius(R, design))
    return np.array([
        [R / (r * lam), 0.0, 0.0],
        [0.0, r / R, r * q.twist_phi / design.length_L],
        [0.0, 0.0, lam],
    ])


def invariants(F: np.ndarray, design: FreeDesign) -> tuple[float, float]:
    C = F.T @ F
    a0 = fiber_direction(design)
    return float(np.trace(C)), float(a0 @ C @ a0)


def _check_isochoric(F: np.ndarray) -> None:
    det = np.linalg.det(F)
    if abs(det - 1.0) > 1e-9:
        raise ValueError(f"deformation is not volume preserving: det F = {det}")


def strain_energy(F: np.ndarray, params: MaterialParams, design: FreeDesign, check: bool = True) -> float:
    if check:
        _check_isochoric(F)
    I1, I4 = invariants(F, design)
    return 0.5 * params.C1 * (I1 - 3.0) + 0.5 * params.C2 * (I4 - 1.0) ** 2


def extra_stress(F: np.ndarray, params: MaterialParams, design: FreeDesign, check: bool = True
                 ) -> np.ndarray:
    """Stress ``dPsi/dF F^T`` without the incompressibility multiplier."""
    if check:
        _check_isochoric(F)
    _, I4 = invariants(F, design)
    a = F @ fiber_direction(design)
    return params.C1 * F @ F.T + 2.0 * params.C2 * (I4 - 1.0) * np.outer(a, a)


def _stress_components(r, geom: DeformedGeometry, q: KinematicState, params: MaterialParams,
                       design: FreeDesign):
    return stress_at(
        np.asarray(r, dtype=float), geom.inner_radius_ri, geom.stretch_lambda_z, q.twist_phi,
        design.length_L, design.inner_radius_Ri, design.gamma, params.C1, params.C2,
    )


def _check_stretch(q: KinematicState, design: FreeDesign) -> float:
    lam = q.length_l / design.length_L
    if not LAMBDA_BAND[0] < lam < LAMBDA_BAND[1]:
        raise NoEquilibrium(f"axial stretch {lam:.4g} outside guard band {LAMBDA_BAND}")
    return lam


def equilibrium_residual(ri: float, q: KinematicState, P: float, params: MaterialParams,
                         design: FreeDesign, order: int = DEFAULT_ORDER) -> float:
    """``P + int_ri^ro (s_rr - s_tt) / r dr``; zero at the equilibrium inner radius."""
    x, w = gauss_legendre(order)
    return kernels.residual(ri, design.gamma, design.length_L, design.inner_radius_Ri,
                            design.outer_radius_Ro, q.length_l, q.twist_phi, P,
                            params.C1, params.C2, x, w)


def solve_inner_radius(q: KinematicState, P: float, params: MaterialParams, design: FreeDesign,
                       order: int = DEFAULT_ORDER) -> DeformedGeometry:
    if P < 0:
        raise ValueError("gauge pressure must be non-negative")
    lam = _check_stretch(q, design)
    lo, hi = BRACKET[0] * design.inner_radius_Ri, BRACKET[1] * design.inner_radius_Ri
    g = lambda ri: equilibrium_residual(ri, q, P, params, design, order)  # noqa: E731
    g_lo, g_hi = g(lo), g(hi)
    if g_lo == 0.0:
        return DeformedGeometry.from_inner(lo, lam, design)
    if g_hi == 0.0:
        return DeformedGeometry.from_inner(hi, lam, design)
    if not (math.isfinite(g_lo) and math.isfinite(g_hi)) or (g_lo > 0) == (g_hi > 0):
        raise NoEquilibrium(
            f"no sign change of the equilibrium residual on [{lo:.4g}, {hi:.4g}] m "
            f"(g = {g_lo:.4g}, {g_hi:.4g} Pa)"
        )
    ri, info = brentq(g, lo, hi, xtol=ROOT_XTOL, maxiter=ROOT_MAXITER, full_output=True, disp=False)
    if not info.converged:
        raise ConvergenceError(f"inner radius search stopped after {info.iterations} iterations")
    return DeformedGeometry.from_inner(ri, lam, design)


def wall_stress(r, geom: DeformedGeometry, q: KinematicState, params: MaterialParams,
                design: FreeDesign, order: int = DEFAULT_ORDER, outer_traction: float = 0.0
                ) -> WallStressState:
    """Stress state at radii ``r``, with ``b`` recovered from radial equilibrium.

    The radial stress at each radius is integrated inward from the outer wall,
    where it equals ``outer_traction`` (zero for a traction-free wall).
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    ro = geom.outer_radius_ro
    x, w = gauss_legendre(order)
    # nested quadrature of (s_rr - s_tt)/rho over [r_k, ro] for every r_k
    half = 0.5 * (ro - r)[:, None]
    rho = 0.5 * (ro + r)[:, None] + half * x[None, :]
    p_rr, p_tt, _, _ = _stress_components(rho, geom, q, params, design)
    sigma_rr = outer_traction + np.sum(w * half * (p_rr - p_tt) / rho, axis=1)
    s_rr, s_tt, s_zz, s_tz = _stress_components(r, geom, q, params, design)
    return WallStressState(r, s_rr, s_tt, s_zz, s_tz, sigma_rr, s_rr - sigma_rr)


def integrate_forces(geom: DeformedGeometry, q: KinematicState, P: float, params: MaterialParams,
                     design: FreeDesign, order: int = DEFAULT_ORDER, b_offset: float = 0.0
                     ) -> GeneralizedForce:
    """Axial force and moment from the stress field of a solved geometry.

    ``b_offset`` shifts the multiplier field and the outer radial traction by
    the same constant; the result must not depend on it.
    """
    ri, ro = geom.inner_radius_ri, geom.outer_radius_ro
    x, w = gauss_legendre(order)
    half = 0.5 * (ro - ri)
    r = 0.5 * (ro + ri) + half * x
    st = wall_stress(r, geom, q, params, design, order, outer_traction=-b_offset)
    axial = st.sigma_zz + b_offset  # axial stress relative to the outer-wall traction
    F = -2.0 * math.pi * half * float(np.dot(w, axial * r)) + math.pi * ri * ri * P
    M = -2.0 * math.pi * half * float(np.dot(w, st.s_tz * r * r))
    return GeneralizedForce(F, M)


def predict(q: KinematicState, P: float, params: MaterialParams, design: FreeDesign,
            order: int = DEFAULT_ORDER) -> GeneralizedForce:
    geom = solve_inner_radius(q, P, params, design, order)
    return integrate_forces(geom, q, P, params, design, order)


def predict_arrays(a: RecordArrays, params: MaterialParams, order: int = DEFAULT_ORDER):
    """Vectorized prediction through the selected kernel backend.

    Returns ``(F, M, ok)``; entries without an equilibrium are NaN.
    """
    x, w = gauss_legendre(order)
    F, M, _, status = kernels.continuum_batch(
        a.gamma, a.L, a.Ri, a.Ro, a.l, a.phi, a.P, float(params.C1), float(params.C2), x, w,
        ROOT_XTOL, ROOT_MAXITER,
    )
    return F, M, status == kernels.OK
