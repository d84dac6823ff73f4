"""Trilinear hexahedron stiffness, power-law material interpolation, self-weight.

The unit stiffness matrix is integrated in closed form from tensor products
of 1D integrals over the reference cube, so it is exact to rounding. The
matrix scales linearly with the edge length h, as 3D elasticity requires.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ElementStiffness",
    "MaterialModel",
    "unit_stiffness",
    "simp_scale",
    "simp_scale_derivative",
    "element_gravity_load",
]

# 1D integrals over [0, 1] for the linear hat pair l0 = 1 - t, l1 = t:
# values, gradient products, and the mixed gradient/value products.
_I_VV = np.array([[1 / 3, 1 / 6], [1 / 6, 1 / 3]])
_I_GG = np.array([[1.0, -1.0], [-1.0, 1.0]])
_I_GV = np.array([[-0.5, -0.5], [0.5, 0.5]])  # row index carries the gradient
_I_VG = _I_GV.T.copy()


@dataclass(frozen=True)
class ElementStiffness:
    """24x24 symmetric stiffness of a cube element with unit elastic modulus."""

    matrix: np.ndarray
    nu: float
    h: float


@dataclass(frozen=True)
class MaterialModel:
    """Power-law interpolation K_e = s(rho) * K0 with a small stiffness floor.

    s(rho) = kmin_frac + rho**p * (1 - kmin_frac), so s(0) = kmin_frac and
    s(1) = 1. E multiplies the unit-modulus element matrix in the operator.
    """

    p: float = 3.0
    kmin_frac: float = 1e-9
    E: float = 1.0

    def __post_init__(self):
        if self.p < 1:
            raise ValueError(f"penalization exponent must be >= 1, got {self.p}")
        if not 0 < self.kmin_frac < 1:
            raise ValueError(f"kmin_frac must lie in (0, 1), got {self.kmin_frac}")
        if self.E <= 0:
            raise ValueError("elastic modulus must be positive")


def _grad_products(h: float) -> np.ndarray:
    """G[a, b, p, q] = integral of d_a N_p d_b N_q over the physical cube."""
    tables = {
        ("g", "g"): _I_GG,
        ("g", "v"): _I_GV,
        ("v", "g"): _I_VG,
        ("v", "v"): _I_VV,
    }
    G = np.zeros((3, 3, 8, 8))
    for a in range(3):
        for b in range(3):
            # kron with x fastest matches the corner index c = ci + 2*cj + 4*ck
            factors = []
            for axis in range(3):
                ka = "g" if axis == a else "v"
                kb = "g" if axis == b else "v"
                factors.append(tables[(ka, kb)])
            G[a, b] = np.kron(factors[2], np.kron(factors[1], factors[0])) * h
    return G


def unit_stiffness(nu: float, h: float) -> ElementStiffness:
    """Closed-form stiffness of an h-cube with E = 1 and Poisson ratio nu."""
    if not 0 <= nu < 0.5:
        raise ValueError(f"Poisson ratio must lie in [0, 0.5), got {nu}")
    if not h > 0:
        raise ValueError(f"edge length must be positive, got {h}")
    lam = nu / ((1 + nu) * (1 - 2 * nu))
    mu = 1.0 / (2 * (1 + nu))
    G = _grad_products(h)
    trace = G[0, 0] + G[1, 1] + G[2, 2]
    K = np.zeros((24, 24))
    for a in range(3):
        for b in range(3):
            block = lam * G[a, b] + mu * G[b, a]
            if a == b:
                block = block + mu * trace
            K[a::3, b::3] = block
    return ElementStiffness(K, float(nu), float(h))


def simp_scale(rho, model: MaterialModel):
    """Stiffness scale factor s(rho); accepts scalars or arrays in [0, 1]."""
    r = np.asarray(rho, dtype=np.float64)
    if np.any(r < 0) or np.any(r > 1):
        raise ValueError("density outside [0, 1]")
    s = model.kmin_frac + r**model.p * (1.0 - model.kmin_frac)
    return s if s.ndim else float(s)


def simp_scale_derivative(rho, model: MaterialModel):
    """ds/drho = p * rho**(p-1) * (1 - kmin_frac)."""
    r = np.asarray(rho, dtype=np.float64)
    if np.any(r < 0) or np.any(r > 1):
        raise ValueError("density outside [0, 1]")
    # 0**0 = 1 in numpy, which is the correct p = 1 limit
    d = model.p * r ** (model.p - 1.0) * (1.0 - model.kmin_frac)
    return d if d.ndim else float(d)


def element_gravity_load(
    rho: float, g: float, h: float, unit_weight: float, axis: int = 2
) -> np.ndarray:
    """Self-weight nodal load of one element, equally lumped to its 8 corners.

    The total weight rho * unit_weight * g * h**3 acts along -axis, h**3 / 8
    per corner; the other components are zero.
    """
    if not 0 <= rho <= 1:
        raise ValueError("density outside [0, 1]")
    f = np.zeros(24)
    f[axis::3] = -rho * unit_weight * g * h**3 / 8.0
    return f
