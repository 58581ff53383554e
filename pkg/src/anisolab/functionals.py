"""Weighted curvature functionals, enclosed volume, Minkowski-type residuals,
and finite-difference checks of the first-variation formulas.

Sign conventions inherited from the geometry module: nu is inward, S is the
derivative of the outward normal, variation speeds are measured against the
inward normal (f = <dX/dt, nu>).  With these choices

    d/dt area_r = -b_{r+1} integral( f H_{r+1} ),
    d/dt enclosed_volume = -integral( f ),

and the Minkowski combination F(nu) H_r + H_{r+1} <X, nu> integrates to zero
on every closed hypersurface.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .curvalg import b_coefficient, curvature_fields
from .errors import InputDomainError
from .geometry import integrate, support_and_tangent
from .numerics import derivative_plateau


@dataclass
class FunctionalValue:
    value: float
    resolution: tuple
    provenance: str


def area_r(imm, model, r, fields=None):
    """Anisotropic r-area: integral of F(nu) sigma_r."""
    if not 0 <= r <= imm.n:
        raise InputDomainError(f"area_r needs 0 <= r <= n, got r={r}")
    if fields is None:
        fields = curvature_fields(imm, model)
    return integrate(imm, fields.f_nu * fields.sigma[:, r])


def area_rs(imm, model, r, s, a, fields=None):
    """Weighted (r, s)-area: sum of a_j * area_j for j = r..s."""
    a = np.asarray(a, dtype=float)
    if not 0 <= r <= s <= imm.n - 2:
        raise InputDomainError(f"(r, s) = ({r}, {s}) violates 0 <= r <= s <= n-2")
    if a.shape != (s - r + 1,):
        raise InputDomainError(f"need {s - r + 1} coefficients a_r..a_s, got {a.shape}")
    if np.any(a < 0.0) or not np.any(a > 0.0):
        raise InputDomainError("coefficients must be nonnegative with at least one positive")
    return sum(
        float(a[j - r]) * area_r(imm, model, j, fields=fields) for j in range(r, s + 1)
    )


def enclosed_volume(imm):
    """Volume of the enclosed body: -1/(n+1) integral of <X, nu> (inward nu)."""
    support = np.einsum("md,md->m", imm.positions, imm.normals)
    return -integrate(imm, support) / (imm.n + 1)


def minkowski_residual(imm, model, r, fields=None):
    """Integral of F(nu) H_r + H_{r+1} <X, nu>; vanishes on closed surfaces."""
    if not 0 <= r <= imm.n - 1:
        raise InputDomainError(f"minkowski_residual needs 0 <= r <= n-1, got r={r}")
    if fields is None:
        fields = curvature_fields(imm, model)
    support, _ = support_and_tangent(imm)
    integrand = fields.f_nu * fields.h[:, r] + fields.h[:, r + 1] * support
    return integrate(imm, integrand)


def minkowski_relative(imm, model, r, fields=None):
    """(residual, scale) with scale = integral of F |H_r| + |H_{r+1} <X, nu>|."""
    if fields is None:
        fields = curvature_fields(imm, model)
    support, _ = support_and_tangent(imm)
    residual = minkowski_residual(imm, model, r, fields=fields)
    scale = integrate(
        imm, np.abs(fields.f_nu * fields.h[:, r]) + np.abs(fields.h[:, r + 1] * support)
    )
    return residual, max(scale, 1e-30)


@dataclass
class FirstVariationResult:
    fd_derivative: float
    formula_value: float
    gap: float
    relative_gap: float
    step: float
    fd_estimate: float


def first_variation_check(family, model, r, base_step=0.05, n_steps=4):
    """Compare the FD derivative of t -> area_r(X_t) with -b_{r+1} int f H_{r+1}."""
    base = family.base
    fields = curvature_fields(base, model)
    b = b_coefficient(base.n, r)
    formula = -b * integrate(base, family.speed * fields.h[:, r + 1])

    speed_scale = max(1.0, float(np.max(np.abs(family.speed))))

    def value_at(t):
        imm = family.evaluate_at(t)
        return area_r(imm, model, r)

    fd, step, est = derivative_plateau(
        value_at, order=1, base_step=base_step / speed_scale, n_steps=n_steps
    )
    gap = abs(fd - formula)
    return FirstVariationResult(
        fd_derivative=fd,
        formula_value=formula,
        gap=gap,
        relative_gap=gap / max(1.0, abs(formula)),
        step=step,
        fd_estimate=est,
    )


@dataclass
class VolumeDerivativeResult:
    fd_derivative: float
    expected: float  # -integral(f) under the inward-speed convention
    gap: float
    step: float


def volume_derivative_check(family, base_step=0.05, n_steps=4):
    """FD derivative of enclosed volume along the family against -integral(f)."""
    base = family.base
    expected = -integrate(base, family.speed)
    speed_scale = max(1.0, float(np.max(np.abs(family.speed))))

    def value_at(t):
        return enclosed_volume(family.evaluate_at(t))

    fd, step, _ = derivative_plateau(
        value_at, order=1, base_step=base_step / speed_scale, n_steps=n_steps
    )
    return VolumeDerivativeResult(
        fd_derivative=fd, expected=expected, gap=abs(fd - expected), step=step
    )


def homothety_area_r(imm, model, r, lam, fields=None):
    """Reference scaling law: area_r(lam X) = lam^(n-r) area_r(X)."""
    return lam ** (imm.n - r) * area_r(imm, model, r, fields=fields)
