"""The sinh-Gordon/spinor action, its first variation, Hessian products and
Euler-Lagrange residuals.

The functional on H^1 x H^{1/2} is

    J(u, psi) = int |grad u|^2 + 8<D psi, psi> - 8 rho cosh(u) |psi|^2
                + 4 rho^2 sinh(u)^2  dv,

with Euler-Lagrange system

    Lap u = 2 rho^2 sinh(2u) - 4 rho sinh(u) |psi|^2,
    D psi = rho cosh(u) psi.

Quadratic spectral terms are evaluated on coefficients; the transcendental
densities pointwise on the grid with the uniform quadrature weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, OverflowGuardError
from .fields import ScalarField, SpinorField
from .geometry import TWO_PI
from .spectral import (
    dirac_apply,
    gradient_energy,
    hminus1_norm,
    hminushalf_norm,
    l2_inner,
    laplace_apply,
    riesz_h1,
    riesz_hhalf,
)


def rho_from_physics(mu: float, b: float) -> float:
    """Coupling from the physical parameters: rho = 2 pi mu b^2."""
    if not (mu > 0 and b > 0):
        raise ConfigError(f"mu and b must be positive, got mu={mu!r}, b={b!r}")
    return TWO_PI * mu * b * b


@dataclass(frozen=True)
class ActionParams:
    """Coupling rho (or the pair (mu, b) it derives from) plus the overflow cap."""

    rho: float | None = None
    mu: float | None = None
    b: float | None = None
    u_cap: float = 50.0

    def __post_init__(self):
        rho = self.rho
        if rho is None:
            if self.mu is None or self.b is None:
                raise ConfigError("provide rho or both mu and b")
            rho = rho_from_physics(self.mu, self.b)
            object.__setattr__(self, "rho", float(rho))
        if not self.rho > 0:
            raise ConfigError(f"rho must be positive, got {self.rho!r}")
        if not self.u_cap > 0:
            raise ConfigError("u_cap must be positive")


@dataclass
class Variation:
    """A (du, dpsi) pair with representation tags.

    Tags "H-1"/"H-1/2" mean the components are L^2 densities to be paired
    against test directions; "H1"/"H1/2" mean Riesz representatives in the
    product metric.
    """

    du: ScalarField
    dpsi: SpinorField
    u_space: str = "H-1"
    psi_space: str = "H-1/2"

    def pair(self, v: ScalarField, phi: SpinorField) -> float:
        """Dual pairing against a test direction (v, phi)."""
        if self.u_space != "H-1" or self.psi_space != "H-1/2":
            raise ConfigError("pair() expects dual-tagged data")
        return l2_inner(self.du, v) + l2_inner(self.dpsi, phi)

    def riesz(self) -> "Variation":
        """Riesz representatives in H^1 x H^{1/2} of dual-tagged data."""
        if self.u_space != "H-1" or self.psi_space != "H-1/2":
            raise ConfigError("riesz() expects dual-tagged data")
        return Variation(riesz_h1(self.du), riesz_hhalf(self.dpsi),
                         u_space="H1", psi_space="H1/2")

    def dual_norms(self) -> tuple[float, float]:
        if self.u_space != "H-1" or self.psi_space != "H-1/2":
            raise ConfigError("dual_norms() expects dual-tagged data")
        return hminus1_norm(self.du), hminushalf_norm(self.dpsi)


def check_overflow(u: ScalarField, params: ActionParams) -> np.ndarray:
    vals = u.values
    m = float(np.max(np.abs(vals)))
    if m > params.u_cap:
        raise OverflowGuardError(
            f"max|u| = {m:.6g} exceeds the overflow cap u_cap = {params.u_cap:g}"
        )
    return vals


def evaluate_J(u: ScalarField, psi: SpinorField, params: ActionParams, basis=None) -> float:
    geom = u.geom
    uv = check_overflow(u, params)
    rho = params.rho
    grad_term = gradient_energy(u)
    dirac_term = 8.0 * l2_inner(dirac_apply(psi), psi)
    dens = psi.density()
    cosh_term = -8.0 * rho * geom.quad_weight * float(np.sum(np.cosh(uv) * dens))
    sinh_term = 4.0 * rho * rho * geom.quad_weight * float(np.sum(np.sinh(uv) ** 2))
    return grad_term + dirac_term + cosh_term + sinh_term


def gradient_J(u: ScalarField, psi: SpinorField, params: ActionParams, basis=None) -> Variation:
    """First variation as dual densities.

    Scalar part: -2 Lap u + 8 rho^2 sinh(u) cosh(u) - 8 rho sinh(u) |psi|^2.
    Spinor part: 16 (D psi - rho cosh(u) psi).
    """
    geom = u.geom
    uv = check_overflow(u, params)
    rho = params.rho
    sh, ch = np.sinh(uv), np.cosh(uv)
    dens = psi.density()
    gu_vals = 8.0 * rho * rho * sh * ch - 8.0 * rho * sh * dens
    gu = ScalarField.from_values(geom, gu_vals) + (-2.0) * laplace_apply(u)
    dpsi = dirac_apply(psi) - SpinorField.from_values(geom, (rho * ch)[None, :, :] * psi.values)
    return Variation(gu, 16.0 * dpsi)


def el_residual(u: ScalarField, psi: SpinorField, params: ActionParams, basis=None):
    """Euler-Lagrange residuals and their dual-multiplier norms.

    Returns (Variation(res_u, res_psi), ||res_u||_{H^-1}, ||res_psi||_{H^-1/2}).
    """
    geom = u.geom
    uv = check_overflow(u, params)
    rho = params.rho
    dens = psi.density()
    ru_vals = -2.0 * rho * rho * np.sinh(2.0 * uv) + 4.0 * rho * np.sinh(uv) * dens
    res_u = laplace_apply(u) + ScalarField.from_values(geom, ru_vals)
    res_psi = dirac_apply(psi) - SpinorField.from_values(
        geom, (rho * np.cosh(uv))[None, :, :] * psi.values
    )
    var = Variation(res_u, res_psi)
    nu, npsi = var.dual_norms()
    return var, nu, npsi


def hess_vec(u: ScalarField, psi: SpinorField, direction: Variation,
             params: ActionParams, basis=None) -> Variation:
    """Second variation applied to a primal direction, returned dual-tagged."""
    geom = u.geom
    uv = check_overflow(u, params)
    rho = params.rho
    v = direction.du
    phi = direction.dpsi
    vv = v.values
    sh, ch = np.sinh(uv), np.cosh(uv)
    dens = psi.density()
    cross = np.real(np.sum(np.conj(psi.values) * phi.values, axis=0))

    hu_vals = (8.0 * rho * rho * np.cosh(2.0 * uv) * vv
               - 8.0 * rho * ch * vv * dens
               - 16.0 * rho * sh * cross)
    hu = ScalarField.from_values(geom, hu_vals) + (-2.0) * laplace_apply(v)

    hpsi_vals = (rho * ch)[None, :, :] * phi.values + (rho * sh * vv)[None, :, :] * psi.values
    hpsi = dirac_apply(phi) - SpinorField.from_values(geom, hpsi_vals)
    return Variation(hu, 16.0 * hpsi)
