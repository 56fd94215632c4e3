"""The Nehari constraint G, fiber solves, multipliers and constrained gradients.

The manifold is the zero set of

    G(u, psi) = P^- (1+|D|)^{-1} (D psi - rho cosh(u) psi),

with free coordinates (u, psi^+ + psi^0); the negative part is always slaved
through the fiber solve.  On the negative subspace the fiber operator

    A phi = P^- (1+|D|)^{-1} (D - rho cosh(u)) phi

satisfies <A phi, chi>_{H^{1/2}} = <(D - rho cosh u) phi, chi>_{L^2} (the
(1+|D|) multipliers cancel), so -A is symmetric positive definite in the
H^{1/2} inner product and conjugate gradients apply directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .action import ActionParams, Variation, check_overflow, gradient_J
from .errors import ConfigError
from .fields import ScalarField, SpinorField
from .krylov import cg
from .spectral import (
    check_spectral_gap,
    dirac_apply,
    h1_norm,
    hhalf_norm,
    hminus1_norm,
    hminushalf_norm,
    inv_one_plus_absD,
    project,
    riesz_h1,
    riesz_hhalf,
    sobolev_inner,
)

FIBER_TOL = 1e-12
FIBER_MAXITER = 500


def _hhalf_inner(a: SpinorField, b: SpinorField) -> float:
    return sobolev_inner(a, b, "Hhalf_spinor")


def _mult_spinor(values_factor: np.ndarray, psi: SpinorField) -> SpinorField:
    """Pointwise multiply by a real grid function, back to coefficient space."""
    return SpinorField.from_values(psi.geom, values_factor[None, :, :] * psi.values)


def dirac_minus_potential(psi: SpinorField, cosh_u: np.ndarray, rho: float) -> SpinorField:
    return dirac_apply(psi) - _mult_spinor(rho * cosh_u, psi)


def constraint_G(u: ScalarField, psi: SpinorField, params: ActionParams, basis=None) -> SpinorField:
    """G(u, psi), supported in the negative spectral subspace."""
    uv = check_overflow(u, params)
    op = dirac_minus_potential(psi, np.cosh(uv), params.rho)
    return project(inv_one_plus_absD(op), "minus")


@dataclass
class NehariPoint:
    """A pair (u, psi) certified to satisfy G = 0 within tolerance."""

    u: ScalarField
    psi: SpinorField
    constraint_norm: float
    rho: float
    _split: dict = field(default_factory=dict, repr=False)

    def split(self, part: str) -> SpinorField:
        """Cached rho-split components: plus_a, plus_b, zero, minus."""
        if part not in self._split:
            if part in ("plus_a", "plus_b"):
                self._split[part] = project(self.psi, part, rho=self.rho)
            else:
                self._split[part] = project(self.psi, part)
        return self._split[part]

    def free_part(self) -> SpinorField:
        return self.psi - self.split("minus")

    def product_norm_sq(self) -> float:
        return h1_norm(self.u) ** 2 + hhalf_norm(self.psi) ** 2


@dataclass
class MultiplierData:
    """Negative-subspace Lagrange multiplier and the normal-equation residual."""

    varphi: SpinorField
    solve_residual: float

    def norm(self) -> float:
        return hhalf_norm(self.varphi)


def _fiber_operator(cosh_u: np.ndarray, rho: float):
    def apply_neg(phi: SpinorField) -> SpinorField:
        # -A restricted to the negative subspace (SPD in H^{1/2})
        out = inv_one_plus_absD(dirac_minus_potential(phi, cosh_u, rho))
        return -1.0 * project(out, "minus")
    return apply_neg


def fiber_solve(u: ScalarField, psi_free: SpinorField, params: ActionParams,
                basis=None, x0: SpinorField | None = None,
                tol: float = FIBER_TOL, maxiter: int = FIBER_MAXITER) -> NehariPoint:
    """Slave the negative part: solve A psi^- = -(same operator) psi_free.

    psi_free must have no negative component; returns the certified point
    (u, psi_free + psi^-).
    """
    uv = check_overflow(u, params)
    check_spectral_gap(u.geom, params.rho)
    neg_part = project(psi_free, "minus")
    free_scale = hhalf_norm(psi_free)
    if hhalf_norm(neg_part) > 1e-10 * max(free_scale, 1.0):
        raise ConfigError("fiber_solve expects psi_free with zero negative part")

    cosh_u = np.cosh(uv)
    rho = params.rho
    apply_m = _fiber_operator(cosh_u, rho)
    b = project(inv_one_plus_absD(dirac_minus_potential(psi_free, cosh_u, rho)), "minus")
    atol = 1e-14 * max(free_scale, 1.0)
    psi_minus, info = cg(apply_m, b, _hhalf_inner, x0=x0, tol=tol, maxiter=maxiter, atol=atol)

    psi = psi_free + psi_minus
    cert = hhalf_norm(constraint_G(u, psi, params))
    return NehariPoint(u=u, psi=psi, constraint_norm=cert, rho=rho)


def project_to_manifold(u: ScalarField, psi: SpinorField, params: ActionParams,
                        basis=None, tol: float = FIBER_TOL) -> NehariPoint:
    """Retraction: keep u and the non-negative part of psi, re-solve psi^-."""
    minus = project(psi, "minus")
    free = psi - minus
    return fiber_solve(u, free, params, x0=minus, tol=tol)


# ---------------------------------------------------------------------------
# multipliers and constrained gradients
# ---------------------------------------------------------------------------

def _dg_adjoint(point: NehariPoint, params: ActionParams, w: SpinorField):
    """dG(u,psi)^* w in the product metric H^1 x H^{1/2}.

    <dG[v,phi], w>_{H^{1/2}} = <phi, (D - rho cosh u) w>_{L^2}
                               - rho int sinh(u) v Re<psi, w>,
    so the adjoint pair is (Riesz_{H^1}(-rho sinh(u) Re<psi,w>),
    Riesz_{H^{1/2}}((D - rho cosh u) w)).
    """
    uv = point.u.values
    rho = params.rho
    cross = np.real(np.sum(np.conj(point.psi.values) * w.values, axis=0))
    du_dual = ScalarField.from_values(point.u.geom, -rho * np.sinh(uv) * cross)
    dpsi_dual = dirac_minus_potential(w, np.cosh(uv), rho)
    return riesz_h1(du_dual), riesz_hhalf(dpsi_dual)


def _dg_apply(point: NehariPoint, params: ActionParams, v: ScalarField, phi: SpinorField) -> SpinorField:
    """dG(u,psi)[v, phi], negative-subspace valued."""
    uv = point.u.values
    rho = params.rho
    lin = dirac_minus_potential(phi, np.cosh(uv), rho)
    lin = lin - _mult_spinor(rho * np.sinh(uv) * v.values, point.psi)
    return project(inv_one_plus_absD(lin), "minus")


def _normal_equation_solve(point: NehariPoint, params: ActionParams,
                           rhs: SpinorField, scale: float = 1.0,
                           tol=1e-12, maxiter=FIBER_MAXITER):
    """Solve (dG dG^*) w = rhs on the negative subspace (SPD Gram operator)."""

    def gram(w: SpinorField) -> SpinorField:
        du, dpsi = _dg_adjoint(point, params, w)
        return _dg_apply(point, params, du, dpsi)

    atol = 1e-14 * max(scale, 1.0)
    return cg(gram, rhs, _hhalf_inner, tol=tol, maxiter=maxiter, atol=atol)


def lagrange_multiplier(point: NehariPoint, params: ActionParams, basis=None) -> MultiplierData:
    """Least-squares multiplier of the constrained criticality system.

    Solves the normal equations (dG dG^*) w = dG[Riesz dJ]; the multiplier of
    the 16-normalized system is varphi = w / 16.
    """
    g = gradient_J(point.u, point.psi, params).riesz()
    rhs = _dg_apply(point, params, g.du, g.dpsi)
    scale = h1_norm(g.du) + hhalf_norm(g.dpsi)
    w, info = _normal_equation_solve(point, params, rhs, scale=scale)
    return MultiplierData(varphi=(1.0 / 16.0) * w, solve_residual=info.relative_residual)


@dataclass
class TangentResult:
    """Constrained gradient data at a certified point."""

    tangent: Variation            # Riesz representatives, tangent to N_rho
    norm: float                   # product-metric norm of the tangent
    alpha: ScalarField            # u-equation residual density (dual)
    beta: SpinorField             # psi-equation residual density (dual)
    alpha_norm: float             # H^{-1} norm
    beta_norm: float              # H^{-1/2} norm
    multiplier: MultiplierData
    tangency: float               # ||dG[tangent]||_{H^{1/2}}


def constrained_gradient(point: NehariPoint, params: ActionParams, basis=None) -> TangentResult:
    """Riesz representative of dJ restricted to ker dG, plus PS residual data."""
    uv = point.u.values
    rho = params.rho
    gdual = gradient_J(point.u, point.psi, params)
    g = gdual.riesz()
    rhs = _dg_apply(point, params, g.du, g.dpsi)
    g_scale = h1_norm(g.du) + hhalf_norm(g.dpsi)
    w, info = _normal_equation_solve(point, params, rhs, scale=g_scale)
    wdu, wdpsi = _dg_adjoint(point, params, w)
    t_u = g.du - wdu
    t_psi = g.dpsi - wdpsi
    tangent = Variation(t_u, t_psi, u_space="H1", psi_space="H1/2")
    norm = float(np.sqrt(max(
        sobolev_inner(t_u, t_u, "H1_scalar") + sobolev_inner(t_psi, t_psi, "Hhalf_spinor"), 0.0)))
    tangency = hhalf_norm(_dg_apply(point, params, t_u, t_psi))

    varphi = (1.0 / 16.0) * w
    cross = np.real(np.sum(np.conj(point.psi.values) * varphi.values, axis=0))
    alpha = gdual.du + ScalarField.from_values(point.u.geom, 16.0 * rho * np.sinh(uv) * cross)
    beta = (1.0 / 16.0) * gdual.dpsi - dirac_minus_potential(varphi, np.cosh(uv), rho)
    return TangentResult(
        tangent=tangent,
        norm=norm,
        alpha=alpha,
        beta=beta,
        alpha_norm=hminus1_norm(alpha),
        beta_norm=hminushalf_norm(beta),
        multiplier=MultiplierData(varphi=varphi, solve_residual=info.relative_residual),
        tangency=tangency,
    )


def fiber_rayleigh_margin(u: ScalarField, params: ActionParams, rng, n_samples: int = 50) -> float:
    """Most positive Rayleigh quotient of A over random negative directions.

    Negative-definiteness of the fiber operator means every quotient is
    <= -min(lambda_1/(1+lambda_1), rho); returns max over samples (should be
    below that bound).
    """
    geom = u.geom
    uv = check_overflow(u, params)
    apply_m = _fiber_operator(np.cosh(uv), params.rho)
    worst = -np.inf
    n = geom.grid_n
    for _ in range(n_samples):
        c = rng.standard_normal((2, n, n)) + 1j * rng.standard_normal((2, n, n))
        c *= (1.0 + geom.s_abs) ** -1.0
        phi = project(SpinorField.from_coeffs(geom, c), "minus")
        quot = -_hhalf_inner(apply_m(phi), phi) / _hhalf_inner(phi, phi)
        worst = max(worst, quot)
    return float(worst)
