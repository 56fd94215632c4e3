"""Matrix-free Krylov solvers in user-supplied inner products.

The iterate lives in any vector space whose elements support +, -, unary
negation and scalar multiplication (our field objects and tuples of fields
via small adapters).  `inner` defines the metric; operators must be
self-adjoint with respect to it, and positive definite for CG.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConditioningError


@dataclass
class SolveInfo:
    converged: bool
    iterations: int
    relative_residual: float


def cg(apply_op, b, inner, x0=None, tol=1e-12, maxiter=500, atol=0.0, raise_on_cap=True):
    """Conjugate gradients for an SPD operator in the given inner product.

    Returns (x, SolveInfo).  Stops when ||r|| <= max(tol * ||b||, atol); the
    absolute floor lets callers whose right-hand side is roundoff of a larger
    problem scale exit cleanly instead of iterating on noise.
    """
    norm_b = np.sqrt(max(inner(b, b), 0.0))
    stop = max(tol * norm_b, atol)
    if norm_b == 0.0 or norm_b <= stop:
        return 0.0 * b, SolveInfo(True, 0, 0.0)

    if x0 is None:
        x = 0.0 * b
        r = b
    else:
        x = x0
        r = b - apply_op(x0)
    rr = inner(r, r)
    if np.sqrt(max(rr, 0.0)) <= stop:
        return x, SolveInfo(True, 0, float(np.sqrt(max(rr, 0.0)) / norm_b))

    p = r
    for it in range(1, maxiter + 1):
        ap = apply_op(p)
        pap = inner(p, ap)
        if pap <= 0:
            # legitimate exit if the residual already sits at the noise floor
            if np.sqrt(max(rr, 0.0)) <= max(stop, 1e-14 * norm_b):
                return x, SolveInfo(True, it, float(np.sqrt(max(rr, 0.0)) / norm_b))
            raise ConditioningError(
                f"cg: operator lost positive definiteness (p.Ap = {pap:.3e})",
                residual=float(np.sqrt(max(rr, 0.0)) / norm_b),
            )
        alpha = rr / pap
        x = x + alpha * p
        r = r - alpha * ap
        rr_new = inner(r, r)
        if np.sqrt(max(rr_new, 0.0)) <= stop:
            return x, SolveInfo(True, it, float(np.sqrt(max(rr_new, 0.0)) / norm_b))
        p = r + (rr_new / rr) * p
        rr = rr_new

    relres = float(np.sqrt(max(rr, 0.0)) / norm_b)
    if raise_on_cap:
        raise ConditioningError(
            f"cg: iteration cap {maxiter} exceeded (relative residual {relres:.3e})",
            residual=relres,
        )
    return x, SolveInfo(False, maxiter, relres)


def minres(apply_op, b, inner, tol=1e-12, maxiter=400):
    """MINRES for a self-adjoint, possibly indefinite operator.

    Lanczos with Givens rotations, all pairings through `inner`.  Returns
    (x, SolveInfo); the iteration cap is not an error here because callers
    (Newton) damp and retry.
    """
    norm_b = np.sqrt(max(inner(b, b), 0.0))
    if norm_b == 0.0:
        return 0.0 * b, SolveInfo(True, 0, 0.0)

    x = 0.0 * b
    v_prev = None
    v = (1.0 / norm_b) * b
    beta = norm_b

    gamma_prev, gamma = 1.0, 1.0
    sigma_prev, sigma = 0.0, 0.0
    w_prev = 0.0 * b
    w = 0.0 * b
    eta = norm_b

    for it in range(1, maxiter + 1):
        av = apply_op(v)
        delta = inner(av, v)
        v_next = av - delta * v
        if v_prev is not None:
            v_next = v_next - beta * v_prev
        beta_next = np.sqrt(max(inner(v_next, v_next), 0.0))

        a0 = gamma * delta - gamma_prev * sigma * beta
        a1 = np.hypot(a0, beta_next)
        a2 = sigma * delta + gamma_prev * gamma * beta
        a3 = sigma_prev * beta
        if a1 == 0.0:
            return x, SolveInfo(True, it, 0.0)

        gamma_next = a0 / a1
        sigma_next = beta_next / a1

        w_next = (1.0 / a1) * (v - a3 * w_prev - a2 * w)
        x = x + (gamma_next * eta) * w_next
        eta = -sigma_next * eta

        relres = abs(eta) / norm_b
        if relres <= tol:
            return x, SolveInfo(True, it, float(relres))
        if beta_next == 0.0:
            return x, SolveInfo(True, it, float(relres))

        v_prev, v = v, (1.0 / beta_next) * v_next
        beta = beta_next
        w_prev, w = w, w_next
        gamma_prev, gamma = gamma, gamma_next
        sigma_prev, sigma = sigma, sigma_next

    return x, SolveInfo(False, maxiter, float(abs(eta) / norm_b))


class ProductVec:
    """Pair (scalar field, spinor field) as one Krylov vector."""

    __slots__ = ("u", "psi")

    def __init__(self, u, psi):
        self.u = u
        self.psi = psi

    def __add__(self, other):
        return ProductVec(self.u + other.u, self.psi + other.psi)

    def __sub__(self, other):
        return ProductVec(self.u - other.u, self.psi - other.psi)

    def __mul__(self, a):
        return ProductVec(float(a) * self.u, float(a) * self.psi)

    __rmul__ = __mul__

    def __neg__(self):
        return ProductVec(-self.u, -self.psi)
