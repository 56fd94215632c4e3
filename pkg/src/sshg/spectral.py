"""Dirac/Laplace operators, the eigenbasis, spectral projections and norms.

Everything is diagonal per Fourier mode: the Dirac symbol A(xi) is a 2x2
Hermitian matrix with eigenvalues +-|xi|, so |D|, (1+|D|)^{-1} and the
Sobolev multipliers act as scalar factors per mode, while P^{+-} are the
2x2 eigenprojectors of A(xi).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, IllPosedError, ResolutionError, SpectralGapError
from .fields import ScalarField, SpinorField
from .geometry import TorusGeometry

RHO_GAP = 1e-9  # hard guard: rho must stay outside this distance of the spectrum


def _as_geom(obj) -> TorusGeometry:
    if isinstance(obj, TorusGeometry):
        return obj
    return obj.geom


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

def dirac_apply(psi: SpinorField, geom=None) -> SpinorField:
    """Apply D through the 2x2 Clifford symbol at each mode."""
    g = psi.geom if geom is None else _as_geom(geom)
    if g is not psi.geom and g != psi.geom:
        raise ValueError("spinor lives on a different geometry")
    a11, a12, a22 = g.symbol
    c = psi.coeffs
    out = np.empty_like(c)
    out[0] = a11 * c[0] + a12 * c[1]
    out[1] = a12 * c[0] + a22 * c[1]
    return SpinorField(g, coeffs=out)


def laplace_apply(u: ScalarField, geom=None) -> ScalarField:
    """Fourier multiplier -|xi|^2 (divergence of the gradient)."""
    g = u.geom if geom is None else _as_geom(geom)
    return ScalarField(g, coeffs=-g.xi_sq * u.coeffs)


def abs_dirac_apply(psi: SpinorField, s: float) -> SpinorField:
    """|D|^s as the scalar multiplier |xi|^s; harmonic block annihilated."""
    g = psi.geom
    lam = g.s_abs
    nz = lam > 0
    if s < 0:
        zero_mass = np.abs(psi.coeffs[:, ~nz]).max(initial=0.0)
        scale = np.abs(psi.coeffs).max(initial=0.0)
        if zero_mass > 1e-14 * max(scale, 1e-300):
            raise IllPosedError("|D|^s with s < 0 is undefined on the harmonic block")
    mult = np.where(nz, np.where(nz, lam, 1.0) ** s, 0.0)
    return SpinorField(g, coeffs=psi.coeffs * mult)


def fractional_apply(psi: SpinorField, s: float, basis=None) -> SpinorField:
    return abs_dirac_apply(psi, s)


def omega_mult(psi: SpinorField) -> SpinorField:
    """Clifford action of the volume element: (p1, p2) -> (-p2, p1)."""
    c = psi.coeffs
    out = np.empty_like(c)
    out[0] = -c[1]
    out[1] = c[0]
    return SpinorField(psi.geom, coeffs=out)


def quaternion_j(psi: SpinorField) -> SpinorField:
    """D-commuting almost-complex structure: omega composed with conjugation."""
    v = np.conj(psi.values)
    out = np.empty_like(v)
    out[0] = -v[1]
    out[1] = v[0]
    return SpinorField.from_values(psi.geom, out)


def quaternion_act(psi: SpinorField, q) -> SpinorField:
    """Action of a quaternion q = (a, b, c, d) through a + bI + cJ + dK."""
    a, b, c, d = (float(t) for t in q)
    jpsi = quaternion_j(psi)
    return a * psi + (1j * b) * psi + c * jpsi + (1j * d) * jpsi


# ---------------------------------------------------------------------------
# inner products and norms
# ---------------------------------------------------------------------------

def l2_inner(a, b) -> float:
    """Real L^2 pairing; exact Parseval form on coefficients."""
    g = a.geom
    s = np.sum(np.conj(a.coeffs) * b.coeffs)
    return float(g.vol * s.real)


def grid_l2_inner(a, b) -> float:
    """Real L^2 pairing by grid quadrature (independent of the spectral path)."""
    g = a.geom
    if isinstance(a, SpinorField):
        s = np.sum(np.conj(a.values) * b.values)
    else:
        s = np.sum(a.values * b.values)
    return float(g.quad_weight * np.real(s))


_SCALAR_SPACES = ("H1_scalar", "Hminus1_scalar")
_SPINOR_SPACES = ("Hhalf_spinor", "Hminus_half_spinor")


def sobolev_inner(a, b, space: str, basis=None) -> float:
    """Sobolev pairings via diagonal multipliers.

    H1: 1+|xi|^2, H^-1: its inverse, H^{1/2}: 1+|xi|, H^{-1/2}: its inverse.
    The H^{-s} forms are the dual norms of L^2-represented functionals.
    """
    g = a.geom
    if space in _SCALAR_SPACES:
        if not isinstance(a, ScalarField) or not isinstance(b, ScalarField):
            raise ConfigError(f"space {space} expects scalar fields")
        mult = 1.0 + g.xi_sq
        if space == "Hminus1_scalar":
            mult = 1.0 / mult
        s = np.sum(mult * np.conj(a.coeffs) * b.coeffs)
    elif space in _SPINOR_SPACES:
        if not isinstance(a, SpinorField) or not isinstance(b, SpinorField):
            raise ConfigError(f"space {space} expects spinor fields")
        mult = 1.0 + g.s_abs
        if space == "Hminus_half_spinor":
            mult = 1.0 / mult
        s = np.sum(mult[None, :, :] * np.conj(a.coeffs) * b.coeffs)
    else:
        raise ConfigError(f"unknown Sobolev space tag {space!r}")
    return float(g.vol * s.real)


def h1_norm(u: ScalarField) -> float:
    return np.sqrt(max(sobolev_inner(u, u, "H1_scalar"), 0.0))


def hhalf_norm(psi: SpinorField) -> float:
    return np.sqrt(max(sobolev_inner(psi, psi, "Hhalf_spinor"), 0.0))


def hminus1_norm(u: ScalarField) -> float:
    return np.sqrt(max(sobolev_inner(u, u, "Hminus1_scalar"), 0.0))


def hminushalf_norm(psi: SpinorField) -> float:
    return np.sqrt(max(sobolev_inner(psi, psi, "Hminus_half_spinor"), 0.0))


def l2_norm(a) -> float:
    return np.sqrt(max(l2_inner(a, a), 0.0))


def gradient_energy(u: ScalarField) -> float:
    """Integral of |grad u|^2 over the torus (spectral)."""
    g = u.geom
    return float(g.vol * np.sum(g.xi_sq * np.abs(u.coeffs) ** 2))


def riesz_h1(u_dual: ScalarField) -> ScalarField:
    """Riesz representative in H^1 of an L^2-represented functional."""
    g = u_dual.geom
    return ScalarField(g, coeffs=u_dual.coeffs / (1.0 + g.xi_sq))


def riesz_hhalf(psi_dual: SpinorField) -> SpinorField:
    """Riesz representative in H^{1/2} of an L^2-represented functional."""
    g = psi_dual.geom
    return SpinorField(g, coeffs=psi_dual.coeffs / (1.0 + g.s_abs)[None, :, :])


def inv_one_plus_absD(psi: SpinorField) -> SpinorField:
    """(1+|D|)^{-1} as the scalar multiplier (1+|xi|)^{-1}."""
    g = psi.geom
    return SpinorField(g, coeffs=psi.coeffs / (1.0 + g.s_abs)[None, :, :])


# ---------------------------------------------------------------------------
# spectral projections
# ---------------------------------------------------------------------------

def check_spectral_gap(geom: TorusGeometry, rho: float) -> float:
    gap = geom.spectral_gap(rho)
    if gap < RHO_GAP:
        raise SpectralGapError(
            f"rho={rho!r} lies within {gap:.3e} of a computed Dirac eigenvalue "
            f"(hard guard {RHO_GAP:g}); the analysis requires rho outside the spectrum"
        )
    return gap


def project(psi: SpinorField, subspace: str, basis=None, rho: float | None = None) -> SpinorField:
    """Project onto a spectral subspace of D: plus/minus/zero/plus_a/plus_b."""
    g = psi.geom
    c = psi.coeffs
    nz = g.s_abs > 0
    if subspace == "zero":
        return SpinorField(g, coeffs=c * (~nz)[None, :, :])
    n11, n12, n22 = g.unit_symbol
    if subspace in ("plus", "plus_a", "plus_b"):
        sign = 1.0
    elif subspace == "minus":
        sign = -1.0
    else:
        raise ConfigError(f"unknown spectral subspace {subspace!r}")
    sel = nz
    if subspace in ("plus_a", "plus_b"):
        if rho is None:
            raise ConfigError(f"subspace {subspace!r} requires rho")
        check_spectral_gap(g, rho)
        sel = nz & ((g.s_abs > rho) if subspace == "plus_a" else (g.s_abs < rho))
    out = np.empty_like(c)
    out[0] = 0.5 * ((c[0] + sign * (n11 * c[0] + n12 * c[1])) * sel)
    out[1] = 0.5 * ((c[1] + sign * (n12 * c[0] + n22 * c[1])) * sel)
    return SpinorField(g, coeffs=out)


# ---------------------------------------------------------------------------
# basis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BasisElement:
    """One real basis direction: mode (k1,k2), eigenvalue branch, phase 1 or i."""
    k1: int
    k2: int
    sign: int          # +1 / -1 eigenvalue branch, 0 for harmonic
    phase_imag: bool   # False -> v e_k, True -> (i v) e_k
    comp: int = 0      # harmonic block only: which C^2 component
    lam: float = 0.0


def _plus_eigenvector(xi1: float, xi2: float) -> np.ndarray:
    lam = np.hypot(xi1, xi2)
    v = np.array([-xi2, xi1 + lam], dtype=complex)
    nrm = np.linalg.norm(v)
    if nrm < 1e-12 * max(lam, 1.0):
        # xi on the negative xi1 axis: symbol is diag(|xi|, -|xi|)
        v = np.array([1.0, 0.0], dtype=complex)
        nrm = 1.0
    return v / nrm


@dataclass(frozen=True)
class SpectralBasis:
    """Ordered Dirac eigenpairs below a cutoff plus the harmonic block.

    Eigenvalues are listed with real multiplicities (two per mode per sign:
    phases 1 and i).  Negative-index pairs are the exact omega-mirrors of the
    positive ones: lambda_{-j} = -lambda_j, Psi_{-j} = omega . Psi_j.
    """

    geom: TorusGeometry
    cutoff: float
    eigenvalues: np.ndarray = field(repr=False)      # positive block, ascending
    elements: tuple = field(repr=False)              # BasisElement per positive entry
    harmonic: tuple = field(repr=False)
    harmonic_dim: int = 0

    def eigenvalue(self, j: int) -> float:
        if j == 0:
            raise IndexError("eigenvalue index j runs over nonzero integers")
        lam = self.eigenvalues[abs(j) - 1]
        return float(lam if j > 0 else -lam)

    def eigenspinor(self, j: int) -> SpinorField:
        if j == 0:
            raise IndexError("eigenspinor index j runs over nonzero integers")
        el = self.elements[abs(j) - 1]
        psi = self._element_field(el)
        return omega_mult(psi) if j < 0 else psi

    def harmonic_spinor(self, l: int) -> SpinorField:
        el = self.harmonic[l]
        g = self.geom
        c = np.zeros((2, g.grid_n, g.grid_n), dtype=complex)
        amp = (1j if el.phase_imag else 1.0) / g.side_length
        c[el.comp, el.k1, el.k2] = amp
        return SpinorField(g, coeffs=c)

    def _element_field(self, el: BasisElement) -> SpinorField:
        g = self.geom
        i1 = int(el.k1) % g.grid_n
        i2 = int(el.k2) % g.grid_n
        v = _plus_eigenvector(g.sxi1[i1, i2], g.sxi2[i1, i2])
        c = np.zeros((2, g.grid_n, g.grid_n), dtype=complex)
        amp = (1j if el.phase_imag else 1.0) / g.side_length
        c[:, i1, i2] = amp * v
        return SpinorField(g, coeffs=c)

    # counts of real dimensions per rho-subspace among the tabulated modes
    def rho_split_counts(self, rho: float) -> dict:
        check_spectral_gap(self.geom, rho)
        lam = self.eigenvalues
        return {
            "plus_a": int(np.count_nonzero(lam > rho)),
            "plus_b": int(np.count_nonzero(lam < rho)),
            "zero": self.harmonic_dim,
            "minus": int(lam.size),
        }

    def multiplicity_of(self, lam: float, rel_tol: float = 1e-9) -> int:
        return int(np.count_nonzero(np.abs(self.eigenvalues - lam) <= rel_tol * max(lam, 1.0)))


def build_basis(geom: TorusGeometry, cutoff: float) -> SpectralBasis:
    """Enumerate all eigenpairs with |xi| <= cutoff, deterministically ordered.

    Ordering: harmonic block first, then by |k+delta| ascending, ties broken
    lexicographically on k, phase 1 before phase i; the negative branch is
    implicit through the omega pairing.
    """
    if cutoff < 0:
        raise ConfigError("cutoff must be nonnegative")
    if cutoff > geom.nyquist_bound + 1e-12:
        raise ResolutionError(
            f"cutoff {cutoff} exceeds the Nyquist bound {geom.nyquist_bound:.6g} "
            f"for grid_n={geom.grid_n}"
        )
    n = geom.grid_n
    mask = geom.spinor_mask
    lam = geom.s_abs
    keep = mask & (lam <= cutoff * (1.0 + 1e-12) + 1e-300)
    idx1, idx2 = np.nonzero(keep)
    k1 = geom.k_int[idx1]
    k2 = geom.k_int[idx2]
    # exact integer tie-breaking: 4|k+delta|^2 is an integer for delta in {0,1/2}
    m1 = 2 * k1 + int(2 * geom.spin_delta[0])
    m2 = 2 * k2 + int(2 * geom.spin_delta[1])
    key = m1 * m1 + m2 * m2
    order = np.lexsort((k2, k1, key))

    elements = []
    harmonic = []
    for t in order:
        kk1, kk2 = int(k1[t]), int(k2[t])
        lam_t = float(lam[idx1[t], idx2[t]])
        if lam_t == 0.0:
            for comp in (0, 1):
                for ph in (False, True):
                    harmonic.append(BasisElement(kk1, kk2, 0, ph, comp=comp, lam=0.0))
            continue
        for ph in (False, True):
            elements.append(BasisElement(kk1, kk2, +1, ph, lam=lam_t))

    eigenvalues = np.array([el.lam for el in elements])
    return SpectralBasis(
        geom=geom,
        cutoff=float(cutoff),
        eigenvalues=eigenvalues,
        elements=tuple(elements),
        harmonic=tuple(harmonic),
        harmonic_dim=len(harmonic),
    )
