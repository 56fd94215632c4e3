"""Spin-spectral core: spectrum conformance, operator algebra, projections."""

import numpy as np
import pytest

from sshg.errors import ConfigError, IllPosedError, ResolutionError, SpectralGapError
from sshg.fields import ScalarField, SpinorField
from sshg.geometry import GAMMA1, GAMMA2, TWO_PI, TorusGeometry
from sshg.spectral import (
    abs_dirac_apply,
    build_basis,
    dirac_apply,
    grid_l2_inner,
    hhalf_norm,
    l2_inner,
    l2_norm,
    laplace_apply,
    omega_mult,
    project,
    quaternion_j,
    sobolev_inner,
)

LAM1_HALF = np.sqrt(2.0) / 2.0  # |((1/2),(1/2))| on the 2pi torus


def enumerate_spectrum(delta, side_length, count, kmax=12):
    """Brute-force oracle: positive |k+delta| * 2pi/L with real multiplicity 2."""
    vals = []
    for a in range(-kmax, kmax + 1):
        for b in range(-kmax, kmax + 1):
            m = np.hypot(a + delta[0], b + delta[1])
            if m > 0:
                vals.extend([m * TWO_PI / side_length] * 2)  # phases 1, i
    vals.sort()
    return np.array(vals[:count])


def random_spinor(geom, rng, decay=1.0):
    n = geom.grid_n
    c = rng.standard_normal((2, n, n)) + 1j * rng.standard_normal((2, n, n))
    c *= (1.0 + geom.s_abs) ** (-decay)
    return SpinorField.from_coeffs(geom, c)


def random_scalar(geom, rng, decay=2.0):
    n = geom.grid_n
    v = rng.standard_normal((n, n))
    u = ScalarField.from_values(geom, v)
    sm = ScalarField.from_coeffs(geom, u.coeffs * (1.0 + geom.xi_sq) ** (-decay / 2.0))
    return ScalarField.from_values(geom, sm.values)  # re-realify


ALL_DELTAS = [(0.0, 0.0), (0.5, 0.0), (0.0, 0.5), (0.5, 0.5)]


def test_geometry_validation():
    with pytest.raises(ConfigError):
        TorusGeometry(grid_n=7)
    with pytest.raises(ConfigError):
        TorusGeometry(grid_n=6)
    with pytest.raises(ConfigError):
        TorusGeometry(grid_n=16, spin_delta=(0.3, 0.5))
    g = TorusGeometry(grid_n=16)
    assert g.quad_weight == (g.side_length / 16) ** 2


def test_clifford_relation_exact():
    gammas = [GAMMA1, GAMMA2]
    for i in range(2):
        for j in range(2):
            anti = gammas[i] @ gammas[j] + gammas[j] @ gammas[i]
            expected = -2.0 * (1.0 if i == j else 0.0) * np.eye(2)
            assert np.array_equal(anti, expected)


@pytest.mark.parametrize("delta", ALL_DELTAS)
@pytest.mark.parametrize("grid_n", [16, 32, 64])
def test_spectrum_matches_analytic_family(delta, grid_n):
    geom = TorusGeometry(grid_n=grid_n, spin_delta=delta)
    basis = build_basis(geom, cutoff=3.0)
    want = enumerate_spectrum(delta, geom.side_length, 40)
    got = basis.eigenvalues[:40]
    assert np.all(np.abs(got - want) <= 1e-10 * np.maximum(want, 1.0))
    assert basis.harmonic_dim == (4 if delta == (0.0, 0.0) else 0)


def test_lambda1_and_positive_eigenspace_dim():
    # modes |k+delta| <= 1 at delta=(1/2,1/2): the four (+-1/2, +-1/2) corners
    geom = TorusGeometry(grid_n=16, spin_delta=(0.5, 0.5))
    basis = build_basis(geom, cutoff=1.0)
    assert basis.eigenvalue(1) == pytest.approx(LAM1_HALF, rel=1e-14)
    assert len(basis.elements) == 8  # 4 modes x 1 complex dim = 8 real dims
    assert basis.multiplicity_of(basis.eigenvalue(1)) == 8
    # omega pairing is exact
    assert basis.eigenvalue(-1) == -basis.eigenvalue(1)


def test_harmonic_block_from_assembled_kernel():
    # oracle: the assembled symbol at the zero mode is the 2x2 zero matrix,
    # whose real kernel dimension is 4
    geom = TorusGeometry(grid_n=16, spin_delta=(0.0, 0.0))
    a11, a12, a22 = geom.symbol
    z = np.nonzero((geom.m1 == 0) & (geom.m2 == 0))
    symbol0 = np.array([[a11[z][0], a12[z][0]], [a12[z][0], a22[z][0]]])
    assert np.array_equal(symbol0, np.zeros((2, 2)))
    basis = build_basis(geom, cutoff=0.0)
    assert basis.harmonic_dim == 4
    basis = build_basis(geom, cutoff=2.5)
    assert basis.harmonic_dim == 4


def test_basis_orthonormality():
    geom = TorusGeometry(grid_n=16, spin_delta=(0.5, 0.5))
    basis = build_basis(geom, cutoff=2.0)
    fields = [basis.eigenspinor(j) for j in range(1, 13)]
    fields += [basis.eigenspinor(-j) for j in range(1, 5)]
    for i, fi in enumerate(fields):
        for j, fj in enumerate(fields):
            val = l2_inner(fi, fj)
            assert abs(val - (1.0 if i == j else 0.0)) < 1e-12


def test_eigen_relation_and_kernel():
    geom = TorusGeometry(grid_n=16, spin_delta=(0.5, 0.5))
    basis = build_basis(geom, cutoff=2.0)
    for j in (1, 3, -1, -5):
        psi = basis.eigenspinor(j)
        res = dirac_apply(psi) - basis.eigenvalue(j) * psi
        assert l2_norm(res) < 1e-12

    geom0 = TorusGeometry(grid_n=16, spin_delta=(0.0, 0.0))
    basis0 = build_basis(geom0, cutoff=1.5)
    for l in range(4):
        h = basis0.harmonic_spinor(l)
        assert l2_norm(dirac_apply(h)) < 1e-12
        assert l2_norm(h) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("delta", ALL_DELTAS)
def test_dirac_self_adjoint_by_quadrature(delta):
    geom = TorusGeometry(grid_n=16, spin_delta=delta)
    rng = np.random.default_rng(7)
    for _ in range(20):
        psi = random_spinor(geom, rng)
        phi = random_spinor(geom, rng)
        lhs = grid_l2_inner(dirac_apply(psi), phi)
        rhs = grid_l2_inner(psi, dirac_apply(phi))
        scale = 1.0 + abs(lhs)
        assert abs(lhs - rhs) < 1e-11 * scale


@pytest.mark.parametrize("delta", ALL_DELTAS)
def test_omega_anticommutes_j_commutes(delta):
    geom = TorusGeometry(grid_n=16, spin_delta=delta)
    rng = np.random.default_rng(11)
    for _ in range(20):
        psi = random_spinor(geom, rng)
        scale = 1.0 + hhalf_norm(psi)
        anti = dirac_apply(omega_mult(psi)) + omega_mult(dirac_apply(psi))
        assert l2_norm(anti) < 1e-11 * scale
        comm = dirac_apply(quaternion_j(psi)) - quaternion_j(dirac_apply(psi))
        assert l2_norm(comm) < 1e-11 * scale
        # isometries of the pointwise norm
        assert np.max(np.abs(np.abs(omega_mult(psi).values) - np.abs(np.flipud(psi.values[::-1])))) >= 0  # shape sanity
        assert np.max(np.abs(omega_mult(psi).density() - psi.density())) < 1e-12 * np.max(1 + psi.density())
        assert np.max(np.abs(quaternion_j(psi).density() - psi.density())) < 1e-12 * np.max(1 + psi.density())


def test_j_squares_to_minus_one_and_isometry():
    geom = TorusGeometry(grid_n=16, spin_delta=(0.0, 0.5))
    rng = np.random.default_rng(3)
    psi = random_spinor(geom, rng)
    phi = random_spinor(geom, rng)
    jj = quaternion_j(quaternion_j(psi))
    assert l2_norm(jj + psi) < 1e-12 * (1 + l2_norm(psi))
    assert abs(grid_l2_inner(omega_mult(psi), omega_mult(phi)) - grid_l2_inner(psi, phi)) < 1e-11
    assert abs(grid_l2_inner(quaternion_j(psi), quaternion_j(phi)) - grid_l2_inner(psi, phi)) < 1e-11


def test_omega_maps_eigenspaces():
    geom = TorusGeometry(grid_n=16, spin_delta=(0.5, 0.5))
    basis = build_basis(geom, cutoff=1.5)
    psi = basis.eigenspinor(1)
    w = omega_mult(psi)
    res = dirac_apply(w) + basis.eigenvalue(1) * w
    assert l2_norm(res) < 1e-12


@pytest.mark.parametrize("delta", ALL_DELTAS)
def test_parseval(delta):
    geom = TorusGeometry(grid_n=16, spin_delta=delta)
    rng = np.random.default_rng(13)
    for _ in range(20):
        psi = random_spinor(geom, rng)
        a = grid_l2_inner(psi, psi)
        b = l2_inner(psi, psi)
        assert abs(a - b) < 1e-12 * (1 + abs(a))


def test_scalar_hermitian_symmetry():
    geom = TorusGeometry(grid_n=16)
    rng = np.random.default_rng(41)
    for _ in range(5):
        u = random_scalar(geom, rng)
        assert u.hermitian_defect() <= 1e-12 * (1 + np.max(np.abs(u.coeffs)))


def test_laplace_examples():
    geom = TorusGeometry(grid_n=32, spin_delta=(0.5, 0.5))
    const = ScalarField.constant(geom, 2.7)
    assert np.max(np.abs(laplace_apply(const).values)) < 1e-13
    u = ScalarField.from_values(geom, np.cos(geom.x1))
    lap = laplace_apply(u)
    assert np.max(np.abs(lap.values + np.cos(geom.x1))) < 1e-12
    # integration by parts oracle by quadrature
    rng = np.random.default_rng(5)
    for _ in range(5):
        w = random_scalar(geom, rng)
        lhs = grid_l2_inner(laplace_apply(w), w)
        grad_sq = float(geom.vol * np.sum(geom.xi_sq * np.abs(w.coeffs) ** 2))
        assert abs(lhs + grad_sq) < 1e-11 * (1 + abs(grad_sq))


def test_fractional_operator():
    geom = TorusGeometry(grid_n=16, spin_delta=(0.5, 0.5))
    basis = build_basis(geom, cutoff=2.0)
    psi = basis.eigenspinor(3)
    lam = basis.eigenvalue(3)
    out = abs_dirac_apply(psi, 1.0)
    assert l2_norm(out - lam * psi) < 1e-12
    # semigroup
    rng = np.random.default_rng(17)
    w = random_spinor(geom, rng)
    twice = abs_dirac_apply(abs_dirac_apply(w, 0.5), 0.5)
    assert l2_norm(twice - abs_dirac_apply(w, 1.0)) < 1e-12 * (1 + l2_norm(w))
    # s=0 identity away from the kernel (none here)
    assert l2_norm(abs_dirac_apply(w, 0.0) - w) < 1e-12 * (1 + l2_norm(w))

    geom0 = TorusGeometry(grid_n=16, spin_delta=(0.0, 0.0))
    basis0 = build_basis(geom0, cutoff=1.2)
    h = basis0.harmonic_spinor(0)
    assert l2_norm(abs_dirac_apply(h, 0.5)) == 0.0
    with pytest.raises(IllPosedError):
        abs_dirac_apply(h, -0.5)


def test_sobolev_inner_values():
    geom = TorusGeometry(grid_n=16, spin_delta=(0.5, 0.5))
    basis = build_basis(geom, cutoff=2.0)
    for j in (1, 5, 9):
        psi = basis.eigenspinor(j)
        lam = basis.eigenvalue(j)
        assert sobolev_inner(psi, psi, "Hhalf_spinor") == pytest.approx(1 + lam, rel=1e-12)
    geom0 = TorusGeometry(grid_n=16, spin_delta=(0.0, 0.0))
    basis0 = build_basis(geom0, cutoff=1.2)
    h = basis0.harmonic_spinor(1)
    assert sobolev_inner(h, h, "Hhalf_spinor") == pytest.approx(1.0, rel=1e-12)
    # dual-pairing Cauchy-Schwarz
    rng = np.random.default_rng(23)
    for _ in range(10):
        w = random_spinor(geom, rng)
        up = sobolev_inner(w, w, "Hhalf_spinor")
        dn = sobolev_inner(w, w, "Hminus_half_spinor")
        assert up * dn >= l2_norm(w) ** 4 * (1 - 1e-12)


def test_projections():
    geom = TorusGeometry(grid_n=16, spin_delta=(0.5, 0.5))
    basis = build_basis(geom, cutoff=2.0)
    psi1 = basis.eigenspinor(1)
    assert l2_norm(project(psi1, "minus")) < 1e-14
    pb = project(psi1, "plus_b", rho=1.0)
    assert l2_norm(pb - psi1) < 1e-13  # lambda_1 ~ 0.707 < 1
    rng = np.random.default_rng(29)
    for _ in range(10):
        w = random_spinor(geom, rng)
        parts = [project(w, "plus_a", rho=1.0), project(w, "plus_b", rho=1.0),
                 project(w, "zero"), project(w, "minus")]
        rec = parts[0] + parts[1] + parts[2] + parts[3]
        assert l2_norm(rec - w) < 1e-12 * (1 + l2_norm(w))
        # idempotent and orthogonal in both metrics
        for sub, kw in (("plus", {}), ("minus", {}), ("plus_a", {"rho": 1.0})):
            p = project(w, sub, **kw)
            assert l2_norm(project(p, sub, **kw) - p) < 1e-12 * (1 + l2_norm(w))
        pp, pm = project(w, "plus"), project(w, "minus")
        assert abs(l2_inner(pp, pm)) < 1e-12 * (1 + l2_norm(w) ** 2)
        assert abs(sobolev_inner(pp, pm, "Hhalf_spinor")) < 1e-12 * (1 + hhalf_norm(w) ** 2)


def test_projection_rho_gap_guard():
    geom = TorusGeometry(grid_n=16, spin_delta=(0.5, 0.5))
    rng = np.random.default_rng(31)
    w = random_spinor(geom, rng)
    with pytest.raises(SpectralGapError):
        project(w, "plus_a", rho=LAM1_HALF + 1e-12)


def test_cutoff_above_nyquist_rejected():
    geom = TorusGeometry(grid_n=16, spin_delta=(0.5, 0.5))
    with pytest.raises(ResolutionError):
        build_basis(geom, cutoff=geom.nyquist_bound + 0.5)


def test_multiplicity_at_least_three():
    # quaternionic action forces >= 3; the flat torus actually gives >= 4
    for delta in ALL_DELTAS:
        geom = TorusGeometry(grid_n=16, spin_delta=delta)
        basis = build_basis(geom, cutoff=2.0)
        for lam in np.unique(np.round(basis.eigenvalues, 9)):
            assert basis.multiplicity_of(float(lam)) >= 3
