"""Z2-equivariant sweepouts, the second min-max level, and multiplicity tools.

A sweepout is a circle of [-1,1]-valued profiles chi(theta, .) with a thin
interface band, antiperiodic in theta with period pi.  Multiplying a large
constant by chi produces the equivariant family u_theta; the fountain-type
disk min-max over Z2-equivariant fillings of that family yields the second
critical level c2 >= c1, with an orthogonal-restart fallback inside
{<u, u1>_{H1} = 0} when the two levels coincide.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .action import ActionParams, Variation, evaluate_J
from .errors import (
    CertificationError,
    ConfigError,
    ResolutionError,
    SSHGError,
)
from .fields import ScalarField, SpinorField
from .geometry import TorusGeometry
from .minmax import (
    MinmaxConfig,
    SolutionRecord,
    linking_constants,
    make_record,
    minmax_deform,
    newton_refine,
)
from .nehari import NehariPoint, constrained_gradient, fiber_solve
from .spectral import h1_norm, hhalf_norm, quaternion_act, sobolev_inner

DISK_RADII = 4
HANDOFF_GRAD = 1e3  # Newton is cheap and guarded; try it from almost anywhere


# ---------------------------------------------------------------------------
# mollified antiperiodic profile
# ---------------------------------------------------------------------------

def _smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1, flat at both ends."""
    x = np.asarray(x, dtype=float)
    gx = np.where(x > 0, np.exp(-1.0 / np.maximum(x, 1e-300)), 0.0)
    g1 = np.where(1 - x > 0, np.exp(-1.0 / np.maximum(1 - x, 1e-300)), 0.0)
    return gx / (gx + g1)


def _profile(t, delta):
    """Antiperiodic mollified square wave: +1 on (delta, pi-delta), F(t+pi) = -F(t)."""
    s = np.mod(t, 2.0 * np.pi)
    sign = np.where(s < np.pi, 1.0, -1.0)
    s = np.where(s < np.pi, s, s - np.pi)
    v = np.minimum(s, np.pi - s)
    ramp = np.where(v >= delta, 1.0, 2.0 * _smooth_step((v + delta) / (2.0 * delta)) - 1.0)
    return sign * ramp


@dataclass
class SweepoutChi:
    """Sweepout family evaluator with certified interface-volume budget."""

    geom: TorusGeometry
    epsilon: float
    width_delta: float       # mollification half-width in the profile argument
    delta_margin: float      # height function maps into [margin, pi - margin]
    height_axis: int = 1     # torus coordinate playing the Morse-height role
    interface_volumes: np.ndarray = field(default=None, repr=False)

    def height(self, y):
        """Piecewise-linear two-to-one height into [margin, pi - margin]."""
        L = self.geom.side_length
        w = np.mod(np.asarray(y, dtype=float), L) * (2.0 / L)
        tri = np.where(w <= 1.0, w, 2.0 - w)
        return self.delta_margin + (np.pi - 2.0 * self.delta_margin) * tri

    def evaluate_1d(self, theta, y):
        return _profile(self.height(y) + theta, self.width_delta)

    def evaluate(self, theta, geom=None) -> np.ndarray:
        """chi(theta, .) sampled on a grid (any resolution; chi is analytic)."""
        g = self.geom if geom is None else geom
        y = np.arange(g.grid_n) * (g.side_length / g.grid_n)
        line = self.evaluate_1d(theta, y)
        if self.height_axis == 1:
            return np.ones((g.grid_n, 1)) * line[None, :]
        return line[:, None] * np.ones((1, g.grid_n))

    def interface_volume(self, theta) -> float:
        g = self.geom
        vals = self.evaluate(theta, g)
        inside = np.abs(vals) < 1.0 - 1e-12
        return float(np.count_nonzero(inside) * g.quad_weight)


def build_sweepout_chi(geom: TorusGeometry, epsilon: float,
                       n_theta_check: int = 64) -> SweepoutChi:
    """Mollified square-wave sweepout with interface volume < epsilon.

    The transition strips must span at least 4 grid cells of `geom`; together
    with the two-strip volume bound (0.7 epsilon by construction) this forces
    epsilon/Vol >= ~11.4/grid_n, a resolution error otherwise.
    """
    vol = geom.vol
    if not (0.0 < epsilon < vol / 4.0):
        raise ConfigError(f"epsilon must lie in (0, Vol/4) = (0, {vol / 4.0:g})")
    eps_frac = epsilon / vol

    delta_margin = 0.15
    for _ in range(3):
        width_delta = 0.35 * eps_frac * (np.pi - 2.0 * delta_margin)
        delta_margin = max(0.15, 1.5 * width_delta)
    if width_delta >= delta_margin:
        raise ConfigError(f"epsilon too large for the profile margins (eps={epsilon:g})")

    strip_cells = 0.35 * eps_frac * geom.grid_n
    if strip_cells < 4.0:
        raise ResolutionError(
            f"interface band spans {strip_cells:.2f} grid cells (< 4) at "
            f"grid_n={geom.grid_n}; refine the grid or enlarge epsilon"
        )

    chi = SweepoutChi(geom=geom, epsilon=epsilon, width_delta=width_delta,
                      delta_margin=delta_margin)

    # certify the three sweepout properties on a theta sweep
    ones = chi.evaluate(0.0, geom)
    if np.max(np.abs(ones - 1.0)) > 1e-12:
        raise CertificationError("sweepout property (i) failed: chi(0,.) != 1")
    thetas = np.linspace(0.0, 2.0 * np.pi, n_theta_check, endpoint=False)
    vols = []
    for th in thetas:
        a = chi.evaluate(th, geom)
        b = chi.evaluate(th + np.pi, geom)
        if np.max(np.abs(a + b)) > 1e-12:
            raise CertificationError("sweepout property (ii) failed: antiperiodicity")
        vols.append(chi.interface_volume(th))
    vols = np.array(vols)
    if np.max(vols) >= epsilon:
        raise CertificationError(
            f"sweepout property (iii) failed: interface volume {np.max(vols):.4g} "
            f">= epsilon {epsilon:.4g}"
        )
    chi.interface_volumes = vols
    return chi


# ---------------------------------------------------------------------------
# equivariant family
# ---------------------------------------------------------------------------

@dataclass
class EquivariantFamily:
    theta_grid: np.ndarray
    points: list
    continuation_residuals: list
    u_bar: float
    s: float
    chi: SweepoutChi
    max_energy: float

    def __len__(self):
        return len(self.points)


def _family_attempt(u_bar, s, chi, params, basis, thetas, geom):
    psi1 = basis.eigenspinor(1)
    half = len(thetas) // 2
    points, resids = [], []
    warm = None
    for th in thetas[:half]:
        u = ScalarField.from_values(geom, chi.evaluate(float(th), geom) * u_bar)
        pt = fiber_solve(u, s * psi1, params, x0=warm)
        warm = pt.split("minus")
        points.append(pt)
        resids.append(pt.constraint_norm)
    # mirror half: u_{theta+pi} = -u_theta exactly, psi identical (cosh even)
    for pt in points[:half]:
        mirrored = NehariPoint(u=-1.0 * pt.u, psi=pt.psi,
                               constraint_norm=pt.constraint_norm, rho=pt.rho)
        points.append(mirrored)
        resids.append(pt.constraint_norm)
    energies = [evaluate_J(p.u, p.psi, params) for p in points]
    return points, resids, float(np.max(energies))


def equivariant_family(u_bar: float, s: float, chi: SweepoutChi,
                       params: ActionParams, basis, n_theta: int = 64,
                       retries: int = 3) -> EquivariantFamily:
    """Family (u_theta, psi_theta) on the manifold with max_theta J < 0.

    u_theta = chi(theta,.) * u_bar; the fiber part is continued in theta with
    warm starts.  Certification failure retries with larger s (then u_bar,
    then a smaller-epsilon sweepout when the grid permits).
    """
    if n_theta < 32 or n_theta % 2 != 0:
        raise ConfigError("n_theta must be even and >= 32")
    geom = basis.geom
    thetas = np.linspace(0.0, 2.0 * np.pi, n_theta, endpoint=False)

    attempt = 0
    cur_u, cur_s, cur_chi = float(u_bar), float(s), chi
    while True:
        points, resids, max_j = _family_attempt(cur_u, cur_s, cur_chi, params,
                                                basis, thetas, geom)
        if max_j < 0.0:
            fam = EquivariantFamily(theta_grid=thetas, points=points,
                                    continuation_residuals=resids,
                                    u_bar=cur_u, s=cur_s, chi=cur_chi,
                                    max_energy=max_j)
            _certify_family(fam)
            return fam
        attempt += 1
        if attempt > retries:
            worst = int(np.argmax([evaluate_J(p.u, p.psi, params) for p in points]))
            raise CertificationError(
                f"equivariant family certification failed after {retries} retries: "
                f"J = {max_j:.4g} > 0 at theta = {thetas[worst]:.4f}"
            )
        cur_s *= 1.5
        if attempt >= 2:
            cur_u += 0.3
        if attempt >= 3:
            try:
                cur_chi = build_sweepout_chi(cur_chi.geom, 0.5 * cur_chi.epsilon)
            except (ResolutionError, ConfigError):
                pass


def _certify_family(fam: EquivariantFamily) -> None:
    half = len(fam.points) // 2
    for i in range(half):
        a, b = fam.points[i], fam.points[i + half]
        if not np.array_equal(a.u.values, -b.u.values):
            raise CertificationError("family symmetry u_{theta+pi} = -u_theta broken")
        drift = hhalf_norm(a.psi - b.psi)
        if drift > 1e-10 * (1.0 + hhalf_norm(a.psi)):
            raise CertificationError("family symmetry psi_{theta+pi} = psi_theta broken")
    if not fam.max_energy < 0.0:
        raise CertificationError("family max energy is not negative")


# ---------------------------------------------------------------------------
# equivariant deformation (paired nodes)
# ---------------------------------------------------------------------------

def _sigma_point(pt: NehariPoint) -> NehariPoint:
    """The Z2 action on the scalar component; J and the constraint are even."""
    return NehariPoint(u=-1.0 * pt.u, psi=pt.psi,
                       constraint_norm=pt.constraint_norm, rho=pt.rho)


def _equivariant_deform(nodes, frozen, pairs, segments, config, params):
    """minmax_deform with synchronized Z2-partner updates.

    pairs[i] is the index of the partner of node i (pairs[i] == i for the
    self-paired center, whose u-component is pinned to zero).
    """

    def hook(idx, cand, nodes_, energies_, params_):
        partner = pairs[idx]
        if partner == idx:
            free = cand.psi - cand.split("minus")
            cand = fiber_solve(ScalarField.zeros(cand.u.geom), free, params_)
        j = evaluate_J(cand.u, cand.psi, params_)
        nodes_[idx] = cand
        energies_[idx] = j
        if partner != idx:
            nodes_[partner] = _sigma_point(cand)
            energies_[partner] = j

    record, diags = minmax_deform(nodes, frozen, config, params,
                                  segments=segments, respread=None,
                                  step_hook=hook)
    return record, diags


def equivariance_defect(nodes, pairs) -> float:
    worst = 0.0
    for i, j in enumerate(pairs):
        if j < i:
            continue
        a, b = nodes[i], nodes[j]
        du = h1_norm(a.u + b.u)
        dpsi = hhalf_norm(a.psi - b.psi)
        scale = 1.0 + h1_norm(a.u) + hhalf_norm(a.psi)
        worst = max(worst, (du + dpsi) / scale)
    return worst


def refine_if_possible(record: SolutionRecord, params: ActionParams,
                       newton_tol: float) -> SolutionRecord:
    """Newton handoff: accept the refined record only if it converged to a
    nonzero solution; otherwise keep the flagged deformation candidate."""
    res = constrained_gradient(record.point, params)
    if res.norm > HANDOFF_GRAD:
        return record
    try:
        refined = newton_refine(record.point, params, newton_tol=newton_tol,
                                check_pre=False)
    except SSHGError:
        return record
    if refined.refined and refined.classification != "trivial":
        return refined
    return record


def equivariant_disk_minmax(family: EquivariantFamily, config: MinmaxConfig,
                            params: ActionParams, basis,
                            n_theta_disk: int = 16, n_radii: int = DISK_RADII):
    """Fountain-type min-max over Z2-equivariant fillings of the family.

    The disk w(r e^{i theta}) = (r u_theta, fiber(sPsi_1)) is deformed with
    synchronized antipodal updates; the boundary circle (the family) stays
    fixed at negative energy.  Returns (SolutionRecord, c2, PSDiagnostics).
    """
    geom = basis.geom
    n_fam = len(family)
    if n_fam % n_theta_disk != 0 or n_theta_disk % 2 != 0:
        n_theta_disk = 16 if n_fam % 16 == 0 else (n_fam // (n_fam // 16 + 1))
        while n_fam % n_theta_disk or n_theta_disk % 2:
            n_theta_disk -= 1
        if n_theta_disk < 4:
            raise ConfigError("family size admits no even theta subsampling")
    stride = n_fam // n_theta_disk
    psi1 = basis.eigenspinor(1)
    s = family.s

    nodes, frozen, pairs = [], [], []
    nodes.append(fiber_solve(ScalarField.zeros(geom), s * psi1, params))
    frozen.append(False)
    pairs.append(0)
    index = {}
    radii = np.linspace(0.0, 1.0, n_radii + 1)[1:]
    half_disk = n_theta_disk // 2
    for it in range(n_theta_disk):
        th_idx = it * stride
        fam_pt = family.points[th_idx]
        warm = None
        for ir, r in enumerate(radii):
            if ir == len(radii) - 1:
                pt = fam_pt
            else:
                u = ScalarField.from_values(geom, float(r) * fam_pt.u.values)
                pt = fiber_solve(u, s * psi1, params, x0=warm)
                warm = pt.split("minus")
            index[(ir, it)] = len(nodes)
            nodes.append(pt)
            frozen.append(ir == len(radii) - 1)
            pairs.append(None)
    for (ir, it), k in index.items():
        pairs[k] = index[(ir, (it + half_disk) % n_theta_disk)]

    segments = []
    for it in range(n_theta_disk):
        segments.append((0, index[(0, it)]))
        for ir in range(len(radii) - 1):
            segments.append((index[(ir, it)], index[(ir + 1, it)]))

    record, diags = _equivariant_deform(nodes, frozen, pairs, segments, config, params)
    defect = equivariance_defect(nodes, pairs)
    if defect > 1e-9:
        raise CertificationError(f"equivariance drift {defect:.3e} exceeds 1e-9")

    refined = refine_if_possible(record, params, config.newton_tol)
    c2 = refined.level
    return refined, float(c2), diags


# ---------------------------------------------------------------------------
# orthogonal restart
# ---------------------------------------------------------------------------

def orthogonal_restart(u1: ScalarField, family: EquivariantFamily,
                       config: MinmaxConfig, params: ActionParams, basis):
    """Mountain pass inside {<u, u1>_{H1} = 0} seeded through the family.

    theta_0 with <u1, u_{theta_0}> = 0 exists by the intermediate value
    theorem (the family is theta-antisymmetric); descent directions are
    projected against u1 so orthogonality propagates exactly.
    """
    geom = basis.geom
    u1_sq = sobolev_inner(u1, u1, "H1_scalar")
    if u1_sq <= 0:
        raise ConfigError("orthogonal restart needs a nonzero first solution")

    def pairing(theta: float) -> float:
        u_th = ScalarField.from_values(
            geom, family.chi.evaluate(float(theta), geom) * family.u_bar)
        return sobolev_inner(u1, u_th, "H1_scalar")

    thetas = family.theta_grid
    vals = np.array([pairing(th) for th in thetas])
    scale = max(np.max(np.abs(vals)), 1e-300)
    if np.max(np.abs(vals)) <= 1e-12 * np.sqrt(u1_sq):
        theta0 = 0.0
    else:
        # antisymmetry p(theta+pi) = -p(theta) guarantees a sign change
        k = None
        for i in range(len(thetas)):
            a, b = vals[i], vals[(i + 1) % len(thetas)]
            if a == 0.0 or a * b < 0:
                k = i
                break
        if k is None:
            raise CertificationError(
                "no sign change in <u1, u_theta>: equivariant family corrupted")
        lo, hi = thetas[k], thetas[k] + (thetas[1] - thetas[0])
        flo = pairing(lo)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            fm = pairing(mid)
            if flo * fm <= 0:
                hi = mid
            else:
                lo, flo = mid, fm
        theta0 = 0.5 * (lo + hi)

    def orthogonalize(u: ScalarField) -> ScalarField:
        coef = sobolev_inner(u, u1, "H1_scalar") / u1_sq
        return u - coef * u1

    u_t0 = orthogonalize(ScalarField.from_values(
        geom, family.chi.evaluate(theta0, geom) * family.u_bar))
    psi1 = basis.eigenspinor(1)
    end = fiber_solve(u_t0, family.s * psi1, params)
    if evaluate_J(end.u, end.psi, params) >= 0:
        raise CertificationError("restart endpoint energy is not negative")

    nodes = []
    for t in np.linspace(0.0, 1.0, config.path_nodes):
        u = ScalarField.from_values(geom, float(t) * u_t0.values)
        nodes.append(fiber_solve(u, (float(t) * family.s) * psi1, params))
    frozen = [True] + [False] * (config.path_nodes - 2) + [True]

    def tangent_filter(var):
        return Variation(orthogonalize(var.du), var.dpsi,
                         u_space="H1", psi_space="H1/2")

    record, diags = minmax_deform(nodes, frozen, config, params,
                                  tangent_filter=tangent_filter)
    # orthogonality certificate on the returned record
    final_u = orthogonalize(record.point.u)
    point = fiber_solve(final_u, record.point.free_part(), params,
                        x0=record.point.split("minus"))
    record = make_record(point, params, converged=record.converged, refined=False)
    ortho = abs(sobolev_inner(point.u, u1, "H1_scalar"))
    if ortho > 1e-8:
        raise CertificationError(f"restart orthogonality defect {ortho:.3e} > 1e-8")
    return record, diags


# ---------------------------------------------------------------------------
# distinctness ledger and the solution orbit
# ---------------------------------------------------------------------------

def records_distinct(r1: SolutionRecord, r2: SolutionRecord,
                     level_tol: float = 1e-6, ortho_tol: float = 1e-8) -> bool:
    """Executable form of geometric distinctness: levels differ, or the
    scalar components are H^1-orthogonal with both records nonzero."""
    if abs(r1.level - r2.level) > level_tol:
        return True
    inner = abs(sobolev_inner(r1.point.u, r2.point.u, "H1_scalar"))
    nonzero1 = h1_norm(r1.point.u) + hhalf_norm(r1.point.psi) > 1e-8
    nonzero2 = h1_norm(r2.point.u) + hhalf_norm(r2.point.psi) > 1e-8
    return bool(inner <= ortho_tol and nonzero1 and nonzero2)


def group_orbit_point(point: NehariPoint, sigma: float, q) -> NehariPoint:
    """Apply a Z2 x quaternionic group element to a solution."""
    psi = quaternion_act(point.psi, q)
    u = sigma * point.u
    return NehariPoint(u=u, psi=psi, constraint_norm=point.constraint_norm,
                       rho=point.rho)


# ---------------------------------------------------------------------------
# Case 2: (K+2)-dimensional equivariant set for the linking regime
# ---------------------------------------------------------------------------

def case2_product_minmax(chi: SweepoutChi, config: MinmaxConfig,
                         params: ActionParams, basis,
                         mesh=(2, 4), n_theta_disk: int = 8,
                         n_r_disk: int = 3, max_k: int = 4, retries: int = 2):
    """Equivariant min-max over the product of the linking ball and a disk.

    Elements are (u, psi) = (chi(theta,.) T r, phi + A T r Psi_{k+1}) with
    phi in the plus_b + zero block; the boundary {|phi| = R} u {r = 1} must
    have nonpositive energy (certified, with R inflation retries).
    """
    from .errors import CapacityError
    from .minmax import _span_block

    geom = basis.geom
    rho = params.rho
    fields, weights = _span_block(basis, rho)
    K = len(fields)
    if K > max_k:
        raise CapacityError(
            f"case-2 block dimension K={K} exceeds the desk-scale cap {max_k}")

    consts = linking_constants(params, basis)
    n_rad_phi, n_sphere = mesh
    rng = np.random.default_rng(config.seed)
    dirs = rng.standard_normal((n_sphere, K))
    dirs /= np.sqrt((dirs**2 * weights[None, :]).sum(axis=1))[:, None]
    psi_top = basis.eigenspinor(consts.k_index + 1)

    def phi_of(coefvec) -> SpinorField:
        out = SpinorField.zeros(geom)
        for c, f in zip(coefvec, fields):
            if c != 0.0:
                out = out + float(c) * f
        return out

    r_factor = 1.0
    for attempt in range(retries + 1):
        R = consts.R * r_factor
        nodes, frozen, pairs = [], [], []
        index = {}
        half = n_theta_disk // 2
        phi_shells = [np.zeros(K)] + [q * R * d for q in np.linspace(0, 1, n_rad_phi + 1)[1:]
                                      for d in dirs]
        phi_on_boundary = [False] + [q == 1.0 for q in np.linspace(0, 1, n_rad_phi + 1)[1:]
                                     for _ in dirs]
        disk_r = np.linspace(0.0, 1.0, n_r_disk + 1)
        for ip, (phiv, phi_bd) in enumerate(zip(phi_shells, phi_on_boundary)):
            phi_field = phi_of(phiv)
            for it in range(n_theta_disk):
                theta = 2.0 * np.pi * it / n_theta_disk
                chi_vals = chi.evaluate(theta, geom)
                for ir, r in enumerate(disk_r):
                    if ir == 0 and it > 0:
                        continue  # disk center is theta-independent
                    t_eff = consts.T * float(r)
                    u = ScalarField.from_values(geom, chi_vals * t_eff)
                    free = phi_field + (consts.A * t_eff) * psi_top
                    pt = fiber_solve(u, free, params)
                    key = (ip, it if ir > 0 else -1, ir)
                    index[key] = len(nodes)
                    nodes.append(pt)
                    frozen.append(bool(phi_bd or ir == n_r_disk))
                    pairs.append(None)
        for (ip, it, ir), k in index.items():
            if it < 0:
                pairs[k] = k
            else:
                pairs[k] = index[(ip, (it + half) % n_theta_disk, ir)]

        bad = [i for i, (nd, fz) in enumerate(zip(nodes, frozen))
               if fz and evaluate_J(nd.u, nd.psi, params) > 1e-9]
        if not bad:
            break
        if attempt == retries:
            raise CertificationError(
                f"{len(bad)} case-2 boundary nodes stay positive after retries")
        r_factor *= 1.5

    segments = []
    for (ip, it, ir), k in index.items():
        nxt = index.get((ip, it, ir + 1))
        if nxt is not None:
            segments.append((k, nxt))
        if ir == 1:
            center = index.get((ip, -1, 0))
            if center is not None:
                segments.append((center, k))

    record, diags = _equivariant_deform(nodes, frozen, pairs, segments, config, params)
    defect = equivariance_defect(nodes, pairs)
    if defect > 1e-9:
        raise CertificationError(f"case-2 equivariance drift {defect:.3e} exceeds 1e-9")
    refined = refine_if_possible(record, params, config.newton_tol)
    return refined, float(refined.level), diags
