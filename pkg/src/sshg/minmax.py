"""Mountain-pass and linking min-max on the constraint manifold.

The deformation scheme repeatedly locates the maximum-energy node of a
discretized path/cylinder/disk, takes a backtracking step along the negative
constrained gradient, retracts onto the manifold, and periodically re-spreads
nodes.  Flagged (non-converged) outcomes are first-class results carried with
full Palais-Smale diagnostics; a damped Newton pass on the free system
sharpens converged candidates to Euler-Lagrange solutions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .action import (
    ActionParams,
    Variation,
    el_residual,
    evaluate_J,
    gradient_J,
    hess_vec,
)
from .errors import (
    CertificationError,
    ConeStarvationError,
    ConfigError,
)
from .fields import ScalarField, SpinorField
from .krylov import ProductVec, minres
from .nehari import (
    NehariPoint,
    constrained_gradient,
    fiber_solve,
    lagrange_multiplier,
    project_to_manifold,
)
from .spectral import (
    check_spectral_gap,
    h1_norm,
    hhalf_norm,
    project,
    riesz_h1,
    riesz_hhalf,
    sobolev_inner,
)

SUFFICIENT_DECREASE = 1e-4
MAX_BACKTRACKS = 25
RESPREAD_EVERY = 5
NEWTON_PRE_GRAD = 1e-3


# ---------------------------------------------------------------------------
# configuration and result records
# ---------------------------------------------------------------------------

@dataclass
class MinmaxConfig:
    mode: str = "mountain_pass"        # or "linking"
    path_nodes: int = 33               # odd, >= 5
    descent_step: float = 0.1          # initial backtracking step, factor 0.5
    grad_tol: float = 1e-6
    newton_tol: float = 1e-10
    max_outer: int = 2000
    r0: float = 0.05
    tau: float = 50.0
    seed: int = 0
    deflation_orbits: list = field(default_factory=list)   # off by default

    def __post_init__(self):
        if self.mode not in ("mountain_pass", "linking"):
            raise ConfigError(f"unknown minmax mode {self.mode!r}")
        if self.path_nodes < 5 or self.path_nodes % 2 == 0:
            raise ConfigError("path_nodes must be odd and >= 5")
        if min(self.grad_tol, self.newton_tol, self.descent_step) <= 0:
            raise ConfigError("tolerances and step sizes must be positive")


@dataclass
class LinkingConstants:
    """Certified (T, A, R) for the boundary-negative cylinder."""

    T: float
    A: float
    R: float
    k_index: int
    lam_k: float          # largest eigenvalue below rho (0 when only harmonic)
    lam_k1: float         # smallest eigenvalue above rho
    neg_factor: float     # min (rho - lam)/(1 + lam) over the spanned block
    bound_max: float      # max_t of the sigma_1 energy bound

    def certify(self, params, vol) -> None:
        rho = params.rho
        if not (rho * np.cosh(self.T) - self.lam_k1 > 1.0):
            raise CertificationError("linking step (i) failed: rho cosh(T) - lam_{k+1} <= 1")
        if not (4 * rho**2 * vol * np.sinh(self.T) ** 2
                - 8 * self.A**2 * self.T**2 * (rho * np.cosh(self.T) - self.lam_k1) < 0):
            raise CertificationError("linking step (ii) failed: endcap energy not negative")
        if not (self.neg_factor * self.R**2 > self.bound_max):
            raise CertificationError("linking step (iii) failed: R does not dominate the bound")


@dataclass
class PSDiagnostics:
    """Per-iterate residual traces of the constrained descent."""

    alpha_norms: list = field(default_factory=list)
    beta_norms: list = field(default_factory=list)
    multiplier_norms: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    u_h1_trace: list = field(default_factory=list)
    psi_hhalf_trace: list = field(default_factory=list)

    def record(self, tangent_res, level, u_h1, psi_hhalf):
        self.alpha_norms.append(tangent_res.alpha_norm)
        self.beta_norms.append(tangent_res.beta_norm)
        self.multiplier_norms.append(tangent_res.multiplier.norm())
        self.energies.append(level)
        self.grad_norms.append(tangent_res.norm)
        self.u_h1_trace.append(u_h1)
        self.psi_hhalf_trace.append(psi_hhalf)

    def bounded(self, cap: float = 1e8) -> bool:
        arrays = [self.u_h1_trace, self.psi_hhalf_trace, self.energies]
        return all(np.all(np.isfinite(a)) and (len(a) == 0 or np.max(np.abs(a)) <= cap)
                   for a in arrays)

    def consistent_lengths(self) -> bool:
        n = len(self.energies)
        return all(len(t) == n for t in (self.alpha_norms, self.beta_norms,
                                         self.multiplier_norms, self.grad_norms,
                                         self.u_h1_trace, self.psi_hhalf_trace))


@dataclass
class SolutionRecord:
    point: NehariPoint
    level: float
    res_u: float
    res_psi: float
    classification: str            # trivial / semi_trivial_constant_u / nontrivial
    u_variance: float
    converged: bool                # descent reached grad_tol
    refined: bool                  # Newton reached newton_tol
    multiplier_norm: float = np.nan
    u_h1: float = np.nan
    psi_hhalf: float = np.nan


def u_variance(u: ScalarField) -> float:
    """Mean-square deviation of u from its average."""
    uv = u.values
    return float(np.mean((uv - np.mean(uv)) ** 2))


def classify(u: ScalarField, psi: SpinorField) -> tuple[str, float]:
    var = u_variance(u)
    total = h1_norm(u) + hhalf_norm(psi)
    if total <= 1e-8:
        return "trivial", var
    if var <= 1e-8 and hhalf_norm(psi) > 1e-8:
        return "semi_trivial_constant_u", var
    return "nontrivial", var


def make_record(point: NehariPoint, params: ActionParams, converged: bool,
                refined: bool, with_multiplier: bool = True) -> SolutionRecord:
    _, ru, rp = el_residual(point.u, point.psi, params)
    cls, var = classify(point.u, point.psi)
    mnorm = np.nan
    if with_multiplier:
        mnorm = lagrange_multiplier(point, params).norm()
    return SolutionRecord(
        point=point,
        level=evaluate_J(point.u, point.psi, params),
        res_u=ru,
        res_psi=rp,
        classification=cls,
        u_variance=var,
        converged=converged,
        refined=refined,
        multiplier_norm=mnorm,
        u_h1=h1_norm(point.u),
        psi_hhalf=hhalf_norm(point.psi),
    )


# ---------------------------------------------------------------------------
# endpoint and linking constants
# ---------------------------------------------------------------------------

def mountain_pass_endpoint(params: ActionParams, basis) -> tuple[float, float]:
    """Constant ubar and amplitude s with J(ubar, s Psi_1) < 0.

    ubar clears rho cosh(ubar) > lam_1 + 1 with margin 0.5; s carries a 1.5
    factor over the sign-change threshold of
    4 rho^2 sinh(ubar)^2 Vol - 8 (rho cosh(ubar) - lam_1) s^2.
    """
    rho = params.rho
    lam1 = basis.eigenvalue(1)
    if basis.harmonic_dim != 0 or not (0 < rho < lam1):
        raise ConfigError(
            f"mountain-pass regime requires h = 0 and 0 < rho < lambda_1 "
            f"(rho={rho}, lambda_1={lam1}, h={basis.harmonic_dim})"
        )
    vol = basis.geom.vol
    u_bar = float(np.arccosh((lam1 + 1.0) / rho) + 0.5)
    s_threshold = np.sqrt(4 * rho**2 * np.sinh(u_bar) ** 2 * vol
                          / (8 * (rho * np.cosh(u_bar) - lam1)))
    return u_bar, float(1.5 * s_threshold)


def _split_spectrum_at(params: ActionParams, basis):
    rho = params.rho
    check_spectral_gap(basis.geom, rho)
    lam = basis.eigenvalues
    below = lam[lam < rho]
    above = lam[lam > rho]
    if above.size == 0:
        raise ConfigError("basis cutoff too small: no eigenvalue above rho tabulated")
    lam_k = float(below.max()) if below.size else 0.0
    lam_k1 = float(above.min())
    return below, lam_k, lam_k1


def linking_constants(params: ActionParams, basis, t_margin: float = 0.5,
                      factor: float = 1.5) -> LinkingConstants:
    """Constants (T, A, R) in order, certified against all three inequalities.

    Step (i) is implemented with the orientation rho cosh(T) - lam_{k+1} > 1,
    the one consistent with step (ii)'s sign.
    """
    rho = params.rho
    below, lam_k, lam_k1 = _split_spectrum_at(params, basis)
    h = basis.harmonic_dim
    if below.size == 0 and h == 0:
        raise ConfigError("linking regime requires rho > lambda_1 or harmonic spinors")

    vol = basis.geom.vol
    T = float(np.arccosh((lam_k1 + 1.0) / rho) + t_margin)
    A0 = np.sqrt(4 * rho**2 * vol * np.sinh(T) ** 2
                 / (8 * T**2 * (rho * np.cosh(T) - lam_k1)))
    A = float(factor * A0)

    tgrid = np.linspace(0.0, T, 1001)
    bound = (4 * rho**2 * vol * np.sinh(tgrid) ** 2
             + 8 * (lam_k1 - rho * np.cosh(tgrid)) * A**2 * tgrid**2)
    bound_max = float(np.max(bound))

    neg_lams = [0.0] * (1 if h > 0 else 0) + list(below)
    neg_factor = float(min((rho - lam) / (1.0 + lam) for lam in neg_lams))
    R = float(factor * np.sqrt(max(bound_max, 1e-12) / neg_factor))

    consts = LinkingConstants(T=T, A=A, R=R, k_index=int(below.size),
                              lam_k=lam_k, lam_k1=lam_k1,
                              neg_factor=neg_factor, bound_max=bound_max)
    consts.certify(params, vol)
    return consts


def _span_block(basis, rho: float):
    """Eigen-elements spanning plus_b + zero, with their H^{1/2} weights."""
    fields = []
    weights = []
    for l in range(basis.harmonic_dim):
        fields.append(basis.harmonic_spinor(l))
        weights.append(1.0)
    for j, lam in enumerate(basis.eigenvalues, start=1):
        if lam < rho:
            fields.append(basis.eigenspinor(j))
            weights.append(1.0 + lam)
    return fields, np.array(weights)


def build_cylinder(consts: LinkingConstants, mesh: tuple[int, int],
                   params: ActionParams, basis, seed: int = 0,
                   n_radial: int = 3, max_k: int = 12):
    """Discretized solid cylinder D with boundary flags, every node certified.

    Nodes are (u === t, phi + A t Psi_{k+1}) with phi in the plus_b + zero
    block; constant u keeps eigenmodes invariant so the fiber part vanishes
    identically.  Returns (nodes, frozen, psi_top) with psi_top = Psi_{k+1}.
    Boundary certification failure retries once with doubled margins.
    """
    n_t, n_sphere = mesh
    if n_t < 3 or n_sphere < 2:
        raise ConfigError("cylinder mesh needs n_t >= 3 and n_sphere >= 2")
    geom = basis.geom
    rho = params.rho
    fields, weights = _span_block(basis, rho)
    K = len(fields)
    if K == 0:
        raise ConfigError("empty plus_b + zero block: no linking geometry")
    if K > max_k:
        from .errors import CapacityError
        raise CapacityError(f"linking block dimension K={K} exceeds the desk-scale cap {max_k}")

    psi_top = basis.eigenspinor(consts.k_index + 1)
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n_sphere, K))
    dirs /= np.sqrt((dirs**2 * weights[None, :]).sum(axis=1))[:, None]  # unit H^{1/2}

    def phi_of(coefvec) -> SpinorField:
        out = SpinorField.zeros(geom)
        for c, f in zip(coefvec, fields):
            if c != 0.0:
                out = out + float(c) * f
        return out

    nodes, frozen = [], []
    tvals = np.linspace(0.0, consts.T, n_t)
    radii = np.linspace(0.0, consts.R, n_radial + 1)
    for it, t in enumerate(tvals):
        u = ScalarField.constant(geom, float(t))
        for ir, r in enumerate(radii):
            on_side = ir == n_radial
            on_cap = it == 0 or it == n_t - 1
            if r == 0.0:
                free = (consts.A * t) * psi_top
                nodes.append(fiber_solve(u, free, params))
                frozen.append(on_cap)
                continue
            for d in dirs:
                free = phi_of(r * d) + (consts.A * t) * psi_top
                nodes.append(fiber_solve(u, free, params))
                frozen.append(on_cap or on_side)

    bad = [i for i, (nd, fz) in enumerate(zip(nodes, frozen))
           if fz and evaluate_J(nd.u, nd.psi, params) > 1e-9]
    if bad:
        if consts.T - np.arccosh((consts.lam_k1 + 1.0) / rho) < 0.9:
            bigger = linking_constants(params, basis, t_margin=1.0, factor=3.0)
            return build_cylinder(bigger, mesh, params, basis, seed=seed,
                                  n_radial=n_radial, max_k=max_k)
        raise CertificationError(
            f"{len(bad)} cylinder boundary nodes have positive energy after retry"
        )
    return nodes, frozen, psi_top


# ---------------------------------------------------------------------------
# deformation loop
# ---------------------------------------------------------------------------

def _product_dist(a: NehariPoint, b: NehariPoint) -> float:
    return float(np.sqrt(h1_norm(a.u - b.u) ** 2 + hhalf_norm(a.psi - b.psi) ** 2))


def _orbit_penalty(point: NehariPoint, orbits, params) -> float:
    """Deflation penalty sum 1/dist^2 to known solution orbits (off by default)."""
    if not orbits:
        return 0.0
    from .spectral import quaternion_act
    total = 0.0
    qs = [(1, 0, 0, 0), (0, 1, 0, 0), (0, 0, 1, 0), (0, 0, 0, 1),
          (0.5, 0.5, 0.5, 0.5), (0.5, -0.5, 0.5, -0.5)]
    for known in orbits:
        d = np.inf
        for sigma in (1.0, -1.0):
            for q in qs:
                cand = NehariPoint(u=sigma * known.u, psi=quaternion_act(known.psi, q),
                                   constraint_norm=known.constraint_norm, rho=known.rho)
                d = min(d, _product_dist(point, cand))
        total += 1.0 / max(d * d, 1e-12)
    return total


def _interp_points(a: NehariPoint, b: NehariPoint, w: float, params) -> NehariPoint:
    """Linear blend of u and the free spinor part, retracted to the manifold."""
    u = (1.0 - w) * a.u + w * b.u
    free = (1.0 - w) * a.free_part() + w * b.free_part()
    minus = (1.0 - w) * a.split("minus") + w * b.split("minus")
    return fiber_solve(u, free, params, x0=minus)


def _respread_path(nodes, params):
    """Arclength reparametrization in the product norm (endpoints fixed)."""
    m = len(nodes)
    seg = np.array([_product_dist(nodes[i], nodes[i + 1]) for i in range(m - 1)])
    total = seg.sum()
    if total <= 0:
        return None
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, total, m)
    out = [nodes[0]]
    for i in range(1, m - 1):
        t = targets[i]
        j = int(np.searchsorted(cum, t, side="right") - 1)
        j = min(max(j, 0), m - 2)
        w = 0.0 if seg[j] == 0 else (t - cum[j]) / seg[j]
        out.append(_interp_points(nodes[j], nodes[j + 1], float(w), params))
    out.append(nodes[-1])
    return out


SEGMENT_SAMPLES = (0.25, 0.5, 0.75)


class _SegmentCache:
    """Interior samples of mesh segments, recomputed when an endpoint moves.

    A discrete node set can cheat the min-max level by letting one segment
    jump the energy ridge unsampled; tracking interior samples and promoting
    any sample that exceeds the node max repairs that unfaithfulness.
    """

    def __init__(self, segments, params):
        self.segments = list(segments or [])
        self.params = params
        self._cache = {}

    def refresh(self, nodes):
        for (i, j) in self.segments:
            key = (i, j)
            ids = (id(nodes[i]), id(nodes[j]))
            hit = self._cache.get(key)
            if hit is not None and hit[0] == ids:
                continue
            pts, js = [], []
            for w in SEGMENT_SAMPLES:
                pt = _interp_points(nodes[i], nodes[j], w, self.params)
                pts.append(pt)
                js.append(evaluate_J(pt.u, pt.psi, self.params))
            self._cache[key] = (ids, pts, js)

    def best_sample(self):
        best = None
        for (i, j), (_, pts, js) in self._cache.items():
            k = int(np.argmax(js))
            if best is None or js[k] > best[0]:
                best = (js[k], i, j, pts[k])
        return best

    def invalidate_all(self):
        self._cache.clear()


def minmax_deform(nodes, frozen, config: MinmaxConfig, params: ActionParams,
                  basis=None, segments="chain", respread=_respread_path,
                  step_hook=None, tangent_filter=None,
                  keep_trace_points: bool = False):
    """Descend the max-energy node until its constrained gradient is small.

    Each outer iteration: repair discretization gaps (promote any segment
    sample that exceeds the node max), locate the max-energy node, take a
    backtracking step along the negative constrained gradient, retract, and
    periodically re-spread.  Returns (SolutionRecord candidate,
    PSDiagnostics); budget exhaustion or stalled line searches yield the best
    candidate flagged non-converged with diagnostics attached.
    """
    nodes = list(nodes)
    frozen = list(frozen)
    if not any(not f for f in frozen):
        raise ConfigError("deformation needs at least one free node")
    for i, (nd, fz) in enumerate(zip(nodes, frozen)):
        if fz and evaluate_J(nd.u, nd.psi, params) > 1e-9:
            raise CertificationError(f"frozen node {i} has positive energy at start")

    if segments == "chain":
        segments = [(i, i + 1) for i in range(len(nodes) - 1)]
    segcache = _SegmentCache(segments, params)
    neighbors = {}
    for (i, j) in (segments or []):
        neighbors.setdefault(i, set()).add(j)
        neighbors.setdefault(j, set()).add(i)

    energies = [evaluate_J(nd.u, nd.psi, params) for nd in nodes]
    diags = PSDiagnostics()
    diags.repairs = []
    trace_points = []
    boundary_ids = [id(nd) for nd, fz in zip(nodes, frozen) if fz]

    step = config.descent_step
    converged = False
    stalls = 0
    prev_max = np.inf
    floor = -max(abs(min(energies)), 1.0)

    def assign(k, pt, j):
        if step_hook is not None:
            step_hook(k, pt, nodes, energies, params)
        else:
            nodes[k] = pt
            energies[k] = j

    def repair() -> bool:
        """Promote ridge samples hiding inside segments; returns True if any."""
        did = False
        for _ in range(3 * len(nodes)):
            segcache.refresh(nodes)
            best = segcache.best_sample()
            if best is None:
                break
            j_s, i, j, pt = best
            node_max = max(energies)
            if j_s <= node_max + 1e-9 * (1.0 + abs(node_max)):
                break
            free_ends = [k for k in (i, j) if not frozen[k]]
            if not free_ends:
                break
            k_rep = min(free_ends, key=lambda k: energies[k])
            assign(k_rep, pt, j_s)
            did = True
        return did

    last_idx = None
    for outer in range(config.max_outer):
        repaired = repair()
        diags.repairs.append(repaired)

        if config.deflation_orbits:
            sel = [e + _orbit_penalty(nd, config.deflation_orbits, params)
                   if not fz else -np.inf
                   for e, nd, fz in zip(energies, nodes, frozen)]
        else:
            sel = [e if not fz else -np.inf for e, fz in zip(energies, frozen)]
        idx = int(np.argmax(sel))
        point = nodes[idx]
        level = max(energies)

        res = constrained_gradient(point, params)
        if tangent_filter is not None:
            # restricted manifolds (orthogonal restart) project the descent
            # direction; convergence is then measured in the filtered norm
            filt = tangent_filter(res.tangent)
            fnorm = float(np.sqrt(max(
                sobolev_inner(filt.du, filt.du, "H1_scalar")
                + sobolev_inner(filt.dpsi, filt.dpsi, "Hhalf_spinor"), 0.0)))
            res.tangent = filt
            res.norm = fnorm
        diags.record(res, level, h1_norm(point.u), hhalf_norm(point.psi))
        if keep_trace_points:
            trace_points.append(point)

        # descent never raises the certified max; repairs may (logged above)
        if not repaired and level > prev_max + 1e-9 * (1.0 + abs(prev_max)):
            raise CertificationError("max level increased during deformation")
        prev_max = level
        assert level >= floor - 1e-9, "energy trace fell below the endpoint floor"

        if res.norm <= config.grad_tol:
            converged = True
            last_idx = idx
            break

        # backtracking descent on the selected node; the displacement is
        # capped near the local mesh scale so the max node cannot leap across
        # the ridge in one accepted step, with a floor at the median segment
        # length so promotion-induced clustering cannot freeze the descent
        accepted = False
        trial_step = step
        if neighbors.get(idx):
            gap = min(_product_dist(point, nodes[j]) for j in neighbors[idx])
            med = np.median([_product_dist(nodes[i], nodes[j]) for i, j in segments])
            cap = 0.5 * max(gap, 0.25 * med)
            if cap > 0 and res.norm > 0:
                trial_step = min(trial_step, cap / res.norm)
        j_old = energies[idx]
        for _ in range(MAX_BACKTRACKS):
            cand_u = point.u - trial_step * res.tangent.du
            cand_psi = point.psi - trial_step * res.tangent.dpsi
            try:
                cand = project_to_manifold(cand_u, cand_psi, params)
                j_new = evaluate_J(cand.u, cand.psi, params)
            except Exception:
                trial_step *= 0.5
                continue
            target = j_old - SUFFICIENT_DECREASE * trial_step * res.norm ** 2
            if j_new <= target:
                assign(idx, cand, j_new)
                accepted = True
                step = min(config.descent_step, 4.0 * trial_step)
                break
            trial_step *= 0.5
        if not accepted:
            stalls += 1
            if stalls >= 3:
                last_idx = idx
                break
        else:
            stalls = 0

        # periodic re-spreading with a monotonicity guard
        if respread is not None and (outer + 1) % RESPREAD_EVERY == 0:
            new_nodes = respread(nodes, params)
            if new_nodes is not None:
                new_energies = [evaluate_J(nd.u, nd.psi, params) for nd in new_nodes]
                if max(new_energies) <= max(energies) + 1e-12 * (1 + abs(max(energies))):
                    nodes = new_nodes
                    energies = new_energies
                    segcache.invalidate_all()

        # frozen nodes are never moved
        ids = [id(nd) for nd, fz in zip(nodes, frozen) if fz]
        assert ids == boundary_ids, "boundary node was moved during deformation"
        last_idx = idx

    if not converged or last_idx is None:
        # budget/stall exit: hand back the current max-energy free node, not
        # the node that was just stepped downhill
        last_idx = int(np.argmax([e if not fz else -np.inf
                                  for e, fz in zip(energies, frozen)]))
    candidate = nodes[last_idx]
    record = make_record(candidate, params, converged=converged, refined=False)
    assert diags.consistent_lengths()
    if keep_trace_points:
        diags.trace_points = trace_points
    return record, diags


# ---------------------------------------------------------------------------
# Newton refinement on the free system
# ---------------------------------------------------------------------------

def _prod_inner(a: ProductVec, b: ProductVec) -> float:
    return (sobolev_inner(a.u, b.u, "H1_scalar")
            + sobolev_inner(a.psi, b.psi, "Hhalf_spinor"))


def _grad_vec(u, psi, params) -> tuple[ProductVec, float]:
    g = gradient_J(u, psi, params)
    r = g.riesz()
    v = ProductVec(r.du, r.dpsi)
    return v, float(np.sqrt(max(_prod_inner(v, v), 0.0)))


def newton_refine(candidate: NehariPoint, params: ActionParams, basis=None,
                  newton_tol: float = 1e-10, max_steps: int = 30,
                  check_pre: bool = True) -> SolutionRecord:
    """Damped Newton on the full Euler-Lagrange system via Hessian products.

    Terminates when both residual dual norms are below newton_tol; divergence
    (no damped decrease across 10 halvings) returns the candidate flagged
    unrefined.
    """
    if check_pre:
        pre = constrained_gradient(candidate, params)
        if pre.norm > NEWTON_PRE_GRAD:
            raise ConfigError(
                f"newton_refine expects a candidate with constrained gradient "
                f"<= {NEWTON_PRE_GRAD:g}, got {pre.norm:.3e}"
            )

    u, psi = candidate.u, candidate.psi
    refined = False
    for _ in range(max_steps):
        _, ru, rp = el_residual(u, psi, params)
        if ru + rp <= newton_tol:
            refined = True
            break
        gvec, gnorm = _grad_vec(u, psi, params)

        # solutions come in group orbits, so the Hessian is singular along
        # the orbit directions; a gradient-sized shift keeps the Krylov solve
        # from amplifying kernel noise while preserving fast local convergence
        shift = min(1e-2, gnorm)

        def hess_op(d: ProductVec) -> ProductVec:
            hv = hess_vec(u, psi, Variation(d.u, d.psi, "H1", "H1/2"), params)
            return ProductVec(riesz_h1(hv.du), riesz_hhalf(hv.dpsi)) + shift * d

        d, info = minres(hess_op, -1.0 * gvec, _prod_inner, tol=1e-12, maxiter=250)
        lam = 1.0
        moved = False
        for _ in range(10):
            u_try = u + lam * d.u
            psi_try = psi + lam * d.psi
            try:
                _, gn = _grad_vec(u_try, psi_try, params)
            except Exception:
                lam *= 0.5
                continue
            if gn <= (1.0 - SUFFICIENT_DECREASE * lam) * gnorm:
                u, psi = u_try, psi_try
                moved = True
                break
            lam *= 0.5
        if not moved:
            break

    point = project_to_manifold(u, psi, params)
    return make_record(point, params, converged=refined, refined=refined)


# ---------------------------------------------------------------------------
# coercivity probe and PS diagnostics
# ---------------------------------------------------------------------------

def _random_direction(geom, rng, u_decay=1.0, psi_decay=0.75):
    # psi_decay must stay moderate: steep spectra concentrate energy in the
    # low plus_b modes and starve the outside-cone rejection sampling
    n = geom.grid_n
    uc = (rng.standard_normal((n, n)))
    u = ScalarField.from_values(geom, uc)
    u = ScalarField.from_coeffs(geom, u.coeffs * (1.0 + geom.xi_sq) ** -u_decay)
    u = ScalarField.from_values(geom, u.values)
    c = rng.standard_normal((2, n, n)) + 1j * rng.standard_normal((2, n, n))
    c *= (1.0 + geom.s_abs) ** -psi_decay
    psi = SpinorField.from_coeffs(geom, c)
    free = psi - project(psi, "minus")
    return u, free


def coercivity_probe(params: ActionParams, basis, r0: float, tau: float,
                     n_samples: int = 100, seed: int = 0) -> float:
    """Sampled lower bound of J/(||u||^2 + ||psi||^2) on the r0-sphere
    outside the cone around the negative-Hessian block.

    Rejection sampling on the negated cone inequality; starvation raises with
    a suggestion to enlarge tau.
    """
    geom = basis.geom
    check_spectral_gap(geom, params.rho)
    rng = np.random.default_rng(seed)
    margin = np.inf
    accepted = 0
    attempts = 0
    max_attempts = 50 * n_samples
    while accepted < n_samples:
        if attempts >= max_attempts:
            raise ConeStarvationError(
                f"only {accepted}/{n_samples} samples outside the cone after "
                f"{attempts} draws; increase tau (currently {tau})"
            )
        attempts += 1
        u, free = _random_direction(geom, rng)
        # scale onto the r0 sphere of the product norm (fiber re-solved)
        point = fiber_solve(u, free, params)
        for _ in range(3):
            r = np.sqrt(point.product_norm_sq())
            if abs(r - r0) <= 1e-12 * r0:
                break
            scale = r0 / r
            u = scale * u
            free = scale * free
            point = fiber_solve(u, free, params)
        lhs = (h1_norm(point.u) ** 2
               + hhalf_norm(point.split("minus")) ** 2
               + hhalf_norm(point.split("plus_a")) ** 2)
        rhs = (hhalf_norm(point.split("plus_b")) ** 2
               + hhalf_norm(point.split("zero")) ** 2)
        if lhs < tau * rhs:
            continue  # inside the cone
        accepted += 1
        quot = evaluate_J(point.u, point.psi, params) / point.product_norm_sq()
        margin = min(margin, quot)
    return float(margin)


def ps_diagnostics(trace, params: ActionParams, basis=None) -> PSDiagnostics:
    """Recompute alpha/beta/multiplier traces for a list of manifold points."""
    diags = PSDiagnostics()
    for item in trace:
        if isinstance(item, NehariPoint):
            point = item
        else:
            u, psi = item
            point = project_to_manifold(u, psi, params)
        res = constrained_gradient(point, params)
        level = evaluate_J(point.u, point.psi, params)
        diags.record(res, level, h1_norm(point.u), hhalf_norm(point.psi))
    return diags
