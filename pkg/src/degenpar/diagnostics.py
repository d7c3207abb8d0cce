"""Energy, coercivity and decay monitors over solver trajectories.

All integrals use the solver's quadrature: dual-cell volumes for nodal
terms and edge weights for gradient terms, trapezoid rule in time.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .exponent_spaces import ExponentField, critical_exponent, lebesgue_norm, luxemburg_norm, modular, power_abs
from .mesh import GridFunction, Mesh
from .model import ProblemSpec, g_l2_sup, validate_theorem41
from .pn_spaces import PnIndex, bochner_pseudonorm, pn_pseudonorm, trapezoid_weights
from .solver import SolutionTrajectory, _apply_flux_operator, diffusion_form, kappa


def _edges_to_nodes(mesh: Mesh, per_axis: list[np.ndarray]) -> np.ndarray:
    """Split each edge quantity equally between its two end nodes."""
    out = np.zeros(mesh.size)
    for (tails, heads, _, _), q in zip(mesh.edges, per_axis):
        out += np.bincount(tails, 0.5 * q, mesh.size) + np.bincount(heads, 0.5 * q, mesh.size)
    return out.reshape(mesh.shape)


def _diffusion_density(mesh: Mesh, u: np.ndarray, p0: float, delta: float = 0.0) -> np.ndarray:
    uf, kn = u.ravel(), kappa(u, p0, delta).ravel()
    q = [ew * 0.5 * (kn[t] + kn[hd]) * ((uf[hd] - uf[t]) / h) ** 2 for t, hd, h, ew in mesh.edges]
    return _edges_to_nodes(mesh, q)


def _sobolev_density(mesh: Mesh, u: np.ndarray, p0: float) -> np.ndarray:
    v = power_abs(np.abs(u), p0 / 2.0).ravel()
    c = 4.0 / p0**2
    q = [c * ew * ((v[hd] - v[t]) / h) ** 2 for t, hd, h, ew in mesh.edges]
    return _edges_to_nodes(mesh, q)


def _nonlocal_factor(u: np.ndarray, mesh: Mesh, p: float, s: float) -> float:
    return lebesgue_norm(GridFunction(mesh, u), p) ** s


@dataclass
class EnergyRow:
    t: float
    y: float
    diffusion_energy: float
    sobolev_form: float
    absorption_pairing: float
    nonlocal_pairing: float
    total_pairing: float
    modular_alpha: float


def pairing_terms(u_slice: GridFunction, t: float, spec: ProblemSpec, region=None) -> EnergyRow:
    """The integrals making up ``<f(u), u>`` at one time level.

    ``region`` is an optional boolean node mask; every term is a sum of
    nodal densities, so results are additive over disjoint regions.
    """
    m = u_slice.mesh
    u = u_slice.values
    vol = m.volumes
    mask = np.ones(m.shape, bool) if region is None else np.asarray(region, bool).reshape(m.shape)
    c = spec.coefficients(t)
    factor = _nonlocal_factor(u, m, spec.p, spec.s)
    dens = {
        "y": vol * u**2,
        "diffusion_energy": _diffusion_density(m, u, spec.p0),
        "sobolev_form": _sobolev_density(m, u, spec.p0),
        "absorption_pairing": vol * spec.absorption(t, u, c) * u,
        "nonlocal_pairing": vol * c["g"] * factor * u,
        "modular_alpha": vol * power_abs(np.abs(u), c["alpha"]),
    }
    tot = {k: float(np.sum(v[mask])) for k, v in dens.items()}
    total = tot["diffusion_energy"] + tot["absorption_pairing"] + tot["nonlocal_pairing"]
    return EnergyRow(t=float(t), total_pairing=total, **tot)


@dataclass
class LevelCheck:
    holds: bool
    worst_level: int | None
    worst_margin: float
    margins: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def coercivity_check_33(traj: SolutionTrajectory, spec: ProblemSpec, rtol: float = 1e-8) -> LevelCheck:
    """Per level: ``<f(u),u> >= E_diff + int a2|u|^alpha - int a3 - int |g| ||u||^s |u|``.

    The left side pairs the assembled operator with ``u``; the right side
    uses the edge-sum diffusion energy, so the two routes are independent.
    """
    m = traj.mesh
    vol = m.volumes
    margins = []
    for t, u in zip(traj.times, traj.values):
        c = spec.coefficients(t)
        factor = _nonlocal_factor(u, m, spec.p, spec.s)
        diff_op = float(np.sum(vol * _apply_flux_operator(m, u, kappa(u, spec.p0)) * u))
        absorb = float(np.sum(vol * spec.absorption(t, u, c) * u))
        nonloc = float(np.sum(vol * c["g"] * factor * u))
        lhs = diff_op + absorb + nonloc
        e_diff = diffusion_form(m, u, u, kappa(u, spec.p0))
        coer = float(np.sum(vol * c["a2"] * power_abs(np.abs(u), c["alpha"])))
        a3 = float(np.sum(vol * c["a3"]))
        gterm = float(np.sum(vol * np.abs(c["g"]) * factor * np.abs(u)))
        rhs = e_diff + coer - a3 - gterm
        scale = abs(diff_op) + abs(absorb) + abs(nonloc) + e_diff + coer + a3 + gterm
        margins.append((lhs - rhs) / scale if scale > 0 else 0.0)
    margins_arr = np.array(margins)
    k = int(np.argmin(margins_arr)) if margins else None
    worst = float(margins_arr[k]) if margins else 0.0
    return LevelCheck(bool(np.all(margins_arr >= -rtol)), k, worst, margins)


class _SpaceTimeSamples:
    """Trajectory values with space-time quadrature weights."""

    def __init__(self, traj: SolutionTrajectory, values=None):
        self.mesh = traj.mesh
        self.values = traj.values if values is None else values
        tw = trapezoid_weights(traj.times).reshape((-1,) + (1,) * traj.mesh.ndim)
        self.weights = tw * traj.mesh.volumes[None]


def _alpha_on(traj: SolutionTrajectory, spec: ProblemSpec) -> ExponentField:
    return ExponentField(np.stack([spec.alpha.at_nodes(traj.mesh, t) for t in traj.times]))


def coercivity_summary_35(traj: SolutionTrajectory, spec: ProblemSpec, r: float = 1e-6) -> dict:
    """Terms of the coercivity estimate and the empirical ratio
    ``<f(u),u>_{Q_T} / ([u]^{p0} + ||u||_alpha^{alpha-})``.

    Only positivity of the ratio is asserted, and only when the Bochner
    pseudo-norm is at least ``r``.
    """
    idx = PnIndex.for_p0(spec.p0)
    bochner = bochner_pseudonorm(traj, spec.p0, idx)
    samples = _SpaceTimeSamples(traj)
    alpha = _alpha_on(traj, spec)
    sigma = modular(samples, alpha)
    lux = luxemburg_norm(samples, alpha)
    _, _, ptc = critical_exponent(spec.n, spec.p0)
    tw = trapezoid_weights(traj.times)
    gterm = 0.0
    pairing = 0.0
    for k, (t, u) in enumerate(zip(traj.times, traj.values)):
        g = GridFunction(traj.mesh, spec.g.at_nodes(traj.mesh, t))
        uk = GridFunction(traj.mesh, u)
        gterm += float(tw[k] * lebesgue_norm(g, ptc) * pn_pseudonorm(uk, idx) ** (spec.s + 1))
        pairing += float(tw[k] * pairing_terms(uk, t, spec).total_pairing)
    denom = bochner**spec.p0 + lux**alpha.lower_bound
    ratio = pairing / denom if denom > 0 else math.nan
    asserted = bool(bochner >= r)
    return {
        "bochner_pseudonorm": bochner,
        "modular_alpha": sigma,
        "luxemburg_alpha": lux,
        "g_weighted_term": gterm,
        "pairing": pairing,
        "ratio": ratio,
        "ratio_defined": denom > 0,
        "asserted": asserted,
        "positive": bool(ratio > 0) if asserted else None,
        "holds": bool((not asserted) or ratio > 0),
    }


@dataclass
class SobolevReport:
    lhs: float
    rhs: float
    rel_gap: float


def sobolev_identity_check(u_slice: GridFunction, p0: float) -> SobolevReport:
    """``sum_i int |u|^(p0-2)(D_i u)^2`` against ``(4/p0^2) sum_i int (D_i |u|^(p0/2))^2``."""
    m = u_slice.mesh
    lhs = float(np.sum(_diffusion_density(m, u_slice.values, p0)))
    rhs = float(np.sum(_sobolev_density(m, u_slice.values, p0)))
    scale = max(abs(lhs), abs(rhs))
    return SobolevReport(lhs, rhs, abs(lhs - rhs) / scale if scale > 0 else 0.0)


def young_constant(eps: float, s: float, p0: float) -> float:
    """``c`` with ``y^((s+1)/2) <= eps y^(p0/2) + c y`` for all ``y >= 0``."""
    mu = p0 / 2.0
    theta = ((s + 1.0) / 2.0 - 1.0) / (mu - 1.0)
    if not 0.0 <= theta < 1.0:
        raise ValueError("need 1 <= s < p0 - 1")
    if theta == 0.0:
        return 1.0
    return (1.0 - theta) * (theta / eps) ** (theta / (1.0 - theta))


def gronwall_rate(spec: ProblemSpec, K: float | None = None, c_embed: float | None = None,
                  eps: float | None = None) -> dict:
    """Growth rate ``2 K c(eps)`` of the exponential bound on ``y = ||u||_2^2``.

    ``c_embed`` defaults to ``1/lambda_min`` of the discrete Dirichlet
    Laplacian, which depends on the mesh.
    """
    K = g_l2_sup(spec) if K is None else K
    m = spec.mesh
    c = 1.0 / m.dirichlet_eigenvalue() if c_embed is None else c_embed
    if K == 0.0:
        return {"K": 0.0, "c_embed": c, "eps_threshold": math.inf, "eps": math.nan,
                "c_eps": math.nan, "rate": 0.0}
    threshold = 4.0 / (K * spec.p0**2 * c * m.measure ** ((spec.p0 - 2.0) / 2.0))
    eps = 0.5 * threshold if eps is None else eps
    ce = young_constant(eps, spec.s, spec.p0)
    return {"K": K, "c_embed": c, "eps_threshold": threshold, "eps": eps, "c_eps": ce,
            "rate": 2.0 * K * ce}


@dataclass
class DecayReport:
    skipped: bool
    reason: str | None = None
    relation_residual: list = field(default_factory=list)
    dissipation: list = field(default_factory=list)
    closure_error: list = field(default_factory=list)
    closure_ok: bool = True
    zero_ok: bool | None = None
    gronwall_ok: bool | None = None
    gronwall: dict = field(default_factory=dict)
    max_y: float = 0.0

    @property
    def passed(self) -> bool:
        return self.skipped or (self.closure_ok and self.zero_ok is not False
                                and self.gronwall_ok is not False)

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d


def relation_terms(traj: SolutionTrajectory, spec: ProblemSpec) -> dict:
    """Per-step terms of ``(1/2) dy/dt + E_diff + int a u + int g ||u||^s u = int h u``.

    Returns arrays over steps: T1 (difference quotient of ``y/2``), T2..T4
    at the new level, the relation residual ``T1+T2+T3+T4 - int h u`` (the
    source term vanishes in the homogeneous case), the numerical
    dissipation ``|u^{n+1}-u^n|^2/(2 dt)``, and the scheme-consistent balance
    that backward Euler satisfies exactly.
    """
    m = traj.mesh
    vol = m.volumes
    out = {k: [] for k in ("T1", "T2", "T3", "T4", "residual", "dissipation", "closure", "scale")}
    for k in range(len(traj.times) - 1):
        t0, t1 = traj.times[k], traj.times[k + 1]
        dt = t1 - t0
        u0, u1 = traj.values[k], traj.values[k + 1]
        c1 = spec.coefficients(t1)
        y0, y1 = float(np.sum(vol * u0**2)), float(np.sum(vol * u1**2))
        T1 = 0.5 * (y1 - y0) / dt
        f1 = _nonlocal_factor(u1, m, spec.p, spec.s)
        T2 = diffusion_form(m, u1, u1, kappa(u1, spec.p0))
        T3 = float(np.sum(vol * spec.absorption(t1, u1, c1) * u1))
        T4 = float(np.sum(vol * c1["g"] * f1 * u1))
        D = 0.5 * float(np.sum(vol * (u1 - u0) ** 2)) / dt
        if traj.scheme == "imex_lagged":
            f0 = _nonlocal_factor(u0, m, spec.p, spec.s)
            g0 = spec.g.at_nodes(m, t0)
            S2 = diffusion_form(m, u1, u1, kappa(u0, spec.p0, traj.delta))
            S3 = float(np.sum(vol * spec.absorption(t1, u0, c1) * u1))
            S4 = float(np.sum(vol * g0 * f0 * u1))
        else:
            S2 = diffusion_form(m, u1, u1, kappa(u1, spec.p0, traj.delta))
            S3, S4 = T3, T4
        h = float(np.sum(vol * c1["h"] * u1))
        closure = T1 + D + S2 + S3 + S4 - h
        scale = abs(T1) + D + abs(S2) + abs(S3) + abs(S4) + abs(h)
        for key, val in zip(out, (T1, T2, T3, T4, T1 + T2 + T3 + T4 - h, D, closure, scale)):
            out[key].append(val)
    return {k: np.array(v) for k, v in out.items()}


def homogeneous_decay_check(traj: SolutionTrajectory, spec: ProblemSpec, tol: float = 1e-6,
                            c_embed: float | None = None, eps: float | None = None,
                            precheck: bool = True) -> DecayReport:
    """Energy relation closure, zero-data conclusion and exponential bound on ``y``."""
    if precheck:
        v = validate_theorem41(spec, samples=2000)
        if not v.passed:
            return DecayReport(skipped=True, reason="thm41 hypotheses fail: " + ", ".join(v.failed()))
    terms = relation_terms(traj, spec)
    vol = traj.mesh.volumes
    y = np.array([float(np.sum(vol * u**2)) for u in traj.values])
    closure_ok = bool(np.all(np.abs(terms["closure"]) <= tol * np.maximum(terms["scale"], 1e-300)))
    rep = DecayReport(skipped=False, relation_residual=terms["residual"].tolist(),
                      dissipation=terms["dissipation"].tolist(),
                      closure_error=terms["closure"].tolist(), closure_ok=closure_ok,
                      max_y=float(y.max()))
    if y[0] == 0.0:
        rep.zero_ok = bool(y.max() <= 1e-20)
    g = gronwall_rate(spec, c_embed=c_embed, eps=eps)
    bound = y[0] * np.exp(g["rate"] * (traj.times - traj.times[0]))
    rep.gronwall = {**g, "bound_final": float(bound[-1])}
    rep.gronwall_ok = bool(np.all(y <= bound * (1 + 1e-12) + 1e-300))
    return rep


def summary_table(traj: SolutionTrajectory, spec: ProblemSpec, exact=None) -> dict[str, np.ndarray]:
    """Per-level columns for the run summary CSV.

    ``relation_residual`` at level k is the residual of the step ending
    there (NaN at level 0).  ``exact(x..., t)`` adds an ``l2_error`` column.
    """
    rows = [pairing_terms(GridFunction(traj.mesh, u), t, spec) for t, u in zip(traj.times, traj.values)]
    res = np.full(len(traj.times), np.nan)
    if len(traj.times) > 1:
        res[1:] = relation_terms(traj, spec)["residual"]
    y = np.array([r.y for r in rows])
    rate = gronwall_rate(spec)["rate"]
    cols = {
        "t": np.asarray(traj.times, float),
        "y": y,
        "diffusion_energy": np.array([r.diffusion_energy for r in rows]),
        "sobolev_form": np.array([r.sobolev_form for r in rows]),
        "absorption_pairing": np.array([r.absorption_pairing for r in rows]),
        "nonlocal_pairing": np.array([r.nonlocal_pairing for r in rows]),
        "relation_residual": res,
        "gronwall_bound": y[0] * np.exp(rate * (traj.times - traj.times[0])),
    }
    if exact is not None:
        m = traj.mesh
        cols["l2_error"] = np.array([
            lebesgue_norm(GridFunction(m, u - exact(*m.grid, t)), 2.0)
            for t, u in zip(traj.times, traj.values)])
    return cols


def l2_space_time_error(traj: SolutionTrajectory, exact) -> float:
    """``||u_h - u*||_{L^2(Q_T)}`` with the trapezoid rule in time."""
    m = traj.mesh
    tw = trapezoid_weights(traj.times)
    sq = [float(np.sum(m.volumes * (u - exact(*m.grid, t)) ** 2)) for t, u in zip(traj.times, traj.values)]
    return math.sqrt(float(np.dot(tw, sq)))


def observed_orders(errors, steps) -> np.ndarray:
    """``log(e_k/e_{k+1}) / log(h_k/h_{k+1})`` for successive refinements."""
    e = np.asarray(errors, float)
    h = np.asarray(steps, float)
    return np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])
