"""Backward-Euler finite-volume solver for the nonlocal degenerate equation.

Unknowns are the interior node values; boundary nodes stay at 0.  The
diffusion flux across the edge between nodes i and j is

    F = kappa_f (u_j - u_i) / h,   kappa_f = (kappa(u_i) + kappa(u_j)) / 2,
    kappa(u) = |u|^(p0-2) + delta.

Two schemes: ``imex_lagged`` (one SPD linear solve per step, coefficients,
absorption and nonlocal factor taken from the previous level) and
``implicit_newton`` (fully implicit, damped Newton).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, MeshMismatchError, PreconditionError, StepError
from .exponent_spaces import power_abs
from .mesh import GridFunction, Mesh, SpaceTimeFunction
from .model import ProblemSpec, validate_theorem31, validate_theorem32
from .pn_spaces import trapezoid_weights

log = logging.getLogger(__name__)

SCHEMES = ("imex_lagged", "implicit_newton")


@dataclass
class SolverConfig:
    dt: float | None = None
    scheme: str = "imex_lagged"
    delta: float = 0.0
    newton_tol: float = 1e-10
    max_newton: int = 30
    linear_tol: float = 1e-10
    check: str = "warn"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.delta < 0 or self.newton_tol <= 0 or self.linear_tol <= 0 or self.max_newton < 1:
            raise ValueError("need delta >= 0, positive tolerances, max_newton >= 1")
        if self.check not in ("strict", "warn", "off"):
            raise ValueError("check must be strict, warn or off")


@dataclass
class SolutionTrajectory:
    mesh: Mesh
    times: np.ndarray
    values: np.ndarray
    scheme: str
    delta: float = 0.0
    iterations: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    aborted: bool = False
    error: str | None = None
    injected_initial: bool = False

    @property
    def slices(self) -> list[GridFunction]:
        return [GridFunction(self.mesh, v) for v in self.values]

    def slice(self, k: int) -> GridFunction:
        return GridFunction(self.mesh, self.values[k])

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.times)


# --- discrete operators --------------------------------------------------------

def kappa(u: np.ndarray, p0: float, delta: float = 0.0) -> np.ndarray:
    return power_abs(np.abs(u), p0 - 2.0) + delta


def kappa_prime(u: np.ndarray, p0: float) -> np.ndarray:
    if p0 == 2.0:
        return np.zeros_like(u)
    au = np.abs(u)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = (p0 - 2.0) * power_abs(au, p0 - 3.0) * np.sign(u)
    return np.where(au > 0, d, 0.0)


def _apply_flux_operator(mesh: Mesh, u: np.ndarray, k: np.ndarray) -> np.ndarray:
    """``-div(kappa grad u)`` at every node (0 on the boundary), arithmetic face means."""
    uf, kf_node = u.ravel(), k.ravel()
    out = np.zeros(mesh.size)
    for tails, heads, h, _ in mesh.edges:
        flux = 0.5 * (kf_node[tails] + kf_node[heads]) * (uf[heads] - uf[tails]) / h
        out -= np.bincount(tails, flux / h, mesh.size)
        out += np.bincount(heads, flux / h, mesh.size)
    out[mesh.boundary_mask.ravel()] = 0.0
    return out.reshape(mesh.shape)


def assemble_diffusion_divergence(u: GridFunction, p0: float, delta: float = 0.0) -> GridFunction:
    """Finite-volume ``-sum_i D_i((|u|^(p0-2) + delta) D_i u)``."""
    return u.with_values(_apply_flux_operator(u.mesh, u.values, kappa(u.values, p0, delta)))


def assemble_diffusion_transformed(u: GridFunction, p0: float) -> GridFunction:
    """``-(1/(p0-1)) Laplacian_h(|u|^(p0-2) u)`` with the standard 3/5-point Laplacian."""
    phi = power_abs(np.abs(u.values), p0 - 2.0) * u.values
    lap = _apply_flux_operator(u.mesh, phi, np.ones(u.mesh.shape))
    return u.with_values(lap / (p0 - 1.0))


def diffusion_form(mesh: Mesh, u: np.ndarray, w: np.ndarray, k: np.ndarray) -> float:
    """``sum_i int kappa_f D_i u D_i w`` over edges."""
    uf, wf, kn = u.ravel(), w.ravel(), k.ravel()
    total = 0.0
    for tails, heads, h, ew in mesh.edges:
        kf = 0.5 * (kn[tails] + kn[heads])
        total += float(np.sum(ew * kf * (uf[heads] - uf[tails]) * (wf[heads] - wf[tails]))) / h**2
    return total


def diffusion_energy(mesh: Mesh, u: np.ndarray, p0: float, delta: float = 0.0) -> float:
    """``sum_i int |u|^(p0-2) |D_i u|^2`` with arithmetic face coefficients."""
    return diffusion_form(mesh, u, u, kappa(u, p0, delta))


def _interior_map(mesh: Mesh) -> np.ndarray:
    m = np.full(mesh.size, -1)
    m[mesh.interior] = np.arange(mesh.interior.size)
    return m


def _restrict(mesh: Mesh, rows, cols, vals) -> sp.csc_matrix:
    imap = _interior_map(mesh)
    r, c = imap[rows], imap[cols]
    keep = (r >= 0) & (c >= 0)
    n = mesh.interior.size
    return sp.csc_matrix((vals[keep], (r[keep], c[keep])), shape=(n, n))


def diffusion_matrix(mesh: Mesh, k: np.ndarray) -> sp.csc_matrix:
    """Interior block of the linear operator ``u -> -div(k grad u)`` for frozen ``k``."""
    kn = k.ravel()
    rows, cols, vals = [], [], []
    for tails, heads, h, _ in mesh.edges:
        c = 0.5 * (kn[tails] + kn[heads]) / h**2
        rows += [tails, tails, heads, heads]
        cols += [tails, heads, heads, tails]
        vals += [c, -c, c, -c]
    return _restrict(mesh, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))


def diffusion_jacobian(mesh: Mesh, u: np.ndarray, p0: float, delta: float) -> sp.csc_matrix:
    """Interior block of the derivative of ``u -> -div(kappa(u) grad u)``."""
    uf = u.ravel()
    kn = kappa(uf, p0, delta)
    kp = kappa_prime(uf, p0)
    rows, cols, vals = [], [], []
    for tails, heads, h, _ in mesh.edges:
        du = uf[heads] - uf[tails]
        kf = 0.5 * (kn[tails] + kn[heads])
        dF_t = (0.5 * kp[tails] * du - kf) / h
        dF_h = (0.5 * kp[heads] * du + kf) / h
        rows += [tails, tails, heads, heads]
        cols += [tails, heads, tails, heads]
        vals += [-dF_t / h, -dF_h / h, dF_t / h, dF_h / h]
    return _restrict(mesh, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))


def _lp_norm(u: np.ndarray, vol: np.ndarray, p: float) -> float:
    return float(np.sum(vol * power_abs(np.abs(u), p))) ** (1.0 / p)


def _nonlocal_factor_and_grad(u: np.ndarray, vol: np.ndarray, p: float, s: float):
    norm = _lp_norm(u, vol, p)
    if norm == 0.0:
        return 0.0, np.zeros_like(u)
    grad = s * norm ** (s - p) * vol * power_abs(np.abs(u), p - 1.0) * np.sign(u)
    return norm**s, grad


# --- time stepping ---------------------------------------------------------------

def _imex_step(spec: ProblemSpec, cfg: SolverConfig, u_old: np.ndarray, t0: float, dt: float):
    m = spec.mesh
    I = m.interior
    t1 = t0 + dt
    c1 = spec.coefficients(t1)
    g0 = spec.g.at_nodes(m, t0)
    factor = _lp_norm(u_old, m.volumes, spec.p) ** spec.s
    rhs = (u_old / dt - spec.absorption(t1, u_old, c1) - g0 * factor + c1["h"]).ravel()[I]
    A = diffusion_matrix(m, kappa(u_old, spec.p0, cfg.delta))
    A = (A + sp.identity(I.size, format="csc") / dt).tocsr()
    if not np.any(rhs):
        x = np.zeros(I.size)
    else:
        diag = A.diagonal()
        M = sp.diags(1.0 / diag)
        x, info = spla.cg(A, rhs, x0=u_old.ravel()[I], rtol=cfg.linear_tol, atol=0.0,
                          maxiter=20 * I.size + 100, M=M)
        if info != 0:
            raise ConvergenceError(f"conjugate gradient failed (info={info}) at t={t1:g}")
    u = np.zeros(m.size)
    u[I] = x
    return u.reshape(m.shape), 1, 0.0


def _newton_residual(spec, cfg, u, u_old, t1, dt, c1):
    m = spec.mesh
    factor = _lp_norm(u, m.volumes, spec.p) ** spec.s
    r = ((u - u_old) / dt + _apply_flux_operator(m, u, kappa(u, spec.p0, cfg.delta))
         + spec.absorption(t1, u, c1) + c1["g"] * factor - c1["h"])
    return r.ravel()[m.interior]


def _newton_step(spec: ProblemSpec, cfg: SolverConfig, u_old: np.ndarray, t0: float, dt: float):
    m = spec.mesh
    I = m.interior
    t1 = t0 + dt
    c1 = spec.coefficients(t1)
    u = u_old.copy()
    r = _newton_residual(spec, cfg, u, u_old, t1, dt, c1)
    scale = max(1.0, float(np.abs(u_old).max()) / dt, float(np.abs(c1["h"]).max()))
    tol = cfg.newton_tol * scale
    rnorm = float(np.abs(r).max())
    gI = c1["g"].ravel()[I]
    for it in range(cfg.max_newton + 1):
        if rnorm <= tol:
            return u, it, rnorm
        if it == cfg.max_newton:
            break
        J = diffusion_jacobian(m, u, spec.p0, cfg.delta)
        da = spec.absorption_derivative(t1, u, c1).ravel()[I]
        J = (J + sp.diags(1.0 / dt + da)).tocsc()
        try:
            lu = spla.splu(J)
        except RuntimeError as exc:
            raise StepError(f"singular Jacobian at t={t1:g}: {exc}", rnorm, t1) from exc
        du = lu.solve(-r)
        _, dN = _nonlocal_factor_and_grad(u.ravel(), m.volumes.ravel(), spec.p, spec.s)
        d = dN[I]
        if np.any(gI) and np.any(d):
            y = lu.solve(gI)
            du = du - y * (d @ du) / (1.0 + d @ y)
        lam = 1.0
        while True:
            trial = u.copy().ravel()
            trial[I] += lam * du
            trial = trial.reshape(m.shape)
            rt = _newton_residual(spec, cfg, trial, u_old, t1, dt, c1)
            rt_norm = float(np.abs(rt).max())
            if np.isfinite(rt_norm) and (rt_norm <= (1.0 - 1e-4 * lam) * rnorm or lam < 1.0 / 1024):
                break
            lam *= 0.5
        if not np.isfinite(rt_norm):
            raise StepError(f"Newton produced non-finite residual at t={t1:g}", rnorm, t1)
        u, r, rnorm = trial, rt, rt_norm
    raise StepError(f"Newton did not converge in {cfg.max_newton} iterations at t={t1:g} "
                    f"(residual {rnorm:.3e})", rnorm, t1)


def _advance(spec, cfg, u_old, t0, dt):
    if cfg.scheme == "imex_lagged":
        return _imex_step(spec, cfg, u_old, t0, dt)
    return _newton_step(spec, cfg, u_old, t0, dt)


def time_step(state: GridFunction, t: float, spec: ProblemSpec, cfg: SolverConfig,
              dt: float | None = None) -> GridFunction:
    """One backward-Euler step from level ``t`` to ``t + dt``."""
    if state.mesh != spec.mesh:
        raise MeshMismatchError("state and problem live on different meshes")
    if not state.is_admissible:
        raise PreconditionError("state must vanish on the boundary")
    dt = dt or cfg.dt or spec.mesh.dt
    return state.with_values(_advance(spec, cfg, state.values, t, dt)[0])


def _time_levels(spec: ProblemSpec, cfg: SolverConfig) -> np.ndarray:
    T = spec.T
    dt = cfg.dt or spec.mesh.dt
    nt = int(round(T / dt))
    if nt < 1 or abs(nt * dt - T) > 1e-9 * T:
        raise PreconditionError(f"dt={dt} does not divide T={T}")
    return np.linspace(0.0, T, nt + 1)


def _precheck(spec: ProblemSpec, cfg: SolverConfig):
    if cfg.check == "off":
        return
    ok = (validate_theorem31(spec, samples=1000).passed
          or validate_theorem32(spec, samples=1000).passed)
    if not ok:
        msg = "problem data satisfy neither existence profile (thm31/thm32)"
        if cfg.check == "strict":
            raise PreconditionError(msg)
        log.warning(msg)


def solve(spec: ProblemSpec, cfg: SolverConfig | None = None, initial=None) -> SolutionTrajectory:
    """March from ``u(0) = 0`` (or injected ``initial``) to ``T``.

    A failing step ends the run; the trajectory up to the last good level is
    returned with ``aborted`` set.
    """
    cfg = cfg or SolverConfig()
    _precheck(spec, cfg)
    m = spec.mesh
    times = _time_levels(spec, cfg)
    init = initial if initial is not None else spec.initial
    if init is None:
        u = np.zeros(m.shape)
    else:
        u = init.values.copy() if isinstance(init, GridFunction) else np.asarray(init.at_nodes(m, 0.0), float)
        u = u.reshape(m.shape).copy()
        u[m.boundary_mask] = 0.0
    values = [u]
    traj = SolutionTrajectory(m, times, np.empty(0), cfg.scheme, cfg.delta,
                              injected_initial=init is not None)
    for k in range(len(times) - 1):
        t0, dt = times[k], times[k + 1] - times[k]
        try:
            u, its, res = _advance(spec, cfg, u, t0, dt)
        except ConvergenceError as exc:
            traj.aborted = True
            traj.error = str(exc)
            log.error("solve aborted: %s", exc)
            break
        values.append(u)
        traj.iterations.append(its)
        traj.residuals.append(res)
    traj.values = np.stack(values)
    traj.times = times[: len(values)]
    return traj


def weak_residual(traj: SolutionTrajectory, spec: ProblemSpec, w) -> float:
    """Signed space-time weak-form residual against a test function ``w``.

    The time-derivative term uses the difference quotients of ``u`` against
    the piecewise-linear ``w``; the remaining terms use the trapezoid rule
    over the time levels.
    """
    m = traj.mesh
    wv = w.values if isinstance(w, SpaceTimeFunction) else np.asarray(w, dtype=float)
    if m != spec.mesh or wv.shape != traj.values.shape:
        raise MeshMismatchError("trajectory, problem and test function must share mesh and time grid")
    if np.any(wv[:, m.boundary_mask]):
        raise PreconditionError("test function must vanish on the boundary")
    vol = m.volumes
    u = traj.values
    total = 0.0
    for k in range(len(traj.times) - 1):
        total += float(np.sum(vol * (u[k + 1] - u[k]) * 0.5 * (wv[k] + wv[k + 1])))
    tw = trapezoid_weights(traj.times)
    for k, t in enumerate(traj.times):
        c = spec.coefficients(t)
        uk, wk = u[k], wv[k]
        diff = diffusion_form(m, uk, wk, kappa(uk, spec.p0))
        factor = _lp_norm(uk, vol, spec.p) ** spec.s
        rest = np.sum(vol * (spec.absorption(t, uk, c) + c["g"] * factor - c["h"]) * wk)
        total += tw[k] * (diff + float(rest))
    return total
