"""Pseudo-norms, metric and the power homeomorphism of the pn-spaces S_{1,alpha,beta}.

Gradients are forward differences along mesh edges.  On an edge with end
values ``a, b`` the weight ``|u|^alpha`` is taken as ``m^beta`` where ``m`` is
the exact mean of ``|u|^(alpha/beta)`` over the linear interpolant.  With
this choice the chain rule for ``phi(u) = |u|^(alpha/beta) u`` holds exactly
edge by edge, and for ``alpha/beta`` in {0, 1} on same-sign edges it reduces
to the plain midpoint rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MeshMismatchError, PreconditionError
from .exponent_spaces import lebesgue_norm, power_abs
from .mesh import GridFunction, Mesh


@dataclass(frozen=True)
class PnIndex:
    """Index pair ``(alpha, beta)`` of S_{1,alpha,beta}; alpha >= 0, beta >= 1."""

    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 1:
            raise PreconditionError(f"need alpha >= 0 and beta >= 1, got {self}")

    @property
    def gamma(self) -> float:
        return self.alpha / self.beta

    @property
    def order(self) -> float:
        return self.alpha + self.beta

    @classmethod
    def for_p0(cls, p0: float) -> "PnIndex":
        """The pair ``((p0-2) q0, q0)`` attached to the diffusion ``|u|^{p0-2} Du``."""
        q0 = p0 / (p0 - 1.0)
        return cls((p0 - 2.0) * q0, q0)


def _phi(values: np.ndarray, gamma: float) -> np.ndarray:
    return power_abs(np.abs(values), gamma) * values


def phi_map(u: GridFunction, idx: PnIndex) -> GridFunction:
    """Pointwise ``|u|^(alpha/beta) u``."""
    return u.with_values(_phi(u.values, idx.gamma))


def phi_inverse(v: GridFunction, idx: PnIndex) -> GridFunction:
    """Pointwise ``|v|^(-alpha/(alpha+beta)) v`` with 0 mapped to 0."""
    x = v.values
    ax = np.abs(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(ax > 0, power_abs(ax, 1.0 / (idx.gamma + 1.0)) * np.sign(x), 0.0)
    return v.with_values(out)


def _edge_mean_power(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    """Mean of ``|tau|^gamma`` for tau running linearly from a to b."""
    if gamma == 0.0:
        return np.ones_like(a)
    diff = b - a
    scale = np.maximum(np.abs(a), np.abs(b))
    close = np.abs(diff) <= 1e-9 * scale
    safe = np.where(close, 1.0, diff)
    exact = (_phi(b, gamma) - _phi(a, gamma)) / ((gamma + 1.0) * safe)
    return np.where(close, power_abs(np.abs(0.5 * (a + b)), gamma), exact)


def _gradient_integral(mesh: Mesh, values: np.ndarray, beta: float, weight=None) -> float:
    """``sum_i int w |D_i v|^beta`` over all edges, optional per-edge weight callback."""
    flat = values.ravel()
    total = 0.0
    for tails, heads, h, w in mesh.edges:
        a, b = flat[tails], flat[heads]
        dens = power_abs(np.abs(b - a) / h, beta)
        if weight is not None:
            dens = dens * weight(a, b)
        total += float(np.sum(w * dens))
    return total


def pn_integral(u: GridFunction, idx: PnIndex) -> float:
    """``sum_i int |u|^alpha |D_i u|^beta`` (the pseudo-norm raised to ``alpha+beta``)."""
    g = idx.gamma
    return _gradient_integral(
        u.mesh, u.values, idx.beta,
        weight=lambda a, b: power_abs(_edge_mean_power(a, b, g), idx.beta))


def pn_pseudonorm(u: GridFunction, idx: PnIndex, ring: bool = False) -> float:
    """``(sum_i int |u|^alpha |D_i u|^beta)^(1/(alpha+beta))``.

    With ``ring=True`` the field must vanish on the boundary nodes.
    """
    if ring and not u.is_admissible:
        raise PreconditionError("zero-trace variant requested for a field nonzero on the boundary")
    return pn_integral(u, idx) ** (1.0 / idx.order)


@dataclass
class GradientIdentityReport:
    lhs: float
    rhs: float
    rel_error: float
    holds: bool


def gradient_identity_check(u: GridFunction, idx: PnIndex, rtol: float = 1e-8) -> GradientIdentityReport:
    """Compare ``||D phi(u)||_beta^beta`` with ``((alpha+beta)/beta)^beta [u]^(alpha+beta)``."""
    lhs = _gradient_integral(u.mesh, _phi(u.values, idx.gamma), idx.beta)
    rhs = ((idx.alpha + idx.beta) / idx.beta) ** idx.beta * pn_integral(u, idx)
    scale = max(abs(lhs), abs(rhs))
    rel = abs(lhs - rhs) / scale if scale > 0 else 0.0
    return GradientIdentityReport(lhs, rhs, rel, rel <= rtol)


def pn_metric(u: GridFunction, v: GridFunction, idx: PnIndex) -> float:
    """Discrete ``W^{1,beta}`` distance between ``phi(u)`` and ``phi(v)``."""
    if u.mesh != v.mesh:
        raise MeshMismatchError("u and v live on different meshes")
    d = u.with_values(_phi(u.values, idx.gamma) - _phi(v.values, idx.gamma))
    grad = _gradient_integral(u.mesh, d.values, idx.beta) ** (1.0 / idx.beta)
    return lebesgue_norm(d, idx.beta) + grad


def trapezoid_weights(times: np.ndarray) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.size == 1:
        return np.zeros(1)
    dt = np.diff(times)
    w = np.zeros_like(times)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def bochner_pseudonorm(traj, p: float, idx: PnIndex) -> float:
    """``(int_0^T [u(t)]^p dt)^(1/p)`` over the time levels of a trajectory.

    ``traj`` needs ``mesh``, ``times`` and ``values`` of shape ``(levels, *mesh.shape)``.
    """
    if p < 1:
        raise PreconditionError("time exponent must be >= 1")
    values = np.asarray(traj.values)
    if values.shape[0] == 0:
        raise MeshMismatchError("empty trajectory")
    per_level = np.array([pn_pseudonorm(GridFunction(traj.mesh, v), idx) for v in values])
    w = trapezoid_weights(traj.times)
    return float(np.sum(w * per_level**p)) ** (1.0 / p)


def critical_lebesgue_exponent(idx: PnIndex, n: int) -> float:
    """``n (alpha+beta)/(n-beta)``, the largest ``r`` with S_{1,alpha,beta} in L^r (needs n > beta)."""
    if n <= idx.beta:
        return math.inf
    return n * idx.order / (n - idx.beta)


@dataclass
class EmbeddingReport:
    case_i: bool
    case_ii: bool
    case_ii_compact: bool
    case_iii: bool
    critical_r: float


def embedding_predicate(idx: PnIndex, idx1: PnIndex, n: int, r: float, p: float) -> EmbeddingReport:
    """Which embedding hypotheses hold.

    (i) S_{1,idx} in S_{1,idx1}; (ii) S_{1,idx} in L^r (compact when strict);
    (iii) W_0^{1,p} in S_{1,idx}.
    """
    a, b = idx.alpha, idx.beta
    a1, b1 = idx1.alpha, idx1.beta
    tol = 1e-12
    case_i = b >= b1 >= 1 and a1 / b1 >= a / b - tol and a1 + b1 <= a + b + tol
    crit = critical_lebesgue_exponent(idx, n)
    case_ii = n > b and crit >= r - tol * max(1.0, r)
    compact = n > b and crit > r + tol * max(1.0, r)
    case_iii = p >= a + b - tol
    return EmbeddingReport(bool(case_i), bool(case_ii), bool(compact), bool(case_iii), crit)


def embedding_ratio(u: GridFunction, idx: PnIndex, n: int) -> float:
    """``||u||_{L^r} / [u]`` at the critical ``r``; nan for the zero field."""
    r = critical_lebesgue_exponent(idx, n)
    den = pn_pseudonorm(u, idx)
    if den == 0:
        return math.nan
    return lebesgue_norm(u, r) / den
