"""Variable-exponent Lebesgue spaces on sampled data.

Fields are nodal arrays paired with quadrature weights (``GridFunction`` on
a spatial mesh, ``SpaceTimeFunction`` on the space-time cylinder).  An
exponent may be ``inf`` at some nodes; there the modular contributes 0 where
``|u| <= 1`` and ``inf`` otherwise, so the Luxemburg norm picks up the
essential supremum of ``|u|`` over those nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

from .errors import ConvergenceError, MeshMismatchError, NumericDomainError, PreconditionError
from .mesh import GridFunction, SpaceTimeFunction

Field = Union[GridFunction, SpaceTimeFunction]

LUX_ATOL = 1e-12
LUX_MAX_ITER = 200
LOG_SPACE_THRESHOLD = 1e100
DEFAULT_ETA = 0.01


class ExponentField:
    """Sampled exponent ``p(x, t)`` with bounds ``1 <= p- <= p <= p+ < inf``.

    ``inf`` samples mark the infinity mask; they are excluded from the bounds.
    """

    def __init__(self, samples, lower_bound=None, upper_bound=None, mesh=None):
        samples = np.array(samples, dtype=float)
        if np.isnan(samples).any():
            raise NumericDomainError("exponent samples contain NaN")
        finite = samples[np.isfinite(samples)]
        if (samples == -np.inf).any() or (finite < 1.0).any():
            raise PreconditionError("exponent samples must be >= 1")
        if finite.size:
            lo, hi = float(finite.min()), float(finite.max())
        else:
            lo = hi = math.nan
        if lower_bound is not None:
            if lower_bound < 1.0 or (finite.size and lower_bound > lo):
                raise PreconditionError(f"lower bound {lower_bound} invalid for samples >= {lo}")
            lo = float(lower_bound)
        if upper_bound is not None:
            if not math.isfinite(upper_bound) or (finite.size and upper_bound < hi):
                raise PreconditionError(f"upper bound {upper_bound} invalid for samples <= {hi}")
            hi = float(upper_bound)
        self.samples = samples
        self.lower_bound = lo
        self.upper_bound = hi
        self.mesh = mesh

    @classmethod
    def constant(cls, value: float, like: Field) -> "ExponentField":
        return cls(np.full(like.values.shape, float(value)), mesh=like.mesh)

    @property
    def infinity_mask(self) -> np.ndarray:
        return np.isinf(self.samples)

    @property
    def has_infinity(self) -> bool:
        return bool(self.infinity_mask.any())

    @property
    def is_constant(self) -> bool:
        return not self.has_infinity and self.lower_bound == self.upper_bound

    def __repr__(self):
        return (f"ExponentField(p-={self.lower_bound:g}, p+={self.upper_bound:g}, "
                f"n_inf={int(self.infinity_mask.sum())})")


def _check_pair(u: Field, p: ExponentField):
    if u.values.shape != p.samples.shape:
        raise MeshMismatchError(
            f"field shape {u.values.shape} != exponent shape {p.samples.shape}")
    if p.mesh is not None and p.mesh != u.mesh:
        raise MeshMismatchError("field and exponent live on different meshes")


def power_abs(a: np.ndarray, p) -> np.ndarray:
    """``|a|**p`` for nonnegative ``a``; log-space evaluation for huge ``a``."""
    a = np.asarray(a, dtype=float)
    p = np.broadcast_to(np.asarray(p, dtype=float), a.shape)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        out = np.power(a, p)
        big = a > LOG_SPACE_THRESHOLD
        if big.any():
            out = np.where(big, np.exp(p * np.log(np.where(big, a, 1.0))), out)
    return out


def _modular_density(absu: np.ndarray, p: ExponentField) -> np.ndarray:
    mask = p.infinity_mask
    finite_p = np.where(mask, 1.0, p.samples)
    dens = power_abs(absu, finite_p)
    if mask.any():
        dens = np.where(mask, np.where(absu <= 1.0, 0.0, np.inf), dens)
    return dens


def modular(u: Field, p: ExponentField) -> float:
    """Quadrature value of the modular ``int |u|^{p(x,t)}``."""
    _check_pair(u, p)
    absu = np.abs(u.values)
    if np.isnan(absu).any():
        raise NumericDomainError("field contains NaN")
    dens = _modular_density(absu, p)
    if np.isnan(dens).any():
        raise NumericDomainError("modular density is NaN")
    if np.isinf(dens).any():
        return math.inf
    return float(np.sum(u.weights * dens))


def _modular_scaled(absu, weights, p, lam) -> float:
    dens = _modular_density(absu / lam, p)
    if np.isinf(dens).any():
        return math.inf
    return float(np.sum(weights * dens))


def luxemburg_norm(u: Field, p: ExponentField, atol: float = LUX_ATOL,
                   max_iter: int = LUX_MAX_ITER) -> float:
    """``inf{lam > 0 : modular(u/lam, p) <= 1}`` by bisection.

    The bracket starts at ``max(1, max|u| * |Q|^(1/p-))`` and is widened by
    doubling/halving until it straddles the unit level of the modular.  The
    tolerance is absolute for norms >= 1 and relative below that.
    """
    _check_pair(u, p)
    absu = np.abs(u.values)
    if np.isnan(absu).any():
        raise NumericDomainError("field contains NaN")
    if not absu.any():
        return 0.0
    w = u.weights
    measure = float(np.sum(w))
    p_minus = p.lower_bound if math.isfinite(p.lower_bound) else 1.0
    hi = max(1.0, float(absu.max()) * measure ** (1.0 / p_minus))
    f = lambda lam: _modular_scaled(absu, w, p, lam)  # noqa: E731

    n = 0
    while f(hi) > 1.0:
        hi *= 2.0
        n += 1
        if n > max_iter:
            raise ConvergenceError("could not bracket the Luxemburg norm from above")
    lo = hi
    n = 0
    while f(lo) <= 1.0:
        lo *= 0.5
        n += 1
        if n > 4 * max_iter:
            raise ConvergenceError("could not bracket the Luxemburg norm from below")
    if n > 1:
        hi = 2.0 * lo

    for _ in range(max_iter):
        if hi - lo <= atol * min(1.0, hi) or hi - lo <= 4.0 * np.finfo(float).eps * hi:
            return 0.5 * (lo + hi)
        mid = 0.5 * (lo + hi)
        if f(mid) <= 1.0:
            hi = mid
        else:
            lo = mid
    raise ConvergenceError(f"Luxemburg bisection did not converge in {max_iter} steps")


def lebesgue_norm(u: Field, r: float) -> float:
    """Classical weighted ``L^r`` norm, ``r`` in ``[1, inf]``."""
    absu = np.abs(u.values)
    if math.isinf(r):
        return float(absu.max())
    if r < 1:
        raise PreconditionError("r must be >= 1")
    return float(np.sum(u.weights * power_abs(absu, r))) ** (1.0 / r)


def conjugate(p: ExponentField, allow_infinite: bool = False) -> ExponentField:
    """Pointwise ``p/(p-1)``; ``inf`` maps to 1, and 1 maps to ``inf`` if allowed."""
    s = p.samples
    ones = s == 1.0
    if ones.any() and not allow_infinite:
        raise NumericDomainError("exponent equal to 1 has conjugate inf; pass allow_infinite=True")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(np.isinf(s), 1.0, np.where(ones, np.inf, s / (s - 1.0)))
    return ExponentField(out, mesh=p.mesh)


@dataclass
class HolderReport:
    lhs: float
    rhs: float
    holds: bool


def holder_pairing_check(u: Field, v: Field, p: ExponentField, tol: float = 1e-10) -> HolderReport:
    """Check ``int |uv| <= 2 ||u||_p ||v||_{p*}``."""
    if u.values.shape != v.values.shape:
        raise MeshMismatchError("u and v have different shapes")
    q = conjugate(p)
    lhs = float(np.sum(u.weights * np.abs(u.values * v.values)))
    rhs = 2.0 * luxemburg_norm(u, p) * luxemburg_norm(v, q)
    return HolderReport(lhs, rhs, lhs <= rhs + tol * max(1.0, rhs))


@dataclass
class SandwichReport:
    norm: float
    modular: float
    lower: float
    upper: float
    holds: bool


def norm_modular_sandwich_check(u: Field, p: ExponentField, rtol: float = 1e-9) -> SandwichReport:
    """Check ``min(|u|^{p-}, |u|^{p+}) <= modular(u) <= max(|u|^{p-}, |u|^{p+})``."""
    norm = luxemburg_norm(u, p)
    sigma = modular(u, p)
    p_hi = math.inf if p.has_infinity else p.upper_bound
    p_lo = p.lower_bound if math.isfinite(p.lower_bound) else p_hi
    with np.errstate(over="ignore"):
        a, b = float(np.power(norm, p_lo)), float(np.power(norm, p_hi))
    lower, upper = min(a, b), max(a, b)
    holds = lower * (1 - rtol) - rtol <= sigma <= upper * (1 + rtol) + rtol
    return SandwichReport(norm, sigma, lower, upper, bool(holds))


@dataclass
class InclusionReport:
    lhs: float
    rhs: float
    holds: bool


def inclusion_modular_check(u: Field, p1: ExponentField, p2: ExponentField,
                            tol: float = 1e-12) -> InclusionReport:
    """Integrated pointwise witness ``modular(u, p2) <= modular(u, p1) + |Q|`` for ``p2 <= p1``."""
    if p1.samples.shape != p2.samples.shape:
        raise MeshMismatchError("exponent shapes differ")
    if (p2.samples > p1.samples).any():
        raise PreconditionError("inclusion witness needs p2 <= p1 at every node")
    lhs = modular(u, p2)
    rhs = modular(u, p1) + float(np.sum(u.weights))
    return InclusionReport(lhs, rhs, lhs <= rhs * (1 + tol))


def beta_exponent(alpha: ExponentField, p0: float, eta: float = DEFAULT_ETA) -> ExponentField:
    """Integrability exponent for ``a0``: ``p0 a*/(p0 - a)`` where ``a < p0 - eta``, else inf."""
    if not 0.0 < eta < 1.0:
        raise NumericDomainError(f"eta must lie in (0, 1), got {eta}")
    if p0 < 2:
        raise PreconditionError("p0 must be >= 2")
    a = alpha.samples
    if alpha.has_infinity or not alpha.lower_bound > 1.0:
        raise PreconditionError("alpha must be finite with alpha- > 1")
    low = a < p0 - eta
    with np.errstate(divide="ignore", invalid="ignore"):
        val = p0 * (a / (a - 1.0)) / (p0 - a)
    return ExponentField(np.where(low, val, np.inf), mesh=alpha.mesh)


def beta1_exponent(alpha: ExponentField, p0: float) -> ExponentField:
    """``p0 a*/(p0 - a)`` everywhere; needs ``alpha+ < p0``."""
    if alpha.has_infinity or not alpha.lower_bound > 1.0:
        raise PreconditionError("alpha must be finite with alpha- > 1")
    if not alpha.upper_bound < p0:
        raise PreconditionError("beta1 needs alpha+ < p0")
    a = alpha.samples
    return ExponentField(p0 * (a / (a - 1.0)) / (p0 - a), mesh=alpha.mesh)


class CriticalExponents(NamedTuple):
    q0: float
    p_tilde: float
    p_tilde_conj: float


def critical_exponent(n: int, p0: float) -> CriticalExponents:
    """Conjugate ``q0`` of ``p0``, critical exponent ``n p0/(n - q0)`` and its conjugate."""
    if n < 3:
        raise PreconditionError("dimension n must be >= 3")
    if p0 < 2:
        raise PreconditionError("p0 must be >= 2")
    q0 = p0 / (p0 - 1.0)
    if n <= q0:
        raise NumericDomainError("need n > q0")
    pt = n * p0 / (n - q0)
    return CriticalExponents(q0, pt, pt / (pt - 1.0))


def mixed_norm(g: SpaceTimeFunction, r_time: float, r_space: float) -> float:
    """``L^{r_time}(0,T; L^{r_space}(Omega))`` norm; ``r_time = inf`` takes the max over levels."""
    if r_space < 1 or r_time < 1:
        raise PreconditionError("mixed norm exponents must be >= 1")
    per_level = np.array([lebesgue_norm(g.slice(k), r_space) for k in range(g.values.shape[0])])
    if math.isinf(r_time):
        return float(per_level.max())
    tw = g.mesh.time_weights
    return float(np.sum(tw * power_abs(per_level, r_time))) ** (1.0 / r_time)
