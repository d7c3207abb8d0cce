"""Problem data for the nonlocal degenerate parabolic equation

    u_t - sum_i D_i(|u|^{p0-2} D_i u) + a(x,t,u) + g(x,t) ||u||_{L^p}^s = h,
    u(x,0) = 0,  u = 0 on the lateral boundary,

together with validators for the structural hypotheses on its data.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from .errors import ExtrapolationError, PreconditionError
from .exponent_spaces import (
    DEFAULT_ETA,
    ExponentField,
    beta1_exponent,
    beta_exponent,
    conjugate,
    critical_exponent,
    lebesgue_norm,
    luxemburg_norm,
    mixed_norm,
    power_abs,
)
from .fields import CoefficientField, ConstantField, as_field
from .mesh import GridFunction, Mesh, SpaceTimeFunction

NONLINEARITY_KINDS = ("power_sign", "power_abs_plus_offset", "tabulated", "zero")


@dataclass
class Nonlinearity:
    """Absorption ``a(x, t, tau)``.

    ``power_sign``: ``a2 |tau|^(alpha-2) tau``;
    ``power_abs_plus_offset``: ``a0 |tau|^(alpha-1) + a1``;
    ``tabulated``: linear interpolation in ``tau`` of ``table`` (shape
    ``(ntau,)`` or ``(mesh.size, ntau)``) on the grid ``tau``;
    ``zero``: ``a = 0``.
    """

    kind: str = "power_sign"
    tau: Any = None
    table: Any = None

    def __post_init__(self):
        if self.kind not in NONLINEARITY_KINDS:
            raise ValueError(f"unknown nonlinearity {self.kind!r}; expected one of {NONLINEARITY_KINDS}")
        if self.kind == "tabulated":
            self.tau = np.asarray(self.tau, dtype=float)
            self.table = np.asarray(self.table, dtype=float)
            if self.tau.ndim != 1 or self.tau.size < 2 or np.any(np.diff(self.tau) <= 0):
                raise ValueError("tabulated tau grid must be strictly increasing with >= 2 points")
            if self.table.shape[-1] != self.tau.size:
                raise ValueError("table's last axis must match the tau grid")

    @property
    def tau_range(self) -> tuple[float, float]:
        if self.kind == "tabulated":
            return float(self.tau[0]), float(self.tau[-1])
        return -math.inf, math.inf

    def _segment(self, tau, nodes):
        tau = np.asarray(tau, dtype=float)
        lo, hi = self.tau_range
        if np.any(tau < lo) or np.any(tau > hi):
            raise ExtrapolationError(f"tau outside tabulated range [{lo}, {hi}]")
        k = np.clip(np.searchsorted(self.tau, tau, side="right") - 1, 0, self.tau.size - 2)
        if self.table.ndim == 1:
            y0, y1 = self.table[k], self.table[k + 1]
        else:
            nodes, tau, k = np.broadcast_arrays(np.asarray(nodes), tau, k)
            y0, y1 = self.table[nodes, k], self.table[nodes, k + 1]
        t0, t1 = self.tau[k], self.tau[k + 1]
        slope = (y1 - y0) / (t1 - t0)
        return y0 + slope * (tau - t0), slope

    def value(self, tau, alpha, a0, a1, a2, nodes=None):
        tau = np.asarray(tau, dtype=float)
        if self.kind == "power_sign":
            return a2 * power_abs(np.abs(tau), alpha - 1.0) * np.sign(tau)
        if self.kind == "power_abs_plus_offset":
            return a0 * power_abs(np.abs(tau), alpha - 1.0) + a1
        if self.kind == "tabulated":
            return self._segment(tau, nodes)[0]
        return np.zeros(np.broadcast_shapes(tau.shape, np.shape(alpha)))

    def derivative(self, tau, alpha, a0, a1, a2, nodes=None):
        """``d a / d tau``; singular powers at 0 are evaluated at ``|tau| = 1e-12``."""
        tau = np.asarray(tau, dtype=float)
        absu = np.maximum(np.abs(tau), 1e-12)
        if self.kind == "power_sign":
            return a2 * (alpha - 1.0) * power_abs(absu, alpha - 2.0)
        if self.kind == "power_abs_plus_offset":
            return a0 * (alpha - 1.0) * power_abs(absu, alpha - 2.0) * np.sign(tau)
        if self.kind == "tabulated":
            return self._segment(tau, nodes)[1]
        return np.zeros(np.broadcast_shapes(tau.shape, np.shape(alpha)))


@dataclass
class ProblemSpec:
    """One instance of the model problem on ``mesh`` (which also fixes ``T``).

    ``n`` is the space dimension used in exponent arithmetic; the simulation
    itself runs on the (1-D or 2-D) mesh.  ``initial`` is only for research
    runs outside the zero-initial-data class.
    """

    mesh: Mesh
    p0: float = 3.0
    p: float = 2.0
    s: float = 1.0
    alpha: CoefficientField = field(default_factory=lambda: ConstantField(2.0))
    nonlinearity: Nonlinearity = field(default_factory=Nonlinearity)
    a0: CoefficientField = field(default_factory=lambda: ConstantField(1.0))
    a1: CoefficientField = field(default_factory=lambda: ConstantField(0.0))
    a2: CoefficientField = field(default_factory=lambda: ConstantField(1.0))
    a3: CoefficientField = field(default_factory=lambda: ConstantField(0.0))
    A0: float = 1.0
    g: CoefficientField = field(default_factory=lambda: ConstantField(0.0))
    h: CoefficientField = field(default_factory=lambda: ConstantField(0.0))
    n: int = 3
    initial: CoefficientField | None = None

    def __post_init__(self):
        for name in ("alpha", "a0", "a1", "a2", "a3", "g", "h"):
            setattr(self, name, as_field(getattr(self, name)))
        if self.initial is not None:
            self.initial = as_field(self.initial)
        if self.p0 < 2 or self.p < 1 or self.s < 1:
            raise PreconditionError("need p0 >= 2, p >= 1, s >= 1")
        if not self.A0 > 0:
            raise PreconditionError("A0 must be positive")
        if self.n < 3:
            raise PreconditionError("exponent dimension n must be >= 3")
        a2 = self.a2.space_time(self.mesh).values
        if np.any(a2 < self.A0):
            raise PreconditionError(f"a2 drops below A0 = {self.A0} (min {a2.min():g})")

    @property
    def T(self) -> float:
        return self.mesh.T

    def coefficients(self, t: float) -> dict[str, np.ndarray]:
        m = self.mesh
        return {k: getattr(self, k).at_nodes(m, t) for k in ("alpha", "a0", "a1", "a2", "a3", "g", "h")}

    def alpha_field(self, t: float) -> ExponentField:
        return ExponentField(self.alpha.at_nodes(self.mesh, t), mesh=self.mesh)

    def alpha_space_time(self) -> ExponentField:
        return ExponentField(self.alpha.space_time(self.mesh).values)

    def absorption(self, t: float, u: np.ndarray, coeffs=None) -> np.ndarray:
        c = self.coefficients(t) if coeffs is None else coeffs
        nodes = np.arange(self.mesh.size).reshape(self.mesh.shape)
        return self.nonlinearity.value(u, c["alpha"], c["a0"], c["a1"], c["a2"], nodes)

    def absorption_derivative(self, t: float, u: np.ndarray, coeffs=None) -> np.ndarray:
        c = self.coefficients(t) if coeffs is None else coeffs
        nodes = np.arange(self.mesh.size).reshape(self.mesh.shape)
        return self.nonlinearity.derivative(u, c["alpha"], c["a0"], c["a1"], c["a2"], nodes)


def eval_nonlinearity(spec: ProblemSpec, nodes, t, tau) -> np.ndarray:
    """``a(x, t, tau)`` at flat node indices ``nodes`` and times ``t`` (broadcast)."""
    nodes = np.asarray(nodes)
    t = np.asarray(t, dtype=float)
    m = spec.mesh
    alpha = spec.alpha.evaluate(m, nodes, t)
    a0, a1, a2 = (getattr(spec, k).evaluate(m, nodes, t) for k in ("a0", "a1", "a2"))
    return spec.nonlinearity.value(tau, alpha, a0, a1, a2, nodes)


def nonlocal_factor(u: GridFunction, p: float, s: float) -> float:
    return lebesgue_norm(u, p) ** s


def nonlocal_term(u_slice: GridFunction, g_slice: GridFunction, p: float, s: float) -> GridFunction:
    """``g ||u||_{L^p(Omega)}^s``; the factor is one scalar per time level."""
    return g_slice.with_values(g_slice.values * nonlocal_factor(u_slice, p, s))


@dataclass
class ValidationReport:
    profile: str
    predicates: dict[str, bool]
    values: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.predicates.values())

    def failed(self) -> list[str]:
        return [k for k, v in self.predicates.items() if not v]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def validate_U1(spec: ProblemSpec, sample_count: int = 10_000, seed: int = 0,
                tau_max: float = 10.0, tau_min: float = 1e-3) -> ValidationReport:
    """Sample (x, t, tau) and check the growth bound and the sign/coercivity bound on ``a``.

    Margins: ``a0|tau|^(alpha-1) + a1 - |a|`` and ``a tau - a2|tau|^alpha + a3``;
    both must be >= 0 up to rounding.
    """
    if sample_count < 1:
        raise PreconditionError("sample_count must be >= 1")
    m = spec.mesh
    rng = np.random.default_rng(seed)
    nodes = rng.integers(0, m.size, sample_count)
    t = rng.uniform(0.0, m.T, sample_count)
    lo, hi = spec.nonlinearity.tau_range
    top = min(tau_max, hi, -lo)
    bottom = min(tau_min, top)
    mag = 10.0 ** rng.uniform(math.log10(bottom), math.log10(top), sample_count)
    sign = rng.choice([-1.0, 1.0], sample_count)
    tau = sign * mag

    alpha = spec.alpha.evaluate(m, nodes, t)
    a0, a1, a2, a3 = (getattr(spec, k).evaluate(m, nodes, t) for k in ("a0", "a1", "a2", "a3"))
    a = spec.nonlinearity.value(tau, alpha, a0, a1, a2, nodes)
    absu = np.abs(tau)
    growth = a0 * power_abs(absu, alpha - 1.0) + a1
    coerc = a2 * power_abs(absu, alpha)
    m31 = growth - np.abs(a)
    m32 = a * tau - coerc + a3
    tol31 = 1e-12 * (1.0 + growth + np.abs(a))
    tol32 = 1e-12 * (1.0 + np.abs(a * tau) + coerc + np.abs(a3))

    ast = spec.alpha.space_time(m).values
    a2st = spec.a2.space_time(m).values

    def worst(margin):
        k = int(np.argmin(margin))
        ix = np.unravel_index(nodes[k], m.shape)
        return {"margin": float(margin[k]), "x": [float(m.coords[ax][i]) for ax, i in enumerate(ix)],
                "t": float(t[k]), "tau": float(tau[k])}

    preds = {
        "alpha_bounds": bool(ast.min() > 1.0 and np.isfinite(ast).all()),
        "a2_ge_A0": bool(a2st.min() >= spec.A0 > 0),
        "coefficients_nonnegative": bool(min(a0.min(), a1.min(), a2.min(), a3.min()) >= 0),
        "growth_bound": bool(np.all(m31 >= -tol31)),
        "coercivity_bound": bool(np.all(m32 >= -tol32)),
    }
    values = {"samples": sample_count, "seed": seed, "tau_range": [float(bottom), float(top)],
              "alpha_minus": float(ast.min()), "alpha_plus": float(ast.max()),
              "worst_growth": worst(m31), "worst_coercivity": worst(m32)}
    return ValidationReport("U1", preds, values)


def _finite(x: float) -> bool:
    return x is not None and math.isfinite(x)


def _common_checks(spec: ProblemSpec) -> tuple[dict, dict]:
    preds = {
        "s_range": 1.0 <= spec.s < spec.p0 - 1.0,
        "p_le_p0": 1.0 <= spec.p <= spec.p0,
    }
    values: dict[str, Any] = {}
    m = spec.mesh
    alpha = spec.alpha_space_time()
    a1 = SpaceTimeFunction(m, spec.a1.space_time(m).values)
    try:
        values["a1_norm_alpha_conj"] = luxemburg_norm(a1, conjugate(alpha))
    except Exception as exc:  # noqa: BLE001 - reported, not raised
        values["a1_norm_alpha_conj"] = math.nan
        values["a1_error"] = str(exc)
    preds["a1_in_L_alpha_conj"] = _finite(values["a1_norm_alpha_conj"])

    q0, pt, ptc = critical_exponent(spec.n, spec.p0)
    values.update(q0=q0, p_tilde=pt, p_tilde_conj=ptc)
    g = spec.g.space_time(m)
    if preds["s_range"]:
        r_time = spec.p0 / (spec.p0 - (spec.s + 1.0))
        values["g_time_exponent"] = r_time
        values["g_mixed_norm"] = mixed_norm(g, r_time, ptc)
    else:
        values["g_time_exponent"] = math.nan
        values["g_mixed_norm"] = math.nan
    preds["g_mixed_norm_finite"] = _finite(values["g_mixed_norm"])
    return preds, values


def validate_theorem31(spec: ProblemSpec, eta: float = DEFAULT_ETA, samples: int = 10_000,
                       seed: int = 0) -> ValidationReport:
    """Hypotheses of the existence result with the ``beta(x,t)`` integrability of ``a0``."""
    u1 = validate_U1(spec, samples, seed)
    preds, values = _common_checks(spec)
    preds = {"U1": u1.passed, "p0_ge_2": spec.p0 >= 2, **preds}
    m = spec.mesh
    alpha = spec.alpha_space_time()
    beta = beta_exponent(alpha, spec.p0, eta)
    a0 = SpaceTimeFunction(m, spec.a0.space_time(m).values)
    values["beta_minus"] = beta.lower_bound
    values["beta_infinite_fraction"] = float(beta.infinity_mask.mean())
    values["a0_norm_beta"] = luxemburg_norm(a0, beta)
    preds["a0_in_L_beta"] = _finite(values["a0_norm_beta"])
    a2 = spec.a2.space_time(m).values
    a3 = SpaceTimeFunction(m, spec.a3.space_time(m).values)
    values["a2_sup"] = float(np.abs(a2).max())
    values["a3_L1"] = float(np.sum(a3.weights * np.abs(a3.values)))
    preds["a2_in_Linf"] = _finite(values["a2_sup"])
    preds["a3_in_L1"] = _finite(values["a3_L1"])
    values["U1"] = u1.to_dict()
    return ValidationReport("thm31", {k: bool(v) for k, v in preds.items()}, values)


def validate_theorem32(spec: ProblemSpec, samples: int = 10_000, seed: int = 0) -> ValidationReport:
    """Alternate profile: ``alpha+ < p0`` with ``a0`` in ``L^{beta1}``; only the growth bound on ``a``."""
    u1 = validate_U1(spec, samples, seed)
    preds, values = _common_checks(spec)
    alpha = spec.alpha_space_time()
    preds = {"growth_bound": u1.predicates["growth_bound"],
             "alpha_bounds": u1.predicates["alpha_bounds"],
             "alpha_plus_lt_p0": alpha.upper_bound < spec.p0, **preds}
    m = spec.mesh
    if preds["alpha_plus_lt_p0"] and preds["alpha_bounds"]:
        beta1 = beta1_exponent(alpha, spec.p0)
        a0 = SpaceTimeFunction(m, spec.a0.space_time(m).values)
        values["beta1_minus"] = beta1.lower_bound
        values["beta1_plus"] = beta1.upper_bound
        values["a0_norm_beta1"] = luxemburg_norm(a0, beta1)
    else:
        values["a0_norm_beta1"] = math.nan
    preds["a0_in_L_beta1"] = _finite(values["a0_norm_beta1"])
    values["U1"] = u1.to_dict()
    return ValidationReport("thm32", {k: bool(v) for k, v in preds.items()}, values)


def g_l2_sup(spec: ProblemSpec) -> float:
    """``sup_t ||g(., t)||_{L^2(Omega)}`` over the mesh time levels."""
    g = spec.g.space_time(spec.mesh)
    return max(lebesgue_norm(g.slice(k), 2.0) for k in range(spec.mesh.nt + 1))


def validate_theorem41(spec: ProblemSpec, samples: int = 10_000, seed: int = 0) -> ValidationReport:
    """Hypotheses of the homogeneous (trivial-solution) result; reports ``K = sup_t ||g||_{L^2}``."""
    m = spec.mesh
    h = spec.h.space_time(m).values
    a3 = spec.a3.space_time(m).values
    thm31 = validate_theorem31(spec, samples=samples, seed=seed)
    K = g_l2_sup(spec)
    preds = {
        "h_zero": bool(spec.h.is_zero or not np.any(h)),
        "p_eq_2": spec.p == 2,
        "p0_gt_2": spec.p0 > 2,
        "a3_zero": not np.any(a3),
        "coercivity_bound": thm31.values["U1"]["predicates"]["coercivity_bound"],
        "g_L2_bounded": _finite(K),
        "thm31": thm31.passed,
    }
    return ValidationReport("thm41", {k: bool(v) for k, v in preds.items()},
                            {"K": K, "thm31": thm31.to_dict()})


PROFILES = {"thm31": validate_theorem31, "thm32": validate_theorem32, "thm41": validate_theorem41}
