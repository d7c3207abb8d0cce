"""Manufactured solutions: exact fields ``u*`` and the sources that produce them.

The diffusion part of the source is differentiated symbolically.  Every
``u*`` offered here is nonnegative on the box, so ``|u*| = u*``.  The
absorption and nonlocal parts are evaluated numerically at the nodes, the
latter with the same discrete ``L^p`` norm the solver uses.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import sympy as sym

from .exponent_spaces import lebesgue_norm
from .fields import CoefficientField, _node_coords
from .mesh import GridFunction, Mesh
from .model import ProblemSpec

CASES = ("t_sin", "t2_sin", "t_poly")


def _expr(case: str, xs, t, extents):
    if case in ("t_sin", "t2_sin"):
        space = sym.Mul(*[sym.sin(sym.pi * x / L) for x, L in zip(xs, extents)])
        return (t if case == "t_sin" else t**2) * space
    if case == "t_poly":
        return t * sym.Mul(*[x * (L - x) for x, L in zip(xs, extents)])
    raise ValueError(f"unknown manufactured case {case!r}; expected one of {CASES}")


@dataclass(frozen=True)
class Manufactured:
    case: str
    extents: tuple[float, ...]
    p0: float

    @cached_property
    def _symbols(self):
        xs = sym.symbols(f"x0:{len(self.extents)}", real=True)
        t = sym.Symbol("t", nonnegative=True)
        u = _expr(self.case, xs, t, [sym.nsimplify(L) for L in self.extents])
        return xs, t, u

    @cached_property
    def _lambdas(self):
        xs, t, u = self._symbols
        p0 = sym.nsimplify(self.p0)
        flux_div = sum(sym.diff(u ** (p0 - 2) * sym.diff(u, x), x) for x in xs)
        args = (*xs, t)
        return (sym.lambdify(args, u, "numpy"),
                sym.lambdify(args, sym.diff(u, t), "numpy"),
                sym.lambdify(args, -flux_div, "numpy"))

    def exact(self, *coords_and_t):
        *xs, t = coords_and_t
        out = self._lambdas[0](*xs, t)
        return np.broadcast_to(out, np.broadcast_shapes(*(np.shape(x) for x in xs), np.shape(t))).astype(float)

    def local_source(self, *coords_and_t) -> np.ndarray:
        """``u*_t - sum_i D_i(|u*|^{p0-2} D_i u*)``; non-finite values (only at zeros of u*) set to 0."""
        *xs, t = coords_and_t
        _, ut, diff = self._lambdas
        with np.errstate(all="ignore"):
            val = np.asarray(ut(*xs, t) + diff(*xs, t), dtype=float)
        return np.where(np.isfinite(val), val, 0.0)


class ManufacturedSource(CoefficientField):
    """Right-hand side ``h`` that makes ``u*`` an exact solution of ``spec``'s equation."""

    def __init__(self, sol: Manufactured, spec: ProblemSpec):
        self.sol = sol
        self.spec = spec

    def _norm_factor(self, mesh: Mesh, t: float) -> float:
        u = GridFunction(mesh, self.sol.exact(*mesh.grid, t))
        return lebesgue_norm(u, self.spec.p) ** self.spec.s

    def evaluate(self, mesh, nodes, t):
        spec = self.spec
        nodes, t = np.broadcast_arrays(np.asarray(nodes), np.asarray(t, dtype=float))
        xs = _node_coords(mesh, nodes)
        ustar = self.sol.exact(*xs, t)
        out = self.sol.local_source(*xs, t)
        alpha = spec.alpha.evaluate(mesh, nodes, t)
        a0, a1, a2 = (getattr(spec, k).evaluate(mesh, nodes, t) for k in ("a0", "a1", "a2"))
        out = out + spec.nonlinearity.value(ustar, alpha, a0, a1, a2, nodes)
        if not spec.g.is_zero:
            g = spec.g.evaluate(mesh, nodes, t)
            factors = {tv: self._norm_factor(mesh, tv) for tv in np.unique(t)}
            out = out + g * np.vectorize(factors.get, otypes=[float])(t)
        return out


def with_manufactured(spec: ProblemSpec, case: str) -> tuple[ProblemSpec, Manufactured]:
    """Copy of ``spec`` whose source ``h`` reproduces the manufactured ``case``."""
    sol = Manufactured(case, tuple(float(L) for L in spec.mesh.extents), float(spec.p0))
    _ = sol._lambdas
    new = dataclasses.replace(spec, h=ManufacturedSource(sol, spec), initial=None)
    return new, sol
