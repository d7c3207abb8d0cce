"""Coefficient fields on Q_T from closed-form identifiers or nodal tables.

Fields are evaluated at (flat node index, time) pairs so that the same code
path serves whole-mesh evaluation and scattered sampling in the validators.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import MeshMismatchError
from .mesh import Mesh, SpaceTimeFunction


class CoefficientField:
    """Base class; subclasses implement ``evaluate(mesh, nodes, t)``."""

    is_zero = False

    def evaluate(self, mesh: Mesh, nodes: np.ndarray, t) -> np.ndarray:
        raise NotImplementedError

    def at_nodes(self, mesh: Mesh, t: float) -> np.ndarray:
        nodes = np.arange(mesh.size)
        return np.broadcast_to(self.evaluate(mesh, nodes, float(t)), (mesh.size,)).reshape(mesh.shape)

    def space_time(self, mesh: Mesh) -> SpaceTimeFunction:
        return SpaceTimeFunction(mesh, np.stack([self.at_nodes(mesh, t) for t in mesh.time_grid]))


def _node_coords(mesh: Mesh, nodes: np.ndarray) -> list[np.ndarray]:
    idx = np.unravel_index(np.asarray(nodes), mesh.shape)
    return [mesh.coords[ax][i] for ax, i in enumerate(idx)]


@dataclass
class ConstantField(CoefficientField):
    value: float = 0.0

    @property
    def is_zero(self):
        return self.value == 0.0

    def evaluate(self, mesh, nodes, t):
        return np.full(np.broadcast_shapes(np.shape(nodes), np.shape(t)), float(self.value))


@dataclass
class AffineField(CoefficientField):
    """``c0 + sum_i cx[i] x_i + ct t``."""

    c0: float = 0.0
    cx: Sequence[float] = ()
    ct: float = 0.0

    def evaluate(self, mesh, nodes, t):
        if len(self.cx) not in (0, mesh.ndim):
            raise MeshMismatchError(f"affine field has {len(self.cx)} slopes for a {mesh.ndim}-D mesh")
        out = self.c0 + self.ct * np.asarray(t, dtype=float)
        for c, x in zip(self.cx, _node_coords(mesh, nodes)):
            out = out + c * x
        return np.broadcast_to(out, np.broadcast_shapes(np.shape(nodes), np.shape(t))).astype(float)


@dataclass
class Profile:
    """One-dimensional factor: ``one``, ``sin`` (sin(k pi s/L)), ``poly`` or ``exp``."""

    type: str = "one"
    k: float = 1.0
    coeffs: Sequence[float] = (1.0,)
    rate: float = 0.0

    def __call__(self, s: np.ndarray, length: float) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.type == "one":
            return np.ones_like(s)
        if self.type == "sin":
            return np.sin(self.k * np.pi * s / length)
        if self.type == "poly":
            return np.polynomial.polynomial.polyval(s, list(self.coeffs))
        if self.type == "exp":
            return np.exp(self.rate * s)
        raise ValueError(f"unknown profile type {self.type!r}")


@dataclass
class SeparableField(CoefficientField):
    """``scale * prod_i f_i(x_i) * f_t(t)``."""

    scale: float = 1.0
    space: Sequence[Profile] = ()
    time: Profile = field(default_factory=Profile)

    def evaluate(self, mesh, nodes, t):
        if len(self.space) not in (0, mesh.ndim):
            raise MeshMismatchError(f"separable field has {len(self.space)} profiles for a {mesh.ndim}-D mesh")
        out = self.scale * self.time(np.asarray(t, dtype=float), mesh.T)
        for prof, x, L in zip(self.space, _node_coords(mesh, nodes), mesh.extents):
            out = out * prof(x, L)
        return np.broadcast_to(out, np.broadcast_shapes(np.shape(nodes), np.shape(t))).astype(float)


@dataclass
class TableField(CoefficientField):
    """Nodal samples, optionally on several time levels (linear in time between them)."""

    values: np.ndarray
    times: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.times is not None:
            self.times = np.asarray(self.times, dtype=float)

    @property
    def is_zero(self):
        return not np.any(self.values)

    def evaluate(self, mesh, nodes, t):
        nodes = np.asarray(nodes)
        if self.times is None:
            flat = self.values.reshape(-1)
            if flat.size != mesh.size:
                raise MeshMismatchError(f"table has {flat.size} values, mesh has {mesh.size} nodes")
            return np.broadcast_to(flat[nodes], np.broadcast_shapes(nodes.shape, np.shape(t))).astype(float)
        table = self.values.reshape(len(self.times), -1)
        if table.shape[1] != mesh.size:
            raise MeshMismatchError(f"table has {table.shape[1]} nodes, mesh has {mesh.size}")
        nodes, t = np.broadcast_arrays(nodes, np.asarray(t, dtype=float))
        k = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2)
        if len(self.times) == 1:
            return table[0, nodes]
        t0, t1 = self.times[k], self.times[k + 1]
        lam = np.clip((t - t0) / (t1 - t0), 0.0, 1.0)
        return (1 - lam) * table[k, nodes] + lam * table[k + 1, nodes]


@dataclass
class FunctionField(CoefficientField):
    """Wraps ``f(*coords, t)`` for programmatic use (tests, manufactured sources)."""

    func: Callable
    zero: bool = False

    @property
    def is_zero(self):
        return self.zero

    def evaluate(self, mesh, nodes, t):
        coords = _node_coords(mesh, nodes)
        out = self.func(*coords, np.asarray(t, dtype=float))
        return np.broadcast_to(out, np.broadcast_shapes(np.shape(nodes), np.shape(t))).astype(float)


def as_field(obj) -> CoefficientField:
    """Coerce numbers and ``"zero"`` to fields; pass fields through."""
    if isinstance(obj, CoefficientField):
        return obj
    if obj is None or (isinstance(obj, str) and obj == "zero"):
        return ConstantField(0.0)
    if isinstance(obj, (int, float)):
        return ConstantField(float(obj))
    if callable(obj):
        return FunctionField(obj)
    raise TypeError(f"cannot interpret {obj!r} as a coefficient field")


@dataclass
class PiecewiseField(CoefficientField):
    """Piecewise constant along one axis: ``values[k]`` on ``[breaks[k-1], breaks[k])``."""

    breaks: Sequence[float]
    values: Sequence[float]
    axis: int = 0

    def __post_init__(self):
        if len(self.values) != len(self.breaks) + 1:
            raise ValueError("piecewise field needs len(values) == len(breaks) + 1")

    @property
    def is_zero(self):
        return not any(self.values)

    def evaluate(self, mesh, nodes, t):
        if self.axis >= mesh.ndim:
            raise MeshMismatchError(f"axis {self.axis} out of range for a {mesh.ndim}-D mesh")
        x = _node_coords(mesh, nodes)[self.axis]
        out = np.asarray(self.values, dtype=float)[np.searchsorted(self.breaks, x, side="right")]
        return np.broadcast_to(out, np.broadcast_shapes(np.shape(nodes), np.shape(t))).astype(float)
