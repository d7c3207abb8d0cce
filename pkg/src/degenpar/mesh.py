"""Uniform tensor meshes on boxes and nodal fields living on them.

Every node owns its dual cell (half cells at the boundary), so integrals of
nodal data are midpoint sums over piecewise-constant extensions.  Edges
between neighbouring nodes carry the forward-difference gradients.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import MeshMismatchError


@dataclass(frozen=True)
class Mesh:
    """Uniform node grid on ``[0, L_1] x ... x [0, L_d]`` with horizon ``T``.

    ``nodes`` counts nodes per axis including both boundary nodes, so the
    smallest useful mesh (one interior node) has ``nodes=(3,)``.
    """

    extents: tuple[float, ...]
    nodes: tuple[int, ...]
    T: float = 1.0
    nt: int = 1

    def __post_init__(self):
        object.__setattr__(self, "extents", tuple(float(e) for e in self.extents))
        object.__setattr__(self, "nodes", tuple(int(n) for n in self.nodes))
        if len(self.extents) != len(self.nodes) or not 1 <= len(self.nodes) <= 3:
            raise ValueError("extents and nodes must have equal length 1..3")
        if any(e <= 0 for e in self.extents):
            raise ValueError("extents must be positive")
        if any(n < 3 for n in self.nodes):
            raise ValueError("need at least 3 nodes per axis (one interior node)")
        if self.T <= 0 or self.nt < 1:
            raise ValueError("need T > 0 and nt >= 1")

    @property
    def ndim(self) -> int:
        return len(self.nodes)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.nodes

    @property
    def size(self) -> int:
        return int(np.prod(self.nodes))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / (n - 1) for L, n in zip(self.extents, self.nodes))

    @property
    def measure(self) -> float:
        return float(np.prod(self.extents))

    @property
    def dt(self) -> float:
        return self.T / self.nt

    def with_time(self, T: float | None = None, nt: int | None = None) -> "Mesh":
        return Mesh(self.extents, self.nodes, self.T if T is None else T,
                    self.nt if nt is None else nt)

    def refined(self, factor: int = 2) -> "Mesh":
        """Mesh with each spatial interval split ``factor`` times."""
        return Mesh(self.extents, tuple((n - 1) * factor + 1 for n in self.nodes),
                    self.T, self.nt)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.linspace(0.0, L, n) for L, n in zip(self.extents, self.nodes))

    @cached_property
    def grid(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.coords, indexing="ij"))

    def _dual_lengths(self, axis: int) -> np.ndarray:
        h = self.spacing[axis]
        d = np.full(self.nodes[axis], h)
        d[0] = d[-1] = 0.5 * h
        return d

    @cached_property
    def volumes(self) -> np.ndarray:
        vol = np.ones(())
        for ax in range(self.ndim):
            vol = np.multiply.outer(vol, self._dual_lengths(ax))
        return vol

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for ax in range(self.ndim):
            idx = [slice(None)] * self.ndim
            idx[ax] = 0
            mask[tuple(idx)] = True
            idx[ax] = -1
            mask[tuple(idx)] = True
        return mask

    @cached_property
    def interior(self) -> np.ndarray:
        """Flat indices of interior nodes, in C order."""
        return np.flatnonzero(~self.boundary_mask.ravel())

    @cached_property
    def time_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.nt + 1)

    @cached_property
    def time_weights(self) -> np.ndarray:
        w = np.full(self.nt + 1, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w

    @cached_property
    def edges(self) -> tuple[tuple[np.ndarray, np.ndarray, float, np.ndarray], ...]:
        """Per axis: flat indices of edge tails/heads, spacing, edge weights.

        The weight of an edge is its length times the dual length of its
        tail node in every other axis; per axis the weights sum to |Omega|.
        """
        flat = np.arange(self.size).reshape(self.shape)
        out = []
        for ax in range(self.ndim):
            lo = [slice(None)] * self.ndim
            hi = [slice(None)] * self.ndim
            lo[ax] = slice(0, -1)
            hi[ax] = slice(1, None)
            tails = flat[tuple(lo)].ravel()
            heads = flat[tuple(hi)].ravel()
            h = self.spacing[ax]
            w = np.full(self.shape, h)
            for other in range(self.ndim):
                if other != ax:
                    shp = [1] * self.ndim
                    shp[other] = -1
                    w = w * self._dual_lengths(other).reshape(shp)
            out.append((tails, heads, h, w[tuple(lo)].ravel()))
        return tuple(out)

    def dirichlet_eigenvalue(self) -> float:
        """Smallest eigenvalue of the discrete Dirichlet Laplacian."""
        return float(sum(2.0 * (1.0 - np.cos(np.pi * h / L)) / h**2
                         for h, L in zip(self.spacing, self.extents)))


def _check_same_mesh(a: Mesh, b: Mesh):
    if a != b:
        raise MeshMismatchError(f"mesh mismatch: {a} vs {b}")


class GridFunction:
    """Nodal values of a scalar field on a spatial mesh."""

    def __init__(self, mesh: Mesh, values):
        values = np.asarray(values, dtype=float)
        if values.size != mesh.size:
            raise MeshMismatchError(
                f"value array has {values.size} entries, mesh has {mesh.size} nodes")
        self.mesh = mesh
        self.values = values.reshape(mesh.shape)

    @classmethod
    def zeros(cls, mesh: Mesh) -> "GridFunction":
        return cls(mesh, np.zeros(mesh.shape))

    @classmethod
    def from_function(cls, mesh: Mesh, f) -> "GridFunction":
        return cls(mesh, np.array(np.broadcast_to(f(*mesh.grid), mesh.shape)))

    @property
    def weights(self) -> np.ndarray:
        return self.mesh.volumes

    @property
    def is_admissible(self) -> bool:
        return bool(np.all(self.values[self.mesh.boundary_mask] == 0.0))

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.mesh, values)

    def __repr__(self):
        return f"GridFunction(mesh={self.mesh!r}, max|u|={np.max(np.abs(self.values)):.3g})"


class SpaceTimeFunction:
    """Values on every time level of ``mesh.time_grid``; shape ``(nt+1, *mesh.shape)``."""

    def __init__(self, mesh: Mesh, values):
        values = np.asarray(values, dtype=float)
        expected = (mesh.nt + 1,) + mesh.shape
        if values.size != int(np.prod(expected)):
            raise MeshMismatchError(f"expected {expected} values, got shape {values.shape}")
        self.mesh = mesh
        self.values = values.reshape(expected)

    @classmethod
    def from_function(cls, mesh: Mesh, f) -> "SpaceTimeFunction":
        t = mesh.time_grid.reshape((-1,) + (1,) * mesh.ndim)
        xs = tuple(g[None] for g in mesh.grid)
        return cls(mesh, np.array(np.broadcast_to(f(*xs, t), (mesh.nt + 1,) + mesh.shape)))

    @property
    def times(self) -> np.ndarray:
        return self.mesh.time_grid

    @property
    def weights(self) -> np.ndarray:
        tw = self.mesh.time_weights.reshape((-1,) + (1,) * self.mesh.ndim)
        return tw * self.mesh.volumes[None]

    def slice(self, n: int) -> GridFunction:
        return GridFunction(self.mesh, self.values[n])
