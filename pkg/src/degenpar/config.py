"""Run configuration: YAML document -> validated models -> problem objects."""

from __future__ import annotations

import copy
import itertools
from pathlib import Path
from typing import Annotated, Literal, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .fields import AffineField, ConstantField, PiecewiseField, Profile, SeparableField
from .io import read_field_csv
from .manufactured import CASES, with_manufactured
from .mesh import Mesh
from .model import NONLINEARITY_KINDS, Nonlinearity, ProblemSpec
from .solver import SCHEMES, SolverConfig


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ConstantSpec(_Strict):
    kind: Literal["constant"]
    value: float


class AffineSpec(_Strict):
    kind: Literal["affine"]
    c0: float = 0.0
    cx: list[float] = []
    ct: float = 0.0


class ProfileSpec(_Strict):
    type: Literal["one", "sin", "poly", "exp"] = "one"
    k: float = 1.0
    coeffs: list[float] = [1.0]
    rate: float = 0.0


class SeparableSpec(_Strict):
    kind: Literal["separable"]
    scale: float = 1.0
    space: list[ProfileSpec] = []
    time: ProfileSpec = ProfileSpec()


class PiecewiseSpec(_Strict):
    kind: Literal["piecewise"]
    breaks: list[float]
    values: list[float]
    axis: int = 0


class CsvSpec(_Strict):
    kind: Literal["csv"]
    path: str


FieldSpec = Union[
    float,
    Literal["zero"],
    Annotated[Union[ConstantSpec, AffineSpec, SeparableSpec, PiecewiseSpec, CsvSpec],
              Field(discriminator="kind")],
]


class MeshSpec(_Strict):
    extents: list[float] = [1.0]
    nodes: list[int] = [33]
    T: float = 1.0
    nt: int = 100


class NonlinearitySpec(_Strict):
    kind: Literal[NONLINEARITY_KINDS] = "power_sign"
    tau: list[float] | None = None
    table: list[float] | list[list[float]] | None = None


class ProblemConfig(_Strict):
    mesh: MeshSpec = MeshSpec()
    p0: float = 3.0
    p: float = 2.0
    s: float = 1.0
    n: int = 3
    A0: float = 1.0
    alpha: FieldSpec = 2.0
    nonlinearity: NonlinearitySpec = NonlinearitySpec()
    a0: FieldSpec = 1.0
    a1: FieldSpec = 0.0
    a2: FieldSpec = 1.0
    a3: FieldSpec = 0.0
    g: FieldSpec = 0.0
    h: FieldSpec = "zero"
    initial: FieldSpec | None = None
    manufactured: Literal[CASES] | None = None


class SolverSpec(_Strict):
    dt: float | None = None
    scheme: Literal[SCHEMES] = "imex_lagged"
    delta: float = 0.0
    newton_tol: float = 1e-10
    max_newton: int = 30
    linear_tol: float = 1e-10
    check: Literal["strict", "warn", "off"] = "warn"


class DiagnosticsSpec(_Strict):
    coercivity_33: bool = True
    coercivity_35: bool = True
    decay: bool = True
    sobolev: bool = True
    threshold_r: float = 1e-6
    coercivity_rtol: float = 1e-8
    decay_tol: float = 1e-6
    c_embed: float | None = None
    eps: float | None = None


class ValidationSpec(_Strict):
    profiles: list[Literal["thm31", "thm32", "thm41"]] = ["thm31"]
    samples: int = 10_000


class NormsSpec(_Strict):
    field: FieldSpec = 0.0
    exponent: FieldSpec = 2.0
    lebesgue: list[float] = [1.0, 2.0]
    pn_alpha: float | None = None
    pn_beta: float | None = None


class RunConfig(_Strict):
    problem: ProblemConfig = ProblemConfig()
    solver: SolverSpec = SolverSpec()
    diagnostics: DiagnosticsSpec = DiagnosticsSpec()
    validation: ValidationSpec = ValidationSpec()
    norms: NormsSpec = NormsSpec()
    seed: int = 0
    output: str = "out"
    sweep: dict[str, list] = {}

    @field_validator("sweep")
    @classmethod
    def _dotted(cls, v):
        for key in v:
            if not key or any(not part for part in key.split(".")):
                raise ValueError(f"bad sweep axis {key!r}")
        return v


def load_config(path) -> tuple[RunConfig, Path]:
    """Parse and validate; raises ``yaml.YAMLError`` or ``pydantic.ValidationError``."""
    path = Path(path)
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ValueError("config document must be a mapping")
    return RunConfig.model_validate(raw), path.parent


def build_field(spec, mesh: Mesh, base: Path = Path(".")):
    if spec is None:
        return None
    if isinstance(spec, str):
        return ConstantField(0.0)
    if isinstance(spec, (int, float)):
        return ConstantField(float(spec))
    if isinstance(spec, ConstantSpec):
        return ConstantField(spec.value)
    if isinstance(spec, AffineSpec):
        return AffineField(spec.c0, tuple(spec.cx), spec.ct)
    if isinstance(spec, SeparableSpec):
        prof = lambda p: Profile(p.type, p.k, tuple(p.coeffs), p.rate)  # noqa: E731
        return SeparableField(spec.scale, tuple(prof(p) for p in spec.space), prof(spec.time))
    if isinstance(spec, PiecewiseSpec):
        return PiecewiseField(tuple(spec.breaks), tuple(spec.values), spec.axis)
    if isinstance(spec, CsvSpec):
        p = Path(spec.path)
        return read_field_csv(p if p.is_absolute() else base / p, mesh)
    raise TypeError(f"unsupported field spec {spec!r}")


def build_mesh(cfg: ProblemConfig) -> Mesh:
    m = cfg.mesh
    return Mesh(tuple(m.extents), tuple(m.nodes), T=m.T, nt=m.nt)


def build_problem(cfg: ProblemConfig, base: Path = Path(".")):
    """Returns ``(ProblemSpec, Manufactured or None)``."""
    mesh = build_mesh(cfg)
    nl = cfg.nonlinearity
    kw = {k: build_field(getattr(cfg, k), mesh, base) for k in ("alpha", "a0", "a1", "a2", "a3", "g", "h")}
    spec = ProblemSpec(mesh, p0=cfg.p0, p=cfg.p, s=cfg.s, n=cfg.n, A0=cfg.A0,
                       nonlinearity=Nonlinearity(nl.kind, nl.tau, nl.table),
                       initial=build_field(cfg.initial, mesh, base), **kw)
    if cfg.manufactured is None:
        return spec, None
    return with_manufactured(spec, cfg.manufactured)


def build_solver(cfg: SolverSpec) -> SolverConfig:
    return SolverConfig(**cfg.model_dump())


def _set_dotted(d: dict, key: str, value) -> None:
    parts = key.split(".")
    for p in parts[:-1]:
        d = d.setdefault(p, {})
        if not isinstance(d, dict):
            raise ValueError(f"sweep axis {key!r} does not name a nested field")
    d[parts[-1]] = value


def expand_sweep(cfg: RunConfig) -> list[tuple[dict, RunConfig]]:
    """Cartesian product of the sweep axes, each combination re-validated."""
    if not cfg.sweep:
        return [({}, cfg)]
    keys = sorted(cfg.sweep)
    base = cfg.model_dump(exclude={"sweep"})
    out = []
    for combo in itertools.product(*(cfg.sweep[k] for k in keys)):
        raw = copy.deepcopy(base)
        for k, v in zip(keys, combo):
            _set_dotted(raw, k, v)
        out.append((dict(zip(keys, combo)), RunConfig.model_validate(raw)))
    return out
