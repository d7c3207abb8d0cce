import numpy as np
import pytest

from degenpar.mesh import GridFunction, Mesh

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def record():
    """Register one acceptance line: ``record(label, ok, detail)``."""
    def _rec(label: str, ok: bool, detail: str = ""):
        _ACCEPTANCE.append((label, bool(ok), detail))
        return ok
    return _rec


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}")


@pytest.fixture
def unit_mesh():
    return Mesh((1.0,), (101,))


def random_admissible(mesh: Mesh, rng, scale=1.0) -> GridFunction:
    v = scale * rng.standard_normal(mesh.shape)
    v[mesh.boundary_mask] = 0.0
    return GridFunction(mesh, v)
