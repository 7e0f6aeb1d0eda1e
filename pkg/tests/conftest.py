import numpy as np
import pytest

from crebounds.elasticity import PLANE_STRAIN, PLANE_STRESS, ElasticModel
from crebounds.meshgen import rectangle_mesh

_CRITERIA: list[str] = []


def record_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}"
    print(line)
    _CRITERIA.append(line)


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def plane_stress():
    return ElasticModel(1.0, 0.3, PLANE_STRESS)


@pytest.fixture
def plane_strain():
    return ElasticModel(1.0, 0.3, PLANE_STRAIN)


@pytest.fixture
def unit_square():
    return rectangle_mesh(0.0, 1.0, 0.0, 1.0, 4, 4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
