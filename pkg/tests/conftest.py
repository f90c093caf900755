from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from cutfem_ib.interface import Circle, CurveSpec, Ellipse, sample_initial

CONFIG_DIR = Path(__file__).resolve().parents[1] / "src" / "cutfem_ib" / "configs"


@pytest.fixture(scope="session")
def config_dir() -> Path:
    return CONFIG_DIR


@pytest.fixture(scope="session")
def circle_poly():
    return sample_initial(CurveSpec(Circle(0.3, (0.5, 0.5)), 120))


@pytest.fixture(scope="session")
def ellipse_poly():
    return sample_initial(CurveSpec(Ellipse(), 160))


def rng(seed: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
