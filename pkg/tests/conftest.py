"""Shared instances for the test suite."""

from pathlib import Path

import numpy as np
import pytest

from ndgd.config import parse_config
from ndgd.models import RegularityConstants, DomainBox, SpectralSummary
from ndgd.objectives import (
    make_quadratic,
    make_quartic,
    random_quartic_coefficients,
    strict_saddle_logistic_data,
)
from ndgd.topology import complete_graph, lazy_metropolis_mixing, ring_graph


CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(scope="session")
def quartic():
    """Ten quartic components with coefficient seed 11."""
    return make_quartic(random_quartic_coefficients(10, 11))


@pytest.fixture(scope="session")
def complete_w():
    return lazy_metropolis_mixing(complete_graph(10))


@pytest.fixture(scope="session")
def ring_w():
    return lazy_metropolis_mixing(ring_graph(5))


@pytest.fixture(scope="session")
def logistic():
    return strict_saddle_logistic_data(5, eta=0.1, seed=3)


@pytest.fixture
def quadratic():
    m = 10
    matrices = np.tile(np.diag([1.0, -0.5]), (m, 1, 1)) + np.linspace(0.0, 0.2, m)[:, None, None] * np.eye(2)
    return make_quadratic(matrices, np.zeros((m, 2)))


@pytest.fixture
def reference_constants():
    """L_g = 6, L_H = 50, D = 1 with no finite lower bound on f."""
    return RegularityConstants(
        grad_lipschitz=6.0,
        hess_lipschitz=50.0,
        disagreement=1.0,
        f_star_sum=float("-inf"),
        domain_box=DomainBox.cube(-1.0, 1.0, 2),
    )


@pytest.fixture
def half_spectrum():
    return SpectralSummary(lambda_min=0.5, lambda_2=0.5)


def small_config_data(tmp_path: Path, **run) -> dict:
    """A quartic experiment small enough for unit tests."""
    return {
        "experiment": {"kind": "quartic", "m": 6, "graph": "regular", "degree": 2, "graph_seed": 7, "seed": 5},
        "objective": {"coeff_seed": 1, "constant_samples": 200},
        "run": {"max_iters": 60, "repeats": 2, **run},
        "output": {"directory": str(tmp_path / "out")},
    }


@pytest.fixture
def small_config(tmp_path):
    return parse_config(small_config_data(tmp_path))


def write_toml(path: Path, data: dict) -> Path:
    """Serialize the flat two-level tables used by experiment configs."""
    def fmt(value):
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, str):
            return f'"{value}"'
        if isinstance(value, (list, tuple)):
            return "[" + ", ".join(fmt(v) for v in value) + "]"
        return repr(value)

    lines = []
    for section, table in data.items():
        lines.append(f"[{section}]")
        lines.extend(f"{key} = {fmt(value)}" for key, value in table.items())
        lines.append("")
    path.write_text("\n".join(lines))
    return path
