from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from scipy.stats import ortho_group, special_ortho_group, unitary_group

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

FIXTURES = Path(__file__).parent / "fixtures"

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def rng_from(seed):
    return np.random.default_rng(seed)


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def random_sphere_points(rng, n, d=2):
    return np.array([unit(rng.standard_normal(d + 1)) for _ in range(n)])


def random_frame(rng, m, k):
    q, _ = np.linalg.qr(rng.standard_normal((m, k)))
    return q


def random_rotation(rng, dim=3):
    return special_ortho_group.rvs(dim, random_state=rng)


def random_orthogonal(rng, dim):
    return ortho_group.rvs(dim, random_state=rng) if dim > 1 else np.array([[rng.choice([-1.0, 1.0])]])


def random_su_fixing_ones(rng, k):
    """Special unitary k x k matrix with A @ ones = ones.

    Acts as a random SU(k-1) element on the centered subspace, so it maps
    preshapes to preshapes.
    """
    h = np.zeros((k - 1, k))
    for j in range(1, k):
        h[j - 1, :j] = -1.0 / np.sqrt(j * (j + 1))
        h[j - 1, j] = j / np.sqrt(j * (j + 1))
    b = unitary_group.rvs(k - 1, random_state=rng) if k > 2 else np.exp(1j * rng.uniform(0, 2 * np.pi)) * np.eye(1)
    b = b / np.linalg.det(b) ** (1.0 / (k - 1))
    return h.T @ b @ h + np.ones((k, k)) / k


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES: list = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion and return the verdict."""

    def record(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
