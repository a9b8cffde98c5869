import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qtomo.states import make_rng

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return make_rng(1234)


def random_hermitian(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return 0.5 * (a + a.conj().T)


def bloch_state(a, b):
    return np.array([[a, b], [np.conj(b), 1 - a]], dtype=complex)


# acceptance criteria report one line each at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def x_outcome_table():
    """Outcomes of the 16 product projectors on an X state as ``const + A @ p``.

    ``p = (a, b, c, d, Re w, Im w, Re z, Im z)``; rows follow labels 1..16.
    """
    h = 0.5
    rows = [
        (0, [1, 0, 0, 0, 0, 0, 0, 0]),
        (0, [0, 1, 0, 0, 0, 0, 0, 0]),
        (0, [h, h, 0, 0, 0, 0, 0, 0]),
        (0, [h, h, 0, 0, 0, 0, 0, 0]),
        (0, [0, 0, 1, 0, 0, 0, 0, 0]),
        (0, [0, 0, 0, 1, 0, 0, 0, 0]),
        (0, [0, 0, h, h, 0, 0, 0, 0]),
        (0, [0, 0, h, h, 0, 0, 0, 0]),
        (0, [h, 0, h, 0, 0, 0, 0, 0]),
        (0, [0, h, 0, h, 0, 0, 0, 0]),
        (0.25, [0, 0, 0, 0, h, 0, h, 0]),
        (0.25, [0, 0, 0, 0, 0, h, 0, -h]),
        (0, [h, 0, h, 0, 0, 0, 0, 0]),
        (0, [0, h, 0, h, 0, 0, 0, 0]),
        (0.25, [0, 0, 0, 0, 0, h, 0, h]),
        (0.25, [0, 0, 0, 0, -h, 0, h, 0]),
    ]
    return np.array([r[0] for r in rows]), np.array([r[1] for r in rows], dtype=float)


def x_labels_determine_state(labels):
    """True when the outcomes of ``labels`` (plus unit trace) fix all X-state parameters."""
    _, a = x_outcome_table()
    rows = np.vstack([a[np.asarray(labels) - 1], [1, 1, 1, 1, 0, 0, 0, 0]])
    return np.linalg.matrix_rank(rows) == 8
