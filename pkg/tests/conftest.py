import numpy as np
import pytest

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    """Show one pass/fail line per acceptance criterion after the run."""
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def rel_err(analytic: np.ndarray, reference: np.ndarray) -> float:
    """Relative error between two gradient arrays, guarded for tiny norms."""
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    reference = np.asarray(reference, dtype=np.float64).ravel()
    denom = max(float(np.linalg.norm(reference)), 1e-12)
    return float(np.linalg.norm(analytic - reference)) / denom


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class ForcedRng:
    """Stand-in generator whose .random() returns queued arrays.

    Lets a test force the exact code a sampler draws: a row of zeros forces
    every bit on (u < p for any p > 0), a row of ones forces every bit off.
    """

    def __init__(self, rows):
        self.rows = [np.asarray(r, dtype=np.float64) for r in rows]
        self.pos = 0

    def random(self, shape=None):
        out = self.rows[self.pos]
        self.pos += 1
        if shape is not None and out.shape != tuple(np.atleast_1d(shape)):
            out = out.reshape(shape)
        return out
