import numpy as np
import pytest

from lpfield.geom import PointCloud


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def plane_cloud(n, rng, extent=3.0, normal=None, noise=0.0):
    xy = rng.uniform(0.0, extent, size=(n, 2))
    pts = np.column_stack([xy, np.zeros(n)])
    if normal is not None:
        from scipy.spatial.transform import Rotation
        rot, _ = Rotation.align_vectors([normal], [[0.0, 0.0, 1.0]])
        pts = rot.apply(pts)
    if noise:
        pts = pts + rng.normal(scale=noise, size=pts.shape)
    return PointCloud(pts)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    def _report(criterion, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
