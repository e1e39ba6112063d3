import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from lpfield.analysis import analyze
from lpfield.config import AnalysisConfig
from lpfield.metrics import energy_csv, energy_report, nn_histogram, rmse
from lpfield.synth import synth_shape


def test_rmse_identity(rng):
    pts = rng.normal(size=(100, 3))
    assert rmse(pts, pts) == 0.0


def test_rmse_brute_force(rng):
    a, b = rng.normal(size=(100, 3)), rng.normal(size=(80, 3))
    d = np.linalg.norm(a[:, None] - b[None], axis=2).min(axis=1)
    assert rmse(a, b) == pytest.approx(np.sqrt(np.mean(d ** 2)), rel=1e-12)


def test_rmse_translation_dense_reference():
    g = np.linspace(0, 1, 101)
    x, y = np.meshgrid(g, g)
    ref = np.column_stack([x.ravel(), y.ravel(), np.zeros(x.size)])
    assert rmse(ref + [0, 0, 0.003], ref) == pytest.approx(0.003)


def test_rmse_direction_and_symmetric():
    test = np.zeros((1, 3))
    ref = np.array([[0.0, 0, 0], [10.0, 0, 0]])
    assert rmse(test, ref) == 0.0
    assert rmse(ref, test) == pytest.approx(np.sqrt(50.0))
    assert rmse(test, ref, symmetric=True) == pytest.approx(np.sqrt(50.0))


def test_rmse_empty():
    with pytest.raises(ValueError):
        rmse(np.zeros((0, 3)), np.zeros((1, 3)))


def test_histogram_unit_grid():
    g = np.arange(5.0)
    x, y = np.meshgrid(g, g)
    pts = np.column_stack([x.ravel(), y.ravel(), np.zeros(25)])
    rep = nn_histogram(pts, 64)
    assert rep.mean == pytest.approx(1.0) and rep.median == pytest.approx(1.0)
    assert rep.counts.sum() == 25 and np.count_nonzero(rep.counts) == 1


def test_histogram_two_points():
    rep = nn_histogram(np.array([[0.0, 0, 0], [0, 0, 2.5]]), 8)
    assert rep.mean == pytest.approx(2.5) and rep.counts.sum() == 2


def test_histogram_csv(rng):
    rep = nn_histogram(rng.normal(size=(50, 3)), 10)
    lines = rep.to_csv().strip().splitlines()
    assert lines[0] == "bin_lo,bin_hi,count" and len(lines) == 11


def test_histogram_errors():
    with pytest.raises(ValueError):
        nn_histogram(np.zeros((1, 3)))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_histogram_rigid_invariance(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(60, 3))
    moved = Rotation.random(random_state=seed).apply(pts) + rng.normal(size=3) * 10
    a, b = nn_histogram(pts, 16), nn_histogram(moved, 16)
    assert a.mean == pytest.approx(b.mean, rel=1e-9)
    assert a.counts.sum() == len(pts)
    assert a.edges[0] <= a.mean <= a.edges[-1]


def test_energy_report():
    noisy, _ = synth_shape("sinusoid", 2500, 0.0, 3, extent=3.0)
    st = analyze(noisy, AnalysisConfig(r=1.0, grid_n=8, d=3, outer_iters=2, dict_iters=2, pose_iters=4))
    rows = energy_report(st)
    assert [r["iteration"] for r in rows] == [1, 2]
    for r in rows:
        assert r["total"] == pytest.approx(r["l2"] + st.lam * r["l1"])
    per = energy_report(st, per_atom=True)
    assert per[0]["total"] == pytest.approx(rows[0]["total"] / 3)
    csv = energy_csv(rows).splitlines()
    assert csv[0] == "iteration,l2,l1,total" and len(csv) == 3
    st1 = analyze(noisy, AnalysisConfig(r=1.0, grid_n=8, d=3, outer_iters=1, dict_iters=2, pose_iters=4))
    assert len(energy_report(st1)) == 1
