import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import plane_cloud
from lpfield.analysis import analyze
from lpfield.config import AnalysisConfig
from lpfield.resample import (Candidates, consolidate, consolidate_trace, consolidation_radius,
                              reconstruct_candidates, resample, resample_state)


def cands(pos, src=None, centers=None, radius=10.0):
    pos = np.asarray(pos, dtype=np.float64).reshape(-1, 3)
    src = np.zeros(len(pos), np.intp) if src is None else np.asarray(src, np.intp)
    centers = np.zeros((src.max() + 1 if len(src) else 1, 3)) if centers is None else np.asarray(centers, float)
    return Candidates(pos, src, np.arange(len(pos)), centers, radius)


def test_single_candidate_unchanged():
    out = consolidate(cands([[1.0, 2.0, 3.0]]), 0.1)
    assert np.array_equal(out.points, [[1.0, 2.0, 3.0]])


def test_coincident_candidates_merge():
    out = consolidate(cands([[1.0, 0, 0], [1.0, 0, 0]], src=[0, 1], centers=np.zeros((2, 3))), 0.1)
    assert len(out) == 1 and np.allclose(out.points[0], [1, 0, 0])


def test_half_tau_pair_gives_midpoint():
    tau = 0.2
    pts = [[0.0, 0, 0], [0.5 * tau, 0, 0]]
    out = consolidate(cands(pts, src=[0, 1], centers=np.zeros((2, 3))), tau)
    assert len(out) == 1 and np.allclose(out.points[0], [0.05, 0, 0])


def test_far_candidates_kept_apart():
    out = consolidate(cands([[0.0, 0, 0], [1.0, 0, 0]]), 0.1)
    assert len(out) == 2


def test_outside_target_sphere_does_not_conflict():
    # neither candidate lies in the other's LPF sphere
    centers = np.array([[-0.99, 0, 0], [1.04, 0, 0]])
    out = consolidate(cands([[0.0, 0, 0], [0.05, 0, 0]], src=[0, 1], centers=centers, radius=1.0), 0.1)
    assert len(out) == 2


def test_zone_members_satisfy_predicate(rng):
    pos = rng.uniform(0, 1, size=(300, 3))
    src = rng.integers(0, 5, size=300)
    src.sort()
    centers = rng.uniform(0, 1, size=(5, 3))
    c = cands(pos, src, centers, 0.6)
    res = consolidate_trace(c, 0.08)
    for zone, p in zip(res.zones, res.points):
        assert np.allclose(pos[zone].mean(axis=0), p)
    # the first member of each zone is the query q
    for zone in res.zones:
        q = pos[zone[0]] if len(zone) else None
        for k in zone[1:]:
            assert np.linalg.norm(pos[k] - q) <= 0.08 + 1e-12
            assert np.linalg.norm(q - centers[src[k]]) <= 0.6 + 1e-12


def test_consolidate_requires_positive_tau():
    with pytest.raises(ValueError):
        consolidate(cands([[0.0, 0, 0]]), 0.0)


def test_empty_candidates():
    c = Candidates(np.zeros((0, 3)), np.zeros(0, np.intp), np.zeros(0, np.intp), np.zeros((1, 3)), 1.0)
    assert len(consolidate(c, 0.1)) == 0


@pytest.fixture(scope="module")
def plane_state():
    cloud = plane_cloud(6000, np.random.default_rng(3))
    return analyze(cloud, AnalysisConfig(r=1.0, grid_n=16, d=4, outer_iters=1, dict_iters=3, pose_iters=10))


def test_candidate_count(plane_state):
    c = reconstruct_candidates(plane_state)
    assert len(c) == plane_state.n_lpf * plane_state.pattern.m == plane_state.valid.sum()


def test_zero_codes_give_planar_candidates(plane_state):
    st = plane_state
    saved = st.codes
    st.codes = np.zeros_like(saved)
    try:
        c = reconstruct_candidates(st)
        for j in range(0, st.n_lpf, 5):
            sel = c.source_lpf == j
            local = (c.positions[sel] - st.origins[j]) @ st.axes[j].T
            assert np.abs(local[:, 2]).max() < 1e-12
    finally:
        st.codes = saved


def test_exact_codes_reproduce_probes(plane_state):
    st = plane_state
    saved_d, saved_c = st.dictionary, st.codes
    # one atom per LPF reproduces every signal exactly
    sig = st.signals
    norms = np.linalg.norm(sig, axis=1)
    keep = norms > 0
    st.dictionary = (sig[keep] / norms[keep, None]).T
    st.codes = np.zeros((st.n_lpf, keep.sum()))
    st.codes[np.flatnonzero(keep), np.arange(keep.sum())] = norms[keep]
    try:
        c = reconstruct_candidates(st)
        world = st.origins[:, None] + np.einsum("nmj,njk->nmk", st.pattern.offsets[None] + st.v, st.axes)
        assert np.allclose(c.positions, world[st.valid], atol=1e-9)
    finally:
        st.dictionary, st.codes = saved_d, saved_c


def test_plane_resampling_stays_on_plane(plane_state):
    out = resample_state(plane_state)
    assert np.abs(out.points[:, 2]).max() < 0.05 * plane_state.pattern.tau_s


def test_plane_resampling_poisson_like(plane_state):
    out = resample_state(plane_state).points
    d = np.sort(np.linalg.norm(out[:, None] - out[None], axis=2), axis=1)[:, 1]
    ts = plane_state.pattern.tau_s
    assert np.mean((d >= 0.5 * ts) & (d <= 2 * ts)) >= 0.8


def test_output_pairs_respect_conflict_radius(plane_state):
    out = resample_state(plane_state).points
    rad = consolidation_radius(plane_state)
    d = np.sort(np.linalg.norm(out[:, None] - out[None], axis=2), axis=1)[:, 1]
    # on a single plane every output lies in every nearby LPF sphere
    assert d.min() > rad


def test_resample_end_to_end(rng):
    cloud = plane_cloud(2000, rng, extent=1.5)
    out = resample(cloud, AnalysisConfig(r=1.0, grid_n=8, d=2, outer_iters=1, dict_iters=2, pose_iters=5))
    assert len(out) > 0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), tau=st.floats(0.01, 0.5))
def test_consolidation_properties(seed, tau):
    rng = np.random.default_rng(seed)
    pos = rng.uniform(0, 1, size=(60, 3))
    c = cands(pos, np.zeros(60, np.intp), np.zeros((1, 3)), 10.0)
    res = consolidate_trace(c, tau)
    # every candidate is consumed by at most one zone and outputs stay inside the hull box
    members = np.concatenate(res.zones) if res.zones else np.zeros(0, int)
    assert len(members) == len(set(members.tolist()))
    assert np.all(res.points >= pos.min(axis=0) - 1e-12) and np.all(res.points <= pos.max(axis=0) + 1e-12)
    if len(res.points) > 1:
        d = np.linalg.norm(res.points[:, None] - res.points[None], axis=2)
        np.fill_diagonal(d, np.inf)
        assert d.min() > tau


def test_consolidation_with_radius_spanning_many_steps(rng):
    # sparse input: tau_p is many pattern steps wide, zones hold hundreds of candidates
    cloud = plane_cloud(300, rng, extent=6.0)
    out = resample(cloud, AnalysisConfig(r=1.0, grid_n=32, d=2, outer_iters=1, dict_iters=2, pose_iters=3))
    assert len(out) > 0 and np.all(np.isfinite(out.points))
    assert np.abs(out.points[:, 2]).max() < 1e-6
