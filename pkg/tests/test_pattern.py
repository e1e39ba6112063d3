import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lpfield.pattern import Pattern, count_for, grid_pattern, make_pattern, random_pattern, spacing_for


@pytest.mark.parametrize("n,m", [(16, 193), (32, 793), (64, 3205)])
def test_grid_counts_match_published(n, m):
    assert grid_pattern(n, 1.0).m == m


def test_grid_step_is_r_over_n():
    p = grid_pattern(16, 1.0)
    assert p.step == pytest.approx(0.0625)
    d = np.diff(np.unique(p.offsets[:, 0]))
    assert np.allclose(d, 0.0625)


def test_count_independent_of_radius():
    assert grid_pattern(32, 0.37).m == grid_pattern(32, 5.0).m == 793


def test_grid_contains_origin_and_is_symmetric():
    off = grid_pattern(16, 2.0).offsets
    assert np.any(np.all(off == 0, axis=1))
    flipped = {tuple(np.round(-o, 12)) for o in off}
    assert flipped == {tuple(np.round(o, 12)) for o in off}


def test_tiny_grid_degenerates_to_origin():
    p = grid_pattern(2, 1.0)
    assert p.m == 1 and np.all(p.offsets == 0)


def test_tau_s_formula():
    p = grid_pattern(16, 1.0)
    assert p.tau_s == pytest.approx(1.0 / math.sqrt(193))
    assert spacing_for(2.0, 100) == pytest.approx(0.2)
    assert count_for(2.0, 0.2) == 100


def test_random_pattern_reproducible_and_in_disk():
    a, b = random_pattern(500, 2.0, 7), random_pattern(500, 2.0, 7)
    assert a == b
    assert np.all(np.linalg.norm(a.offsets, axis=1) <= 1.0)
    assert np.all(a.offsets[:, 2] == 0)
    assert a.step == pytest.approx(0.5 * 2.0 * math.sqrt(math.pi / 500))


def test_random_mean_radius_two_thirds_of_disk(rng):
    # uniform in a disk of radius R has E|u| = 2R/3
    p = random_pattern(200_000, 1.0, rng)
    assert np.linalg.norm(p.offsets, axis=1).mean() == pytest.approx(1.0 / 3.0, rel=5e-3)


def test_invalid_arguments():
    with pytest.raises(ValueError):
        grid_pattern(1, 1.0)
    with pytest.raises(ValueError):
        grid_pattern(16, 0.0)
    with pytest.raises(ValueError):
        random_pattern(0, 1.0)
    with pytest.raises(ValueError):
        make_pattern("hex", 1.0)
    with pytest.raises(ValueError):
        Pattern(np.array([[0.0, 0.0, 0.1]]), 1.0, 0.1)
    with pytest.raises(ValueError):
        Pattern(np.array([[2.0, 0.0, 0.0]]), 1.0, 0.1)


def test_offsets_read_only():
    p = grid_pattern(8, 1.0)
    with pytest.raises(ValueError):
        p.offsets[0, 0] = 1.0


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 48), r=st.floats(0.01, 100.0))
def test_grid_invariants(n, r):
    p = grid_pattern(n, r)
    assert np.all(p.offsets[:, 2] == 0)
    assert np.all(np.linalg.norm(p.offsets, axis=1) <= r)
    assert len(np.unique(p.offsets, axis=0)) == p.m
