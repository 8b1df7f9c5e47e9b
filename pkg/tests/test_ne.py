import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from awelab.ne import ne_encode, partition_bounds


# ---------------------------------------------------------------------------
# partition_bounds
# ---------------------------------------------------------------------------

def test_bounds_exact_division():
    assert partition_bounds(6, 3) == [(0, 2), (2, 4), (4, 6)]


def test_bounds_floor_formula_uneven():
    # enumerate floor(i*T/m) for T=7, m=3
    assert partition_bounds(7, 3) == [(0, 2), (2, 4), (4, 7)]


def test_bounds_fewer_frames_than_partitions():
    # first frames used once each, last frame repeats
    assert partition_bounds(2, 3) == [(0, 1), (1, 2), (1, 2)]
    assert partition_bounds(1, 4) == [(0, 1)] * 4


def test_bounds_total_and_single_partition():
    assert partition_bounds(5, 1) == [(0, 5)]
    with pytest.raises(ValueError):
        partition_bounds(0, 3)
    with pytest.raises(ValueError):
        partition_bounds(3, 0)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 60), st.integers(1, 30))
def test_bounds_cover_frames_in_order(n, m):
    bounds = partition_bounds(n, m)
    assert len(bounds) == m
    assert all(lo < hi for lo, hi in bounds)
    if n >= m:
        # exact tiling of [0, n)
        assert bounds[0][0] == 0 and bounds[-1][1] == n
        assert all(bounds[i][1] == bounds[i + 1][0] for i in range(m - 1))
    covered = set()
    for lo, hi in bounds:
        covered.update(range(lo, hi))
    assert covered == set(range(n)) if n <= m else covered == set(range(n))


# ---------------------------------------------------------------------------
# ne_encode
# ---------------------------------------------------------------------------

def brute_force_ne(frames, m):
    """Average each partition's frames with explicit loops."""
    frames = np.asarray(frames, dtype=np.float64)
    out = []
    for lo, hi in partition_bounds(frames.shape[0], m):
        acc = np.zeros(frames.shape[1])
        for t in range(lo, hi):
            acc += frames[t]
        out.extend(acc / (hi - lo))
    return np.array(out)


def test_constant_sequence_repeats_frame():
    c = np.array([2.0, -1.0, 0.5])
    frames = np.tile(c, (7, 1))
    for m in (1, 3, 9):
        np.testing.assert_allclose(ne_encode(frames, m), np.tile(c, m), rtol=0, atol=1e-15)


def test_dimension_39_by_6_gives_234():
    frames = np.random.default_rng(0).normal(size=(20, 39))
    assert ne_encode(frames, 6).shape == (234,)
    assert ne_encode(frames, 3).shape == (117,)


def test_scalar_example():
    frames = np.array([[1.0], [3.0], [5.0], [7.0]])
    np.testing.assert_allclose(ne_encode(frames, 2), [2.0, 6.0])


@settings(max_examples=200, deadline=None)
@given(
    n=st.integers(1, 50),
    m=st.integers(1, 30),
    dim=st.integers(1, 8),
    seed=st.integers(0, 2**32 - 1),
)
def test_matches_brute_force_everywhere(n, m, dim, seed):
    frames = np.random.default_rng(seed).normal(size=(n, dim))
    got = ne_encode(frames, m)
    assert got.shape == (dim * m,)
    np.testing.assert_allclose(got, brute_force_ne(frames, m), rtol=1e-12, atol=1e-12)


def test_permutation_within_partition_invariance():
    rng = np.random.default_rng(1)
    frames = rng.normal(size=(9, 4))
    base = ne_encode(frames, 3)
    shuffled = frames.copy()
    shuffled[[0, 1, 2]] = frames[[2, 0, 1]]  # permute inside partition 0 only
    np.testing.assert_allclose(ne_encode(shuffled, 3), base, rtol=1e-12)


def test_scale_equivariance():
    rng = np.random.default_rng(2)
    frames = rng.normal(size=(11, 3))
    np.testing.assert_allclose(
        ne_encode(2.5 * frames, 4), 2.5 * ne_encode(frames, 4), rtol=1e-12
    )


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        ne_encode(np.zeros((0, 3)), 2)
    with pytest.raises(ValueError):
        ne_encode(np.zeros(5), 2)
