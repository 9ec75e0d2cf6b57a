import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from ifslab.geometry import (AffineContraction, AmbientBox, IfsSystem,
                             branch_coincidence_set, check_open_set_condition,
                             is_finite_branch)
from ifslab.measure import index_word, word_index


def test_plane_coincidence_piece():
    # branches agreeing on the plane z = 1: a two-dimensional piece
    box = AmbientBox(np.array([[0.0, 1.0]] * 3))
    g1 = AffineContraction(np.diag([0.4, 0.4, 0.4]), np.zeros(3))
    g2 = AffineContraction(np.diag([0.4, 0.4, -0.4]), np.array([0.0, 0.0, 0.8]))
    system = IfsSystem(box, (g1, g2))
    pieces = branch_coincidence_set(system)
    assert len(pieces) == 1
    assert pieces[0].dimension == 2
    assert not is_finite_branch(system)
    for x in pieces[0].sample(50):
        assert abs(x[2] - 1.0) <= 1e-12
        assert np.abs(g1(x) - g2(x)).max() <= 1e-12


def test_three_dim_osc():
    # eight half-scale corner maps tile the cube
    box = AmbientBox(np.array([[0.0, 1.0]] * 3))
    branches = []
    for corner in np.ndindex(2, 2, 2):
        branches.append(AffineContraction(np.diag([0.5] * 3),
                                          0.5 * np.array(corner, dtype=float)))
    system = IfsSystem(box, branches)
    assert check_open_set_condition(system, box.intervals).passed


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 6), st.lists(st.integers(1, 6), min_size=0, max_size=8))
def test_word_index_round_trip(n, letters):
    word = tuple(min(letter, n) for letter in letters)
    assert index_word(word_index(word, n), n, len(word)) == word
